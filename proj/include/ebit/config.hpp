#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ebit/bundle.hpp"
#include "ebit/trainer.hpp"

namespace ebit {

using json = nlohmann::json;

namespace cfg_detail {

// Fail-fast reader: every key must be consumed, unknown keys are errors.
class StrictObject {
public:
    StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
    }

    template <class T>
    T get(const std::string& key, const T& fallback) {
        used_.insert(key);
        if (!j_.contains(key)) return fallback;
        return read<T>(key);
    }

    template <class T>
    T require(const std::string& key) {
        used_.insert(key);
        if (!j_.contains(key)) throw ConfigError("missing required field '" + at(key) + "'");
        return read<T>(key);
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    StrictObject child(const std::string& key) {
        used_.insert(key);
        static const json empty = json::object();
        return StrictObject(j_.contains(key) ? j_.at(key) : empty, at(key));
    }

    const json& raw(const std::string& key) {
        used_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key()))
                throw ConfigError("unknown field '" + at(it.key()) + "'");
    }

private:
    std::string at(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

    template <class T>
    T read(const std::string& key) {
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("field '" + at(key) + "' has the wrong type");
        }
    }

    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

}  // namespace cfg_detail

struct StageSpec {
    int level = 1;
    long long samples = 0;
};

// Everything one run needs; parsed strictly from JSON, defaults filled, and
// echoed back beside the outputs.
struct RunConfig {
    int schema_version = 1;
    std::string dataset_root;
    std::string out_dir;
    uint64_t seed = 0;

    // data
    bool flip = true;
    double holdout_fraction = 0.1;

    // model
    ChannelPlan plan;             // desk default: 3 levels from 16px
    int style_dim = 64;
    int latent_dim = 16;
    int gen_hidden = 64;
    int gen_layers = 2;
    int mid_blocks = 1;

    std::vector<StageSpec> stages;
    TrainConfig train;

    long long log_every = 25;
    long long grid_every = 500;
    long long checkpoint_every = 0;
    int eval_num_styles = 10;

    void validate() const {
        plan.validate();
        train.validate();
        if (dataset_root.empty()) throw ConfigError("dataset_root is required");
        if (out_dir.empty()) throw ConfigError("out_dir is required");
        if (stages.empty()) throw ConfigError("at least one stage is required");
        for (size_t i = 0; i < stages.size(); ++i) {
            if (stages[i].level != static_cast<int>(i) + 1)
                throw ConfigError("stages must cover levels 1..S in order");
            if (stages[i].level > plan.num_levels)
                throw ConfigError("stage level exceeds the channel plan");
            if (stages[i].samples < train.batch_size)
                throw ConfigError("stage sample budget must cover at least one batch");
        }
        // The schedule must stay valid through the last stage.
        mcmc_step_schedule(stages.back().level, train.mcmc_k0, train.mcmc_decrement);
        if (holdout_fraction < 0.0 || holdout_fraction >= 1.0)
            throw ConfigError("data.holdout_fraction must be in [0,1)");
    }

    BundleConfig bundle_config(int num_domains, std::vector<std::string> domain_names) const {
        BundleConfig bc;
        bc.plan = plan;
        bc.num_domains = num_domains;
        bc.style_dim = style_dim;
        bc.latent_dim = latent_dim;
        bc.gen_hidden = gen_hidden;
        bc.gen_layers = gen_layers;
        bc.mid_blocks = mid_blocks;
        bc.domain_names = std::move(domain_names);
        return bc;
    }
};

inline RunConfig parse_run_config(const json& j) {
    RunConfig c;
    cfg_detail::StrictObject root(j, "");
    c.schema_version = root.get<int>("schema_version", 1);
    if (c.schema_version != 1)
        throw ConfigError("unsupported schema_version " + std::to_string(c.schema_version));
    c.dataset_root = root.get<std::string>("dataset_root", "");
    c.out_dir = root.get<std::string>("out_dir", "");
    c.seed = root.get<uint64_t>("seed", 0);

    {
        auto data = root.child("data");
        c.flip = data.get<bool>("flip", true);
        c.holdout_fraction = data.get<double>("holdout_fraction", 0.1);
        data.finish();
    }
    {
        auto model = root.child("model");
        c.plan.base_resolution = model.get<int>("base_resolution", 16);
        c.plan.num_levels = model.get<int>("num_levels", 3);
        c.plan.top_width = model.get<int>("top_width", 32);
        c.plan.max_width = model.get<int>("max_width", 256);
        c.plan.stem_min_res = model.get<int>("stem_min_res", 4);
        c.style_dim = model.get<int>("style_dim", 64);
        c.latent_dim = model.get<int>("latent_dim", 16);
        c.gen_hidden = model.get<int>("gen_hidden", 64);
        c.gen_layers = model.get<int>("gen_layers", 2);
        c.mid_blocks = model.get<int>("mid_blocks", 1);
        model.finish();
    }
    if (root.has("stages")) {
        const json& stages = root.raw("stages");
        if (!stages.is_array()) throw ConfigError("stages must be an array");
        for (size_t i = 0; i < stages.size(); ++i) {
            cfg_detail::StrictObject st(stages[i], "stages[" + std::to_string(i) + "]");
            StageSpec s;
            s.level = st.get<int>("level", static_cast<int>(i) + 1);
            s.samples = st.require<long long>("samples");
            st.finish();
            c.stages.push_back(s);
        }
    }
    c.train.batch_size = root.get<int>("batch_size", 8);
    {
        auto lj = root.child("langevin");
        c.train.langevin.step_size = lj.get<double>("step_size", 1e-3);
        c.train.langevin.noise_scale = lj.get<double>("noise_scale", 1.0);
        c.train.langevin.clamp = lj.get<bool>("clamp", true);
        c.train.mcmc_k0 = lj.get<int>("k0", 16);
        c.train.mcmc_decrement = lj.get<int>("decrement", 4);
        lj.finish();
    }
    {
        auto wj = root.child("weights");
        c.train.weights.energy = wj.get<double>("energy", 1.0);
        c.train.weights.diverse = wj.get<double>("diverse", 1.0);
        c.train.weights.cycle = wj.get<double>("cycle", 1.0);
        c.train.weights.style = wj.get<double>("style", 1.0);
        c.train.weights.mode = wj.get<double>("mode", 1.0);
        wj.finish();
    }
    {
        auto oj = root.child("optimizer");
        c.train.opt_descriptor.lr = oj.get<double>("lr_descriptor", 1e-4);
        c.train.opt_translator.lr = oj.get<double>("lr_translator", 1e-4);
        c.train.opt_encoder.lr = oj.get<double>("lr_encoder", 1e-4);
        c.train.opt_style_gen.lr = oj.get<double>("lr_style_gen", 1e-5);
        const double b1 = oj.get<double>("beta1", 0.5);
        const double b2 = oj.get<double>("beta2", 0.999);
        for (AdamConfig* a : {&c.train.opt_descriptor, &c.train.opt_translator,
                              &c.train.opt_encoder, &c.train.opt_style_gen}) {
            a->beta1 = b1;
            a->beta2 = b2;
        }
        oj.finish();
    }
    c.train.flip = c.flip;
    c.train.seed = c.seed;
    c.log_every = root.get<long long>("log_every", 25);
    c.grid_every = root.get<long long>("grid_every", 500);
    c.checkpoint_every = root.get<long long>("checkpoint_every", 0);
    {
        auto ej = root.child("eval");
        c.eval_num_styles = ej.get<int>("num_styles", 10);
        ej.finish();
    }
    root.finish();
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config parse failure in " + path + ": " + e.what());
    }
    return parse_run_config(j);
}

// Fully resolved echo, defaults included.
inline json resolved_config_json(const RunConfig& c) {
    json j;
    j["schema_version"] = c.schema_version;
    j["dataset_root"] = c.dataset_root;
    j["out_dir"] = c.out_dir;
    j["seed"] = c.seed;
    j["data"] = {{"flip", c.flip}, {"holdout_fraction", c.holdout_fraction}};
    j["model"] = {{"base_resolution", c.plan.base_resolution},
                  {"num_levels", c.plan.num_levels},
                  {"top_width", c.plan.top_width},
                  {"max_width", c.plan.max_width},
                  {"stem_min_res", c.plan.stem_min_res},
                  {"style_dim", c.style_dim},
                  {"latent_dim", c.latent_dim},
                  {"gen_hidden", c.gen_hidden},
                  {"gen_layers", c.gen_layers},
                  {"mid_blocks", c.mid_blocks}};
    j["stages"] = json::array();
    for (const auto& s : c.stages) j["stages"].push_back({{"level", s.level}, {"samples", s.samples}});
    j["batch_size"] = c.train.batch_size;
    j["langevin"] = {{"step_size", c.train.langevin.step_size},
                     {"noise_scale", c.train.langevin.noise_scale},
                     {"clamp", c.train.langevin.clamp},
                     {"k0", c.train.mcmc_k0},
                     {"decrement", c.train.mcmc_decrement}};
    j["weights"] = {{"energy", c.train.weights.energy},
                    {"diverse", c.train.weights.diverse},
                    {"cycle", c.train.weights.cycle},
                    {"style", c.train.weights.style},
                    {"mode", c.train.weights.mode}};
    j["optimizer"] = {{"lr_descriptor", c.train.opt_descriptor.lr},
                      {"lr_translator", c.train.opt_translator.lr},
                      {"lr_encoder", c.train.opt_encoder.lr},
                      {"lr_style_gen", c.train.opt_style_gen.lr},
                      {"beta1", c.train.opt_descriptor.beta1},
                      {"beta2", c.train.opt_descriptor.beta2}};
    j["log_every"] = c.log_every;
    j["grid_every"] = c.grid_every;
    j["checkpoint_every"] = c.checkpoint_every;
    j["eval"] = {{"num_styles", c.eval_num_styles}};
    return j;
}

}  // namespace ebit
