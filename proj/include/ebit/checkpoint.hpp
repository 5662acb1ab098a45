#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "ebit/config.hpp"

namespace ebit {

// Single-file checkpoint: JSON metadata + named raw arrays + checksum.
// Byte-stable for identical contents, so save->load->save is bit-identical.

constexpr uint32_t kCheckpointVersion = 1;
constexpr char kCheckpointMagic[8] = {'E', 'B', 'I', 'T', 'C', 'K', 'P', 'T'};

inline uint64_t fnv1a(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace ckpt_detail {

inline void append_bytes(std::string& buf, const void* p, size_t n) {
    buf.append(static_cast<const char*>(p), n);
}
template <class T>
void append_pod(std::string& buf, T v) {
    append_bytes(buf, &v, sizeof(T));
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    explicit Reader(const std::string& b) : buf(b) {}
    void read_bytes(void* p, size_t n) {
        if (pos + n > buf.size()) throw CheckpointError("truncated checkpoint");
        std::memcpy(p, buf.data() + pos, n);
        pos += n;
    }
    template <class T>
    T read_pod() {
        T v;
        read_bytes(&v, sizeof(T));
        return v;
    }
    std::string read_string(size_t n) {
        std::string s(n, '\0');
        read_bytes(s.data(), n);
        return s;
    }
};

}  // namespace ckpt_detail

template <class T>
struct CheckpointFile {
    json meta;
    std::vector<std::pair<std::string, Tensor<T>>> arrays;

    const Tensor<T>* find(const std::string& name) const {
        for (const auto& [n, t] : arrays)
            if (n == name) return &t;
        return nullptr;
    }
};

template <class T>
void write_checkpoint_file(const std::string& path, const CheckpointFile<T>& ck) {
    using namespace ckpt_detail;
    std::string payload;
    const std::string meta = ck.meta.dump();
    append_pod<uint64_t>(payload, meta.size());
    payload += meta;
    append_pod<uint32_t>(payload, static_cast<uint32_t>(ck.arrays.size()));
    for (const auto& [name, t] : ck.arrays) {
        append_pod<uint16_t>(payload, static_cast<uint16_t>(name.size()));
        payload += name;
        append_pod<uint8_t>(payload, static_cast<uint8_t>(sizeof(T)));
        append_pod<uint8_t>(payload, static_cast<uint8_t>(t.shape().size()));
        for (int d : t.shape()) append_pod<uint32_t>(payload, static_cast<uint32_t>(d));
        append_pod<uint64_t>(payload, static_cast<uint64_t>(t.size()) * sizeof(T));
        append_bytes(payload, t.data(), static_cast<size_t>(t.size()) * sizeof(T));
    }

    std::ofstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot write " + path);
    f.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    uint32_t version = kCheckpointVersion;
    f.write(reinterpret_cast<const char*>(&version), sizeof(version));
    uint64_t len = payload.size();
    f.write(reinterpret_cast<const char*>(&len), sizeof(len));
    f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    uint64_t sum = fnv1a(payload.data(), payload.size());
    f.write(reinterpret_cast<const char*>(&sum), sizeof(sum));
    if (!f) throw CheckpointError("write failure on " + path);
}

template <class T>
CheckpointFile<T> read_checkpoint_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open " + path);
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw CheckpointError(path + " is not a checkpoint file");
    uint32_t version = 0;
    f.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint format version mismatch: file has " +
                              std::to_string(version) + ", this build reads " +
                              std::to_string(kCheckpointVersion));
    uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string payload(len, '\0');
    f.read(payload.data(), static_cast<std::streamsize>(len));
    uint64_t stored = 0;
    f.read(reinterpret_cast<char*>(&stored), sizeof(stored));
    if (!f) throw CheckpointError("truncated checkpoint " + path);
    if (fnv1a(payload.data(), payload.size()) != stored)
        throw CheckpointError("checksum mismatch in " + path);

    ckpt_detail::Reader r(payload);
    CheckpointFile<T> ck;
    const auto meta_len = r.read_pod<uint64_t>();
    const std::string meta_str = r.read_string(meta_len);
    try {
        ck.meta = json::parse(meta_str);
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("bad checkpoint metadata: ") + e.what());
    }
    const auto count = r.read_pod<uint32_t>();
    for (uint32_t i = 0; i < count; ++i) {
        const auto name_len = r.read_pod<uint16_t>();
        std::string name = r.read_string(name_len);
        const auto dtype = r.read_pod<uint8_t>();
        if (dtype != sizeof(T))
            throw CheckpointError("array '" + name + "' has element size " +
                                  std::to_string(dtype) + ", expected " +
                                  std::to_string(sizeof(T)));
        const auto ndim = r.read_pod<uint8_t>();
        Shape shape(ndim);
        for (auto& d : shape) d = static_cast<int>(r.read_pod<uint32_t>());
        const auto bytes = r.read_pod<uint64_t>();
        Tensor<T> t(shape);
        if (bytes != static_cast<uint64_t>(t.size()) * sizeof(T))
            throw CheckpointError("array '" + name + "' size mismatch");
        r.read_bytes(t.data(), bytes);
        ck.arrays.emplace_back(std::move(name), std::move(t));
    }
    return ck;
}

// ---------------------------------------------------------------------------
// Model / trainer snapshots
// ---------------------------------------------------------------------------

template <class T>
void append_adam_state(CheckpointFile<T>& ck, const std::string& group, Adam<T>& opt,
                       const ParamList<T>& params, json& adam_t) {
    for (const auto& [name, var] : params.items()) {
        auto it = opt.state().find(name);
        if (it == opt.state().end()) continue;
        ck.arrays.emplace_back("adam." + group + ".m." + name, it->second.m);
        ck.arrays.emplace_back("adam." + group + ".v." + name, it->second.v);
        adam_t[group][name] = it->second.t;
    }
}

template <class T>
void restore_adam_state(const CheckpointFile<T>& ck, const std::string& group, Adam<T>& opt,
                        const ParamList<T>& params) {
    const json& adam_t = ck.meta.at("adam_t");
    for (const auto& [name, var] : params.items()) {
        const Tensor<T>* m = ck.find("adam." + group + ".m." + name);
        const Tensor<T>* v = ck.find("adam." + group + ".v." + name);
        if (!m || !v) continue;
        auto& st = opt.state()[name];
        st.m = *m;
        st.v = *v;
        st.t = adam_t.at(group).at(name).template get<int64_t>();
    }
}

template <class T>
CheckpointFile<T> make_checkpoint(const ModelBundle<T>& bundle, CooperativeTrainer<T>& trainer,
                                  const json& resolved_config) {
    CheckpointFile<T> ck;
    const BundleConfig& bc = bundle.config();
    ck.meta["format"] = "ebit-checkpoint";
    ck.meta["version"] = kCheckpointVersion;
    ck.meta["config"] = resolved_config;
    const std::string cfg_str = resolved_config.dump();
    ck.meta["config_hash"] = fnv1a(cfg_str.data(), cfg_str.size());
    ck.meta["bundle"] = {{"num_domains", bc.num_domains},
                         {"style_dim", bc.style_dim},
                         {"latent_dim", bc.latent_dim},
                         {"gen_hidden", bc.gen_hidden},
                         {"gen_layers", bc.gen_layers},
                         {"mid_blocks", bc.mid_blocks},
                         {"domain_names", bc.domain_names}};
    ck.meta["plan"] = {{"num_levels", bc.plan.num_levels},
                       {"base_resolution", bc.plan.base_resolution},
                       {"top_width", bc.plan.top_width},
                       {"max_width", bc.plan.max_width},
                       {"stem_min_res", bc.plan.stem_min_res}};
    ck.meta["progressive"] = {{"level", bundle.state.level},
                              {"omega", bundle.state.omega},
                              {"samples_seen", bundle.state.samples_seen},
                              {"stage_budget", bundle.state.stage_budget},
                              {"mcmc_steps", bundle.state.mcmc_steps}};
    ck.meta["rng"] = trainer.rng().save_state();
    ck.meta["global_step"] = trainer.global_step();

    for (const auto& [name, var] : bundle.params().items())
        ck.arrays.emplace_back("param." + name, var.val());

    json adam_t = json::object();
    append_adam_state(ck, "desc", trainer.opt_descriptor(), bundle.descriptor.params(), adam_t);
    append_adam_state(ck, "tr", trainer.opt_translator(), bundle.translator.params(), adam_t);
    append_adam_state(ck, "enc", trainer.opt_encoder(), bundle.encoder.params(), adam_t);
    append_adam_state(ck, "gen", trainer.opt_style_gen(), bundle.style_gen.params(), adam_t);
    ck.meta["adam_t"] = adam_t;
    return ck;
}

// Rebuild a bundle at the checkpoint's level and overwrite every parameter
// bit-exactly. Structural names must match one-to-one.
template <class T>
ModelBundle<T> bundle_from_checkpoint(const CheckpointFile<T>& ck) {
    const json& bj = ck.meta.at("bundle");
    const json& pj = ck.meta.at("plan");
    BundleConfig bc;
    bc.plan.num_levels = pj.at("num_levels").template get<int>();
    bc.plan.base_resolution = pj.at("base_resolution").template get<int>();
    bc.plan.top_width = pj.at("top_width").template get<int>();
    bc.plan.max_width = pj.at("max_width").template get<int>();
    bc.plan.stem_min_res = pj.at("stem_min_res").template get<int>();
    bc.num_domains = bj.at("num_domains").template get<int>();
    bc.style_dim = bj.at("style_dim").template get<int>();
    bc.latent_dim = bj.at("latent_dim").template get<int>();
    bc.gen_hidden = bj.at("gen_hidden").template get<int>();
    bc.gen_layers = bj.at("gen_layers").template get<int>();
    bc.mid_blocks = bj.at("mid_blocks").template get<int>();
    bc.domain_names = bj.at("domain_names").template get<std::vector<std::string>>();

    Rng scratch(0);
    ModelBundle<T> bundle(bc, scratch);
    const json& prog = ck.meta.at("progressive");
    const int level = prog.at("level").template get<int>();
    for (int l = bundle.state.level; l < level; ++l) bundle.expand(scratch);
    bundle.state.level = level;
    bundle.state.omega = prog.at("omega").template get<double>();
    bundle.state.samples_seen = prog.at("samples_seen").template get<long long>();
    bundle.state.stage_budget = prog.at("stage_budget").template get<long long>();
    bundle.state.mcmc_steps = prog.at("mcmc_steps").template get<int>();

    ParamList<T> params = bundle.params();
    size_t restored = 0;
    for (auto& [name, var] : params.items()) {
        const Tensor<T>* stored = ck.find("param." + name);
        if (!stored) throw CheckpointError("checkpoint is missing parameter '" + name + "'");
        if (stored->shape() != var.shape())
            throw CheckpointError("parameter '" + name + "' shape mismatch");
        var.mutable_val() = *stored;
        ++restored;
    }
    size_t stored_params = 0;
    for (const auto& [name, t] : ck.arrays)
        if (name.rfind("param.", 0) == 0) ++stored_params;
    if (stored_params != restored)
        throw CheckpointError("checkpoint holds " + std::to_string(stored_params) +
                              " parameters, model expects " + std::to_string(restored));
    return bundle;
}

template <class T>
void restore_trainer(const CheckpointFile<T>& ck, CooperativeTrainer<T>& trainer,
                     const ModelBundle<T>& bundle) {
    trainer.rng().load_state(ck.meta.at("rng").template get<std::string>());
    trainer.set_global_step(ck.meta.at("global_step").template get<long long>());
    restore_adam_state(ck, "desc", trainer.opt_descriptor(), bundle.descriptor.params());
    restore_adam_state(ck, "tr", trainer.opt_translator(), bundle.translator.params());
    restore_adam_state(ck, "enc", trainer.opt_encoder(), bundle.encoder.params());
    restore_adam_state(ck, "gen", trainer.opt_style_gen(), bundle.style_gen.params());
}

}  // namespace ebit
