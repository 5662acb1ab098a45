#include <catch2/catch_amalgamated.hpp>
#include "ebit/eval.hpp"
#include "ebit/trainer.hpp"
#include "ebit/checkpoint.hpp"
