#pragma once

#include <optional>
#include <string>
#include <vector>

#include "meansq/channel.hpp"
#include "meansq/serialize.hpp"
#include "meansq/synthesis.hpp"

namespace meansq {

// Declarative problem description parsed from a config file.
struct PlantConfig {
    enum class Kind { example_family, state_space };
    Kind kind = Kind::example_family;
    ExampleFamily example;
    StateSpaceModel ss;                             // state-space plants
    std::vector<int> delays;                        // ss is then the delay-free part
    std::vector<double> nmp_zeros;                  // ss is then the relative-degree-one base
    std::vector<StateSpaceModel> diagonal_inners;   // for the sufficient test
};

struct ProblemConfig {
    PlantConfig plant;
    std::vector<DelayChannelSpec> channel_specs;
    std::optional<StateSpaceModel> controller;
    Vector noise;  // diagonal of Sigma_v, one entry per channel
};

ProblemConfig config_from_json(const Json& j);
ProblemConfig load_config(const std::string& path);

// Full plant transfer matrix for analysis/simulation.
StateSpaceModel config_plant(const ProblemConfig& cfg);
// Plant family for stabilizability/synthesis; `method` is one of
// auto|thm2|thm3 and resolves against the configured family.
PlantFamily config_family(const ProblemConfig& cfg, const std::string& method);

std::vector<ChannelStatistics> config_channels(const ProblemConfig& cfg);

// Entry point used by main() and the integration tests.
// Exit codes: 0 success, 2 schema error, 3 scope error, 4 numerical failure.
int run_cli(const std::vector<std::string>& args);

}  // namespace meansq
