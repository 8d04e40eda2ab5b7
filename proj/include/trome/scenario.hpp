#pragma once

// Scenario files: `key = value` lines, `#` comments. Keys that take a list
// (protocol, nodes, p, q, packets, payload) accept comma-separated values and
// span a sweep grid.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trome/airtime_energy.hpp"
#include "trome/channel_sim.hpp"
#include "trome/markov_analyzer.hpp"
#include "trome/protocol_engine.hpp"

namespace trome::scenario {

using engine::ConfigError;
using markov::Protocol;

struct Scenario {
    std::string name = "adhoc";
    std::vector<Protocol> protocols{Protocol::TRome};
    std::vector<int> nodes{4};
    std::vector<double> p{1.0};
    std::vector<double> q{1.0};
    std::vector<std::size_t> packets{5};
    std::vector<std::size_t> payloads{100};
    std::uint64_t seed = 1;
    std::size_t seeds = 1;
    sim::LossMode loss_mode = sim::LossMode::PerMetastep;
    engine::ProtocolParams params;
    energy::EnergyModel energy;
    int trome_wake_exponent = 5;
    int ctp_relay_exponent = 2;
    std::optional<markov::CostConstants> costs;
    std::string output_dir;
    bool write_traces = true;

    void validate() const;  // throws ConfigError

    // One simulation config per grid point, with the given seed.
    sim::SimConfig sim_config(Protocol protocol, int m, double p, double q, std::size_t packets,
                              std::size_t payload, std::uint64_t seed) const;
    markov::ModelParams model_params(int m, double p, double q) const;
    markov::CostModel cost_model(Protocol protocol, std::size_t payload) const;
};

// Applies one setting; unknown keys and malformed values throw ConfigError.
void set(Scenario& s, std::string_view key, std::string_view value);

// Applies every line of a scenario file on top of `s` without validating.
void apply(Scenario& s, std::istream& in, std::string_view origin = "<input>");
void apply_file(Scenario& s, const std::filesystem::path& path);

Scenario parse(std::istream& in, std::string_view origin = "<input>");
Scenario load(const std::filesystem::path& path);

// Output directory: the scenario's own, else $TROME_OUT_DIR, else ".".
std::filesystem::path output_dir(const Scenario& s);

}  // namespace trome::scenario
