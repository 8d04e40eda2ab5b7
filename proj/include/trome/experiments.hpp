#pragma once

// Experiment suites behind the CLI: analytic sweeps, Monte-Carlo summaries,
// per-node energy budgets, overhead curves and the cross-validation suite.
// Every writer sorts rows by key before output.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "trome/scenario.hpp"

namespace trome::experiments {

using markov::Protocol;
using scenario::Scenario;

struct AnalyzeRow {
    Protocol protocol = Protocol::TRome;
    int m = 2;
    double p = 1;
    double q = 1;
    std::size_t n_packets = 1;
    std::size_t payload_bytes = 100;
    double expected_time_us = 0;
    double expected_energy_mJ = 0;
    double ratio_vs_naive = 1;  // time ratio against naive at the same (m, p, q, n, payload)
};

std::vector<AnalyzeRow> analyze(const Scenario& s);
void write_analyze_csv(std::ostream& os, std::vector<AnalyzeRow> rows);

struct SimulateRow {
    Protocol protocol = Protocol::TRome;
    int m = 2;
    double p = 1;
    double q = 1;
    std::size_t n_packets = 1;
    std::size_t payload_bytes = 100;
    sim::LossMode loss_mode = sim::LossMode::PerMetastep;
    std::size_t seeds = 0;
    std::size_t complete_runs = 0;  // runs that delivered every packet
    double mean_delivery_us = 0;
    double stderr_us = 0;
    double analytic_us = 0;
    double rel_diff = 0;
    std::optional<double> mean_energy_mJ;  // per-packet mode only
    std::size_t collisions = 0;
    std::size_t permanent_failures = 0;
};

// Runs every grid point over seeds seed..seed+seeds-1. With trace_dir set,
// writes one JSON-lines trace per (point, seed).
std::vector<SimulateRow> simulate(const Scenario& s,
                                  const std::optional<std::filesystem::path>& trace_dir = std::nullopt);
void write_simulate_csv(std::ostream& os, std::vector<SimulateRow> rows);

struct BudgetRow {
    Protocol protocol = Protocol::TRome;
    int m = 2;
    std::size_t n_packets = 1;
    std::size_t payload_bytes = 100;
    int node_id = 0;
    std::string role;  // source, relay1.., sink
    energy::CategoryTotals totals;
};

// Per-node energy breakdown of one per-packet run per grid point (first seed).
std::vector<BudgetRow> budget(const Scenario& s);
void write_budget_csv(std::ostream& os, std::vector<BudgetRow> rows);

struct OverheadRow {
    Protocol protocol = Protocol::TRome;
    int m = 2;
    std::size_t n_packets = 1;
    std::size_t payload_bytes = 100;
    std::uint64_t control_bytes = 0;
    std::uint64_t data_bytes = 0;
    double o_cd = 0;
};

struct BreakEvenRow {
    Protocol protocol = Protocol::TRome;
    int m = 2;
    std::size_t n_packets = 1;
    std::optional<std::size_t> payload_bytes;  // empty when no payload reaches O_CD <= 1
};

OverheadRow overhead_point(const Scenario& s, Protocol protocol, int m, std::size_t n, std::size_t payload);
std::vector<OverheadRow> overhead(const Scenario& s);
// Smallest payload with O_CD <= 1 for a lossless run of n packets.
BreakEvenRow break_even(const Scenario& s, Protocol protocol, int m, std::size_t n);
std::vector<BreakEvenRow> break_evens(const Scenario& s);
void write_overhead_csv(std::ostream& os, std::vector<OverheadRow> rows);
void write_break_even_csv(std::ostream& os, std::vector<BreakEvenRow> rows);

// Protocol-level safety properties of one per-packet run.
struct SafetyReport {
    bool exactly_once = true;
    bool ttl_bound = true;
    bool asleep_at_end = true;
    bool no_collision = true;
    std::string detail;
    bool ok() const { return exactly_once && ttl_bound && asleep_at_end && no_collision; }
};

SafetyReport check_safety(const sim::SimConfig& config, const sim::SimTrace& trace);

struct Check {
    std::string name;
    bool passed = false;
    std::string detail;
};

// Cross-validation suite: solver against fixed-point iteration, lossless
// simulation against the success path, Monte-Carlo against the solver,
// energy and overhead regressions, randomized safety runs.
std::vector<Check> verify(const Scenario& s);
void write_checks_csv(std::ostream& os, const std::vector<Check>& checks);

}  // namespace trome::experiments
