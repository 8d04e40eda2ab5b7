// trome: experiment harness for the wake-up-radio routing protocols.
//
//   trome <simulate|analyze|budget|overhead|verify> [flags] [--config FILE]
//
// Keys in --config override flags. Output goes to --out, else $TROME_OUT_DIR,
// else the working directory. Exit codes: 0 ok, 1 config error,
// 2 verification failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "trome/experiments.hpp"
#include "trome/scenario.hpp"

namespace fs = std::filesystem;
using namespace trome;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kVerifyFailed = 2;

// flag name -> scenario key
const std::vector<std::pair<std::string, std::string>> kFlags = {
    {"protocol", "protocol"},   {"nodes", "nodes"},         {"p", "p"},
    {"q", "q"},                 {"packets", "packets"},     {"payload", "payload"},
    {"seed", "seed"},           {"seeds", "seeds"},         {"loss-mode", "loss_mode"},
    {"ttl", "ttl"},             {"retry-cap", "retry_cap"}, {"name", "name"},
    {"out", "output_dir"},      {"traces", "write_traces"},
};

struct Command {
    CLI::App* app = nullptr;
    std::map<std::string, std::string> flags;
    std::string config;
};

void add_common(Command& c) {
    for (const auto& [flag, key] : kFlags)
        c.app->add_option("--" + flag, c.flags[flag], fmt::format("scenario key '{}' (lists: a,b,c or lo..hi)", key));
    c.app->add_option("--config", c.config, "scenario file; its keys override flags")->check(CLI::ExistingFile);
}

scenario::Scenario build(const Command& c) {
    scenario::Scenario s;
    for (const auto& [flag, key] : kFlags)
        if (const auto& v = c.flags.at(flag); !v.empty()) scenario::set(s, key, v);
    if (!c.config.empty()) scenario::apply_file(s, c.config);
    s.validate();
    return s;
}

fs::path output(const scenario::Scenario& s, const std::string& what) {
    const auto dir = scenario::output_dir(s);
    fs::create_directories(dir);
    return dir / fmt::format("{}_{}.csv", s.name, what);
}

template <typename Writer>
void emit(const fs::path& path, Writer write) {
    std::ostringstream text;
    write(text);
    std::ofstream out(path);
    if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    out << text.str();
    std::cout << text.str();
    std::cerr << "wrote " << path.string() << '\n';
}

int run_simulate(const scenario::Scenario& s) {
    std::optional<fs::path> traces;
    if (s.write_traces) traces = scenario::output_dir(s) / fmt::format("{}_traces", s.name);
    auto rows = experiments::simulate(s, traces);
    emit(output(s, "simulate"), [&](std::ostream& os) { experiments::write_simulate_csv(os, rows); });
    return kOk;
}

int run_analyze(const scenario::Scenario& s) {
    auto rows = experiments::analyze(s);
    emit(output(s, "analyze"), [&](std::ostream& os) { experiments::write_analyze_csv(os, rows); });
    return kOk;
}

int run_budget(const scenario::Scenario& s) {
    auto rows = experiments::budget(s);
    emit(output(s, "budget"), [&](std::ostream& os) { experiments::write_budget_csv(os, rows); });
    return kOk;
}

int run_overhead(const scenario::Scenario& s, bool with_break_even) {
    auto rows = experiments::overhead(s);
    emit(output(s, "overhead"), [&](std::ostream& os) { experiments::write_overhead_csv(os, rows); });
    if (with_break_even) {
        auto be = experiments::break_evens(s);
        emit(output(s, "break_even"), [&](std::ostream& os) { experiments::write_break_even_csv(os, be); });
    }
    return kOk;
}

int run_verify(const scenario::Scenario& s) {
    const auto checks = experiments::verify(s);
    emit(output(s, "verify"), [&](std::ostream& os) { experiments::write_checks_csv(os, checks); });
    bool ok = true;
    for (const auto& c : checks) {
        std::cerr << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
        ok = ok && c.passed;
    }
    return ok ? kOk : kVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Wake-up radio multi-hop routing: simulation and analysis"};
    app.require_subcommand(1);

    Command simulate{app.add_subcommand("simulate", "Monte-Carlo runs; summary CSV plus one trace per run")};
    Command analyze{app.add_subcommand("analyze", "analytic expectations from the meta-step chain")};
    Command budget{app.add_subcommand("budget", "per-node energy breakdown of a per-packet run")};
    Command overhead{app.add_subcommand("overhead", "control/data overhead over payload and packet sweeps")};
    Command verify{app.add_subcommand("verify", "cross-validation suite; exit 2 on failure")};
    bool break_even = true;
    for (auto* c : {&simulate, &analyze, &budget, &overhead, &verify}) add_common(*c);
    overhead.app->add_flag("!--no-break-even", break_even, "skip the break-even payload search");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*simulate.app) return run_simulate(build(simulate));
        if (*analyze.app) return run_analyze(build(analyze));
        if (*budget.app) return run_budget(build(budget));
        if (*overhead.app) return run_overhead(build(overhead), break_even);
        if (*verify.app) return run_verify(build(verify));
    } catch (const engine::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    }
    return kOk;
}
