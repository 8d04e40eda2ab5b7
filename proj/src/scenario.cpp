#include "trome/scenario.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>

#include <fmt/format.h>

namespace trome::scenario {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s) {
    std::vector<std::string_view> out;
    while (true) {
        const auto comma = s.find(',');
        out.push_back(trim(s.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        s.remove_prefix(comma + 1);
    }
    return out;
}

template <typename T>
T number(std::string_view key, std::string_view v) {
    T out{};
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || ptr != end || v.empty())
        throw ConfigError(fmt::format("{}: '{}' is not a valid number", key, v));
    return out;
}

// from_chars for double is missing in older standard libraries.
template <>
double number<double>(std::string_view key, std::string_view v) {
    const std::string text(v);
    char* end = nullptr;
    const double out = std::strtod(text.c_str(), &end);
    if (text.empty() || end != text.c_str() + text.size())
        throw ConfigError(fmt::format("{}: '{}' is not a valid number", key, v));
    return out;
}

template <typename T>
std::vector<T> list(std::string_view key, std::string_view v) {
    std::vector<T> out;
    for (auto item : split(v)) {
        // a..b expands integer ranges
        if (const auto dots = item.find(".."); dots != std::string_view::npos && std::is_integral_v<T>) {
            const auto lo = number<T>(key, trim(item.substr(0, dots)));
            const auto hi = number<T>(key, trim(item.substr(dots + 2)));
            if (hi < lo) throw ConfigError(fmt::format("{}: empty range '{}'", key, item));
            for (T x = lo; x <= hi; ++x) out.push_back(x);
        } else {
            out.push_back(number<T>(key, item));
        }
    }
    return out;
}

bool boolean(std::string_view key, std::string_view v) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, v));
}

markov::CostConstants& costs_of(Scenario& s) {
    if (!s.costs) s.costs = markov::default_costs(Protocol::TRome, 100, s.params.timing, s.params.radio).time_us;
    return *s.costs;
}

using Setter = std::function<void(Scenario&, std::string_view, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
    static const std::map<std::string, Setter, std::less<>> table = {
        {"name", [](Scenario& s, auto, auto v) { s.name = std::string(v); }},
        {"protocol",
         [](Scenario& s, auto k, auto v) {
             s.protocols.clear();
             for (auto item : split(v)) {
                 try {
                     s.protocols.push_back(markov::protocol_from_string(item));
                 } catch (const std::invalid_argument& e) {
                     throw ConfigError(fmt::format("{}: {}", k, e.what()));
                 }
             }
         }},
        {"nodes", [](Scenario& s, auto k, auto v) { s.nodes = list<int>(k, v); }},
        {"p", [](Scenario& s, auto k, auto v) { s.p = list<double>(k, v); }},
        {"q", [](Scenario& s, auto k, auto v) { s.q = list<double>(k, v); }},
        {"packets", [](Scenario& s, auto k, auto v) { s.packets = list<std::size_t>(k, v); }},
        {"payload", [](Scenario& s, auto k, auto v) { s.payloads = list<std::size_t>(k, v); }},
        {"seed", [](Scenario& s, auto k, auto v) { s.seed = number<std::uint64_t>(k, v); }},
        {"seeds", [](Scenario& s, auto k, auto v) { s.seeds = number<std::size_t>(k, v); }},
        {"loss_mode",
         [](Scenario& s, auto, auto v) { s.loss_mode = sim::loss_mode_from_string(std::string(v)); }},
        {"ttl", [](Scenario& s, auto k, auto v) { s.params.ttl = number<int>(k, v); }},
        {"retry_cap", [](Scenario& s, auto k, auto v) { s.params.retry_cap = number<int>(k, v); }},
        {"backoff_base_us", [](Scenario& s, auto k, auto v) { s.params.backoff_base_us = number<energy::Micros>(k, v); }},
        {"backoff_step_us", [](Scenario& s, auto k, auto v) { s.params.backoff_step_us = number<energy::Micros>(k, v); }},
        {"wake_latency_us",
         [](Scenario& s, auto k, auto v) { s.params.timing.wake_latency_us = number<energy::Micros>(k, v); }},
        {"turnaround_us", [](Scenario& s, auto k, auto v) { s.params.timing.turnaround_us = number<energy::Micros>(k, v); }},
        {"slot_handling_us",
         [](Scenario& s, auto k, auto v) { s.params.timing.slot_handling_us = number<energy::Micros>(k, v); }},
        {"guard_us", [](Scenario& s, auto k, auto v) { s.params.timing.guard_us = number<energy::Micros>(k, v); }},
        {"carrier_burst", [](Scenario& s, auto k, auto v) { s.params.carrier_burst_bytes = number<int>(k, v); }},
        {"preamble", [](Scenario& s, auto k, auto v) { s.params.preamble_bytes = number<int>(k, v); }},
        {"voltage", [](Scenario& s, auto k, auto v) { s.energy.voltage = number<double>(k, v); }},
        {"i_tx_wuc_mA", [](Scenario& s, auto k, auto v) { s.energy.i_tx_wuc_mA = number<double>(k, v); }},
        {"i_tx_data_mA", [](Scenario& s, auto k, auto v) { s.energy.i_tx_data_mA = number<double>(k, v); }},
        {"i_rx_mA", [](Scenario& s, auto k, auto v) { s.energy.i_rx_mA = number<double>(k, v); }},
        {"i_cal_mA", [](Scenario& s, auto k, auto v) { s.energy.i_cal_mA = number<double>(k, v); }},
        {"i_mcu_run_mA", [](Scenario& s, auto k, auto v) { s.energy.i_mcu_run_mA = number<double>(k, v); }},
        {"i_sleep_uA", [](Scenario& s, auto k, auto v) { s.energy.i_sleep_uA = number<double>(k, v); }},
        {"i_wurx_uA", [](Scenario& s, auto k, auto v) { s.energy.i_wurx_uA = number<double>(k, v); }},
        {"derating", [](Scenario& s, auto k, auto v) { s.energy.manchester_tx_derating = number<double>(k, v); }},
        {"trome_wake_exponent", [](Scenario& s, auto k, auto v) { s.trome_wake_exponent = number<int>(k, v); }},
        {"ctp_relay_exponent", [](Scenario& s, auto k, auto v) { s.ctp_relay_exponent = number<int>(k, v); }},
        {"cost.w1", [](Scenario& s, auto k, auto v) { costs_of(s).w1 = number<double>(k, v); }},
        {"cost.w2", [](Scenario& s, auto k, auto v) { costs_of(s).w2 = number<double>(k, v); }},
        {"cost.w3", [](Scenario& s, auto k, auto v) { costs_of(s).w3 = number<double>(k, v); }},
        {"cost.tx1", [](Scenario& s, auto k, auto v) { costs_of(s).tx1 = number<double>(k, v); }},
        {"cost.tx2", [](Scenario& s, auto k, auto v) { costs_of(s).tx2 = number<double>(k, v); }},
        {"cost.tx3", [](Scenario& s, auto k, auto v) { costs_of(s).tx3 = number<double>(k, v); }},
        {"output_dir", [](Scenario& s, auto, auto v) { s.output_dir = std::string(v); }},
        {"write_traces", [](Scenario& s, auto k, auto v) { s.write_traces = boolean(k, v); }},
    };
    return table;
}

}  // namespace

void set(Scenario& s, std::string_view key, std::string_view value) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(fmt::format("unknown key '{}'", key));
    it->second(s, key, trim(value));
}

void apply(Scenario& s, std::istream& in, std::string_view origin) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view v = line;
        if (const auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
        v = trim(v);
        if (v.empty()) continue;
        const auto eq = v.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(fmt::format("{}:{}: expected key = value", origin, lineno));
        try {
            set(s, trim(v.substr(0, eq)), v.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(fmt::format("{}:{}: {}", origin, lineno, e.what()));
        }
    }
}

void apply_file(Scenario& s, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open scenario '{}'", path.string()));
    apply(s, in, path.string());
}

Scenario parse(std::istream& in, std::string_view origin) {
    Scenario s;
    apply(s, in, origin);
    s.validate();
    return s;
}

Scenario load(const std::filesystem::path& path) {
    Scenario s;
    apply_file(s, path);
    s.validate();
    return s;
}

void Scenario::validate() const {
    if (protocols.empty() || nodes.empty() || p.empty() || q.empty() || packets.empty() || payloads.empty())
        throw ConfigError("sweep lists must not be empty");
    if (seeds < 1) throw ConfigError("seeds must be at least 1");
    for (int m : nodes)
        if (m < 2 || m > 200) throw ConfigError(fmt::format("nodes {} outside 2..200", m));
    for (double v : p)
        if (!(v > 0 && v <= 1)) throw ConfigError(fmt::format("p {} outside (0,1]", v));
    for (double v : q)
        if (!(v > 0 && v <= 1)) throw ConfigError(fmt::format("q {} outside (0,1]", v));
    if (trome_wake_exponent < 0 || ctp_relay_exponent < 0) throw ConfigError("exponents must be non-negative");
    try {
        energy.validate();
        if (costs) costs->validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    for (auto n : packets) {
        auto probe = params;
        probe.packet_count = n;
        for (auto pl : payloads) {
            probe.payload_bytes = pl;
            probe.validate();
        }
    }
}

sim::SimConfig Scenario::sim_config(Protocol protocol, int m, double pv, double qv, std::size_t n,
                                    std::size_t payload, std::uint64_t seed_value) const {
    sim::SimConfig c;
    c.topology = sim::Topology::line(m);
    c.protocol = protocol;
    c.params = params;
    c.params.packet_count = n;
    c.params.payload_bytes = payload;
    c.loss = {pv, qv, loss_mode};
    c.seed = seed_value;
    c.trome_wake_exponent = trome_wake_exponent;
    c.ctp_relay_exponent = ctp_relay_exponent;
    c.metastep_costs = costs;
    return c;
}

markov::ModelParams Scenario::model_params(int m, double pv, double qv) const {
    return {m, pv, qv, params.ttl, trome_wake_exponent, ctp_relay_exponent};
}

markov::CostModel Scenario::cost_model(Protocol protocol, std::size_t payload) const {
    auto model = markov::default_costs(protocol, payload, params.timing, params.radio, energy);
    if (costs) model.time_us = *costs;
    return model;
}

std::filesystem::path output_dir(const Scenario& s) {
    if (!s.output_dir.empty()) return s.output_dir;
    if (const char* env = std::getenv("TROME_OUT_DIR"); env && *env) return env;
    return ".";
}

}  // namespace trome::scenario
