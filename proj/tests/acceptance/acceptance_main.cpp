// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "oracle/expanded_chain.hpp"
#include "trome/airtime_energy.hpp"
#include "trome/channel_sim.hpp"
#include "trome/experiments.hpp"
#include "trome/frame_codec.hpp"
#include "trome/markov_analyzer.hpp"

using namespace trome;
using markov::Protocol;

namespace {

constexpr Protocol kAll[] = {Protocol::TRome, Protocol::Naive, Protocol::CtpWur};

struct Outcome {
    bool passed = false;
    std::string detail;
};

// Collects failures; the first few are kept for the report line.
struct Failures {
    int count = 0;
    std::string first;
    void add(const std::string& what) {
        if (count++ < 3) first += (first.empty() ? "" : "; ") + what;
    }
    Outcome outcome(const std::string& ok_detail) const {
        if (count == 0) return {true, ok_detail};
        return {false, fmt::format("{} failure(s): {}", count, first)};
    }
};

// --- 1 ---------------------------------------------------------------------

Outcome codec_exactness() {
    using namespace codec;
    Failures f;
    for (int burst = kMinCarrierBurst; burst <= kMaxCarrierBurst; ++burst) {
        const auto size = encode_wakeup({burst, 52, {7}}).size();
        if (size != static_cast<std::size_t>(116 + burst) || size < 148 || size > 216) f.add(fmt::format("WUC {} B", size));
    }
    if (encode_wakeup({}).size() != 154) f.add("default WUC not 154 B");
    if (encode_wuc_ack({kProtocolId, 300}).size() != 3) f.add("WUC ACK size");
    if (encode_mac(MacAckFrame{1, 2}).size() != 3) f.add("MAC ACK size");
    for (std::size_t n : {0u, 1u, 100u, 246u})
        if (encode_mac(MacDataFrame{1, 2, Bytes(n, 0xab)}).size() != 4 + n) f.add(fmt::format("MAC DATA {}", n));
    for (const RoutingFrame& r : {RoutingFrame{RoutingRequest{5, 1, 2, 3}}, RoutingFrame{RoutingData{1, 2, 9}},
                                  RoutingFrame{RoutingReqAck{2, 0, 63}}})
        if (encode_routing(r).size() != 4) f.add("routing size");

    std::mt19937_64 rng(2024);
    auto byte = [&] { return static_cast<std::uint8_t>(rng()); };
    for (int i = 0; i < 1000; ++i) {
        const WakeUpFrame w{static_cast<int>(kMinCarrierBurst + rng() % (kMaxCarrierBurst - kMinCarrierBurst + 1)),
                            static_cast<int>(4 * (4 + rng() % 10)), {byte()}};
        if (decode_wakeup(encode_wakeup(w), w.preamble_bytes) != w) f.add(fmt::format("WUC round trip {}", i));
        const WucAckFrame a{kProtocolId, static_cast<std::uint16_t>(rng())};
        if (decode_wuc_ack(encode_wuc_ack(a)) != a) f.add("WUC ACK round trip");
        Bytes payload(rng() % 247);
        for (auto& b : payload) b = byte();
        const MacDataFrame d{byte(), byte(), payload};
        if (std::get<MacDataFrame>(decode_mac(encode_mac(d))) != d) f.add("MAC DATA round trip");
        const MacAckFrame k{byte(), byte()};
        if (std::get<MacAckFrame>(decode_mac(encode_mac(k))) != k) f.add("MAC ACK round trip");
        const RoutingFrame rs[] = {RoutingRequest{static_cast<std::uint8_t>(rng() % 64), byte(), byte(),
                                                  static_cast<std::uint8_t>(rng() % 64)},
                                   RoutingData{byte(), byte(), static_cast<std::uint8_t>(rng() % 247)},
                                   RoutingReqAck{static_cast<std::uint8_t>(rng() % 64), byte(),
                                                 static_cast<std::uint8_t>(rng() % 64)}};
        for (const auto& r : rs)
            if (decode_routing(encode_routing(r)) != r) f.add("routing round trip");
    }
    return f.outcome("sizes exact, 1000 randomized round trips");
}

// --- 2 ---------------------------------------------------------------------

Outcome deterministic_latency() {
    sim::SimConfig c;
    c.topology = sim::Topology::line(4);
    c.protocol = Protocol::TRome;
    c.params.ttl = 3;
    c.params.packet_count = 5;
    c.params.payload_bytes = 100;
    Failures f;
    std::string detail;
    for (auto mode : {sim::LossMode::PerPacket, sim::LossMode::PerMetastep}) {
        c.loss = {1, 1, mode};
        const auto t = sim::run(c);
        if (!t.stats.delivery_time_us || t.stats.delivered != 5) {
            f.add(fmt::format("{}: not delivered", sim::to_string(mode)));
            continue;
        }
        const double ms = static_cast<double>(*t.stats.delivery_time_us) / 1000.0;
        detail += fmt::format("{} {:.2f} ms ", sim::to_string(mode), ms);
        if (ms < 81.0 || ms > 99.0) f.add(fmt::format("{} {:.2f} ms outside 90 +-10%", sim::to_string(mode), ms));
    }
    return f.outcome(detail);
}

// --- 3 ---------------------------------------------------------------------

oracle::Costs to_oracle(const markov::CostConstants& k) { return {k.w1, k.w2, k.w3, k.tx1, k.tx2, k.tx3}; }

Outcome solver_oracle() {
    Failures f;
    double worst = 0;
    int cases = 0;
    for (auto proto : kAll)
        for (int m = 2; m <= 6; ++m)
            for (double p : {1.0, 0.97, 0.75, 0.5})
                for (double q : {1.0, 0.97, 0.75, 0.5}) {
                    const markov::ModelParams mp{m, p, q};
                    const auto model = markov::default_costs(proto, 100);
                    std::vector<markov::CostConstants> sets{model.time_us, model.energy_mJ};
                    if (proto == Protocol::TRome) sets.push_back(markov::batch_costs(model.time_us, 5));
                    for (const auto& k : sets) {
                        const double mine = markov::solve(markov::build(proto, mp, k));
                        const double ref = oracle::expected_cost(
                            {markov::to_string(proto), m, p, q, mp.ttl, mp.trome_wake_exponent,
                             mp.ctp_relay_exponent},
                            to_oracle(k));
                        const double rel = std::abs(mine - ref) / std::abs(ref);
                        worst = std::max(worst, rel);
                        ++cases;
                        if (!(rel <= 1e-6))
                            f.add(fmt::format("{} m={} p={} q={}: {} vs {}", markov::to_string(proto), m, p, q, mine,
                                              ref));
                    }
                }
    return f.outcome(fmt::format("{} systems, max rel err {:.2e}", cases, worst));
}

// --- 4 ---------------------------------------------------------------------

Outcome sim_model_agreement() {
    scenario::Scenario s;
    s.protocols = {std::begin(kAll), std::end(kAll)};
    s.nodes = {3, 4, 5};
    s.p = {0.75};
    s.q = {0.97};
    s.packets = {1};
    s.seeds = 100000;
    s.seed = 1;
    s.loss_mode = sim::LossMode::PerMetastep;
    Failures f;
    double worst_z = 0, worst_rel = 0;
    for (const auto& r : experiments::simulate(s)) {
        const double z = std::abs(r.mean_delivery_us - r.analytic_us) / r.stderr_us;
        worst_z = std::max(worst_z, z);
        worst_rel = std::max(worst_rel, std::abs(r.rel_diff));
        if (r.complete_runs != r.seeds || !(z <= 3.0) || !(std::abs(r.rel_diff) <= 0.01))
            f.add(fmt::format("{} m={}: mean {:.1f} vs {:.1f} (z {:.2f})", markov::to_string(r.protocol), r.m,
                              r.mean_delivery_us, r.analytic_us, z));
    }
    return f.outcome(fmt::format("9 configs x 1e5 seeds, max |z| {:.2f}, max rel {:.4f}", worst_z, worst_rel));
}

// --- 5 ---------------------------------------------------------------------

double expected(Protocol proto, int m, std::size_t n, double p = 1, double q = 1) {
    return markov::multi_packet_cost(proto, {m, p, q}, markov::default_costs(proto, 100), n).time_us;
}

Outcome curve_shape() {
    Failures f;
    for (auto proto : kAll)
        for (int m = 2; m <= 6; ++m) {
            const auto name = markov::to_string(proto);
            if (!(expected(proto, m, 5) > expected(proto, m, 1))) f.add(fmt::format("{} m={}: n=5 not above n=1", name, m));
            if (m > 2)
                for (std::size_t n : {1u, 5u})
                    if (!(expected(proto, m, n) > expected(proto, m - 1, n)))
                        f.add(fmt::format("{} n={}: not increasing at m={}", name, n, m));
        }
    return f.outcome(fmt::format("trome n=1: {:.1f}..{:.1f} ms, n=5: {:.1f}..{:.1f} ms",
                                 expected(Protocol::TRome, 2, 1) / 1000, expected(Protocol::TRome, 6, 1) / 1000,
                                 expected(Protocol::TRome, 2, 5) / 1000, expected(Protocol::TRome, 6, 5) / 1000));
}

// --- 6 ---------------------------------------------------------------------

Outcome comparative_claims() {
    Failures f;
    const double r2 = expected(Protocol::TRome, 2, 1) / expected(Protocol::Naive, 2, 1);
    if (std::abs(r2 - 1.4) > 0.15) f.add(fmt::format("(a) ratio at m=2 {:.3f}", r2));
    const double r4 = expected(Protocol::TRome, 4, 1) / expected(Protocol::Naive, 4, 1);
    if (std::abs(r4 - 1.0) > 0.05) f.add(fmt::format("(b) ratio at m=4 {:.3f}", r4));
    for (double p : {1.0, 0.97, 0.75})
        for (double q : {1.0, 0.97, 0.75})
            for (std::size_t n : {1u, 5u}) {
                const double c = expected(Protocol::CtpWur, 2, n, p, q), nv = expected(Protocol::Naive, 2, n, p, q);
                if (std::abs(c - nv) > 1e-9 * nv) f.add(fmt::format("(c) ctp != naive at p={} q={}", p, q));
            }
    for (int m = 2; m <= 6; ++m) {
        const double base = expected(Protocol::CtpWur, m, 1) / expected(Protocol::Naive, m, 1);
        for (std::size_t n : {2u, 5u}) {
            const double r = expected(Protocol::CtpWur, m, n) / expected(Protocol::Naive, m, n);
            if (std::abs(r - base) > 0.01 * base) f.add(fmt::format("(d) ctp ratio drifts at m={} n={}", m, n));
        }
        for (std::size_t n : {2u, 3u, 5u, 10u, 63u, 64u, 100u}) {
            const double t = expected(Protocol::TRome, m, n);
            if (!(t < expected(Protocol::Naive, m, n)) || !(t < expected(Protocol::CtpWur, m, n)))
                f.add(fmt::format("(e) trome not cheapest at m={} n={}", m, n));
        }
    }
    return f.outcome(fmt::format("ratio m=2 {:.3f}, m=4 {:.3f}", r2, r4));
}

// --- 7 ---------------------------------------------------------------------

Outcome energy_budget() {
    scenario::Scenario s;
    s.protocols = {Protocol::TRome};
    s.nodes = {4};
    s.packets = {5};
    s.payloads = {100};
    s.params.ttl = 3;
    const auto rows = experiments::budget(s);
    Failures f;
    if (rows.size() != 4) return {false, fmt::format("{} rows", rows.size())};
    const double target[] = {3.3, 1.7, 1.6, 2.1};
    std::string detail;
    for (std::size_t i = 0; i < 4; ++i) {
        const double e = rows[i].totals.total_energy();
        detail += fmt::format("{} {:.3f} ", rows[i].role, e);
        if (std::abs(e - target[i]) > 0.15 * target[i])
            f.add(fmt::format("{} {:.3f} mJ vs {} mJ", rows[i].role, e, target[i]));
    }
    const auto& sink = rows[3].totals;
    if (rows[3].role != "sink" || sink.energy(energy::Category::Wuc) != 0.0 ||
        sink.energy(energy::Category::Delay) != 0.0)
        f.add("sink WUC/Delay not zero");
    const double src = rows[0].totals.total_energy();
    if (!(src > rows[1].totals.total_energy() && src > rows[2].totals.total_energy())) f.add("source not above relays");

    // Row sums against the raw trace.
    sim::SimConfig c = s.sim_config(Protocol::TRome, 4, 1, 1, 5, 100, s.seed);
    c.loss.mode = sim::LossMode::PerPacket;
    const auto t = sim::run(c);
    double trace_total = 0, row_total = 0;
    for (const auto& iv : t.intervals) trace_total += energy::interval_energy(iv, s.energy);
    for (const auto& r : rows) row_total += r.totals.total_energy();
    if (std::abs(trace_total - row_total) > 1e-9 * trace_total) f.add("rows do not sum to trace energy");
    return f.outcome(detail + "mJ");
}

// --- 8 ---------------------------------------------------------------------

Outcome overhead() {
    scenario::Scenario s;
    Failures f;
    const auto naive = experiments::break_even(s, Protocol::Naive, 2, 1).payload_bytes;
    const auto trome = experiments::break_even(s, Protocol::TRome, 2, 1).payload_bytes;
    if (!naive || *naive < 160 || *naive > 170) f.add(fmt::format("naive break-even {}", naive.value_or(0)));
    if (!trome || *trome < 187 || *trome > 197) f.add(fmt::format("trome break-even {}", trome.value_or(0)));
    for (int m : {2, 4}) {
        const double naive1 = experiments::overhead_point(s, Protocol::Naive, m, 1, 100).o_cd;
        double prev = 1e300;
        for (std::size_t n = 1; n <= 20; ++n) {
            const double nv = experiments::overhead_point(s, Protocol::Naive, m, n, 100).o_cd;
            const double tr = experiments::overhead_point(s, Protocol::TRome, m, n, 100).o_cd;
            if (std::abs(nv - naive1) > 1e-12 * naive1) f.add(fmt::format("naive varies at m={} n={}", m, n));
            if (!(tr < prev)) f.add(fmt::format("trome not decreasing at m={} n={}", m, n));
            if (n >= 2 && !(tr < nv)) f.add(fmt::format("trome not below naive at m={} n={}", m, n));
            prev = tr;
        }
    }
    return f.outcome(fmt::format("break-even naive {} B, trome {} B", naive.value_or(0), trome.value_or(0)));
}

// --- 9 ---------------------------------------------------------------------

Outcome safety() {
    std::mt19937_64 rng(9001);
    std::uniform_int_distribution<int> m_dist(2, 6), proto_dist(0, 2);
    std::uniform_int_distribution<std::size_t> n_dist(1, 64);
    std::uniform_real_distribution<double> loss(0.9, 1.0);
    Failures f;
    std::size_t packets = 0, second_flows = 0;
    for (int k = 0; k < 1000; ++k) {
        sim::SimConfig c;
        const int m = m_dist(rng);
        c.topology = sim::Topology::line(m);
        c.protocol = static_cast<Protocol>(proto_dist(rng));
        c.params.packet_count = n_dist(rng);
        c.loss = {loss(rng), loss(rng), sim::LossMode::PerPacket};
        c.seed = rng();
        // Every fourth run adds a second source further down the line.
        if (k % 4 == 3 && m >= 3) {
            const auto second = 1 + rng() % static_cast<std::size_t>(m - 2);
            c.flows = {{0, c.params.packet_count, 0}, {second, n_dist(rng), static_cast<energy::Micros>(rng() % 20000)}};
            ++second_flows;
        }
        const auto t = sim::run(c);
        packets += t.stats.submitted;
        const auto r = experiments::check_safety(c, t);
        const bool all_delivered = t.stats.delivered == t.stats.submitted && t.stats.permanent_failures == 0;
        if (!r.ok() || !all_delivered)
            f.add(fmt::format("run {} ({} m={} seed {}): {}{}", k, markov::to_string(c.protocol), m, c.seed, r.detail,
                              all_delivered ? "" : " undelivered"));
    }
    return f.outcome(fmt::format("1000 runs ({} with two sources), {} packets", second_flows, packets));
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double limit_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "codec exactness", 1, codec_exactness},
        {2, "deterministic latency", 1, deterministic_latency},
        {3, "solver/oracle equivalence", 10, solver_oracle},
        {4, "sim/model agreement", 300, sim_model_agreement},
        {5, "delivery-time curve shape", 0, curve_shape},
        {6, "comparative claims", 0, comparative_claims},
        {7, "energy budget regression", 0, energy_budget},
        {8, "control/data overhead", 0, overhead},
        {9, "protocol safety suite", 120, safety},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, fmt::format("exception: {}", e.what())};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.limit_s > 0 && secs > c.limit_s) {
            o.passed = false;
            o.detail += fmt::format(" (over the {} s limit)", c.limit_s);
        }
        failed += !o.passed;
        std::cout << fmt::format("{} criterion {}: {}: {} [{:.2f} s]\n", o.passed ? "PASS" : "FAIL", c.id, c.name,
                                 o.detail, secs)
                  << std::flush;
    }
    std::cout << fmt::format("{} of {} criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
