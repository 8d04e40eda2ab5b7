#include "trome/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <thread>
#include <tuple>

#include <fmt/format.h>

namespace trome::experiments {

namespace {

// Runs f(0..n-1) on a small thread pool; results keep index order and the
// first exception is rethrown.
template <typename F>
auto parallel_map(std::size_t n, F f) -> std::vector<decltype(f(std::size_t{}))> {
    std::vector<decltype(f(std::size_t{}))> out(n);
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (std::size_t i; (i = next++) < n;) {
            try {
                out[i] = f(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next = n;
            }
        }
    };
    const std::size_t threads = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, 16);
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < std::min(threads, n); ++t) pool.emplace_back(worker);
    worker();
    pool.clear();
    if (error) std::rethrow_exception(error);
    return out;
}

struct Point {
    Protocol protocol;
    int m;
    double p;
    double q;
    std::size_t n;
    std::size_t payload;
};

std::vector<Point> grid(const Scenario& s) {
    std::vector<Point> out;
    for (auto proto : s.protocols)
        for (int m : s.nodes)
            for (double p : s.p)
                for (double q : s.q)
                    for (auto n : s.packets)
                        for (auto pl : s.payloads) out.push_back({proto, m, p, q, n, pl});
    return out;
}

template <typename Row>
auto key(const Row& r) {
    return std::make_tuple(static_cast<int>(r.protocol), r.m, r.p, r.q, r.n_packets, r.payload_bytes);
}

double expected_time(const Scenario& s, const Point& pt) {
    return markov::multi_packet_cost(pt.protocol, s.model_params(pt.m, pt.p, pt.q),
                                     s.cost_model(pt.protocol, pt.payload), pt.n)
        .time_us;
}

std::string role_of(std::size_t index, std::size_t m) {
    if (index == 0) return "source";
    if (index + 1 == m) return "sink";
    return fmt::format("relay{}", index);
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<AnalyzeRow> analyze(const Scenario& s) {
    const auto points = grid(s);
    return parallel_map(points.size(), [&](std::size_t i) {
        const auto& pt = points[i];
        const auto params = s.model_params(pt.m, pt.p, pt.q);
        const auto mine = markov::multi_packet_cost(pt.protocol, params, s.cost_model(pt.protocol, pt.payload), pt.n);
        const auto naive =
            markov::multi_packet_cost(Protocol::Naive, params, s.cost_model(Protocol::Naive, pt.payload), pt.n);
        return AnalyzeRow{pt.protocol, pt.m, pt.p, pt.q, pt.n, pt.payload,
                          mine.time_us, mine.energy_mJ, mine.time_us / naive.time_us};
    });
}

void write_analyze_csv(std::ostream& os, std::vector<AnalyzeRow> rows) {
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return key(a) < key(b); });
    os << "protocol,m,p,q,n_packets,payload_bytes,expected_time_us,expected_energy_mJ,ratio_vs_naive\n";
    for (const auto& r : rows)
        os << fmt::format("{},{},{},{},{},{},{:.3f},{:.6f},{:.6f}\n", markov::to_string(r.protocol), r.m, r.p, r.q,
                          r.n_packets, r.payload_bytes, r.expected_time_us, r.expected_energy_mJ, r.ratio_vs_naive);
}

// ---------------------------------------------------------------------------

std::vector<SimulateRow> simulate(const Scenario& s, const std::optional<std::filesystem::path>& trace_dir) {
    const auto points = grid(s);
    if (trace_dir) std::filesystem::create_directories(*trace_dir);
    // Flatten (point, seed) so a single large point still spreads over the pool.
    struct Run {
        std::optional<energy::Micros> delivery;
        std::optional<double> energy;
        std::size_t collisions = 0;
        std::size_t failures = 0;
    };
    const std::size_t total = points.size() * s.seeds;
    const auto runs = parallel_map(total, [&](std::size_t idx) {
        const auto& pt = points[idx / s.seeds];
        const auto seed = s.seed + idx % s.seeds;
        const auto config = s.sim_config(pt.protocol, pt.m, pt.p, pt.q, pt.n, pt.payload, seed);
        const auto trace = sim::run(config);
        Run r;
        if (trace.stats.delivered == trace.stats.submitted) r.delivery = trace.stats.delivery_time_us;
        if (s.loss_mode == sim::LossMode::PerPacket) {
            double e = 0;
            for (const auto& [id, totals] : trace.breakdown(s.energy)) e += totals.total_energy();
            r.energy = e;
        }
        r.collisions = trace.stats.collisions;
        r.failures = trace.stats.permanent_failures;
        if (trace_dir) {
            const auto file = *trace_dir / fmt::format("{}_{}_m{}_p{}_q{}_n{}_b{}_seed{}.jsonl", s.name,
                                                       markov::to_string(pt.protocol), pt.m, pt.p, pt.q, pt.n,
                                                       pt.payload, seed);
            std::ofstream out(file);
            if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", file.string()));
            trace.write_jsonl(out);
        }
        return r;
    });

    std::vector<SimulateRow> rows;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& pt = points[i];
        SimulateRow row;
        row.protocol = pt.protocol;
        row.m = pt.m;
        row.p = pt.p;
        row.q = pt.q;
        row.n_packets = pt.n;
        row.payload_bytes = pt.payload;
        row.loss_mode = s.loss_mode;
        row.seeds = s.seeds;
        double sum = 0, sum_sq = 0, energy = 0;
        std::size_t energy_runs = 0;
        for (std::size_t k = 0; k < s.seeds; ++k) {
            const auto& r = runs[i * s.seeds + k];
            row.collisions += r.collisions;
            row.permanent_failures += r.failures;
            if (r.energy) energy += *r.energy, ++energy_runs;
            if (!r.delivery) continue;
            ++row.complete_runs;
            const double t = static_cast<double>(*r.delivery);
            sum += t;
            sum_sq += t * t;
        }
        if (row.complete_runs > 0) {
            const double n = static_cast<double>(row.complete_runs);
            row.mean_delivery_us = sum / n;
            const double var = n > 1 ? std::max(0.0, (sum_sq - n * row.mean_delivery_us * row.mean_delivery_us) / (n - 1)) : 0.0;
            row.stderr_us = std::sqrt(var / n);
        }
        if (energy_runs > 0) row.mean_energy_mJ = energy / static_cast<double>(energy_runs);
        row.analytic_us = expected_time(s, pt);
        row.rel_diff = (row.mean_delivery_us - row.analytic_us) / row.analytic_us;
        rows.push_back(row);
    }
    return rows;
}

void write_simulate_csv(std::ostream& os, std::vector<SimulateRow> rows) {
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return key(a) < key(b); });
    os << "protocol,m,p,q,n_packets,payload_bytes,loss_mode,seeds,complete_runs,mean_delivery_us,stderr_us,"
          "analytic_us,rel_diff,mean_energy_mJ,collisions,permanent_failures\n";
    for (const auto& r : rows)
        os << fmt::format("{},{},{},{},{},{},{},{},{},{:.3f},{:.3f},{:.3f},{:.6f},{},{},{}\n",
                          markov::to_string(r.protocol), r.m, r.p, r.q, r.n_packets, r.payload_bytes,
                          sim::to_string(r.loss_mode), r.seeds, r.complete_runs, r.mean_delivery_us, r.stderr_us,
                          r.analytic_us, r.rel_diff, r.mean_energy_mJ ? fmt::format("{:.6f}", *r.mean_energy_mJ) : "",
                          r.collisions, r.permanent_failures);
}

// ---------------------------------------------------------------------------

std::vector<BudgetRow> budget(const Scenario& s) {
    const auto points = grid(s);
    auto per_point = parallel_map(points.size(), [&](std::size_t i) {
        const auto& pt = points[i];
        auto config = s.sim_config(pt.protocol, pt.m, pt.p, pt.q, pt.n, pt.payload, s.seed);
        config.loss.mode = sim::LossMode::PerPacket;
        const auto trace = sim::run(config);
        const auto b = trace.breakdown(s.energy);
        std::vector<BudgetRow> rows;
        for (std::size_t idx = 0; idx < config.topology.size(); ++idx) {
            const int id = config.topology.node_ids[idx];
            const auto it = b.find(id);
            rows.push_back({pt.protocol, pt.m, pt.n, pt.payload, id, role_of(idx, config.topology.size()),
                            it == b.end() ? energy::CategoryTotals{} : it->second});
        }
        return rows;
    });
    std::vector<BudgetRow> out;
    for (auto& rows : per_point) out.insert(out.end(), rows.begin(), rows.end());
    return out;
}

void write_budget_csv(std::ostream& os, std::vector<BudgetRow> rows) {
    // Within a configuration: source first, sink last (node ids descend).
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        return std::make_tuple(static_cast<int>(a.protocol), a.m, a.n_packets, a.payload_bytes, -a.node_id) <
               std::make_tuple(static_cast<int>(b.protocol), b.m, b.n_packets, b.payload_bytes, -b.node_id);
    });
    os << "protocol,m,n_packets,payload_bytes,node_id,role";
    for (std::size_t c = 0; c < energy::kCategoryCount; ++c)
        os << ',' << energy::to_string(static_cast<energy::Category>(c)) << "_mJ";
    os << ",total_mJ,total_time_us\n";
    for (const auto& r : rows) {
        os << fmt::format("{},{},{},{},{},{}", markov::to_string(r.protocol), r.m, r.n_packets, r.payload_bytes,
                          r.node_id, r.role);
        for (double e : r.totals.energy_mJ) os << fmt::format(",{:.6f}", e);
        os << fmt::format(",{:.6f},{}\n", r.totals.total_energy(), r.totals.total_time());
    }
}

// ---------------------------------------------------------------------------

OverheadRow overhead_point(const Scenario& s, Protocol protocol, int m, std::size_t n, std::size_t payload) {
    auto config = s.sim_config(protocol, m, 1.0, 1.0, n, payload, s.seed);
    config.loss.mode = sim::LossMode::PerPacket;
    const auto trace = sim::run(config);
    OverheadRow row{protocol, m, n, payload, trace.stats.control_bytes, trace.stats.data_bytes_delivered, 0.0};
    row.o_cd = trace.overhead();
    return row;
}

std::vector<OverheadRow> overhead(const Scenario& s) {
    std::vector<Point> points;
    for (const auto& pt : grid(s))
        if (pt.p == s.p.front() && pt.q == s.q.front()) points.push_back(pt);
    return parallel_map(points.size(), [&](std::size_t i) {
        const auto& pt = points[i];
        return overhead_point(s, pt.protocol, pt.m, pt.n, pt.payload);
    });
}

BreakEvenRow break_even(const Scenario& s, Protocol protocol, int m, std::size_t n) {
    BreakEvenRow row{protocol, m, n, std::nullopt};
    for (std::size_t payload = engine::ProtocolParams::kMinPayload; payload <= engine::ProtocolParams::kMaxPayload;
         ++payload) {
        if (overhead_point(s, protocol, m, n, payload).o_cd <= 1.0) {
            row.payload_bytes = payload;
            break;
        }
    }
    return row;
}

std::vector<BreakEvenRow> break_evens(const Scenario& s) {
    std::vector<std::tuple<Protocol, int, std::size_t>> points;
    for (auto proto : s.protocols)
        for (int m : s.nodes)
            for (auto n : s.packets) points.emplace_back(proto, m, n);
    return parallel_map(points.size(), [&](std::size_t i) {
        const auto& [proto, m, n] = points[i];
        return break_even(s, proto, m, n);
    });
}

void write_overhead_csv(std::ostream& os, std::vector<OverheadRow> rows) {
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        return std::make_tuple(static_cast<int>(a.protocol), a.m, a.n_packets, a.payload_bytes) <
               std::make_tuple(static_cast<int>(b.protocol), b.m, b.n_packets, b.payload_bytes);
    });
    os << "protocol,m,n_packets,payload_bytes,control_bytes,data_bytes,o_cd\n";
    for (const auto& r : rows)
        os << fmt::format("{},{},{},{},{},{},{:.6f}\n", markov::to_string(r.protocol), r.m, r.n_packets,
                          r.payload_bytes, r.control_bytes, r.data_bytes, r.o_cd);
}

void write_break_even_csv(std::ostream& os, std::vector<BreakEvenRow> rows) {
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        return std::make_tuple(static_cast<int>(a.protocol), a.m, a.n_packets) <
               std::make_tuple(static_cast<int>(b.protocol), b.m, b.n_packets);
    });
    os << "protocol,m,n_packets,break_even_payload_bytes\n";
    for (const auto& r : rows)
        os << fmt::format("{},{},{},{}\n", markov::to_string(r.protocol), r.m, r.n_packets,
                          r.payload_bytes ? std::to_string(*r.payload_bytes) : "");
}

// ---------------------------------------------------------------------------

SafetyReport check_safety(const sim::SimConfig& config, const sim::SimTrace& trace) {
    SafetyReport r;
    auto fail = [&r](bool& flag, std::string msg) {
        flag = false;
        if (!r.detail.empty()) r.detail += "; ";
        r.detail += std::move(msg);
    };

    std::map<std::uint32_t, int> seen;
    for (auto id : trace.delivered_ids) ++seen[id];
    std::vector<sim::Flow> flows = config.flows;
    if (flows.empty()) flows.push_back({0, config.params.packet_count, 0});
    for (std::size_t f = 0; f < flows.size(); ++f) {
        for (std::size_t k = 0; k < flows[f].packets; ++k) {
            const auto id = sim::payload_key(f, k);
            const int count = seen.count(id) ? seen[id] : 0;
            const bool failed = std::find(trace.failed_ids.begin(), trace.failed_ids.end(), id) != trace.failed_ids.end();
            if (count > 1) fail(r.exactly_once, fmt::format("payload {} delivered {} times", id, count));
            if (count == 0 && !failed) fail(r.exactly_once, fmt::format("payload {} lost silently", id));
            if (count == 1 && failed) fail(r.exactly_once, fmt::format("payload {} delivered and failed", id));
        }
    }
    if (trace.stats.duplicate_deliveries > 0)
        fail(r.exactly_once, fmt::format("{} duplicate deliveries", trace.stats.duplicate_deliveries));

    for (const auto& fr : trace.frames) {
        if (fr.kind == engine::FrameKind::RReq && (fr.ttl < 0 || fr.ttl > config.params.ttl))
            fail(r.ttl_bound, fmt::format("R_REQ from {} carries ttl {}", fr.sender, fr.ttl));
        if (fr.kind == engine::FrameKind::Wuc) {
            const auto a = config.topology.index_of(fr.sender);
            const auto b = config.topology.index_of(fr.dest);
            if (!config.topology.wakeup_reach(a, b))
                fail(r.ttl_bound, fmt::format("wake-up call from {} to non-neighbour {}", fr.sender, fr.dest));
        }
    }

    if (!trace.stats.all_asleep_at_end) fail(r.asleep_at_end, "nodes awake at end of run");
    if (trace.stats.collisions > 0) fail(r.no_collision, fmt::format("{} collisions", trace.stats.collisions));
    return r;
}

// ---------------------------------------------------------------------------

namespace {

Check check_solver_fixed_point(const Scenario& s) {
    double worst = 0;
    std::string where;
    for (auto proto : {Protocol::TRome, Protocol::Naive, Protocol::CtpWur})
        for (int m = 2; m <= 6; ++m)
            for (double p : {1.0, 0.97, 0.75, 0.5})
                for (double q : {1.0, 0.97, 0.75, 0.5}) {
                    const auto costs = s.cost_model(proto, 100).time_us;
                    const auto sys = markov::build(proto, s.model_params(m, p, q), costs);
                    const double direct = markov::solve(sys);
                    // x <- b + (I - A) x converges because the chain is absorbing.
                    std::vector<double> x(sys.b.size(), 0.0);
                    for (int it = 0; it < 200000; ++it) {
                        std::vector<double> nx = sys.b;
                        double delta = 0;
                        for (std::size_t r = 0; r < x.size(); ++r) {
                            for (std::size_t c = 0; c < x.size(); ++c)
                                nx[r] += ((r == c ? 1.0 : 0.0) - sys.A[r][c]) * x[c];
                            delta = std::max(delta, std::abs(nx[r] - x[r]));
                        }
                        x.swap(nx);
                        if (delta < 1e-9) break;
                    }
                    const double iterated = x[sys.index_of(markov::start_state())];
                    const double rel = std::abs(direct - iterated) / std::abs(direct);
                    if (rel > worst) {
                        worst = rel;
                        where = fmt::format("{} m={} p={} q={}", markov::to_string(proto), m, p, q);
                    }
                }
    return {"solver_vs_fixed_point", worst <= 1e-6, fmt::format("max rel err {:.3g} at {}", worst, where)};
}

Check check_lossless_success_path(const Scenario& s) {
    std::string bad;
    int runs = 0;
    for (auto proto : {Protocol::TRome, Protocol::Naive, Protocol::CtpWur})
        for (int m = 2; m <= 6; ++m)
            for (std::size_t n : {1u, 5u}) {
                auto c = s.sim_config(proto, m, 1, 1, n, 100, s.seed);
                c.loss.mode = sim::LossMode::PerPacket;
                c.metastep_costs.reset();
                const auto t = sim::run(c);
                const double expect = markov::multi_packet_cost(proto, s.model_params(m, 1, 1),
                                                                markov::default_costs(proto, 100, c.params.timing,
                                                                                      c.params.radio, s.energy),
                                                                n)
                                          .time_us;
                ++runs;
                if (!t.stats.delivery_time_us || std::abs(static_cast<double>(*t.stats.delivery_time_us) - expect) > 0.5)
                    bad += fmt::format(" {} m={} n={}", markov::to_string(proto), m, n);
            }
    return {"lossless_sim_equals_success_path", bad.empty(),
            bad.empty() ? fmt::format("{} runs exact", runs) : "mismatch:" + bad};
}

Check check_monte_carlo(const Scenario& s, std::size_t seeds) {
    Scenario mc = s;
    mc.protocols = {Protocol::TRome, Protocol::Naive, Protocol::CtpWur};
    mc.nodes = {3, 4, 5};
    mc.p = {0.75};
    mc.q = {0.97};
    mc.packets = {1};
    mc.payloads = {100};
    mc.seeds = seeds;
    mc.loss_mode = sim::LossMode::PerMetastep;
    bool ok = true;
    double worst_z = 0, worst_rel = 0;
    for (const auto& r : simulate(mc)) {
        const double z = r.stderr_us > 0 ? std::abs(r.mean_delivery_us - r.analytic_us) / r.stderr_us : 0.0;
        worst_z = std::max(worst_z, z);
        worst_rel = std::max(worst_rel, std::abs(r.rel_diff));
        ok = ok && z <= 3.0 && std::abs(r.rel_diff) <= 0.01 && r.complete_runs == seeds;
    }
    return {"metastep_monte_carlo_vs_solver", ok,
            fmt::format("{} seeds, max |z| {:.2f}, max rel diff {:.4f}", seeds, worst_z, worst_rel)};
}

Check check_budget(const Scenario& s) {
    Scenario b = s;
    b.protocols = {Protocol::TRome};
    b.nodes = {4};
    b.p = {1};
    b.q = {1};
    b.packets = {5};
    b.payloads = {100};
    b.params.ttl = 3;
    auto rows = budget(b);
    const double target[] = {3.3, 1.7, 1.6, 2.1};
    bool ok = rows.size() == 4;
    std::string detail;
    for (std::size_t i = 0; ok && i < 4; ++i) {
        const double e = rows[i].totals.total_energy();
        detail += fmt::format("{}={:.3f} ", rows[i].role, e);
        ok = ok && std::abs(e - target[i]) <= 0.15 * target[i];
    }
    if (ok) {
        const auto& sink = rows[3].totals;
        ok = sink.energy(energy::Category::Wuc) == 0 && sink.energy(energy::Category::Delay) == 0;
        const double src = rows[0].totals.total_energy();
        ok = ok && src > rows[1].totals.total_energy() && src > rows[2].totals.total_energy();
    }
    return {"energy_budget_regression", ok, detail};
}

Check check_break_even(const Scenario& s) {
    const auto naive = break_even(s, Protocol::Naive, 2, 1).payload_bytes;
    const auto trome = break_even(s, Protocol::TRome, 2, 1).payload_bytes;
    const bool ok = naive && trome && *naive >= 160 && *naive <= 170 && *trome >= 187 && *trome <= 197;
    return {"overhead_break_even", ok,
            fmt::format("naive {} B, trome {} B", naive ? std::to_string(*naive) : "none",
                        trome ? std::to_string(*trome) : "none")};
}

Check check_safety_sample(const Scenario& s, std::size_t count) {
    std::mt19937_64 rng(s.seed);
    std::uniform_int_distribution<int> m_dist(2, 6);
    std::uniform_int_distribution<std::size_t> n_dist(1, 64);
    std::uniform_int_distribution<int> proto_dist(0, 2);
    std::uniform_real_distribution<double> loss(0.9, 1.0);
    std::vector<sim::SimConfig> configs;
    for (std::size_t k = 0; k < count; ++k) {
        auto c = s.sim_config(static_cast<Protocol>(proto_dist(rng)), m_dist(rng), loss(rng), loss(rng),
                              n_dist(rng), 100, rng());
        c.loss.mode = sim::LossMode::PerPacket;
        configs.push_back(c);
    }
    const auto reports = parallel_map(configs.size(), [&](std::size_t i) {
        return check_safety(configs[i], sim::run(configs[i]));
    });
    std::size_t failed = 0;
    std::string first;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        if (reports[i].ok()) continue;
        if (failed++ == 0) first = fmt::format(" (first: seed {}: {})", configs[i].seed, reports[i].detail);
    }
    return {"protocol_safety", failed == 0, fmt::format("{}/{} runs violated a property{}", failed, count, first)};
}

}  // namespace

std::vector<Check> verify(const Scenario& s) {
    std::vector<Check> checks;
    checks.push_back(check_solver_fixed_point(s));
    checks.push_back(check_lossless_success_path(s));
    checks.push_back(check_monte_carlo(s, std::max<std::size_t>(s.seeds, 20000)));
    checks.push_back(check_budget(s));
    checks.push_back(check_break_even(s));
    checks.push_back(check_safety_sample(s, 200));
    return checks;
}

void write_checks_csv(std::ostream& os, const std::vector<Check>& checks) {
    os << "check,passed,detail\n";
    for (const auto& c : checks) {
        std::string detail = c.detail;
        std::replace(detail.begin(), detail.end(), ',', ';');
        os << fmt::format("{},{},{}\n", c.name, c.passed ? "true" : "false", detail);
    }
}

}  // namespace trome::experiments
