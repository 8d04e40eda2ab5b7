#include "trome/markov_analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include <fmt/format.h>

namespace trome::markov {

namespace {

using Kind = MetaState::Kind;
using Cost = Outcome::Cost;

void add(std::vector<Outcome>& out, double prob, Cost cost, MetaState next) {
    if (prob > 0) out.push_back({prob, cost, next});
}

// Shared transfer step: success hands the message to j, any failure restarts
// the wake-up sequence at i.
std::vector<Outcome> transfer_outcomes(const ModelParams& mp, const MetaState& s) {
    std::vector<Outcome> out;
    const auto done = s.j == mp.m ? MetaState::delivered() : MetaState::wake(s.j, s.j);
    add(out, mp.q * mp.q, Cost::Tx1, done);
    add(out, mp.q * (1 - mp.q), Cost::Tx2, MetaState::wake(s.i, s.i));
    add(out, 1 - mp.q, Cost::Tx3, MetaState::wake(s.i, s.i));
    return out;
}

std::vector<Outcome> trome_wake(const ModelParams& mp, const MetaState& s) {
    const double qe = std::pow(mp.q, mp.trome_wake_exponent);
    const bool chain_ends = s.j + 1 == mp.m || s.j + 1 - s.i == mp.ttl;
    const auto advance = chain_ends ? MetaState::transfer(s.i, s.j + 1) : MetaState::wake(s.i, s.j + 1);
    // A failed extension still leaves node j awake, so the data goes that far.
    const auto fallback = s.j == s.i ? MetaState::wake(s.i, s.i) : MetaState::transfer(s.i, s.j);
    std::vector<Outcome> out;
    add(out, mp.p * qe, Cost::W1, advance);
    add(out, mp.p * (1 - qe), Cost::W2, fallback);
    add(out, 1 - mp.p, Cost::W3, fallback);
    return out;
}

std::vector<Outcome> naive_wake(const ModelParams& mp, const MetaState& s) {
    std::vector<Outcome> out;
    add(out, mp.p, Cost::W1, MetaState::transfer(s.i, s.i + 1));
    add(out, 1 - mp.p, Cost::W3, MetaState::wake(s.i, s.i));
    return out;
}

std::vector<Outcome> ctp_wake(const ModelParams& mp, const MetaState& s) {
    std::vector<Outcome> out;
    const auto restart = MetaState::wake(s.i, s.i);
    if (s.j == s.i) {
        const auto next = mp.m - s.i >= 2 ? MetaState::wake(s.i, s.i + 1) : MetaState::transfer(s.i, s.i + 1);
        add(out, mp.p, Cost::W1, next);
        add(out, 1 - mp.p, Cost::W3, restart);
        return out;
    }
    const double qe = std::pow(mp.q, mp.ctp_relay_exponent);
    add(out, mp.p * qe, Cost::W1, MetaState::transfer(s.i, s.i + 2));
    add(out, mp.p * (1 - qe), Cost::W2, restart);
    add(out, 1 - mp.p, Cost::W3, restart);
    return out;
}

double energy_mJ(const energy::EnergyModel& em, energy::RadioState s, double us) {
    return em.voltage * energy::current_mA(s, em) * us * 1e-6;
}

}  // namespace

const char* to_string(Protocol p) {
    switch (p) {
        case Protocol::TRome: return "trome";
        case Protocol::Naive: return "naive";
        case Protocol::CtpWur: return "ctpwur";
    }
    return "?";
}

Protocol protocol_from_string(std::string_view name) {
    if (name == "trome" || name == "t-rome") return Protocol::TRome;
    if (name == "naive") return Protocol::Naive;
    if (name == "ctpwur" || name == "ctp-wur" || name == "ctp") return Protocol::CtpWur;
    throw std::invalid_argument(fmt::format("unknown protocol '{}'", name));
}

std::string MetaState::label() const {
    switch (kind) {
        case Kind::Wake: return fmt::format("w({},{},{})", i, j, j + 1);
        case Kind::Transfer: return fmt::format("T({},{})", i, j);
        case Kind::Delivered: return "delivered";
    }
    return "?";
}

void CostConstants::validate() const {
    const double all[] = {w1, w2, w3, tx1, tx2, tx3};
    if (std::ranges::any_of(all, [](double v) { return !(v > 0) || !std::isfinite(v); }))
        throw MarkovError(MarkovErrc::InvalidArgument, "cost constants must be positive");
    if (w2 < w1 || w3 < w1 || tx2 < tx1 || tx3 < tx1)
        throw MarkovError(MarkovErrc::InvalidArgument, "failure costs must not undercut success costs");
}

void ModelParams::validate() const {
    if (m < 2) throw MarkovError(MarkovErrc::InvalidArgument, "m must be at least 2");
    if (ttl < 1) throw MarkovError(MarkovErrc::InvalidArgument, "ttl must be at least 1");
    if (trome_wake_exponent < 0 || ctp_relay_exponent < 0)
        throw MarkovError(MarkovErrc::InvalidArgument, "exponents must be non-negative");
    if (!(p >= 0 && p <= 1 && q >= 0 && q <= 1))
        throw MarkovError(MarkovErrc::InvalidArgument, "p and q must lie in [0,1]");
    if (p * q == 0) throw MarkovError(MarkovErrc::DegenerateProbability, "p*q is zero");
}

double cost_of(Cost c, const CostConstants& k) {
    switch (c) {
        case Cost::W1: return k.w1;
        case Cost::W2: return k.w2;
        case Cost::W3: return k.w3;
        case Cost::Tx1: return k.tx1;
        case Cost::Tx2: return k.tx2;
        case Cost::Tx3: return k.tx3;
    }
    return 0;
}

std::vector<Outcome> outcomes(Protocol protocol, const ModelParams& params, const MetaState& s) {
    if (s.kind == Kind::Delivered) return {};
    if (s.kind == Kind::Transfer) return transfer_outcomes(params, s);
    switch (protocol) {
        case Protocol::TRome: return trome_wake(params, s);
        case Protocol::Naive: return naive_wake(params, s);
        case Protocol::CtpWur: return ctp_wake(params, s);
    }
    return {};
}

std::size_t ExpectationSystem::index_of(const MetaState& s) const {
    const auto it = std::ranges::find(variables, s);
    if (it == variables.end())
        throw MarkovError(MarkovErrc::InvalidArgument, fmt::format("{} is not a variable", s.label()));
    return static_cast<std::size_t>(it - variables.begin());
}

MetaState start_state() { return MetaState::wake(1, 1); }

ExpectationSystem build(Protocol protocol, const ModelParams& params, const CostConstants& costs) {
    params.validate();
    costs.validate();

    ExpectationSystem sys;
    sys.protocol = protocol;
    std::deque<MetaState> frontier{start_state()};
    sys.variables.push_back(start_state());
    while (!frontier.empty()) {
        const auto s = frontier.front();
        frontier.pop_front();
        for (const auto& o : outcomes(protocol, params, s)) {
            if (o.next.kind == Kind::Delivered || std::ranges::find(sys.variables, o.next) != sys.variables.end())
                continue;
            sys.variables.push_back(o.next);
            frontier.push_back(o.next);
        }
    }

    const auto n = sys.variables.size();
    sys.A.assign(n, std::vector<double>(n, 0.0));
    sys.b.assign(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        sys.A[r][r] = 1.0;
        for (const auto& o : outcomes(protocol, params, sys.variables[r])) {
            sys.b[r] += o.probability * cost_of(o.cost, costs);
            if (o.next.kind != Kind::Delivered) sys.A[r][sys.index_of(o.next)] -= o.probability;
        }
    }
    return sys;
}

ExpectationSystem build_trome(const ModelParams& params, const CostConstants& costs) {
    return build(Protocol::TRome, params, costs);
}
ExpectationSystem build_naive(const ModelParams& params, const CostConstants& costs) {
    return build(Protocol::Naive, params, costs);
}
ExpectationSystem build_ctpwur(const ModelParams& params, const CostConstants& costs) {
    return build(Protocol::CtpWur, params, costs);
}

std::vector<double> solve_linear(std::vector<std::vector<double>> A, std::vector<double> b) {
    const auto n = b.size();
    if (A.size() != n || std::ranges::any_of(A, [n](const auto& row) { return row.size() != n; }))
        throw MarkovError(MarkovErrc::InvalidArgument, "system is not square");
    const auto A0 = A;
    const auto b0 = b;

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(A[r][col]) > std::abs(A[pivot][col])) pivot = r;
        if (std::abs(A[pivot][col]) < 1e-300) throw MarkovError(MarkovErrc::SingularSystem, "zero pivot");
        std::swap(A[col], A[pivot]);
        std::swap(b[col], b[pivot]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = A[r][col] / A[col][col];
            if (f == 0) continue;
            for (std::size_t c = col; c < n; ++c) A[r][c] -= f * A[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t k = n; k-- > 0;) {
        double acc = b[k];
        for (std::size_t c = k + 1; c < n; ++c) acc -= A[k][c] * x[c];
        x[k] = acc / A[k][k];
    }

    double resid = 0, bnorm = 0;
    for (std::size_t r = 0; r < n; ++r) {
        double acc = -b0[r];
        for (std::size_t c = 0; c < n; ++c) acc += A0[r][c] * x[c];
        resid = std::max(resid, std::abs(acc));
        bnorm = std::max(bnorm, std::abs(b0[r]));
    }
    if (!std::isfinite(resid) || resid > 1e-9 * std::max(bnorm, 1e-300))
        throw MarkovError(MarkovErrc::SingularSystem, fmt::format("residual {} too large", resid));
    return x;
}

double solve(const ExpectationSystem& system, const MetaState& start) {
    const auto x = solve_linear(system.A, system.b);
    return x[system.index_of(start)];
}

CostModel default_costs(Protocol protocol, std::size_t payload_bytes, const energy::ProtocolTiming& timing,
                        const energy::RadioTimingModel& radio, const energy::EnergyModel& em) {
    using energy::RadioState;
    timing.validate();
    radio.validate();
    em.validate();

    double t_w = 0, e_w = 0, t_tx = 0, e_tx = 0;
    const double cal = static_cast<double>(radio.calibration_us);

    // One frame: sender calibrates then transmits, receiver listens throughout.
    auto frame = [&](double& t, double& e, double airtime) {
        t += airtime;
        e += energy_mJ(em, RadioState::Calibrate, cal) + energy_mJ(em, RadioState::TxData, airtime - cal) +
             energy_mJ(em, RadioState::Rx, airtime);
    };
    // Both parties idle with the MCU running.
    auto gap = [&](double& t, double& e, double us) {
        t += us;
        e += 2 * energy_mJ(em, RadioState::Processing, us);
    };

    t_w += static_cast<double>(radio.wuc_total_us);
    e_w += energy_mJ(em, RadioState::Calibrate, cal) +
           energy_mJ(em, RadioState::TxWuc, static_cast<double>(radio.wuc_tx_us));
    gap(t_w, e_w, static_cast<double>(timing.wake_latency_us));

    const double g = static_cast<double>(timing.turnaround_us);
    const double payload = static_cast<double>(radio.payload_us(payload_bytes));
    const double mac = static_cast<double>(radio.mac_packet_us);
    const double routing = static_cast<double>(radio.routing_packet_us);
    if (protocol == Protocol::TRome) {
        frame(t_w, e_w, mac);  // WUC ACK
        gap(t_w, e_w, g);
        frame(t_w, e_w, routing);  // R_REQ
        gap(t_w, e_w, g);
        frame(t_w, e_w, routing);  // R_REQ_ACK
        gap(t_w, e_w, g);
        frame(t_tx, e_tx, routing + payload);
    } else {
        frame(t_tx, e_tx, mac + payload);
    }
    gap(t_tx, e_tx, g);
    gap(t_tx, e_tx, static_cast<double>(timing.slot_handling_us));
    frame(t_tx, e_tx, mac);  // data ACK
    gap(t_tx, e_tx, g);

    // A failure costs the success path plus one guard spent listening.
    const double guard = static_cast<double>(timing.guard_us);
    const double e_guard = energy_mJ(em, RadioState::Rx, guard) + energy_mJ(em, RadioState::Processing, guard);
    CostModel out;
    out.time_us = {t_w, t_w + guard, t_w + guard, t_tx, t_tx + guard, t_tx + guard};
    out.energy_mJ = {e_w, e_w + e_guard, e_w + e_guard, e_tx, e_tx + e_guard, e_tx + e_guard};
    return out;
}

CostConstants batch_costs(const CostConstants& per_packet, std::size_t n) {
    if (n == 0) throw MarkovError(MarkovErrc::InvalidArgument, "batch must hold at least one packet");
    const double extra = static_cast<double>(n - 1) * per_packet.tx1;
    CostConstants c = per_packet;
    c.tx1 += extra;
    c.tx2 += extra;
    c.tx3 += extra;
    return c;
}

Expectation multi_packet_cost(Protocol protocol, const ModelParams& params, const CostModel& costs,
                              std::size_t n_packets) {
    if (n_packets == 0) throw MarkovError(MarkovErrc::InvalidArgument, "n_packets must be at least 1");
    Expectation out;
    if (protocol == Protocol::TRome) {
        for (std::size_t left = n_packets; left > 0;) {
            const auto batch = std::min<std::size_t>(left, codec::kMaxSlots);
            out.time_us += solve(build(protocol, params, batch_costs(costs.time_us, batch)));
            out.energy_mJ += solve(build(protocol, params, batch_costs(costs.energy_mJ, batch)));
            left -= batch;
        }
        return out;
    }
    const auto n = static_cast<double>(n_packets);
    out.time_us = n * solve(build(protocol, params, costs.time_us));
    out.energy_mJ = n * solve(build(protocol, params, costs.energy_mJ));
    return out;
}

}  // namespace trome::markov
