#include "trome/channel_sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

namespace trome::sim {

std::uint32_t payload_key(std::size_t flow, std::size_t k) {
    return static_cast<std::uint32_t>(flow * 100000 + k + 1);
}

namespace {

using engine::FrameKind;
using engine::RadioMode;
using energy::RadioState;

// ---------------------------------------------------------------------------
// Per-metastep walk over the meta-chain, one draw per meta-step.

class MetaWalker {
public:
    MetaWalker(const SimConfig& c, std::mt19937_64& rng) : c_(c), rng_(rng) {}

    // Expected-cost sample for moving one batch from node 1 to node m.
    double walk(const markov::CostConstants& k) {
        const int m = static_cast<int>(c_.topology.size());
        int holder = 1;
        double t = 0;
        while (holder < m) {
            int to = holder;
            switch (c_.protocol) {
                case Protocol::TRome: to = trome_chain(holder, m, k, t); break;
                case Protocol::Naive: to = single_wake(holder, k, t); break;
                case Protocol::CtpWur: to = ctp_wake(holder, m, k, t); break;
            }
            if (to == holder) continue;
            ++steps;
            switch (draw_success(c_.loss, StepKind::DataMeta, rng_)) {
                case Draw::Full: t += k.tx1; holder = to; break;
                case Draw::Partial: t += k.tx2; break;
                case Draw::Fail: t += k.tx3; break;
            }
        }
        return t;
    }

    std::size_t steps = 0;

private:
    // Returns the node the data goes to, or `holder` to restart.
    int trome_chain(int holder, int m, const markov::CostConstants& k, double& t) {
        int awake = holder;
        for (;;) {
            ++steps;
            const Draw d = draw_success(c_.loss, StepKind::WakeupMeta, rng_, c_.trome_wake_exponent);
            if (d == Draw::Full) {
                t += k.w1;
                ++awake;
                if (awake == m || awake - holder == c_.params.ttl) return awake;
                continue;
            }
            t += d == Draw::Partial ? k.w2 : k.w3;
            return awake;
        }
    }

    int single_wake(int holder, const markov::CostConstants& k, double& t) {
        ++steps;
        if (draw_success(c_.loss, StepKind::WakeupMeta, rng_, 0) == Draw::Full) {
            t += k.w1;
            return holder + 1;
        }
        t += k.w3;
        return holder;
    }

    int ctp_wake(int holder, int m, const markov::CostConstants& k, double& t) {
        if (m - holder < 2) return single_wake(holder, k, t);
        if (single_wake(holder, k, t) == holder) return holder;
        ++steps;
        switch (draw_success(c_.loss, StepKind::WakeupMeta, rng_, c_.ctp_relay_exponent)) {
            case Draw::Full: t += k.w1; return holder + 2;
            case Draw::Partial: t += k.w2; return holder;
            case Draw::Fail: t += k.w3; return holder;
        }
        return holder;
    }

    const SimConfig& c_;
    std::mt19937_64& rng_;
};

SimTrace run_metastep(const SimConfig& c) {
    std::mt19937_64 rng(c.seed);
    const auto per_packet = c.metastep_costs
                                ? *c.metastep_costs
                                : markov::default_costs(c.protocol, c.params.payload_bytes, c.params.timing,
                                                        c.params.radio)
                                      .time_us;
    MetaWalker walker(c, rng);
    const std::size_t n = c.flows.empty() ? c.params.packet_count : c.flows.front().packets;
    double total = 0;
    if (c.protocol == Protocol::TRome) {
        for (std::size_t left = n; left > 0;) {
            const auto batch = std::min<std::size_t>(left, codec::kMaxSlots);
            total += walker.walk(markov::batch_costs(per_packet, batch));
            left -= batch;
        }
    } else {
        for (std::size_t k = 0; k < n; ++k) total += walker.walk(per_packet);
    }

    SimTrace trace;
    trace.node_ids = c.topology.node_ids;
    trace.stats.submitted = n;
    trace.stats.delivered = n;
    for (std::size_t k = 0; k < n; ++k) trace.delivered_ids.push_back(payload_key(0, k));
    trace.stats.delivery_time_us = static_cast<Micros>(std::llround(total));
    trace.stats.end_us = *trace.stats.delivery_time_us;
    trace.stats.metasteps = walker.steps;
    trace.stats.data_bytes_delivered = n * c.params.payload_bytes;
    return trace;
}

// ---------------------------------------------------------------------------
// Per-packet discrete-event simulation driving the protocol engines.

struct NodeRuntime {
    engine::NodeState state;
    RadioMode mode = RadioMode::Sleep;
    Micros since = 0;     // start of the current mode interval
    Micros tx_until = 0;  // end of the ongoing transmission
};

struct QueuedEvent {
    Micros time = 0;
    int cls = 0;  // frame ends before timers at the same instant
    int node_id = 0;
    std::uint64_t seq = 0;
    std::size_t node = 0;
    enum class Type { Engine, FrameEnd, Probe } type = Type::Engine;
    engine::Event event;
    std::size_t frame = 0;

    bool operator>(const QueuedEvent& o) const {
        return std::tie(time, cls, node_id, seq) > std::tie(o.time, o.cls, o.node_id, o.seq);
    }
};

RadioState state_of(RadioMode m) {
    switch (m) {
        case RadioMode::Sleep: return RadioState::Sleep;
        case RadioMode::Rx: return RadioState::Rx;
        case RadioMode::Delay: return RadioState::DelayIdle;
        case RadioMode::Process: return RadioState::Processing;
    }
    return RadioState::Sleep;
}

class Simulator {
public:
    explicit Simulator(const SimConfig& c) : c_(c), rng_(c.seed), uni_(0.0, 1.0) {
        trace_.node_ids = c.topology.node_ids;
        for (std::size_t k = 0; k < c.topology.size(); ++k)
            nodes_.push_back(NodeRuntime{engine::NodeState::initial(c.topology.config_for(k))});
        flows_ = c.flows.empty() ? std::vector<Flow>{Flow{0, c.params.packet_count, 0}} : c.flows;
        sequential_ = c.protocol != Protocol::TRome;
        next_packet_.assign(flows_.size(), 0);
    }

    SimTrace run() {
        for (std::size_t f = 0; f < flows_.size(); ++f) {
            trace_.stats.submitted += flows_[f].packets;
            submit(f, flows_[f].start_us, sequential_ ? 1 : flows_[f].packets);
        }
        Micros now = 0;
        while (!queue_.empty()) {
            auto ev = queue_.top();
            queue_.pop();
            if (ev.time > c_.horizon_us) break;
            now = ev.time;
            switch (ev.type) {
                case QueuedEvent::Type::Engine: feed(ev.node, ev.event, now); break;
                case QueuedEvent::Type::FrameEnd: frame_end(ev.frame, now); break;
                case QueuedEvent::Type::Probe: probe(ev.node, now); break;
            }
        }
        finish(now);
        return std::move(trace_);
    }

private:
    void push(QueuedEvent ev) {
        ev.seq = seq_++;
        ev.node_id = nodes_[ev.node].state.cfg.id;
        queue_.push(std::move(ev));
    }

    void push_engine(std::size_t node, Micros at, engine::Event e) {
        QueuedEvent ev;
        ev.time = at;
        ev.cls = 1;
        ev.node = node;
        ev.type = QueuedEvent::Type::Engine;
        ev.event = std::move(e);
        push(std::move(ev));
    }

    void submit(std::size_t flow, Micros at, std::size_t count) {
        engine::AppSubmit sub;
        auto& next = next_packet_[flow];
        for (std::size_t k = 0; k < count && next < flows_[flow].packets; ++k, ++next) {
            const auto id = payload_key(flow, next);
            flow_of_[id] = flow;
            sub.payloads.push_back({id, static_cast<std::uint8_t>(c_.params.payload_bytes), true});
        }
        if (!sub.payloads.empty()) push_engine(flows_[flow].source_index, at, std::move(sub));
    }

    void resolved(std::uint32_t id, Micros at) {
        if (!resolved_.insert(id).second || !sequential_) return;
        const auto it = flow_of_.find(id);
        if (it != flow_of_.end()) submit(it->second, at, 1);
    }

    void record(Micros t, int node, TraceKind kind, std::string summary) {
        trace_.records.push_back({t, node, kind, std::move(summary)});
    }

    // Radio bookkeeping. A mode change during a transmission takes effect
    // when the transmission ends.
    void set_mode(NodeRuntime& n, RadioMode mode, Micros t) {
        if (t < n.tx_until) {
            n.mode = mode;
            return;
        }
        if (mode == n.mode) return;
        close_interval(n, t);
        n.mode = mode;
        n.since = t;
    }

    void close_interval(NodeRuntime& n, Micros t) {
        if (t > n.since) trace_.intervals.push_back({n.state.cfg.id, state_of(n.mode), n.since, t});
        n.since = std::max(n.since, t);
    }

    void transmit(std::size_t idx, Micros t, Micros airtime, RadioState tx_state, AirFrame frame) {
        auto& n = nodes_[idx];
        if (t < n.tx_until) {
            record(t, n.state.cfg.id, TraceKind::DROP, "tx while transmitting");
            return;
        }
        close_interval(n, t);
        const Micros cal = c_.params.radio.calibration_us;
        trace_.intervals.push_back({n.state.cfg.id, RadioState::Calibrate, t, t + cal});
        trace_.intervals.push_back({n.state.cfg.id, tx_state, t + cal, t + airtime});
        n.since = t + airtime;
        n.tx_until = t + airtime;
        frame.start_us = t;
        frame.end_us = t + airtime;
        trace_.frames.push_back(frame);
        record(t, frame.sender, TraceKind::TX, fmt::format("{}->{}", engine::to_string(frame.kind), frame.dest));

        QueuedEvent ev;
        ev.time = t + airtime;
        ev.cls = 0;
        ev.node = idx;
        ev.type = QueuedEvent::Type::FrameEnd;
        ev.frame = trace_.frames.size() - 1;
        push(std::move(ev));
    }

    bool reserved_by_other(std::size_t idx) const {
        return std::ranges::any_of(reservations_, [idx](std::size_t r) { return r != idx; });
    }

    void probe(std::size_t idx, Micros t) {
        const bool busy = carrier_sense(t, nodes_[idx].state.cfg.id, trace_) || reserved_by_other(idx);
        feed(idx, engine::ChannelProbed{busy}, t);
    }

    bool overlaps(const AirFrame& a, const AirFrame& b) const {
        return a.start_us < b.end_us && b.start_us < a.end_us;
    }

    bool collided(std::size_t fi) {
        auto& f = trace_.frames[fi];
        for (std::size_t k = 0; k < trace_.frames.size(); ++k) {
            if (k != fi && overlaps(trace_.frames[k], f)) {
                if (!f.collided) ++trace_.stats.collisions;
                f.collided = true;
            }
        }
        return f.collided;
    }

    bool listening(const NodeRuntime& n, const AirFrame& f) const {
        return n.mode == RadioMode::Rx && n.since <= f.start_us && n.tx_until <= f.start_us;
    }

    void frame_end(std::size_t fi, Micros t) {
        const bool lost_to_collision = collided(fi);
        const AirFrame f = trace_.frames[fi];
        const auto& bytes = frame_bytes_[fi];
        if (f.kind == FrameKind::Wuc) {
            const auto sender = c_.topology.index_of(f.sender);
            const auto target = c_.topology.index_of(f.dest);
            const auto& tn = nodes_[target];
            const bool ok = c_.topology.wakeup_reach(sender, target) && !lost_to_collision &&
                            tn.tx_until <= f.start_us && uni_(rng_) < c_.loss.p;
            if (!ok) {
                record(t, f.dest, TraceKind::DROP, "WUC");
                return;
            }
            record(t, f.dest, TraceKind::RX, "WUC");
            feed(target, engine::WakeUpDetected{f.sender, wuc_relay_[fi]}, t);
            return;
        }
        for (std::size_t k = 0; k < nodes_.size(); ++k) {
            auto& n = nodes_[k];
            if (n.state.cfg.id == f.sender) continue;
            if (!listening(n, f)) {
                if (n.state.cfg.id == f.dest) record(t, f.dest, TraceKind::DROP, fmt::format("{} not listening", engine::to_string(f.kind)));
                continue;
            }
            if (lost_to_collision || uni_(rng_) >= c_.loss.q) {
                record(t, n.state.cfg.id, TraceKind::DROP, engine::to_string(f.kind));
                continue;
            }
            record(t, n.state.cfg.id, TraceKind::RX, engine::to_string(f.kind));
            feed(k, engine::FrameReceived{bytes}, t);
        }
    }

    void feed(std::size_t idx, const engine::Event& e, Micros t) {
        auto& n = nodes_[idx];
        const auto before = n.state.phase;
        auto result = engine::step(n.state, e, t, c_.protocol, c_.params);
        n.state = std::move(result.state);
        if (c_.record_steps || before != n.state.phase) {
            std::string acts;
            for (const auto& a : result.actions) acts += (acts.empty() ? "" : ",") + engine::describe(a);
            record(t, n.state.cfg.id, TraceKind::STATE,
                   fmt::format("{} {}->{} [{}]", engine::describe(e), engine::to_string(before),
                               engine::to_string(n.state.phase), acts));
        }
        for (auto& a : result.actions) apply(idx, std::move(a), t);
    }

    void apply(std::size_t idx, engine::Action a, Micros t) {
        auto& n = nodes_[idx];
        const int id = n.state.cfg.id;
        std::visit(
            [&](auto& act) {
                using T = std::decay_t<decltype(act)>;
                if constexpr (std::is_same_v<T, engine::SendWuc>) {
                    trace_.stats.control_bytes +=
                        energy::wuc_control_bytes(c_.params.wakeup_frame(act.target));
                    frame_bytes_.push_back(act.image);
                    wuc_relay_.push_back(act.relay);
                    transmit(idx, t, act.airtime, RadioState::TxWuc, AirFrame{id, FrameKind::Wuc, act.target});
                } else if constexpr (std::is_same_v<T, engine::SendFrame>) {
                    trace_.stats.control_bytes += act.control_bytes;
                    AirFrame f{id, act.kind, act.dest};
                    if (act.kind == FrameKind::RReq) {
                        const auto routed = codec::decode_routed(act.bytes);
                        f.ttl = std::get<codec::RoutingRequest>(routed.routing).ttl;
                    }
                    frame_bytes_.push_back(std::move(act.bytes));
                    wuc_relay_.push_back(false);
                    transmit(idx, t, act.airtime, RadioState::TxData, f);
                } else if constexpr (std::is_same_v<T, engine::SetTimer>) {
                    push_engine(idx, std::max(act.at, t), engine::TimerFired{act.token});
                } else if constexpr (std::is_same_v<T, engine::SetRadio>) {
                    set_mode(n, act.mode, t);
                } else if constexpr (std::is_same_v<T, engine::EnterSleep>) {
                    set_mode(n, RadioMode::Sleep, t);
                } else if constexpr (std::is_same_v<T, engine::ProbeChannel>) {
                    QueuedEvent ev;
                    ev.time = t;
                    ev.cls = 1;
                    ev.node = idx;
                    ev.type = QueuedEvent::Type::Probe;
                    push(std::move(ev));
                } else if constexpr (std::is_same_v<T, engine::Backoff>) {
                    record(t, id, TraceKind::STATE, fmt::format("backoff {}", act.duration));
                } else if constexpr (std::is_same_v<T, engine::ReserveChannel>) {
                    reservations_.insert(idx);
                } else if constexpr (std::is_same_v<T, engine::ReleaseChannel>) {
                    reservations_.erase(idx);
                } else if constexpr (std::is_same_v<T, engine::DeliverToApp>) {
                    for (auto pid : act.ids) {
                        if (std::ranges::find(trace_.delivered_ids, pid) != trace_.delivered_ids.end()) {
                            ++trace_.stats.duplicate_deliveries;
                            continue;
                        }
                        trace_.delivered_ids.push_back(pid);
                        trace_.stats.data_bytes_delivered += c_.params.payload_bytes;
                        delivered_at_[pid] = t;
                    }
                } else if constexpr (std::is_same_v<T, engine::Confirmed>) {
                    const Micros done = t + c_.params.timing.turnaround_us;
                    for (auto pid : act.ids) {
                        confirmed_at_.try_emplace(pid, done);
                        resolved(pid, done);
                    }
                } else if constexpr (std::is_same_v<T, engine::PermanentFailure>) {
                    for (auto pid : act.ids) {
                        trace_.failed_ids.push_back(pid);
                        ++trace_.stats.permanent_failures;
                        resolved(pid, t);
                    }
                }
            },
            a);
    }

    void finish(Micros now) {
        Micros end = now;
        for (const auto& n : nodes_) end = std::max(end, n.tx_until);
        for (auto& n : nodes_) {
            if (n.state.phase != engine::Phase::Sleep || n.mode != RadioMode::Sleep)
                trace_.stats.all_asleep_at_end = false;
            close_interval(n, end);
        }
        trace_.stats.end_us = end;
        trace_.stats.delivered = trace_.delivered_ids.size();
        if (trace_.stats.delivered == trace_.stats.submitted && trace_.stats.submitted > 0) {
            Micros last = 0;
            for (auto pid : trace_.delivered_ids) {
                const auto it = confirmed_at_.find(pid);
                last = std::max(last, it != confirmed_at_.end() ? it->second : delivered_at_.at(pid));
            }
            trace_.stats.delivery_time_us = last;
        }
        std::ranges::stable_sort(trace_.records, {}, &TraceRecord::time_us);
    }

    const SimConfig& c_;
    std::mt19937_64 rng_;
    std::uniform_real_distribution<double> uni_;
    std::vector<NodeRuntime> nodes_;
    std::priority_queue<QueuedEvent, std::vector<QueuedEvent>, std::greater<>> queue_;
    std::uint64_t seq_ = 0;
    SimTrace trace_;
    std::vector<codec::Bytes> frame_bytes_;
    std::vector<bool> wuc_relay_;
    std::set<std::size_t> reservations_;
    std::vector<Flow> flows_;
    bool sequential_ = false;
    std::vector<std::size_t> next_packet_;
    std::map<std::uint32_t, std::size_t> flow_of_;
    std::set<std::uint32_t> resolved_;
    std::map<std::uint32_t, Micros> confirmed_at_;
    std::map<std::uint32_t, Micros> delivered_at_;
};

}  // namespace

const char* to_string(LossMode m) { return m == LossMode::PerPacket ? "per_packet" : "per_metastep"; }

LossMode loss_mode_from_string(const std::string& s) {
    if (s == "per_packet" || s == "PER_PACKET") return LossMode::PerPacket;
    if (s == "per_metastep" || s == "PER_METASTEP") return LossMode::PerMetastep;
    throw ConfigError(fmt::format("unknown loss mode '{}'", s));
}

const char* to_string(TraceKind k) {
    switch (k) {
        case TraceKind::TX: return "TX";
        case TraceKind::RX: return "RX";
        case TraceKind::STATE: return "STATE";
        case TraceKind::DROP: return "DROP";
    }
    return "?";
}

void LossModel::validate() const {
    if (!(p >= 0 && p <= 1 && q >= 0 && q <= 1)) throw ConfigError("p and q must lie in [0,1]");
}

Topology Topology::line(int m) {
    if (m < 2 || m > 200) throw ConfigError("a line needs 2..200 nodes");
    Topology t;
    for (int k = 0; k < m; ++k) t.node_ids.push_back(10 + (m - 1 - k));
    return t;
}

std::size_t Topology::index_of(int id) const {
    const auto it = std::ranges::find(node_ids, id);
    if (it == node_ids.end()) throw ConfigError(fmt::format("node {} not in topology", id));
    return static_cast<std::size_t>(it - node_ids.begin());
}

engine::NodeConfig Topology::config_for(std::size_t index) const {
    engine::NodeConfig cfg;
    cfg.id = node_ids.at(index);
    cfg.hops_to_sink = static_cast<int>(size() - 1 - index);
    cfg.sink_id = node_ids.back();
    if (index + 1 < size()) cfg.next_hop = node_ids[index + 1];
    if (index + 2 < size()) cfg.two_hop = node_ids[index + 2];
    return cfg;
}

void Topology::validate() const {
    if (node_ids.size() < 2) throw ConfigError("topology needs at least two nodes");
    std::set<int> seen;
    for (int id : node_ids) {
        if (id < 0 || id > 255) throw ConfigError("node ids must fit one byte");
        if (!seen.insert(id).second) throw ConfigError(fmt::format("duplicate node id {}", id));
    }
}

void SimConfig::validate() const {
    topology.validate();
    params.validate();
    loss.validate();
    if (loss.p * loss.q == 0 && loss.mode == LossMode::PerMetastep)
        throw ConfigError("p*q must be positive in per-metastep mode");
    for (const auto& f : flows) {
        if (f.source_index + 1 >= topology.size()) throw ConfigError("flow source must not be the sink");
        if (f.packets < 1) throw ConfigError("flow needs at least one packet");
        if (f.start_us < 0) throw ConfigError("flow start must be non-negative");
    }
    if (metastep_costs) metastep_costs->validate();
}

SimTrace run(const SimConfig& config) {
    config.validate();
    if (config.loss.mode == LossMode::PerMetastep) return run_metastep(config);
    return Simulator(config).run();
}

Draw draw_success(const LossModel& loss, StepKind kind, std::mt19937_64& rng, int wake_exponent) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double u = uni(rng);
    switch (kind) {
        case StepKind::WakeupMeta: {
            const double full = loss.p * std::pow(loss.q, wake_exponent);
            if (u < full) return Draw::Full;
            return u < loss.p ? Draw::Partial : Draw::Fail;
        }
        case StepKind::DataMeta:
            if (u < loss.q * loss.q) return Draw::Full;
            return u < loss.q ? Draw::Partial : Draw::Fail;
        case StepKind::SinglePacket: return u < loss.q ? Draw::Full : Draw::Fail;
    }
    return Draw::Fail;
}

bool carrier_sense(Micros time, int node_id, const SimTrace& trace) {
    return std::ranges::any_of(trace.frames, [&](const AirFrame& f) {
        return f.sender != node_id && f.start_us <= time && time < f.end_us;
    });
}

energy::Breakdown SimTrace::breakdown(const energy::EnergyModel& em) const {
    return energy::classify_intervals(intervals, em);
}

double SimTrace::overhead() const {
    return energy::overhead_ratio(stats.control_bytes * 8, stats.data_bytes_delivered * 8);
}

void SimTrace::write_jsonl(std::ostream& os) const {
    for (const auto& r : records) {
        nlohmann::json j{{"time_us", r.time_us}, {"node", r.node_id}, {"kind", to_string(r.kind)}, {"what", r.summary}};
        os << j.dump() << '\n';
    }
    nlohmann::json summary{{"submitted", stats.submitted},
                           {"delivered", stats.delivered},
                           {"duplicate_deliveries", stats.duplicate_deliveries},
                           {"permanent_failures", stats.permanent_failures},
                           {"collisions", stats.collisions},
                           {"control_bytes", stats.control_bytes},
                           {"data_bytes_delivered", stats.data_bytes_delivered},
                           {"metasteps", stats.metasteps},
                           {"end_us", stats.end_us}};
    summary["delivery_time_us"] = stats.delivery_time_us ? nlohmann::json(*stats.delivery_time_us) : nlohmann::json();
    os << nlohmann::json{{"summary", summary}}.dump() << '\n';
}

void SimTrace::write_summary_csv(std::ostream& os) const {
    os << "key,value\n";
    os << "delivery_time_us," << (stats.delivery_time_us ? std::to_string(*stats.delivery_time_us) : "") << '\n';
    os << "submitted," << stats.submitted << '\n';
    os << "delivered," << stats.delivered << '\n';
    os << "duplicate_deliveries," << stats.duplicate_deliveries << '\n';
    os << "permanent_failures," << stats.permanent_failures << '\n';
    os << "collisions," << stats.collisions << '\n';
    os << "control_bytes," << stats.control_bytes << '\n';
    os << "data_bytes_delivered," << stats.data_bytes_delivered << '\n';
    os << "end_us," << stats.end_us << '\n';
}

}  // namespace trome::sim
