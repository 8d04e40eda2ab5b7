#include "trome/protocol_engine.hpp"

#include <algorithm>
#include <tuple>

#include <fmt/format.h>

namespace trome::engine {

namespace {

using codec::Bytes;

// Classified view of an incoming main-radio frame.
struct Incoming {
    enum class Type { Unknown, WucAck, MacAck, MacData, Routed } type = Type::Unknown;
    codec::WucAckFrame wuc_ack{};
    codec::MacAckFrame mac_ack{};
    codec::MacDataFrame mac_data{};
    codec::RoutedFrame routed{};
};

Incoming classify(const Bytes& bytes, Protocol protocol) {
    Incoming in;
    try {
        if (bytes.size() == codec::kWucAckBytes && bytes[0] == codec::kProtocolId) {
            in.wuc_ack = codec::decode_wuc_ack(bytes);
            in.type = Incoming::Type::WucAck;
            return in;
        }
        // A routed body may exceed the plain MAC payload cap, so T-ROME data
        // frames skip the MAC decoder.
        if (protocol == Protocol::TRome && !bytes.empty() && bytes[0] == codec::kTagMacData) {
            in.routed = codec::decode_routed(bytes);
            in.type = Incoming::Type::Routed;
            return in;
        }
        auto mac = codec::decode_mac(bytes);
        if (const auto* ack = std::get_if<codec::MacAckFrame>(&mac)) {
            in.mac_ack = *ack;
            in.type = Incoming::Type::MacAck;
        } else {
            in.mac_data = std::get<codec::MacDataFrame>(mac);
            in.type = Incoming::Type::MacData;
        }
    } catch (const codec::CodecError&) {
        in.type = Incoming::Type::Unknown;
    }
    return in;
}

std::uint8_t u8(int v) { return static_cast<std::uint8_t>(v); }

class Machine {
public:
    Machine(const NodeState& s, Micros now, Protocol protocol, const ProtocolParams& params)
        : s_(s), now_(now), proto_(protocol), p_(params) {}

    StepResult run(const Event& e) {
        std::visit([this](const auto& ev) { on(ev); }, e);
        return {std::move(s_), std::move(out_)};
    }

private:
    Micros wuc() const { return p_.wuc_airtime(); }
    Micros mac() const { return p_.radio.mac_packet_us; }
    Micros rt() const { return p_.radio.routing_packet_us; }
    Micros g() const { return p_.timing.turnaround_us; }
    Micros guard() const { return p_.timing.guard_us; }
    Micros latency() const { return p_.timing.wake_latency_us; }
    int self() const { return s_.cfg.id; }

    void timer(Micros at, Pending what) {
        ++s_.timer_token;
        s_.pending = what;
        out_.push_back(SetTimer{at, s_.timer_token});
    }
    void cancel_timer() {
        ++s_.timer_token;
        s_.pending = Pending::None;
    }
    void radio(RadioMode m) { out_.push_back(SetRadio{m}); }

    void send(FrameKind kind, int dest, Bytes bytes, Micros airtime, std::size_t control, std::size_t payload) {
        out_.push_back(SendFrame{kind, dest, std::move(bytes), airtime, control, payload});
    }

    void send_wuc(int target, bool relay) {
        const auto frame = p_.wakeup_frame(target);
        out_.push_back(SendWuc{target, relay, codec::encode_wakeup(frame), wuc()});
    }

    void go_sleep() {
        cancel_timer();
        s_.phase = Phase::Sleep;
        out_.push_back(EnterSleep{});
    }

    // --- holder -----------------------------------------------------------

    void begin_attempt(bool handoff = false) {
        if (s_.queue.empty() || !s_.cfg.next_hop) {
            go_sleep();
            return;
        }
        // Only the immediate hand-off of just-received data skips carrier sensing.
        const bool originated = std::ranges::any_of(s_.queue, &Payload::originated);
        if (!handoff || originated) {
            cancel_timer();
            s_.phase = Phase::Lbt;
            out_.push_back(ProbeChannel{});
            return;
        }
        start_session();
    }

    void start_session() {
        s_.session_start = now_;
        s_.collected_acks.clear();
        s_.batch = 0;
        s_.batch_sent = 0;
        out_.push_back(ReserveChannel{});
        const int next = *s_.cfg.next_hop;
        switch (proto_) {
            case Protocol::TRome:
                send_wuc(next, false);
                radio(RadioMode::Delay);
                s_.phase = Phase::SendWakeup;
                timer(now_ + wuc() + latency(), Pending::OpenWucAckWindow);
                break;
            case Protocol::Naive:
                send_wuc(next, false);
                radio(RadioMode::Delay);
                s_.phase = Phase::SendData;
                s_.target = next;
                s_.batch = 1;
                timer(now_ + wuc() + latency(), Pending::SendData);
                break;
            case Protocol::CtpWur: {
                const bool relay = s_.cfg.two_hop.has_value();
                send_wuc(next, relay);
                radio(RadioMode::Delay);
                s_.phase = Phase::SendData;
                s_.target = relay ? *s_.cfg.two_hop : next;
                s_.batch = 1;
                timer(now_ + (relay ? 2 : 1) * (wuc() + latency()), Pending::SendData);
                break;
            }
        }
    }

    void fail_attempt() {
        out_.push_back(ReleaseChannel{});
        ++s_.retries;
        if (s_.retries > p_.retry_cap) {
            PermanentFailure pf;
            for (const auto& pl : s_.queue) pf.ids.push_back(pl.id);
            out_.push_back(std::move(pf));
            s_.queue.clear();
            s_.retries = 0;
            go_sleep();
            return;
        }
        begin_attempt();
    }

    Micros ack_window_start(int k) const {
        return s_.session_start + k * p_.trome_step_us() - g() - rt();
    }
    Micros decision_time() const { return s_.session_start + s_.chain_len * p_.trome_step_us() - g(); }

    void send_rreq() {
        const auto slots = std::min<std::size_t>(s_.queue.size(), codec::kMaxSlots);
        s_.announced = slots;
        const codec::RoutedFrame f{u8(self()), u8(*s_.cfg.next_hop),
                                   codec::RoutingRequest{u8(static_cast<int>(slots)), u8(self()),
                                                         u8(s_.cfg.sink_id), u8(p_.ttl)},
                                   {}};
        send(FrameKind::RReq, *s_.cfg.next_hop, codec::encode_routed(f), rt(), 8, 0);
        radio(RadioMode::Delay);
        s_.phase = Phase::WaitRAck;
        s_.chain_len = std::min(p_.ttl, s_.cfg.hops_to_sink);
        s_.ack_window = 1;
        timer(ack_window_start(1), Pending::OpenRAckWindow);
    }

    void open_rack_window() {
        radio(RadioMode::Rx);
        if (s_.ack_window >= s_.chain_len) {
            timer(decision_time(), Pending::Decide);
            return;
        }
        const Micros close = std::min(ack_window_start(s_.ack_window) + rt() + guard(),
                                      ack_window_start(s_.ack_window + 1));
        timer(close, Pending::CloseRAckWindow);
    }

    void decide() {
        const auto need = std::min({s_.queue.size(), s_.announced, std::size_t{codec::kMaxSlots}});
        try {
            s_.target = decide_target(s_.collected_acks, need);
        } catch (const NoCapableTarget&) {
            fail_attempt();
            return;
        }
        const auto it = std::ranges::find(s_.collected_acks, s_.target, &AckSummary::node_id);
        s_.batch = std::min<std::size_t>(need, static_cast<std::size_t>(it->free_slots));
        s_.batch_sent = 0;
        radio(RadioMode::Process);
        s_.phase = Phase::SendData;
        timer(now_ + g(), Pending::SendData);
    }

    void send_data() {
        if (s_.queue.empty()) {
            close_session();
            return;
        }
        const Payload pl = s_.queue.front();
        const Bytes payload = make_payload(pl.id, pl.size);
        Micros air = 0;
        if (proto_ == Protocol::TRome) {
            const codec::RoutedFrame f{u8(self()), u8(s_.target), codec::RoutingData{u8(self()), u8(s_.cfg.sink_id), pl.size},
                                       payload};
            air = energy::frame_airtime(f, p_.radio);
            send(FrameKind::RData, s_.target, codec::encode_routed(f), air, 8, pl.size);
        } else {
            const codec::MacFrame f = codec::MacDataFrame{u8(self()), u8(s_.target), payload};
            air = energy::frame_airtime(f, p_.radio);
            send(FrameKind::MacData, s_.target, codec::encode_mac(std::get<codec::MacDataFrame>(f)), air,
                 codec::kMacDataHeaderBytes, pl.size);
        }
        radio(RadioMode::Delay);
        timer(now_ + air + g() + p_.timing.slot_handling_us, Pending::OpenDataAckWindow);
    }

    void on_data_ack() {
        const Payload pl = s_.queue.front();
        s_.queue.erase(s_.queue.begin());
        ++s_.batch_sent;
        s_.retries = 0;
        if (s_.target == s_.cfg.sink_id) out_.push_back(Confirmed{{pl.id}});
        radio(RadioMode::Process);
        const bool more = s_.batch_sent < s_.batch && !s_.queue.empty();
        timer(now_ + g(), more ? Pending::SendData : Pending::CloseSession);
    }

    void close_session() {
        out_.push_back(ReleaseChannel{});
        go_sleep();
        if (!s_.queue.empty()) begin_attempt();
    }

    // --- responder --------------------------------------------------------

    bool accepts_wakeup() const {
        switch (s_.phase) {
            case Phase::Sleep:
            case Phase::Lbt: return true;
            case Phase::RxWait:
                return s_.received == 0 && (s_.pending == Pending::OpenDataWindow || s_.pending == Pending::DataTimeout);
            default: return false;
        }
    }

    void expect_data(std::size_t count) {
        s_.expected = count;
        s_.received = 0;
    }

    void sleep_then_resume() {
        go_sleep();
        if (!s_.queue.empty()) begin_attempt();
    }

    std::size_t free_slots() const {
        const auto free = kQueueCapacity - std::min(kQueueCapacity, s_.queue.size());
        return std::min<std::size_t>(free, codec::kMaxSlots);
    }

    void on_rreq(const codec::RoutedFrame& f, const codec::RoutingRequest& req) {
        if (f.mac_dest != self() || s_.pending != Pending::RReqTimeout) return;
        s_.rreq = req;
        const int ttl_left = req.ttl > 0 ? req.ttl - 1 : 0;
        s_.forward = ttl_left > 0 && self() != req.r_dest_id && s_.cfg.next_hop.has_value();
        const int remaining = s_.forward ? std::min(ttl_left, s_.cfg.hops_to_sink) : 0;
        s_.data_at = now_ + g() + rt() + g() + remaining * p_.trome_step_us();
        expect_data(std::min<std::size_t>(req.slots, free_slots()));
        radio(RadioMode::Process);
        timer(now_ + g(), Pending::SendRReqAck);
    }

    void send_rreq_ack() {
        const int ttl_left = s_.rreq.ttl > 0 ? s_.rreq.ttl - 1 : 0;
        const codec::RoutedFrame f{u8(self()), s_.rreq.r_src_id,
                                   codec::RoutingReqAck{u8(ttl_left), 0, u8(static_cast<int>(free_slots()))}, {}};
        send(FrameKind::RReqAck, s_.rreq.r_src_id, codec::encode_routed(f), rt(), 8, 0);
        radio(RadioMode::Process);
        if (s_.forward) {
            timer(now_ + rt() + g(), Pending::SendRelayWuc);
        } else {
            timer(s_.data_at, Pending::OpenDataWindow);
        }
    }

    void send_fwd_req() {
        const int ttl_left = s_.rreq.ttl - 1;
        const codec::RoutedFrame f{u8(self()), u8(*s_.cfg.next_hop),
                                   codec::RoutingRequest{s_.rreq.slots, s_.rreq.r_src_id, s_.rreq.r_dest_id, u8(ttl_left)},
                                   {}};
        send(FrameKind::RReq, *s_.cfg.next_hop, codec::encode_routed(f), rt(), 8, 0);
        radio(RadioMode::Sleep);
        s_.phase = Phase::RxWait;
        timer(s_.data_at, Pending::OpenDataWindow);
    }

    void on_data(int mac_src, int mac_dest, const Bytes& payload) {
        if (mac_dest != self() || s_.pending != Pending::DataTimeout || payload.empty()) return;
        const auto id = payload_id(payload);
        if (s_.cfg.is_sink()) {
            if (s_.delivered.insert(id).second) out_.push_back(DeliverToApp{{id}});
        } else if (std::ranges::find(s_.queue, id, &Payload::id) == s_.queue.end() &&
                   s_.queue.size() < kQueueCapacity) {
            s_.queue.push_back(Payload{id, static_cast<std::uint8_t>(payload.size()), false});
        }
        ++s_.received;
        s_.data_sender = mac_src;
        radio(RadioMode::Process);
        timer(now_ + g() + p_.timing.slot_handling_us, Pending::SendMacAck);
    }

    // A complete batch is handed off at once; a batch cut short by a timeout
    // goes through carrier sensing like any other new attempt.
    void finish_receive(bool complete) {
        s_.received = 0;
        if (s_.cfg.is_sink() || s_.queue.empty()) {
            go_sleep();
            return;
        }
        s_.phase = Phase::Sleep;
        begin_attempt(complete);
    }

    // --- event handlers ---------------------------------------------------

    void on(const AppSubmit& e) {
        PermanentFailure overflow;
        for (auto pl : e.payloads) {
            pl.originated = true;
            if (s_.queue.size() < kQueueCapacity)
                s_.queue.push_back(pl);
            else
                overflow.ids.push_back(pl.id);
        }
        if (!overflow.ids.empty()) out_.push_back(std::move(overflow));
        if (s_.phase == Phase::Sleep) begin_attempt();
    }

    void on(const ChannelProbed& e) {
        if (s_.phase != Phase::Lbt) return;
        if (e.busy) {
            const auto d = backoff_duration(s_.cfg, p_);
            out_.push_back(Backoff{d});
            timer(now_ + d, Pending::Probe);
            return;
        }
        start_session();
    }

    void on(const WakeUpDetected& e) {
        if (!accepts_wakeup()) return;
        s_.waker = e.from;
        s_.phase = Phase::RxWait;
        s_.received = 0;
        radio(RadioMode::Process);
        switch (proto_) {
            case Protocol::TRome:
                timer(now_ + latency(), Pending::SendWucAck);
                break;
            case Protocol::Naive:
                expect_data(1);
                timer(now_ + latency(), Pending::OpenDataWindow);
                break;
            case Protocol::CtpWur:
                if (e.relay && s_.cfg.next_hop) {
                    timer(now_ + latency(), Pending::CtpForward);
                } else {
                    expect_data(1);
                    timer(now_ + latency(), Pending::OpenDataWindow);
                }
                break;
        }
    }

    void on(const FrameReceived& e) {
        const Incoming in = classify(e.bytes, proto_);
        switch (in.type) {
            case Incoming::Type::Unknown: return;
            case Incoming::Type::WucAck:
                if (s_.pending == Pending::WucAckTimeout && s_.cfg.next_hop &&
                    in.wuc_ack.receiver_id == *s_.cfg.next_hop) {
                    radio(RadioMode::Process);
                    timer(now_ + g(), s_.phase == Phase::RelayFwd ? Pending::SendFwdReq : Pending::SendRReq);
                }
                return;
            case Incoming::Type::MacAck:
                if (s_.pending == Pending::DataAckTimeout && in.mac_ack.dest_id == self() &&
                    in.mac_ack.src_id == s_.target)
                    on_data_ack();
                return;
            case Incoming::Type::MacData:
                on_data(in.mac_data.src_id, in.mac_data.dest_id, in.mac_data.payload);
                return;
            case Incoming::Type::Routed: break;
        }
        const auto& f = in.routed;
        if (const auto* req = std::get_if<codec::RoutingRequest>(&f.routing)) {
            on_rreq(f, *req);
        } else if (const auto* ack = std::get_if<codec::RoutingReqAck>(&f.routing)) {
            if (s_.phase != Phase::WaitRAck || f.mac_dest != self()) return;
            if (std::ranges::find(s_.collected_acks, int{f.mac_src}, &AckSummary::node_id) == s_.collected_acks.end())
                s_.collected_acks.push_back({f.mac_src, p_.ttl - ack->current_ttl, ack->free_slots, ack->lqi});
            radio(RadioMode::Delay);
        } else {
            on_data(f.mac_src, f.mac_dest, f.payload);
        }
    }

    void on(const TimerFired& e) {
        if (e.token != s_.timer_token || s_.pending == Pending::None) return;
        const Pending what = s_.pending;
        s_.pending = Pending::None;
        switch (what) {
            case Pending::None: return;
            case Pending::Probe: out_.push_back(ProbeChannel{}); return;
            case Pending::OpenWucAckWindow:
                radio(RadioMode::Rx);
                timer(now_ + mac() + guard(), Pending::WucAckTimeout);
                return;
            case Pending::WucAckTimeout:
                if (s_.phase == Phase::RelayFwd) {
                    radio(RadioMode::Sleep);
                    s_.phase = Phase::RxWait;
                    timer(s_.data_at, Pending::OpenDataWindow);
                } else {
                    fail_attempt();
                }
                return;
            case Pending::SendRReq: send_rreq(); return;
            case Pending::OpenRAckWindow: open_rack_window(); return;
            case Pending::CloseRAckWindow:
                radio(RadioMode::Delay);
                ++s_.ack_window;
                timer(ack_window_start(s_.ack_window), Pending::OpenRAckWindow);
                return;
            case Pending::Decide: decide(); return;
            case Pending::SendData: send_data(); return;
            case Pending::OpenDataAckWindow:
                radio(RadioMode::Rx);
                timer(now_ + mac() + guard(), Pending::DataAckTimeout);
                return;
            case Pending::DataAckTimeout: fail_attempt(); return;
            case Pending::CloseSession: close_session(); return;
            case Pending::SendWucAck: {
                const auto bytes = codec::encode_wuc_ack({codec::kProtocolId, static_cast<std::uint16_t>(self())});
                send(FrameKind::WucAck, s_.waker, bytes, mac(), codec::kWucAckBytes, 0);
                radio(RadioMode::Process);
                timer(now_ + mac() + g(), Pending::OpenRReqWindow);
                return;
            }
            case Pending::OpenRReqWindow:
                radio(RadioMode::Rx);
                timer(now_ + rt() + guard(), Pending::RReqTimeout);
                return;
            case Pending::RReqTimeout: sleep_then_resume(); return;
            case Pending::SendRReqAck: send_rreq_ack(); return;
            case Pending::SendRelayWuc:
                send_wuc(*s_.cfg.next_hop, false);
                radio(RadioMode::Delay);
                s_.phase = Phase::RelayFwd;
                timer(now_ + wuc() + latency(), Pending::OpenWucAckWindow);
                return;
            case Pending::SendFwdReq: send_fwd_req(); return;
            case Pending::CtpForward:
                send_wuc(*s_.cfg.next_hop, false);
                radio(RadioMode::Sleep);
                go_sleep_after_tx();
                return;
            case Pending::OpenDataWindow:
                radio(RadioMode::Rx);
                s_.phase = Phase::RxWait;
                timer(now_ + p_.data_airtime(proto_) + guard(), Pending::DataTimeout);
                return;
            case Pending::DataTimeout:
                if (s_.received > 0)
                    finish_receive(false);
                else
                    sleep_then_resume();
                return;
            case Pending::SendMacAck: {
                const auto bytes = codec::encode_mac(codec::MacAckFrame{u8(self()), u8(s_.data_sender)});
                send(FrameKind::MacAck, s_.data_sender, bytes, mac(), codec::kMacAckBytes, 0);
                radio(RadioMode::Process);
                timer(now_ + mac() + g(), s_.received < s_.expected ? Pending::OpenDataWindow : Pending::FinishReceive);
                return;
            }
            case Pending::FinishReceive: finish_receive(true); return;
        }
    }

    void go_sleep_after_tx() {
        cancel_timer();
        s_.phase = Phase::Sleep;
        if (!s_.queue.empty()) begin_attempt();
    }

    NodeState s_;
    Micros now_;
    Protocol proto_;
    const ProtocolParams& p_;
    std::vector<Action> out_;
};

}  // namespace

void ProtocolParams::validate() const {
    try {
        timing.validate();
        radio.validate();
        (void)codec::encode_wakeup(wakeup_frame(0));
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    if (ttl < 1 || ttl > 255) throw ConfigError("ttl must lie in 1..255");
    if (retry_cap < 0) throw ConfigError("retry_cap must be non-negative");
    if (backoff_base_us <= 0 || backoff_step_us < 0) throw ConfigError("backoff must be positive");
    if (payload_bytes < kMinPayload || payload_bytes > kMaxPayload)
        throw ConfigError(fmt::format("payload must lie in 4..{} bytes", codec::kMaxPayload));
    if (packet_count < 1) throw ConfigError("packet_count must be at least 1");
}

codec::WakeUpFrame ProtocolParams::wakeup_frame(int logical_id) const {
    return codec::WakeUpFrame{carrier_burst_bytes, preamble_bytes, {static_cast<std::uint8_t>(logical_id)}};
}

Micros ProtocolParams::wuc_airtime() const { return energy::frame_airtime(wakeup_frame(0), radio); }

Micros ProtocolParams::data_airtime(Protocol protocol) const {
    const Micros header = protocol == Protocol::TRome ? radio.routing_packet_us : radio.mac_packet_us;
    return header + radio.payload_us(payload_bytes);
}

Micros ProtocolParams::trome_step_us() const {
    return wuc_airtime() + timing.wake_latency_us + radio.mac_packet_us + 2 * radio.routing_packet_us +
           3 * timing.turnaround_us;
}

const char* to_string(Phase p) {
    switch (p) {
        case Phase::Sleep: return "SLEEP";
        case Phase::Lbt: return "LBT";
        case Phase::SendWakeup: return "SEND_WAKEUP";
        case Phase::SendRReq: return "SEND_R_REQ";
        case Phase::WaitRAck: return "WAIT_R_ACK";
        case Phase::SendData: return "SEND_DATA";
        case Phase::RelayFwd: return "RELAY_FWD";
        case Phase::RxWait: return "RX_WAIT";
    }
    return "?";
}

const char* to_string(FrameKind k) {
    switch (k) {
        case FrameKind::Wuc: return "WUC";
        case FrameKind::WucAck: return "WUC_ACK";
        case FrameKind::RReq: return "R_REQ";
        case FrameKind::RReqAck: return "R_REQ_ACK";
        case FrameKind::RData: return "R_DATA";
        case FrameKind::MacData: return "DATA";
        case FrameKind::MacAck: return "ACK";
    }
    return "?";
}

std::string describe(const Event& e) {
    return std::visit(
        [](const auto& ev) -> std::string {
            using T = std::decay_t<decltype(ev)>;
            if constexpr (std::is_same_v<T, AppSubmit>) return fmt::format("AppSubmit({})", ev.payloads.size());
            else if constexpr (std::is_same_v<T, WakeUpDetected>)
                return fmt::format("WakeUp(from={}{})", ev.from, ev.relay ? ",relay" : "");
            else if constexpr (std::is_same_v<T, FrameReceived>) return fmt::format("Frame({}B)", ev.bytes.size());
            else if constexpr (std::is_same_v<T, TimerFired>) return fmt::format("Timer({})", ev.token);
            else return fmt::format("Probed({})", ev.busy ? "busy" : "free");
        },
        e);
}

std::string describe(const Action& a) {
    return std::visit(
        [](const auto& ac) -> std::string {
            using T = std::decay_t<decltype(ac)>;
            if constexpr (std::is_same_v<T, ProbeChannel>) return "Probe";
            else if constexpr (std::is_same_v<T, SendWuc>) return fmt::format("SendWuc({})", ac.target);
            else if constexpr (std::is_same_v<T, SendFrame>) return fmt::format("Send({}->{})", to_string(ac.kind), ac.dest);
            else if constexpr (std::is_same_v<T, SetTimer>) return fmt::format("Timer@{}", ac.at);
            else if constexpr (std::is_same_v<T, SetRadio>) return fmt::format("Radio({})", static_cast<int>(ac.mode));
            else if constexpr (std::is_same_v<T, EnterSleep>) return "Sleep";
            else if constexpr (std::is_same_v<T, DeliverToApp>) return fmt::format("Deliver({})", ac.ids.size());
            else if constexpr (std::is_same_v<T, Backoff>) return fmt::format("Backoff({})", ac.duration);
            else if constexpr (std::is_same_v<T, ReserveChannel>) return "Reserve";
            else if constexpr (std::is_same_v<T, ReleaseChannel>) return "Release";
            else if constexpr (std::is_same_v<T, Confirmed>) return fmt::format("Confirmed({})", ac.ids.size());
            else return fmt::format("PermanentFailure({})", ac.ids.size());
        },
        a);
}

StepResult step(const NodeState& state, const Event& event, Micros now, Protocol protocol,
                const ProtocolParams& params) {
    return Machine(state, now, protocol, params).run(event);
}

int decide_target(const std::vector<AckSummary>& acks, std::size_t need) {
    auto pick = [&](std::size_t min_slots) -> const AckSummary* {
        const AckSummary* best = nullptr;
        for (const auto& a : acks) {
            if (a.free_slots < 0 || static_cast<std::size_t>(a.free_slots) < min_slots) continue;
            if (!best || std::tuple(a.hop_distance, a.free_slots, -a.node_id) >
                             std::tuple(best->hop_distance, best->free_slots, -best->node_id))
                best = &a;
        }
        return best;
    };
    if (const auto* a = pick(std::max<std::size_t>(need, 1))) return a->node_id;
    if (const auto* a = pick(1)) return a->node_id;
    throw NoCapableTarget();
}

Micros backoff_duration(const NodeConfig& node, const ProtocolParams& params) {
    const int rank = std::max(0, node.hops_to_sink - 1);
    return params.backoff_base_us + rank * params.backoff_step_us;
}

codec::Bytes make_payload(std::uint32_t id, std::size_t size) {
    codec::Bytes out(size, 0xA5);
    for (std::size_t k = 0; k < 4 && k < size; ++k) out[k] = static_cast<std::uint8_t>(id >> (8 * k));
    return out;
}

std::uint32_t payload_id(codec::ByteView payload) {
    std::uint32_t id = 0;
    for (std::size_t k = 0; k < 4 && k < payload.size(); ++k) id |= std::uint32_t{payload[k]} << (8 * k);
    return id;
}

}  // namespace trome::engine
