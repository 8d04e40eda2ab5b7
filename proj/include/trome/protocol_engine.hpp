#pragma once

// Per-node protocol state machines. step() is a pure transition: it takes a
// node state and one event and returns the next state plus the actions the
// simulator has to carry out.

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "trome/airtime_energy.hpp"
#include "trome/frame_codec.hpp"
#include "trome/markov_analyzer.hpp"

namespace trome::engine {

using energy::Micros;
using markov::Protocol;

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NoCapableTarget : public std::runtime_error {
public:
    NoCapableTarget() : std::runtime_error("no responder can take a packet") {}
};

inline constexpr std::size_t kQueueCapacity = 64;

struct ProtocolParams {
    // The first four payload bytes carry the application id.
    static constexpr std::size_t kMinPayload = 4;
    static constexpr std::size_t kMaxPayload = codec::kMaxPayload;

    energy::ProtocolTiming timing;
    energy::RadioTimingModel radio;
    int carrier_burst_bytes = codec::kDefaultCarrierBurst;
    int preamble_bytes = codec::kDefaultPreamble;
    int ttl = 3;
    int retry_cap = 10;
    Micros backoff_base_us = 5000;
    Micros backoff_step_us = 5000;
    std::size_t payload_bytes = 100;
    std::size_t packet_count = 5;

    void validate() const;  // throws ConfigError

    codec::WakeUpFrame wakeup_frame(int logical_id) const;
    Micros wuc_airtime() const;
    Micros data_airtime(Protocol protocol) const;  // one data frame at payload_bytes
    Micros trome_step_us() const;                  // one wake-up hop of the chain
};

// Static routing on a line: every node knows its parent towards the sink.
struct NodeConfig {
    int id = 0;
    std::optional<int> next_hop;
    std::optional<int> two_hop;
    int hops_to_sink = 0;
    int sink_id = 0;

    bool is_sink() const { return hops_to_sink == 0; }
};

struct Payload {
    std::uint32_t id = 0;
    std::uint8_t size = 0;
    bool originated = false;
    friend bool operator==(const Payload&, const Payload&) = default;
};

struct AckSummary {
    int node_id = 0;
    int hop_distance = 0;
    int free_slots = 0;
    int lqi = 0;
};

// What the single pending timer of a node means when it fires.
enum class Pending {
    None,
    Probe,
    OpenWucAckWindow,
    WucAckTimeout,
    SendRReq,
    OpenRAckWindow,
    CloseRAckWindow,
    Decide,
    SendData,
    OpenDataAckWindow,
    DataAckTimeout,
    CloseSession,
    SendWucAck,
    OpenRReqWindow,
    RReqTimeout,
    SendRReqAck,
    SendRelayWuc,
    SendFwdReq,
    CtpForward,
    OpenDataWindow,
    DataTimeout,
    SendMacAck,
    FinishReceive,
};

enum class Phase { Sleep, Lbt, SendWakeup, SendRReq, WaitRAck, SendData, RelayFwd, RxWait };

const char* to_string(Phase p);

struct NodeState {
    NodeConfig cfg;
    Phase phase = Phase::Sleep;
    Pending pending = Pending::None;
    std::uint64_t timer_token = 0;
    std::vector<Payload> queue;
    int retries = 0;

    // holder side
    Micros session_start = 0;
    int chain_len = 0;
    int ack_window = 0;
    std::vector<AckSummary> collected_acks;
    int target = 0;
    std::size_t announced = 0;
    std::size_t batch = 0;
    std::size_t batch_sent = 0;

    // responder side
    int waker = 0;
    codec::RoutingRequest rreq{};
    bool forward = false;
    Micros data_at = 0;
    std::size_t expected = 0;
    std::size_t received = 0;
    int data_sender = 0;
    std::set<std::uint32_t> delivered;  // sink only

    static NodeState initial(const NodeConfig& cfg) {
        NodeState s;
        s.cfg = cfg;
        return s;
    }
};

// --- events --------------------------------------------------------------

struct AppSubmit {
    std::vector<Payload> payloads;
};
struct WakeUpDetected {
    int from = 0;
    bool relay = false;
};
struct FrameReceived {
    codec::Bytes bytes;
};
struct TimerFired {
    std::uint64_t token = 0;
};
struct ChannelProbed {
    bool busy = false;
};

using Event = std::variant<AppSubmit, WakeUpDetected, FrameReceived, TimerFired, ChannelProbed>;

std::string describe(const Event& e);

// --- actions -------------------------------------------------------------

enum class RadioMode { Sleep, Rx, Delay, Process };

enum class FrameKind { Wuc, WucAck, RReq, RReqAck, RData, MacData, MacAck };
const char* to_string(FrameKind k);

struct ProbeChannel {};
struct SendWuc {
    int target = 0;
    bool relay = false;
    codec::Bytes image;
    Micros airtime = 0;
};
struct SendFrame {
    FrameKind kind = FrameKind::MacAck;
    int dest = 0;
    codec::Bytes bytes;
    Micros airtime = 0;
    std::size_t control_bytes = 0;
    std::size_t payload_bytes = 0;
};
struct SetTimer {
    Micros at = 0;
    std::uint64_t token = 0;
};
struct SetRadio {
    RadioMode mode = RadioMode::Sleep;
};
struct EnterSleep {};
struct DeliverToApp {
    std::vector<std::uint32_t> ids;
};
struct Backoff {
    Micros duration = 0;
};
struct ReserveChannel {};
struct ReleaseChannel {};
// The sender got the final-hop ACK for these payloads.
struct Confirmed {
    std::vector<std::uint32_t> ids;
};
struct PermanentFailure {
    std::vector<std::uint32_t> ids;
};

using Action = std::variant<ProbeChannel, SendWuc, SendFrame, SetTimer, SetRadio, EnterSleep, DeliverToApp,
                            Backoff, ReserveChannel, ReleaseChannel, Confirmed, PermanentFailure>;

std::string describe(const Action& a);

struct StepResult {
    NodeState state;
    std::vector<Action> actions;
};

StepResult step(const NodeState& state, const Event& event, Micros now, Protocol protocol,
                const ProtocolParams& params);

// Picks the farthest responder with room for `need` packets, falling back to
// any responder with room for one. Ties: more free slots, then smaller id.
int decide_target(const std::vector<AckSummary>& acks, std::size_t need);

// Nodes nearer the sink back off for less time.
Micros backoff_duration(const NodeConfig& node, const ProtocolParams& params);

// Application payload: the id in the first four bytes, little-endian.
codec::Bytes make_payload(std::uint32_t id, std::size_t size);
std::uint32_t payload_id(codec::ByteView payload);

}  // namespace trome::engine
