#pragma once

// Seeded discrete-event simulation of a line of nodes. The wake-up radio
// reaches only adjacent nodes; the main radio reaches every node.

#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "trome/airtime_energy.hpp"
#include "trome/markov_analyzer.hpp"
#include "trome/protocol_engine.hpp"

namespace trome::sim {

using energy::Micros;
using engine::ConfigError;
using markov::Protocol;

enum class LossMode { PerPacket, PerMetastep };

const char* to_string(LossMode m);
LossMode loss_mode_from_string(const std::string& s);  // throws ConfigError

struct LossModel {
    double p = 1.0;  // wake-up success
    double q = 1.0;  // main-radio packet success
    LossMode mode = LossMode::PerMetastep;

    void validate() const;
};

struct Topology {
    std::vector<int> node_ids;  // source first, sink last

    // Ids count down towards the sink, which gets id 10.
    static Topology line(int m);

    std::size_t size() const { return node_ids.size(); }
    std::size_t index_of(int id) const;  // throws ConfigError
    bool wakeup_reach(std::size_t a, std::size_t b) const { return a + 1 == b || b + 1 == a; }
    bool data_reach(std::size_t, std::size_t) const { return true; }
    engine::NodeConfig config_for(std::size_t index) const;
    void validate() const;
};

enum class TraceKind { TX, RX, STATE, DROP };
const char* to_string(TraceKind k);

struct TraceRecord {
    Micros time_us = 0;
    int node_id = 0;
    TraceKind kind = TraceKind::STATE;
    std::string summary;
};

struct AirFrame {
    int sender = 0;
    engine::FrameKind kind = engine::FrameKind::Wuc;
    int dest = 0;
    Micros start_us = 0;
    Micros end_us = 0;
    int ttl = -1;  // R_REQ only
    bool collided = false;
};

struct SimStats {
    std::optional<Micros> delivery_time_us;
    std::size_t submitted = 0;
    std::size_t delivered = 0;
    std::size_t duplicate_deliveries = 0;
    std::size_t permanent_failures = 0;
    std::size_t collisions = 0;
    std::uint64_t control_bytes = 0;
    std::uint64_t data_bytes_delivered = 0;
    bool all_asleep_at_end = true;
    Micros end_us = 0;
    std::size_t metasteps = 0;  // per-metastep mode only
};

struct SimTrace {
    std::vector<int> node_ids;
    std::vector<TraceRecord> records;
    std::vector<energy::RadioStateInterval> intervals;
    std::vector<AirFrame> frames;
    std::vector<std::uint32_t> delivered_ids;  // in delivery order
    std::vector<std::uint32_t> failed_ids;
    SimStats stats;

    energy::Breakdown breakdown(const energy::EnergyModel& em) const;
    double overhead() const;  // O_CD; throws EnergyError when nothing was delivered
    void write_jsonl(std::ostream& os) const;
    void write_summary_csv(std::ostream& os) const;
};

struct Flow {
    std::size_t source_index = 0;
    std::size_t packets = 1;
    Micros start_us = 0;
};

struct SimConfig {
    Topology topology = Topology::line(4);
    Protocol protocol = Protocol::TRome;
    engine::ProtocolParams params;
    LossModel loss;
    std::uint64_t seed = 1;
    std::vector<Flow> flows;  // empty: one flow from node 0 with params.packet_count
    bool record_steps = false;
    int trome_wake_exponent = 5;
    int ctp_relay_exponent = 2;
    std::optional<markov::CostConstants> metastep_costs;  // default: derived from timing
    Micros horizon_us = 3'600'000'000;

    void validate() const;
};

SimTrace run(const SimConfig& config);

// Application id of the k-th packet of a flow.
std::uint32_t payload_key(std::size_t flow, std::size_t k);

enum class StepKind { WakeupMeta, DataMeta, SinglePacket };
enum class Draw { Full, Partial, Fail };

Draw draw_success(const LossModel& loss, StepKind kind, std::mt19937_64& rng, int wake_exponent = 5);

// Busy iff a transmission other than the node's own is on air at `time`.
bool carrier_sense(Micros time, int node_id, const SimTrace& trace);

}  // namespace trome::sim
