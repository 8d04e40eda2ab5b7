#pragma once

// Airtime of frames, current per radio state, and per-node energy breakdowns.

#include <array>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>

#include "trome/frame_codec.hpp"

namespace trome::energy {

using Micros = std::int64_t;

enum class EnergyErrc { InvalidModel, ZeroData, OverlappingIntervals };

class EnergyError : public std::runtime_error {
public:
    EnergyError(EnergyErrc code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    EnergyErrc code() const noexcept { return code_; }

private:
    EnergyErrc code_;
};

struct RadioTimingModel {
    int bitrate_main_kbps = 250;
    Micros calibration_us = 799;
    Micros hw_framing_us = 991;
    Micros wuc_total_us = 6143;
    Micros wuc_tx_us = 5344;
    Micros mac_packet_us = 1247;
    Micros routing_packet_us = 1375;
    Micros payload_us_per_byte = 32;

    Micros payload_us(std::size_t bytes) const {
        return static_cast<Micros>(bytes) * payload_us_per_byte;
    }
    void validate() const;
};

// Node-side delays around the frames: wake-up latency of a woken node,
// turnaround between consecutive frames, and per-slot handling of a payload.
struct ProtocolTiming {
    Micros wake_latency_us = 4000;
    Micros turnaround_us = 400;
    Micros slot_handling_us = 1000;
    Micros guard_us = 2000;

    void validate() const;
};

struct EnergyModel {
    double voltage = 3.3;
    double i_tx_wuc_mA = 34.2;
    double i_tx_data_mA = 16.4;
    double i_rx_mA = 16.9;
    double i_cal_mA = 8.4;
    double i_mcu_run_mA = 4.0;
    double i_sleep_uA = 0.9;
    double i_wurx_uA = 3.0;
    double manchester_tx_derating = 0.8;

    void validate() const;
};

// Processing covers MCU-only work while the radio is off: packet handling on
// a responder, or waiting for a scheduled window. DelayIdle is an initiator
// waiting on its peers.
enum class RadioState { TxWuc, TxData, Rx, Calibrate, DelayIdle, Processing, Sleep };

const char* to_string(RadioState s);

struct RadioStateInterval {
    int node_id = 0;
    RadioState state = RadioState::Sleep;
    Micros start_us = 0;
    Micros end_us = 0;

    Micros duration() const { return end_us - start_us; }
};

// All airtimes include calibration.
Micros frame_airtime(const codec::WakeUpFrame& frame, const RadioTimingModel& t);
Micros frame_airtime(const codec::WucAckFrame& frame, const RadioTimingModel& t);
Micros frame_airtime(const codec::MacFrame& frame, const RadioTimingModel& t);
Micros frame_airtime(const codec::RoutedFrame& frame, const RadioTimingModel& t);

double current_mA(RadioState s, const EnergyModel& em);
double interval_energy(const RadioStateInterval& iv, const EnergyModel& em);

double overhead_ratio(std::uint64_t control_bits, std::uint64_t data_bits_delivered);

// Bytes charged to the control plane per frame. The wake-up call counts its
// on-air image plus the radio framing; other frames count protocol headers.
std::size_t wuc_control_bytes(const codec::WakeUpFrame& frame);

enum class Category { Wuc, Delay, Receive, Send, Processing, Sleep };
inline constexpr std::size_t kCategoryCount = 6;
const char* to_string(Category c);

struct CategoryTotals {
    std::array<Micros, kCategoryCount> time_us{};
    std::array<double, kCategoryCount> energy_mJ{};

    Micros time(Category c) const { return time_us[static_cast<std::size_t>(c)]; }
    double energy(Category c) const { return energy_mJ[static_cast<std::size_t>(c)]; }
    Micros total_time() const;
    double total_energy() const;
};

using Breakdown = std::map<int, CategoryTotals>;

// Calibration is charged to the category of the interval that follows it on
// the same node.
Breakdown classify_intervals(std::span<const RadioStateInterval> intervals, const EnergyModel& em);

// Columns: node_id,state,time_us,energy_mJ
void write_breakdown_csv(std::ostream& os, const Breakdown& b);

}  // namespace trome::energy
