#include "trome/airtime_energy.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <vector>

namespace trome::energy {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw EnergyError(EnergyErrc::InvalidModel, what);
}

Category category_of(RadioState s) {
    switch (s) {
        case RadioState::TxWuc: return Category::Wuc;
        case RadioState::TxData: return Category::Send;
        case RadioState::Rx: return Category::Receive;
        case RadioState::DelayIdle: return Category::Delay;
        case RadioState::Processing: return Category::Processing;
        case RadioState::Sleep:
        case RadioState::Calibrate: return Category::Sleep;
    }
    return Category::Sleep;
}

}  // namespace

void RadioTimingModel::validate() const {
    require(bitrate_main_kbps > 0 && calibration_us > 0 && hw_framing_us > 0 && wuc_tx_us > 0 &&
                mac_packet_us > 0 && routing_packet_us > 0 && payload_us_per_byte > 0,
            "timing constants must be positive");
    require(wuc_total_us == wuc_tx_us + calibration_us, "wuc_total_us must equal wuc_tx_us + calibration_us");
}

void ProtocolTiming::validate() const {
    require(wake_latency_us >= 0 && turnaround_us >= 0 && slot_handling_us >= 0 && guard_us > 0,
            "protocol delays must be non-negative and the guard positive");
}

void EnergyModel::validate() const {
    require(voltage > 0 && i_tx_wuc_mA > 0 && i_tx_data_mA > 0 && i_rx_mA > 0 && i_cal_mA > 0 &&
                i_mcu_run_mA > 0 && i_sleep_uA > 0 && i_wurx_uA > 0,
            "currents and voltage must be positive");
    require(manchester_tx_derating > 0 && manchester_tx_derating <= 1, "derating must lie in (0,1]");
}

const char* to_string(RadioState s) {
    switch (s) {
        case RadioState::TxWuc: return "TX_WUC";
        case RadioState::TxData: return "TX_DATA";
        case RadioState::Rx: return "RX";
        case RadioState::Calibrate: return "CALIBRATE";
        case RadioState::DelayIdle: return "DELAY_IDLE";
        case RadioState::Processing: return "PROCESSING";
        case RadioState::Sleep: return "SLEEP";
    }
    return "?";
}

const char* to_string(Category c) {
    switch (c) {
        case Category::Wuc: return "WUC";
        case Category::Delay: return "Delay";
        case Category::Receive: return "Receive";
        case Category::Send: return "Send";
        case Category::Processing: return "Processing";
        case Category::Sleep: return "Sleep";
    }
    return "?";
}

Micros frame_airtime(const codec::WakeUpFrame& frame, const RadioTimingModel& t) {
    const auto nominal = codec::WakeUpFrame{}.image_size();
    const auto extra = static_cast<Micros>(frame.image_size()) - static_cast<Micros>(nominal);
    return t.wuc_total_us + extra * t.payload_us_per_byte;
}

Micros frame_airtime(const codec::WucAckFrame&, const RadioTimingModel& t) { return t.mac_packet_us; }

Micros frame_airtime(const codec::MacFrame& frame, const RadioTimingModel& t) {
    if (const auto* d = std::get_if<codec::MacDataFrame>(&frame))
        return t.mac_packet_us + t.payload_us(d->payload.size());
    return t.mac_packet_us;
}

Micros frame_airtime(const codec::RoutedFrame& frame, const RadioTimingModel& t) {
    return t.routing_packet_us + t.payload_us(frame.payload.size());
}

double current_mA(RadioState s, const EnergyModel& em) {
    switch (s) {
        case RadioState::TxWuc: return em.i_tx_wuc_mA * em.manchester_tx_derating + em.i_mcu_run_mA;
        case RadioState::TxData: return em.i_tx_data_mA + em.i_mcu_run_mA;
        case RadioState::Rx: return em.i_rx_mA + em.i_mcu_run_mA;
        case RadioState::Calibrate: return em.i_cal_mA + em.i_mcu_run_mA;
        case RadioState::DelayIdle:
        case RadioState::Processing: return em.i_mcu_run_mA;
        case RadioState::Sleep: return (em.i_sleep_uA + em.i_wurx_uA) / 1000.0;
    }
    return 0.0;
}

double interval_energy(const RadioStateInterval& iv, const EnergyModel& em) {
    // V * mA * us = nJ; scale to mJ.
    return em.voltage * current_mA(iv.state, em) * static_cast<double>(iv.duration()) * 1e-6;
}

double overhead_ratio(std::uint64_t control_bits, std::uint64_t data_bits_delivered) {
    if (data_bits_delivered == 0) throw EnergyError(EnergyErrc::ZeroData, "no data bits delivered");
    return static_cast<double>(control_bits) / static_cast<double>(data_bits_delivered);
}

std::size_t wuc_control_bytes(const codec::WakeUpFrame& frame) {
    return frame.image_size() + codec::kRadioFramingBytes;
}

Micros CategoryTotals::total_time() const {
    Micros sum = 0;
    for (auto v : time_us) sum += v;
    return sum;
}

double CategoryTotals::total_energy() const {
    double sum = 0;
    for (auto v : energy_mJ) sum += v;
    return sum;
}

Breakdown classify_intervals(std::span<const RadioStateInterval> intervals, const EnergyModel& em) {
    std::map<int, std::vector<RadioStateInterval>> per_node;
    for (const auto& iv : intervals) {
        if (iv.end_us < iv.start_us)
            throw EnergyError(EnergyErrc::OverlappingIntervals,
                              fmt::format("node {} has a reversed interval", iv.node_id));
        if (iv.end_us > iv.start_us) per_node[iv.node_id].push_back(iv);
    }

    Breakdown out;
    for (auto& [node, ivs] : per_node) {
        std::ranges::sort(ivs, {}, &RadioStateInterval::start_us);
        auto& totals = out[node];
        for (std::size_t k = 0; k < ivs.size(); ++k) {
            if (k > 0 && ivs[k].start_us < ivs[k - 1].end_us)
                throw EnergyError(EnergyErrc::OverlappingIntervals,
                                  fmt::format("node {} overlaps at {} us", node, ivs[k].start_us));
            Category cat = category_of(ivs[k].state);
            if (ivs[k].state == RadioState::Calibrate) {
                auto next = k + 1;
                while (next < ivs.size() && ivs[next].state == RadioState::Calibrate) ++next;
                cat = next < ivs.size() ? category_of(ivs[next].state) : Category::Processing;
            }
            const auto idx = static_cast<std::size_t>(cat);
            totals.time_us[idx] += ivs[k].duration();
            totals.energy_mJ[idx] += interval_energy(ivs[k], em);
        }
    }
    return out;
}

void write_breakdown_csv(std::ostream& os, const Breakdown& b) {
    os << "node_id,state,time_us,energy_mJ\n";
    for (const auto& [node, totals] : b) {
        for (std::size_t c = 0; c < kCategoryCount; ++c) {
            os << fmt::format("{},{},{},{:.6f}\n", node, to_string(static_cast<Category>(c)),
                              totals.time_us[c], totals.energy_mJ[c]);
        }
    }
}

}  // namespace trome::energy
