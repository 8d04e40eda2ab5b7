#include "trome/frame_codec.hpp"

#include <algorithm>

namespace trome::codec {

namespace {

constexpr std::uint8_t kHigh = 0xFF;
constexpr std::uint8_t kLow = 0x00;

[[noreturn]] void fail(CodecErrc code, const std::string& what) {
    throw CodecError(code, std::string(to_string(code)) + ": " + what);
}

void require_size(ByteView bytes, std::size_t n, const char* what) {
    if (bytes.size() < n) {
        fail(CodecErrc::Truncated, std::string(what) + " needs " + std::to_string(n) +
                                       " bytes, got " + std::to_string(bytes.size()));
    }
}

void append_chip(Bytes& out, bool high) {
    out.insert(out.end(), kBytesPerChip, high ? kHigh : kLow);
}

// Returns 1 for a ones chip, 0 for a zeros chip, -1 otherwise.
int read_chip(ByteView chip) {
    if (std::all_of(chip.begin(), chip.end(), [](auto b) { return b == kHigh; })) return 1;
    if (std::all_of(chip.begin(), chip.end(), [](auto b) { return b == kLow; })) return 0;
    return -1;
}

}  // namespace

const char* to_string(CodecErrc code) {
    switch (code) {
        case CodecErrc::InvalidConfig: return "InvalidConfig";
        case CodecErrc::MalformedPattern: return "MalformedPattern";
        case CodecErrc::PayloadTooLarge: return "PayloadTooLarge";
        case CodecErrc::SlotsOverflow: return "SlotsOverflow";
        case CodecErrc::UnknownPacketType: return "UnknownPacketType";
        case CodecErrc::Truncated: return "Truncated";
    }
    return "?";
}

std::uint16_t manchester_encode(std::uint8_t id) {
    std::uint16_t pattern = 0;
    for (int bit = 7; bit >= 0; --bit) {
        // 1 -> high,low (10); 0 -> low,high (01)
        pattern = static_cast<std::uint16_t>(pattern << 2);
        pattern |= ((id >> bit) & 1u) ? 0b10u : 0b01u;
    }
    return pattern;
}

std::uint8_t manchester_decode(std::uint16_t pattern) {
    std::uint8_t id = 0;
    for (int pair = 7; pair >= 0; --pair) {
        const unsigned chips = (pattern >> (2 * pair)) & 0b11u;
        id = static_cast<std::uint8_t>(id << 1);
        if (chips == 0b10u) {
            id |= 1u;
        } else if (chips != 0b01u) {
            fail(CodecErrc::MalformedPattern, "bit pair " + std::to_string(7 - pair) +
                                                  " is not a Manchester symbol");
        }
    }
    return id;
}

Bytes encode_wakeup(const WakeUpFrame& frame) {
    if (frame.carrier_burst_bytes < kMinCarrierBurst || frame.carrier_burst_bytes > kMaxCarrierBurst) {
        fail(CodecErrc::InvalidConfig,
             "carrier burst " + std::to_string(frame.carrier_burst_bytes) + " outside 32..100");
    }
    if (frame.preamble_bytes <= 0 || frame.preamble_bytes % static_cast<int>(kBytesPerChip) != 0) {
        fail(CodecErrc::InvalidConfig, "preamble must be a positive multiple of 4 bytes");
    }

    Bytes out;
    out.reserve(frame.image_size());
    out.insert(out.end(), static_cast<std::size_t>(frame.carrier_burst_bytes), kHigh);
    const int preamble_chips = frame.preamble_bytes / static_cast<int>(kBytesPerChip);
    for (int c = 0; c < preamble_chips; ++c) append_chip(out, c % 2 == 0);

    const std::uint16_t pattern = frame.address.pattern();
    for (int chip = 15; chip >= 0; --chip) append_chip(out, (pattern >> chip) & 1u);
    return out;
}

WakeUpFrame decode_wakeup(ByteView bytes, int expected_preamble) {
    if (expected_preamble <= 0 || expected_preamble % static_cast<int>(kBytesPerChip) != 0) {
        fail(CodecErrc::InvalidConfig, "preamble must be a positive multiple of 4 bytes");
    }
    const auto preamble = static_cast<std::size_t>(expected_preamble);
    require_size(bytes, preamble + kPatternBytes, "wake-up image");

    const std::size_t carrier = bytes.size() - preamble - kPatternBytes;
    if (!std::all_of(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(carrier),
                     [](auto b) { return b == kHigh; })) {
        fail(CodecErrc::MalformedPattern, "carrier burst is not continuous");
    }
    const ByteView pre = bytes.subspan(carrier, preamble);
    for (std::size_t c = 0; c < preamble / kBytesPerChip; ++c) {
        const int expect = (c % 2 == 0) ? 1 : 0;
        if (read_chip(pre.subspan(c * kBytesPerChip, kBytesPerChip)) != expect) {
            fail(CodecErrc::MalformedPattern, "preamble chip " + std::to_string(c) + " broken");
        }
    }

    const ByteView pat = bytes.subspan(carrier + preamble, kPatternBytes);
    std::uint16_t pattern = 0;
    for (std::size_t c = 0; c < kPatternBytes / kBytesPerChip; ++c) {
        const int chip = read_chip(pat.subspan(c * kBytesPerChip, kBytesPerChip));
        if (chip < 0) fail(CodecErrc::MalformedPattern, "pattern chip " + std::to_string(c) + " mixed");
        pattern = static_cast<std::uint16_t>((pattern << 1) | static_cast<unsigned>(chip));
    }

    WakeUpFrame frame;
    frame.carrier_burst_bytes = static_cast<int>(carrier);
    frame.preamble_bytes = expected_preamble;
    frame.address = WakeUpAddress::from_pattern(pattern);
    return frame;
}

Bytes encode_wuc_ack(const WucAckFrame& frame) {
    return {frame.protocol_id, static_cast<std::uint8_t>(frame.receiver_id & 0xFF),
            static_cast<std::uint8_t>(frame.receiver_id >> 8)};
}

WucAckFrame decode_wuc_ack(ByteView bytes) {
    require_size(bytes, kWucAckBytes, "WUC ACK");
    if (bytes.size() != kWucAckBytes) fail(CodecErrc::Truncated, "WUC ACK must be exactly 3 bytes");
    if (bytes[0] != kProtocolId) fail(CodecErrc::UnknownPacketType, "unknown protocol id");
    return WucAckFrame{bytes[0], static_cast<std::uint16_t>(bytes[1] | (bytes[2] << 8))};
}

Bytes encode_mac(const MacDataFrame& frame) {
    if (frame.payload.size() > kMaxPayload) {
        fail(CodecErrc::PayloadTooLarge, std::to_string(frame.payload.size()) + " > 246");
    }
    Bytes out;
    out.reserve(kMacDataHeaderBytes + frame.payload.size());
    out.push_back(kTagMacData);
    out.push_back(frame.src_id);
    out.push_back(frame.dest_id);
    out.push_back(static_cast<std::uint8_t>(frame.payload.size()));
    out.insert(out.end(), frame.payload.begin(), frame.payload.end());
    return out;
}

Bytes encode_mac(const MacAckFrame& frame) {
    return {kTagMacAck, frame.src_id, frame.dest_id};
}

MacFrame decode_mac(ByteView bytes) {
    require_size(bytes, 1, "MAC frame");
    switch (bytes[0]) {
        case kTagMacData: {
            require_size(bytes, kMacDataHeaderBytes, "MAC DATA header");
            const std::size_t len = bytes[3];
            if (len > kMaxPayload) fail(CodecErrc::PayloadTooLarge, "length byte > 246");
            if (bytes.size() != kMacDataHeaderBytes + len) {
                fail(CodecErrc::Truncated, "MAC DATA length byte disagrees with frame size");
            }
            return MacDataFrame{bytes[1], bytes[2], Bytes(bytes.begin() + 4, bytes.end())};
        }
        case kTagMacAck:
            if (bytes.size() != kMacAckBytes) fail(CodecErrc::Truncated, "MAC ACK must be 3 bytes");
            return MacAckFrame{bytes[1], bytes[2]};
        default:
            fail(CodecErrc::UnknownPacketType, "MAC tag " + std::to_string(bytes[0]));
    }
}

Bytes encode_routing(const RoutingFrame& frame) {
    return std::visit(
        [](const auto& f) -> Bytes {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, RoutingRequest>) {
                if (f.slots > kMaxSlots) fail(CodecErrc::SlotsOverflow, "R_REQ slots > 63");
                return {static_cast<std::uint8_t>((f.slots << 2) | kTagRoutingReq), f.r_src_id,
                        f.r_dest_id, f.ttl};
            } else if constexpr (std::is_same_v<T, RoutingData>) {
                if (f.payload_len > kMaxPayload) fail(CodecErrc::PayloadTooLarge, "R_DATA length > 246");
                return {kTagRoutingData, f.r_src_id, f.r_dest_id, f.payload_len};
            } else {
                if (f.free_slots > kMaxSlots) fail(CodecErrc::SlotsOverflow, "R_REQ_ACK free slots > 63");
                return {kTagRoutingReqAck, f.current_ttl, f.lqi, f.free_slots};
            }
        },
        frame);
}

RoutingFrame decode_routing(ByteView bytes) {
    require_size(bytes, 1, "routing frame");
    const std::uint8_t head = bytes[0];
    const bool is_req = (head & 0b11u) == kTagRoutingReq;
    if (!is_req && head != kTagRoutingData && head != kTagRoutingReqAck) {
        fail(CodecErrc::UnknownPacketType, "routing tag " + std::to_string(head));
    }
    if (bytes.size() != kRoutingBytes) {
        fail(CodecErrc::Truncated, "routing frames are exactly 4 bytes, got " + std::to_string(bytes.size()));
    }
    if (is_req) return RoutingRequest{static_cast<std::uint8_t>(head >> 2), bytes[1], bytes[2], bytes[3]};
    if (head == kTagRoutingData) {
        if (bytes[3] > kMaxPayload) fail(CodecErrc::PayloadTooLarge, "R_DATA length > 246");
        return RoutingData{bytes[1], bytes[2], bytes[3]};
    }
    if (bytes[3] > kMaxSlots) fail(CodecErrc::SlotsOverflow, "R_REQ_ACK free slots > 63");
    return RoutingReqAck{bytes[1], bytes[2], bytes[3]};
}

Bytes encode_routed(const RoutedFrame& frame) {
    const auto* data = std::get_if<RoutingData>(&frame.routing);
    const std::size_t payload = data ? frame.payload.size() : 0;
    if (payload > kMaxPayload) fail(CodecErrc::PayloadTooLarge, std::to_string(payload) + " > 246");
    if (data && data->payload_len != payload) {
        fail(CodecErrc::InvalidConfig, "R_DATA payload_len disagrees with payload");
    }
    if (!data && !frame.payload.empty()) fail(CodecErrc::InvalidConfig, "only R_DATA carries payload");

    Bytes out{kTagMacData, frame.mac_src, frame.mac_dest, static_cast<std::uint8_t>(kRoutingBytes + payload)};
    const Bytes routing = encode_routing(frame.routing);
    out.insert(out.end(), routing.begin(), routing.end());
    out.insert(out.end(), frame.payload.begin(), frame.payload.end());
    return out;
}

RoutedFrame decode_routed(ByteView bytes) {
    require_size(bytes, kMacDataHeaderBytes + kRoutingBytes, "routed frame");
    if (bytes[0] != kTagMacData) fail(CodecErrc::UnknownPacketType, "routed frame must ride in MAC DATA");
    const std::size_t len = bytes[3];
    if (bytes.size() != kMacDataHeaderBytes + len) {
        fail(CodecErrc::Truncated, "MAC length byte disagrees with frame size");
    }
    if (len < kRoutingBytes) fail(CodecErrc::Truncated, "MAC body shorter than a routing header");

    RoutedFrame frame;
    frame.mac_src = bytes[1];
    frame.mac_dest = bytes[2];
    frame.routing = decode_routing(bytes.subspan(kMacDataHeaderBytes, kRoutingBytes));
    const ByteView rest = bytes.subspan(kMacDataHeaderBytes + kRoutingBytes);
    if (const auto* data = std::get_if<RoutingData>(&frame.routing)) {
        if (rest.size() != data->payload_len) fail(CodecErrc::Truncated, "R_DATA payload length mismatch");
    } else if (!rest.empty()) {
        fail(CodecErrc::Truncated, "trailing bytes after routing control frame");
    }
    frame.payload.assign(rest.begin(), rest.end());
    return frame;
}

}  // namespace trome::codec
