#pragma once

// Bit-exact encoders/decoders for the wake-up, MAC and routing layers.
//
// Every function here is pure. Decoders are total: any byte string either
// decodes or raises CodecError, never anything else.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace trome::codec {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

enum class CodecErrc {
    InvalidConfig,
    MalformedPattern,
    PayloadTooLarge,
    SlotsOverflow,
    UnknownPacketType,
    Truncated,
};

const char* to_string(CodecErrc code);

class CodecError : public std::runtime_error {
public:
    CodecError(CodecErrc code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    CodecErrc code() const noexcept { return code_; }

private:
    CodecErrc code_;
};

// Packet-type tags. The routing request tag lives in the two low bits of its
// first byte; the slot count occupies the six high bits.
inline constexpr std::uint8_t kTagMacData = 0x01;
inline constexpr std::uint8_t kTagMacAck = 0x02;
inline constexpr std::uint8_t kTagRoutingData = 0x03;
inline constexpr std::uint8_t kTagRoutingReqAck = 0x04;
inline constexpr std::uint8_t kTagRoutingReq = 0b01;
inline constexpr std::uint8_t kProtocolId = 0x01;

inline constexpr std::size_t kMaxPayload = 246;
inline constexpr std::uint8_t kMaxSlots = 63;
inline constexpr int kMinCarrierBurst = 32;
inline constexpr int kMaxCarrierBurst = 100;
inline constexpr int kDefaultCarrierBurst = 42;
inline constexpr int kDefaultPreamble = 48;

// One wake-up-domain chip (128 us) is four bytes at the 250 kbit/s main-radio
// rate; a Manchester bit is two chips.
inline constexpr std::size_t kBytesPerChip = 4;
inline constexpr std::size_t kPatternBytes = 64;

// Radio framing the transceiver adds to every packet: 3 preamble, 2 sync,
// 1 length, 2 CRC. Content is opaque; only the count matters.
inline constexpr std::size_t kRadioFramingBytes = 8;

// --- wake-up layer -------------------------------------------------------

std::uint16_t manchester_encode(std::uint8_t id);
// Throws MalformedPattern when any bit pair is 00 or 11.
std::uint8_t manchester_decode(std::uint16_t pattern);

struct WakeUpAddress {
    std::uint8_t logical_id = 0;

    std::uint16_t pattern() const { return manchester_encode(logical_id); }
    static WakeUpAddress from_pattern(std::uint16_t pattern) {
        return WakeUpAddress{manchester_decode(pattern)};
    }
    friend bool operator==(const WakeUpAddress&, const WakeUpAddress&) = default;
};

struct WakeUpFrame {
    int carrier_burst_bytes = kDefaultCarrierBurst;
    int preamble_bytes = kDefaultPreamble;
    WakeUpAddress address{};

    std::size_t image_size() const {
        return static_cast<std::size_t>(carrier_burst_bytes + preamble_bytes) + kPatternBytes;
    }
    friend bool operator==(const WakeUpFrame&, const WakeUpFrame&) = default;
};

// carrier burst (all ones), preamble (alternating 4-byte chips, ones first),
// then the 64-byte Manchester pattern.
Bytes encode_wakeup(const WakeUpFrame& frame);

// Accepts images whose leading carrier bytes were truncated; the returned
// carrier_burst_bytes is whatever survived.
WakeUpFrame decode_wakeup(ByteView bytes, int expected_preamble = kDefaultPreamble);

struct WucAckFrame {
    std::uint8_t protocol_id = kProtocolId;
    std::uint16_t receiver_id = 0;
    friend bool operator==(const WucAckFrame&, const WucAckFrame&) = default;
};

Bytes encode_wuc_ack(const WucAckFrame& frame);
WucAckFrame decode_wuc_ack(ByteView bytes);

// --- MAC layer -----------------------------------------------------------

struct MacDataFrame {
    std::uint8_t src_id = 0;
    std::uint8_t dest_id = 0;
    Bytes payload;
    friend bool operator==(const MacDataFrame&, const MacDataFrame&) = default;
};

struct MacAckFrame {
    std::uint8_t src_id = 0;
    std::uint8_t dest_id = 0;
    friend bool operator==(const MacAckFrame&, const MacAckFrame&) = default;
};

using MacFrame = std::variant<MacDataFrame, MacAckFrame>;

inline constexpr std::size_t kMacDataHeaderBytes = 4;
inline constexpr std::size_t kMacAckBytes = 3;
inline constexpr std::size_t kWucAckBytes = 3;
inline constexpr std::size_t kRoutingBytes = 4;

Bytes encode_mac(const MacDataFrame& frame);
Bytes encode_mac(const MacAckFrame& frame);
MacFrame decode_mac(ByteView bytes);

// --- routing layer -------------------------------------------------------

struct RoutingRequest {
    std::uint8_t slots = 0;  // 0..63
    std::uint8_t r_src_id = 0;
    std::uint8_t r_dest_id = 0;
    std::uint8_t ttl = 0;
    friend bool operator==(const RoutingRequest&, const RoutingRequest&) = default;
};

struct RoutingData {
    std::uint8_t r_src_id = 0;
    std::uint8_t r_dest_id = 0;
    std::uint8_t payload_len = 0;
    friend bool operator==(const RoutingData&, const RoutingData&) = default;
};

struct RoutingReqAck {
    std::uint8_t current_ttl = 0;
    std::uint8_t lqi = 0;
    std::uint8_t free_slots = 0;  // 0..63
    friend bool operator==(const RoutingReqAck&, const RoutingReqAck&) = default;
};

using RoutingFrame = std::variant<RoutingRequest, RoutingData, RoutingReqAck>;

Bytes encode_routing(const RoutingFrame& frame);
RoutingFrame decode_routing(ByteView bytes);

// A routing frame carried in a MAC DATA frame. The MAC length byte counts the
// routing header plus application payload; the payload cap is still 246.
struct RoutedFrame {
    std::uint8_t mac_src = 0;
    std::uint8_t mac_dest = 0;
    RoutingFrame routing;
    Bytes payload;  // only meaningful for RoutingData
    friend bool operator==(const RoutedFrame&, const RoutedFrame&) = default;
};

Bytes encode_routed(const RoutedFrame& frame);
RoutedFrame decode_routed(ByteView bytes);

}  // namespace trome::codec
