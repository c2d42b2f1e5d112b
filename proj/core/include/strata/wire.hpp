#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "strata/types.hpp"

namespace strata {

// Frame layout: 4-byte LE length, then `length` bytes of opcode + payload.
// The length field therefore equals 1 + payload size.
inline constexpr std::uint32_t kMaxFrameBytes = 16u * 1024 * 1024;

enum Opcode : std::uint8_t {
    kOpGetPartitionResult = 0x01,
    kOpPing = 0x02,
    kOpStats = 0x03,
    kOpPartitionResult = 0x81,
    kOpPingReply = 0x82,
    kOpStatsReply = 0x83,
    kOpError = 0xFF,
};

enum ErrorCode : std::uint32_t {
    kErrUnknownPid = 1,
    kErrMalformed = 2,
    kErrInternal = 3,
};

struct PartitionRequest {
    std::uint8_t level = 0;
    std::uint32_t m = 0;
    std::vector<float> query; // dim implied by size
    std::vector<VectorId> pids;
};

struct ErrorBody {
    std::uint32_t code = 0;
    std::uint64_t pid = 0; // 0 unless the error names a partition
    std::string message;
};

// Payload codecs (opcode not included). Decoders throw ProtocolError on any
// size or bounds mismatch; encode/decode round-trips are identity.
std::vector<unsigned char> encode_partition_request(const PartitionRequest& req);
PartitionRequest decode_partition_request(std::span<const unsigned char> payload);

// count (u32 LE) then count * (u64 id, f32 distance): 12 bytes per
// candidate, 12 * count + 4 total. Candidates must already be sorted.
std::vector<unsigned char> encode_partition_response(std::span<const Candidate> cands);
// max_count guards the response against an m-violating peer.
std::vector<Candidate> decode_partition_response(std::span<const unsigned char> payload,
                                                 std::uint32_t max_count);

std::vector<unsigned char> encode_error(const ErrorBody& err);
ErrorBody decode_error(std::span<const unsigned char> payload);

struct Frame {
    std::uint8_t opcode = 0;
    std::vector<unsigned char> payload;

    std::size_t wire_size() const { return 5 + payload.size(); }
};

// Blocking frame I/O over a connected socket. write_frame throws RpcError on
// I/O failure. read_frame returns nullopt on clean EOF at a frame boundary,
// throws ProtocolError on an oversized or truncated frame and RpcError on
// socket errors (including receive timeouts).
void write_frame(int fd, std::uint8_t opcode, std::span<const unsigned char> payload);
std::optional<Frame> read_frame(int fd);

// "host:port" with a dotted-quad or "localhost" host. Port 0 is allowed
// (ephemeral bind).
struct SocketAddress {
    std::string host;
    std::uint16_t port = 0;

    std::string str() const { return host + ":" + std::to_string(port); }
};
SocketAddress parse_address(const std::string& text);

} // namespace strata
