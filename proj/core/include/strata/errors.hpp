#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace strata {

/// Malformed file content. Message names the byte offset of the problem.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Recall target cannot be met no matter how many partitions are probed.
struct UnreachableTargetError : std::runtime_error {
    double best_recall;
    UnreachableTargetError(const std::string& what, double best)
        : std::runtime_error(what), best_recall(best) {}
};

/// A pid referenced by the index or a request does not resolve.
struct CorruptIndexError : std::runtime_error {
    std::uint64_t pid;
    CorruptIndexError(const std::string& what, std::uint64_t p)
        : std::runtime_error(what), pid(p) {}
};

/// Wire protocol violation (bad frame, bad opcode, oversized message).
struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Remote store failure; message names the node address.
struct RpcError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace strata
