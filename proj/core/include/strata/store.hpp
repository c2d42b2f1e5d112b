#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "strata/types.hpp"
#include "strata/wire.hpp"

namespace strata {

// Shard definition for one store node: the partition files it owns, one per
// level it participates in. Files use the clustering partition format and
// are served straight from disk via positioned reads.
struct StoreConfig {
    std::uint32_t dim = 0;
    Metric metric = Metric::SquaredL2;
    std::map<std::uint32_t, std::filesystem::path> level_files;
};

struct StoreStats {
    std::uint64_t requests = 0;
    std::uint64_t partitions_read = 0;
    std::uint64_t bytes_out = 0;
};

// One TCP store node. Accepts connections until stopped; each request frame
// is answered in order on its connection. GET_PARTITION_RESULT scans the
// listed partitions against the query and returns the node-local top-m
// (de-duplicated by id, minimum distance, sorted ascending). Unknown pids
// answer an ERROR frame naming the pid; a malformed frame answers an ERROR
// and closes the connection.
class StoreServer {
  public:
    // Binds and starts serving immediately. Port 0 picks an ephemeral port.
    StoreServer(StoreConfig config, const SocketAddress& listen);
    ~StoreServer();

    StoreServer(const StoreServer&) = delete;
    StoreServer& operator=(const StoreServer&) = delete;

    std::uint16_t port() const;
    SocketAddress address() const;
    StoreStats stats() const;

    // Idempotent; joins every connection thread.
    void stop();

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace strata
