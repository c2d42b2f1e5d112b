#include "strata/store.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <vector>

#include "strata/clustering.hpp"
#include "strata/distance.hpp"
#include "strata/errors.hpp"
#include "strata/io.hpp"

namespace strata {

namespace {

struct LevelShard {
    int fd = -1;
    std::unordered_map<VectorId, PartitionExtent> extents;
};

int open_listener(const SocketAddress& listen) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw RpcError(std::string("socket: ") + std::strerror(errno));
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(listen.port);
    if (::inet_pton(AF_INET, listen.host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        throw std::invalid_argument("store: bad listen host '" + listen.host + "'");
    }
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        const int e = errno;
        ::close(fd);
        throw RpcError("bind " + listen.str() + ": " + std::strerror(e));
    }
    if (::listen(fd, 64) != 0) {
        const int e = errno;
        ::close(fd);
        throw RpcError("listen " + listen.str() + ": " + std::strerror(e));
    }
    return fd;
}

} // namespace

struct StoreServer::Impl {
    StoreConfig config;
    SocketAddress bound;
    int listen_fd = -1;

    std::unordered_map<std::uint32_t, LevelShard> shards;

    std::atomic<std::uint64_t> requests{0};
    std::atomic<std::uint64_t> partitions_read{0};
    std::atomic<std::uint64_t> bytes_out{0};

    std::thread acceptor;
    std::mutex clients_mu;
    std::vector<int> client_fds;
    std::vector<std::thread> client_threads;
    std::atomic<bool> stopping{false};

    ~Impl() { shutdown(); }

    void shutdown() {
        bool expected = false;
        if (!stopping.compare_exchange_strong(expected, true)) {
            if (acceptor.joinable()) acceptor.join();
            return;
        }
        if (listen_fd >= 0) ::shutdown(listen_fd, SHUT_RDWR);
        {
            std::lock_guard lock(clients_mu);
            for (int fd : client_fds) ::shutdown(fd, SHUT_RDWR);
        }
        if (acceptor.joinable()) acceptor.join();
        for (auto& t : client_threads)
            if (t.joinable()) t.join();
        {
            std::lock_guard lock(clients_mu);
            for (int fd : client_fds) ::close(fd);
            client_fds.clear();
        }
        if (listen_fd >= 0) {
            ::close(listen_fd);
            listen_fd = -1;
        }
        for (auto& [level, shard] : shards)
            if (shard.fd >= 0) {
                ::close(shard.fd);
                shard.fd = -1;
            }
    }

    void accept_loop() {
        while (!stopping.load()) {
            const int fd = ::accept(listen_fd, nullptr, nullptr);
            if (fd < 0) {
                if (errno == EINTR) continue;
                break; // listener shut down
            }
            const int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            std::lock_guard lock(clients_mu);
            if (stopping.load()) {
                ::close(fd);
                break;
            }
            client_fds.push_back(fd);
            client_threads.emplace_back([this, fd] { serve_connection(fd); });
        }
    }

    void send_error(int fd, std::uint32_t code, std::uint64_t pid,
                    const std::string& message) {
        ErrorBody err{code, pid, message};
        const auto payload = encode_error(err);
        try {
            write_frame(fd, kOpError, payload);
            bytes_out += 5 + payload.size();
        } catch (const RpcError&) {
            // Peer vanished; nothing left to report to.
        }
    }

    // Scans one partition record straight from the shard file.
    void scan_partition(const LevelShard& shard, const PartitionExtent& ext,
                        std::span<const float> query,
                        std::vector<Candidate>& pool) {
        std::vector<unsigned char> buf(ext.bytes);
        std::size_t got = 0;
        while (got < buf.size()) {
            const ssize_t n = ::pread(shard.fd, buf.data() + got, buf.size() - got,
                                      static_cast<off_t>(ext.offset + got));
            if (n < 0) {
                if (errno == EINTR) continue;
                throw FormatError(std::string("pread: ") + std::strerror(errno));
            }
            if (n == 0) throw FormatError("partition file truncated under reader");
            got += static_cast<std::size_t>(n);
        }

        const std::uint32_t dim = config.dim;
        const std::size_t stride = 8 + 4ull * dim;
        const unsigned char* rec = buf.data() + 12;
        std::vector<float> row(dim);
        for (std::uint32_t i = 0; i < ext.count; ++i) {
            const unsigned char* p = rec + i * stride;
            const VectorId id = load_u64le(p);
            std::memcpy(row.data(), p + 8, 4ull * dim);
            pool.push_back({id, distance(row, query, config.metric)});
        }
    }

    void handle_get(int fd, std::span<const unsigned char> payload) {
        const PartitionRequest req = decode_partition_request(payload);
        if (req.query.size() != config.dim) {
            send_error(fd, kErrMalformed, 0,
                       "query dim " + std::to_string(req.query.size()) +
                           " does not match shard dim " +
                           std::to_string(config.dim));
            return;
        }
        const auto shard_it = shards.find(req.level);
        if (shard_it == shards.end()) {
            send_error(fd, kErrMalformed, 0,
                       "no shard for level " + std::to_string(req.level));
            return;
        }
        const LevelShard& shard = shard_it->second;

        std::vector<const PartitionExtent*> hits;
        hits.reserve(req.pids.size());
        for (VectorId pid : req.pids) {
            const auto it = shard.extents.find(pid);
            if (it == shard.extents.end()) {
                send_error(fd, kErrUnknownPid, pid,
                           "partition " + std::to_string(pid) +
                               " is not placed on this node");
                return;
            }
            hits.push_back(&it->second);
        }

        std::vector<Candidate> pool;
        for (const PartitionExtent* ext : hits)
            scan_partition(shard, *ext, req.query, pool);
        partitions_read += hits.size();

        std::sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) {
            if (a.id != b.id) return a.id < b.id;
            return a.distance < b.distance;
        });
        pool.erase(std::unique(pool.begin(), pool.end(),
                               [](const Candidate& a, const Candidate& b) {
                                   return a.id == b.id;
                               }),
                   pool.end());
        std::sort(pool.begin(), pool.end(), candidate_less);
        if (pool.size() > req.m) pool.resize(req.m);

        const auto out = encode_partition_response(pool);
        write_frame(fd, kOpPartitionResult, out);
        bytes_out += 5 + out.size();
    }

    void serve_connection(int fd) {
        for (;;) {
            std::optional<Frame> frame;
            try {
                frame = read_frame(fd);
            } catch (const ProtocolError& e) {
                send_error(fd, kErrMalformed, 0, e.what());
                break;
            } catch (const RpcError&) {
                break;
            }
            if (!frame) break; // clean EOF

            ++requests;
            try {
                switch (frame->opcode) {
                    case kOpGetPartitionResult:
                        handle_get(fd, frame->payload);
                        break;
                    case kOpPing:
                        write_frame(fd, kOpPingReply, frame->payload);
                        bytes_out += 5 + frame->payload.size();
                        break;
                    case kOpStats: {
                        const std::string text =
                            "requests=" + std::to_string(requests.load()) +
                            "\npartitions_read=" +
                            std::to_string(partitions_read.load()) +
                            "\nbytes_out=" + std::to_string(bytes_out.load()) + "\n";
                        write_frame(fd, kOpStatsReply,
                                    {reinterpret_cast<const unsigned char*>(
                                         text.data()),
                                     text.size()});
                        bytes_out += 5 + text.size();
                        break;
                    }
                    default:
                        send_error(fd, kErrMalformed, 0,
                                   "unknown opcode " +
                                       std::to_string(frame->opcode));
                        goto done; // malformed: close after the error frame
                }
            } catch (const ProtocolError& e) {
                send_error(fd, kErrMalformed, 0, e.what());
                break;
            } catch (const RpcError&) {
                break;
            } catch (const std::exception& e) {
                send_error(fd, kErrInternal, 0, e.what());
                break;
            }
        }
    done:
        ::shutdown(fd, SHUT_RDWR);
    }
};

StoreServer::StoreServer(StoreConfig config, const SocketAddress& listen)
    : impl_(std::make_unique<Impl>()) {
    if (config.dim == 0) throw std::invalid_argument("store: dim must be positive");
    if (config.level_files.empty())
        throw std::invalid_argument("store: no shard files");
    impl_->config = std::move(config);

    for (const auto& [level, path] : impl_->config.level_files) {
        LevelShard shard;
        auto extents = scan_partition_extents(path, impl_->config.dim);
        shard.extents.reserve(extents.size());
        for (const auto& ext : extents) shard.extents.emplace(ext.pid, ext);
        shard.fd = ::open(path.c_str(), O_RDONLY);
        if (shard.fd < 0)
            throw FormatError("cannot open shard " + path.string() + ": " +
                              std::strerror(errno));
        impl_->shards.emplace(level, std::move(shard));
    }

    impl_->listen_fd = open_listener(listen);
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    if (::getsockname(impl_->listen_fd, reinterpret_cast<sockaddr*>(&bound), &len) != 0)
        throw RpcError(std::string("getsockname: ") + std::strerror(errno));
    char host[INET_ADDRSTRLEN] = {};
    ::inet_ntop(AF_INET, &bound.sin_addr, host, sizeof host);
    impl_->bound = SocketAddress{host, ntohs(bound.sin_port)};

    impl_->acceptor = std::thread([impl = impl_.get()] { impl->accept_loop(); });
}

StoreServer::~StoreServer() {
    if (impl_) impl_->shutdown();
}

std::uint16_t StoreServer::port() const { return impl_->bound.port; }

SocketAddress StoreServer::address() const { return impl_->bound; }

StoreStats StoreServer::stats() const {
    return {impl_->requests.load(), impl_->partitions_read.load(),
            impl_->bytes_out.load()};
}

void StoreServer::stop() { impl_->shutdown(); }

} // namespace strata
