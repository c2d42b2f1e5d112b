#include "strata/engine.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "kv_file.hpp"
#include "strata/errors.hpp"

namespace strata {

EngineIndex EngineIndex::from_index(const HierarchicalIndex& index) {
    EngineIndex e;
    e.metric = index.metric;
    e.dim = index.dim;
    e.clustered_levels = static_cast<std::uint32_t>(index.levels.size());
    e.root = index.root;
    return e;
}

EngineIndex load_engine_index(const std::filesystem::path& dir) {
    const auto meta_path = dir / "index.meta";
    const auto kv = detail::parse_kv_file(meta_path);

    EngineIndex e;
    e.dim = static_cast<std::uint32_t>(detail::parse_u64(kv, "dim", meta_path));
    e.metric = parse_metric(detail::require_key(kv, "metric", meta_path));
    e.clustered_levels = static_cast<std::uint32_t>(
        detail::parse_u64(kv, "clustered_levels", meta_path));
    e.root = load_graph(dir / "root.graph");
    if (e.root.metric != e.metric)
        throw FormatError(dir.string() + ": root graph metric disagrees with index.meta");
    return e;
}

namespace {

int connect_store(const SocketAddress& addr, std::uint32_t timeout_ms) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw RpcError(std::string("socket: ") + std::strerror(errno));

    timeval tv{};
    tv.tv_sec = timeout_ms / 1000;
    tv.tv_usec = static_cast<long>(timeout_ms % 1000) * 1000;
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);

    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(addr.port);
    if (::inet_pton(AF_INET, addr.host.c_str(), &sa.sin_addr) != 1) {
        ::close(fd);
        throw std::invalid_argument("engine: bad store host '" + addr.host + "'");
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0) {
        const int e = errno;
        ::close(fd);
        throw RpcError("connect " + addr.str() + ": " + std::strerror(e));
    }
    return fd;
}

struct NodeReply {
    std::vector<Candidate> candidates;
    std::uint64_t request_bytes = 0;
    std::uint64_t response_payload = 0;
};

} // namespace

struct QueryEngine::Impl {
    EngineIndex index;
    EngineOptions options;
    std::vector<SocketAddress> addresses;
    std::vector<int> fds;
    // One request/response exchange at a time per store connection.
    std::unique_ptr<std::mutex[]> locks;

    ~Impl() {
        for (int fd : fds)
            if (fd >= 0) ::close(fd);
    }

    std::uint32_t node_of(VectorId pid) const {
        return static_cast<std::uint32_t>(pid_hash(pid) % addresses.size());
    }

    // Sends one GET_PARTITION_RESULT and decodes the store's local top list.
    NodeReply exchange(std::uint32_t node, const PartitionRequest& req) const {
        const auto payload = encode_partition_request(req);
        NodeReply reply;
        reply.request_bytes = 5 + payload.size();

        std::optional<Frame> frame;
        {
            std::lock_guard lock(locks[node]);
            try {
                write_frame(fds[node], kOpGetPartitionResult, payload);
                frame = read_frame(fds[node]);
            } catch (const RpcError& e) {
                throw RpcError("store " + addresses[node].str() + ": " + e.what());
            } catch (const ProtocolError& e) {
                throw ProtocolError("store " + addresses[node].str() + ": " +
                                    e.what());
            }
        }
        if (!frame)
            throw RpcError("store " + addresses[node].str() +
                           " closed the connection mid-query");
        reply.response_payload = frame->payload.size();

        if (frame->opcode == kOpError) {
            const ErrorBody err = decode_error(frame->payload);
            std::string what = "store " + addresses[node].str() + " error " +
                               std::to_string(err.code) + ": " + err.message;
            throw RpcError(std::move(what));
        }
        if (frame->opcode != kOpPartitionResult)
            throw ProtocolError("store " + addresses[node].str() +
                                " replied with opcode " +
                                std::to_string(frame->opcode));

        reply.candidates = decode_partition_response(frame->payload, req.m);
        for (std::size_t i = 1; i < reply.candidates.size(); ++i)
            if (candidate_less(reply.candidates[i], reply.candidates[i - 1]))
                throw ProtocolError("store " + addresses[node].str() +
                                    " returned unsorted candidates");
        return reply;
    }
};

QueryEngine::QueryEngine(EngineIndex index, const std::vector<SocketAddress>& stores,
                         const EngineOptions& options)
    : impl_(std::make_unique<Impl>()) {
    if (stores.empty()) throw std::invalid_argument("engine: no store addresses");
    if (index.dim == 0) throw std::invalid_argument("engine: dim must be positive");
    impl_->index = std::move(index);
    impl_->options = options;
    impl_->addresses = stores;
    impl_->locks = std::make_unique<std::mutex[]>(stores.size());
    impl_->fds.reserve(stores.size());
    for (const SocketAddress& addr : stores)
        impl_->fds.push_back(connect_store(addr, options.timeout_ms));
}

QueryEngine::~QueryEngine() = default;

std::size_t QueryEngine::store_count() const { return impl_->addresses.size(); }

std::pair<std::vector<Candidate>, EngineTrace>
QueryEngine::search(std::span<const float> query, const SearchParams& params) const {
    params.validate();
    const EngineIndex& index = impl_->index;
    if (query.size() != index.dim)
        throw std::invalid_argument("engine: query dimension mismatch");

    EngineTrace trace;
    const std::uint32_t L = index.clustered_levels;
    trace.levels.resize(L);
    trace.fetch_rounds = L;

    auto [cands, stats] =
        graph_search(index.root, query, params.m, params.effective_root_beam());
    trace.root_distance_computations = stats.distance_computations;

    if (L == 0) {
        if (cands.size() > params.k) cands.resize(params.k);
        return {std::move(cands), std::move(trace)};
    }

    std::vector<VectorId> pids;
    pids.reserve(cands.size());
    for (const Candidate& c : cands) pids.push_back(c.id);

    const std::size_t node_count = impl_->addresses.size();
    std::vector<Candidate> pool;
    for (std::uint32_t li = L; li-- > 0;) {
        const std::uint32_t keep = (li == 0) ? params.k : params.m;

        // Route each pid to its placement node. Every store returns its
        // node-local top-m, the weakest truncation whose merge is lossless
        // at every level; the final cut to k happens only after the merge.
        std::vector<std::vector<VectorId>> by_node(node_count);
        for (VectorId pid : pids) by_node[impl_->node_of(pid)].push_back(pid);

        std::vector<std::uint32_t> involved;
        for (std::uint32_t n = 0; n < node_count; ++n)
            if (!by_node[n].empty()) involved.push_back(n);

        std::vector<NodeReply> replies(involved.size());
        std::vector<std::exception_ptr> errors(involved.size());
        std::vector<std::thread> workers;
        workers.reserve(involved.size());
        for (std::size_t w = 0; w < involved.size(); ++w)
            workers.emplace_back([&, w] {
                try {
                    PartitionRequest req;
                    req.level = static_cast<std::uint8_t>(li);
                    req.m = params.m;
                    req.query.assign(query.begin(), query.end());
                    req.pids = std::move(by_node[involved[w]]);
                    replies[w] = impl_->exchange(involved[w], req);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& t : workers) t.join();
        for (const auto& err : errors)
            if (err) std::rethrow_exception(err);

        EngineLevelTrace& lt = trace.levels[li];
        lt.nodes_contacted = static_cast<std::uint32_t>(involved.size());
        pool.clear();
        for (const NodeReply& reply : replies) {
            lt.request_bytes += reply.request_bytes;
            lt.response_bytes += 5 + reply.response_payload;
            lt.max_node_response_payload =
                std::max(lt.max_node_response_payload, reply.response_payload);
            pool.insert(pool.end(), reply.candidates.begin(),
                        reply.candidates.end());
        }

        // Same id can arrive from several nodes (replicated copies).
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
        if (pool.size() > keep) pool.resize(keep);

        pids.clear();
        for (const Candidate& c : pool) pids.push_back(c.id);
    }
    return {std::move(pool), std::move(trace)};
}

} // namespace strata
