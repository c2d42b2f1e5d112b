#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "strata/engine.hpp"
#include "strata/errors.hpp"
#include "strata/hierarchy.hpp"
#include "strata/io.hpp"
#include "strata/rng.hpp"
#include "strata/store.hpp"
#include "strata/wire.hpp"
#include "test_util.hpp"

using namespace strata;
using namespace testutil;

namespace {

PartitionRequest random_request(Rng& rng) {
    PartitionRequest req;
    req.level = static_cast<std::uint8_t>(rng.bounded(5));
    req.m = static_cast<std::uint32_t>(1 + rng.bounded(600));
    const std::uint32_t dim = static_cast<std::uint32_t>(1 + rng.bounded(48));
    req.query.resize(dim);
    for (float& v : req.query) v = static_cast<float>(rng.gaussian());
    req.pids.resize(rng.bounded(80));
    for (VectorId& pid : req.pids) pid = rng.next();
    return req;
}

std::vector<Candidate> random_candidates(Rng& rng, std::size_t count) {
    std::vector<Candidate> cands(count);
    for (Candidate& c : cands) {
        c.id = rng.next();
        c.distance = static_cast<float>(rng.uniform() * 10.0);
    }
    std::sort(cands.begin(), cands.end(), candidate_less);
    return cands;
}

/// Plain blocking client connection for poking the store by hand.
struct RawClient {
    int fd = -1;

    explicit RawClient(const SocketAddress& addr) {
        fd = ::socket(AF_INET, SOCK_STREAM, 0);
        REQUIRE(fd >= 0);
        timeval tv{5, 0};
        ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
        sockaddr_in sa{};
        sa.sin_family = AF_INET;
        sa.sin_port = htons(addr.port);
        REQUIRE(::inet_pton(AF_INET, addr.host.c_str(), &sa.sin_addr) == 1);
        REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) == 0);
    }
    ~RawClient() {
        if (fd >= 0) ::close(fd);
    }

    Frame call(std::uint8_t opcode, std::span<const unsigned char> payload) {
        write_frame(fd, opcode, payload);
        auto frame = read_frame(fd);
        REQUIRE(frame.has_value());
        return std::move(*frame);
    }
};

struct ServiceFixture {
    Dataset data;
    HierarchicalIndex index;
    VectorArray queries;
};

// 3000 vectors at density 0.1, budget 40: two clustered levels
// (3000 -> 300 -> 30) under a 30-node root graph.
const ServiceFixture& fixture() {
    static ServiceFixture fx = [] {
        ServiceFixture f;
        f.data = generate_synthetic(3000, 8, 12, 0.1, 909);
        BuildParams bp;
        bp.budget = 40;
        bp.density = 0.1;
        bp.seed = 31;
        f.index = build_levels(f.data, bp);

        f.queries.dim = f.data.dim();
        Rng rng(0x90ff);
        std::vector<float> row(f.queries.dim);
        for (std::size_t i = 0; i < 64; ++i) {
            auto src = f.data.vectors.row(rng.bounded(f.data.size()));
            for (std::uint32_t d = 0; d < f.queries.dim; ++d)
                row[d] = src[d] + 0.02f * static_cast<float>(rng.gaussian());
            f.queries.push_back(i, row);
        }
        return f;
    }();
    return fx;
}

/// Writes one shard file per (node, level) using the placement hash, and
/// returns each node's store config. Every node gets a file for every
/// level, empty when it owns no partitions there.
std::vector<StoreConfig> write_shards(const HierarchicalIndex& index,
                                      std::uint32_t node_count,
                                      const std::filesystem::path& dir) {
    std::vector<StoreConfig> configs(node_count);
    for (auto& cfg : configs) {
        cfg.dim = index.dim;
        cfg.metric = index.metric;
    }
    for (std::size_t li = 0; li < index.levels.size(); ++li) {
        auto shuffled = shuffle_partitions(index.levels[li], node_count);
        for (std::uint32_t n = 0; n < node_count; ++n) {
            auto path = dir / ("node" + std::to_string(n) + "_level" +
                               std::to_string(li) + ".part");
            write_partitions(shuffled.by_node[n], index.dim, path);
            configs[n].level_files[static_cast<std::uint32_t>(li)] = path;
        }
    }
    return configs;
}

struct StoreSet {
    std::vector<std::unique_ptr<StoreServer>> servers;
    std::vector<SocketAddress> addresses;

    explicit StoreSet(const std::vector<StoreConfig>& configs) {
        for (const auto& cfg : configs) {
            servers.push_back(
                std::make_unique<StoreServer>(cfg, parse_address("127.0.0.1:0")));
            addresses.push_back(servers.back()->address());
        }
    }
};

} // namespace

TEST_CASE("wire: partition request codec round trip") {
    Rng rng(0x11ce);
    for (int i = 0; i < 50; ++i) {
        const PartitionRequest req = random_request(rng);
        const auto bytes = encode_partition_request(req);
        CHECK(bytes.size() == 13 + 4 * req.query.size() + 8 * req.pids.size());
        const PartitionRequest back = decode_partition_request(bytes);
        CHECK(back.level == req.level);
        CHECK(back.m == req.m);
        CHECK(back.query == req.query);
        CHECK(back.pids == req.pids);
    }
}

TEST_CASE("wire: partition request decoder rejects damage") {
    Rng rng(0x11cf);
    const PartitionRequest req = random_request(rng);
    const auto bytes = encode_partition_request(req);

    // Truncation anywhere must throw, never read out of bounds.
    for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
        std::span<const unsigned char> head(bytes.data(), cut);
        CHECK_THROWS_AS(decode_partition_request(head), ProtocolError);
    }
    auto padded = bytes;
    padded.push_back(0);
    CHECK_THROWS_AS(decode_partition_request(padded), ProtocolError);

    // A zero-dim query is meaningless and refused outright.
    std::vector<unsigned char> zero_dim = {0, 1, 0, 0, 0, 0, 0,
                                           0, 0, 0, 0, 0, 0};
    CHECK_THROWS_AS(decode_partition_request(zero_dim), ProtocolError);
}

TEST_CASE("wire: partition response codec and payload bound") {
    Rng rng(0x22aa);
    for (std::size_t count : {std::size_t{0}, std::size_t{1}, std::size_t{7},
                              std::size_t{512}}) {
        const auto cands = random_candidates(rng, count);
        const auto bytes = encode_partition_response(cands);
        CHECK(bytes.size() == 4 + kCandidateWireBytes * count);
        const auto back = decode_partition_response(bytes, 512);
        CHECK(back == cands);
    }

    // m = 512 pins the response payload to at most 12 * 512 + 4 bytes.
    const auto full = random_candidates(rng, 512);
    CHECK(encode_partition_response(full).size() == 6148);

    // A peer claiming more than m candidates is refused.
    const auto bytes = encode_partition_response(full);
    CHECK_THROWS_AS(decode_partition_response(bytes, 511), ProtocolError);
    for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{100}})
        CHECK_THROWS_AS(
            decode_partition_response({bytes.data(), cut}, 512), ProtocolError);
    auto padded = bytes;
    padded.push_back(0);
    CHECK_THROWS_AS(decode_partition_response(padded, 512), ProtocolError);
}

TEST_CASE("wire: error body codec round trip") {
    Rng rng(0x33bb);
    for (const std::string& message :
         {std::string{}, std::string{"x"},
          std::string{"partition 7 is not placed on this node"},
          std::string(300, 'z')}) {
        ErrorBody err{static_cast<std::uint32_t>(rng.bounded(10)), rng.next(),
                      message};
        const auto bytes = encode_error(err);
        CHECK(bytes.size() == 12 + message.size());
        const ErrorBody back = decode_error(bytes);
        CHECK(back.code == err.code);
        CHECK(back.pid == err.pid);
        CHECK(back.message == err.message);
    }
    std::vector<unsigned char> stub(11, 0);
    CHECK_THROWS_AS(decode_error(stub), ProtocolError);
}

TEST_CASE("wire: frame io over a socketpair") {
    int sp[2];
    REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, sp) == 0);

    const std::vector<unsigned char> payload = {1, 2, 3, 4, 5};
    write_frame(sp[0], kOpPing, payload);
    auto frame = read_frame(sp[1]);
    REQUIRE(frame.has_value());
    CHECK(frame->opcode == kOpPing);
    CHECK(frame->payload == payload);
    CHECK(frame->wire_size() == 5 + payload.size());

    // Empty payload is legal: the length field still covers the opcode.
    write_frame(sp[0], kOpStats, {});
    frame = read_frame(sp[1]);
    REQUIRE(frame.has_value());
    CHECK(frame->opcode == kOpStats);
    CHECK(frame->payload.empty());

    // Length 0 cannot cover an opcode.
    const unsigned char zeros[4] = {0, 0, 0, 0};
    REQUIRE(::send(sp[0], zeros, 4, 0) == 4);
    CHECK_THROWS_AS(read_frame(sp[1]), ProtocolError);

    // Oversized length is rejected before any allocation.
    unsigned char big[4];
    store_u32le(big, kMaxFrameBytes + 1);
    REQUIRE(::send(sp[0], big, 4, 0) == 4);
    CHECK_THROWS_AS(read_frame(sp[1]), ProtocolError);

    // EOF mid-frame is a protocol error, not a clean close.
    const unsigned char partial[2] = {9, 0};
    REQUIRE(::send(sp[0], partial, 2, 0) == 2);
    ::close(sp[0]);
    CHECK_THROWS_AS(read_frame(sp[1]), ProtocolError);
    ::close(sp[1]);

    // Clean EOF at a frame boundary reads as nullopt.
    REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, sp) == 0);
    ::close(sp[0]);
    CHECK(!read_frame(sp[1]).has_value());
    CHECK_THROWS_AS(
        write_frame(sp[1], kOpPing, std::vector<unsigned char>(kMaxFrameBytes)),
        ProtocolError);
    ::close(sp[1]);
}

TEST_CASE("wire: parse_address") {
    SocketAddress a = parse_address("127.0.0.1:8080");
    CHECK(a.host == "127.0.0.1");
    CHECK(a.port == 8080);
    CHECK(a.str() == "127.0.0.1:8080");

    a = parse_address("localhost:0");
    CHECK(a.host == "127.0.0.1");
    CHECK(a.port == 0);

    CHECK_THROWS_AS(parse_address("noport"), std::invalid_argument);
    CHECK_THROWS_AS(parse_address(":123"), std::invalid_argument);
    CHECK_THROWS_AS(parse_address("host:"), std::invalid_argument);
    CHECK_THROWS_AS(parse_address("host:banana"), std::invalid_argument);
    CHECK_THROWS_AS(parse_address("host:70000"), std::invalid_argument);
}

TEST_CASE("store: serves scans, errors, and counters over tcp") {
    const auto& fx = fixture();
    TempDir tmp("store_basic");
    const auto configs = write_shards(fx.index, 1, tmp.path);
    StoreServer server(configs[0], parse_address("127.0.0.1:0"));
    CHECK(server.port() != 0);

    RawClient client(server.address());

    // 1: ping echoes its payload.
    const std::vector<unsigned char> token = {0xde, 0xad, 0xbe, 0xef};
    Frame reply = client.call(kOpPing, token);
    CHECK(reply.opcode == kOpPingReply);
    CHECK(reply.payload == token);

    PartitionRequest req;
    req.level = 0;
    req.m = 16;
    const auto& part0 = fx.index.levels[0][0];
    req.query.assign(part0.member(0, fx.index.dim).begin(),
                     part0.member(0, fx.index.dim).end());

    // 2: an empty pid list is a valid no-op scan.
    reply = client.call(kOpGetPartitionResult, encode_partition_request(req));
    CHECK(reply.opcode == kOpPartitionResult);
    CHECK(decode_partition_response(reply.payload, req.m).empty());

    // 3: scanning the partition holding the query returns it at distance 0.
    req.pids = {part0.pid};
    reply = client.call(kOpGetPartitionResult, encode_partition_request(req));
    CHECK(reply.opcode == kOpPartitionResult);
    auto hits = decode_partition_response(reply.payload, req.m);
    REQUIRE(!hits.empty());
    CHECK(hits.front().id == part0.member_ids[0]);
    CHECK(hits.front().distance == 0.0f);
    CHECK(std::is_sorted(hits.begin(), hits.end(), candidate_less));

    // 4: a pid this node does not hold names itself in the error.
    req.pids = {0xdeadbeefull};
    REQUIRE(fx.index.pid_maps[0].count(0xdeadbeefull) == 0);
    reply = client.call(kOpGetPartitionResult, encode_partition_request(req));
    CHECK(reply.opcode == kOpError);
    ErrorBody err = decode_error(reply.payload);
    CHECK(err.code == kErrUnknownPid);
    CHECK(err.pid == 0xdeadbeefull);

    // 5: a level this node has no shard for is malformed.
    req.level = 200;
    req.pids.clear();
    reply = client.call(kOpGetPartitionResult, encode_partition_request(req));
    CHECK(reply.opcode == kOpError);
    CHECK(decode_error(reply.payload).code == kErrMalformed);

    // 6: a query of the wrong width is malformed.
    req.level = 0;
    req.query.push_back(0.0f);
    reply = client.call(kOpGetPartitionResult, encode_partition_request(req));
    CHECK(reply.opcode == kOpError);
    CHECK(decode_error(reply.payload).code == kErrMalformed);

    // 7: stats text reports the counters as this connection saw them.
    reply = client.call(kOpStats, {});
    CHECK(reply.opcode == kOpStatsReply);
    const std::string text(reinterpret_cast<const char*>(reply.payload.data()),
                           reply.payload.size());
    const std::string expect_head = "requests=7\npartitions_read=1\nbytes_out=";
    CHECK(text.substr(0, expect_head.size()) == expect_head);

    const StoreStats stats = server.stats();
    CHECK(stats.requests == 7);
    CHECK(stats.partitions_read == 1);
    CHECK(stats.bytes_out > 0);

    server.stop();
    server.stop(); // idempotent
    CHECK(server.stats().requests == 7);
}

TEST_CASE("store: malformed traffic answers an error and closes") {
    const auto& fx = fixture();
    TempDir tmp("store_malformed");
    const auto configs = write_shards(fx.index, 1, tmp.path);
    StoreServer server(configs[0], parse_address("127.0.0.1:0"));

    // Unknown opcode.
    {
        RawClient client(server.address());
        Frame reply = client.call(0x40, {});
        CHECK(reply.opcode == kOpError);
        CHECK(decode_error(reply.payload).code == kErrMalformed);
        CHECK(!read_frame(client.fd).has_value()); // server closed
    }
    // Garbage request body.
    {
        RawClient client(server.address());
        const std::vector<unsigned char> junk = {1, 2, 3};
        Frame reply = client.call(kOpGetPartitionResult, junk);
        CHECK(reply.opcode == kOpError);
        CHECK(decode_error(reply.payload).code == kErrMalformed);
        CHECK(!read_frame(client.fd).has_value());
    }
}

TEST_CASE("engine: matches the local search exactly") {
    const auto& fx = fixture();
    for (std::uint32_t node_count : {1u, 4u}) {
        CAPTURE(node_count);
        TempDir tmp("engine_equal_" + std::to_string(node_count));
        StoreSet stores(write_shards(fx.index, node_count, tmp.path));
        QueryEngine engine(EngineIndex::from_index(fx.index), stores.addresses);
        CHECK(engine.store_count() == node_count);

        for (std::uint32_t m : {8u, 32u}) {
            SearchParams params;
            params.m = m;
            params.k = 5;
            for (std::size_t qi = 0; qi < fx.queries.size(); ++qi) {
                auto q = fx.queries.row(qi);
                auto [want, local_trace] = search(fx.index, q, params);
                auto [got, trace] = engine.search(q, params);
                REQUIRE(got.size() == want.size());
                for (std::size_t i = 0; i < want.size(); ++i) {
                    CHECK(got[i].id == want[i].id);
                    CHECK(got[i].distance == want[i].distance);
                }

                CHECK(trace.fetch_rounds == fx.index.clustered_levels());
                CHECK(trace.root_distance_computations ==
                      local_trace.root_distance_computations);
                REQUIRE(trace.levels.size() == fx.index.clustered_levels());
                for (std::size_t li = 0; li < trace.levels.size(); ++li) {
                    const auto& lt = trace.levels[li];
                    CHECK(lt.nodes_contacted >= 1);
                    CHECK(lt.nodes_contacted <=
                          std::min<std::uint64_t>(node_count,
                                                  local_trace.levels[li].pids.size()));
                    CHECK(lt.max_node_response_payload <=
                          4 + kCandidateWireBytes * params.m);
                    CHECK(lt.request_bytes >
                          8 * local_trace.levels[li].pids.size());
                }
            }
        }
    }
}

TEST_CASE("engine: concurrent searches stay exact") {
    const auto& fx = fixture();
    TempDir tmp("engine_concurrent");
    StoreSet stores(write_shards(fx.index, 3, tmp.path));
    QueryEngine engine(EngineIndex::from_index(fx.index), stores.addresses);

    SearchParams params;
    params.m = 16;
    params.k = 4;
    std::vector<std::vector<Candidate>> want(fx.queries.size());
    for (std::size_t qi = 0; qi < fx.queries.size(); ++qi)
        want[qi] = search(fx.index, fx.queries.row(qi), params).first;

    std::vector<int> mismatches(4, 0);
    std::vector<std::thread> workers;
    for (int w = 0; w < 4; ++w)
        workers.emplace_back([&, w] {
            for (std::size_t qi = static_cast<std::size_t>(w);
                 qi < fx.queries.size(); qi += 4) {
                auto got = engine.search(fx.queries.row(qi), params).first;
                if (got != want[qi]) ++mismatches[w];
            }
        });
    for (auto& t : workers) t.join();
    for (int w = 0; w < 4; ++w) CHECK(mismatches[w] == 0);
}

TEST_CASE("engine: restarts from index.meta and root.graph alone") {
    const auto& fx = fixture();
    TempDir tmp("engine_restart");
    save_index(fx.index, tmp / "index");
    // Partition payloads belong to the stores; the query node must come up
    // without them.
    for (std::size_t li = 0; li < fx.index.levels.size(); ++li)
        std::filesystem::remove(tmp / "index" /
                                ("level" + std::to_string(li) + ".part"));

    const EngineIndex loaded = load_engine_index(tmp / "index");
    CHECK(loaded.dim == fx.index.dim);
    CHECK(loaded.metric == fx.index.metric);
    CHECK(loaded.clustered_levels == fx.index.clustered_levels());
    CHECK(loaded.root.size() == fx.index.root.size());

    StoreSet stores(write_shards(fx.index, 2, tmp.path));
    QueryEngine engine(loaded, stores.addresses);
    SearchParams params;
    params.m = 12;
    params.k = 3;
    for (std::size_t qi = 0; qi < 8; ++qi) {
        auto q = fx.queries.row(qi);
        auto want = search(fx.index, q, params).first;
        auto got = engine.search(q, params).first;
        CHECK(got == want);
    }
}

TEST_CASE("engine: store failures name the node") {
    const auto& fx = fixture();
    SearchParams params;
    params.m = 16;
    params.k = 4;

    SUBCASE("missing level shard") {
        TempDir tmp("engine_missing_level");
        auto configs = write_shards(fx.index, 1, tmp.path);
        configs[0].level_files.erase(1); // top level gone
        StoreServer server(configs[0], parse_address("127.0.0.1:0"));
        QueryEngine engine(EngineIndex::from_index(fx.index), {server.address()});
        CHECK_THROWS_WITH_AS(engine.search(fx.queries.row(0), params),
                             doctest::Contains("no shard for level 1"), RpcError);
    }

    SUBCASE("partition placed on another node") {
        TempDir tmp("engine_wrong_node");
        // Shards cut for a two-node cluster, but only node 0 is offered, so
        // pids hashed to node 1 are unknown to it.
        auto configs = write_shards(fx.index, 2, tmp.path);
        StoreServer server(configs[0], parse_address("127.0.0.1:0"));
        QueryEngine engine(EngineIndex::from_index(fx.index), {server.address()});
        bool hit = false;
        try {
            engine.search(fx.queries.row(0), params);
        } catch (const RpcError& e) {
            hit = true;
            CHECK(std::string(e.what()).find("is not placed") != std::string::npos);
            CHECK(std::string(e.what()).find(server.address().str()) !=
                  std::string::npos);
        }
        CHECK(hit);
    }

    SUBCASE("silent store times out") {
        // A listener that never accepts still completes handshakes from its
        // backlog, so the engine connects and then starves.
        const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        REQUIRE(fd >= 0);
        sockaddr_in sa{};
        sa.sin_family = AF_INET;
        sa.sin_port = 0;
        sa.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        REQUIRE(::bind(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) == 0);
        REQUIRE(::listen(fd, 4) == 0);
        socklen_t len = sizeof sa;
        REQUIRE(::getsockname(fd, reinterpret_cast<sockaddr*>(&sa), &len) == 0);
        const SocketAddress addr{"127.0.0.1", ntohs(sa.sin_port)};

        EngineOptions opts;
        opts.timeout_ms = 150;
        QueryEngine engine(EngineIndex::from_index(fx.index), {addr}, opts);
        bool hit = false;
        try {
            engine.search(fx.queries.row(0), params);
        } catch (const RpcError& e) {
            hit = true;
            CHECK(std::string(e.what()).find(addr.str()) != std::string::npos);
            CHECK(std::string(e.what()).find("timed out") != std::string::npos);
        }
        CHECK(hit);
        ::close(fd);
    }

    SUBCASE("connection refused at startup") {
        const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        REQUIRE(fd >= 0);
        sockaddr_in sa{};
        sa.sin_family = AF_INET;
        sa.sin_port = 0;
        sa.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        REQUIRE(::bind(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) == 0);
        socklen_t len = sizeof sa;
        REQUIRE(::getsockname(fd, reinterpret_cast<sockaddr*>(&sa), &len) == 0);
        const SocketAddress addr{"127.0.0.1", ntohs(sa.sin_port)};
        ::close(fd); // bound but never listened: connections refuse

        CHECK_THROWS_WITH_AS(
            QueryEngine(EngineIndex::from_index(fx.index), {addr}),
            doctest::Contains(("connect " + addr.str()).c_str()), RpcError);
    }
}

TEST_CASE("engine: rejects bad arguments") {
    const auto& fx = fixture();
    TempDir tmp("engine_args");
    StoreSet stores(write_shards(fx.index, 1, tmp.path));
    QueryEngine engine(EngineIndex::from_index(fx.index), stores.addresses);

    CHECK_THROWS_AS(QueryEngine(EngineIndex::from_index(fx.index), {}),
                    std::invalid_argument);

    SearchParams params;
    params.m = 8;
    params.k = 9; // k > m
    CHECK_THROWS_AS(engine.search(fx.queries.row(0), params),
                    std::invalid_argument);
    params.k = 2;
    std::vector<float> narrow(fx.index.dim - 1, 0.0f);
    CHECK_THROWS_AS(engine.search(narrow, params), std::invalid_argument);
}
