#include "strata/wire.hpp"

#include <sys/socket.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>

#include "strata/errors.hpp"
#include "strata/io.hpp"

namespace strata {

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    unsigned char b[4];
    store_u32le(b, v);
    out.insert(out.end(), b, b + 4);
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    unsigned char b[8];
    store_u64le(b, v);
    out.insert(out.end(), b, b + 8);
}

void put_f32(std::vector<unsigned char>& out, float v) {
    unsigned char b[4];
    store_f32le(b, v);
    out.insert(out.end(), b, b + 4);
}

struct Reader {
    std::span<const unsigned char> buf;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) {
        if (buf.size() - pos < n)
            throw ProtocolError(std::string("payload truncated reading ") + what);
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return buf[pos++];
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = load_u32le(buf.data() + pos);
        pos += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = load_u64le(buf.data() + pos);
        pos += 8;
        return v;
    }
    float f32(const char* what) {
        need(4, what);
        float v = load_f32le(buf.data() + pos);
        pos += 4;
        return v;
    }
    void done(const char* what) {
        if (pos != buf.size())
            throw ProtocolError(std::string("trailing bytes after ") + what);
    }
};

} // namespace

std::vector<unsigned char> encode_partition_request(const PartitionRequest& req) {
    std::vector<unsigned char> out;
    out.reserve(13 + 4 * req.query.size() + 8 * req.pids.size());
    out.push_back(req.level);
    put_u32(out, req.m);
    put_u32(out, static_cast<std::uint32_t>(req.query.size()));
    for (float v : req.query) put_f32(out, v);
    put_u32(out, static_cast<std::uint32_t>(req.pids.size()));
    for (VectorId pid : req.pids) put_u64(out, pid);
    return out;
}

PartitionRequest decode_partition_request(std::span<const unsigned char> payload) {
    Reader r{payload};
    PartitionRequest req;
    req.level = r.u8("level");
    req.m = r.u32("m");
    const std::uint32_t dim = r.u32("dim");
    if (dim == 0) throw ProtocolError("request dim is zero");
    r.need(4ull * dim, "query vector");
    req.query.resize(dim);
    for (std::uint32_t i = 0; i < dim; ++i) req.query[i] = r.f32("query");
    const std::uint32_t pid_count = r.u32("pidCount");
    r.need(8ull * pid_count, "pid list");
    req.pids.resize(pid_count);
    for (std::uint32_t i = 0; i < pid_count; ++i) req.pids[i] = r.u64("pid");
    r.done("GetPartitionResult request");
    return req;
}

std::vector<unsigned char> encode_partition_response(std::span<const Candidate> cands) {
    std::vector<unsigned char> out;
    out.reserve(4 + kCandidateWireBytes * cands.size());
    put_u32(out, static_cast<std::uint32_t>(cands.size()));
    for (const Candidate& c : cands) {
        put_u64(out, c.id);
        put_f32(out, c.distance);
    }
    return out;
}

std::vector<Candidate> decode_partition_response(std::span<const unsigned char> payload,
                                                 std::uint32_t max_count) {
    Reader r{payload};
    const std::uint32_t count = r.u32("count");
    if (count > max_count)
        throw ProtocolError("response carries " + std::to_string(count) +
                            " candidates, limit " + std::to_string(max_count));
    r.need(kCandidateWireBytes * static_cast<std::size_t>(count), "candidates");
    std::vector<Candidate> cands(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        cands[i].id = r.u64("candidate id");
        cands[i].distance = r.f32("candidate distance");
    }
    r.done("GetPartitionResult response");
    return cands;
}

std::vector<unsigned char> encode_error(const ErrorBody& err) {
    std::vector<unsigned char> out;
    out.reserve(12 + err.message.size());
    put_u32(out, err.code);
    put_u64(out, err.pid);
    out.insert(out.end(), err.message.begin(), err.message.end());
    return out;
}

ErrorBody decode_error(std::span<const unsigned char> payload) {
    Reader r{payload};
    ErrorBody err;
    err.code = r.u32("error code");
    err.pid = r.u64("error pid");
    err.message.assign(reinterpret_cast<const char*>(payload.data()) + r.pos,
                       payload.size() - r.pos);
    return err;
}

void write_frame(int fd, std::uint8_t opcode, std::span<const unsigned char> payload) {
    if (payload.size() + 1 > kMaxFrameBytes)
        throw ProtocolError("frame exceeds the 16 MiB cap");
    std::vector<unsigned char> buf;
    buf.reserve(5 + payload.size());
    unsigned char head[4];
    store_u32le(head, static_cast<std::uint32_t>(payload.size() + 1));
    buf.insert(buf.end(), head, head + 4);
    buf.push_back(opcode);
    buf.insert(buf.end(), payload.begin(), payload.end());

    std::size_t sent = 0;
    while (sent < buf.size()) {
        const ssize_t n =
            ::send(fd, buf.data() + sent, buf.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw RpcError(std::string("send failed: ") + std::strerror(errno));
        }
        sent += static_cast<std::size_t>(n);
    }
}

namespace {

// Reads exactly n bytes. Returns false on EOF before the first byte when
// eof_ok, throws otherwise.
bool read_exact(int fd, unsigned char* dst, std::size_t n, bool eof_ok) {
    std::size_t got = 0;
    while (got < n) {
        const ssize_t r = ::recv(fd, dst + got, n - got, 0);
        if (r < 0) {
            if (errno == EINTR) continue;
            if (errno == EAGAIN || errno == EWOULDBLOCK)
                throw RpcError("receive timed out");
            throw RpcError(std::string("recv failed: ") + std::strerror(errno));
        }
        if (r == 0) {
            if (got == 0 && eof_ok) return false;
            throw ProtocolError("connection closed mid-frame");
        }
        got += static_cast<std::size_t>(r);
    }
    return true;
}

} // namespace

std::optional<Frame> read_frame(int fd) {
    unsigned char head[4];
    if (!read_exact(fd, head, 4, /*eof_ok=*/true)) return std::nullopt;
    const std::uint32_t len = load_u32le(head);
    if (len == 0) throw ProtocolError("frame length 0 cannot cover an opcode");
    if (len > kMaxFrameBytes)
        throw ProtocolError("frame of " + std::to_string(len) +
                            " bytes exceeds the 16 MiB cap");
    Frame frame;
    frame.payload.resize(len - 1);
    unsigned char opcode = 0;
    read_exact(fd, &opcode, 1, /*eof_ok=*/false);
    frame.opcode = opcode;
    if (!frame.payload.empty())
        read_exact(fd, frame.payload.data(), frame.payload.size(), false);
    return frame;
}

SocketAddress parse_address(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size())
        throw std::invalid_argument("address must be host:port, got '" + text + "'");
    SocketAddress addr;
    addr.host = text.substr(0, colon);
    if (addr.host == "localhost") addr.host = "127.0.0.1";
    const std::string port = text.substr(colon + 1);
    char* end = nullptr;
    const unsigned long v = std::strtoul(port.c_str(), &end, 10);
    if (end == port.c_str() || *end != '\0' || v > 65535)
        throw std::invalid_argument("bad port in address '" + text + "'");
    addr.port = static_cast<std::uint16_t>(v);
    return addr;
}

} // namespace strata
