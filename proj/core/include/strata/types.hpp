#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace strata {

using VectorId = std::uint64_t;

enum class Metric : std::uint8_t {
    SquaredL2 = 0,
    Cosine = 1,
    NegInnerProduct = 2,
};

std::string_view metric_name(Metric m);
Metric parse_metric(std::string_view name);

/// One scored result. Lower distance is better for every metric; L2 stays
/// squared, inner product is negated on computation.
struct Candidate {
    VectorId id = 0;
    float distance = 0.0f;

    friend bool operator==(const Candidate&, const Candidate&) = default;
};

/// Canonical result order: distance ascending, id ascending on ties.
inline bool candidate_less(const Candidate& a, const Candidate& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.id < b.id;
}

/// Serialized size of one candidate on the wire: 8-byte id + 4-byte distance.
inline constexpr std::size_t kCandidateWireBytes = 12;

/// Flat row-major vector storage. Row i holds the components of ids[i].
struct VectorArray {
    std::uint32_t dim = 0;
    std::vector<VectorId> ids;
    std::vector<float> data;

    std::size_t size() const { return ids.size(); }
    bool empty() const { return ids.empty(); }

    std::span<const float> row(std::size_t i) const {
        return {data.data() + i * dim, dim};
    }
    std::span<float> row(std::size_t i) {
        return {data.data() + i * dim, dim};
    }

    void push_back(VectorId id, std::span<const float> v) {
        ids.push_back(id);
        data.insert(data.end(), v.begin(), v.end());
    }

    void reserve(std::size_t n) {
        ids.reserve(n);
        data.reserve(n * dim);
    }
};

/// Per-query knobs for hierarchical search.
struct SearchParams {
    std::uint32_t m = 256;       // partitions fetched per level
    std::uint32_t k = 10;        // final result count, k <= m
    std::uint32_t root_beam = 0; // 0 means default: max(m, 64)

    std::uint32_t effective_root_beam() const {
        std::uint32_t b = root_beam ? root_beam : (m > 64 ? m : 64);
        return b < m ? m : b;
    }

    void validate() const {
        if (m == 0) throw std::invalid_argument("search: m must be positive");
        if (k == 0 || k > m) throw std::invalid_argument("search: require 1 <= k <= m");
        if (root_beam != 0 && root_beam < m)
            throw std::invalid_argument("search: rootBeam must be >= m");
    }
};

/// Placement hash, FNV-1a over the 8 little-endian bytes of the pid.
/// Owning node of a partition is pid_hash(pid) % nodeCount.
inline std::uint64_t pid_hash(VectorId pid) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (int i = 0; i < 8; ++i) {
        h ^= (pid >> (8 * i)) & 0xffull;
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace strata
