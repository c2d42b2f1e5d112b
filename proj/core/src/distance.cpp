#include "strata/distance.hpp"

#include <cmath>
#include <unordered_set>

namespace strata {

std::string_view metric_name(Metric m) {
    switch (m) {
        case Metric::SquaredL2: return "l2";
        case Metric::Cosine: return "cosine";
        case Metric::NegInnerProduct: return "ip";
    }
    throw std::invalid_argument("unknown metric value");
}

Metric parse_metric(std::string_view name) {
    if (name == "l2") return Metric::SquaredL2;
    if (name == "cosine") return Metric::Cosine;
    if (name == "ip") return Metric::NegInnerProduct;
    throw std::invalid_argument("unknown metric name: " + std::string(name));
}

namespace {

// Sixteen lanes reduced in a fixed tree: wide enough for the vectorizer,
// and the summation order never depends on data or thread count, so results
// stay bit-stable run to run.
constexpr std::size_t kLanes = 16;

float reduce_lanes(const float* s) {
    float p0 = (s[0] + s[1]) + (s[2] + s[3]);
    float p1 = (s[4] + s[5]) + (s[6] + s[7]);
    float p2 = (s[8] + s[9]) + (s[10] + s[11]);
    float p3 = (s[12] + s[13]) + (s[14] + s[15]);
    return (p0 + p1) + (p2 + p3);
}

float l2sq(const float* a, const float* b, std::size_t d) {
    float s[kLanes] = {};
    std::size_t i = 0;
    for (; i + kLanes <= d; i += kLanes)
        for (std::size_t l = 0; l < kLanes; ++l) {
            float dd = a[i + l] - b[i + l];
            s[l] += dd * dd;
        }
    float tail = 0.f;
    for (; i < d; ++i) {
        float dd = a[i] - b[i];
        tail += dd * dd;
    }
    return reduce_lanes(s) + tail;
}

float dot(const float* a, const float* b, std::size_t d) {
    float s[kLanes] = {};
    std::size_t i = 0;
    for (; i + kLanes <= d; i += kLanes)
        for (std::size_t l = 0; l < kLanes; ++l) s[l] += a[i + l] * b[i + l];
    float tail = 0.f;
    for (; i < d; ++i) tail += a[i] * b[i];
    return reduce_lanes(s) + tail;
}

} // namespace

float distance(std::span<const float> a, std::span<const float> b, Metric metric) {
    if (a.size() != b.size())
        throw std::invalid_argument("distance: dimension mismatch");
    switch (metric) {
        case Metric::SquaredL2:
            return l2sq(a.data(), b.data(), a.size());
        case Metric::Cosine: {
            float na = dot(a.data(), a.data(), a.size());
            float nb = dot(b.data(), b.data(), b.size());
            if (na == 0.f || nb == 0.f) return 1.0f;
            return 1.0f - dot(a.data(), b.data(), a.size()) /
                              (std::sqrt(na) * std::sqrt(nb));
        }
        case Metric::NegInnerProduct:
            return -dot(a.data(), b.data(), a.size());
    }
    throw std::invalid_argument("unknown metric value");
}

double recall_at_k(std::span<const Candidate> result,
                   std::span<const Candidate> truth,
                   std::uint32_t k) {
    if (k == 0) throw std::invalid_argument("recall_at_k: k must be positive");
    if (truth.size() < k)
        throw std::invalid_argument("recall_at_k: truth holds fewer than k entries");

    // Everything at or below the k-th true distance is an acceptable answer.
    float kth = truth[k - 1].distance;
    std::unordered_set<VectorId> accepted;
    accepted.reserve(truth.size());
    for (const Candidate& t : truth) {
        if (t.distance <= kth) accepted.insert(t.id);
    }

    std::size_t take = result.size() < k ? result.size() : k;
    std::unordered_set<VectorId> seen;
    seen.reserve(take);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < take; ++i) {
        if (!seen.insert(result[i].id).second) continue;
        if (accepted.count(result[i].id)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(k);
}

double recall_at_k(std::span<const VectorId> result_ids,
                   std::span<const VectorId> truth_ids,
                   std::uint32_t k) {
    if (k == 0) throw std::invalid_argument("recall_at_k: k must be positive");
    if (truth_ids.size() < k)
        throw std::invalid_argument("recall_at_k: truth holds fewer than k entries");

    std::unordered_set<VectorId> accepted(truth_ids.begin(), truth_ids.begin() + k);
    std::size_t take = result_ids.size() < k ? result_ids.size() : k;
    std::unordered_set<VectorId> seen;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < take; ++i) {
        if (!seen.insert(result_ids[i]).second) continue;
        if (accepted.count(result_ids[i])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(k);
}

} // namespace strata
