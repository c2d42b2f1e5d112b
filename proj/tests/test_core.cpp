#include <doctest.h>

#include <cmath>
#include <vector>

#include "strata/distance.hpp"
#include "strata/rng.hpp"
#include "strata/types.hpp"

using namespace strata;

TEST_SUITE_BEGIN("core");

TEST_CASE("squared l2 basics") {
    std::vector<float> a{1.f, 0.f};
    std::vector<float> b{0.f, 1.f};
    CHECK(distance(a, b, Metric::SquaredL2) == 2.0f);
    CHECK(distance(a, a, Metric::SquaredL2) == 0.0f);
    CHECK(distance(b, b, Metric::SquaredL2) == 0.0f);
}

TEST_CASE("cosine basics") {
    std::vector<float> a{1.f, 0.f};
    std::vector<float> b{0.f, 1.f};
    std::vector<float> z{0.f, 0.f};
    CHECK(distance(a, b, Metric::Cosine) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(distance(a, a, Metric::Cosine) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(distance(a, z, Metric::Cosine) == 1.0f);
    CHECK(distance(z, z, Metric::Cosine) == 1.0f);
}

TEST_CASE("negated inner product") {
    std::vector<float> a{2.f, 3.f};
    std::vector<float> b{1.f, -1.f};
    CHECK(distance(a, b, Metric::NegInnerProduct) == doctest::Approx(1.0f));
    // Larger dot product means closer.
    std::vector<float> c{4.f, 4.f};
    CHECK(distance(a, c, Metric::NegInnerProduct) < distance(a, b, Metric::NegInnerProduct));
}

TEST_CASE("dimension mismatch throws") {
    std::vector<float> a{1.f, 0.f};
    std::vector<float> b{0.f, 1.f, 2.f};
    CHECK_THROWS_AS(distance(a, b, Metric::SquaredL2), std::invalid_argument);
}

TEST_CASE("distance matches double precision reference") {
    Rng rng(42);
    for (int dim : {7, 32, 128}) {
        for (int rep = 0; rep < 350; ++rep) {
            std::vector<float> a(dim), b(dim);
            for (int i = 0; i < dim; ++i) {
                a[i] = static_cast<float>(rng.uniform() * 2 - 1);
                b[i] = static_cast<float>(rng.uniform() * 2 - 1);
            }
            for (Metric m :
                 {Metric::SquaredL2, Metric::Cosine, Metric::NegInnerProduct}) {
                double ref = 0;
                if (m == Metric::SquaredL2) {
                    for (int i = 0; i < dim; ++i) {
                        double t = static_cast<double>(a[i]) - b[i];
                        ref += t * t;
                    }
                } else {
                    double dp = 0, na = 0, nb = 0;
                    for (int i = 0; i < dim; ++i) {
                        dp += static_cast<double>(a[i]) * b[i];
                        na += static_cast<double>(a[i]) * a[i];
                        nb += static_cast<double>(b[i]) * b[i];
                    }
                    ref = m == Metric::Cosine ? 1.0 - dp / (std::sqrt(na) * std::sqrt(nb))
                                              : -dp;
                }
                float got = distance(a, b, m);
                double scale = std::max(1.0, std::fabs(ref));
                CHECK(std::fabs(got - ref) / scale <= 1e-5);
            }
        }
    }
}

TEST_CASE("recall equals one on identical lists") {
    std::vector<Candidate> truth{{1, 0.1f}, {2, 0.2f}, {3, 0.3f}};
    std::vector<Candidate> result = truth;
    CHECK(recall_at_k(result, truth, 3) == 1.0);
    CHECK(recall_at_k(std::vector<Candidate>{}, truth, 3) == 0.0);
}

TEST_CASE("recall honors ground-truth distance ties") {
    // Truth top-5, and the 3rd through 5th entries share one distance. Any of
    // them is a legitimate third answer.
    std::vector<Candidate> truth{{10, 1.0f}, {11, 2.0f}, {12, 3.0f}, {13, 3.0f}, {14, 3.0f}};
    std::vector<Candidate> result{{10, 1.0f}, {11, 2.0f}, {14, 3.0f}};
    CHECK(recall_at_k(result, truth, 3) == 1.0);

    std::vector<Candidate> miss{{10, 1.0f}, {11, 2.0f}, {99, 3.0f}};
    CHECK(recall_at_k(miss, truth, 3) == doctest::Approx(2.0 / 3.0));

    // Duplicate ids in the result only count once.
    std::vector<Candidate> dup{{10, 1.0f}, {10, 1.0f}, {13, 3.0f}};
    CHECK(recall_at_k(dup, truth, 3) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("recall id-only variant") {
    std::vector<VectorId> truth{1, 2, 3, 4};
    std::vector<VectorId> res{3, 2, 9};
    CHECK(recall_at_k(res, truth, 3) == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(recall_at_k(res, std::vector<VectorId>{1, 2}, 3),
                    std::invalid_argument);
}

TEST_CASE("candidate wire size is pinned") {
    CHECK(kCandidateWireBytes == 12);
    CHECK(sizeof(VectorId) == 8);
    CHECK(sizeof(float) == 4);
}

TEST_CASE("search params validation") {
    SearchParams p{256, 10, 0};
    CHECK_NOTHROW(p.validate());
    CHECK(p.effective_root_beam() == 256);
    SearchParams small{32, 10, 0};
    CHECK(small.effective_root_beam() == 64);
    SearchParams bad{16, 32, 0};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    SearchParams bad2{64, 10, 32};
    CHECK_THROWS_AS(bad2.validate(), std::invalid_argument);
}

TEST_CASE("placement hash is fnv1a over pid bytes") {
    // Independent rendering of FNV-1a 64 applied to the little-endian bytes.
    auto reference = [](std::uint64_t pid) {
        unsigned char bytes[8];
        for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(pid >> (8 * i));
        std::uint64_t h = 14695981039346656037ull;
        for (unsigned char b : bytes) {
            h = (h ^ b) * 1099511628211ull;
        }
        return h;
    };
    for (VectorId pid : {0ull, 1ull, 2ull, 255ull, 1000003ull, 0xdeadbeefcafeull}) {
        CHECK(pid_hash(pid) == reference(pid));
    }
    // Frozen spot value so the constants cannot drift silently.
    CHECK(pid_hash(0) == reference(0));
    CHECK(pid_hash(1) != pid_hash(0));
}

TEST_CASE("candidate ordering ties break by id") {
    Candidate a{5, 1.0f}, b{3, 1.0f}, c{9, 0.5f};
    CHECK(candidate_less(c, a));
    CHECK(candidate_less(b, a));
    CHECK(!candidate_less(a, b));
}

TEST_SUITE_END();
