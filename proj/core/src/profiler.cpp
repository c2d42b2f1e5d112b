#include "strata/profiler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "strata/clustering.hpp"
#include "strata/distance.hpp"
#include "strata/errors.hpp"
#include "strata/graph.hpp"
#include "strata/rng.hpp"

namespace strata {

namespace {

struct EvalPoint {
    double recall = 0.0;
    double cost = 0.0;
};

// Shared minimal-p search: eval must be monotone-ish in p; minimality is
// with respect to the probe grid the doubling pass visited.
template <typename EvalFn>
std::pair<std::uint64_t, EvalPoint> minimal_probe(EvalFn&& eval,
                                                  std::uint64_t cap,
                                                  double target_recall) {
    std::map<std::uint64_t, EvalPoint> seen;
    auto at = [&](std::uint64_t p) -> const EvalPoint& {
        auto it = seen.find(p);
        if (it == seen.end()) it = seen.emplace(p, eval(p)).first;
        return it->second;
    };

    std::uint64_t p = 1, prev = 0;
    double best = 0.0;
    while (true) {
        const EvalPoint& e = at(p);
        best = std::max(best, e.recall);
        if (e.recall >= target_recall) break;
        if (p >= cap)
            throw UnreachableTargetError(
                "recall target unreachable at full scan", best);
        prev = p;
        p = std::min(p * 2, cap);
    }

    std::uint64_t hi = p, lo = prev; // at(lo) misses target (or lo == 0)
    while (hi - lo > 1) {
        std::uint64_t mid = lo + (hi - lo) / 2;
        if (at(mid).recall >= target_recall)
            hi = mid;
        else
            lo = mid;
    }
    return {hi, at(hi)};
}

} // namespace

DensityProbe measure_cost_at_density(const Dataset& sample, double density,
                                     const VectorArray& queries,
                                     const GroundTruth& truth,
                                     double target_recall, std::uint64_t seed) {
    if (!(target_recall > 0.0) || target_recall > 1.0)
        throw std::invalid_argument("measure_cost_at_density: bad target recall");
    if (truth.k < kProfileRecallK)
        throw std::invalid_argument("measure_cost_at_density: truth too shallow");
    if (queries.size() == 0 || truth.rows.size() != queries.size())
        throw std::invalid_argument("measure_cost_at_density: query/truth mismatch");
    const std::size_t n = sample.size();
    if (n == 0) throw std::invalid_argument("measure_cost_at_density: empty sample");

    const std::size_t nq = queries.size();
    std::vector<double> rec(nq), cost(nq);

    auto reduce = [&]() {
        EvalPoint e;
        for (std::size_t i = 0; i < nq; ++i) {
            e.recall += rec[i];
            e.cost += cost[i];
        }
        e.recall /= static_cast<double>(nq);
        e.cost /= static_cast<double>(nq);
        return e;
    };

    DensityProbe probe;
    probe.density = density;

    if (density == 1.0) {
        // Singleton partitions: the index is just the proximity graph, and
        // scanning a partition would recount its one member. Count graph
        // work only.
        GraphBuildParams gp;
        gp.seed = mix_seed(seed, 0x9f01);
        ProximityGraph graph = build_graph(sample.vectors, sample.metric, gp);

        auto eval = [&](std::uint64_t p) {
            const auto pk = static_cast<std::uint32_t>(p);
#pragma omp parallel for schedule(dynamic)
            for (std::int64_t qi = 0; qi < static_cast<std::int64_t>(nq); ++qi) {
                auto [res, stats] = graph_search(
                    graph, queries.row(qi), pk,
                    std::max<std::uint32_t>(pk, 32));
                if (res.size() > kProfileRecallK) res.resize(kProfileRecallK);
                rec[qi] = recall_at_k(res, truth.rows[qi], kProfileRecallK);
                cost[qi] = static_cast<double>(stats.distance_computations);
            }
            return reduce();
        };
        auto [pstar, point] = minimal_probe(eval, n, target_recall);
        probe.probe_count = pstar;
        probe.accessed_vectors = point.cost;
        probe.recall = point.recall;
        return probe;
    }

    ClusteringResult parts =
        partition_at_density(sample.vectors, sample.metric, density, seed);
    const std::size_t kparts = parts.partitions.size();

    GraphBuildParams gp;
    gp.seed = mix_seed(seed, 0x9f02);
    ProximityGraph cgraph = build_graph(parts.centroids, sample.metric, gp);

    auto eval = [&](std::uint64_t p) {
        const auto pk = static_cast<std::uint32_t>(p);
#pragma omp parallel for schedule(dynamic)
        for (std::int64_t qi = 0; qi < static_cast<std::int64_t>(nq); ++qi) {
            auto q = queries.row(qi);
            auto [cents, stats] =
                graph_search(cgraph, q, pk, std::max<std::uint32_t>(pk, 32));
            double c = static_cast<double>(stats.distance_computations);
            std::vector<Candidate> pool;
            for (const Candidate& cent : cents) {
                const Partition& part =
                    parts.partitions[static_cast<std::size_t>(cent.id)];
                c += static_cast<double>(part.size());
                for (std::size_t mi = 0; mi < part.size(); ++mi)
                    pool.push_back(Candidate{
                        part.member_ids[mi],
                        distance(q, part.member(mi, parts.dim), sample.metric)});
            }
            std::sort(pool.begin(), pool.end(), candidate_less);
            if (pool.size() > kProfileRecallK) pool.resize(kProfileRecallK);
            rec[qi] = recall_at_k(pool, truth.rows[qi], kProfileRecallK);
            cost[qi] = c;
        }
        return reduce();
    };
    auto [pstar, point] = minimal_probe(eval, kparts, target_recall);
    probe.probe_count = pstar;
    probe.accessed_vectors = point.cost;
    probe.recall = point.recall;
    return probe;
}

DensityProfile select_balanced_density(const DensityMeasure& measure,
                                       double cost_ratio) {
    if (!(cost_ratio > 1.0))
        throw std::invalid_argument("select_balanced_density: cost_ratio must be > 1");

    DensityProfile profile;
    std::optional<DensityProbe> baseline = measure(1.0);
    if (!baseline)
        throw UnreachableTargetError(
            "recall target unreachable at density 1.0", 0.0);
    profile.baseline_cost = baseline->accessed_vectors;
    profile.probes.push_back(*baseline);

    const double limit = cost_ratio * profile.baseline_cost;
    auto try_probe = [&](double d) {
        std::optional<DensityProbe> p = measure(d);
        if (!p) return false;
        profile.probes.push_back(*p);
        return p->accessed_vectors <= limit;
    };

    double lo = kDensityFloor, hi = 1.0;
    const bool floor_good = try_probe(lo);
    while (hi / lo > kDensityResolution) {
        double mid = std::sqrt(lo * hi);
        if (try_probe(mid) || floor_good)
            hi = mid; // keep walking down when the whole range qualifies
        else
            lo = mid;
    }

    double chosen = 0.0;
    for (const DensityProbe& p : profile.probes)
        if (p.accessed_vectors <= limit && (chosen == 0.0 || p.density < chosen))
            chosen = p.density;
    if (profile.probes.size() < 3) {
        // Too little signal to trust the curve; the robust default wins.
        chosen = 0.1;
        if (std::optional<DensityProbe> p = measure(0.1))
            profile.probes.push_back(*p);
    }
    profile.chosen = chosen;

    std::sort(profile.probes.begin(), profile.probes.end(),
              [](const DensityProbe& a, const DensityProbe& b) {
                  return a.density > b.density;
              });
    return profile;
}

DensityProfile select_balanced_density(const Dataset& sample,
                                       const VectorArray& queries,
                                       const GroundTruth& truth,
                                       double target_recall, double cost_ratio,
                                       std::uint64_t seed) {
    DensityMeasure measure = [&](double density) -> std::optional<DensityProbe> {
        try {
            return measure_cost_at_density(sample, density, queries, truth,
                                           target_recall, seed);
        } catch (const UnreachableTargetError&) {
            return std::nullopt;
        }
    };
    return select_balanced_density(measure, cost_ratio);
}

void write_profile_csv(const DensityProfile& profile,
                       const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.string().c_str(), "w");
    if (!f) throw FormatError(path.string() + ": cannot open for writing");
    std::fputs("density,probe_count,accessed_vectors,recall\n", f);
    for (const DensityProbe& p : profile.probes)
        std::fprintf(f, "%.10g,%llu,%.10g,%.10g\n", p.density,
                     static_cast<unsigned long long>(p.probe_count),
                     p.accessed_vectors, p.recall);
    std::fprintf(f, "chosen,%.10g\n", profile.chosen);
    if (std::fclose(f) != 0) throw FormatError(path.string() + ": close failed");
}

DensityProfile load_profile_csv(const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.string().c_str(), "r");
    if (!f) throw FormatError(path.string() + ": cannot open for reading");
    DensityProfile profile;
    char line[256];
    bool have_chosen = false;
    int lineno = 0;
    while (std::fgets(line, sizeof line, f)) {
        ++lineno;
        if (lineno == 1) {
            if (std::string(line).rfind("density,", 0) != 0) {
                std::fclose(f);
                throw FormatError(path.string() + ": missing CSV header");
            }
            continue;
        }
        double chosen;
        if (std::sscanf(line, "chosen,%lf", &chosen) == 1) {
            profile.chosen = chosen;
            have_chosen = true;
            continue;
        }
        DensityProbe p;
        unsigned long long pc = 0;
        if (std::sscanf(line, "%lf,%llu,%lf,%lf", &p.density, &pc,
                        &p.accessed_vectors, &p.recall) != 4) {
            std::fclose(f);
            throw FormatError(path.string() + ": bad CSV row at line " +
                              std::to_string(lineno));
        }
        p.probe_count = pc;
        profile.probes.push_back(p);
        if (p.density == 1.0) profile.baseline_cost = p.accessed_vectors;
    }
    std::fclose(f);
    if (!have_chosen)
        throw FormatError(path.string() + ": missing chosen line");
    return profile;
}

} // namespace strata
