#include "strata/cluster_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <queue>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "kv_file.hpp"
#include "strata/errors.hpp"

namespace strata {

namespace {

constexpr double kUsPerSecond = 1e6;

double capacity_of(const ClusterModel& model, Resource r) {
    switch (r) {
        case Resource::DiskIops: return model.disk_iops;
        case Resource::DiskBandwidth: return model.disk_bandwidth;
        case Resource::NetBandwidth: return model.net_bandwidth;
        case Resource::Cpu: return model.cpu_rate;
    }
    throw std::logic_error("unknown resource");
}

// On-disk size of one partition record, mirroring the partition file format.
std::uint64_t record_bytes(const Partition& part, std::uint32_t dim) {
    return 12 + part.size() * (8ull + 4ull * dim);
}

void require_consistent(const Placement& placement, const ClusterModel& model) {
    model.validate();
    if (placement.node_count == 0)
        throw std::invalid_argument("placement: node count must be positive");
    if (placement.node_count != model.node_count)
        throw std::invalid_argument("placement spans " +
                                    std::to_string(placement.node_count) +
                                    " nodes but the model describes " +
                                    std::to_string(model.node_count));
}

} // namespace

void ClusterModel::validate() const {
    if (node_count == 0)
        throw std::invalid_argument("cluster model: node_count must be positive");
    if (rtt_us < 0.0 || disk_read_latency_us < 0.0)
        throw std::invalid_argument("cluster model: latencies must be non-negative");
    if (!(disk_iops > 0.0) || !(disk_bandwidth > 0.0) || !(net_bandwidth > 0.0) ||
        !(cpu_rate > 0.0))
        throw std::invalid_argument("cluster model: rates must be positive");
    if (!(beta >= 1.0))
        throw std::invalid_argument("cluster model: beta must be >= 1");
}

ClusterModel load_cluster_model(const std::filesystem::path& path) {
    using detail::parse_f64;
    using detail::parse_u64;
    const auto kv = detail::parse_kv_file(path);
    static const std::array<const char*, 8> known = {
        "node_count",    "rtt_us",        "disk_read_latency_us", "disk_iops",
        "disk_bandwidth", "net_bandwidth", "cpu_rate",             "beta"};
    for (const auto& [key, value] : kv)
        if (std::find_if(known.begin(), known.end(), [&](const char* k) {
                return key == k;
            }) == known.end())
            throw FormatError(path.string() + ": unknown key '" + key + "'");

    ClusterModel m;
    m.node_count = static_cast<std::uint32_t>(parse_u64(kv, "node_count", path));
    m.rtt_us = parse_f64(kv, "rtt_us", path);
    m.disk_read_latency_us = parse_f64(kv, "disk_read_latency_us", path);
    m.disk_iops = parse_f64(kv, "disk_iops", path);
    m.disk_bandwidth = parse_f64(kv, "disk_bandwidth", path);
    m.net_bandwidth = parse_f64(kv, "net_bandwidth", path);
    m.cpu_rate = parse_f64(kv, "cpu_rate", path);
    m.beta = parse_f64(kv, "beta", path);
    m.validate();
    return m;
}

void save_cluster_model(const ClusterModel& model, const std::filesystem::path& path) {
    model.validate();
    std::string out;
    auto field = [&out](const char* key, double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out += key;
        out += '=';
        out += buf;
        out += '\n';
    };
    out += "node_count=" + std::to_string(model.node_count) + '\n';
    field("rtt_us", model.rtt_us);
    field("disk_read_latency_us", model.disk_read_latency_us);
    field("disk_iops", model.disk_iops);
    field("disk_bandwidth", model.disk_bandwidth);
    field("net_bandwidth", model.net_bandwidth);
    field("cpu_rate", model.cpu_rate);
    field("beta", model.beta);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot write " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw FormatError("short write to " + path.string());
}

Placement place(const HierarchicalIndex& index, std::uint32_t node_count) {
    if (node_count == 0)
        throw std::invalid_argument("place: node count must be positive");
    (void)index; // placement is a pure pid function; the index fixes the domain
    return Placement{node_count};
}

std::vector<std::uint64_t> placement_histogram(const HierarchicalIndex& index,
                                               const Placement& placement) {
    if (placement.node_count == 0)
        throw std::invalid_argument("placement: node count must be positive");
    std::vector<std::uint64_t> hist(placement.node_count, 0);
    for (const auto& level : index.levels)
        for (const auto& part : level) ++hist[placement.node_of(part.pid)];
    return hist;
}

QueryCostReport simulate_query(const HierarchicalIndex& index,
                               const Placement& placement,
                               const ClusterModel& model,
                               std::span<const float> query,
                               const SearchParams& params) {
    require_consistent(placement, model);

    QueryCostReport rep;
    {
        auto [results, trace] = search(index, query, params);
        rep.results = std::move(results);
        rep.trace = std::move(trace);
    }
    rep.per_node.resize(model.node_count);
    rep.root_compute_us =
        static_cast<double>(rep.trace.root_distance_computations) /
        model.cpu_rate * kUsPerSecond;
    rep.total_us = rep.root_compute_us;

    const std::size_t L = index.levels.size();
    rep.levels.resize(L);
    for (std::size_t li = 0; li < L; ++li) {
        const LevelTrace& lt = rep.trace.levels[li];

        struct NodeWork {
            std::uint64_t reads = 0;
            std::uint64_t bytes = 0;
            std::uint64_t scans = 0;
            std::unordered_set<VectorId> distinct;
        };
        std::unordered_map<std::uint32_t, NodeWork> by_node;
        for (VectorId pid : lt.pids) {
            const auto& part =
                index.levels[li][index.pid_maps[li].at(pid)];
            NodeWork& w = by_node[placement.node_of(pid)];
            ++w.reads;
            w.bytes += record_bytes(part, index.dim);
            w.scans += part.size();
            w.distinct.insert(part.member_ids.begin(), part.member_ids.end());
        }

        LevelCost& cost = rep.levels[li];
        cost.nodes_involved = static_cast<std::uint32_t>(by_node.size());
        cost.rtt_us = model.rtt_us;
        double worst = 0.0;
        for (const auto& [node, w] : by_node) {
            NodeCounters& c = rep.per_node[node];
            c.partitions_read += w.reads;
            c.disk_bytes += w.bytes;
            c.distance_computations += w.scans;
            const std::uint64_t returned =
                std::min<std::uint64_t>(params.m, w.distinct.size());
            c.net_bytes += 8 * w.reads + 4ull * index.dim +
                           kCandidateWireBytes * returned;

            const double disk_us =
                static_cast<double>(w.reads) / model.disk_iops * kUsPerSecond +
                model.disk_read_latency_us;
            const double compute_us =
                static_cast<double>(w.scans) / model.cpu_rate * kUsPerSecond;
            if (disk_us + compute_us > worst) {
                worst = disk_us + compute_us;
                cost.disk_us = disk_us;
                cost.compute_us = compute_us;
            }
        }
        cost.total_us = cost.rtt_us + worst;
        rep.total_us += cost.total_us;
    }
    return rep;
}

std::vector<QueryCostReport> simulate_workload(const HierarchicalIndex& index,
                                               const Placement& placement,
                                               const ClusterModel& model,
                                               const VectorArray& workload,
                                               const SearchParams& params) {
    require_consistent(placement, model);
    if (workload.empty())
        throw std::invalid_argument("simulate: workload must be non-empty");
    params.validate();

    std::vector<QueryCostReport> reports(workload.size());
#pragma omp parallel for schedule(dynamic, 8)
    for (std::int64_t q = 0; q < static_cast<std::int64_t>(workload.size()); ++q)
        reports[q] = simulate_query(index, placement, model, workload.row(q), params);
    return reports;
}

std::string_view resource_name(Resource r) {
    switch (r) {
        case Resource::DiskIops: return "disk_iops";
        case Resource::DiskBandwidth: return "disk_bandwidth";
        case Resource::NetBandwidth: return "net_bandwidth";
        case Resource::Cpu: return "cpu";
    }
    throw std::logic_error("unknown resource");
}

double ResourceDemand::of(Resource r) const {
    switch (r) {
        case Resource::DiskIops: return iops;
        case Resource::DiskBandwidth: return disk_bytes;
        case Resource::NetBandwidth: return net_bytes;
        case Resource::Cpu: return cpu_ops;
    }
    throw std::logic_error("unknown resource");
}

ThroughputEstimate estimate_throughput(const HierarchicalIndex& index,
                                       const Placement& placement,
                                       const ClusterModel& model,
                                       const VectorArray& workload,
                                       const SearchParams& params) {
    const auto reports = simulate_workload(index, placement, model, workload, params);

    ThroughputEstimate est;
    est.beta = model.beta;
    double iops = 0, dbytes = 0, nbytes = 0, cpu = 0;
    for (const auto& rep : reports)
        for (const auto& c : rep.per_node) {
            iops += static_cast<double>(c.partitions_read);
            dbytes += static_cast<double>(c.disk_bytes);
            nbytes += static_cast<double>(c.net_bytes);
            cpu += static_cast<double>(c.distance_computations);
        }
    const auto nq = static_cast<double>(reports.size());
    est.demand = {iops / nq, dbytes / nq, nbytes / nq, cpu / nq};

    est.qps = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < kResourceCount; ++i) {
        const auto r = static_cast<Resource>(i);
        const double demand = est.demand.of(r);
        if (demand <= 0.0) continue;
        const double peak = static_cast<double>(model.node_count) *
                            capacity_of(model, r) / (model.beta * demand);
        if (peak < est.qps) {
            est.qps = peak;
            est.binding = r;
        }
    }
    if (!std::isfinite(est.qps))
        throw std::invalid_argument(
            "throughput: the workload touches no storage node");
    for (std::size_t i = 0; i < kResourceCount; ++i) {
        const auto r = static_cast<Resource>(i);
        est.utilization[i] = est.qps * model.beta * est.demand.of(r) /
                             (static_cast<double>(model.node_count) *
                              capacity_of(model, r));
    }
    return est;
}

double measure_beta(std::span<const QueryCostReport> traces) {
    if (traces.empty())
        throw std::invalid_argument("measure_beta: need at least one trace");
    const std::size_t nodes = traces[0].per_node.size();
    if (nodes == 0)
        throw std::invalid_argument("measure_beta: traces carry no node counters");
    std::vector<double> load(nodes, 0.0);
    for (const auto& t : traces) {
        if (t.per_node.size() != nodes)
            throw std::invalid_argument("measure_beta: traces disagree on node count");
        for (std::size_t n = 0; n < nodes; ++n)
            load[n] += static_cast<double>(t.per_node[n].partitions_read);
    }
    double total = 0.0;
    double max = 0.0;
    for (double l : load) {
        total += l;
        max = std::max(max, l);
    }
    if (total == 0.0) return 1.0;
    return max * static_cast<double>(nodes) / total;
}

// ---------------------------------------------------------------------------
// Closed-loop discrete-event simulation. Each node exposes four FIFO
// resource servers; a query's per-level node visits run their four service
// slices in series (iops, disk bandwidth, cpu, net) while visits to
// different nodes overlap. Pure delays (rtt, disk read latency, root
// compute) never occupy a server.

namespace {

struct NodeVisit {
    std::uint32_t node = 0;
    std::array<double, kResourceCount> service_us = {0, 0, 0, 0};
};

struct QueryPlan {
    double root_us = 0.0;
    std::vector<std::vector<NodeVisit>> waves; // execution order, top level first
};

struct Event {
    double t = 0.0;
    std::uint64_t seq = 0; // FIFO tie-break, also the determinism anchor
    std::uint32_t worker = 0;
    std::uint32_t wave = 0;
    std::uint32_t visit = 0;
    std::uint32_t stage = 0; // index into service_us, kResourceCount = done

    bool operator>(const Event& o) const {
        if (t != o.t) return t > o.t;
        return seq > o.seq;
    }
};

} // namespace

SimulatedThroughput simulate_closed_loop(const HierarchicalIndex& index,
                                         const Placement& placement,
                                         const ClusterModel& model,
                                         const VectorArray& workload,
                                         const SearchParams& params,
                                         std::uint32_t workers_per_node,
                                         std::uint64_t target) {
    if (workers_per_node == 0)
        throw std::invalid_argument("closed loop: need at least one worker per node");
    if (target == 0) throw std::invalid_argument("closed loop: target must be positive");
    const auto reports = simulate_workload(index, placement, model, workload, params);

    // Compile each report into server visits; demands mirror the analytic
    // accounting exactly.
    std::vector<QueryPlan> plans(reports.size());
    for (std::size_t qi = 0; qi < reports.size(); ++qi) {
        const QueryCostReport& rep = reports[qi];
        QueryPlan& plan = plans[qi];
        plan.root_us = rep.root_compute_us;
        const std::size_t L = rep.trace.levels.size();
        plan.waves.resize(L);
        for (std::size_t li = 0; li < L; ++li) {
            auto& wave = plan.waves[L - 1 - li]; // top level executes first
            struct Acc {
                std::uint64_t reads = 0, bytes = 0, scans = 0;
                std::unordered_set<VectorId> distinct;
            };
            std::unordered_map<std::uint32_t, Acc> by_node;
            for (VectorId pid : rep.trace.levels[li].pids) {
                const auto& part = index.levels[li][index.pid_maps[li].at(pid)];
                Acc& a = by_node[placement.node_of(pid)];
                ++a.reads;
                a.bytes += record_bytes(part, index.dim);
                a.scans += part.size();
                a.distinct.insert(part.member_ids.begin(), part.member_ids.end());
            }
            for (const auto& [node, a] : by_node) {
                NodeVisit v;
                v.node = node;
                const std::uint64_t returned =
                    std::min<std::uint64_t>(params.m, a.distinct.size());
                const double net_bytes = 8.0 * static_cast<double>(a.reads) +
                                         4.0 * index.dim +
                                         12.0 * static_cast<double>(returned);
                v.service_us[0] =
                    static_cast<double>(a.reads) / model.disk_iops * kUsPerSecond;
                v.service_us[1] =
                    static_cast<double>(a.bytes) / model.disk_bandwidth * kUsPerSecond;
                v.service_us[2] =
                    static_cast<double>(a.scans) / model.cpu_rate * kUsPerSecond;
                v.service_us[3] = net_bytes / model.net_bandwidth * kUsPerSecond;
                wave.push_back(v);
            }
            // Map order is unspecified; pin the visit order.
            std::sort(wave.begin(), wave.end(),
                      [](const NodeVisit& a, const NodeVisit& b) {
                          return a.node < b.node;
                      });
        }
    }

    const std::uint32_t workers = workers_per_node * model.node_count;
    std::vector<double> server_free(model.node_count * kResourceCount, 0.0);

    struct WorkerState {
        std::uint32_t plan = 0;
        std::uint32_t wave = 0;
        std::uint32_t outstanding = 0;
        double wave_end = 0.0;
        double query_start = 0.0;
    };
    std::vector<WorkerState> state(workers);

    std::priority_queue<Event, std::vector<Event>, std::greater<Event>> queue;
    std::uint64_t seq = 0;
    std::uint64_t next_plan = 0;
    std::uint64_t completed = 0;
    double now = 0.0;

    const std::uint64_t warm = std::min<std::uint64_t>(10ull * workers, target / 2);
    double warm_time = 0.0;
    std::uint64_t warm_done = 0;

    auto start_wave = [&](std::uint32_t w, double t) {
        WorkerState& st = state[w];
        const auto& wave = plans[st.plan].waves[st.wave];
        st.outstanding = static_cast<std::uint32_t>(wave.size());
        st.wave_end = t;
        for (std::uint32_t vi = 0; vi < wave.size(); ++vi)
            queue.push({t, seq++, w, st.wave, vi, 0});
    };

    auto start_query = [&](std::uint32_t w, double t) {
        WorkerState& st = state[w];
        st.plan = static_cast<std::uint32_t>(next_plan++ % plans.size());
        st.wave = 0;
        st.query_start = t;
        const double after_root = t + plans[st.plan].root_us;
        if (plans[st.plan].waves.empty()) {
            // No clustered levels: the query is pure root compute.
            queue.push({after_root, seq++, w, 0, 0, kResourceCount + 1});
        } else {
            start_wave(w, after_root);
        }
    };

    for (std::uint32_t w = 0; w < workers; ++w) start_query(w, 0.0);

    while (completed < target && !queue.empty()) {
        Event ev = queue.top();
        queue.pop();
        now = ev.t;
        WorkerState& st = state[ev.worker];

        if (ev.stage == kResourceCount + 1) {
            // Degenerate no-level query completed; immediately start the next.
            ++completed;
            if (completed == warm) {
                warm_time = now;
                warm_done = completed;
            }
            if (completed >= target) break;
            start_query(ev.worker, now);
            continue;
        }

        const auto& wave = plans[st.plan].waves[ev.wave];
        const NodeVisit& visit = wave[ev.visit];
        if (ev.stage < kResourceCount) {
            double& free = server_free[visit.node * kResourceCount + ev.stage];
            const double start = std::max(now, free);
            const double end = start + visit.service_us[ev.stage];
            free = end;
            queue.push({end, seq++, ev.worker, ev.wave, ev.visit,
                        ev.stage + 1});
            continue;
        }

        // Chain finished: disk read latency rides on top as a pure delay.
        const double chain_end = now + model.disk_read_latency_us;
        st.wave_end = std::max(st.wave_end, chain_end);
        if (--st.outstanding > 0) continue;

        const double level_end = st.wave_end + model.rtt_us;
        if (st.wave + 1 < plans[st.plan].waves.size()) {
            ++st.wave;
            start_wave(ev.worker, level_end);
        } else {
            ++completed;
            if (completed == warm) {
                warm_time = level_end;
                warm_done = completed;
            }
            if (completed >= target) {
                now = level_end;
                break;
            }
            start_query(ev.worker, level_end);
        }
    }

    SimulatedThroughput out;
    out.completed = completed;
    out.sim_time_us = now;
    const double window = now - warm_time;
    const auto counted = static_cast<double>(completed - warm_done);
    out.qps = window > 0.0 ? counted / window * kUsPerSecond : 0.0;
    return out;
}

} // namespace strata
