#include "strata/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <queue>
#include <sstream>

#include "strata/distance.hpp"
#include "strata/errors.hpp"
#include "strata/io.hpp"
#include "strata/rng.hpp"

namespace strata {

std::string_view format_name(VecFormat f) {
    switch (f) {
        case VecFormat::Fvecs: return "fvecs";
        case VecFormat::Bvecs: return "bvecs";
        case VecFormat::Ivecs: return "ivecs";
    }
    throw std::invalid_argument("unknown format value");
}

VecFormat parse_format(std::string_view name) {
    if (name == "fvecs") return VecFormat::Fvecs;
    if (name == "bvecs") return VecFormat::Bvecs;
    if (name == "ivecs") return VecFormat::Ivecs;
    throw std::invalid_argument("unknown format name: " + std::string(name));
}

std::optional<VecFormat> sniff_format(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    if (ext == ".fvecs") return VecFormat::Fvecs;
    if (ext == ".bvecs") return VecFormat::Bvecs;
    if (ext == ".ivecs") return VecFormat::Ivecs;
    return std::nullopt;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::size_t element_size(VecFormat f) {
    return f == VecFormat::Bvecs ? 1 : 4;
}

[[noreturn]] void bad_file(const std::filesystem::path& path, const std::string& what,
                           std::uint64_t offset) {
    throw FormatError(path.string() + ": " + what + " at byte offset " +
                      std::to_string(offset));
}

} // namespace

VectorArray load_vectors(const std::filesystem::path& path, VecFormat format) {
    FilePtr f(std::fopen(path.string().c_str(), "rb"));
    if (!f) throw FormatError(path.string() + ": cannot open for reading");

    VectorArray out;
    std::uint64_t offset = 0;
    std::vector<unsigned char> buf;
    const std::size_t esz = element_size(format);

    for (;;) {
        unsigned char hdr[4];
        std::size_t got = std::fread(hdr, 1, 4, f.get());
        if (got == 0 && std::feof(f.get())) break;
        if (got != 4) bad_file(path, "truncated record header", offset);
        std::uint32_t d = load_u32le(hdr);
        if (d == 0 || d > (1u << 24)) bad_file(path, "implausible dimension " + std::to_string(d), offset);
        if (out.dim == 0 && out.ids.empty()) {
            out.dim = d;
        } else if (d != out.dim) {
            bad_file(path,
                     "dimension changed from " + std::to_string(out.dim) + " to " +
                         std::to_string(d),
                     offset);
        }
        offset += 4;

        buf.resize(static_cast<std::size_t>(d) * esz);
        got = std::fread(buf.data(), 1, buf.size(), f.get());
        if (got != buf.size()) bad_file(path, "truncated record body", offset);

        std::size_t base = out.data.size();
        out.data.resize(base + d);
        switch (format) {
            case VecFormat::Fvecs:
                for (std::uint32_t i = 0; i < d; ++i)
                    out.data[base + i] = load_f32le(buf.data() + 4 * i);
                break;
            case VecFormat::Bvecs:
                for (std::uint32_t i = 0; i < d; ++i)
                    out.data[base + i] = static_cast<float>(buf[i]);
                break;
            case VecFormat::Ivecs:
                for (std::uint32_t i = 0; i < d; ++i)
                    out.data[base + i] = static_cast<float>(
                        static_cast<std::int32_t>(load_u32le(buf.data() + 4 * i)));
                break;
        }
        out.ids.push_back(static_cast<VectorId>(out.ids.size()));
        offset += buf.size();
    }
    return out;
}

void write_vectors(const VectorArray& vectors, const std::filesystem::path& path,
                   VecFormat format) {
    FilePtr f(std::fopen(path.string().c_str(), "wb"));
    if (!f) throw FormatError(path.string() + ": cannot open for writing");

    const std::uint32_t d = vectors.dim;
    std::vector<unsigned char> buf(4 + static_cast<std::size_t>(d) * element_size(format));
    for (std::size_t r = 0; r < vectors.size(); ++r) {
        store_u32le(buf.data(), d);
        auto row = vectors.row(r);
        switch (format) {
            case VecFormat::Fvecs:
                for (std::uint32_t i = 0; i < d; ++i)
                    store_f32le(buf.data() + 4 + 4 * i, row[i]);
                break;
            case VecFormat::Bvecs:
                for (std::uint32_t i = 0; i < d; ++i) {
                    long v = std::lroundf(row[i]);
                    buf[4 + i] = static_cast<unsigned char>(std::clamp(v, 0l, 255l));
                }
                break;
            case VecFormat::Ivecs:
                for (std::uint32_t i = 0; i < d; ++i) {
                    long long v = std::llroundf(row[i]);
                    v = std::clamp(v, static_cast<long long>(INT32_MIN),
                                   static_cast<long long>(INT32_MAX));
                    store_u32le(buf.data() + 4 + 4 * i,
                                static_cast<std::uint32_t>(static_cast<std::int32_t>(v)));
                }
                break;
        }
        if (std::fwrite(buf.data(), 1, buf.size(), f.get()) != buf.size())
            throw FormatError(path.string() + ": short write");
    }
    if (std::fflush(f.get()) != 0)
        throw FormatError(path.string() + ": flush failed");
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(path.string() + ": cannot open for reading");
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError(path.string() + ": manifest line lacks '=': " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    for (const char* key : {"path", "format", "metric", "dim"}) {
        if (!kv.count(key))
            throw FormatError(path.string() + ": manifest missing key '" + key + "'");
    }
    DatasetManifest m;
    m.path = kv["path"];
    m.format = parse_format(kv["format"]);
    m.metric = parse_metric(kv["metric"]);
    m.dim = static_cast<std::uint32_t>(std::stoul(kv["dim"]));
    return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError(path.string() + ": cannot open for writing");
    out << "path=" << m.path.string() << "\n";
    out << "format=" << format_name(m.format) << "\n";
    out << "metric=" << metric_name(m.metric) << "\n";
    out << "dim=" << m.dim << "\n";
    if (!out) throw FormatError(path.string() + ": write failed");
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
    DatasetManifest m = load_manifest(manifest_path);
    std::filesystem::path data_path = m.path;
    if (data_path.is_relative())
        data_path = manifest_path.parent_path() / data_path;
    Dataset ds;
    ds.metric = m.metric;
    ds.vectors = load_vectors(data_path, m.format);
    if (ds.vectors.dim != 0 && ds.vectors.dim != m.dim)
        throw FormatError(manifest_path.string() + ": manifest dim " +
                          std::to_string(m.dim) + " does not match data dim " +
                          std::to_string(ds.vectors.dim));
    if (ds.vectors.dim == 0) ds.vectors.dim = m.dim;
    return ds;
}

SampleResult sample(const Dataset& dataset, std::size_t n, std::uint64_t seed) {
    const std::size_t total = dataset.size();
    if (n > total)
        throw std::invalid_argument("sample: requested more vectors than available");

    std::vector<std::uint32_t> idx(total);
    for (std::size_t i = 0; i < total; ++i) idx[i] = static_cast<std::uint32_t>(i);
    Rng rng(mix_seed(seed, 0x5a311ull));
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.bounded(total - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(n);
    std::sort(idx.begin(), idx.end());

    SampleResult out;
    out.data.metric = dataset.metric;
    out.data.vectors.dim = dataset.dim();
    out.data.vectors.reserve(n);
    out.source_ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.data.vectors.push_back(static_cast<VectorId>(i), dataset.vectors.row(idx[i]));
        out.source_ids.push_back(dataset.vectors.ids[idx[i]]);
    }
    return out;
}

Synthetic generate_synthetic_full(std::size_t n, std::uint32_t dim,
                                  std::uint32_t clusters, double spread,
                                  std::uint64_t seed, Metric metric) {
    if (dim == 0) throw std::invalid_argument("generate_synthetic: dim must be positive");
    if (clusters == 0)
        throw std::invalid_argument("generate_synthetic: clusters must be positive");

    Synthetic out;
    out.centers.dim = dim;
    out.centers.reserve(clusters);
    Rng crng(mix_seed(seed, 0xce17e5));
    std::vector<float> tmp(dim);
    for (std::uint32_t c = 0; c < clusters; ++c) {
        for (std::uint32_t d = 0; d < dim; ++d)
            tmp[d] = static_cast<float>(crng.uniform());
        out.centers.push_back(c, tmp);
    }

    out.data.metric = metric;
    out.data.vectors.dim = dim;
    out.data.vectors.ids.resize(n);
    out.data.vectors.data.resize(n * static_cast<std::size_t>(dim));
    out.labels.resize(n);

    // One derived stream per point keeps generation order-free.
    for (std::size_t i = 0; i < n; ++i) {
        Rng r(mix_seed(seed, 1 + i));
        std::uint32_t c = static_cast<std::uint32_t>(r.bounded(clusters));
        out.labels[i] = c;
        out.data.vectors.ids[i] = static_cast<VectorId>(i);
        auto center = out.centers.row(c);
        float* row = out.data.vectors.data.data() + i * dim;
        for (std::uint32_t d = 0; d < dim; ++d)
            row[d] = center[d] + static_cast<float>(spread * r.gaussian());
    }
    return out;
}

Dataset generate_synthetic(std::size_t n, std::uint32_t dim, std::uint32_t clusters,
                           double spread, std::uint64_t seed, Metric metric) {
    return generate_synthetic_full(n, dim, clusters, spread, seed, metric).data;
}

GroundTruth brute_force_topk(const Dataset& dataset, const VectorArray& queries,
                             std::uint32_t k) {
    if (k == 0) throw std::invalid_argument("brute_force_topk: k must be positive");
    if (k > dataset.size())
        throw std::invalid_argument("brute_force_topk: k exceeds dataset size");
    if (!queries.empty() && queries.dim != dataset.dim())
        throw std::invalid_argument("brute_force_topk: query dim mismatch");

    GroundTruth gt;
    gt.k = k;
    gt.rows.resize(queries.size());

    const auto& vecs = dataset.vectors;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t qi = 0; qi < static_cast<std::int64_t>(queries.size()); ++qi) {
        auto q = queries.row(static_cast<std::size_t>(qi));
        // Max-heap on (distance, id): top is the worst kept candidate.
        std::priority_queue<Candidate, std::vector<Candidate>,
                            decltype(&candidate_less)>
            heap(&candidate_less);
        for (std::size_t i = 0; i < vecs.size(); ++i) {
            Candidate c{vecs.ids[i], distance(q, vecs.row(i), dataset.metric)};
            if (heap.size() < k) {
                heap.push(c);
            } else if (candidate_less(c, heap.top())) {
                heap.pop();
                heap.push(c);
            }
        }
        std::vector<Candidate> row(heap.size());
        for (std::size_t i = row.size(); i-- > 0;) {
            row[i] = heap.top();
            heap.pop();
        }
        gt.rows[static_cast<std::size_t>(qi)] = std::move(row);
    }
    return gt;
}

void write_ground_truth(const GroundTruth& gt, const std::filesystem::path& ids_path,
                        const std::filesystem::path& dist_path) {
    VectorArray ids, dists;
    ids.dim = gt.k;
    dists.dim = gt.k;
    for (std::size_t r = 0; r < gt.rows.size(); ++r) {
        const auto& row = gt.rows[r];
        if (row.size() != gt.k)
            throw std::invalid_argument("write_ground_truth: ragged truth rows");
        std::vector<float> idv(gt.k), dv(gt.k);
        for (std::uint32_t i = 0; i < gt.k; ++i) {
            if (row[i].id > static_cast<VectorId>(INT32_MAX))
                throw std::invalid_argument("write_ground_truth: id does not fit ivecs");
            idv[i] = static_cast<float>(row[i].id);
            dv[i] = row[i].distance;
        }
        ids.push_back(r, idv);
        dists.push_back(r, dv);
    }
    write_vectors(ids, ids_path, VecFormat::Ivecs);
    write_vectors(dists, dist_path, VecFormat::Fvecs);
}

GroundTruth load_ground_truth(const std::filesystem::path& ids_path,
                              const std::filesystem::path& dist_path) {
    VectorArray ids = load_vectors(ids_path, VecFormat::Ivecs);
    VectorArray dists = load_vectors(dist_path, VecFormat::Fvecs);
    if (ids.size() != dists.size() || ids.dim != dists.dim)
        throw FormatError("ground truth id/distance files disagree in shape");
    GroundTruth gt;
    gt.k = ids.dim;
    gt.rows.resize(ids.size());
    for (std::size_t r = 0; r < ids.size(); ++r) {
        auto idr = ids.row(r);
        auto dr = dists.row(r);
        auto& row = gt.rows[r];
        row.resize(gt.k);
        for (std::uint32_t i = 0; i < gt.k; ++i)
            row[i] = Candidate{static_cast<VectorId>(static_cast<std::int64_t>(idr[i])),
                               dr[i]};
    }
    return gt;
}

} // namespace strata
