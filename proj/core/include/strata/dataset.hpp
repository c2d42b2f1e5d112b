#pragma once

#include <filesystem>
#include <optional>

#include "strata/types.hpp"

namespace strata {

enum class VecFormat : std::uint8_t { Fvecs, Bvecs, Ivecs };

std::string_view format_name(VecFormat f);
VecFormat parse_format(std::string_view name);

/// Guesses the format from a file extension (.fvecs/.bvecs/.ivecs).
std::optional<VecFormat> sniff_format(const std::filesystem::path& p);

/// A vector collection plus the metric its distances are meant under.
struct Dataset {
    Metric metric = Metric::SquaredL2;
    VectorArray vectors;

    std::uint32_t dim() const { return vectors.dim; }
    std::size_t size() const { return vectors.size(); }
};

/// Reads an fvecs/bvecs/ivecs file. Ids are assigned 0..n-1 in file order.
/// bvecs bytes and ivecs ints widen to float unscaled. Malformed content
/// raises FormatError naming the byte offset. An empty file yields an empty
/// array with dim 0.
VectorArray load_vectors(const std::filesystem::path& path, VecFormat format);

/// Writes the array in the given format. bvecs/ivecs round each component
/// to the nearest integer and clamp to the element range, so arrays loaded
/// from such files write back byte-identically.
void write_vectors(const VectorArray& vectors, const std::filesystem::path& path,
                   VecFormat format);

/// Plain-text key=value sidecar describing a dataset file.
struct DatasetManifest {
    std::filesystem::path path;
    VecFormat format = VecFormat::Fvecs;
    Metric metric = Metric::SquaredL2;
    std::uint32_t dim = 0;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);

/// Loads the dataset a manifest points to; relative data paths resolve
/// against the manifest's directory.
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Uniform sample without replacement. Sampled ids are relabeled 0..n-1 in
/// ascending source order; source_ids[i] is the original id of new id i.
struct SampleResult {
    Dataset data;
    std::vector<VectorId> source_ids;
};
SampleResult sample(const Dataset& dataset, std::size_t n, std::uint64_t seed);

/// Gaussian mixture generator. Cluster centers are uniform in [0,1]^dim and
/// points add N(0, spread^2) noise per coordinate. Fully determined by seed.
struct Synthetic {
    Dataset data;
    VectorArray centers;
    std::vector<std::uint32_t> labels;
};
Synthetic generate_synthetic_full(std::size_t n, std::uint32_t dim,
                                  std::uint32_t clusters, double spread,
                                  std::uint64_t seed,
                                  Metric metric = Metric::SquaredL2);
Dataset generate_synthetic(std::size_t n, std::uint32_t dim, std::uint32_t clusters,
                           double spread, std::uint64_t seed,
                           Metric metric = Metric::SquaredL2);

/// Exact top-k per query. Rows come back sorted by (distance, id); this is
/// the oracle every recall number in the project is measured against.
struct GroundTruth {
    std::uint32_t k = 0;
    std::vector<std::vector<Candidate>> rows;
};
GroundTruth brute_force_topk(const Dataset& dataset, const VectorArray& queries,
                             std::uint32_t k);

/// Ground-truth files: ids as ivecs next to distances as fvecs.
void write_ground_truth(const GroundTruth& gt, const std::filesystem::path& ids_path,
                        const std::filesystem::path& dist_path);
GroundTruth load_ground_truth(const std::filesystem::path& ids_path,
                              const std::filesystem::path& dist_path);

} // namespace strata
