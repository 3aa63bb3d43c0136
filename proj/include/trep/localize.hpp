#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trep/geometry.hpp"
#include "trep/imaging.hpp"
#include "trep/mapsum.hpp"
#include "trep/matching.hpp"

namespace trep {

inline constexpr double kGlobalGemP = 3.0;

/// Elementwise generalized mean (p = 3) of the local descriptors, L2
/// normalized. Throws NoDescriptors for an empty set.
Eigen::VectorXd global_descriptor(std::span<const Descriptor> local);

/// Global descriptors of the database images plus, per image, the full-map
/// points it observes.
class DatabaseIndex {
 public:
  DatabaseIndex() = default;
  DatabaseIndex(std::vector<Eigen::VectorXd> global, std::vector<std::vector<std::size_t>> visibility);

  std::size_t size() const { return tree_.size(); }
  const KdTree& tree() const { return tree_; }
  const std::vector<std::size_t>& visible_points(std::size_t image) const { return visibility_.at(image); }

 private:
  KdTree tree_;
  std::vector<std::vector<std::size_t>> visibility_;
};

/// Builds the index from per-image local descriptors and the map's
/// observing-image sets. Images without descriptors get a zero vector.
DatabaseIndex build_database_index(const std::vector<std::vector<Descriptor>>& image_descriptors,
                                   std::span<const MapPoint> map);

/// Exact K nearest database images by Euclidean distance, ascending.
/// Throws KTooLarge when K exceeds the database size.
std::vector<std::size_t> retrieve_k_nearest(const Eigen::VectorXd& query, const DatabaseIndex& index, std::size_t k);

enum class LocalizationStatus { Ok, RetrievalEmpty, MatchFail, PoseFail };
std::string to_string(LocalizationStatus s);

struct LocalizationResult {
  LocalizationStatus status = LocalizationStatus::RetrievalEmpty;
  std::optional<Pose> pose;
  std::size_t inliers = 0;
  std::size_t matches = 0;
  std::vector<std::size_t> retrieved;
};

struct LocalizeParams {
  std::size_t retrieve_k = 5;
  double ratio = kDefaultRatio;
  RansacParams ransac;
};

/// Localizes a query from its interest points against the retained part of
/// `map`. Failures are reported through the status, never thrown.
LocalizationResult localize(std::span<const InterestPoint> query, const Camera& intrinsics,
                            std::span<const MapPoint> map, const SummaryMap& summary, const DatabaseIndex& index,
                            const LocalizeParams& params = {});

/// Same, detecting interest points in `image` first.
LocalizationResult localize(const Image& image, const Camera& intrinsics, std::span<const MapPoint> map,
                            const SummaryMap& summary, const DatabaseIndex& index, const LocalizeParams& params = {});

struct QueryCase {
  std::string id;
  std::vector<InterestPoint> features;
  Camera intrinsics;
  Pose truth;
  int t_index = 1;
};

struct SuccessThreshold {
  std::string name;
  double position_m = 0.0;
  double angle_deg = 0.0;
};

/// Street-scale (5 m, 10 deg) and desk-scale (0.5 m, 2 deg) thresholds.
std::vector<SuccessThreshold> default_thresholds();

struct BenchmarkRow {
  SummaryMethod method = SummaryMethod::Full;
  double prune_ratio = 0.0;
  SuccessThreshold threshold;
  double accuracy = 0.0;
  double mean_position_error = 0.0;  // over queries that localized, NaN if none
  double mean_angle_error = 0.0;
  std::size_t n_queries = 0;
  std::size_t map_points = 0;        // retained points (mean over timestamps for rp)
};

struct BenchmarkConfig {
  std::vector<SummaryMethod> methods = {SummaryMethod::Repeatability, SummaryMethod::KCover};
  std::vector<double> prune_ratios = {0.0, 0.3, 0.5, 0.7, 0.9};
  std::vector<SuccessThreshold> thresholds = default_thresholds();
  double cell_size = kDefaultCellSize;
  LocalizeParams localize;
  int threads = 1;
};

/// For each (method, ratio): summarize (per query timestamp for rp, once
/// for K-cover), localize every query and score it per threshold.
std::vector<BenchmarkRow> benchmark(std::span<const QueryCase> queries, std::span<const MapPoint> map,
                                    std::size_t database_images, const DatabaseIndex& index,
                                    const BenchmarkConfig& config);

void write_benchmark_csv(std::span<const BenchmarkRow> rows, const std::filesystem::path& path);

}  // namespace trep
