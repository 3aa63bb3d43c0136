#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trep/geometry.hpp"
#include "trep/imaging.hpp"
#include "trep/predictor.hpp"

namespace trep {

/// One 2D sighting of a map point.
struct PointObservation {
  std::size_t image = 0;  // database image position
  Keypoint keypoint;
  Wallclock wallclock;
  int image_width = 0;
  int image_height = 0;
  Patch patch;
  Descriptor descriptor = Descriptor::Zero();
};

struct MapPoint {
  std::size_t id = 0;
  Point3 position = Point3::Zero();
  std::vector<std::size_t> observing_images;  // ascending, unique
  Descriptor mean_descriptor = Descriptor::Zero();
  Eigen::VectorXd mean_repeatability;
};

/// Mean descriptor (renormalized) and mean of the given per-observation
/// repeatability predictions. Throws TooFewObservations below 2 distinct
/// images and ShapeMismatch when the prediction count differs.
MapPoint aggregate_point(std::size_t id, const Point3& position, std::span<const PointObservation> observations,
                         std::span<const Eigen::VectorXd> predictions);

/// Same, with predictions from `model`.
MapPoint aggregate_point(std::size_t id, const Point3& position, std::span<const PointObservation> observations,
                         const RepeatabilityPredictor& model);

/// Cell of a uniform grid over the XY plane.
struct CellKey {
  std::int64_t ix = 0;
  std::int64_t iy = 0;
  friend auto operator<=>(const CellKey&, const CellKey&) = default;
};

struct MapPartition {
  double cell_size = 25.0;
  std::vector<CellKey> assignment;                       // per point
  std::map<CellKey, std::vector<std::size_t>> cells;     // point positions, ascending
};

inline constexpr double kDefaultCellSize = 25.0;

/// Throws InvalidArgument unless cell_size > 0.
MapPartition partition_map(std::span<const MapPoint> points, double cell_size = kDefaultCellSize);

enum class SummaryMethod { Full, Repeatability, KCover };
std::string to_string(SummaryMethod m);
SummaryMethod summary_method_from_string(const std::string& name);

struct SummaryMap {
  std::vector<std::size_t> retained;  // positions into the full map, ascending
  SummaryMethod method = SummaryMethod::Full;
  int t_index = 0;          // 1-based; 0 when time independent
  double prune_ratio = 0.0;
  int k = 0;                // K-cover parameter; 0 otherwise
  std::vector<std::size_t> infeasible_images;  // K-cover images left below K
};

/// Number of points a cell of `n` keeps at `prune_ratio`: round half up,
/// at least one for a non-empty cell.
std::size_t retained_count(std::size_t n, double prune_ratio);

/// Per cell, keeps the points with the highest mean repeatability at
/// `t_index`; ties go to the smaller point id.
SummaryMap summarize(std::span<const MapPoint> points, const MapPartition& partition, int t_index,
                     double prune_ratio);

/// Greedy set multicover over `visibility[i]` = images that see point i.
/// Returns point positions in the order they were selected.
struct MulticoverResult {
  std::vector<std::size_t> order;
  std::vector<std::size_t> infeasible_images;  // ascending
};
MulticoverResult greedy_multicover(const std::vector<std::vector<std::size_t>>& visibility,
                                   std::span<const std::size_t> point_ids, std::size_t image_count, int k);

/// K-cover summary over the points' observing images. Throws InvalidArgument
/// unless K >= 1.
SummaryMap kcover_summarize(std::span<const MapPoint> points, std::size_t image_count, int k);

/// K-cover summary with a point budget of round((1 - prune_ratio) N): the
/// smallest K whose greedy selection reaches the budget, truncated to it in
/// selection order.
SummaryMap kcover_summarize_ratio(std::span<const MapPoint> points, std::size_t image_count, double prune_ratio);

}  // namespace trep
