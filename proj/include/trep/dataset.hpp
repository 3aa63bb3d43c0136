#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "trep/groundtruth.hpp"
#include "trep/mapsum.hpp"
#include "trep/synthworld.hpp"

namespace trep {

/// What a dataset directory records about a planted point.
struct PointInfo {
  std::size_t id = 0;
  Category category = Category::Building;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::VectorXd profile;
};

/// Posed, timestamped images plus the synthetic oracle, in plan order.
struct Dataset {
  TimeGrid grid = WorldSpec::cmu_grid();
  int cycles = 0;
  int query_cycles = 0;
  std::uint64_t seed = 0;
  std::vector<ImageRecord> records;
  std::vector<Image> images;                        // 8-bit quantized
  std::vector<std::vector<RenderEntry>> renders;    // per image
  std::vector<PointInfo> points;

  std::size_t database_count() const;
  /// Positions of database images in plan order.
  std::vector<std::size_t> database_images() const;
  std::vector<std::size_t> query_images() const;
  int viewpoint_count() const;
};

/// Generates, renders and quantizes a synthetic world.
Dataset make_synthetic_dataset(const WorldSpec& spec, int threads = 1);

/// Writes `dir/manifest.json` and `dir/images/<id>.ppm`.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
/// Throws InvalidArgument for a missing directory and CorruptFile for a
/// malformed manifest.
Dataset load_dataset(const std::filesystem::path& dir);

/// Ground-truth samples together with the settings that produced them.
struct TrainingSet {
  TimeGrid grid = WorldSpec::cmu_grid();
  MatchMode mode = MatchMode::Geometric;
  GroundTruthParams params;
  std::vector<CorpusLayout> layouts;  // one per local-area corpus
  std::vector<GroundTruthSample> samples;
};

/// Binary file "RTS1": grid, layouts, mode, params, then one record per
/// sample (coords, wallclock, float32 patch, descriptor, y, mask).
void save_training_set(const TrainingSet& set, const std::filesystem::path& path);
TrainingSet load_training_set(const std::filesystem::path& path);

/// Binary file "RSM1": provenance and the retained points of `map`.
void save_summary_map(std::span<const MapPoint> map, const SummaryMap& summary, const std::filesystem::path& path);
struct LoadedSummaryMap {
  SummaryMap summary;            // retained renumbered to 0..n-1
  std::vector<MapPoint> points;  // retained points only
};
LoadedSummaryMap load_summary_map(const std::filesystem::path& path);

}  // namespace trep
