#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "trep/dataset.hpp"
#include "trep/groundtruth.hpp"
#include "trep/localize.hpp"
#include "trep/mapsum.hpp"
#include "trep/predictor.hpp"

namespace trep {

struct PipelineParams {
  int max_keypoints = kDefaultMaxKeypoints;
  double nms_radius = kDefaultNmsRadius;
  /// A keypoint belongs to a rendered point when it lies this close to the stamp center.
  double association_px = 3.0;
  MatchMode mode = MatchMode::Geometric;
  GroundTruthParams gt;
  /// Largest reprojection error a map track observation may have.
  double map_reprojection_px = 2.0;
  int threads = 1;
};

/// Interest points per dataset image.
using FeatureSet = std::vector<std::vector<InterestPoint>>;

FeatureSet extract_dataset_features(const Dataset& dataset, const PipelineParams& params);

/// Planted point id of every interest point, -1 when no rendered stamp is
/// within `radius` pixels.
std::vector<std::vector<std::int64_t>> associate_features(const Dataset& dataset, const FeatureSet& features,
                                                          double radius);

/// Ground truth for the database images. The images of one viewpoint form a
/// local-area corpus; samples are the keypoints associated with a planted
/// point, ordered by image and keypoint.
TrainingSet build_dataset_ground_truth(const Dataset& dataset, const FeatureSet& features,
                                       const PipelineParams& params);

/// Predictor inputs, targets and masks of the samples.
TrainingData make_training_data(std::span<const GroundTruthSample> samples, TimeEncoding encoding);

/// Interest points of different database images that were linked by
/// verified matches, and their triangulated position.
struct Track {
  std::vector<std::pair<std::size_t, std::size_t>> members;  // (dataset image, interest point), ascending
  Point3 position = Point3::Zero();
};

/// Mutual ratio-test matches between every pair of database images,
/// verified against the known poses, chained into tracks and triangulated.
std::vector<Track> build_tracks(const Dataset& dataset, const FeatureSet& features, const PipelineParams& params);

/// Map points from tracks; observing images are positions in
/// `dataset.database_images()`. Without a model the repeatability is zero.
std::vector<MapPoint> build_map(const Dataset& dataset, const FeatureSet& features, std::span<const Track> tracks,
                                const RepeatabilityPredictor* model);

DatabaseIndex make_database_index(const Dataset& dataset, const FeatureSet& features, std::span<const MapPoint> map);

/// Every query image with its ground-truth pose and timestamp index.
std::vector<QueryCase> make_queries(const Dataset& dataset, const FeatureSet& features);

/// Mean ground-truth and predicted curves over a group of samples.
struct CategoryCurve {
  int category = -1;  // -1 for all samples
  std::size_t count = 0;
  Eigen::VectorXd truth;
  Eigen::VectorXd predicted;
  double mae = 0.0;   // mean absolute gap between the two curves
};

/// Curves over all samples first, then one per category present, ascending.
/// Columns of `predictions` correspond to samples. Masked slots are left out
/// of the means.
std::vector<CategoryCurve> category_curves(std::span<const GroundTruthSample> samples,
                                           const Eigen::MatrixXd& predictions);

/// Same, with every curve rotated so index 0 is the sample's own timestamp.
std::vector<CategoryCurve> aligned_category_curves(std::span<const GroundTruthSample> samples,
                                                   const Eigen::MatrixXd& predictions);

/// Per-slot mean of the masked targets; the constant baseline predictor.
Eigen::VectorXd masked_mean_target(const TrainingData& data);

}  // namespace trep
