#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "trep/geometry.hpp"
#include "trep/imaging.hpp"
#include "trep/matching.hpp"
#include "trep/timegrid.hpp"

namespace trep {

/// One posed image of the corpus and its interest points.
struct Observation {
  std::string image_id;
  int cycle = 1;            // 1-based
  int timestamp_index = 1;  // 1-based slot of the grid
  Wallclock wallclock;
  Pose pose;
  Camera intrinsics;
  int width = 0;
  int height = 0;
  std::vector<InterestPoint> points;
};

/// Image counts per (cycle, timestamp).
struct CorpusLayout {
  int cycles = 0;
  int timestamps = 0;
  Eigen::MatrixXi counts;  // cycles x timestamps, entry (k-1, j-1) = m[k][j]

  int count(int k, int j) const { return counts(k - 1, j - 1); }
  /// Sum over cycles at timestamp j, the denominator of the score at j.
  int slot_total(int j) const { return counts.col(j - 1).sum(); }
  int total() const { return counts.sum(); }
};

/// Throws InvalidArgument when an observation's timestamp or cycle is out of range.
CorpusLayout layout_corpus(std::span<const Observation> observations, const TimeGrid& grid);

enum class MatchMode { Geometric, Static };
std::string to_string(MatchMode m);
MatchMode match_mode_from_string(const std::string& name);

struct GroundTruthParams {
  double ratio = kDefaultRatio;
  double epipolar_tau_px = 2.0;       // Sampson distance bound
  double reprojection_tau_px = 2.0;   // triangulation acceptance
  double static_tau_px = 5.0;         // per-axis pixel bound in STATIC mode
  /// Baselines below this are treated as pure rotation: the match must agree
  /// with the rotation-only homography instead of being triangulated.
  double min_baseline_m = 1e-6;
  int threads = 1;
};

/// Observations with a descriptor index per image, built once.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<Observation> observations);

  std::size_t size() const { return observations_.size(); }
  const Observation& operator[](std::size_t i) const { return observations_[i]; }
  const std::vector<Observation>& observations() const { return observations_; }
  const DescriptorIndex& index(std::size_t i) const { return indices_[i]; }

 private:
  std::vector<Observation> observations_;
  std::vector<DescriptorIndex> indices_;
};

struct Inlier {
  std::size_t image = 0;  // corpus position of the target image
  std::size_t point = 0;  // interest point within that image
};

/// Geometric acceptance of a putative match between two posed images.
bool accept_match(const Observation& a, const Pixel& pix_a, const Observation& b, const Pixel& pix_b, MatchMode mode,
                  const GroundTruthParams& params);

/// Matches interest point `point` of image `source` against every other
/// image. A target contributes at most one inlier: its nearest neighbor,
/// if it survives the ratio test and the mode's acceptance rule. Images
/// that cannot be matched contribute nothing. Ascending by image.
std::vector<Inlier> match_point_against_corpus(const Corpus& corpus, std::size_t source, std::size_t point,
                                               MatchMode mode, const GroundTruthParams& params);

/// Per-slot scores plus a mask that is 0 where the slot has no images.
struct RepeatabilityTarget {
  Eigen::VectorXd scores;
  Eigen::VectorXd mask;
};

/// Slot of an inlier image, 1-based.
struct InlierSlot {
  int cycle = 1;
  int timestamp_index = 1;
};

/// y^j = (inliers at j, plus the point itself when j is its own slot) / sum_k m[k][j].
RepeatabilityTarget repeatability_vector(int own_timestamp, std::span<const InlierSlot> inliers,
                                         const CorpusLayout& layout);

struct GroundTruthSample {
  std::string image_id;
  std::size_t point_index = 0;  // within its image
  Keypoint keypoint;
  Wallclock wallclock;
  int timestamp_index = 1;
  int image_width = 0;
  int image_height = 0;
  Patch patch;
  Descriptor descriptor = Descriptor::Zero();
  Eigen::VectorXd y;
  Eigen::VectorXd mask;
  /// Optional provenance from a synthetic world; -1 when unknown.
  std::int64_t point_id = -1;
  int category = -1;
};

/// Decides whether interest point `point` of corpus image `image` becomes a sample.
using RetainFn = std::function<bool(std::size_t image, std::size_t point)>;

/// One sample per retained interest point, in (image, point) order.
/// Throws EmptyDataset for an empty corpus.
std::vector<GroundTruthSample> build_training_set(const Corpus& corpus, const TimeGrid& grid, MatchMode mode,
                                                  const GroundTruthParams& params, const RetainFn& retain = {});

}  // namespace trep
