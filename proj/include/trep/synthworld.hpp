#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "trep/geometry.hpp"
#include "trep/imaging.hpp"
#include "trep/timegrid.hpp"

namespace trep {

enum class Category { Building = 0, Tree = 1, Dynamic = 2, Background = 3 };
inline constexpr int kCategoryCount = 4;
inline constexpr int kStampCells = 9;

std::string to_string(Category c);
Category category_from_string(const std::string& name);

struct Viewpoint {
  Pose pose;
  Camera intrinsics;
};

struct NoiseParams {
  double sigma_px = 0.25;         // stamp placement jitter
  double sigma_app = 0.02;        // per-cell stamp intensity jitter
  double background_amplitude = 0.03;
  double sensor_sigma = 0.003;    // per-pixel noise
  double pose_jitter_m = 0.15;    // per-image camera center jitter (per axis)
  double pose_jitter_deg = 0.5;   // per-image rotation jitter (per axis)
};

/// Shapes of the planted visibility profiles.
struct ProfileParams {
  double high = 0.9;
  double low = 0.1;
  int winter_begin = 11;  // BUILDING low over [winter_begin, winter_end], 1-based
  int winter_end = 12;
  int tree_cut = 8;       // TREE high for j <= tree_cut, low afterwards
  double dynamic_peak = 0.9;
  double dynamic_off = 0.05;
  double background_lo = 0.1;
  double background_hi = 0.6;
};

struct WorldSpec {
  std::array<int, kCategoryCount> counts = {40, 40, 40, 40};
  TimeGrid grid = cmu_grid();
  int cycles = 3;             // database cycles M
  int query_cycles = 2;       // extra cycles rendered as localization queries
  int images_per_slot = 1;    // per viewpoint
  int image_width = 640;
  int image_height = 480;
  std::vector<Viewpoint> viewpoints;
  NoiseParams noise;
  ProfileParams profile;
  /// Scene volume the points are drawn from (world frame, meters).
  Eigen::Vector3d bounds_min{-5.0, -3.4, 8.0};
  Eigen::Vector3d bounds_max{20.0, 3.4, 16.0};
  double min_separation_px = 30.0;
  double stamp_cell_px = 3.0;
  double stamp_envelope_px = 9.0;
  double junction_contrast = 0.3;
  int capture_day_jitter = 3;
  std::uint64_t seed = 0;

  /// The irregular 12-date yearly grid (Mar 04 ... Dec 21).
  static TimeGrid cmu_grid();
  /// Default world: 4 viewpoints along a street facing a facade, T = 12,
  /// M = 3, one image per (slot, viewpoint), 40 points per category.
  static WorldSpec default_spec(std::uint64_t seed = 0);

  int total_points() const;
};

/// Designed probability that a point is rendered at each timestamp.
struct PlantedProfile {
  Eigen::VectorXd visibility;
};

struct ScenePoint {
  std::size_t id = 0;
  Category category = Category::Building;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  PlantedProfile profile;
  std::array<float, kStampCells * kStampCells> stamp{};  // texture in [0, 1]
  int peak_slot = 0;  // DYNAMIC only, 1-based
  double junction_polarity = 1.0;
};

struct SyntheticScene {
  std::vector<ScenePoint> points;
  Eigen::AlignedBox3d bounds;
};

enum class ImageRole { Database, Query };
std::string to_string(ImageRole r);
ImageRole image_role_from_string(const std::string& name);

/// Ground-truth metadata of one rendered image.
struct ImageRecord {
  std::string id;
  ImageRole role = ImageRole::Database;
  int cycle = 1;           // 1-based within its role
  int slot = 1;            // 1-based timestamp index
  int viewpoint = 0;
  Wallclock wallclock;
  Pose pose;
  Camera intrinsics;
  int width = 0;
  int height = 0;
};

/// A point stamp that was drawn into an image, at its (noisy) center.
struct RenderEntry {
  std::size_t point_id = 0;
  Pixel center = Pixel::Zero();
};

struct RenderedImage {
  ImageRecord record;
  Image image;
  std::vector<RenderEntry> manifest;
};

/// Deterministic scene from `spec.seed`. Throws InfeasibleSpec when points
/// cannot be placed so that at least two viewpoints see each one.
SyntheticScene generate_world(const WorldSpec& spec);

/// Metadata for every image the spec describes, database images first, in
/// (role, cycle, slot, viewpoint, replica) order. Cheap: nothing is drawn.
std::vector<ImageRecord> plan_images(const WorldSpec& spec);

/// Draws one planned image. Every image owns a substream of the world seed,
/// so images can be rendered in any order with identical results.
RenderedImage render_image(const SyntheticScene& scene, const WorldSpec& spec, const ImageRecord& record,
                           std::size_t image_index);

/// Renders every planned image.
std::vector<RenderedImage> render_observations(const SyntheticScene& scene, const WorldSpec& spec);

/// The profile used at render time. Throws UnknownPoint.
const PlantedProfile& planted_repeatability(const SyntheticScene& scene, std::size_t point_id);

/// Indices of viewpoints whose patch-valid image region contains the point.
std::vector<int> visible_viewpoints(const WorldSpec& spec, const Eigen::Vector3d& point, double margin_px);

}  // namespace trep
