#include "trep/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "trep/errors.hpp"
#include "trep/random.hpp"

namespace trep {
namespace {

// Substream tags; each consumer of the world seed gets its own sequence.
constexpr std::uint64_t kScenePlacementTag = 0x5C3E;
constexpr std::uint64_t kImagePoseTag = 0x1A9E;
constexpr std::uint64_t kImageRenderTag = 0x4E7D;

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

Eigen::Matrix3d small_rotation(SplitMix64& rng, double sigma_deg) {
  const Eigen::Vector3d w(rng.normal(0.0, deg2rad(sigma_deg)), rng.normal(0.0, deg2rad(sigma_deg)),
                          rng.normal(0.0, deg2rad(sigma_deg)));
  if (w.norm() == 0.0) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix();
}

PlantedProfile make_profile(Category c, const ProfileParams& pp, int t, SplitMix64& rng, int& peak_slot) {
  Eigen::VectorXd v(t);
  switch (c) {
    case Category::Building:
      for (int j = 1; j <= t; ++j) v(j - 1) = (j >= pp.winter_begin && j <= pp.winter_end) ? pp.low : pp.high;
      break;
    case Category::Tree:
      for (int j = 1; j <= t; ++j) v(j - 1) = j <= pp.tree_cut ? pp.high : pp.low;
      break;
    case Category::Dynamic:
      peak_slot = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(t)));
      for (int j = 1; j <= t; ++j) v(j - 1) = j == peak_slot ? pp.dynamic_peak : pp.dynamic_off;
      break;
    case Category::Background:
      for (int j = 1; j <= t; ++j) v(j - 1) = rng.uniform(pp.background_lo, pp.background_hi);
      break;
  }
  return {v};
}

// Category templates carry the coarse look a predictor can learn from;
// the per-point texture on top keeps stamps of one category distinguishable.
std::array<float, kStampCells * kStampCells> make_stamp(Category c, SplitMix64& rng) {
  std::array<float, kStampCells * kStampCells> s{};
  constexpr double kTexture = 0.35;
  for (int r = 0; r < kStampCells; ++r) {
    for (int col = 0; col < kStampCells; ++col) {
      double base = 0.5;
      switch (c) {
        case Category::Building: base = 0.78; break;
        case Category::Tree: base = 0.22; break;
        case Category::Dynamic: base = r < kStampCells / 2 ? 0.75 : (r == kStampCells / 2 ? 0.5 : 0.25); break;
        case Category::Background: base = col < kStampCells / 2 ? 0.25 : (col == kStampCells / 2 ? 0.5 : 0.75); break;
      }
      s[static_cast<std::size_t>(r * kStampCells + col)] =
          static_cast<float>(std::clamp(base + rng.uniform(-kTexture, kTexture), 0.0, 1.0));
    }
  }
  return s;
}

double smooth_background(const Eigen::MatrixXd& coarse, double cell, double x, double y) {
  const double u = x / cell, v = y / cell;
  const int i = std::clamp(static_cast<int>(std::floor(u)), 0, static_cast<int>(coarse.cols()) - 2);
  const int j = std::clamp(static_cast<int>(std::floor(v)), 0, static_cast<int>(coarse.rows()) - 2);
  const double fu = std::clamp(u - i, 0.0, 1.0), fv = std::clamp(v - j, 0.0, 1.0);
  // Smoothstep keeps the background gradient continuous across coarse cells.
  const double su = fu * fu * (3.0 - 2.0 * fu), sv = fv * fv * (3.0 - 2.0 * fv);
  const double top = (1.0 - su) * coarse(j, i) + su * coarse(j, i + 1);
  const double bottom = (1.0 - su) * coarse(j + 1, i) + su * coarse(j + 1, i + 1);
  return (1.0 - sv) * top + sv * bottom;
}

}  // namespace

std::string to_string(Category c) {
  switch (c) {
    case Category::Building: return "BUILDING";
    case Category::Tree: return "TREE";
    case Category::Dynamic: return "DYNAMIC";
    case Category::Background: return "BACKGROUND";
  }
  return "BUILDING";
}

Category category_from_string(const std::string& name) {
  for (int c = 0; c < kCategoryCount; ++c)
    if (to_string(static_cast<Category>(c)) == name) return static_cast<Category>(c);
  throw InvalidArgument("unknown category: " + name);
}

std::string to_string(ImageRole r) { return r == ImageRole::Database ? "database" : "query"; }

ImageRole image_role_from_string(const std::string& name) {
  if (name == "database") return ImageRole::Database;
  if (name == "query") return ImageRole::Query;
  throw InvalidArgument("unknown image role: " + name);
}

TimeGrid WorldSpec::cmu_grid() {
  const std::array<std::pair<int, int>, 12> dates = {{{3, 4}, {4, 21}, {7, 28}, {9, 1}, {9, 15}, {10, 1},
                                                      {10, 19}, {10, 26}, {11, 3}, {11, 12}, {11, 22}, {12, 21}}};
  std::vector<std::int64_t> slots;
  for (const auto& [m, d] : dates) slots.push_back((Wallclock::from_date(m, d).day_of_year - 1) * 1440LL);
  return TimeGrid::explicit_slots(CycleKind::Year, 12, std::move(slots));
}

WorldSpec WorldSpec::default_spec(std::uint64_t seed) {
  WorldSpec spec;
  spec.seed = seed;
  Camera k{500.0, 500.0, spec.image_width / 2.0, spec.image_height / 2.0};
  for (int v = 0; v < 4; ++v)
    spec.viewpoints.push_back({Pose::from_center(Eigen::Matrix3d::Identity(), Eigen::Vector3d(5.0 * v, 0.0, 0.0)), k});
  return spec;
}

int WorldSpec::total_points() const {
  int n = 0;
  for (int c : counts) n += c;
  return n;
}

std::vector<int> visible_viewpoints(const WorldSpec& spec, const Eigen::Vector3d& point, double margin_px) {
  std::vector<int> out;
  for (std::size_t v = 0; v < spec.viewpoints.size(); ++v) {
    const auto& vp = spec.viewpoints[v];
    if (!(vp.pose.to_camera(point).z() > 0.5)) continue;
    const Pixel p = project(vp.pose, vp.intrinsics, point);
    if (p.x() >= margin_px && p.y() >= margin_px && p.x() < spec.image_width - margin_px &&
        p.y() < spec.image_height - margin_px)
      out.push_back(static_cast<int>(v));
  }
  return out;
}

SyntheticScene generate_world(const WorldSpec& spec) {
  for (int c : spec.counts)
    if (c < 0) throw InfeasibleSpec("category counts must be non-negative");
  if (spec.images_per_slot < 1) throw InfeasibleSpec("images_per_slot must be >= 1");
  if (spec.cycles < 1 || spec.query_cycles < 0) throw InfeasibleSpec("cycle counts out of range");
  if (spec.viewpoints.size() < 2) throw InfeasibleSpec("at least two viewpoints are required");
  if (spec.image_width < 2 * kPatchSize || spec.image_height < 2 * kPatchSize)
    throw InfeasibleSpec("images too small for 64x64 patches");

  SyntheticScene scene;
  scene.bounds = Eigen::AlignedBox3d(spec.bounds_min, spec.bounds_max);
  SplitMix64 placement = SplitMix64(spec.seed).fork(kScenePlacementTag);
  const int t = spec.grid.size();
  // A stamp must land where its patch fits, even after jitter.
  const double margin = kPatchHalf + 4.0;
  const double sep2 = spec.min_separation_px * spec.min_separation_px;
  std::vector<std::vector<Pixel>> projected(spec.viewpoints.size());

  std::size_t id = 0;
  for (int c = 0; c < kCategoryCount; ++c) {
    for (int n = 0; n < spec.counts[static_cast<std::size_t>(c)]; ++n, ++id) {
      SplitMix64 point_rng = placement.fork(id);
      bool placed = false;
      for (int attempt = 0; attempt < 20000 && !placed; ++attempt) {
        const Eigen::Vector3d x(point_rng.uniform(spec.bounds_min.x(), spec.bounds_max.x()),
                                point_rng.uniform(spec.bounds_min.y(), spec.bounds_max.y()),
                                point_rng.uniform(spec.bounds_min.z(), spec.bounds_max.z()));
        const auto vis = visible_viewpoints(spec, x, margin);
        if (vis.size() < 2) continue;
        // Separation only matters where the point can actually be drawn.
        const auto in_frame = visible_viewpoints(spec, x, -spec.min_separation_px);
        bool crowded = false;
        for (int v : in_frame) {
          const auto& vp = spec.viewpoints[static_cast<std::size_t>(v)];
          const Pixel p = project(vp.pose, vp.intrinsics, x);
          for (const Pixel& q : projected[static_cast<std::size_t>(v)])
            if ((p - q).squaredNorm() < sep2) {
              crowded = true;
              break;
            }
          if (crowded) break;
        }
        if (crowded) continue;
        for (int v : in_frame) {
          const auto& vp = spec.viewpoints[static_cast<std::size_t>(v)];
          projected[static_cast<std::size_t>(v)].push_back(project(vp.pose, vp.intrinsics, x));
        }
        ScenePoint sp;
        sp.id = id;
        sp.category = static_cast<Category>(c);
        sp.position = x;
        sp.profile = make_profile(sp.category, spec.profile, t, point_rng, sp.peak_slot);
        sp.stamp = make_stamp(sp.category, point_rng);
        sp.junction_polarity = point_rng.bernoulli(0.5) ? 1.0 : -1.0;
        scene.points.push_back(std::move(sp));
        placed = true;
      }
      if (!placed)
        throw InfeasibleSpec("could not place point " + std::to_string(id) +
                             " where two viewpoints see it; enlarge the scene or reduce the counts");
    }
  }
  return scene;
}

std::vector<ImageRecord> plan_images(const WorldSpec& spec) {
  std::vector<ImageRecord> out;
  SplitMix64 pose_stream = SplitMix64(spec.seed).fork(kImagePoseTag);
  const int t = spec.grid.size();
  std::size_t index = 0;
  for (ImageRole role : {ImageRole::Database, ImageRole::Query}) {
    const int cycles = role == ImageRole::Database ? spec.cycles : spec.query_cycles;
    for (int k = 1; k <= cycles; ++k) {
      for (int j = 1; j <= t; ++j) {
        for (std::size_t v = 0; v < spec.viewpoints.size(); ++v) {
          for (int r = 0; r < spec.images_per_slot; ++r, ++index) {
            SplitMix64 rng = pose_stream.fork(index);
            ImageRecord rec;
            char buf[64];
            std::snprintf(buf, sizeof buf, "%s_c%02d_t%02d_v%zu_r%d", role == ImageRole::Database ? "db" : "q", k, j, v,
                          r);
            rec.id = buf;
            rec.role = role;
            rec.cycle = k;
            rec.slot = j;
            rec.viewpoint = static_cast<int>(v);
            rec.width = spec.image_width;
            rec.height = spec.image_height;
            rec.intrinsics = spec.viewpoints[v].intrinsics;

            const Pose& base = spec.viewpoints[v].pose;
            const Eigen::Vector3d center =
                base.center() + Eigen::Vector3d(rng.normal(0.0, spec.noise.pose_jitter_m),
                                                rng.normal(0.0, spec.noise.pose_jitter_m),
                                                rng.normal(0.0, spec.noise.pose_jitter_m));
            const Eigen::Matrix3d rot = small_rotation(rng, spec.noise.pose_jitter_deg) * base.rotation;
            rec.pose = Pose::from_center(rot, center);

            // Capture time: the slot's date shifted by a few days, daytime hours.
            Wallclock w = spec.grid.slot_wallclock(j, k);
            if (spec.grid.cycle_kind() != CycleKind::Day) {
              const int jitter = spec.capture_day_jitter > 0
                                     ? static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * spec.capture_day_jitter + 1))) -
                                           spec.capture_day_jitter
                                     : 0;
              w.day_of_year = std::clamp(w.day_of_year + jitter, 1, 365);
              if (spec.grid.index(w) != j) w = spec.grid.slot_wallclock(j, k);
              if (spec.grid.cycle_kind() == CycleKind::Year)
                w.minute_of_day = 8 * 60 + static_cast<int>(rng.below(10 * 60));
            }
            rec.wallclock = w;
            out.push_back(std::move(rec));
          }
        }
      }
    }
  }
  return out;
}

RenderedImage render_image(const SyntheticScene& scene, const WorldSpec& spec, const ImageRecord& record,
                           std::size_t image_index) {
  SplitMix64 image_rng = SplitMix64(spec.seed).fork(kImageRenderTag).fork(image_index);
  RenderedImage out;
  out.record = record;
  out.image = Image(record.width, record.height, 0.0f, record.id);

  // Low-texture background: smooth noise on a coarse lattice plus faint
  // sensor noise, slightly tinted per channel.
  constexpr double kCoarse = 24.0;
  SplitMix64 bg_rng = image_rng.fork(0xB6);
  Eigen::MatrixXd coarse(static_cast<Eigen::Index>(record.height / kCoarse) + 2,
                         static_cast<Eigen::Index>(record.width / kCoarse) + 2);
  for (Eigen::Index r = 0; r < coarse.rows(); ++r)
    for (Eigen::Index c = 0; c < coarse.cols(); ++c)
      coarse(r, c) = 0.45 + spec.noise.background_amplitude * bg_rng.uniform(-1.0, 1.0);
  const std::array<double, 3> tint = {1.0, 0.98, 1.03};
  for (int y = 0; y < record.height; ++y) {
    for (int x = 0; x < record.width; ++x) {
      const double b = smooth_background(coarse, kCoarse, x, y) + bg_rng.normal(0.0, spec.noise.sensor_sigma);
      for (int ch = 0; ch < 3; ++ch) out.image.at(x, y, ch) = static_cast<float>(b * tint[static_cast<std::size_t>(ch)]);
    }
  }

  // Visible stamps, drawn far to near so nearer points occlude.
  struct Draw {
    const ScenePoint* point;
    Pixel center;
    double depth;
    SplitMix64 rng;
  };
  std::vector<Draw> draws;
  const int slot = record.slot;
  for (const ScenePoint& p : scene.points) {
    SplitMix64 prng = image_rng.fork(0x1000 + p.id);
    const double depth = record.pose.to_camera(p.position).z();
    if (!(depth > 0.5)) continue;
    const bool appears = prng.bernoulli(p.profile.visibility(slot - 1));
    if (!appears) continue;
    Pixel c = project(record.pose, record.intrinsics, p.position);
    c += Pixel(prng.normal(0.0, spec.noise.sigma_px), prng.normal(0.0, spec.noise.sigma_px));
    const double half = kStampCells * spec.stamp_cell_px / 2.0 + 2.0;
    if (c.x() < -half || c.y() < -half || c.x() > record.width + half || c.y() > record.height + half) continue;
    draws.push_back({&p, c, depth, prng});
  }
  std::stable_sort(draws.begin(), draws.end(), [](const Draw& a, const Draw& b) { return a.depth > b.depth; });

  constexpr int kSuper = 4;
  const double cell = spec.stamp_cell_px;
  const double half_extent = kStampCells * cell / 2.0;
  const double env2 = 2.0 * spec.stamp_envelope_px * spec.stamp_envelope_px;
  const double junction2 = 2.0 * cell * cell;
  for (Draw& d : draws) {
    std::array<double, kStampCells * kStampCells> values{};
    for (std::size_t i = 0; i < values.size(); ++i)
      values[i] = std::clamp(d.point->stamp[i] + d.rng.normal(0.0, spec.noise.sigma_app), 0.0, 1.0);
    auto texture = [&](double u, double v) {
      // Bilinear between cell centers keeps the texture free of hard corners.
      const double cu = std::clamp(u - 0.5, 0.0, kStampCells - 1.0);
      const double cv = std::clamp(v - 0.5, 0.0, kStampCells - 1.0);
      const int iu = std::min(static_cast<int>(cu), kStampCells - 2);
      const int iv = std::min(static_cast<int>(cv), kStampCells - 2);
      const double fu = cu - iu, fv = cv - iv;
      auto at = [&](int r, int c) { return values[static_cast<std::size_t>(r * kStampCells + c)]; };
      return (1 - fv) * ((1 - fu) * at(iv, iu) + fu * at(iv, iu + 1)) +
             fv * ((1 - fu) * at(iv + 1, iu) + fu * at(iv + 1, iu + 1));
    };
    const double polarity = d.point->junction_polarity;
    const int x0 = std::max(0, static_cast<int>(std::floor(d.center.x() - half_extent)) - 1);
    const int x1 = std::min(record.width - 1, static_cast<int>(std::ceil(d.center.x() + half_extent)) + 1);
    const int y0 = std::max(0, static_cast<int>(std::floor(d.center.y() - half_extent)) - 1);
    const int y1 = std::min(record.height - 1, static_cast<int>(std::ceil(d.center.y() + half_extent)) + 1);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        double alpha_sum = 0.0, value_sum = 0.0;
        for (int sy = 0; sy < kSuper; ++sy) {
          for (int sx = 0; sx < kSuper; ++sx) {
            const double px = x + (sx + 0.5) / kSuper - 0.5;
            const double py = y + (sy + 0.5) / kSuper - 0.5;
            const double u = (px - d.center.x()) / cell + kStampCells / 2.0;
            const double v = (py - d.center.y()) / cell + kStampCells / 2.0;
            if (u < 0.0 || v < 0.0 || u >= kStampCells || v >= kStampCells) continue;
            const double dx = px - d.center.x(), dy = py - d.center.y();
            const double r2 = dx * dx + dy * dy;
            const double a = std::exp(-r2 / env2);
            // Saddle (X-junction) at the exact center anchors the keypoint.
            const double sign = (dx >= 0.0) == (dy >= 0.0) ? 1.0 : -1.0;
            const double junction = polarity * spec.junction_contrast * sign * std::exp(-r2 / junction2);
            alpha_sum += a;
            value_sum += a * std::clamp(texture(u, v) + junction, 0.0, 1.0);
          }
        }
        if (alpha_sum <= 0.0) continue;
        const double alpha = alpha_sum / (kSuper * kSuper);
        const double value = value_sum / alpha_sum;
        for (int ch = 0; ch < 3; ++ch) {
          float& px = out.image.at(x, y, ch);
          px = static_cast<float>((1.0 - alpha) * px + alpha * value);
        }
      }
    }
    out.manifest.push_back({d.point->id, d.center});
  }
  out.image.clamp();
  std::sort(out.manifest.begin(), out.manifest.end(),
            [](const RenderEntry& a, const RenderEntry& b) { return a.point_id < b.point_id; });
  return out;
}

std::vector<RenderedImage> render_observations(const SyntheticScene& scene, const WorldSpec& spec) {
  const auto records = plan_images(spec);
  std::vector<RenderedImage> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) out.push_back(render_image(scene, spec, records[i], i));
  return out;
}

const PlantedProfile& planted_repeatability(const SyntheticScene& scene, std::size_t point_id) {
  for (const auto& p : scene.points)
    if (p.id == point_id) return p.profile;
  throw UnknownPoint("no point with id " + std::to_string(point_id));
}

}  // namespace trep
