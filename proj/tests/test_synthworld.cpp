#include <doctest.h>

#include <algorithm>

#include "trep/errors.hpp"
#include "trep/synthworld.hpp"

using namespace trep;

namespace {

WorldSpec small_spec(std::uint64_t seed) {
  WorldSpec spec = WorldSpec::default_spec(seed);
  spec.counts = {6, 6, 6, 6};
  spec.cycles = 2;
  spec.query_cycles = 0;
  return spec;
}

}  // namespace

TEST_CASE("building-only world uses the plateau template") {
  WorldSpec spec = small_spec(1);
  spec.counts = {12, 0, 0, 0};
  const SyntheticScene scene = generate_world(spec);
  REQUIRE(scene.points.size() == 12);
  for (const auto& p : scene.points) {
    CHECK(p.category == Category::Building);
    for (int j = 1; j <= 12; ++j) CHECK(p.profile.visibility(j - 1) == (j >= 11 ? 0.1 : 0.9));
    CHECK(planted_repeatability(scene, p.id).visibility == p.profile.visibility);
  }
  CHECK_THROWS_AS(planted_repeatability(scene, 999), UnknownPoint);
}

TEST_CASE("category profiles follow their templates") {
  const SyntheticScene scene = generate_world(WorldSpec::default_spec(2));
  CHECK(scene.points.size() == 160);
  for (const auto& p : scene.points) {
    const Eigen::VectorXd& v = p.profile.visibility;
    CHECK(is_valid_repeatability(v));
    switch (p.category) {
      case Category::Tree:
        for (int j = 1; j <= 12; ++j) CHECK(v(j - 1) == (j <= 8 ? 0.9 : 0.1));
        break;
      case Category::Dynamic:
        REQUIRE(p.peak_slot >= 1);
        for (int j = 1; j <= 12; ++j) CHECK(v(j - 1) == (j == p.peak_slot ? 0.9 : 0.05));
        break;
      case Category::Background:
        CHECK(v.minCoeff() >= 0.1);
        CHECK(v.maxCoeff() <= 0.6);
        break;
      case Category::Building: break;
    }
  }
}

TEST_CASE("same seed gives the same scene") {
  const SyntheticScene a = generate_world(small_spec(3));
  const SyntheticScene b = generate_world(small_spec(3));
  REQUIRE(a.points.size() == b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    CHECK(a.points[i].position == b.points[i].position);
    CHECK(a.points[i].profile.visibility == b.points[i].profile.visibility);
    CHECK(a.points[i].stamp == b.points[i].stamp);
  }
  const SyntheticScene c = generate_world(small_spec(4));
  CHECK(c.points[0].position != a.points[0].position);
}

TEST_CASE("every point is visible from two viewpoints") {
  const WorldSpec spec = WorldSpec::default_spec(5);
  const SyntheticScene scene = generate_world(spec);
  for (const auto& p : scene.points) CHECK(visible_viewpoints(spec, p.position, kPatchHalf).size() >= 2);
}

TEST_CASE("infeasible specs are rejected") {
  WorldSpec spec = small_spec(6);
  spec.viewpoints.resize(1);
  CHECK_THROWS_AS(generate_world(spec), InfeasibleSpec);
  spec = small_spec(6);
  spec.counts = {-1, 0, 0, 0};
  CHECK_THROWS_AS(generate_world(spec), InfeasibleSpec);
  spec = small_spec(6);
  spec.counts = {3000, 0, 0, 0};
  CHECK_THROWS_AS(generate_world(spec), InfeasibleSpec);
}

TEST_CASE("image plan covers every slot and viewpoint") {
  WorldSpec spec = small_spec(7);
  spec.images_per_slot = 2;
  spec.query_cycles = 1;
  const auto plan = plan_images(spec);
  CHECK(plan.size() == static_cast<std::size_t>(3 * 12 * 4 * 2));
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(2, 12);
  for (const auto& r : plan) {
    if (r.role != ImageRole::Database) continue;
    CHECK(spec.grid.index(r.wallclock) == r.slot);
    ++counts(r.cycle - 1, r.slot - 1);
  }
  CHECK(counts == Eigen::MatrixXi::Constant(2, 12, 2 * 4));
  CHECK(plan.back().role == ImageRole::Query);
}

TEST_CASE("rendering is deterministic and follows visibility draws") {
  WorldSpec spec = small_spec(8);
  spec.counts = {0, 0, 12, 0};
  const SyntheticScene scene = generate_world(spec);
  const auto plan = plan_images(spec);
  int at_peak = 0, off_peak = 0, peak_total = 0, off_total = 0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const RenderedImage img = render_image(scene, spec, plan[i], i);
    for (const auto& p : scene.points) {
      const auto vis = visible_viewpoints(spec, p.position, kPatchHalf);
      if (std::find(vis.begin(), vis.end(), plan[i].viewpoint) == vis.end()) continue;
      bool drawn = false;
      for (const auto& e : img.manifest) drawn = drawn || e.point_id == p.id;
      if (plan[i].slot == p.peak_slot) {
        ++peak_total;
        at_peak += drawn;
      } else {
        ++off_total;
        off_peak += drawn;
      }
    }
    if (i == 5) {
      const RenderedImage again = render_image(scene, spec, plan[i], i);
      CHECK(again.image.pixels() == img.image.pixels());
      CHECK(again.manifest.size() == img.manifest.size());
    }
  }
  REQUIRE(peak_total > 0);
  CHECK(static_cast<double>(at_peak) / peak_total > 0.7);
  CHECK(static_cast<double>(off_peak) / off_total < 0.12);
}

TEST_CASE("noise-free always-visible world draws every stamp") {
  WorldSpec spec = small_spec(9);
  spec.cycles = 1;
  spec.profile.high = spec.profile.low = 1.0;
  spec.profile.dynamic_peak = spec.profile.dynamic_off = 1.0;
  spec.profile.background_lo = spec.profile.background_hi = 1.0;
  spec.noise.sigma_px = spec.noise.sigma_app = 0.0;
  const SyntheticScene scene = generate_world(spec);
  const auto plan = plan_images(spec);
  for (std::size_t i = 0; i < plan.size(); i += 7) {
    const RenderedImage img = render_image(scene, spec, plan[i], i);
    for (const auto& p : scene.points) {
      const auto vis = visible_viewpoints(spec, p.position, kPatchHalf);
      if (std::find(vis.begin(), vis.end(), plan[i].viewpoint) == vis.end()) continue;
      bool drawn = false;
      for (const auto& e : img.manifest) drawn = drawn || e.point_id == p.id;
      CHECK(drawn);
    }
  }
}
