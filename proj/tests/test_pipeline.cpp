#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "trep/dataset.hpp"
#include "trep/errors.hpp"
#include "trep/pipeline.hpp"

using namespace trep;
namespace fs = std::filesystem;

namespace {

WorldSpec small_spec(std::uint64_t seed) {
  WorldSpec spec = WorldSpec::default_spec(seed);
  spec.counts = {10, 10, 10, 10};
  spec.cycles = 2;
  spec.query_cycles = 1;
  return spec;
}

// Built once; every test case below reads it.
struct Fixture {
  Dataset dataset = make_synthetic_dataset(small_spec(31));
  PipelineParams params;
  FeatureSet features = extract_dataset_features(dataset, params);
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

const fs::path kTmp = fs::temp_directory_path() / "trep_pipeline_test";

}  // namespace

TEST_CASE("dataset layout") {
  const Dataset& ds = fixture().dataset;
  CHECK(ds.database_count() == 2u * 12 * 4);
  CHECK(ds.query_images().size() == 12u * 4);
  CHECK(ds.viewpoint_count() == 4);
  CHECK(ds.points.size() == 40);
  for (const auto& img : ds.images) {
    Image q = img;
    quantize_8bit(q);
    CHECK(q.pixels() == img.pixels());
  }
}

TEST_CASE("dataset directory round trip is byte stable") {
  const Dataset& ds = fixture().dataset;
  fs::remove_all(kTmp);
  save_dataset(ds, kTmp / "a");
  const Dataset back = load_dataset(kTmp / "a");
  REQUIRE(back.records.size() == ds.records.size());
  CHECK(back.grid == ds.grid);
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    CHECK(back.records[i].id == ds.records[i].id);
    CHECK(back.records[i].pose.rotation == ds.records[i].pose.rotation);
    CHECK(back.records[i].wallclock == ds.records[i].wallclock);
    CHECK(back.images[i].pixels() == ds.images[i].pixels());
    CHECK(back.renders[i].size() == ds.renders[i].size());
  }
  for (std::size_t i = 0; i < ds.points.size(); ++i) CHECK(back.points[i].profile == ds.points[i].profile);

  save_dataset(back, kTmp / "b");
  CHECK(slurp(kTmp / "a" / "manifest.json") == slurp(kTmp / "b" / "manifest.json"));
  CHECK(slurp(kTmp / "a" / "images" / (ds.records[3].id + ".ppm")) ==
        slurp(kTmp / "b" / "images" / (ds.records[3].id + ".ppm")));

  CHECK_THROWS_AS(load_dataset(kTmp / "missing"), InvalidArgument);
  {
    std::ofstream os(kTmp / "b" / "manifest.json", std::ios::binary);
    os << "{\"format\": \"trep-dataset\", \"version\": 1, \"grid\": 3";
  }
  CHECK_THROWS_AS(load_dataset(kTmp / "b"), CorruptFile);
  fs::remove_all(kTmp);
}

TEST_CASE("features associate with rendered stamps") {
  const Fixture& f = fixture();
  const auto assoc = associate_features(f.dataset, f.features, f.params.association_px);
  std::size_t stamps = 0, found = 0;
  for (std::size_t i = 0; i < f.dataset.images.size(); ++i) {
    for (const auto& e : f.dataset.renders[i]) {
      if (!patch_fits(f.dataset.images[i], e.center.x(), e.center.y())) continue;
      ++stamps;
      for (std::int64_t id : assoc[i]) found += id == static_cast<std::int64_t>(e.point_id);
    }
  }
  REQUIRE(stamps > 0);
  CHECK(static_cast<double>(found) / static_cast<double>(stamps) > 0.95);
}

TEST_CASE("ground truth over the dataset") {
  const Fixture& f = fixture();
  const TrainingSet set = build_dataset_ground_truth(f.dataset, f.features, f.params);
  REQUIRE(!set.samples.empty());
  CHECK(set.layouts.size() == 4);
  for (const auto& layout : set.layouts) CHECK(layout.counts == Eigen::MatrixXi::Ones(2, 12));
  for (const auto& s : set.samples) {
    CHECK(is_valid_repeatability(s.y));
    CHECK(s.point_id >= 0);
    CHECK(s.y(s.timestamp_index - 1) >= 0.5);
  }

  fs::create_directories(kTmp);
  save_training_set(set, kTmp / "t.rts");
  const TrainingSet back = load_training_set(kTmp / "t.rts");
  REQUIRE(back.samples.size() == set.samples.size());
  CHECK(back.grid == set.grid);
  CHECK(back.mode == set.mode);
  for (std::size_t i = 0; i < set.samples.size(); i += 17) {
    CHECK(back.samples[i].y == set.samples[i].y);
    CHECK(back.samples[i].descriptor == set.samples[i].descriptor);
    CHECK(back.samples[i].patch.data() == set.samples[i].patch.data());
    CHECK(back.samples[i].category == set.samples[i].category);
  }
  save_training_set(back, kTmp / "u.rts");
  CHECK(slurp(kTmp / "t.rts") == slurp(kTmp / "u.rts"));
  fs::remove_all(kTmp);

  const TrainingData data = make_training_data(set.samples, TimeEncoding::DayOfYear);
  CHECK(data.inputs.rows() == input_dim_for(2));
  CHECK(data.size() == static_cast<Eigen::Index>(set.samples.size()));
}

TEST_CASE("map, summaries and localization") {
  const Fixture& f = fixture();
  const auto tracks = build_tracks(f.dataset, f.features, f.params);
  REQUIRE(tracks.size() > 20);
  const auto map = build_map(f.dataset, f.features, tracks, nullptr);
  REQUIRE(map.size() == tracks.size());
  std::size_t close = 0, associated = 0;
  const auto assoc = associate_features(f.dataset, f.features, f.params.association_px);
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    CHECK(map[t].observing_images.size() >= 2);
    const auto [img, kp] = tracks[t].members.front();
    const std::int64_t id = assoc[img][kp];
    if (id >= 0) ++associated;
    if (id >= 0 && (f.dataset.points[static_cast<std::size_t>(id)].position - map[t].position).norm() < 0.2) ++close;
  }
  CHECK(static_cast<double>(associated) / static_cast<double>(tracks.size()) > 0.8);
  CHECK(static_cast<double>(close) / static_cast<double>(associated) > 0.85);

  fs::create_directories(kTmp);
  SummaryMap s = kcover_summarize_ratio(map, f.dataset.database_count(), 0.5);
  save_summary_map(map, s, kTmp / "m.rsm");
  const LoadedSummaryMap loaded = load_summary_map(kTmp / "m.rsm");
  REQUIRE(loaded.points.size() == s.retained.size());
  CHECK(loaded.summary.method == SummaryMethod::KCover);
  CHECK(loaded.summary.k == s.k);
  for (std::size_t i = 0; i < s.retained.size(); ++i) {
    CHECK(loaded.points[i].position == map[s.retained[i]].position);
    CHECK(loaded.points[i].observing_images == map[s.retained[i]].observing_images);
  }
  fs::remove_all(kTmp);

  const DatabaseIndex index = make_database_index(f.dataset, f.features, map);
  const auto queries = make_queries(f.dataset, f.features);
  CHECK(queries.size() == f.dataset.query_images().size());
  SummaryMap full;
  for (std::size_t i = 0; i < map.size(); ++i) full.retained.push_back(i);
  std::size_t ok = 0;
  for (const auto& q : queries) {
    const auto r = localize(q.features, q.intrinsics, map, full, index);
    if (r.status == LocalizationStatus::Ok && pose_error(*r.pose, q.truth).position_m < 0.5) ++ok;
  }
  CHECK(static_cast<double>(ok) / static_cast<double>(queries.size()) > 0.6);
}

TEST_CASE("category curves") {
  const Fixture& f = fixture();
  const TrainingSet set = build_dataset_ground_truth(f.dataset, f.features, f.params);
  const TrainingData data = make_training_data(set.samples, TimeEncoding::DayOfYear);
  const auto curves = category_curves(set.samples, data.targets);
  REQUIRE(curves.front().category == -1);
  CHECK(curves.front().count == set.samples.size());
  std::size_t total = 0;
  for (std::size_t i = 1; i < curves.size(); ++i) {
    total += curves[i].count;
    CHECK(curves[i].mae == doctest::Approx(0.0));
    CHECK(curves[i].truth.isApprox(curves[i].predicted));
  }
  CHECK(total == set.samples.size());

  const Eigen::VectorXd mean = masked_mean_target(data);
  CHECK(mean.size() == 12);
  CHECK(is_valid_repeatability(mean));
}
