#include "trep/dataset.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "trep/binio.hpp"
#include "trep/errors.hpp"
#include "trep/parallel.hpp"

namespace trep {

using nlohmann::json;

std::size_t Dataset::database_count() const {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(),
                                                [](const ImageRecord& r) { return r.role == ImageRole::Database; }));
}

std::vector<std::size_t> Dataset::database_images() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].role == ImageRole::Database) out.push_back(i);
  return out;
}

std::vector<std::size_t> Dataset::query_images() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].role == ImageRole::Query) out.push_back(i);
  return out;
}

int Dataset::viewpoint_count() const {
  int n = 0;
  for (const auto& r : records) n = std::max(n, r.viewpoint + 1);
  return n;
}

Dataset make_synthetic_dataset(const WorldSpec& spec, int threads) {
  const SyntheticScene scene = generate_world(spec);
  Dataset ds;
  ds.grid = spec.grid;
  ds.cycles = spec.cycles;
  ds.query_cycles = spec.query_cycles;
  ds.seed = spec.seed;
  ds.records = plan_images(spec);
  ds.images.resize(ds.records.size());
  ds.renders.resize(ds.records.size());
  parallel_for(ds.records.size(), threads, [&](std::size_t i) {
    RenderedImage r = render_image(scene, spec, ds.records[i], i);
    quantize_8bit(r.image);
    ds.images[i] = std::move(r.image);
    ds.renders[i] = std::move(r.manifest);
  });
  for (const auto& p : scene.points) ds.points.push_back({p.id, p.category, p.position, p.profile.visibility});
  return ds;
}

namespace {

json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json pose_to_json(const Pose& p) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(p.rotation(r, c));
  return {{"rotation", rot}, {"translation", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

Pose pose_from_json(const json& j) {
  Pose p;
  const auto rot = j.at("rotation").get<std::vector<double>>();
  const auto t = j.at("translation").get<std::vector<double>>();
  if (rot.size() != 9 || t.size() != 3) throw CorruptFile("pose must have 9 rotation and 3 translation entries");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = rot[static_cast<std::size_t>(r * 3 + c)];
  p.translation = Eigen::Vector3d(t[0], t[1], t[2]);
  return p;
}

json grid_to_json(const TimeGrid& g) {
  return {{"cycle", to_string(g.cycle_kind())},
          {"T", g.size()},
          {"irregular", g.irregular()},
          {"delta_t_minutes", g.delta_t_minutes()},
          {"slots_minutes", g.slots()}};
}

TimeGrid grid_from_json(const json& j) {
  const CycleKind kind = cycle_kind_from_string(j.at("cycle").get<std::string>());
  const int t = j.at("T").get<int>();
  auto slots = j.at("slots_minutes").get<std::vector<std::int64_t>>();
  if (j.at("irregular").get<bool>()) return TimeGrid::explicit_slots(kind, t, std::move(slots));
  if (slots.empty()) throw CorruptFile("grid without slots");
  return TimeGrid::regular(kind, t, j.at("delta_t_minutes").get<std::int64_t>(), slots.front());
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  json m;
  m["format"] = "trep-dataset";
  m["version"] = 1;
  m["seed"] = ds.seed;
  m["grid"] = grid_to_json(ds.grid);
  m["cycles"] = ds.cycles;
  m["query_cycles"] = ds.query_cycles;
  json images = json::array();
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const ImageRecord& r = ds.records[i];
    json render = json::array();
    for (const auto& e : ds.renders[i]) render.push_back({e.point_id, e.center.x(), e.center.y()});
    images.push_back({{"id", r.id},
                      {"file", "images/" + r.id + ".ppm"},
                      {"role", to_string(r.role)},
                      {"cycle", r.cycle},
                      {"slot", r.slot},
                      {"viewpoint", r.viewpoint},
                      {"wallclock", {r.wallclock.minute_of_day, r.wallclock.day_of_year, r.wallclock.cycle_id}},
                      {"pose", pose_to_json(r.pose)},
                      {"intrinsics", {r.intrinsics.fx, r.intrinsics.fy, r.intrinsics.cx, r.intrinsics.cy}},
                      {"width", r.width},
                      {"height", r.height},
                      {"rendered", render}});
    write_ppm(ds.images[i], dir / "images" / (r.id + ".ppm"));
  }
  m["images"] = std::move(images);
  json points = json::array();
  for (const auto& p : ds.points)
    points.push_back({{"id", p.id},
                      {"category", to_string(p.category)},
                      {"position", {p.position.x(), p.position.y(), p.position.z()}},
                      {"profile", to_json(p.profile)}});
  m["points"] = std::move(points);
  std::ofstream os(dir / "manifest.json", std::ios::binary);
  if (!os) throw InvalidArgument("cannot write " + (dir / "manifest.json").string());
  os << m.dump(1) << '\n';
  if (!os) throw Error("failed writing the dataset manifest");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest = dir / "manifest.json";
  if (!std::filesystem::is_regular_file(manifest)) throw InvalidArgument("no manifest.json in " + dir.string());
  std::ifstream is(manifest, std::ios::binary);
  Dataset ds;
  try {
    const json m = json::parse(is);
    if (m.at("format").get<std::string>() != "trep-dataset") throw CorruptFile("not a dataset manifest");
    if (m.at("version").get<int>() != 1) throw VersionMismatch("unsupported dataset version");
    ds.seed = m.at("seed").get<std::uint64_t>();
    ds.grid = grid_from_json(m.at("grid"));
    ds.cycles = m.at("cycles").get<int>();
    ds.query_cycles = m.at("query_cycles").get<int>();
    for (const auto& j : m.at("images")) {
      ImageRecord r;
      r.id = j.at("id").get<std::string>();
      r.role = image_role_from_string(j.at("role").get<std::string>());
      r.cycle = j.at("cycle").get<int>();
      r.slot = j.at("slot").get<int>();
      r.viewpoint = j.at("viewpoint").get<int>();
      const auto w = j.at("wallclock").get<std::vector<int>>();
      if (w.size() != 3) throw CorruptFile("wallclock must have 3 fields");
      r.wallclock = {w[0], w[1], w[2]};
      if (!r.wallclock.valid()) throw CorruptFile("invalid wallclock for " + r.id);
      if (r.slot < 1 || r.slot > ds.grid.size() || r.cycle < 1) throw CorruptFile("invalid slot or cycle for " + r.id);
      r.pose = pose_from_json(j.at("pose"));
      const auto k = j.at("intrinsics").get<std::vector<double>>();
      if (k.size() != 4) throw CorruptFile("intrinsics must have 4 fields");
      r.intrinsics = {k[0], k[1], k[2], k[3]};
      r.width = j.at("width").get<int>();
      r.height = j.at("height").get<int>();
      std::vector<RenderEntry> render;
      for (const auto& e : j.at("rendered"))
        render.push_back({e.at(0).get<std::size_t>(), Pixel(e.at(1).get<double>(), e.at(2).get<double>())});
      Image img = read_ppm(dir / j.at("file").get<std::string>());
      if (img.width() != r.width || img.height() != r.height) throw CorruptFile("image size mismatch for " + r.id);
      img.set_id(r.id);
      ds.records.push_back(std::move(r));
      ds.renders.push_back(std::move(render));
      ds.images.push_back(std::move(img));
    }
    for (const auto& j : m.at("points")) {
      PointInfo p;
      p.id = j.at("id").get<std::size_t>();
      p.category = category_from_string(j.at("category").get<std::string>());
      const auto x = j.at("position").get<std::vector<double>>();
      if (x.size() != 3) throw CorruptFile("point position must have 3 entries");
      p.position = Eigen::Vector3d(x[0], x[1], x[2]);
      p.profile = vector_from_json(j.at("profile"));
      if (p.profile.size() != ds.grid.size()) throw CorruptFile("profile length differs from the grid");
      ds.points.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw CorruptFile(std::string("malformed manifest: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw CorruptFile(std::string("malformed manifest: ") + e.what());
  }
  if (ds.records.empty()) throw EmptyDataset("dataset has no images");
  return ds;
}

namespace {

constexpr char kTrainingMagic[5] = "RTS1";
constexpr std::uint8_t kTrainingVersion = 1;
constexpr char kSummaryMagic[5] = "RSM1";
constexpr std::uint8_t kSummaryVersion = 1;
constexpr std::uint32_t kMaxCount = 1u << 26;

void write_descriptor(std::ostream& os, const Descriptor& d) {
  for (Eigen::Index i = 0; i < d.size(); ++i) binio::write<double>(os, d(i));
}

Descriptor read_descriptor(std::istream& is) {
  Descriptor d;
  for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = binio::read<double>(is);
  return d;
}

void expect_end(std::istream& is) {
  if (is.peek() != std::char_traits<char>::eof()) throw CorruptFile("trailing bytes");
}

}  // namespace

void save_training_set(const TrainingSet& set, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot open " + path.string() + " for writing");
  binio::write_magic(os, kTrainingMagic, kTrainingVersion);
  write_grid(os, set.grid);
  binio::write<std::uint8_t>(os, static_cast<std::uint8_t>(set.mode));
  binio::write<double>(os, set.params.ratio);
  binio::write<double>(os, set.params.epipolar_tau_px);
  binio::write<double>(os, set.params.reprojection_tau_px);
  binio::write<double>(os, set.params.static_tau_px);
  binio::write<double>(os, set.params.min_baseline_m);
  binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(set.layouts.size()));
  for (const auto& l : set.layouts) {
    binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(l.cycles));
    binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(l.timestamps));
    for (int k = 1; k <= l.cycles; ++k)
      for (int j = 1; j <= l.timestamps; ++j) binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(l.count(k, j)));
  }
  const int t = set.grid.size();
  binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(set.samples.size()));
  for (const auto& s : set.samples) {
    if (s.y.size() != t || s.mask.size() != t) throw ShapeMismatch("sample length differs from the grid");
    binio::write_string(os, s.image_id);
    binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(s.point_index));
    binio::write<double>(os, s.keypoint.x);
    binio::write<double>(os, s.keypoint.y);
    binio::write<double>(os, s.keypoint.score);
    binio::write<std::int32_t>(os, s.wallclock.minute_of_day);
    binio::write<std::int32_t>(os, s.wallclock.day_of_year);
    binio::write<std::int32_t>(os, s.wallclock.cycle_id);
    binio::write<std::int32_t>(os, s.timestamp_index);
    binio::write<std::int32_t>(os, s.image_width);
    binio::write<std::int32_t>(os, s.image_height);
    for (float v : s.patch.data()) binio::write<float>(os, v);
    write_descriptor(os, s.descriptor);
    for (int j = 0; j < t; ++j) binio::write<double>(os, s.y(j));
    for (int j = 0; j < t; ++j) binio::write<std::uint8_t>(os, s.mask(j) > 0.0 ? 1 : 0);
    binio::write<std::int64_t>(os, s.point_id);
    binio::write<std::int32_t>(os, s.category);
  }
  if (!os) throw Error("failed writing " + path.string());
}

TrainingSet load_training_set(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("cannot open " + path.string());
  binio::expect_magic(is, kTrainingMagic, kTrainingVersion);
  TrainingSet set;
  set.grid = read_grid(is);
  const auto mode = binio::read<std::uint8_t>(is);
  if (mode > 1) throw CorruptFile("bad match mode");
  set.mode = static_cast<MatchMode>(mode);
  set.params.ratio = binio::read<double>(is);
  set.params.epipolar_tau_px = binio::read<double>(is);
  set.params.reprojection_tau_px = binio::read<double>(is);
  set.params.static_tau_px = binio::read<double>(is);
  set.params.min_baseline_m = binio::read<double>(is);
  const auto n_layouts = binio::read<std::uint32_t>(is);
  if (n_layouts > kMaxCount) throw CorruptFile("implausible layout count");
  const int t = set.grid.size();
  for (std::uint32_t i = 0; i < n_layouts; ++i) {
    CorpusLayout l;
    l.cycles = static_cast<int>(binio::read<std::uint32_t>(is));
    l.timestamps = static_cast<int>(binio::read<std::uint32_t>(is));
    if (l.timestamps != t || l.cycles > 100000) throw CorruptFile("layout does not fit the grid");
    l.counts.resize(l.cycles, l.timestamps);
    for (int k = 0; k < l.cycles; ++k)
      for (int j = 0; j < l.timestamps; ++j) l.counts(k, j) = static_cast<int>(binio::read<std::uint32_t>(is));
    set.layouts.push_back(std::move(l));
  }
  const auto n = binio::read<std::uint32_t>(is);
  if (n > kMaxCount) throw CorruptFile("implausible sample count");
  set.samples.resize(n);
  for (auto& s : set.samples) {
    s.image_id = binio::read_string(is, 4096);
    s.point_index = binio::read<std::uint32_t>(is);
    s.keypoint.x = binio::read<double>(is);
    s.keypoint.y = binio::read<double>(is);
    s.keypoint.score = binio::read<double>(is);
    s.wallclock.minute_of_day = binio::read<std::int32_t>(is);
    s.wallclock.day_of_year = binio::read<std::int32_t>(is);
    s.wallclock.cycle_id = binio::read<std::int32_t>(is);
    if (!s.wallclock.valid()) throw CorruptFile("invalid wallclock in sample");
    s.timestamp_index = binio::read<std::int32_t>(is);
    s.image_width = binio::read<std::int32_t>(is);
    s.image_height = binio::read<std::int32_t>(is);
    for (float& v : s.patch.data()) v = binio::read<float>(is);
    s.descriptor = read_descriptor(is);
    s.y.resize(t);
    s.mask.resize(t);
    for (int j = 0; j < t; ++j) s.y(j) = binio::read<double>(is);
    for (int j = 0; j < t; ++j) s.mask(j) = binio::read<std::uint8_t>(is) ? 1.0 : 0.0;
    if (!is_valid_repeatability(s.y)) throw CorruptFile("sample score outside [0, 1]");
    s.point_id = binio::read<std::int64_t>(is);
    s.category = binio::read<std::int32_t>(is);
  }
  expect_end(is);
  return set;
}

void save_summary_map(std::span<const MapPoint> map, const SummaryMap& summary, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot open " + path.string() + " for writing");
  binio::write_magic(os, kSummaryMagic, kSummaryVersion);
  binio::write_string(os, to_string(summary.method));
  binio::write<std::int32_t>(os, summary.t_index);
  binio::write<double>(os, summary.prune_ratio);
  binio::write<std::int32_t>(os, summary.k);
  binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(map.size()));
  binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(summary.retained.size()));
  for (std::size_t idx : summary.retained) {
    const MapPoint& p = map[idx];
    binio::write<std::uint64_t>(os, p.id);
    for (int i = 0; i < 3; ++i) binio::write<double>(os, p.position(i));
    write_descriptor(os, p.mean_descriptor);
    binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(p.mean_repeatability.size()));
    for (Eigen::Index j = 0; j < p.mean_repeatability.size(); ++j) binio::write<double>(os, p.mean_repeatability(j));
    binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(p.observing_images.size()));
    for (std::size_t img : p.observing_images) binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(img));
  }
  if (!os) throw Error("failed writing " + path.string());
}

LoadedSummaryMap load_summary_map(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidArgument("cannot open " + path.string());
  binio::expect_magic(is, kSummaryMagic, kSummaryVersion);
  LoadedSummaryMap out;
  try {
    out.summary.method = summary_method_from_string(binio::read_string(is, 64));
  } catch (const InvalidArgument& e) {
    throw CorruptFile(e.what());
  }
  out.summary.t_index = binio::read<std::int32_t>(is);
  out.summary.prune_ratio = binio::read<double>(is);
  out.summary.k = binio::read<std::int32_t>(is);
  binio::read<std::uint32_t>(is);  // full map size
  const auto n = binio::read<std::uint32_t>(is);
  if (n > kMaxCount) throw CorruptFile("implausible point count");
  for (std::uint32_t i = 0; i < n; ++i) {
    MapPoint p;
    p.id = binio::read<std::uint64_t>(is);
    for (int c = 0; c < 3; ++c) p.position(c) = binio::read<double>(is);
    p.mean_descriptor = read_descriptor(is);
    const auto t = binio::read<std::uint32_t>(is);
    if (t > 1'000'000) throw CorruptFile("implausible vector length");
    p.mean_repeatability.resize(t);
    for (std::uint32_t j = 0; j < t; ++j) p.mean_repeatability(j) = binio::read<double>(is);
    const auto m = binio::read<std::uint32_t>(is);
    if (m > kMaxCount) throw CorruptFile("implausible visibility count");
    for (std::uint32_t j = 0; j < m; ++j) p.observing_images.push_back(binio::read<std::uint32_t>(is));
    out.points.push_back(std::move(p));
    out.summary.retained.push_back(i);
  }
  expect_end(is);
  return out;
}

}  // namespace trep
