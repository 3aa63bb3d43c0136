#include <doctest.h>

#include <cstdlib>
#include <limits>
#include <sstream>

#include "trep/errors.hpp"
#include "trep/synthworld.hpp"
#include "trep/timegrid.hpp"

using namespace trep;

namespace {

Wallclock at(int hour, int minute) { return {hour * 60 + minute, 1, 1}; }

// Nearest slot by exhaustive scan, earliest slot on ties.
int brute_index(const TimeGrid& g, const Wallclock& w) {
  const std::int64_t pos = g.position(w), len = g.cycle_minutes();
  int best = 0;
  std::int64_t best_d = std::numeric_limits<std::int64_t>::max();
  for (int j = 0; j < g.size(); ++j) {
    const std::int64_t raw = std::llabs(pos - g.slots()[static_cast<std::size_t>(j)]);
    const std::int64_t d = std::min(raw, len - raw);
    if (d < best_d) {
      best_d = d;
      best = j + 1;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("regular day grid has hourly slots") {
  const TimeGrid g = TimeGrid::regular(CycleKind::Day, 24, 60);
  REQUIRE(g.size() == 24);
  CHECK_FALSE(g.irregular());
  for (int j = 0; j < 24; ++j) CHECK(g.slots()[static_cast<std::size_t>(j)] == 60 * j);
}

TEST_CASE("webcam grid covers 8:00 to 18:00 in half hours") {
  const TimeGrid g = TimeGrid::regular(CycleKind::Day, 21, 30, 8 * 60);
  CHECK(g.slots().front() == 480);
  CHECK(g.slots().back() == 18 * 60);
  CHECK(g.delta_t_minutes() == 30);
}

TEST_CASE("cmu grid is irregular with twelve dates") {
  const TimeGrid g = WorldSpec::cmu_grid();
  CHECK(g.size() == 12);
  CHECK(g.irregular());
  CHECK(g.cycle_kind() == CycleKind::Year);
  CHECK(g.index(Wallclock::from_date(3, 4)) == 1);
  CHECK(g.index(Wallclock::from_date(12, 21)) == 12);
}

TEST_CASE("grid construction rejects bad input") {
  CHECK_THROWS_AS(TimeGrid::regular(CycleKind::Day, 1, 60), InvalidArgument);
  CHECK_THROWS_AS(TimeGrid::regular(CycleKind::Day, 4, 0), InvalidArgument);
  CHECK_THROWS_AS(TimeGrid::explicit_slots(CycleKind::Day, 3, {0, 60, 60}), InvalidArgument);
  CHECK_THROWS_AS(TimeGrid::explicit_slots(CycleKind::Day, 3, {0, 60}), InvalidArgument);
  CHECK_THROWS_AS(TimeGrid::explicit_slots(CycleKind::Day, 2, {120, 60}), InvalidArgument);
}

TEST_CASE("timestamp index picks the nearest slot") {
  const TimeGrid g = TimeGrid::regular(CycleKind::Day, 24, 60);
  CHECK(g.index(at(13, 0)) == 14);
  CHECK(g.index(at(13, 29)) == 14);
  CHECK(g.index(at(13, 31)) == 15);
  CHECK(g.index(at(13, 30)) == 14);
  CHECK(g.index(at(23, 45)) == 1);  // wraps around midnight
}

TEST_CASE("cmu grid tie goes to the earlier date") {
  const TimeGrid g = WorldSpec::cmu_grid();
  CHECK(g.index(Wallclock::from_date(9, 8)) == 4);
  CHECK(g.index(Wallclock::from_date(9, 9)) == 5);
}

TEST_CASE("timestamp index agrees with an exhaustive scan") {
  const TimeGrid day = TimeGrid::regular(CycleKind::Day, 21, 30, 480);
  for (int m = 0; m < 1440; ++m) CHECK(day.index({m, 1, 1}) == brute_index(day, {m, 1, 1}));
  const TimeGrid year = WorldSpec::cmu_grid();
  for (int d = 1; d <= 365; ++d) CHECK(year.index({0, d, 1}) == brute_index(year, {0, d, 1}));
}

TEST_CASE("timestamp index is idempotent on slots") {
  for (const TimeGrid& g : {TimeGrid::regular(CycleKind::Day, 24, 60), WorldSpec::cmu_grid(),
                            TimeGrid::regular(CycleKind::Day, 21, 30, 480)})
    for (int j = 1; j <= g.size(); ++j) CHECK(g.index(g.slot_wallclock(j)) == j);
}

TEST_CASE("time encoding normalizes to the unit cube") {
  const Eigen::VectorXd origin = encode_time(at(0, 0), TimeEncoding::TimeOfDay);
  REQUIRE(origin.size() == 2);
  CHECK(origin.isZero());

  const Eigen::VectorXd corner = encode_time(Wallclock::from_date(12, 31, 23, 59), TimeEncoding::Full);
  REQUIRE(corner.size() == 4);
  CHECK(corner.isOnes());

  const Eigen::VectorXd half = encode_time(at(11, 30), TimeEncoding::TimeOfDay);
  CHECK(half(0) == doctest::Approx(11.0 / 23.0));
  CHECK(half(1) == doctest::Approx(30.0 / 59.0));
  CHECK(half(0) == doctest::Approx(0.478).epsilon(1e-3));

  CHECK(encoding_dim(TimeEncoding::DayOfYear) == 2);
  CHECK(encoding_dim(TimeEncoding::Full) == 4);
}

TEST_CASE("time encoding stays in range and separates grid slots") {
  const TimeGrid g = WorldSpec::cmu_grid();
  for (int j = 1; j <= g.size(); ++j) {
    const Eigen::VectorXd e = encode_time(g.slot_wallclock(j), TimeEncoding::DayOfYear);
    CHECK(e.minCoeff() >= 0.0);
    CHECK(e.maxCoeff() <= 1.0);
    for (int i = 1; i < j; ++i) CHECK(e != encode_time(g.slot_wallclock(i), TimeEncoding::DayOfYear));
  }
  for (int m = 0; m < 1440; m += 7) {
    const Eigen::VectorXd e = encode_time({m, 200, 1}, TimeEncoding::Full);
    CHECK(e.minCoeff() >= 0.0);
    CHECK(e.maxCoeff() <= 1.0);
  }
}

TEST_CASE("repeatability validity check") {
  Eigen::VectorXd v(3);
  v << 0.0, 0.5, 1.0;
  CHECK(is_valid_repeatability(v));
  v(1) = 1.01;
  CHECK_FALSE(is_valid_repeatability(v));
}

TEST_CASE("grid binary round trip") {
  for (const TimeGrid& g : {TimeGrid::regular(CycleKind::Day, 21, 30, 480), WorldSpec::cmu_grid()}) {
    std::stringstream ss;
    write_grid(ss, g);
    CHECK(read_grid(ss) == g);
  }
  std::stringstream junk("xx");
  CHECK_THROWS_AS(read_grid(junk), CorruptFile);
}
