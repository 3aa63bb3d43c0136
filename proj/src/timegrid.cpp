#include "trep/timegrid.hpp"

#include <array>
#include <cstdlib>
#include <istream>
#include <ostream>

#include "trep/binio.hpp"
#include "trep/errors.hpp"

namespace trep {
namespace {

constexpr std::int64_t kMinutesPerDay = 1440;
constexpr std::int64_t kDaysPerYear = 365;
constexpr std::array<int, 12> kDaysInMonth = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};

}  // namespace

std::string to_string(CycleKind kind) {
  switch (kind) {
    case CycleKind::Day: return "DAY";
    case CycleKind::Year: return "YEAR";
    case CycleKind::YearHourly: return "YEAR_HOURLY";
  }
  return "DAY";
}

CycleKind cycle_kind_from_string(const std::string& name) {
  if (name == "DAY") return CycleKind::Day;
  if (name == "YEAR") return CycleKind::Year;
  if (name == "YEAR_HOURLY") return CycleKind::YearHourly;
  throw InvalidArgument("unknown cycle kind: " + name);
}

bool Wallclock::valid() const {
  return minute_of_day >= 0 && minute_of_day < 1440 && day_of_year >= 1 && day_of_year <= 365 &&
         cycle_id >= 1;
}

int Wallclock::month() const {
  int remaining = day_of_year;
  for (int m = 0; m < 12; ++m) {
    if (remaining <= kDaysInMonth[m]) return m + 1;
    remaining -= kDaysInMonth[m];
  }
  return 12;
}

int Wallclock::day_of_month() const {
  int remaining = day_of_year;
  for (int m = 0; m < 12; ++m) {
    if (remaining <= kDaysInMonth[m]) return remaining;
    remaining -= kDaysInMonth[m];
  }
  return 31;
}

Wallclock Wallclock::from_date(int month, int day, int hour, int minute, int cycle_id) {
  if (month < 1 || month > 12 || day < 1 || day > kDaysInMonth[month - 1] || hour < 0 ||
      hour > 23 || minute < 0 || minute > 59)
    throw InvalidArgument("invalid calendar date");
  int doy = day;
  for (int m = 1; m < month; ++m) doy += kDaysInMonth[m - 1];
  return Wallclock{hour * 60 + minute, doy, cycle_id};
}

int encoding_dim(TimeEncoding mode) { return mode == TimeEncoding::Full ? 4 : 2; }

std::string to_string(TimeEncoding mode) {
  switch (mode) {
    case TimeEncoding::TimeOfDay: return "TIME_OF_DAY";
    case TimeEncoding::DayOfYear: return "DAY_OF_YEAR";
    case TimeEncoding::Full: return "FULL";
  }
  return "TIME_OF_DAY";
}

TimeEncoding time_encoding_from_string(const std::string& name) {
  if (name == "TIME_OF_DAY") return TimeEncoding::TimeOfDay;
  if (name == "DAY_OF_YEAR") return TimeEncoding::DayOfYear;
  if (name == "FULL") return TimeEncoding::Full;
  throw InvalidArgument("unknown time encoding: " + name);
}

TimeGrid::TimeGrid(CycleKind kind, std::vector<std::int64_t> slots, std::int64_t dt,
                   bool irregular)
    : kind_(kind), slots_(std::move(slots)), delta_t_(dt), irregular_(irregular) {
  if (slots_.size() < 2) throw InvalidArgument("a time grid needs at least 2 timestamps");
  const std::int64_t period = cycle_minutes();
  for (std::size_t j = 0; j < slots_.size(); ++j) {
    if (slots_[j] < 0 || slots_[j] >= period)
      throw InvalidArgument("timestamp outside the cycle");
    if (j > 0 && slots_[j] <= slots_[j - 1])
      throw InvalidArgument("timestamps must be strictly increasing");
    if (kind_ == CycleKind::Year && slots_[j] % kMinutesPerDay != 0)
      throw InvalidArgument("YEAR grid timestamps must fall on whole days");
  }
}

TimeGrid TimeGrid::regular(CycleKind kind, int T, std::int64_t delta_t_minutes,
                           std::int64_t start_minutes) {
  if (T < 2) throw InvalidArgument("T must be >= 2");
  if (delta_t_minutes <= 0) throw InvalidArgument("delta_t must be positive");
  std::vector<std::int64_t> slots(static_cast<std::size_t>(T));
  for (int j = 0; j < T; ++j) slots[static_cast<std::size_t>(j)] = start_minutes + j * delta_t_minutes;
  return TimeGrid(kind, std::move(slots), delta_t_minutes, false);
}

TimeGrid TimeGrid::explicit_slots(CycleKind kind, int T, std::vector<std::int64_t> slots) {
  if (T < 2) throw InvalidArgument("T must be >= 2");
  if (static_cast<int>(slots.size()) != T)
    throw InvalidArgument("T does not match the number of explicit timestamps");
  return TimeGrid(kind, std::move(slots), 0, true);
}

std::int64_t TimeGrid::cycle_minutes() const {
  return kind_ == CycleKind::Day ? kMinutesPerDay : kDaysPerYear * kMinutesPerDay;
}

std::int64_t TimeGrid::position(const Wallclock& w) const {
  switch (kind_) {
    case CycleKind::Day: return w.minute_of_day;
    case CycleKind::Year: return (w.day_of_year - 1) * kMinutesPerDay;
    case CycleKind::YearHourly: return (w.day_of_year - 1) * kMinutesPerDay + w.minute_of_day;
  }
  return 0;
}

int TimeGrid::index(const Wallclock& w) const {
  const std::int64_t period = cycle_minutes();
  const std::int64_t pos = position(w);
  int best = 0;
  std::int64_t best_dist = period;
  for (std::size_t j = 0; j < slots_.size(); ++j) {
    const std::int64_t d = std::llabs(pos - slots_[j]);
    const std::int64_t dist = std::min(d, period - d);
    if (dist < best_dist) {
      best_dist = dist;
      best = static_cast<int>(j);
    }
  }
  return best + 1;
}

Wallclock TimeGrid::slot_wallclock(int j, int cycle_id) const {
  if (j < 1 || j > size()) throw InvalidArgument("timestamp index out of range");
  const std::int64_t pos = slots_[static_cast<std::size_t>(j - 1)];
  Wallclock w;
  w.cycle_id = cycle_id;
  if (kind_ == CycleKind::Day) {
    w.minute_of_day = static_cast<int>(pos);
    w.day_of_year = 1;
  } else {
    w.day_of_year = static_cast<int>(pos / kMinutesPerDay) + 1;
    w.minute_of_day = static_cast<int>(pos % kMinutesPerDay);
  }
  return w;
}

TimeEncoding TimeGrid::natural_encoding() const {
  switch (kind_) {
    case CycleKind::Day: return TimeEncoding::TimeOfDay;
    case CycleKind::Year: return TimeEncoding::DayOfYear;
    case CycleKind::YearHourly: return TimeEncoding::Full;
  }
  return TimeEncoding::TimeOfDay;
}

Eigen::VectorXd encode_time(const Wallclock& w, TimeEncoding mode) {
  const double hour = w.hour() / 23.0;
  const double minute = w.minute() / 59.0;
  const double day = w.day_of_month() / 31.0;
  const double month = w.month() / 12.0;
  switch (mode) {
    case TimeEncoding::TimeOfDay: return Eigen::Vector2d(hour, minute);
    case TimeEncoding::DayOfYear: return Eigen::Vector2d(day, month);
    case TimeEncoding::Full: return Eigen::Vector4d(hour, minute, day, month);
  }
  return {};
}

bool is_valid_repeatability(const Eigen::VectorXd& scores) {
  return (scores.array() >= 0.0).all() && (scores.array() <= 1.0).all();
}

void write_grid(std::ostream& os, const TimeGrid& grid) {
  binio::write<std::uint8_t>(os, static_cast<std::uint8_t>(grid.cycle_kind()));
  binio::write<std::uint32_t>(os, static_cast<std::uint32_t>(grid.size()));
  binio::write<std::uint8_t>(os, grid.irregular() ? 1 : 0);
  binio::write<std::int64_t>(os, grid.delta_t_minutes());
  for (std::int64_t s : grid.slots()) binio::write<std::int64_t>(os, s);
}

TimeGrid read_grid(std::istream& is) {
  const auto kind = binio::read<std::uint8_t>(is);
  const auto t = binio::read<std::uint32_t>(is);
  const auto irregular = binio::read<std::uint8_t>(is);
  const auto dt = binio::read<std::int64_t>(is);
  if (kind > 2 || t < 2 || t > 1'000'000 || irregular > 1) throw CorruptFile("bad time grid descriptor");
  std::vector<std::int64_t> slots(t);
  for (auto& s : slots) s = binio::read<std::int64_t>(is);
  try {
    if (irregular) return TimeGrid::explicit_slots(static_cast<CycleKind>(kind), static_cast<int>(t), slots);
    TimeGrid g = TimeGrid::regular(static_cast<CycleKind>(kind), static_cast<int>(t), dt, slots.front());
    if (g.slots() != slots) throw CorruptFile("regular grid slots are inconsistent");
    return g;
  } catch (const InvalidArgument& e) {
    throw CorruptFile(std::string("invalid time grid: ") + e.what());
  }
}


}  // namespace trep
