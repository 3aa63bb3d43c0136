#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace trep {

enum class CycleKind { Day, Year, YearHourly };

std::string to_string(CycleKind kind);
CycleKind cycle_kind_from_string(const std::string& name);

/// Capture time of an image. `cycle_id` is the 1-based cycle (day or year)
/// the image belongs to.
struct Wallclock {
  int minute_of_day = 0;  // [0, 1439]
  int day_of_year = 1;    // [1, 365]
  int cycle_id = 1;       // >= 1

  bool valid() const;
  int hour() const { return minute_of_day / 60; }
  int minute() const { return minute_of_day % 60; }
  /// Calendar month [1, 12] of a 365-day year.
  int month() const;
  /// Day within the month [1, 31].
  int day_of_month() const;

  static Wallclock from_date(int month, int day, int hour = 0, int minute = 0, int cycle_id = 1);

  friend bool operator==(const Wallclock&, const Wallclock&) = default;
};

/// How the capture time enters the predictor.
enum class TimeEncoding { TimeOfDay, DayOfYear, Full };

int encoding_dim(TimeEncoding mode);
std::string to_string(TimeEncoding mode);
TimeEncoding time_encoding_from_string(const std::string& name);

/// Discretization of one cycle into T timestamps. Slots are stored as
/// minute offsets from the start of the cycle.
class TimeGrid {
 public:
  /// Regular grid: slots start, start + dt, ..., start + (T - 1) dt.
  static TimeGrid regular(CycleKind kind, int T, std::int64_t delta_t_minutes,
                          std::int64_t start_minutes = 0);
  /// Irregular grid from explicit anchors; `T` must equal `slots.size()`.
  static TimeGrid explicit_slots(CycleKind kind, int T, std::vector<std::int64_t> slots);

  int size() const { return static_cast<int>(slots_.size()); }
  CycleKind cycle_kind() const { return kind_; }
  bool irregular() const { return irregular_; }
  /// Spacing for regular grids; 0 for irregular ones.
  std::int64_t delta_t_minutes() const { return delta_t_; }
  const std::vector<std::int64_t>& slots() const { return slots_; }

  /// Length of one cycle in minutes.
  std::int64_t cycle_minutes() const;
  /// Position of a wallclock within its cycle, in minutes. Year grids work
  /// at day granularity and ignore the minute of day.
  std::int64_t position(const Wallclock& w) const;
  /// 1-based index of the nearest slot, measured around the cycle; ties go
  /// to the smaller index.
  int index(const Wallclock& w) const;
  /// Wallclock that sits exactly on slot `j` (1-based) of cycle `cycle_id`.
  Wallclock slot_wallclock(int j, int cycle_id = 1) const;
  /// The suggested time encoding for this kind of cycle.
  TimeEncoding natural_encoding() const;

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  TimeGrid(CycleKind kind, std::vector<std::int64_t> slots, std::int64_t dt, bool irregular);

  CycleKind kind_;
  std::vector<std::int64_t> slots_;
  std::int64_t delta_t_ = 0;
  bool irregular_ = false;
};

/// Normalized time features in [0,1]^d: hour/23, minute/59, day/31, month/12.
Eigen::VectorXd encode_time(const Wallclock& w, TimeEncoding mode);

/// True when every entry lies in [0, 1].
bool is_valid_repeatability(const Eigen::VectorXd& scores);

/// Binary form used inside model, training-set and map files.
void write_grid(std::ostream& os, const TimeGrid& grid);
/// Throws CorruptFile on an invalid descriptor.
TimeGrid read_grid(std::istream& is);

}  // namespace trep
