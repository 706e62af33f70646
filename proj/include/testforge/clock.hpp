#pragma once

#include <chrono>
#include <string>

namespace testforge {

using TimePoint = std::chrono::system_clock::time_point;

class Clock {
public:
  virtual ~Clock() = default;
  virtual TimePoint now() const = 0;
};

class SystemClock final : public Clock {
public:
  TimePoint now() const override { return std::chrono::system_clock::now(); }
};

/// Always reports the same instant. Used for reproducible runs.
class FixedClock final : public Clock {
public:
  explicit FixedClock(TimePoint t) : t_(t) {}
  TimePoint now() const override { return t_; }

private:
  TimePoint t_;
};

/// UTC "yyyyMMddHHmmss".
std::string format_utc_compact(TimePoint t);

/// Parses "YYYY-MM-DDTHH:MM:SSZ"; throws std::invalid_argument otherwise.
TimePoint parse_utc_iso8601(const std::string& s);

}  // namespace testforge
