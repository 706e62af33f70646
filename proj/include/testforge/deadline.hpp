#pragma once

#include <chrono>
#include <cstdint>

#include "testforge/error.hpp"

namespace testforge {

/// Cooperative deadline for long-running scans. `check()` is cheap enough to
/// call per character; it reads the clock once every 4096 calls.
class Deadline {
public:
  using clock = std::chrono::steady_clock;

  static Deadline after(std::chrono::duration<double> budget) {
    return Deadline(clock::now() + std::chrono::duration_cast<clock::duration>(budget));
  }
  static Deadline never() { return Deadline(clock::time_point::max()); }

  void check() const {
    if ((++ticks_ & 0xFFF) == 0) check_now();
  }
  void check_now() const {
    if (at_ != clock::time_point::max() && clock::now() >= at_)
      throw ExtractionTimeout("extraction exceeded its deadline");
  }
  bool expired() const { return at_ != clock::time_point::max() && clock::now() >= at_; }

private:
  explicit Deadline(clock::time_point at) : at_(at) {}
  clock::time_point at_;
  mutable std::uint64_t ticks_ = 0;
};

}  // namespace testforge
