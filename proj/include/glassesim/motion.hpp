#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace glassesim {

struct GyroSample {
  std::int64_t t_ns = 0;
  std::array<double, 3> omega{};  // rad/s: x = pitch rate, y = yaw rate, z = roll rate

  double speed() const;
};

class GyroTrace {
 public:
  static constexpr std::int64_t kMaxSpacingNs = 20'000'000;

  GyroTrace() = default;
  /// Validates ordering, sample count and spacing.
  GyroTrace(std::vector<GyroSample> samples, std::string source_id = {});

  const std::vector<GyroSample>& samples() const noexcept { return samples_; }
  const std::string& source_id() const noexcept { return source_id_; }
  std::size_t size() const noexcept { return samples_.size(); }
  std::int64_t start_ns() const { return samples_.front().t_ns; }
  std::int64_t end_ns() const { return samples_.back().t_ns; }

 private:
  std::vector<GyroSample> samples_;
  std::string source_id_;
};

struct StillSegment {
  std::int64_t start_ns = 0;
  std::int64_t end_ns = 0;
  double peak_speed = 0.0;  // rad/s
};

/// CSV with header `t_ns,wx_rad_s,wy_rad_s,wz_rad_s`.
GyroTrace load_gyro_csv(const std::filesystem::path& path);
GyroTrace parse_gyro_csv(const std::string& text, const std::string& source_id = {});

/// delta_theta / speed; +infinity when the head is still.
double max_exposure(double delta_theta, double speed);

double blur_free_fraction(const GyroTrace& trace, double delta_theta, double exposure);

/// Pooled fraction over several recordings, every sample weighted equally.
double blur_free_fraction(const std::vector<GyroTrace>& traces, double delta_theta,
                          double exposure);

inline constexpr double kDefaultStillMinDuration = 0.1;  // s

std::vector<StillSegment> head_still_segments(const GyroTrace& trace, double threshold,
                                              double min_duration = kDefaultStillMinDuration);

struct YawPitch {
  double yaw = 0.0;    // rad
  double pitch = 0.0;  // rad
};

/// Accumulated (yaw, pitch) over [start, start + duration], starting at the origin.
/// Consecutive identical points are merged, so a still window yields a single point.
std::vector<YawPitch> motion_trace(const GyroTrace& trace, std::int64_t start_ns,
                                   double duration);

}  // namespace glassesim
