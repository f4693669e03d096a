#include "glassesim/motion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "glassesim/error.hpp"

namespace glassesim {

double GyroSample::speed() const {
  return std::sqrt(omega[0] * omega[0] + omega[1] * omega[1] + omega[2] * omega[2]);
}

GyroTrace::GyroTrace(std::vector<GyroSample> samples, std::string source_id)
    : samples_(std::move(samples)), source_id_(std::move(source_id)) {
  if (samples_.size() < 2) throw DomainError("gyro trace needs at least 2 samples");
  for (std::size_t i = 1; i < samples_.size(); ++i) {
    const std::int64_t dt = samples_[i].t_ns - samples_[i - 1].t_ns;
    if (dt <= 0) {
      throw DomainError("gyro timestamps must be strictly increasing (sample " +
                        std::to_string(i) + ")");
    }
    if (dt > kMaxSpacingNs) {
      throw DomainError("gyro sample spacing exceeds 20 ms (sample " + std::to_string(i) + ")");
    }
  }
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    out.push_back(line.substr(pos, comma == std::string_view::npos ? comma : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no) {
  field = trim(field);
  T value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw ParseError("invalid number '" + std::string(field) + "'", line_no);
  }
  return value;
}

}  // namespace

GyroTrace parse_gyro_csv(const std::string& text, const std::string& source_id) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::vector<GyroSample> samples;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    if (!header_seen) {
      header_seen = true;
      if (view != "t_ns,wx_rad_s,wy_rad_s,wz_rad_s") {
        throw ParseError("expected header t_ns,wx_rad_s,wy_rad_s,wz_rad_s", line_no);
      }
      continue;
    }
    const auto fields = split_commas(view);
    if (fields.size() != 4) throw ParseError("expected 4 columns", line_no);
    GyroSample s;
    s.t_ns = parse_number<std::int64_t>(fields[0], line_no);
    for (int k = 0; k < 3; ++k) {
      s.omega[k] = parse_number<double>(fields[k + 1], line_no);
      if (!std::isfinite(s.omega[k])) throw ParseError("non-finite angular velocity", line_no);
    }
    if (!samples.empty() && s.t_ns <= samples.back().t_ns) {
      throw ParseError("timestamp not strictly increasing", line_no);
    }
    if (!samples.empty() && s.t_ns - samples.back().t_ns > GyroTrace::kMaxSpacingNs) {
      throw ParseError("sample spacing exceeds 20 ms", line_no);
    }
    samples.push_back(s);
  }
  if (!header_seen) throw ParseError("empty gyro file", 0);
  if (samples.size() < 2) throw ParseError("gyro trace needs at least 2 samples", line_no);
  return GyroTrace(std::move(samples), source_id);
}

GyroTrace load_gyro_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_gyro_csv(buffer.str(), path.stem().string());
}

double max_exposure(double delta_theta, double speed) {
  if (!(delta_theta >= 0.0) || !(speed >= 0.0)) {
    throw DomainError("max_exposure: arguments must be non-negative");
  }
  if (speed == 0.0) return std::numeric_limits<double>::infinity();
  return delta_theta / speed;
}

namespace {

// Written as a comparison against max_exposure so that scaling delta_theta
// and exposure by a power of two gives bit-identical decisions.
bool blur_free(double speed, double delta_theta, double exposure) {
  return exposure <= max_exposure(delta_theta, speed);
}

std::size_t count_blur_free(const GyroTrace& trace, double delta_theta, double exposure) {
  std::size_t good = 0;
  for (const auto& s : trace.samples()) good += blur_free(s.speed(), delta_theta, exposure);
  return good;
}

}  // namespace

double blur_free_fraction(const GyroTrace& trace, double delta_theta, double exposure) {
  if (!(exposure >= 0.0)) throw DomainError("exposure must be >= 0");
  if (trace.size() == 0) return 1.0;
  return static_cast<double>(count_blur_free(trace, delta_theta, exposure)) / static_cast<double>(trace.size());
}

double blur_free_fraction(const std::vector<GyroTrace>& traces, double delta_theta,
                          double exposure) {
  if (!(exposure >= 0.0)) throw DomainError("exposure must be >= 0");
  std::size_t total = 0;
  std::size_t good = 0;
  for (const auto& trace : traces) {
    total += trace.size();
    good += count_blur_free(trace, delta_theta, exposure);
  }
  if (total == 0) return 1.0;
  return static_cast<double>(good) / static_cast<double>(total);
}

std::vector<StillSegment> head_still_segments(const GyroTrace& trace, double threshold,
                                              double min_duration) {
  if (!(threshold > 0.0)) throw DomainError("still threshold must be > 0");
  std::vector<StillSegment> out;
  const auto& s = trace.samples();
  std::size_t i = 0;
  while (i < s.size()) {
    if (!(s[i].speed() < threshold)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    double peak = 0.0;
    while (j < s.size() && s[j].speed() < threshold) {
      peak = std::max(peak, s[j].speed());
      ++j;
    }
    const std::int64_t start = s[i].t_ns;
    const std::int64_t end = s[j - 1].t_ns;
    if (end > start && static_cast<double>(end - start) * 1e-9 >= min_duration) {
      out.push_back({start, end, peak});
    }
    i = j;
  }
  return out;
}

std::vector<YawPitch> motion_trace(const GyroTrace& trace, std::int64_t start_ns,
                                   double duration) {
  if (!(duration >= 0.0)) throw DomainError("motion_trace: duration must be >= 0");
  const auto end_ns = start_ns + static_cast<std::int64_t>(std::llround(duration * 1e9));
  if (trace.size() < 2 || start_ns < trace.start_ns() || end_ns > trace.end_ns()) {
    throw DomainError("motion_trace: window outside the trace");
  }
  const auto& s = trace.samples();

  auto rate_at = [&](std::int64_t t) {
    auto it = std::lower_bound(s.begin(), s.end(), t,
                               [](const GyroSample& a, std::int64_t v) { return a.t_ns < v; });
    if (it->t_ns == t) return YawPitch{it->omega[1], it->omega[0]};
    const auto& b = *it;
    const auto& a = *(it - 1);
    const double w = static_cast<double>(t - a.t_ns) / static_cast<double>(b.t_ns - a.t_ns);
    return YawPitch{(1 - w) * a.omega[1] + w * b.omega[1], (1 - w) * a.omega[0] + w * b.omega[0]};
  };

  std::vector<std::int64_t> knots{start_ns};
  for (const auto& sample : s) {
    if (sample.t_ns > start_ns && sample.t_ns < end_ns) knots.push_back(sample.t_ns);
  }
  if (end_ns > start_ns) knots.push_back(end_ns);

  std::vector<YawPitch> out{YawPitch{}};
  YawPitch acc;
  YawPitch prev_rate = rate_at(knots.front());
  for (std::size_t k = 1; k < knots.size(); ++k) {
    const YawPitch rate = rate_at(knots[k]);
    const double dt = static_cast<double>(knots[k] - knots[k - 1]) * 1e-9;
    acc.yaw += 0.5 * (prev_rate.yaw + rate.yaw) * dt;
    acc.pitch += 0.5 * (prev_rate.pitch + rate.pitch) * dt;
    prev_rate = rate;
    if (acc.yaw != out.back().yaw || acc.pitch != out.back().pitch) out.push_back(acc);
  }
  return out;
}

}  // namespace glassesim
