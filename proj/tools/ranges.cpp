#include "ranges.hpp"

#include <charconv>
#include <cmath>

#include "glassesim/error.hpp"

namespace glassesim::cli {

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double number(const std::string& s, const std::string& context) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc{} || ptr != end || !std::isfinite(v)) {
    throw DomainError("invalid number '" + s + "' in '" + context + "'");
  }
  return v;
}

}  // namespace

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  for (const std::string& item : split(text, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() == 1) {
      out.push_back(number(parts[0], text));
      continue;
    }
    if (parts.size() > 3) throw DomainError("range '" + item + "' must be start:stop[:step]");
    const double start = number(parts[0], text), stop = number(parts[1], text);
    const double step = parts.size() == 3 ? number(parts[2], text) : 1.0;
    if (!(step > 0.0)) throw DomainError("range step must be positive in '" + item + "'");
    if (stop < start) throw DomainError("range '" + item + "' has stop < start");
    // Index-based so values do not accumulate rounding error.
    const auto n = static_cast<long long>(std::floor((stop - start) / step + 1e-9));
    if (n > 10'000'000) throw DomainError("range '" + item + "' has too many values");
    for (long long i = 0; i <= n; ++i) out.push_back(start + static_cast<double>(i) * step);
  }
  return out;
}

std::vector<int> parse_ints(const std::string& text, std::size_t expected) {
  std::vector<int> out;
  for (const std::string& s : split(text, ',')) {
    int v = 0;
    const char* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc{} || ptr != end) {
      throw DomainError("invalid integer '" + s + "' in '" + text + "'");
    }
    out.push_back(v);
  }
  if (out.size() != expected) {
    throw DomainError("expected " + std::to_string(expected) + " integers in '" + text + "'");
  }
  return out;
}

}  // namespace glassesim::cli
