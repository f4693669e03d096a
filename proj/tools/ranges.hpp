#pragma once

#include <string>
#include <vector>

namespace glassesim::cli {

/// Parses "start:stop:step", "start:stop" (step 1), plain numbers, and comma
/// lists of any of these. Ranges include `stop` when it lies on the grid.
std::vector<double> parse_values(const std::string& text);

/// "x,y,w,h" in pixels.
std::vector<int> parse_ints(const std::string& text, std::size_t expected);

}  // namespace glassesim::cli
