#pragma once

#include "glassesim/degrade.hpp"

namespace glassesim {

/// Malvar-He-Cutler gradient-corrected linear interpolation. Borders use
/// reflect-101 addressing, which keeps the colour of every mirrored site.
/// Output is clamped to [0, 1].
LinearImage demosaic(const RawImage& raw);

/// Plain bilinear interpolation of the missing colours (reference path).
LinearImage demosaic_bilinear(const RawImage& raw);

}  // namespace glassesim
