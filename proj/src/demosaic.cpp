#include "glassesim/demosaic.hpp"

#include <algorithm>

#include "glassesim/parallel.hpp"

namespace glassesim {

namespace {

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

// Kernels scaled by 8, indexed [dy + 2][dx + 2].
constexpr float kGreenAtRB[5][5] = {{0, 0, -1, 0, 0},
                                    {0, 0, 2, 0, 0},
                                    {-1, 2, 4, 2, -1},
                                    {0, 0, 2, 0, 0},
                                    {0, 0, -1, 0, 0}};
// Colour whose samples sit left/right of a green site.
constexpr float kRowNeighbour[5][5] = {{0, 0, 0.5f, 0, 0},
                                       {0, -1, 0, -1, 0},
                                       {-1, 4, 5, 4, -1},
                                       {0, -1, 0, -1, 0},
                                       {0, 0, 0.5f, 0, 0}};
// Colour whose samples sit above/below a green site.
constexpr float kColNeighbour[5][5] = {{0, 0, -1, 0, 0},
                                       {0, -1, 4, -1, 0},
                                       {0.5f, 0, 5, 0, 0.5f},
                                       {0, -1, 4, -1, 0},
                                       {0, 0, -1, 0, 0}};
// Red at blue sites and blue at red sites.
constexpr float kDiagonal[5][5] = {{0, 0, -1.5f, 0, 0},
                                   {0, 2, 0, 2, 0},
                                   {-1.5f, 0, 6, 0, -1.5f},
                                   {0, 2, 0, 2, 0},
                                   {0, 0, -1.5f, 0, 0}};

}  // namespace

LinearImage demosaic(const RawImage& raw) {
  raw.validate();
  const int w = raw.width(), h = raw.height();
  LinearImage out(w, h, 3);
  parallel_for(0, h, [&](int y) {
    int ys[5];
    for (int k = 0; k < 5; ++k) ys[k] = reflect101(y + k - 2, h);
    for (int x = 0; x < w; ++x) {
      float p[5][5];
      for (int j = 0; j < 5; ++j) {
        const float* row = raw.data.row(ys[j]);
        for (int i = 0; i < 5; ++i) p[j][i] = row[reflect101(x + i - 2, w)];
      }
      auto apply = [&](const float (&k)[5][5]) {
        float s = 0.0f;
        for (int j = 0; j < 5; ++j)
          for (int i = 0; i < 5; ++i) s += k[j][i] * p[j][i];
        return std::clamp(s * 0.125f, 0.0f, 1.0f);
      };
      const int c = bayer_channel(raw.pattern, x, y);
      float rgb[3];
      rgb[c] = p[2][2];
      if (c == 1) {
        const int horizontal = bayer_channel(raw.pattern, x + 1, y);
        rgb[horizontal] = apply(kRowNeighbour);
        rgb[2 - horizontal] = apply(kColNeighbour);
      } else {
        rgb[1] = apply(kGreenAtRB);
        rgb[2 - c] = apply(kDiagonal);
      }
      for (int k = 0; k < 3; ++k) out(x, y, k) = rgb[k];
    }
  });
  return out;
}

LinearImage demosaic_bilinear(const RawImage& raw) {
  raw.validate();
  const int w = raw.width(), h = raw.height();
  LinearImage out(w, h, 3);
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      float sum[3] = {0, 0, 0};
      int count[3] = {0, 0, 0};
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = reflect101(x + dx, w), yy = reflect101(y + dy, h);
          // Mirrored sites keep their colour, so classify by the original offset.
          const int c = bayer_channel(raw.pattern, x + dx + 2, y + dy + 2);
          sum[c] += raw.data(xx, yy);
          ++count[c];
        }
      }
      const int own = bayer_channel(raw.pattern, x, y);
      for (int k = 0; k < 3; ++k) {
        out(x, y, k) = k == own ? raw.data(x, y) : sum[k] / static_cast<float>(count[k]);
      }
    }
  });
  return out;
}

}  // namespace glassesim
