#include "glassesim/degrade.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <Eigen/Dense>

#include "glassesim/error.hpp"
#include "glassesim/io.hpp"
#include "glassesim/parallel.hpp"
#include "glassesim/rng.hpp"

namespace glassesim {

int bayer_channel(BayerPattern pattern, int x, int y) {
  const int site = ((y & 1) << 1) | (x & 1);  // 0: (0,0) 1: (1,0) 2: (0,1) 3: (1,1)
  switch (pattern) {
    case BayerPattern::RGGB: return site == 0 ? 0 : (site == 3 ? 2 : 1);
    case BayerPattern::BGGR: return site == 0 ? 2 : (site == 3 ? 0 : 1);
    case BayerPattern::GRBG: return site == 1 ? 0 : (site == 2 ? 2 : 1);
    case BayerPattern::GBRG: return site == 2 ? 0 : (site == 1 ? 2 : 1);
  }
  return 1;
}

void RawImage::validate() const {
  if (data.channels() != 1) throw ConfigError("raw image must be single channel");
  if (data.width() % 2 || data.height() % 2) throw ConfigError("raw image dimensions must be even");
}

void PsfGrid::validate() const {
  if (rows < 1 || cols < 1) throw ConfigError("PSF grid must be at least 1x1");
  if (kernels.size() != static_cast<std::size_t>(rows) * cols) {
    throw ConfigError("PSF grid needs rows * cols kernels");
  }
  for (const auto& k : kernels) {
    if (k.width() % 2 == 0 || k.height() % 2 == 0 || k.channels() != 1) {
      throw ConfigError("PSF kernels must be single-channel with odd dimensions");
    }
    double sum = 0.0;
    for (float v : k.values()) {
      if (!(v >= 0.0f)) throw ConfigError("PSF kernels must be non-negative");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw ConfigError("PSF kernel does not sum to 1");
  }
}

PsfGrid PsfGrid::delta(int rows, int cols) {
  Image<float> k(1, 1, 1, 1.0f);
  return uniform(k, rows, cols);
}

PsfGrid PsfGrid::uniform(const Image<float>& kernel, int rows, int cols) {
  PsfGrid g;
  g.rows = rows;
  g.cols = cols;
  g.kernels.assign(static_cast<std::size_t>(rows) * cols, kernel);
  return g;
}

Image<float> gaussian_kernel(int size, double sigma) {
  if (size < 1 || size % 2 == 0) throw ConfigError("kernel size must be odd");
  Image<float> k(size, size);
  const int r = size / 2;
  double sum = 0.0;
  for (int y = -r; y <= r; ++y) {
    for (int x = -r; x <= r; ++x) {
      const double v = sigma > 0 ? std::exp(-(x * x + y * y) / (2.0 * sigma * sigma))
                                 : (x == 0 && y == 0 ? 1.0 : 0.0);
      k(x + r, y + r) = static_cast<float>(v);
      sum += v;
    }
  }
  for (float& v : k.values()) v = static_cast<float>(v / sum);
  return k;
}

namespace {

// Elongated core plus a faint halo; blur and astigmatism grow towards the field edge.
Image<float> field_kernel(int size, double fx, double fy, double sigma0) {
  const int r = size / 2;
  const double rho2 = fx * fx + fy * fy;
  const double sigma_r = sigma0 * (1.0 + 0.8 * rho2);
  const double sigma_t = sigma0 * (1.0 + 0.3 * rho2);
  const double theta = std::atan2(fy, fx);
  const double c = std::cos(theta), s = std::sin(theta);
  const double halo = 2.5 * sigma_r;
  Image<float> k(size, size);
  double sum = 0.0;
  for (int y = -r; y <= r; ++y) {
    for (int x = -r; x <= r; ++x) {
      const double u = c * x + s * y, v = -s * x + c * y;
      const double core = std::exp(-0.5 * (u * u / (sigma_r * sigma_r) + v * v / (sigma_t * sigma_t)));
      const double wide = std::exp(-0.5 * (x * x + y * y) / (halo * halo));
      const double val = 0.9 * core / (sigma_r * sigma_t) + 0.1 * wide / (halo * halo);
      k(x + r, y + r) = static_cast<float>(val);
      sum += val;
    }
  }
  for (float& v : k.values()) v = static_cast<float>(v / sum);
  return k;
}

PsfGrid mixture_grid(int rows, int cols, int size, double sigma0, double pitch) {
  PsfGrid g;
  g.rows = rows;
  g.cols = cols;
  g.kernel_pitch = pitch;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double fx = rows == 1 && cols == 1 ? 0.0 : (2.0 * (c + 0.5) / cols - 1.0);
      const double fy = rows == 1 && cols == 1 ? 0.0 : (2.0 * (r + 0.5) / rows - 1.0);
      g.kernels.push_back(field_kernel(size, fx, fy, sigma0));
    }
  }
  return g;
}

}  // namespace

PsfGrid psf_preset(const std::string& name) {
  if (name == "desk-7x7") return mixture_grid(7, 7, 7, 0.55, 5e-6);
  if (name == "head-6x8") return mixture_grid(6, 8, 7, 0.7, 5e-6);
  if (name == "delta" || name == "none") return PsfGrid::delta();
  throw ConfigError("unknown PSF preset '" + name + "'");
}

void save_psf_grid(const std::filesystem::path& dir, const PsfGrid& grid) {
  grid.validate();
  std::filesystem::create_directories(dir);
  nlohmann::json cells = nlohmann::json::array();
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const auto& k = grid.kernel(r, c);
      const std::string file = fmt::format("kernel_{:02d}_{:02d}.f32", r, c);
      std::ofstream out(dir / file, std::ios::binary);
      if (!out) throw IoError("cannot write " + (dir / file).string());
      for (float v : k.values()) {
        auto bits = std::bit_cast<std::uint32_t>(v);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        out.write(reinterpret_cast<const char*>(&bits), 4);
      }
      cells.push_back({{"row", r}, {"col", c}, {"file", file}, {"width", k.width()},
                       {"height", k.height()}});
    }
  }
  io::write_json(dir / "manifest.json", {{"rows", grid.rows},
                                         {"cols", grid.cols},
                                         {"kernel_pitch_m", grid.kernel_pitch},
                                         {"dtype", "float32-le"},
                                         {"cells", cells}});
}

PsfGrid load_psf_grid(const std::filesystem::path& dir) {
  const auto manifest = io::read_json(dir / "manifest.json");
  PsfGrid g;
  try {
    g.rows = manifest.at("rows").get<int>();
    g.cols = manifest.at("cols").get<int>();
    g.kernel_pitch = manifest.value("kernel_pitch_m", 0.0);
    g.kernels.resize(static_cast<std::size_t>(g.rows) * g.cols);
    for (const auto& cell : manifest.at("cells")) {
      const int r = cell.at("row").get<int>(), c = cell.at("col").get<int>();
      if (r < 0 || r >= g.rows || c < 0 || c >= g.cols) throw ConfigError("cell out of range");
      Image<float> k(cell.at("width").get<int>(), cell.at("height").get<int>());
      const auto path = dir / cell.at("file").get<std::string>();
      std::ifstream in(path, std::ios::binary);
      if (!in) throw IoError("cannot read " + path.string());
      for (float& v : k.values()) {
        std::uint32_t bits = 0;
        if (!in.read(reinterpret_cast<char*>(&bits), 4)) throw IoError("truncated " + path.string());
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        v = std::bit_cast<float>(bits);
      }
      g.kernels[static_cast<std::size_t>(r) * g.cols + c] = std::move(k);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("PSF manifest: ") + e.what());
  }
  g.validate();
  return g;
}

PsfGrid resolve_psf_grid(const std::string& name_or_dir) {
  if (std::filesystem::is_directory(name_or_dir)) return load_psf_grid(name_or_dir);
  return psf_preset(name_or_dir);
}

namespace {

struct AxisWeights {
  // For each cell: first/last pixel with nonzero weight and the weights in between.
  std::vector<int> begin, end;
  std::vector<std::vector<double>> w;
};

AxisWeights tent_weights(int extent, int cells) {
  AxisWeights a;
  const double pitch = static_cast<double>(extent) / cells;
  for (int j = 0; j < cells; ++j) {
    const double center = (j + 0.5) * pitch - 0.5;
    std::vector<double> w(static_cast<std::size_t>(extent), 0.0);
    int b = extent, e = -1;
    for (int x = 0; x < extent; ++x) {
      double v;
      if ((j == 0 && x <= center) || (j == cells - 1 && x >= center)) v = 1.0;
      else v = std::max(0.0, 1.0 - std::abs(x - center) / pitch);
      w[static_cast<std::size_t>(x)] = v;
      if (v > 0.0) {
        b = std::min(b, x);
        e = std::max(e, x);
      }
    }
    a.begin.push_back(b);
    a.end.push_back(e);
    a.w.push_back(std::move(w));
  }
  return a;
}

}  // namespace

LinearImage apply_psf_grid(const LinearImage& image, const PsfGrid& grid) {
  grid.validate();
  const int w = image.width(), h = image.height(), nc = image.channels();
  const double region_w = 2.0 * w / grid.cols, region_h = 2.0 * h / grid.rows;
  for (const auto& k : grid.kernels) {
    if (k.width() > region_w || k.height() > region_h || k.width() > w || k.height() > h) {
      throw ConfigError("PSF kernel larger than its blending region");
    }
  }
  const AxisWeights ax = tent_weights(w, grid.cols);
  const AxisWeights ay = tent_weights(h, grid.rows);
  LinearImage out(w, h, nc, 0.0f);
  parallel_for(0, h, [&](int y) {
    std::vector<double> acc(static_cast<std::size_t>(w) * nc);
    for (int r = 0; r < grid.rows; ++r) {
      const double wy = ay.w[static_cast<std::size_t>(r)][static_cast<std::size_t>(y)];
      if (wy == 0.0) continue;
      for (int c = 0; c < grid.cols; ++c) {
        const Image<float>& k = grid.kernel(r, c);
        const int kr_x = k.width() / 2, kr_y = k.height() / 2;
        const auto& wx_row = ax.w[static_cast<std::size_t>(c)];
        for (int x = ax.begin[static_cast<std::size_t>(c)]; x <= ax.end[static_cast<std::size_t>(c)];
             ++x) {
          const double wgt = wy * wx_row[static_cast<std::size_t>(x)];
          if (wgt == 0.0) continue;
          for (int ch = 0; ch < nc; ++ch) {
            double s = 0.0;
            for (int j = -kr_y; j <= kr_y; ++j) {
              const int yy = std::clamp(y - j, 0, h - 1);
              const float* src = image.row(yy);
              for (int i = -kr_x; i <= kr_x; ++i) {
                const int xx = std::clamp(x - i, 0, w - 1);
                s += k(i + kr_x, j + kr_y) * src[xx * nc + ch];
              }
            }
            acc[static_cast<std::size_t>(x) * nc + ch] += wgt * s;
          }
        }
      }
    }
    float* dst = out.row(y);
    for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<float>(acc[i]);
  });
  return out;
}

RawImage mosaic(const LinearImage& image, BayerPattern pattern, int bit_depth) {
  if (image.channels() != 3) throw ConfigError("mosaic needs a 3-channel image");
  if (image.width() % 2 || image.height() % 2) {
    throw ConfigError("mosaic needs even image dimensions");
  }
  RawImage raw{Image<float>(image.width(), image.height()), pattern, bit_depth};
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      raw.data(x, y) = image(x, y, bayer_channel(pattern, x, y));
    }
  }
  return raw;
}

void NoiseModel::validate() const {
  for (const auto& c : channels) {
    if (!(c.lambda_shot >= 0.0) || !(c.lambda_read >= 0.0)) {
      throw ConfigError("noise parameters must be >= 0");
    }
  }
}

NoiseModel noise_preset(const std::string& name) {
  NoiseModel m;
  if (name == "desk-g1") {
    m.channels = {ChannelNoise{2.4e-4, 1.5e-6}, {2.4e-4, 1.5e-6}, {2.4e-4, 1.5e-6}};
    m.gain = "1";
  } else if (name == "head-g1") {
    m.channels = {ChannelNoise{1.1e-4, 2.9e-6}, {1.2e-4, 2.9e-6}, {1.2e-4, 2.9e-6}};
    m.gain = "1";
  } else if (name == "head-g22") {
    m.channels = {ChannelNoise{2.1e-3, 1.7e-5}, {2.2e-3, 1.7e-5}, {2.1e-3, 1.7e-5}};
    m.gain = "22";
  } else if (name == "zero" || name == "none") {
    m.gain = "0";
  } else {
    throw ConfigError("unknown noise preset '" + name + "'");
  }
  return m;
}

void to_json(nlohmann::json& j, const NoiseModel& model) {
  static const char* names[3] = {"R", "G", "B"};
  nlohmann::json rows = nlohmann::json::array();
  for (int c = 0; c < 3; ++c) {
    rows.push_back({{"channel", names[c]},
                    {"lambda_shot", model.channels[c].lambda_shot},
                    {"lambda_read", model.channels[c].lambda_read},
                    {"gain", model.gain}});
  }
  j = rows;
}

void from_json(const nlohmann::json& j, NoiseModel& model) {
  try {
    const auto& rows = j.is_object() && j.contains("channels") ? j.at("channels") : j;
    if (!rows.is_array()) throw ConfigError("noise model must be a list of channel records");
    bool seen[3] = {false, false, false};
    for (const auto& row : rows) {
      const std::string ch = row.at("channel").get<std::string>();
      std::vector<int> targets;
      for (char k : ch) {
        if (k == 'R') targets.push_back(0);
        else if (k == 'G') targets.push_back(1);
        else if (k == 'B') targets.push_back(2);
        else if (k != '/') throw ConfigError("unknown channel '" + ch + "'");
      }
      for (int t : targets) {
        model.channels[t] = {row.at("lambda_shot").get<double>(),
                             row.at("lambda_read").get<double>()};
        seen[t] = true;
      }
      if (row.contains("gain")) {
        model.gain = row["gain"].is_string() ? row["gain"].get<std::string>()
                                             : row["gain"].dump();
      }
    }
    if (!(seen[0] && seen[1] && seen[2])) throw ConfigError("noise model must cover R, G and B");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("noise model: ") + e.what());
  }
  model.validate();
}

namespace {

constexpr std::uint64_t kNoiseStream = 0x4e4f495345ULL;
constexpr std::uint64_t kTransferStream = 0x5452414e53ULL;

template <typename Variance>
RawImage perturb(const RawImage& raw, std::uint64_t seed, std::uint64_t stream,
                 std::uint64_t frame, Variance&& variance) {
  RawImage out = raw;
  const CounterRng rng(seed, stream, frame);
  const int w = raw.width();
  parallel_for(0, raw.height(), [&](int y) {
    for (int x = 0; x < w; ++x) {
      const double v = raw.data(x, y);
      const double var = variance(bayer_channel(raw.pattern, x, y), v);
      if (var <= 0.0) continue;
      const auto index = static_cast<std::uint64_t>(y) * static_cast<std::uint64_t>(w) + x;
      out.data(x, y) =
          static_cast<float>(std::clamp(v + std::sqrt(var) * rng.normal(index), 0.0, 1.0));
    }
  });
  return out;
}

}  // namespace

RawImage add_noise(const RawImage& raw, const NoiseModel& model, std::uint64_t seed,
                   std::uint64_t frame_index) {
  model.validate();
  return perturb(raw, seed, kNoiseStream, frame_index,
                 [&](int c, double x) { return model.variance(c, std::max(0.0, x)); });
}

RawImage noise_transfer(const RawImage& raw, const NoiseModel& from, const NoiseModel& to,
                        std::uint64_t seed, std::uint64_t frame_index) {
  from.validate();
  to.validate();
  for (int c = 0; c < 3; ++c) {
    if (to.channels[c].lambda_read < from.channels[c].lambda_read ||
        to.channels[c].lambda_shot < from.channels[c].lambda_shot) {
      throw DomainError("cannot remove noise by transfer");
    }
  }
  return perturb(raw, seed, kTransferStream, frame_index, [&](int c, double y) {
    return (to.channels[c].lambda_read - from.channels[c].lambda_read) +
           (to.channels[c].lambda_shot - from.channels[c].lambda_shot) * std::max(0.0, y);
  });
}

NoiseFit fit_noise_model(const std::vector<RawImage>& stack) {
  if (stack.size() < 16) throw DomainError("noise fit needs at least 16 frames");
  const RawImage& first = stack.front();
  for (const auto& f : stack) {
    if (!f.data.same_shape(first.data) || f.pattern != first.pattern) {
      throw DomainError("noise fit frames must share size and pattern");
    }
  }
  const int w = first.width(), h = first.height();
  const double n = static_cast<double>(stack.size());
  std::array<std::vector<double>, 3> means, vars;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sum = 0.0;
      bool clipped = false;
      for (const auto& f : stack) {
        const float v = f.data(x, y);
        clipped |= (v <= 0.0f || v >= 1.0f);
        sum += v;
      }
      if (clipped) continue;
      const double mean = sum / n;
      double ss = 0.0;
      for (const auto& f : stack) {
        const double d = f.data(x, y) - mean;
        ss += d * d;
      }
      const int c = bayer_channel(first.pattern, x, y);
      means[c].push_back(mean);
      vars[c].push_back(ss / (n - 1.0));
    }
  }

  NoiseFit fit;
  fit.model.gain = "fit";
  for (int c = 0; c < 3; ++c) {
    const auto& m = means[c];
    const auto& v = vars[c];
    if (m.size() < 2) throw RankDeficiencyError("noise fit: too few unclipped pixels");
    const auto [mn, mx] = std::minmax_element(m.begin(), m.end());
    if (*mx - *mn < 1e-9) throw RankDeficiencyError("noise fit: stack has a constant mean");
    // The means must spread well beyond their own sampling noise, or the slope is unidentifiable.
    const double k = static_cast<double>(m.size());
    const double mean_m = std::accumulate(m.begin(), m.end(), 0.0) / k;
    const double mean_v = std::accumulate(v.begin(), v.end(), 0.0) / k;
    double spread = 0.0;
    for (double x : m) spread += (x - mean_m) * (x - mean_m);
    if (std::sqrt(spread / k) < 3.0 * std::sqrt(mean_v / n)) {
      throw RankDeficiencyError("noise fit: pixel means do not vary beyond sampling noise");
    }
    if (*std::max_element(v.begin(), v.end()) <= 0.0) {
      throw RankDeficiencyError("noise fit: zero variance across the stack");
    }
    // Weighted least squares, weights from the sampling variance of a sample
    // variance, 2 sigma^4 / (n - 1), re-estimated from the current line.
    double a = 0.0, b = 0.0;
    Eigen::Matrix2d normal;
    for (int iter = 0; iter < 6; ++iter) {
      normal.setZero();
      Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
      for (std::size_t i = 0; i < m.size(); ++i) {
        double wgt = 1.0;
        if (iter > 0) {
          const double s2 = std::max(a + b * m[i], 1e-12);
          wgt = (n - 1.0) / (2.0 * s2 * s2);
        }
        normal(0, 0) += wgt;
        normal(0, 1) += wgt * m[i];
        normal(1, 1) += wgt * m[i] * m[i];
        rhs(0) += wgt * v[i];
        rhs(1) += wgt * m[i] * v[i];
      }
      normal(1, 0) = normal(0, 1);
      const Eigen::Vector2d sol = normal.ldlt().solve(rhs);
      a = sol(0);
      b = sol(1);
    }
    const Eigen::Matrix2d cov = normal.inverse();
    fit.model.channels[c] = {std::max(0.0, b), std::max(0.0, a)};
    fit.channels[c] = {std::max(0.0, b), std::max(0.0, a), std::sqrt(std::max(0.0, cov(1, 1))),
                       std::sqrt(std::max(0.0, cov(0, 0))), m.size()};
  }
  return fit;
}

RawImage degrade_guide(const LinearImage& image, const GuideDegradation& o, const PsfGrid& grid,
                       const NoiseModel& model, std::uint64_t seed, std::uint64_t frame_index) {
  if (o.factor < 1) throw DomainError("downsample factor must be >= 1");
  if (image.width() % o.factor || image.height() % o.factor) {
    throw DomainError("image dimensions must be divisible by the downsample factor");
  }
  LinearImage small = o.factor == 1 ? image : box_downsample(image, o.factor);
  if (!o.bin2x2) small = apply_psf_grid(small, grid);
  return add_noise(mosaic(small, o.pattern, o.bit_depth), model, seed, frame_index);
}

namespace {

std::filesystem::path sidecar(const std::filesystem::path& png) {
  auto p = png;
  return p.replace_extension(".json");
}

}  // namespace

void write_raw(const std::filesystem::path& png_path, const RawImage& raw) {
  io::write_png16(png_path, raw.data);
  io::write_json(sidecar(png_path), {{"bayer_pattern", to_string(raw.pattern)},
                                     {"bit_depth", raw.bit_depth},
                                     {"width_px", raw.width()},
                                     {"height_px", raw.height()}});
}

RawImage read_raw(const std::filesystem::path& png_path) {
  RawImage raw;
  LinearImage img = io::read_png(png_path);
  raw.data = img.channels() == 1 ? std::move(img) : extract_channel(img, 0);
  const auto meta_path = sidecar(png_path);
  if (std::filesystem::exists(meta_path)) {
    const auto meta = io::read_json(meta_path);
    raw.pattern = parse_bayer_pattern(meta.value("bayer_pattern", std::string("RGGB")));
    raw.bit_depth = meta.value("bit_depth", 12);
  }
  raw.validate();
  return raw;
}

}  // namespace glassesim
