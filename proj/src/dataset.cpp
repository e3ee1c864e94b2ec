// Copyright 2026 The l2d Authors
// SPDX-License-Identifier: Apache-2.0

#include "l2d/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "l2d/checkpoint.hpp"
#include "l2d/rng.hpp"

namespace l2d {

namespace {

constexpr std::size_t kRawSide = 28;
constexpr std::size_t kSide = 32;
constexpr std::size_t kPixels = kSide * kSide;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("idx file " + path + ": " + what);
}

void put_u32_be(std::string& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32_be(const std::string& bytes, std::size_t offset,
                         const std::string& path) {
  if (offset + 4 > bytes.size()) fail(path, "truncated header");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  }
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(path, "cannot open " + tmp + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) fail(path, "write failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    fail(path, "rename from temporary failed");
  }
}

// Half-pixel-center bilinear resampling of one grayscale plane.
void bilinear_resize(const double* src, std::size_t sh, std::size_t sw,
                     double* dst, std::size_t dh, std::size_t dw) {
  const double ry = static_cast<double>(sh) / static_cast<double>(dh);
  const double rx = static_cast<double>(sw) / static_cast<double>(dw);
  for (std::size_t y = 0; y < dh; ++y) {
    double sy = (static_cast<double>(y) + 0.5) * ry - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(sh - 1));
    const std::size_t y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, sh - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < dw; ++x) {
      double sx = (static_cast<double>(x) + 0.5) * rx - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(sw - 1));
      const std::size_t x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, sw - 1);
      const double fx = sx - static_cast<double>(x0);
      const double top = src[y0 * sw + x0] * (1.0 - fx) + src[y0 * sw + x1] * fx;
      const double bot = src[y1 * sw + x0] * (1.0 - fx) + src[y1 * sw + x1] * fx;
      dst[y * dw + x] = top * (1.0 - fy) + bot * fy;
    }
  }
}

// Separable Gaussian with replicate edge handling, one plane in place.
void gaussian_blur_plane(double* img, std::size_t h, std::size_t w,
                         double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (double& k : kernel) k /= total;

  std::vector<double> tmp(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int xi = std::clamp(static_cast<int>(x) + i, 0,
                                  static_cast<int>(w) - 1);
        acc += kernel[i + radius] * img[y * w + xi];
      }
      tmp[y * w + x] = acc;
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const int yi = std::clamp(static_cast<int>(y) + i, 0,
                                  static_cast<int>(h) - 1);
        acc += kernel[i + radius] * tmp[yi * w + x];
      }
      img[y * w + x] = acc;
    }
  }
}

// 5x7 digit glyphs, one string per row, '#' = ink.
const char* const kGlyphs[10][7] = {
    {".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."},  // 0
    {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."},  // 1
    {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"},  // 2
    {"#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."},  // 3
    {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."},  // 4
    {"#####", "#....", "####.", "....#", "....#", "#...#", ".###."},  // 5
    {"..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."},  // 6
    {"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."},  // 7
    {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."},  // 8
    {".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."},  // 9
};

// Bilinear sample of a glyph bitmap at continuous cell coordinates;
// cells are unit squares with centers at (i+0.5, j+0.5), zero outside.
double glyph_sample(int digit, double u, double v) {
  auto cell = [&](int i, int j) -> double {
    if (i < 0 || i >= 5 || j < 0 || j >= 7) return 0.0;
    return kGlyphs[digit][j][i] == '#' ? 1.0 : 0.0;
  };
  const double a = u - 0.5, b = v - 0.5;
  const int i0 = static_cast<int>(std::floor(a));
  const int j0 = static_cast<int>(std::floor(b));
  const double fi = a - i0, fj = b - j0;
  const double top = cell(i0, j0) * (1.0 - fi) + cell(i0 + 1, j0) * fi;
  const double bot = cell(i0, j0 + 1) * (1.0 - fi) + cell(i0 + 1, j0 + 1) * fi;
  return top * (1.0 - fj) + bot * fj;
}

struct SeverityTables {
  static constexpr double kNoiseSigma[5] = {0.04, 0.08, 0.12, 0.18, 0.26};
  static constexpr double kBlurSigma[5] = {0.5, 0.75, 1.0, 1.4, 2.0};
  static constexpr double kFogBlend[5] = {0.15, 0.25, 0.35, 0.5, 0.65};
  static constexpr std::size_t kPixelBlock[5] = {2, 3, 4, 6, 8};
};

}  // namespace

void LabeledDataset::validate() const {
  if (!images.defined()) {
    throw std::invalid_argument("dataset " + name + ": images undefined");
  }
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != kSide || s[3] != kSide) {
    throw std::invalid_argument("dataset " + name + ": bad image shape " +
                                shape_str(s));
  }
  if (s[0] != labels.size()) {
    throw std::invalid_argument("dataset " + name +
                                ": image/label count mismatch");
  }
  if (num_classes < 2) {
    throw std::invalid_argument("dataset " + name + ": need >= 2 classes");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
      throw std::invalid_argument("dataset " + name + ": label out of range");
    }
  }
  for (double v : images.values()) {
    if (!(v >= -1.0 && v <= 1.0)) {
      throw std::invalid_argument("dataset " + name +
                                  ": pixel outside [-1,1]");
    }
  }
}

LabeledDataset load_idx(const std::string& image_path,
                        const std::string& label_path) {
  const std::string ib = read_file(image_path);
  if (get_u32_be(ib, 0, image_path) != 0x00000803u) {
    fail(image_path, "bad magic (expected 0x00000803)");
  }
  const std::size_t n = get_u32_be(ib, 4, image_path);
  const std::size_t rows = get_u32_be(ib, 8, image_path);
  const std::size_t cols = get_u32_be(ib, 12, image_path);
  if (n == 0) fail(image_path, "empty image set");
  if (rows < 2 || cols < 2) fail(image_path, "implausible image dims");
  if (ib.size() != 16 + n * rows * cols) {
    fail(image_path, "payload size does not match header");
  }

  const std::string lb = read_file(label_path);
  if (get_u32_be(lb, 0, label_path) != 0x00000801u) {
    fail(label_path, "bad magic (expected 0x00000801)");
  }
  const std::size_t ln = get_u32_be(lb, 4, label_path);
  if (lb.size() != 8 + ln) fail(label_path, "payload size does not match header");
  if (ln != n) {
    fail(label_path, "label count " + std::to_string(ln) +
                         " does not match image count " + std::to_string(n));
  }

  LabeledDataset out;
  out.name = "source";
  out.num_classes = 10;
  out.images = Tensor({n, 3, kSide, kSide});
  out.labels.resize(n);
  std::vector<double> gray(rows * cols);
  std::vector<double> resized(kPixels);
  double* dst = out.images.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* raw =
        reinterpret_cast<const unsigned char*>(ib.data()) + 16 + i * rows * cols;
    for (std::size_t p = 0; p < rows * cols; ++p) gray[p] = raw[p] / 255.0;
    bilinear_resize(gray.data(), rows, cols, resized.data(), kSide, kSide);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t p = 0; p < kPixels; ++p) {
        dst[(i * 3 + c) * kPixels + p] = 2.0 * resized[p] - 1.0;
      }
    }
    out.labels[i] = static_cast<unsigned char>(lb[8 + i]);
  }
  out.validate();
  return out;
}

void write_idx(const RawDigits& data, const std::string& image_path,
               const std::string& label_path) {
  const std::size_t n = data.size();
  if (data.images.size() != n * kRawSide * kRawSide) {
    throw std::invalid_argument("write_idx: image byte count mismatch");
  }
  std::string ib;
  ib.reserve(16 + data.images.size());
  put_u32_be(ib, 0x00000803u);
  put_u32_be(ib, static_cast<std::uint32_t>(n));
  put_u32_be(ib, kRawSide);
  put_u32_be(ib, kRawSide);
  ib.append(reinterpret_cast<const char*>(data.images.data()),
            data.images.size());
  write_file_atomic(image_path, ib);

  std::string lb;
  lb.reserve(8 + n);
  put_u32_be(lb, 0x00000801u);
  put_u32_be(lb, static_cast<std::uint32_t>(n));
  lb.append(reinterpret_cast<const char*>(data.labels.data()), n);
  write_file_atomic(label_path, lb);
}

RawDigits make_synthetic_digits(std::size_t n, std::uint64_t seed) {
  RawDigits out;
  out.images.resize(n * kRawSide * kRawSide);
  out.labels.resize(n);
  RandomStream rng(seed, "digits");
  std::vector<double> plane(kRawSide * kRawSide);
  for (std::size_t i = 0; i < n; ++i) {
    const int digit = static_cast<int>(i % 10);
    out.labels[i] = static_cast<std::uint8_t>(digit);

    const double theta = rng.uniform(-0.2617993877991494, 0.2617993877991494);
    const double scale = rng.uniform(0.8, 1.1);
    const double shear = rng.uniform(-0.15, 0.15);
    const double tx = rng.uniform(-2.0, 2.0);
    const double ty = rng.uniform(-2.0, 2.0);
    const double intensity = rng.uniform(0.75, 1.0);
    const double soft = rng.uniform(0.4, 0.7);

    // forward map: pixel = R(theta) * Shear * (scale * cell) * glyph + t
    const double sc = scale * 2.8;
    const double c = std::cos(theta), s = std::sin(theta);
    const double a00 = c * sc, a01 = sc * (c * shear - s);
    const double a10 = s * sc, a11 = sc * (s * shear + c);
    const double det = a00 * a11 - a01 * a10;
    const double i00 = a11 / det, i01 = -a01 / det;
    const double i10 = -a10 / det, i11 = a00 / det;

    for (std::size_t y = 0; y < kRawSide; ++y) {
      for (std::size_t x = 0; x < kRawSide; ++x) {
        const double dx = static_cast<double>(x) - 13.5 - tx;
        const double dy = static_cast<double>(y) - 13.5 - ty;
        const double u = i00 * dx + i01 * dy + 2.5;
        const double v = i10 * dx + i11 * dy + 3.5;
        plane[y * kRawSide + x] = glyph_sample(digit, u, v);
      }
    }
    gaussian_blur_plane(plane.data(), kRawSide, kRawSide, soft);
    for (std::size_t p = 0; p < kRawSide * kRawSide; ++p) {
      const double v = std::clamp(plane[p] * intensity, 0.0, 1.0);
      out.images[i * kRawSide * kRawSide + p] =
          static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return out;
}

const char* shift_kind_name(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::noise: return "noise";
    case ShiftKind::blur: return "blur";
    case ShiftKind::fog: return "fog";
    case ShiftKind::invert: return "invert";
    case ShiftKind::pixelate: return "pixelate";
  }
  throw std::invalid_argument("shift_kind_name: unknown kind");
}

const char* shift_family(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::noise: return "noise";
    case ShiftKind::blur: return "blur";
    case ShiftKind::fog: return "weather";
    case ShiftKind::invert:
    case ShiftKind::pixelate: return "digital";
  }
  throw std::invalid_argument("shift_family: unknown kind");
}

ShiftKind shift_kind_from_name(const std::string& name) {
  if (name == "noise") return ShiftKind::noise;
  if (name == "blur") return ShiftKind::blur;
  if (name == "fog") return ShiftKind::fog;
  if (name == "invert") return ShiftKind::invert;
  if (name == "pixelate") return ShiftKind::pixelate;
  throw std::invalid_argument("unknown shift kind \"" + name + "\"");
}

LabeledDataset apply_shift(const LabeledDataset& source, const ShiftSpec& spec,
                           std::uint64_t seed) {
  source.validate();
  if (spec.severity < 0 || spec.severity > 5) {
    throw std::invalid_argument("apply_shift: severity " +
                                std::to_string(spec.severity) +
                                " outside [0,5]");
  }
  LabeledDataset out;
  out.labels = source.labels;
  out.num_classes = source.num_classes;
  out.images = source.images.detach();
  if (spec.severity == 0) {
    out.name = source.name;
    return out;
  }
  out.name = source.name + "/" + shift_kind_name(spec.kind) +
             std::to_string(spec.severity);

  const std::size_t n = source.size();
  const std::size_t sev = static_cast<std::size_t>(spec.severity - 1);
  double* px = out.images.values().data();
  const std::size_t plane = kPixels;

  switch (spec.kind) {
    case ShiftKind::noise: {
      RandomStream rng(seed, "shift.noise");
      const double sigma = SeverityTables::kNoiseSigma[sev];
      for (std::size_t p = 0; p < n * 3 * plane; ++p) {
        px[p] += sigma * rng.normal();
      }
      break;
    }
    case ShiftKind::blur: {
      const double sigma = SeverityTables::kBlurSigma[sev];
      for (std::size_t ic = 0; ic < n * 3; ++ic) {
        gaussian_blur_plane(px + ic * plane, kSide, kSide, sigma);
      }
      break;
    }
    case ShiftKind::fog: {
      const double t = SeverityTables::kFogBlend[sev];
      for (std::size_t p = 0; p < n * 3 * plane; ++p) {
        px[p] = (1.0 - t) * px[p] + t;
      }
      break;
    }
    case ShiftKind::invert: {
      for (std::size_t p = 0; p < n * 3 * plane; ++p) px[p] = -px[p];
      break;
    }
    case ShiftKind::pixelate: {
      const std::size_t block = SeverityTables::kPixelBlock[sev];
      for (std::size_t ic = 0; ic < n * 3; ++ic) {
        double* img = px + ic * plane;
        for (std::size_t by = 0; by < kSide; by += block) {
          const std::size_t ey = std::min(by + block, kSide);
          for (std::size_t bx = 0; bx < kSide; bx += block) {
            const std::size_t ex = std::min(bx + block, kSide);
            double acc = 0.0;
            for (std::size_t y = by; y < ey; ++y) {
              for (std::size_t x = bx; x < ex; ++x) acc += img[y * kSide + x];
            }
            acc /= static_cast<double>((ey - by) * (ex - bx));
            for (std::size_t y = by; y < ey; ++y) {
              for (std::size_t x = bx; x < ex; ++x) img[y * kSide + x] = acc;
            }
          }
        }
      }
      break;
    }
  }
  for (std::size_t p = 0; p < n * 3 * plane; ++p) {
    px[p] = std::clamp(px[p], -1.0, 1.0);
  }
  out.validate();
  return out;
}

std::vector<LabeledDataset> make_eval_suite(const LabeledDataset& source,
                                            std::uint64_t seed) {
  source.validate();
  std::vector<LabeledDataset> suite;
  suite.reserve(5);

  LabeledDataset inverted =
      apply_shift(source, {ShiftKind::invert, 1}, seed);
  inverted.name = "inverted";
  suite.push_back(std::move(inverted));

  // MNIST-M-like composite: digit alpha-blended over a smooth random color
  // background, digit ink forced to contrast with the background level.
  LabeledDataset colored;
  colored.name = "colored_bg";
  colored.labels = source.labels;
  colored.num_classes = source.num_classes;
  colored.images = Tensor(source.images.shape());
  {
    RandomStream rng(seed, "suite.bg");
    const std::size_t n = source.size();
    const double* sp = source.images.values().data();
    double* dp = colored.images.values().data();
    std::vector<double> grid(4 * 4), bg(kPixels);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> bgc(3 * kPixels);
      double bg_mean = 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        for (double& g : grid) g = rng.uniform(-1.0, 1.0);
        bilinear_resize(grid.data(), 4, 4, bg.data(), kSide, kSide);
        for (std::size_t p = 0; p < kPixels; ++p) {
          bgc[c * kPixels + p] = bg[p];
          bg_mean += bg[p];
        }
      }
      bg_mean /= static_cast<double>(3 * kPixels);
      const double ink = bg_mean > 0.0 ? -0.9 : 0.9;
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t p = 0; p < kPixels; ++p) {
          // channels are triplicated in the source, channel 0 is the alpha
          const double alpha = (sp[(i * 3) * kPixels + p] + 1.0) * 0.5;
          dp[(i * 3 + c) * kPixels + p] =
              std::clamp((1.0 - alpha) * bgc[c * kPixels + p] + alpha * ink,
                         -1.0, 1.0);
        }
      }
    }
  }
  colored.validate();
  suite.push_back(std::move(colored));

  LabeledDataset noisy = apply_shift(source, {ShiftKind::noise, 3},
                                     RandomStream(seed, "suite.noise").next_u64());
  noisy.name = "noise3";
  suite.push_back(std::move(noisy));

  LabeledDataset blurred = apply_shift(source, {ShiftKind::blur, 3}, seed);
  blurred.name = "blur3";
  suite.push_back(std::move(blurred));

  LabeledDataset pixelated =
      apply_shift(source, {ShiftKind::pixelate, 3}, seed);
  pixelated.name = "pixelate3";
  suite.push_back(std::move(pixelated));
  return suite;
}

void save_dataset_cache(const std::string& path, const LabeledDataset& data) {
  data.validate();
  Tensor labels({data.labels.size()});
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    labels.values()[i] = static_cast<double>(data.labels[i]);
  }
  save_arrays(path, {{"images", data.images},
                     {"labels", labels},
                     {"num_classes",
                      Tensor::scalar(static_cast<double>(data.num_classes))}});
}

LabeledDataset load_dataset_cache(const std::string& path,
                                  const std::string& name) {
  auto arrays = load_arrays(path);
  LabeledDataset out;
  out.name = name;
  bool have_images = false, have_labels = false, have_classes = false;
  for (auto& [aname, t] : arrays) {
    if (aname == "images") {
      out.images = t;
      have_images = true;
    } else if (aname == "labels") {
      out.labels.resize(t.numel());
      for (std::size_t i = 0; i < t.numel(); ++i) {
        out.labels[i] = static_cast<int>(t.values()[i]);
      }
      have_labels = true;
    } else if (aname == "num_classes") {
      out.num_classes = static_cast<std::size_t>(t.values()[0]);
      have_classes = true;
    }
  }
  if (!have_images || !have_labels || !have_classes) {
    throw std::runtime_error("dataset cache " + path + ": missing arrays");
  }
  out.validate();
  return out;
}

}  // namespace l2d
