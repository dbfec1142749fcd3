#include <algorithm>
#include <cmath>
#include <numbers>

#include "seqvessel/data.hpp"

namespace seqvessel {

namespace {

// Linear part plus translation, in image-center coordinates.
struct Linear {
  double a = 1, b = 0, c = 0, d = 1, tx = 0, ty = 0;

  // this applied after `first`
  Linear after(const Linear& f) const {
    return {a * f.a + b * f.c, a * f.b + b * f.d, c * f.a + d * f.c, c * f.b + d * f.d,
            a * f.tx + b * f.ty + tx, c * f.tx + d * f.ty + ty};
  }
  Linear inverse() const {
    const double det = a * d - b * c;
    const Linear inv{d / det, -b / det, -c / det, a / det, 0, 0};
    return {inv.a, inv.b, inv.c, inv.d, -(inv.a * tx + inv.b * ty), -(inv.c * tx + inv.d * ty)};
  }
};

// Output->input map in pixel coordinates from a centered output->input map.
Affine2D uncenter(const Linear& g, std::size_t height, std::size_t width) {
  const double cx = (static_cast<double>(width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(height) - 1.0) / 2.0;
  return {g.a, g.b, g.c, g.d, cx - (g.a * cx + g.b * cy) + g.tx, cy - (g.c * cx + g.d * cy) + g.ty};
}

Linear rotation_linear(double degrees) {
  const double r = degrees * std::numbers::pi / 180.0;
  return {std::cos(r), -std::sin(r), std::sin(r), std::cos(r), 0, 0};
}

void require_image(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw ShapeError(std::string(what) + " expects an [H,W] image, got " + t.shape().str());
}

struct AxisTap {
  std::size_t lo, hi;
  double frac;
};

std::vector<AxisTap> resize_taps(std::size_t in, std::size_t out) {
  std::vector<AxisTap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double src = std::clamp((static_cast<double>(o) + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(src);
    taps[o] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

Affine2D Affine2D::rotation(double degrees, std::size_t height, std::size_t width) {
  return uncenter(rotation_linear(degrees).inverse(), height, width);
}

Tensor warp_bilinear(const Tensor& image, const Affine2D& m) {
  require_image(image, "warp_bilinear");
  const std::size_t h = image.dim(0), w = image.dim(1);
  Tensor out(image.shape());
  const double xmax = static_cast<double>(w - 1), ymax = static_cast<double>(h - 1);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = static_cast<double>(x), fy = static_cast<double>(y);
      const double sx = std::clamp(m.a * fx + m.b * fy + m.tx, 0.0, xmax);
      const double sy = std::clamp(m.c * fx + m.d * fy + m.ty, 0.0, ymax);
      const auto x0 = static_cast<std::size_t>(sx), y0 = static_cast<std::size_t>(sy);
      const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const float lx = static_cast<float>(sx - static_cast<double>(x0));
      const float ly = static_cast<float>(sy - static_cast<double>(y0));
      const float* r0 = image.data().data() + y0 * w;
      const float* r1 = image.data().data() + y1 * w;
      const float top = r0[x0] + lx * (r0[x1] - r0[x0]);
      const float bot = r1[x0] + lx * (r1[x1] - r1[x0]);
      out[y * w + x] = top + ly * (bot - top);
    }
  }
  return out;
}

Tensor warp_nearest(const Tensor& mask, const Affine2D& m) {
  require_image(mask, "warp_nearest");
  const std::size_t h = mask.dim(0), w = mask.dim(1);
  Tensor out(mask.shape());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = static_cast<double>(x), fy = static_cast<double>(y);
      const double sx = std::clamp(std::round(m.a * fx + m.b * fy + m.tx), 0.0, static_cast<double>(w - 1));
      const double sy = std::clamp(std::round(m.c * fx + m.d * fy + m.ty), 0.0, static_cast<double>(h - 1));
      const float v = mask[static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)];
      out[y * w + x] = v >= 0.5f ? 1.0f : 0.0f;
    }
  }
  return out;
}

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
  require_image(image, "resize_bilinear");
  if (height == 0 || width == 0) throw ShapeError("resize target must be positive");
  if (image.dim(0) == height && image.dim(1) == width) return image;
  const std::size_t w_in = image.dim(1);
  const auto ty = resize_taps(image.dim(0), height), tx = resize_taps(w_in, width);
  Tensor out(TensorShape{height, width});
  for (std::size_t y = 0; y < height; ++y) {
    const float* r0 = image.data().data() + ty[y].lo * w_in;
    const float* r1 = image.data().data() + ty[y].hi * w_in;
    const auto ly = static_cast<float>(ty[y].frac);
    for (std::size_t x = 0; x < width; ++x) {
      const auto& t = tx[x];
      const auto lx = static_cast<float>(t.frac);
      const float top = r0[t.lo] + lx * (r0[t.hi] - r0[t.lo]);
      const float bot = r1[t.lo] + lx * (r1[t.hi] - r1[t.lo]);
      out[y * width + x] = top + ly * (bot - top);
    }
  }
  return out;
}

Tensor resize_nearest(const Tensor& mask, std::size_t height, std::size_t width) {
  require_image(mask, "resize_nearest");
  if (height == 0 || width == 0) throw ShapeError("resize target must be positive");
  if (mask.dim(0) == height && mask.dim(1) == width) return mask;
  const std::size_t h_in = mask.dim(0), w_in = mask.dim(1);
  Tensor out(TensorShape{height, width});
  for (std::size_t y = 0; y < height; ++y) {
    const auto sy = std::min(h_in - 1, static_cast<std::size_t>((static_cast<double>(y) + 0.5) * h_in / height));
    for (std::size_t x = 0; x < width; ++x) {
      const auto sx = std::min(w_in - 1, static_cast<std::size_t>((static_cast<double>(x) + 0.5) * w_in / width));
      out[y * width + x] = mask[sy * w_in + sx] >= 0.5f ? 1.0f : 0.0f;
    }
  }
  return out;
}

Sequence preprocess(const Sequence& seq, std::size_t height, std::size_t width) {
  Sequence out;
  out.id = seq.id;
  for (const auto& f : seq.frames) out.frames.push_back(resize_bilinear(f, height, width));
  for (const auto& m : seq.masks) out.masks.push_back(resize_nearest(m, height, width));
  return out;
}

AugmentResult augment(const Sample& sample, const AugmentConfig& cfg, CounterRng& rng) {
  const std::size_t t = sample.window.frames.dim(0);
  const std::size_t h = sample.window.frames.dim(1), w = sample.window.frames.dim(2);
  const double prob = cfg.per_transform_prob;

  // Every transform consumes the same draws whether or not it fires.
  Linear forward;
  bool fired = false;
  auto apply = [&](bool enabled, bool hit, const Linear& step) {
    if (enabled && hit) {
      forward = step.after(forward);
      fired = true;
    }
  };
  {
    const bool hit = rng.bernoulli(prob);
    apply(cfg.flip_h, hit, Linear{-1, 0, 0, 1, 0, 0});
  }
  {
    const bool hit = rng.bernoulli(prob);
    apply(cfg.flip_v, hit, Linear{1, 0, 0, -1, 0, 0});
  }
  {
    const bool hit = rng.bernoulli(prob);
    const double deg = rng.uniform(-cfg.rotate_deg, cfg.rotate_deg);
    apply(cfg.rotate_deg > 0.0, hit, rotation_linear(deg));
  }
  {
    const bool hit = rng.bernoulli(prob);
    const double s = rng.uniform(1.0 - cfg.scale_factor, 1.0 + cfg.scale_factor);
    apply(cfg.scale_factor > 0.0, hit, Linear{s, 0, 0, s, 0, 0});
  }
  {
    const bool hit = rng.bernoulli(prob);
    const double deg = rng.uniform(-cfg.shear_deg, cfg.shear_deg);
    apply(cfg.shear_deg > 0.0, hit, Linear{1, std::tan(deg * std::numbers::pi / 180.0), 0, 1, 0, 0});
  }
  {
    const bool hit = rng.bernoulli(prob);
    const double side = rng.uniform(1.0 - cfg.scale_factor, 1.0);
    const double ox = (rng.uniform() - 0.5) * (1.0 - side) * static_cast<double>(w);
    const double oy = (rng.uniform() - 0.5) * (1.0 - side) * static_cast<double>(h);
    // Crop window centered at (ox, oy), stretched back to full size.
    apply(cfg.crop && cfg.scale_factor > 0.0, hit, Linear{1 / side, 0, 0, 1 / side, -ox / side, -oy / side});
  }

  AugmentResult r;
  r.sample = sample;
  r.applied = fired;
  if (!fired) return r;
  r.transform = uncenter(forward.inverse(), h, w);

  const std::size_t plane = h * w;
  for (std::size_t k = 0; k < t; ++k) {
    Tensor frame = Tensor::from(TensorShape{h, w}, sample.window.frames.data().subspan(k * plane, plane));
    Tensor warped = warp_bilinear(frame, r.transform);
    std::copy(warped.data().begin(), warped.data().end(),
              r.sample.window.frames.data().begin() + static_cast<std::ptrdiff_t>(k * plane));
  }
  if (sample.target_mask.defined()) r.sample.target_mask = warp_nearest(sample.target_mask, r.transform);
  return r;
}

}  // namespace seqvessel
