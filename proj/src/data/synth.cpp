#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "seqvessel/data.hpp"

namespace seqvessel {

namespace {

struct Point {
  double x, y;
};

struct Wave {
  double amp, fx, fy, vx, vy, phase;
};

struct Blob {
  Point center, velocity;
  double sigma, depth;
};

struct Vessel {
  Point p0, p1, p2;  // quadratic Bezier control points
  Point velocity;
  double radius, depth;
};

Point random_velocity(CounterRng& rng, double max_speed) {
  const double speed = max_speed * std::sqrt(rng.uniform());
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return {speed * std::cos(angle), speed * std::sin(angle)};
}

Point bezier(const Point& a, const Point& b, const Point& c, double t) {
  const double u = 1.0 - t;
  return {u * u * a.x + 2 * u * t * b.x + t * t * c.x, u * u * a.y + 2 * u * t * b.y + t * t * c.y};
}

}  // namespace

void SynthConfig::validate() const {
  auto bad = [](const char* what) { throw std::invalid_argument(std::string("synth config: ") + what); };
  if (height < 8 || width < 8) bad("image must be at least 8x8");
  if (frames < 1) bad("frames must be >= 1");
  if (vessels_min > vessels_max) bad("vessels_min > vessels_max");
  if (!(radius_min > 0 && radius_min <= radius_max)) bad("radius range invalid");
  if (!(depth_min > 0 && depth_min <= depth_max && depth_max < 1)) bad("depth range invalid");
  if (vessel_velocity < 0 || background_velocity < 0) bad("velocities must be non-negative");
  if (!(photon_scale > 0)) bad("photon_scale must be positive");
}

Sequence synthesize(const SynthConfig& cfg, CounterRng& rng, std::string id) {
  cfg.validate();
  const double W = static_cast<double>(cfg.width), H = static_cast<double>(cfg.height);
  const double extent = std::min(W, H);

  std::vector<Wave> waves(3);
  for (auto& wv : waves) {
    wv.amp = rng.uniform(0.03, 0.06);
    wv.fx = rng.uniform(-2.0, 2.0) / W;
    wv.fy = rng.uniform(-2.0, 2.0) / H;
    const Point v = random_velocity(rng, cfg.background_velocity);
    wv.vx = v.x;
    wv.vy = v.y;
    wv.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }

  std::vector<Blob> blobs(1 + rng.below(2));
  for (auto& b : blobs) {
    b.center = {rng.uniform(0.0, W), rng.uniform(0.0, H)};
    b.velocity = random_velocity(rng, 1.5 * cfg.background_velocity);
    b.sigma = rng.uniform(extent / 6.0, extent / 3.0);
    b.depth = rng.uniform(0.08, 0.18);
  }

  const std::size_t n_vessels = cfg.vessels_min + rng.below(cfg.vessels_max - cfg.vessels_min + 1);
  std::vector<Vessel> vessels(n_vessels);
  for (auto& v : vessels) {
    const Point start{rng.uniform(0.15 * W, 0.85 * W), rng.uniform(0.15 * H, 0.85 * H)};
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double len = rng.uniform(0.6, 1.0) * extent;
    const Point dir{std::cos(angle), std::sin(angle)};
    v.p0 = {start.x - 0.5 * len * dir.x, start.y - 0.5 * len * dir.y};
    v.p2 = {start.x + 0.5 * len * dir.x, start.y + 0.5 * len * dir.y};
    const double bend = rng.uniform(-0.3, 0.3) * len;
    v.p1 = {start.x - bend * dir.y, start.y + bend * dir.x};
    v.velocity = random_velocity(rng, cfg.vessel_velocity);
    v.radius = rng.uniform(cfg.radius_min, cfg.radius_max);
    v.depth = rng.uniform(cfg.depth_min, cfg.depth_max);
  }

  Sequence seq;
  seq.id = std::move(id);
  const std::size_t h = cfg.height, w = cfg.width;
  constexpr double kJitter = 0.3;  // px, per control point per frame

  for (std::size_t f = 0; f < cfg.frames; ++f) {
    const double t = static_cast<double>(f);
    std::vector<double> clean(h * w, 0.6);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double v = 0.6;
        for (const auto& wv : waves) {
          v += wv.amp * std::sin(2.0 * std::numbers::pi *
                                     (wv.fx * (static_cast<double>(x) - wv.vx * t) +
                                      wv.fy * (static_cast<double>(y) - wv.vy * t)) +
                                 wv.phase);
        }
        for (const auto& b : blobs) {
          const double dx = static_cast<double>(x) - (b.center.x + b.velocity.x * t);
          const double dy = static_cast<double>(y) - (b.center.y + b.velocity.y * t);
          v -= b.depth * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
        }
        clean[y * w + x] = v;
      }
    }

    std::vector<double> dist(h * w, std::numeric_limits<double>::infinity());
    Tensor mask(TensorShape{h, w});
    for (const auto& v : vessels) {
      auto at = [&](const Point& p) {
        return Point{p.x + v.velocity.x * t + kJitter * rng.normal(), p.y + v.velocity.y * t + kJitter * rng.normal()};
      };
      const Point a = at(v.p0), b = at(v.p1), c = at(v.p2);
      // Dense centerline samples (<= 0.25 px apart).
      const double approx_len = std::hypot(b.x - a.x, b.y - a.y) + std::hypot(c.x - b.x, c.y - b.y);
      const auto samples = static_cast<std::size_t>(std::ceil(approx_len * 4.0)) + 2;
      std::vector<Point> line(samples);
      for (std::size_t i = 0; i < samples; ++i) line[i] = bezier(a, b, c, static_cast<double>(i) / (samples - 1));

      const double reach = 4.0 * v.radius;
      std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
      for (const auto& p : line) {
        const long x0 = std::max(0L, static_cast<long>(std::floor(p.x - reach)));
        const long x1 = std::min(static_cast<long>(w) - 1, static_cast<long>(std::ceil(p.x + reach)));
        const long y0 = std::max(0L, static_cast<long>(std::floor(p.y - reach)));
        const long y1 = std::min(static_cast<long>(h) - 1, static_cast<long>(std::ceil(p.y + reach)));
        for (long y = y0; y <= y1; ++y) {
          for (long x = x0; x <= x1; ++x) {
            const double d2 = (x - p.x) * (x - p.x) + (y - p.y) * (y - p.y);
            double& slot = dist[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
            slot = std::min(slot, d2);
          }
        }
      }
      const double two_r2 = 2.0 * v.radius * v.radius, r2 = v.radius * v.radius;
      for (std::size_t i = 0; i < h * w; ++i) {
        if (!std::isfinite(dist[i])) continue;
        clean[i] -= v.depth * std::exp(-dist[i] / two_r2);
        if (dist[i] <= r2) mask[i] = 1.0f;
      }
    }

    Tensor frame(TensorShape{h, w});
    for (std::size_t i = 0; i < h * w; ++i) {
      const double lambda = cfg.photon_scale * std::clamp(clean[i], 0.0, 1.0);
      double counts = 0.0;
      if (lambda > 0.0) {
        std::poisson_distribution<long> poisson(lambda);
        counts = static_cast<double>(poisson(rng));
      }
      frame[i] = static_cast<float>(std::clamp(counts / cfg.photon_scale, 0.0, 1.0));
    }
    seq.frames.push_back(std::move(frame));
    seq.masks.push_back(std::move(mask));
  }
  return seq;
}

}  // namespace seqvessel
