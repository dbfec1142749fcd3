#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "seqvessel/data.hpp"

using namespace seqvessel;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("seqvessel_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Sequence labelled_sequence(std::size_t n, std::uint64_t seed, std::size_t hw = 32) {
  SynthConfig sc;
  sc.frames = n;
  sc.height = sc.width = hw;
  CounterRng rng(seed);
  return synthesize(sc, rng, "seq");
}

Sample smooth_sample(std::size_t h, std::size_t w) {
  Sample s;
  s.window.frames = Tensor(TensorShape{4, h, w});
  s.target_mask = Tensor(TensorShape{h, w});
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        s.window.frames.at({t, y, x}) = static_cast<float>(
            0.5 + 0.4 * std::sin(0.15 * static_cast<double>(x) + 0.1 * static_cast<double>(t)) *
                      std::cos(0.12 * static_cast<double>(y)));
        s.target_mask.at({y, x}) = (x + 2 * y) % 7 < 3 ? 1.0f : 0.0f;
      }
  return s;
}

}  // namespace

TEST(Pgm, RoundTripAndNormalization) {
  const fs::path dir = fresh_dir("pgm");
  GrayImage img{3, 2, {0, 255, 128, 7, 8, 9}};
  write_pgm(dir / "a.pgm", img);
  const GrayImage back = read_pgm(dir / "a.pgm");
  EXPECT_EQ(back.pixels, img.pixels);
  const Tensor t = image_to_tensor(back);
  EXPECT_EQ(t.shape(), TensorShape({2, 3}));
  EXPECT_EQ(t[0], 0.0f);
  EXPECT_EQ(t[1], 1.0f);
  EXPECT_EQ(tensor_to_image(t).pixels, img.pixels);
  const Tensor m = image_to_mask(back);
  EXPECT_EQ(m.values(), std::vector<float>({0, 1, 1, 0, 0, 0}));
  fs::remove_all(dir);
}

TEST(Pgm, QuantizationWithinOneStep) {
  CounterRng rng(1);
  Tensor t(TensorShape{5, 6});
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform());
  const Tensor back = image_to_tensor(tensor_to_image(t));
  for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_LE(std::abs(back[i] - t[i]), 1.0 / 255.0);
}

TEST(Pgm, RejectsMalformedFiles) {
  const fs::path dir = fresh_dir("pgm_bad");
  auto write_raw = [&](const std::string& name, const std::string& bytes) {
    std::ofstream(dir / name, std::ios::binary) << bytes;
    return dir / name;
  };
  EXPECT_THROW(read_pgm(write_raw("p2.pgm", "P2\n2 2\n255\n0 0 0 0")), FormatError);
  EXPECT_THROW(read_pgm(write_raw("short.pgm", std::string("P5\n2 2\n255\n") + "ab")), FormatError);
  EXPECT_THROW(read_pgm(write_raw("maxval.pgm", "P5\n1 1\n65535\n\x01\x02")), FormatError);
  EXPECT_THROW(read_pgm(dir / "missing.pgm"), FormatError);
  fs::remove_all(dir);
}

TEST(Sequence, WriteLoadRoundTrip) {
  const fs::path dir = fresh_dir("seq");
  const Sequence seq = labelled_sequence(3, 2, 8);
  write_sequence(seq, dir);
  const Sequence back = load_sequence(dir);
  ASSERT_EQ(back.frames.size(), 3u);
  ASSERT_EQ(back.masks.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < seq.frames[i].numel(); ++k) {
      EXPECT_LE(std::abs(back.frames[i][k] - seq.frames[i][k]), 1.0 / 255.0);
      EXPECT_EQ(back.masks[i][k], seq.masks[i][k]);
    }
  }
  fs::remove(dir / "frame_0002.pgm");
  EXPECT_THROW(load_sequence(dir), FormatError);
  fs::remove_all(dir);
}

TEST(Windows, TrainCountsAndCenters) {
  const auto w10 = make_windows(labelled_sequence(10, 3), Purpose::train);
  ASSERT_EQ(w10.size(), 7u);
  for (std::size_t i = 0; i < 7; ++i) {
    EXPECT_EQ(w10[i].center, i + 3);
    EXPECT_EQ(w10[i].window.target_index, 2u);
    EXPECT_EQ(w10[i].window.frames.dim(0), 4u);
  }
  const auto w4 = make_windows(labelled_sequence(4, 3), Purpose::train);
  ASSERT_EQ(w4.size(), 1u);
  EXPECT_EQ(w4[0].center, 3u);
  EXPECT_THROW(make_windows(labelled_sequence(3, 3), Purpose::train), std::invalid_argument);
  Sequence unlabelled = labelled_sequence(6, 3);
  unlabelled.masks.clear();
  EXPECT_THROW(make_windows(unlabelled, Purpose::train), std::invalid_argument);
}

TEST(Windows, InferReplicatesEdges) {
  const Sequence seq = labelled_sequence(6, 4);
  const auto w = make_windows(seq, Purpose::infer);
  ASSERT_EQ(w.size(), 6u);
  const std::size_t plane = seq.frames[0].numel();
  auto frame_is = [&](const Sample& s, std::size_t t, std::size_t src) {
    const auto got = s.window.frames.data().subspan(t * plane, plane);
    return std::equal(got.begin(), got.end(), seq.frames[src].data().begin());
  };
  // i = 1: (F1, F1, F1, F2)
  EXPECT_TRUE(frame_is(w[0], 0, 0));
  EXPECT_TRUE(frame_is(w[0], 1, 0));
  EXPECT_TRUE(frame_is(w[0], 2, 0));
  EXPECT_TRUE(frame_is(w[0], 3, 1));
  // i = 6: (F4, F5, F6, F6)
  EXPECT_TRUE(frame_is(w[5], 0, 3));
  EXPECT_TRUE(frame_is(w[5], 3, 5));
  EXPECT_EQ(w[5].target_mask.values(), seq.masks[5].values());
}

TEST(Augment, NoFireIsIdentity) {
  AugmentConfig never;
  never.per_transform_prob = 0.0;
  const Sample s = smooth_sample(16, 16);
  CounterRng rng(5);
  const AugmentResult r = augment(s, never, rng);
  EXPECT_FALSE(r.applied);
  EXPECT_EQ(r.sample.window.frames.values(), s.window.frames.values());
  EXPECT_EQ(r.sample.target_mask.values(), s.target_mask.values());
}

TEST(Augment, HorizontalFlipIsInvolution) {
  AugmentConfig flip;
  flip.per_transform_prob = 1.0;
  flip.rotate_deg = flip.scale_factor = flip.shear_deg = 0.0;
  flip.flip_v = flip.crop = false;
  const Sample s = smooth_sample(12, 10);
  CounterRng rng(6);
  const AugmentResult once = augment(s, flip, rng);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t y = 0; y < 12; ++y)
      for (std::size_t x = 0; x < 10; ++x)
        ASSERT_EQ(once.sample.window.frames.at({t, y, x}), s.window.frames.at({t, y, 9 - x}));
  for (std::size_t y = 0; y < 12; ++y)
    for (std::size_t x = 0; x < 10; ++x) ASSERT_EQ(once.sample.target_mask.at({y, x}), s.target_mask.at({y, 9 - x}));
  const AugmentResult twice = augment(once.sample, flip, rng);
  EXPECT_EQ(twice.sample.window.frames.values(), s.window.frames.values());
  EXPECT_EQ(twice.sample.target_mask.values(), s.target_mask.values());
}

TEST(Augment, RotationRoundTripIsSmall) {
  const std::size_t h = 40, w = 40;
  const Sample s = smooth_sample(h, w);
  Tensor frame(TensorShape{h, w});
  std::copy_n(s.window.frames.data().begin(), h * w, frame.data().begin());
  const Tensor back = warp_bilinear(warp_bilinear(frame, Affine2D::rotation(10, h, w)), Affine2D::rotation(-10, h, w));
  double worst = 0;
  for (std::size_t y = 2; y < h - 2; ++y)
    for (std::size_t x = 2; x < w - 2; ++x) {
      // Corners rotate out of frame; compare inside the inscribed circle.
      const double dx = static_cast<double>(x) - 19.5, dy = static_cast<double>(y) - 19.5;
      if (dx * dx + dy * dy > 17.0 * 17.0) continue;
      worst = std::max(worst, static_cast<double>(std::abs(back.at({y, x}) - frame.at({y, x}))));
    }
  EXPECT_LT(worst, 0.05);
}

TEST(Augment, SameMapOnEveryFrameAndMask) {
  Sample s = smooth_sample(24, 24);
  for (std::size_t t = 1; t < 4; ++t)
    std::copy_n(s.window.frames.data().begin(), 24 * 24, s.window.frames.data().begin() + static_cast<long>(t * 576));
  AugmentConfig all;
  all.per_transform_prob = 1.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CounterRng rng(seed);
    const AugmentResult r = augment(s, all, rng);
    ASSERT_TRUE(r.applied);
    const auto f = r.sample.window.frames.data();
    for (std::size_t t = 1; t < 4; ++t) ASSERT_TRUE(std::equal(f.begin(), f.begin() + 576, f.begin() + t * 576));
    EXPECT_EQ(r.sample.target_mask.values(), warp_nearest(s.target_mask, r.transform).values());
    for (float v : r.sample.target_mask.data()) ASSERT_TRUE(v == 0.0f || v == 1.0f);
  }
}

TEST(Synth, DeterministicAndContrasted) {
  SynthConfig sc;
  double fg_minus_bg_min = 1.0, frac_min = 1.0, frac_max = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CounterRng a(seed), b(seed);
    const Sequence s1 = synthesize(sc, a), s2 = synthesize(sc, b);
    ASSERT_EQ(s1.frames.size(), 12u);
    ASSERT_EQ(s1.frames[0].values(), s2.frames[0].values());
    double fg = 0, bg = 0, nf = 0, nb = 0;
    for (std::size_t i = 0; i < s1.frames.size(); ++i)
      for (std::size_t k = 0; k < s1.frames[i].numel(); ++k) {
        if (s1.masks[i][k] > 0) {
          fg += s1.frames[i][k];
          ++nf;
        } else {
          bg += s1.frames[i][k];
          ++nb;
        }
      }
    fg_minus_bg_min = std::min(fg_minus_bg_min, bg / nb - fg / nf);
    const double frac = nf / (nf + nb);
    frac_min = std::min(frac_min, frac);
    frac_max = std::max(frac_max, frac);
  }
  EXPECT_GE(fg_minus_bg_min, sc.depth_min / 2);
  EXPECT_GE(frac_min, 0.01);
  EXPECT_LE(frac_max, 0.15);
}

TEST(Synth, MaskDarkerPerFrame) {
  const Sequence s = labelled_sequence(12, 21, 64);
  for (std::size_t i = 0; i < s.frames.size(); ++i) {
    double fg = 0, bg = 0, nf = 0, nb = 0;
    for (std::size_t k = 0; k < s.frames[i].numel(); ++k) (s.masks[i][k] > 0 ? fg : bg) += s.frames[i][k],
                                                           (s.masks[i][k] > 0 ? nf : nb) += 1;
    EXPECT_LT(fg / nf, bg / nb);
  }
}

TEST(Synth, NoVesselsMeansEmptyMasks) {
  SynthConfig sc;
  sc.vessels_min = sc.vessels_max = 0;
  CounterRng rng(3);
  const Sequence s = synthesize(sc, rng);
  for (const auto& m : s.masks)
    for (float v : m.data()) ASSERT_EQ(v, 0.0f);
}

TEST(Preprocess, SameSizeIdentityAndConstantPreserved) {
  const Sequence s = labelled_sequence(2, 9, 32);
  const Sequence same = preprocess(s, 32, 32);
  EXPECT_EQ(same.frames[0].values(), s.frames[0].values());
  const Tensor c(TensorShape{16, 16}, 0.375f);
  const Tensor round = resize_bilinear(resize_bilinear(c, 32, 32), 16, 16);
  for (float v : round.data()) EXPECT_EQ(v, 0.375f);
}

TEST(Preprocess, MaskAreaScalesWithResize) {
  CounterRng rng(10);
  for (int t = 0; t < 20; ++t) {
    Tensor m(TensorShape{40, 40});
    const double cx = rng.uniform(12, 28), cy = rng.uniform(12, 28), r = rng.uniform(4, 10);
    for (std::size_t y = 0; y < 40; ++y)
      for (std::size_t x = 0; x < 40; ++x)
        m.at({y, x}) = std::hypot(static_cast<double>(x) - cx, static_cast<double>(y) - cy) <= r ? 1.0f : 0.0f;
    double before = 0, after = 0;
    for (float v : m.data()) before += v;
    const Tensor r64 = resize_nearest(m, 64, 64);
    for (float v : r64.data()) after += v;
    EXPECT_NEAR(after, before * (64.0 * 64.0) / (40.0 * 40.0), 0.2 * before * (64.0 * 64.0) / (40.0 * 40.0));
  }
}

TEST(Manifest, RoundTripAndSplits) {
  const fs::path dir = fresh_dir("manifest");
  const std::vector<ManifestEntry> entries = {{"a", Split::train}, {"b", Split::val}, {"c", Split::test}};
  write_manifest(dir / "manifest.txt", entries);
  const auto back = read_manifest(dir / "manifest.txt");
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[1].dir, "b");
  EXPECT_EQ(back[2].split, Split::test);
  EXPECT_THROW(parse_split("holdout"), FormatError);
  const auto splits = default_splits(24);
  EXPECT_EQ(std::count(splits.begin(), splits.end(), Split::train), 12);
  EXPECT_EQ(std::count(splits.begin(), splits.end(), Split::val), 6);
  EXPECT_EQ(std::count(splits.begin(), splits.end(), Split::test), 6);
  fs::remove_all(dir);
}

TEST(Corpus, WritesLoadableSequences) {
  const fs::path dir = fresh_dir("corpus");
  SynthConfig sc;
  sc.frames = 5;
  sc.height = sc.width = 16;
  const auto entries = write_synthetic_corpus(dir, 4, sc, 3);
  ASSERT_EQ(entries.size(), 4u);
  const Sequence s = load_sequence(dir / entries[0].dir);
  EXPECT_EQ(s.frames.size(), 5u);
  EXPECT_EQ(s.masks.size(), 5u);
  fs::remove_all(dir);
}
