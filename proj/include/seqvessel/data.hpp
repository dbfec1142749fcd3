#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqvessel/rng.hpp"
#include "seqvessel/svsnet.hpp"
#include "seqvessel/tensor.hpp"

namespace seqvessel {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Binary PGM (P5, maxval 255).

struct GrayImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

/// [H,W] tensor with values / 255.
Tensor image_to_tensor(const GrayImage& image);
/// Rounds clamp(v, 0, 1) * 255.
GrayImage tensor_to_image(const Tensor& t);
/// 1 where the pixel is >= 128.
Tensor image_to_mask(const GrayImage& image);
GrayImage mask_to_image(const Tensor& mask);

// ---------------------------------------------------------------------------

struct Sequence {
  std::string id;
  std::vector<Tensor> frames;  // [H,W] in [0,1]
  std::vector<Tensor> masks;   // empty, or one binary [H,W] per frame
};

/// Reads frame_0001.pgm.. (and optional mask_0001.pgm..) from `dir`.
Sequence load_sequence(const std::filesystem::path& dir);
void write_sequence(const Sequence& seq, const std::filesystem::path& dir);

struct Sample {
  FrameWindow window;
  Tensor target_mask;  // [H,W]; undefined for unlabeled inference windows
  std::string sequence_id;
  std::size_t center = 0;  // 1-based index of the predicted frame
};

enum class Purpose { train, infer };

/// Window of `length` frames predicting frame i: F[i-length+2] .. F[i+1].
/// Train: only windows fully inside the sequence (i in [length-1, n-1] for
/// 1-based i). Infer: one window per frame, out-of-range neighbours replaced
/// by the nearest edge frame.
std::vector<Sample> make_windows(const Sequence& seq, Purpose purpose, std::size_t length = 4);

// ---------------------------------------------------------------------------
// Geometry

/// Maps output pixel (x, y) to input coordinates:
///   x_in = a x + b y + tx,  y_in = c x + d y + ty.
struct Affine2D {
  double a = 1, b = 0, c = 0, d = 1, tx = 0, ty = 0;

  static Affine2D identity() { return {}; }
  /// Inverse map of a rotation by `degrees` about the image center.
  static Affine2D rotation(double degrees, std::size_t height, std::size_t width);
  bool is_identity() const { return a == 1 && b == 0 && c == 0 && d == 1 && tx == 0 && ty == 0; }
};

/// Bilinear sampling with edge clamping.
Tensor warp_bilinear(const Tensor& image, const Affine2D& map);
/// Nearest-neighbour sampling with edge clamping, then binarized at 0.5.
Tensor warp_nearest(const Tensor& mask, const Affine2D& map);

/// Half-pixel-center bilinear resize with edge clamping.
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);
Tensor resize_nearest(const Tensor& mask, std::size_t height, std::size_t width);

struct AugmentConfig {
  double rotate_deg = 10.0;     // angle drawn from [-rotate_deg, rotate_deg]
  bool flip_h = true;
  bool flip_v = true;
  double scale_factor = 0.2;    // zoom drawn from [1 - f, 1 + f]
  bool crop = true;             // sub-window side drawn from [1 - f, 1]
  double shear_deg = 5.0;       // shear angle drawn from [-shear_deg, shear_deg]
  double per_transform_prob = 0.5;
};

struct AugmentResult {
  Sample sample;
  Affine2D transform;  // shared by every frame and the mask
  bool applied = false;
};

/// Each enabled transform fires independently with per_transform_prob; the
/// fired ones compose into a single map about the image center. Frames are
/// resampled bilinearly, the mask by nearest neighbour.
AugmentResult augment(const Sample& sample, const AugmentConfig& cfg, CounterRng& rng);

// ---------------------------------------------------------------------------

struct SynthConfig {
  std::size_t height = 64, width = 64;
  std::size_t frames = 12;
  std::size_t vessels_min = 2, vessels_max = 2;
  double radius_min = 1.2, radius_max = 2.2;          // px
  double depth_min = 0.2, depth_max = 0.35;           // intensity drop at the centerline
  double vessel_velocity = 1.5;                       // px / frame
  double background_velocity = 0.5;                   // px / frame
  double photon_scale = 200.0;                        // Poisson lambda
  void validate() const;
};

/// Synthetic angiography-like sequence: a drifting bright background with
/// dark soft blobs, dark tubular vessels moving on their own trajectories,
/// and Poisson noise. Masks mark pixels within the radius of a centerline.
Sequence synthesize(const SynthConfig& cfg, CounterRng& rng, std::string id = "synthetic");

/// Resizes frames bilinearly and masks by nearest neighbour.
Sequence preprocess(const Sequence& seq, std::size_t height, std::size_t width);

// ---------------------------------------------------------------------------
// Corpus manifest: "<sequence_dir> <split>" per line.

enum class Split { train, val, test };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct ManifestEntry {
  std::string dir;  // relative to the manifest's directory
  Split split = Split::train;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& file);
void write_manifest(const std::filesystem::path& file, const std::vector<ManifestEntry>& entries);

/// Splits n sequences in order as round(n/2) train, round(n/4) val, rest test.
std::vector<Split> default_splits(std::size_t n);

/// Writes `count` synthetic sequences seq_0001.. plus manifest.txt under
/// `root`; sequence k uses CounterRng(seed).split(k).
std::vector<ManifestEntry> write_synthetic_corpus(const std::filesystem::path& root, std::size_t count,
                                                  const SynthConfig& cfg, std::uint64_t seed);

}  // namespace seqvessel
