#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fcd/image.hpp"

namespace fcd::synthworld {

enum class Label { pristine, swap_a, swap_b, reenact };
enum class SwapMethod { a, b };
enum class Split { train, val, test };

std::string to_string(Label label);
Label label_from_string(const std::string& s);
std::string to_string(Split split);
Split split_from_string(const std::string& s);

// Latent parameters of one synthetic person. Face and context parameters are
// disjoint blocks: face parameters only affect pixels inside the face mask,
// context parameters only pixels outside it.
struct IdentitySpec {
  int identity_id = 0;
  std::vector<double> face_params;     // palette, eye/mouth geometry, texture
  std::vector<double> context_params;  // hair, context skin, ears, background
};

struct WorldConfig {
  int identities = 32;  // K
  int image_size = 64;  // H = W
  int frames_per_identity = 40;
  double swap_blend_width_a = 1.0;   // narrow feather
  double swap_grid_amp_a = 0.03;     // upsampling-style grid artifact
  double swap_blend_width_b = 3.0;   // wide feather
  double swap_color_transfer_b = 0.45;
  double noise_level = 0.02;
  uint64_t master_seed = 17;
  double train_fraction = 0.8;
  double val_fraction = 0.1;

  void validate() const;
};

struct FrameSample {
  Image image;
  Mask mask;  // 1 = face region
  int face_identity = 0;
  int context_identity = 0;
  Label label = Label::pristine;
  int64_t pose_seed = 0;
};

// K identity specs, a pure function of the master seed.
std::vector<IdentitySpec> generate_world(const WorldConfig& config);

FrameSample render_pristine(const IdentitySpec& spec, int64_t pose_seed, const WorldConfig& config);

// Re-renders the face region from `source` at the target's pose, feathered
// into the target. Pixels outside the mask are bit-identical to the target.
FrameSample apply_swap(const FrameSample& target, const IdentitySpec& source, SwapMethod method,
                       const WorldConfig& config);

// Perturbs expression only; identity labels and context pixels unchanged.
FrameSample apply_reenact(const FrameSample& target, const std::vector<IdentitySpec>& world,
                          int64_t expression_seed, const WorldConfig& config);

struct ManifestRecord {
  int64_t sample_id = 0;
  std::string image_path;  // relative to the manifest directory
  std::string mask_path;
  int face_identity = 0;
  int context_identity = 0;
  Label label = Label::pristine;
  Split split = Split::train;
  bool method_seen = true;
};

struct StoredSample {
  ManifestRecord meta;
  FrameSample frame;
};

// Writes rasters plus one tab-separated manifest line per sample. Samples of
// unseen manipulation methods are only ever assigned to the test split.
void write_manifest(const std::vector<StoredSample>& samples, const std::string& out_dir);
std::vector<StoredSample> read_manifest(const std::string& manifest_path);
std::vector<ManifestRecord> read_manifest_records(const std::string& manifest_path);

// Renders the full dataset: per pristine frame one seen-method swap, one
// unseen-method swap on the test split, and one reenactment. Deterministic
// in (config, master_seed); generation parallelizes per sample.
std::vector<StoredSample> build_dataset(const WorldConfig& config, int threads);

std::vector<ManifestRecord> generate_dataset(const WorldConfig& config, const std::string& out_dir,
                                             int threads);

// A2 sanity probe: nearest-centroid identity accuracy using only context
// pixels (train centroids on train-split frames, evaluate on test split).
double context_centroid_accuracy(const std::vector<StoredSample>& samples);

}  // namespace fcd::synthworld
