#include "fcd/synthworld.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "fcd/common.hpp"
#include "fcd/rng.hpp"

namespace fcd::synthworld {

namespace fs = std::filesystem;

std::string to_string(Label label) {
  switch (label) {
    case Label::pristine: return "pristine";
    case Label::swap_a: return "swap_A";
    case Label::swap_b: return "swap_B";
    case Label::reenact: return "reenact";
  }
  return "?";
}

Label label_from_string(const std::string& s) {
  if (s == "pristine") return Label::pristine;
  if (s == "swap_A") return Label::swap_a;
  if (s == "swap_B") return Label::swap_b;
  if (s == "reenact") return Label::reenact;
  throw Error("unknown label: " + s);
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw Error("unknown split: " + s);
}

void WorldConfig::validate() const {
  check_arg(identities >= 2, "world config: need at least 2 identities (swaps need two)");
  check_arg(image_size >= 32, "world config: image_size must be >= 32");
  check_arg(frames_per_identity >= 1, "world config: frames_per_identity must be >= 1");
  check_arg(swap_blend_width_a >= 0 && swap_blend_width_b >= 0, "world config: blend widths must be >= 0");
  check_arg(noise_level >= 0, "world config: noise_level must be >= 0");
  check_arg(train_fraction > 0 && val_fraction >= 0 && train_fraction + val_fraction < 1.0,
            "world config: split fractions must leave room for a test split");
}

namespace {

// Face parameter block layout.
enum FaceParam {
  kSkinR, kSkinG, kSkinB,
  kEyeR, kEyeG, kEyeB,
  kMouthR, kMouthG, kMouthB,
  kEyeDx, kEyeDy, kEyeSize,
  kMouthW, kMouthH,
  kTexFreq, kTexAmp, kTexAngle, kTexPhase,
  kFaceParamCount
};

// Context parameter block layout.
enum ContextParam {
  kHairR, kHairG, kHairB, kHairHeight,
  kCtxSkinR, kCtxSkinG, kCtxSkinB,
  kEarSize,
  kBgR, kBgG, kBgB, kBgGrad,
  kContextParamCount
};

constexpr double kPi = 3.14159265358979323846;

struct Pose {
  double cx, cy;          // head center
  double head_a, head_b;  // head semi-axes
  double face_cx, face_cy, face_a, face_b;
  double bg_angle;
  double mouth_open, eye_open;  // expression scalars
  double bg_r, bg_g, bg_b;      // per-frame backdrop component
  double hair_shade[3];
  double ctx_skin_shade[3];
};

Pose derive_pose(int64_t pose_seed, int image_size) {
  Rng rng(seed_chain(static_cast<uint64_t>(pose_seed), {0x706f7365ull}));  // "pose"
  Pose p;
  double s = image_size;
  p.cx = 0.5 * s + rng.uniform(-0.05, 0.05) * s;
  p.cy = 0.5 * s + rng.uniform(-0.04, 0.04) * s;
  p.head_a = 0.22 * s * (1.0 + rng.uniform(-0.08, 0.08));
  p.head_b = 0.27 * s * (1.0 + rng.uniform(-0.08, 0.08));
  p.bg_angle = rng.uniform(0.0, kPi);
  p.mouth_open = rng.uniform(0.6, 1.4);
  p.eye_open = rng.uniform(0.75, 1.25);
  p.bg_r = rng.uniform(0.10, 0.90);
  p.bg_g = rng.uniform(0.10, 0.90);
  p.bg_b = rng.uniform(0.10, 0.90);
  for (double& v : p.hair_shade) v = rng.uniform(0.72, 1.28);
  for (double& v : p.ctx_skin_shade) v = rng.uniform(0.80, 1.20);
  p.face_cx = p.cx;
  p.face_cy = p.cy + 0.06 * p.head_b;
  p.face_a = 0.64 * p.head_a;
  p.face_b = 0.62 * p.head_b;
  return p;
}

inline bool in_ellipse(double y, double x, double cy, double cx, double ay, double ax) {
  double dy = (y - cy) / ay, dx = (x - cx) / ax;
  return dx * dx + dy * dy <= 1.0;
}

inline double unit_noise(uint64_t seed, int region, int y, int x, int c) {
  uint64_t h = mix64(seed ^ mix64((static_cast<uint64_t>(region) << 40) ^
                                  (static_cast<uint64_t>(y) << 20) ^ (static_cast<uint64_t>(x) << 2) ^
                                  static_cast<uint64_t>(c)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

struct Rgb {
  double r, g, b;
};

Rgb context_pixel(const std::vector<double>& cp, const Pose& p, int image_size, int y, int x) {
  const double hairline = p.cy - p.head_b * (1.0 - 2.0 * cp[kHairHeight]);
  Rgb out;
  bool in_head = in_ellipse(y, x, p.cy, p.cx, p.head_b, p.head_a);
  bool in_hair = y <= hairline && in_ellipse(y, x, p.cy, p.cx, p.head_b * 1.10, p.head_a * 1.10);
  double ear_r = cp[kEarSize] * p.head_a;
  bool in_ear = in_ellipse(y, x, p.cy + 0.05 * p.head_b, p.cx - 1.02 * p.head_a, 1.7 * ear_r, ear_r) ||
                in_ellipse(y, x, p.cy + 0.05 * p.head_b, p.cx + 1.02 * p.head_a, 1.7 * ear_r, ear_r);
  if (in_hair) {
    out = {cp[kHairR] * p.hair_shade[0], cp[kHairG] * p.hair_shade[1], cp[kHairB] * p.hair_shade[2]};
  } else if (in_ear) {
    out = {cp[kCtxSkinR] * 0.88 * p.ctx_skin_shade[0], cp[kCtxSkinG] * 0.88 * p.ctx_skin_shade[1],
           cp[kCtxSkinB] * 0.88 * p.ctx_skin_shade[2]};
  } else if (in_head) {
    double dy = (y - p.cy) / p.head_b, dx = (x - p.cx) / p.head_a;
    double shade = 1.0 - 0.15 * (dx * dx + dy * dy);
    out = {cp[kCtxSkinR] * shade * p.ctx_skin_shade[0], cp[kCtxSkinG] * shade * p.ctx_skin_shade[1],
           cp[kCtxSkinB] * shade * p.ctx_skin_shade[2]};
  } else {
    double proj = (x * std::cos(p.bg_angle) + y * std::sin(p.bg_angle)) / (1.5 * image_size);
    double centered = proj - 0.33 * (std::cos(p.bg_angle) + std::sin(p.bg_angle));
    double g = cp[kBgGrad] * centered;
    // The backdrop is mostly per-frame; the identity leaves only a weak tint,
    // keeping the context cue present but subordinate to the face cue.
    out = {0.20 * cp[kBgR] + 0.80 * p.bg_r + g, 0.20 * cp[kBgG] + 0.80 * p.bg_g + g,
           0.20 * cp[kBgB] + 0.80 * p.bg_b + g};
  }
  return out;
}

Rgb face_pixel(const std::vector<double>& fp, const Pose& p, double mouth_open, double eye_open, int y,
               int x) {
  double arg = fp[kTexFreq] * (x * std::cos(fp[kTexAngle]) + y * std::sin(fp[kTexAngle])) + fp[kTexPhase];
  Rgb out = {fp[kSkinR] + fp[kTexAmp] * std::sin(arg),
             fp[kSkinG] + fp[kTexAmp] * std::sin(arg + 2.1),
             fp[kSkinB] + fp[kTexAmp] * std::sin(arg + 4.2)};

  double ex = fp[kEyeSize] * p.face_a;
  double ey = 0.75 * fp[kEyeSize] * p.face_b * eye_open;
  double eye_y = p.face_cy - fp[kEyeDy] * p.face_b;
  double eye_xl = p.face_cx - fp[kEyeDx] * p.face_a;
  double eye_xr = p.face_cx + fp[kEyeDx] * p.face_a;
  bool in_left = in_ellipse(y, x, eye_y, eye_xl, ey, ex);
  bool in_right = in_ellipse(y, x, eye_y, eye_xr, ey, ex);
  if (in_left || in_right) {
    double cx = in_left ? eye_xl : eye_xr;
    bool pupil = in_ellipse(y, x, eye_y, cx, 0.42 * ey, 0.42 * ex);
    double f = pupil ? 0.3 : 1.0;
    return {fp[kEyeR] * f, fp[kEyeG] * f, fp[kEyeB] * f};
  }
  if (in_ellipse(y, x, p.face_cy + 0.45 * p.face_b, p.face_cx, fp[kMouthH] * p.face_b * mouth_open,
                 fp[kMouthW] * p.face_a)) {
    return {fp[kMouthR], fp[kMouthG], fp[kMouthB]};
  }
  if (in_ellipse(y, x, p.face_cy + 0.10 * p.face_b, p.face_cx, 0.16 * p.face_b, 0.09 * p.face_a)) {
    return {out.r * 0.90, out.g * 0.90, out.b * 0.90};
  }
  return out;
}

// Renders only the face-region values (pre-quantization) for the given
// parameters at the given pose; used by the manipulators.
void render_face_region(const std::vector<double>& face_params, const Pose& pose, double mouth_open,
                        double eye_open, const Mask& mask, const WorldConfig& config, uint64_t noise_seed,
                        std::vector<double>& out_rgb) {
  int s = config.image_size;
  out_rgb.assign(static_cast<size_t>(s) * s * 3, 0.0);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      if (!mask.at(y, x)) continue;
      Rgb v = face_pixel(face_params, pose, mouth_open, eye_open, y, x);
      double* px = &out_rgb[(static_cast<size_t>(y) * s + x) * 3];
      px[0] = v.r + config.noise_level * (2.0 * unit_noise(noise_seed, 1, y, x, 0) - 1.0);
      px[1] = v.g + config.noise_level * (2.0 * unit_noise(noise_seed, 1, y, x, 1) - 1.0);
      px[2] = v.b + config.noise_level * (2.0 * unit_noise(noise_seed, 1, y, x, 2) - 1.0);
    }
}

// L1 distance to the nearest zero pixel; mask==0 cells get 0.
std::vector<int> mask_interior_distance(const Mask& mask) {
  const int h = mask.height, w = mask.width;
  const int inf = h + w + 2;
  std::vector<int> d(static_cast<size_t>(h) * w, 0);
  auto at = [&](int y, int x) -> int& { return d[static_cast<size_t>(y) * w + x]; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask.at(y, x)) {
        at(y, x) = 0;
        continue;
      }
      int best = inf;
      if (y == 0 || x == 0) best = 1;  // image border counts as outside
      if (y > 0) best = std::min(best, at(y - 1, x) + 1);
      if (x > 0) best = std::min(best, at(y, x - 1) + 1);
      at(y, x) = best;
    }
  for (int y = h - 1; y >= 0; --y)
    for (int x = w - 1; x >= 0; --x) {
      if (!mask.at(y, x)) continue;
      int best = at(y, x);
      if (y == h - 1 || x == w - 1) best = std::min(best, 1);
      if (y < h - 1) best = std::min(best, at(y + 1, x) + 1);
      if (x < w - 1) best = std::min(best, at(y, x + 1) + 1);
      at(y, x) = best;
    }
  return d;
}

uint64_t pose_noise_seed(int64_t pose_seed) {
  return seed_chain(static_cast<uint64_t>(pose_seed), {0x6e6f697365ull});  // "noise"
}

FrameSample composite_face(const FrameSample& target, const std::vector<double>& face_rgb,
                           double blend_width, Label label, int new_face_identity) {
  FrameSample out = target;
  const int s = target.image.width;
  std::vector<int> dist = mask_interior_distance(target.mask);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      if (!target.mask.at(y, x)) continue;
      double alpha = 1.0;
      if (blend_width > 0) {
        alpha = (dist[static_cast<size_t>(y) * s + x] - 0.5) / blend_width;
        alpha = std::clamp(alpha, 0.0, 1.0);
      }
      const double* src = &face_rgb[(static_cast<size_t>(y) * s + x) * 3];
      for (int c = 0; c < 3; ++c) {
        double tgt = target.image.at(y, x, c);
        out.image.at(y, x, c) = quantize_u8(alpha * src[c] + (1.0 - alpha) * tgt);
      }
    }
  out.label = label;
  out.face_identity = new_face_identity;
  return out;
}

}  // namespace

std::vector<IdentitySpec> generate_world(const WorldConfig& config) {
  config.validate();
  std::vector<IdentitySpec> specs;
  specs.reserve(static_cast<size_t>(config.identities));
  for (int id = 0; id < config.identities; ++id) {
    Rng rng(seed_chain(config.master_seed, {0x6964ull, static_cast<uint64_t>(id)}));  // "id"
    IdentitySpec spec;
    spec.identity_id = id;
    spec.face_params.resize(kFaceParamCount);
    auto& f = spec.face_params;
    f[kSkinR] = rng.uniform(0.35, 0.95);
    f[kSkinG] = rng.uniform(0.25, 0.85);
    f[kSkinB] = rng.uniform(0.20, 0.80);
    f[kEyeR] = rng.uniform(0.05, 0.90);
    f[kEyeG] = rng.uniform(0.05, 0.90);
    f[kEyeB] = rng.uniform(0.05, 0.90);
    f[kMouthR] = rng.uniform(0.40, 0.95);
    f[kMouthG] = rng.uniform(0.10, 0.50);
    f[kMouthB] = rng.uniform(0.10, 0.50);
    f[kEyeDx] = rng.uniform(0.30, 0.48);
    f[kEyeDy] = rng.uniform(0.18, 0.38);
    f[kEyeSize] = rng.uniform(0.10, 0.18);
    f[kMouthW] = rng.uniform(0.22, 0.42);
    f[kMouthH] = rng.uniform(0.05, 0.11);
    f[kTexFreq] = rng.uniform(0.25, 1.20);
    f[kTexAmp] = rng.uniform(0.03, 0.10);
    f[kTexAngle] = rng.uniform(0.0, kPi);
    f[kTexPhase] = rng.uniform(0.0, 2.0 * kPi);

    spec.context_params.resize(kContextParamCount);
    auto& c = spec.context_params;
    c[kHairR] = rng.uniform(0.05, 0.50);
    c[kHairG] = rng.uniform(0.05, 0.45);
    c[kHairB] = rng.uniform(0.05, 0.40);
    c[kHairHeight] = rng.uniform(0.20, 0.45);
    c[kCtxSkinR] = rng.uniform(0.60, 0.85);
    c[kCtxSkinG] = rng.uniform(0.45, 0.65);
    c[kCtxSkinB] = rng.uniform(0.35, 0.55);
    c[kEarSize] = rng.uniform(0.12, 0.22);
    c[kBgR] = rng.uniform(0.05, 0.95);
    c[kBgG] = rng.uniform(0.05, 0.95);
    c[kBgB] = rng.uniform(0.05, 0.95);
    c[kBgGrad] = rng.uniform(0.05, 0.30);
    specs.push_back(std::move(spec));
  }
  return specs;
}

FrameSample render_pristine(const IdentitySpec& spec, int64_t pose_seed, const WorldConfig& config) {
  config.validate();
  check_arg(spec.face_params.size() == kFaceParamCount && spec.context_params.size() == kContextParamCount,
            "render_pristine: spec not from generate_world");
  const int s = config.image_size;
  Pose pose = derive_pose(pose_seed, s);
  uint64_t noise_seed = pose_noise_seed(pose_seed);

  FrameSample frame;
  frame.image = Image(s, s, 3);
  frame.mask = Mask(s, s);
  frame.face_identity = spec.identity_id;
  frame.context_identity = spec.identity_id;
  frame.label = Label::pristine;
  frame.pose_seed = pose_seed;

  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      bool face = in_ellipse(y, x, pose.face_cy, pose.face_cx, pose.face_b, pose.face_a);
      frame.mask.at(y, x) = face ? 1 : 0;
      Rgb v = face ? face_pixel(spec.face_params, pose, pose.mouth_open, pose.eye_open, y, x)
                   : context_pixel(spec.context_params, pose, s, y, x);
      int region = face ? 1 : 0;
      double amp = config.noise_level * (face ? 1.0 : 2.0);  // background clutter
      frame.image.at(y, x, 0) =
          quantize_u8(v.r + amp * (2.0 * unit_noise(noise_seed, region, y, x, 0) - 1.0));
      frame.image.at(y, x, 1) =
          quantize_u8(v.g + amp * (2.0 * unit_noise(noise_seed, region, y, x, 1) - 1.0));
      frame.image.at(y, x, 2) =
          quantize_u8(v.b + amp * (2.0 * unit_noise(noise_seed, region, y, x, 2) - 1.0));
    }
  return frame;
}

FrameSample apply_swap(const FrameSample& target, const IdentitySpec& source, SwapMethod method,
                       const WorldConfig& config) {
  check_arg(target.label == Label::pristine, "apply_swap: target must be pristine");
  check_arg(source.identity_id != target.face_identity,
            "apply_swap: source identity equals target face identity");
  const int s = config.image_size;
  check_arg(target.image.width == s && target.image.height == s, "apply_swap: target size mismatch");

  Pose pose = derive_pose(target.pose_seed, s);
  std::vector<double> face_rgb;
  render_face_region(source.face_params, pose, pose.mouth_open, pose.eye_open, target.mask, config,
                     pose_noise_seed(target.pose_seed), face_rgb);

  double blend = config.swap_blend_width_a;
  if (method == SwapMethod::a) {
    // Method A leaves a high-frequency resampling grid inside the face.
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        if (!target.mask.at(y, x)) continue;
        double g = config.swap_grid_amp_a * (((x + y) & 1) ? 1.0 : -1.0);
        double* px = &face_rgb[(static_cast<size_t>(y) * s + x) * 3];
        px[0] += g;
        px[1] += g;
        px[2] += g;
      }
  }
  if (method == SwapMethod::b) {
    blend = config.swap_blend_width_b;
    // Mild color transfer toward the target's face palette.
    double mean_t[3] = {0, 0, 0}, mean_s[3] = {0, 0, 0};
    size_t n = 0;
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        if (!target.mask.at(y, x)) continue;
        const double* src = &face_rgb[(static_cast<size_t>(y) * s + x) * 3];
        for (int c = 0; c < 3; ++c) {
          mean_t[c] += target.image.at(y, x, c);
          mean_s[c] += src[c];
        }
        ++n;
      }
    if (n > 0) {
      for (int c = 0; c < 3; ++c) {
        double shift = config.swap_color_transfer_b * (mean_t[c] - mean_s[c]) / static_cast<double>(n);
        for (int y = 0; y < s; ++y)
          for (int x = 0; x < s; ++x)
            if (target.mask.at(y, x)) face_rgb[(static_cast<size_t>(y) * s + x) * 3 + c] += shift;
      }
    }
  }
  return composite_face(target, face_rgb, blend, method == SwapMethod::a ? Label::swap_a : Label::swap_b,
                        source.identity_id);
}

FrameSample apply_reenact(const FrameSample& target, const std::vector<IdentitySpec>& world,
                          int64_t expression_seed, const WorldConfig& config) {
  check_arg(target.label == Label::pristine, "apply_reenact: target must be pristine");
  const IdentitySpec* spec = nullptr;
  for (const auto& s : world)
    if (s.identity_id == target.face_identity) spec = &s;
  check_arg(spec != nullptr, "apply_reenact: target identity not found in world");

  const int s = config.image_size;
  Pose pose = derive_pose(target.pose_seed, s);
  Rng rng(seed_chain(static_cast<uint64_t>(expression_seed), {0x65787072ull}));  // "expr"
  double mouth_open = rng.uniform(0.30, 1.90);
  double eye_open = rng.uniform(0.50, 1.45);

  std::vector<double> face_rgb;
  render_face_region(spec->face_params, pose, mouth_open, eye_open, target.mask, config,
                     pose_noise_seed(target.pose_seed), face_rgb);
  FrameSample out =
      composite_face(target, face_rgb, config.swap_blend_width_a, Label::reenact, target.face_identity);
  return out;
}

namespace {

std::string sample_stem(int64_t sample_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%06lld", static_cast<long long>(sample_id));
  return buf;
}

constexpr const char* kManifestHeader =
    "sample_id\timage\tmask\tface_identity\tcontext_identity\tlabel\tsplit\tmethod_seen";

}  // namespace

void write_manifest(const std::vector<StoredSample>& samples, const std::string& out_dir) {
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "masks");
  std::ofstream manifest(fs::path(out_dir) / "manifest.tsv");
  check(manifest.good(), "cannot open manifest for writing in " + out_dir);
  manifest << kManifestHeader << "\n";
  for (const auto& s : samples) {
    check(s.meta.method_seen || s.meta.split == Split::test,
          "manifest: unseen-method sample " + std::to_string(s.meta.sample_id) + " must be in the test split");
    write_ppm(s.frame.image, (fs::path(out_dir) / s.meta.image_path).string());
    write_pgm(s.frame.mask, (fs::path(out_dir) / s.meta.mask_path).string());
    manifest << s.meta.sample_id << '\t' << s.meta.image_path << '\t' << s.meta.mask_path << '\t'
             << s.meta.face_identity << '\t' << s.meta.context_identity << '\t' << to_string(s.meta.label)
             << '\t' << to_string(s.meta.split) << '\t' << (s.meta.method_seen ? 1 : 0) << "\n";
  }
  check(manifest.good(), "manifest write failed in " + out_dir);
}

std::vector<ManifestRecord> read_manifest_records(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  check(in.good(), "cannot open manifest: " + manifest_path);
  std::string line;
  check(static_cast<bool>(std::getline(in, line)), "empty manifest: " + manifest_path);
  check(line == kManifestHeader, "unexpected manifest header in " + manifest_path);
  std::vector<ManifestRecord> records;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    check(fields.size() == 8,
          "manifest " + manifest_path + ": malformed record at line " + std::to_string(line_no));
    ManifestRecord r;
    r.sample_id = std::stoll(fields[0]);
    r.image_path = fields[1];
    r.mask_path = fields[2];
    r.face_identity = std::stoi(fields[3]);
    r.context_identity = std::stoi(fields[4]);
    r.label = label_from_string(fields[5]);
    r.split = split_from_string(fields[6]);
    r.method_seen = fields[7] == "1";
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<StoredSample> read_manifest(const std::string& manifest_path) {
  std::vector<ManifestRecord> records = read_manifest_records(manifest_path);
  fs::path dir = fs::path(manifest_path).parent_path();
  std::vector<StoredSample> samples;
  samples.reserve(records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    StoredSample s;
    s.meta = records[i];
    try {
      s.frame.image = read_ppm((dir / s.meta.image_path).string());
      s.frame.mask = read_pgm((dir / s.meta.mask_path).string());
    } catch (const Error& e) {
      throw Error("sample " + std::to_string(s.meta.sample_id) + ": " + e.what());
    }
    s.frame.face_identity = s.meta.face_identity;
    s.frame.context_identity = s.meta.context_identity;
    s.frame.label = s.meta.label;
    s.frame.pose_seed = 0;  // not persisted in the manifest schema
    samples.push_back(std::move(s));
  }
  return samples;
}

namespace {

struct SampleJob {
  int64_t sample_id;
  int identity;
  int frame_index;
  Label label;
  int swap_source = -1;
  Split split = Split::train;
};

std::vector<SampleJob> enumerate_jobs(const WorldConfig& config) {
  std::vector<SampleJob> jobs;
  const int f_total = config.frames_per_identity;
  const int f_train = static_cast<int>(std::lround(config.train_fraction * f_total));
  const int f_val = static_cast<int>(std::lround(config.val_fraction * f_total));
  int64_t next_id = 0;
  for (int id = 0; id < config.identities; ++id) {
    for (int f = 0; f < f_total; ++f) {
      Split split = f < f_train            ? Split::train
                    : f < f_train + f_val ? Split::val
                                          : Split::test;
      int src = static_cast<int>(seed_chain(config.master_seed, {0x737263ull, static_cast<uint64_t>(id),
                                                                 static_cast<uint64_t>(f)}) %
                                 static_cast<uint64_t>(config.identities - 1));
      if (src >= id) ++src;  // skip self
      jobs.push_back({next_id++, id, f, Label::pristine, -1, split});
      jobs.push_back({next_id++, id, f, Label::swap_a, src, split});
      if (split == Split::test) jobs.push_back({next_id++, id, f, Label::swap_b, src, split});
      jobs.push_back({next_id++, id, f, Label::reenact, -1, split});
    }
  }
  return jobs;
}

}  // namespace

std::vector<StoredSample> build_dataset(const WorldConfig& config, int threads) {
  config.validate();
  std::vector<IdentitySpec> specs = generate_world(config);
  std::vector<SampleJob> jobs = enumerate_jobs(config);
  std::vector<StoredSample> samples(jobs.size());

  parallel_for(static_cast<int64_t>(jobs.size()), threads, [&](int64_t lo, int64_t hi, int) {
    for (int64_t i = lo; i < hi; ++i) {
      const SampleJob& job = jobs[static_cast<size_t>(i)];
      int64_t pose_seed = static_cast<int64_t>(
          seed_chain(config.master_seed,
                     {0x66726d65ull, static_cast<uint64_t>(job.identity), static_cast<uint64_t>(job.frame_index)}) >>
          1);
      FrameSample frame = render_pristine(specs[static_cast<size_t>(job.identity)], pose_seed, config);
      switch (job.label) {
        case Label::pristine:
          break;
        case Label::swap_a:
          frame = apply_swap(frame, specs[static_cast<size_t>(job.swap_source)], SwapMethod::a, config);
          break;
        case Label::swap_b:
          frame = apply_swap(frame, specs[static_cast<size_t>(job.swap_source)], SwapMethod::b, config);
          break;
        case Label::reenact: {
          int64_t expr_seed = static_cast<int64_t>(
              seed_chain(config.master_seed, {0x72656e61ull, static_cast<uint64_t>(job.identity),
                                              static_cast<uint64_t>(job.frame_index)}) >>
              1);
          frame = apply_reenact(frame, specs, expr_seed, config);
          break;
        }
      }
      StoredSample s;
      s.meta.sample_id = job.sample_id;
      s.meta.image_path = "images/" + sample_stem(job.sample_id) + ".ppm";
      s.meta.mask_path = "masks/" + sample_stem(job.sample_id) + ".pgm";
      s.meta.face_identity = frame.face_identity;
      s.meta.context_identity = frame.context_identity;
      s.meta.label = frame.label;
      s.meta.split = job.split;
      s.meta.method_seen = frame.label != Label::swap_b;
      s.frame = std::move(frame);
      samples[static_cast<size_t>(i)] = std::move(s);
    }
  });
  return samples;
}

std::vector<ManifestRecord> generate_dataset(const WorldConfig& config, const std::string& out_dir,
                                             int threads) {
  std::vector<StoredSample> samples = build_dataset(config, threads);
  write_manifest(samples, out_dir);
  std::vector<ManifestRecord> records;
  records.reserve(samples.size());
  for (const auto& s : samples) records.push_back(s.meta);
  return records;
}

double context_centroid_accuracy(const std::vector<StoredSample>& samples) {
  // 12-dim feature: mean context RGB per image quadrant.
  auto feature = [](const FrameSample& frame) {
    std::array<double, 12> feat{};
    std::array<double, 4> count{};
    for (int y = 0; y < frame.image.height; ++y)
      for (int x = 0; x < frame.image.width; ++x) {
        if (frame.mask.at(y, x)) continue;
        int q = (y >= frame.image.height / 2) * 2 + (x >= frame.image.width / 2);
        for (int c = 0; c < 3; ++c) feat[static_cast<size_t>(q * 3 + c)] += frame.image.at(y, x, c);
        count[static_cast<size_t>(q)] += 1;
      }
    for (int q = 0; q < 4; ++q)
      if (count[static_cast<size_t>(q)] > 0)
        for (int c = 0; c < 3; ++c) feat[static_cast<size_t>(q * 3 + c)] /= count[static_cast<size_t>(q)];
    return feat;
  };

  std::map<int, std::array<double, 12>> centroid;
  std::map<int, int> counts;
  for (const auto& s : samples) {
    if (s.meta.split != Split::train || s.meta.label != Label::pristine) continue;
    auto f = feature(s.frame);
    auto& c = centroid[s.meta.context_identity];
    for (size_t i = 0; i < f.size(); ++i) c[i] += f[i];
    counts[s.meta.context_identity] += 1;
  }
  check(!centroid.empty(), "context_centroid_accuracy: no training samples");
  for (auto& [id, c] : centroid)
    for (auto& v : c) v /= counts[id];

  size_t hits = 0, total = 0;
  for (const auto& s : samples) {
    if (s.meta.split != Split::test || s.meta.label != Label::pristine) continue;
    auto f = feature(s.frame);
    int best_id = -1;
    double best_d = std::numeric_limits<double>::max();
    for (const auto& [id, c] : centroid) {
      double d = 0;
      for (size_t i = 0; i < f.size(); ++i) d += (f[i] - c[i]) * (f[i] - c[i]);
      if (d < best_d) {
        best_d = d;
        best_id = id;
      }
    }
    hits += best_id == s.meta.context_identity;
    ++total;
  }
  check(total > 0, "context_centroid_accuracy: no test samples");
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace fcd::synthworld
