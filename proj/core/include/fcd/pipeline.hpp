#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fcd/fusion.hpp"
#include "fcd/image.hpp"
#include "fcd/preprocess.hpp"
#include "fcd/segnet.hpp"

namespace fcd::pipeline {

// Pluggable face detection. Implementations must be deterministic for a
// fixed image and return boxes inside the image bounds.
class FaceDetector {
 public:
  virtual ~FaceDetector() = default;
  virtual std::vector<preprocess::FaceBox> detect(const Image& image) const = 0;
};

// Oracle detector scripted with known boxes (synthetic ground truth).
class ScriptedDetector : public FaceDetector {
 public:
  explicit ScriptedDetector(std::vector<preprocess::FaceBox> boxes) : boxes_(std::move(boxes)) {}
  std::vector<preprocess::FaceBox> detect(const Image&) const override { return boxes_; }

 private:
  std::vector<preprocess::FaceBox> boxes_;
};

preprocess::FaceBox oracle_box_from_mask(const Mask& mask);

// Trivial sliding-window detector for plumbing tests: returns the window
// whose mean brightness deviates most from the image mean.
class BrightnessDetector : public FaceDetector {
 public:
  BrightnessDetector(int window = 24, int stride = 4) : window_(window), stride_(stride) {}
  std::vector<preprocess::FaceBox> detect(const Image& image) const override;

 private:
  int window_, stride_;
};

// Keeps boxes taller than min_height; falls back to the single tallest box
// when none qualify. Throws on an empty input list.
std::vector<preprocess::FaceBox> filter_by_size(const std::vector<preprocess::FaceBox>& boxes,
                                                double min_height = 64.0);

struct MaskFilterResult {
  std::vector<size_t> kept;   // indices into the input list
  double threshold_used = 0;  // 0.15, 0.075, or 0 when the fallback fired
  bool fallback_max_pixels = false;
};

// Face-pixel-fraction cascade: threshold 0.15, then half of it, then the
// single face with the most face pixels. Never returns an empty set.
MaskFilterResult filter_by_mask(const std::vector<double>& fractions, const std::vector<size_t>& pixel_counts,
                                double primary_threshold = 0.15);

struct PerFaceTrace {
  preprocess::FaceBox box;
  double face_pixel_fraction = 0;
  double score = 0;            // fused logit, positive = real
  std::string filtered_reason;  // empty when the face was scored
};

struct DetectionVerdict {
  std::string frame_id;
  bool unscorable = false;  // detector produced no boxes
  std::vector<PerFaceTrace> per_face;
  double image_score = 0;  // min over scored faces (most fake)
  double threshold_used = 0;
  bool fallback_max_pixels = false;
};

struct ScorerConfig {
  double min_face_height = 64;
  double enlarge_factor = 1.2;
  int crop_size = 64;
  Real fill = 0.5f;
};

// One preprocessed, cascade-surviving face.
struct PreparedFace {
  size_t box_index = 0;
  Image crop;
  Mask seg_mask;  // segmenter prediction over the crop
};

struct PreparedFrame {
  DetectionVerdict verdict;          // scores not yet filled
  std::vector<PreparedFace> faces;   // empty iff unscorable
};

// Runs detection, crop geometry, segmentation, and the filtering cascade;
// scoring stays separate so ablation variants can share one prepared frame.
class Scorer {
 public:
  Scorer(const segnet::SegModel& seg, const fusion::FusionModel& detector, const ScorerConfig& cfg)
      : seg_(seg), fusion_(detector), cfg_(cfg) {}

  const ScorerConfig& config() const { return cfg_; }
  const fusion::FusionModel& detector_model() const { return fusion_; }

  PreparedFrame prepare(const Image& image, const FaceDetector& detector) const;
  DetectionVerdict score_image(const Image& image, const FaceDetector& detector) const;

  // Per-face features for each prepared face (order matches frame.faces).
  std::vector<fusion::FusionModel::FaceFeatures> face_features(const PreparedFrame& frame) const;

 private:
  const segnet::SegModel& seg_;
  const fusion::FusionModel& fusion_;
  ScorerConfig cfg_;
};

struct VideoScoreResult {
  std::vector<DetectionVerdict> verdicts;
  size_t unscorable_count = 0;
  double frames_per_second = 0;  // measured wall clock
};

// Independent per-frame scoring; verdict order follows frame order.
// `detectors` holds either one detector for all frames or one per frame.
VideoScoreResult score_video(const Scorer& scorer, const std::vector<Image>& frames,
                             const std::vector<const FaceDetector*>& detectors, int threads);

void write_verdicts(const std::vector<DetectionVerdict>& verdicts, const std::string& path);
std::vector<DetectionVerdict> read_verdicts(const std::string& path);

}  // namespace fcd::pipeline
