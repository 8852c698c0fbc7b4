#include "fcd/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace fcd::pipeline {

preprocess::FaceBox oracle_box_from_mask(const Mask& mask) { return preprocess::mask_bbox(mask); }

std::vector<preprocess::FaceBox> BrightnessDetector::detect(const Image& image) const {
  check_arg(image.height >= window_ && image.width >= window_, "brightness detector: image too small");
  double global = 0;
  for (Real v : image.data) global += v;
  global /= static_cast<double>(image.data.size());

  double best = -1;
  preprocess::FaceBox box;
  for (int y = 0; y + window_ <= image.height; y += stride_)
    for (int x = 0; x + window_ <= image.width; x += stride_) {
      double mean = 0;
      for (int dy = 0; dy < window_; ++dy)
        for (int dx = 0; dx < window_; ++dx)
          for (int c = 0; c < image.channels; ++c) mean += image.at(y + dy, x + dx, c);
      mean /= static_cast<double>(window_) * window_ * image.channels;
      double dev = std::abs(mean - global);
      if (dev > best) {
        best = dev;
        box = preprocess::FaceBox{static_cast<double>(x), static_cast<double>(y),
                                  static_cast<double>(window_), static_cast<double>(window_), dev};
      }
    }
  return {box};
}

std::vector<preprocess::FaceBox> filter_by_size(const std::vector<preprocess::FaceBox>& boxes,
                                                double min_height) {
  check_arg(!boxes.empty(), "filter_by_size: empty box list");
  std::vector<preprocess::FaceBox> kept;
  for (const auto& b : boxes)
    if (b.height > min_height) kept.push_back(b);
  if (kept.empty()) {
    size_t tallest = 0;
    for (size_t i = 1; i < boxes.size(); ++i)
      if (boxes[i].height > boxes[tallest].height) tallest = i;
    kept.push_back(boxes[tallest]);
  }
  return kept;
}

MaskFilterResult filter_by_mask(const std::vector<double>& fractions, const std::vector<size_t>& pixel_counts,
                                double primary_threshold) {
  check_arg(!fractions.empty() && fractions.size() == pixel_counts.size(),
            "filter_by_mask: bad input lengths");
  MaskFilterResult r;
  for (double threshold : {primary_threshold, primary_threshold / 2}) {
    for (size_t i = 0; i < fractions.size(); ++i)
      if (fractions[i] >= threshold) r.kept.push_back(i);
    if (!r.kept.empty()) {
      r.threshold_used = threshold;
      return r;
    }
  }
  size_t best = 0;
  for (size_t i = 1; i < pixel_counts.size(); ++i)
    if (pixel_counts[i] > pixel_counts[best]) best = i;
  r.kept.push_back(best);
  r.fallback_max_pixels = true;
  r.threshold_used = 0;
  return r;
}

PreparedFrame Scorer::prepare(const Image& image, const FaceDetector& detector) const {
  PreparedFrame frame;
  std::vector<preprocess::FaceBox> boxes = detector.detect(image);
  if (boxes.empty()) {
    frame.verdict.unscorable = true;
    return frame;
  }
  std::vector<preprocess::FaceBox> sized = filter_by_size(boxes, cfg_.min_face_height);

  // Record the discarded background faces in the trace.
  for (const auto& b : boxes) {
    bool kept = false;
    for (const auto& k : sized)
      if (k.x0 == b.x0 && k.y0 == b.y0 && k.width == b.width && k.height == b.height) kept = true;
    if (!kept) {
      PerFaceTrace t;
      t.box = b;
      t.filtered_reason = "below_min_height";
      frame.verdict.per_face.push_back(t);
    }
  }

  std::vector<Image> crops(sized.size());
  std::vector<Mask> masks(sized.size());
  std::vector<double> fractions(sized.size());
  std::vector<size_t> counts(sized.size());
  for (size_t i = 0; i < sized.size(); ++i) {
    preprocess::SquareRect rect =
        preprocess::enlarge_and_square(sized[i], image.height, image.width, cfg_.enlarge_factor);
    Image crop = preprocess::resize_crop(preprocess::extract_crop(image, rect), cfg_.crop_size);
    masks[i] = seg_.predict_mask(crop);
    counts[i] = masks[i].count_ones();
    fractions[i] = static_cast<double>(counts[i]) / static_cast<double>(masks[i].data.size());
    crops[i] = std::move(crop);
  }

  MaskFilterResult mf = filter_by_mask(fractions, counts);
  frame.verdict.threshold_used = mf.threshold_used;
  frame.verdict.fallback_max_pixels = mf.fallback_max_pixels;

  for (size_t i = 0; i < sized.size(); ++i) {
    bool kept = std::find(mf.kept.begin(), mf.kept.end(), i) != mf.kept.end();
    PerFaceTrace t;
    t.box = sized[i];
    t.face_pixel_fraction = fractions[i];
    if (!kept) {
      t.filtered_reason = "below_mask_threshold";
      frame.verdict.per_face.push_back(t);
      continue;
    }
    size_t trace_index = frame.verdict.per_face.size();
    frame.verdict.per_face.push_back(t);
    PreparedFace face;
    face.box_index = trace_index;
    face.crop = std::move(crops[i]);
    face.seg_mask = std::move(masks[i]);
    frame.faces.push_back(std::move(face));
  }
  return frame;
}

std::vector<fusion::FusionModel::FaceFeatures> Scorer::face_features(const PreparedFrame& frame) const {
  std::vector<fusion::FusionModel::FaceFeatures> out;
  out.reserve(frame.faces.size());
  for (const auto& face : frame.faces) out.push_back(fusion_.score_face(face.crop, face.seg_mask, cfg_.fill));
  return out;
}

DetectionVerdict Scorer::score_image(const Image& image, const FaceDetector& detector) const {
  PreparedFrame frame = prepare(image, detector);
  if (frame.verdict.unscorable) return frame.verdict;
  std::vector<fusion::FusionModel::FaceFeatures> feats = face_features(frame);
  double image_score = 0;
  for (size_t i = 0; i < frame.faces.size(); ++i) {
    double s = feats[i].d_score;
    frame.verdict.per_face[frame.faces[i].box_index].score = s;
    image_score = i == 0 ? s : std::min(image_score, s);
  }
  frame.verdict.image_score = image_score;
  return frame.verdict;
}

VideoScoreResult score_video(const Scorer& scorer, const std::vector<Image>& frames,
                             const std::vector<const FaceDetector*>& detectors, int threads) {
  check_arg(!frames.empty(), "score_video: empty frame list");
  check_arg(detectors.size() == 1 || detectors.size() == frames.size(),
            "score_video: need one detector, or one per frame");
  VideoScoreResult result;
  result.verdicts.resize(frames.size());
  auto t0 = std::chrono::steady_clock::now();
  parallel_for(static_cast<int64_t>(frames.size()), threads, [&](int64_t lo, int64_t hi, int) {
    for (int64_t i = lo; i < hi; ++i) {
      const FaceDetector* det = detectors.size() == 1 ? detectors[0] : detectors[static_cast<size_t>(i)];
      result.verdicts[static_cast<size_t>(i)] = scorer.score_image(frames[static_cast<size_t>(i)], *det);
    }
  });
  double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  result.frames_per_second = dt > 0 ? static_cast<double>(frames.size()) / dt : 0.0;
  for (const auto& v : result.verdicts) result.unscorable_count += v.unscorable;
  return result;
}

namespace {

nlohmann::json verdict_to_json(const DetectionVerdict& v) {
  nlohmann::json faces = nlohmann::json::array();
  for (const auto& f : v.per_face) {
    faces.push_back({{"x0", f.box.x0},
                     {"y0", f.box.y0},
                     {"width", f.box.width},
                     {"height", f.box.height},
                     {"fraction", f.face_pixel_fraction},
                     {"score", f.score},
                     {"filtered", f.filtered_reason}});
  }
  return {{"frame_id", v.frame_id},         {"unscorable", v.unscorable},
          {"image_score", v.image_score},   {"threshold_used", v.threshold_used},
          {"fallback", v.fallback_max_pixels}, {"faces", faces}};
}

DetectionVerdict verdict_from_json(const nlohmann::json& j) {
  DetectionVerdict v;
  v.frame_id = j["frame_id"];
  v.unscorable = j["unscorable"];
  v.image_score = j["image_score"];
  v.threshold_used = j["threshold_used"];
  v.fallback_max_pixels = j["fallback"];
  for (const auto& f : j["faces"]) {
    PerFaceTrace t;
    t.box.x0 = f["x0"];
    t.box.y0 = f["y0"];
    t.box.width = f["width"];
    t.box.height = f["height"];
    t.face_pixel_fraction = f["fraction"];
    t.score = f["score"];
    t.filtered_reason = f["filtered"];
    v.per_face.push_back(std::move(t));
  }
  return v;
}

}  // namespace

void write_verdicts(const std::vector<DetectionVerdict>& verdicts, const std::string& path) {
  std::ofstream out(path);
  check(out.good(), "cannot open verdicts file for writing: " + path);
  for (const auto& v : verdicts) out << verdict_to_json(v).dump() << "\n";
  check(out.good(), "verdicts write failed: " + path);
}

std::vector<DetectionVerdict> read_verdicts(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot open verdicts file: " + path);
  std::vector<DetectionVerdict> verdicts;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    check(!j.is_discarded(), "corrupt verdict record at line " + std::to_string(line_no) + " in " + path);
    verdicts.push_back(verdict_from_json(j));
  }
  return verdicts;
}

}  // namespace fcd::pipeline
