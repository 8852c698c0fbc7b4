#include "fcd/datasets.hpp"

#include <map>

#include "fcd/preprocess.hpp"
#include "fcd/rng.hpp"

namespace fcd::datasets {

using synthworld::Label;
using synthworld::Split;

CropSample make_crop_sample(const synthworld::StoredSample& sample, double enlarge_factor, int crop_size) {
  const auto& frame = sample.frame;
  preprocess::FaceBox box = preprocess::mask_bbox(frame.mask);
  preprocess::SquareRect rect =
      preprocess::enlarge_and_square(box, frame.image.height, frame.image.width, enlarge_factor);
  CropSample out;
  out.crop = preprocess::resize_crop(preprocess::extract_crop(frame.image, rect), crop_size);
  out.mask = resize_nearest(preprocess::extract_crop(frame.mask, rect), crop_size, crop_size);
  out.face_identity = sample.meta.face_identity;
  out.context_identity = sample.meta.context_identity;
  out.label = sample.meta.label;
  out.split = sample.meta.split;
  return out;
}

std::vector<CropSample> make_crop_samples(const std::vector<synthworld::StoredSample>& samples,
                                          double enlarge_factor, int crop_size, int threads) {
  std::vector<CropSample> crops(samples.size());
  parallel_for(static_cast<int64_t>(samples.size()), threads, [&](int64_t lo, int64_t hi, int) {
    for (int64_t i = lo; i < hi; ++i)
      crops[static_cast<size_t>(i)] = make_crop_sample(samples[static_cast<size_t>(i)], enlarge_factor, crop_size);
  });
  return crops;
}

std::vector<segnet::SegSample> seg_samples(const std::vector<CropSample>& crops, Split split) {
  std::vector<segnet::SegSample> out;
  for (const auto& c : crops) {
    if (c.split != split || c.label != Label::pristine) continue;
    out.push_back({c.crop, c.mask});
  }
  return out;
}

std::vector<identnet::IdSample> id_samples(const std::vector<CropSample>& crops, Split split) {
  std::vector<identnet::IdSample> out;
  for (const auto& c : crops) {
    if (c.split != split || c.label != Label::pristine) continue;
    out.push_back({c.crop, c.mask, c.face_identity});
  }
  return out;
}

std::vector<fusion::BinarySample> binary_samples(const std::vector<CropSample>& crops, Split split,
                                                 Label fake_label) {
  std::vector<fusion::BinarySample> out;
  for (const auto& c : crops) {
    if (c.split != split) continue;
    if (c.label == Label::pristine)
      out.push_back({c.crop, +1});
    else if (c.label == fake_label)
      out.push_back({c.crop, -1});
  }
  return out;
}

std::vector<fusion::DetectorSample> detector_samples(const std::vector<CropSample>& crops, Split split,
                                                     bool with_reenactment) {
  std::vector<fusion::DetectorSample> out;
  for (const auto& c : crops) {
    if (c.split != split) continue;
    if (c.label == Label::pristine)
      out.push_back({c.crop, c.mask, +1});
    else if (c.label == Label::swap_a)
      out.push_back({c.crop, c.mask, -1});
    else if (with_reenactment && c.label == Label::reenact)
      out.push_back({c.crop, c.mask, -1});
  }
  return out;
}

std::vector<identnet::VerificationPair> verification_pairs(const std::vector<CropSample>& crops,
                                                           size_t pairs_per_class, uint64_t seed) {
  std::map<int, std::vector<const CropSample*>> by_identity;
  for (const auto& c : crops)
    if (c.label == Label::pristine) by_identity[c.face_identity].push_back(&c);
  check_arg(by_identity.size() >= 2, "verification_pairs: need at least two identities");

  std::vector<int> ids;
  for (const auto& [id, list] : by_identity) {
    check_arg(list.size() >= 2, "verification_pairs: identity " + std::to_string(id) + " has < 2 frames");
    ids.push_back(id);
  }

  Rng rng(seed_chain(seed, {0x76657270ull}));  // "verp"
  std::vector<identnet::VerificationPair> pairs;
  auto add_pair = [&pairs](const CropSample& a, const CropSample& b, bool same) {
    pairs.push_back({a.crop, a.mask, b.crop, b.mask, same});
  };
  for (size_t n = 0; n < pairs_per_class; ++n) {
    int id = ids[rng.uniform_index(ids.size())];
    const auto& list = by_identity[id];
    size_t i = rng.uniform_index(list.size());
    size_t j = rng.uniform_index(list.size() - 1);
    if (j >= i) ++j;
    add_pair(*list[i], *list[j], true);

    size_t a = rng.uniform_index(ids.size());
    size_t b = rng.uniform_index(ids.size() - 1);
    if (b >= a) ++b;
    const auto& la = by_identity[ids[a]];
    const auto& lb = by_identity[ids[b]];
    add_pair(*la[rng.uniform_index(la.size())], *lb[rng.uniform_index(lb.size())], false);
  }
  return pairs;
}

}  // namespace fcd::datasets
