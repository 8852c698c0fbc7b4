#pragma once

#include <vector>

#include "fcd/config.hpp"
#include "fcd/fusion.hpp"
#include "fcd/identnet.hpp"
#include "fcd/segnet.hpp"
#include "fcd/synthworld.hpp"

namespace fcd::datasets {

// A stored sample pushed through the training-time crop geometry: oracle
// box from the ground-truth mask, squared and enlarged, resized to the
// network input size (mask via nearest neighbor).
struct CropSample {
  Image crop;
  Mask mask;
  int face_identity = 0;
  int context_identity = 0;
  synthworld::Label label = synthworld::Label::pristine;
  synthworld::Split split = synthworld::Split::train;
};

CropSample make_crop_sample(const synthworld::StoredSample& sample, double enlarge_factor, int crop_size);

std::vector<CropSample> make_crop_samples(const std::vector<synthworld::StoredSample>& samples,
                                          double enlarge_factor, int crop_size, int threads);

std::vector<segnet::SegSample> seg_samples(const std::vector<CropSample>& crops, synthworld::Split split);

// Pristine frames only; labels are face identities.
std::vector<identnet::IdSample> id_samples(const std::vector<CropSample>& crops, synthworld::Split split);

// Pristine (+1) versus one manipulation label (-1).
std::vector<fusion::BinarySample> binary_samples(const std::vector<CropSample>& crops,
                                                 synthworld::Split split, synthworld::Label fake_label);

// Pristine (+1) versus seen-method swaps (-1), plus reenactments (-1) when
// the detector variant includes E_r.
std::vector<fusion::DetectorSample> detector_samples(const std::vector<CropSample>& crops,
                                                     synthworld::Split split, bool with_reenactment);

// Same/different identity pairs from pristine crops, for verification ROC.
std::vector<identnet::VerificationPair> verification_pairs(const std::vector<CropSample>& crops,
                                                           size_t pairs_per_class, uint64_t seed);

}  // namespace fcd::datasets
