#include <doctest.h>

#include <filesystem>

#include "fcd/datasets.hpp"
#include "fcd/segnet.hpp"
#include "fcd/synthworld.hpp"

using namespace fcd;
using namespace fcd::segnet;
namespace fs = std::filesystem;

namespace {

// Tiny world and schedule; the full default-config runs live in the
// acceptance suite.
std::vector<SegSample> tiny_seg_data(int frames = 6, uint64_t seed = 5) {
  synthworld::WorldConfig w;
  w.identities = 4;
  w.image_size = 32;
  w.frames_per_identity = frames;
  w.master_seed = seed;
  auto samples = synthworld::build_dataset(w, 2);
  auto crops = datasets::make_crop_samples(samples, 1.2, 32, 2);
  return datasets::seg_samples(crops, synthworld::Split::train);
}

SegConfig tiny_cfg() {
  SegConfig cfg;
  cfg.input_size = 32;
  cfg.base_channels = 8;
  cfg.depth = 3;
  return cfg;
}

}  // namespace

TEST_CASE("seg_forward: per-pixel probabilities sum to one; wrong size rejected") {
  SegModel model(tiny_cfg(), 1);
  Image crop(32, 32, 3, 0.3f);
  auto probs = model.forward_probs(crop);
  int hw = 32 * 32;
  for (int i = 0; i < hw; ++i) {
    double sum = static_cast<double>(probs[static_cast<size_t>(i)]) + probs[static_cast<size_t>(hw + i)];
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
  Image wrong(16, 16, 3, 0.3f);
  CHECK_THROWS_AS(model.forward_probs(wrong), std::invalid_argument);
}

TEST_CASE("seg_forward: no cross-sample coupling (duplicated inputs agree)") {
  SegModel model(tiny_cfg(), 2);
  Rng rng(3);
  Image crop(32, 32, 3);
  for (auto& v : crop.data) v = static_cast<Real>(rng.uniform());
  auto p1 = model.forward_probs(crop);
  auto p2 = model.forward_probs(crop);
  CHECK(p1 == p2);
}

TEST_CASE("augment: degenerate policy is the identity transform") {
  auto data = tiny_seg_data(2);
  REQUIRE(!data.empty());
  Rng rng(7);
  SegSample out = augment(data[0], AugmentationPolicy::none(), rng);
  CHECK(out.crop.data == data[0].crop.data);
  CHECK(out.mask.data == data[0].mask.data);
}

TEST_CASE("augment: flip rate matches the policy probability") {
  AugmentationPolicy policy = AugmentationPolicy::none();
  policy.hflip_prob = 0.5;
  Image crop(8, 8, 3, 0.0f);
  crop.at(3, 0, 0) = 1.0f;  // left-edge marker
  Mask mask(8, 8, 0);
  mask.at(4, 4) = 1;
  SegSample s{crop, mask};
  Rng rng(123);
  int flips = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    SegSample out = augment(s, policy, rng);
    flips += out.crop.at(3, 7, 0) == 1.0f;
  }
  double rate = static_cast<double>(flips) / draws;
  CHECK(rate > 0.48);
  CHECK(rate < 0.52);
}

TEST_CASE("augment: rotation keeps masks binary and moves image and mask together") {
  auto data = tiny_seg_data(2);
  AugmentationPolicy policy = AugmentationPolicy::none();
  policy.rotation_degrees = 30;
  Rng rng(11);
  SegSample out = augment(data[0], policy, rng);
  for (uint8_t v : out.mask.data) CHECK((v == 0 || v == 1));
  CHECK(out.mask.count_ones() > 0);
  // Rotated mask overlaps the original face region substantially.
  size_t inter = 0, uni = 0;
  for (size_t i = 0; i < out.mask.data.size(); ++i) {
    inter += out.mask.data[i] && data[0].mask.data[i];
    uni += out.mask.data[i] || data[0].mask.data[i];
  }
  CHECK(static_cast<double>(inter) / static_cast<double>(uni) > 0.4);
}

TEST_CASE("seg_train: smoke run writes one checkpoint per epoch") {
  fs::path dir = fs::temp_directory_path() / "fcd_tests" / "seg_smoke";
  fs::remove_all(dir);
  auto data = tiny_seg_data(2);
  data.resize(8);
  SegModel model(tiny_cfg(), 3);
  SegTrainConfig cfg;
  cfg.batch_size = 4;
  cfg.iters_per_epoch = 2;
  cfg.epochs = 1;
  cfg.seed = 9;
  cfg.augment = AugmentationPolicy::none();
  auto result = seg_train(model, data, cfg, dir.string());
  CHECK(result.epoch_loss.size() == 1);
  REQUIRE(result.checkpoint_paths.size() == 1);
  CHECK(fs::exists(result.checkpoint_paths[0]));

  SegModel loaded = SegModel::load_file(result.checkpoint_paths[0]);
  Image probe(32, 32, 3, 0.4f);
  CHECK(loaded.forward_probs(probe) == model.forward_probs(probe));
}

TEST_CASE("seg_train: seed-fixed runs are identical, with and without augmentation") {
  auto data = tiny_seg_data(3);
  for (bool augmented : {false, true}) {
    auto run = [&]() {
      SegModel model(tiny_cfg(), 17);
      SegTrainConfig cfg;
      cfg.batch_size = 4;
      cfg.iters_per_epoch = 4;
      cfg.epochs = 2;
      cfg.seed = 21;
      if (!augmented) cfg.augment = AugmentationPolicy::none();
      return seg_train(model, data, cfg, "").epoch_loss;
    };
    CHECK(run() == run());
  }
}

TEST_CASE("seg_train: loss decreases and IoU becomes useful on the tiny world") {
  auto data = tiny_seg_data(8, 31);
  SegModel model(tiny_cfg(), 23);
  SegTrainConfig cfg;
  cfg.batch_size = 8;
  cfg.iters_per_epoch = 40;
  cfg.epochs = 3;
  cfg.seed = 33;
  cfg.augment = AugmentationPolicy::none();
  auto result = seg_train(model, data, cfg, "");
  REQUIRE(result.epoch_loss.size() == 3);
  CHECK(result.epoch_loss[2] < result.epoch_loss[0]);
  CHECK(mean_iou(model, data) > 0.8);
}

TEST_CASE("trained segmenter is nearly equivariant to horizontal flips") {
  auto data = tiny_seg_data(8, 41);
  SegModel model(tiny_cfg(), 29);
  SegTrainConfig cfg;
  cfg.batch_size = 8;
  cfg.iters_per_epoch = 40;
  cfg.epochs = 3;
  cfg.seed = 43;
  cfg.augment = AugmentationPolicy::none();
  cfg.augment.hflip_prob = 0.5;  // train with flips only
  seg_train(model, data, cfg, "");

  double base_iou = mean_iou(model, data);
  std::vector<SegSample> flipped;
  for (const auto& s : data) flipped.push_back({hflip(s.crop), hflip(s.mask)});
  double flip_iou = mean_iou(model, flipped);
  CHECK(base_iou - flip_iou < 0.05);
}

TEST_CASE("seg_train rejects bad inputs") {
  SegModel model(tiny_cfg(), 1);
  SegTrainConfig cfg;
  std::vector<SegSample> empty;
  CHECK_THROWS_AS(seg_train(model, empty, cfg, ""), std::invalid_argument);

  std::vector<SegSample> wrong = {{Image(16, 16, 3, 0.1f), Mask(16, 16, 0)}};
  CHECK_THROWS_AS(seg_train(model, wrong, cfg, ""), std::invalid_argument);
}
