#include <doctest.h>

#include <filesystem>

#include "fcd/synthworld.hpp"

using namespace fcd;
using namespace fcd::synthworld;
namespace fs = std::filesystem;

namespace {

WorldConfig small_world(uint64_t seed = 7) {
  WorldConfig cfg;
  cfg.identities = 6;
  cfg.image_size = 32;
  cfg.frames_per_identity = 10;
  cfg.master_seed = seed;
  return cfg;
}

bool images_equal(const Image& a, const Image& b) { return a.same_shape(b) && a.data == b.data; }

size_t context_mismatches(const FrameSample& a, const FrameSample& b) {
  size_t bad = 0;
  for (int y = 0; y < a.image.height; ++y)
    for (int x = 0; x < a.image.width; ++x) {
      if (a.mask.at(y, x)) continue;
      for (int c = 0; c < 3; ++c)
        if (a.image.at(y, x, c) != b.image.at(y, x, c)) ++bad;
    }
  return bad;
}

}  // namespace

TEST_CASE("generate_world: determinism, uniqueness, and preconditions") {
  WorldConfig cfg = small_world();
  auto w1 = generate_world(cfg);
  auto w2 = generate_world(cfg);
  REQUIRE(w1.size() == 6);
  for (size_t i = 0; i < w1.size(); ++i) {
    CHECK(w1[i].identity_id == static_cast<int>(i));
    CHECK(w1[i].face_params == w2[i].face_params);
    CHECK(w1[i].context_params == w2[i].context_params);
  }

  WorldConfig cfg32 = small_world(3);
  cfg32.identities = 32;
  auto w32 = generate_world(cfg32);
  std::set<int> ids;
  for (const auto& s : w32) ids.insert(s.identity_id);
  CHECK(ids.size() == 32);

  WorldConfig bad = small_world();
  bad.identities = 1;
  CHECK_THROWS_AS(generate_world(bad), std::invalid_argument);
}

TEST_CASE("render_pristine: labels, determinism, mask placement") {
  WorldConfig cfg = small_world();
  auto world = generate_world(cfg);
  FrameSample f1 = render_pristine(world[0], 1234, cfg);
  FrameSample f2 = render_pristine(world[0], 1234, cfg);
  CHECK(f1.label == Label::pristine);
  CHECK(f1.face_identity == 0);
  CHECK(f1.context_identity == 0);
  CHECK(images_equal(f1.image, f2.image));
  CHECK(f1.mask.data == f2.mask.data);

  // mask strictly inside the border and connected by construction (ellipse)
  size_t ones = f1.mask.count_ones();
  CHECK(ones > 0);
  for (int x = 0; x < cfg.image_size; ++x) {
    CHECK(f1.mask.at(0, x) == 0);
    CHECK(f1.mask.at(cfg.image_size - 1, x) == 0);
  }
  for (int y = 0; y < cfg.image_size; ++y) {
    CHECK(f1.mask.at(y, 0) == 0);
    CHECK(f1.mask.at(y, cfg.image_size - 1) == 0);
  }
}

TEST_CASE("different context params change context pixels at a fixed pose") {
  WorldConfig cfg = small_world();
  auto world = generate_world(cfg);
  FrameSample a = render_pristine(world[0], 99, cfg);
  FrameSample b = render_pristine(world[1], 99, cfg);
  CHECK(a.mask.data == b.mask.data);  // mask depends only on pose
  CHECK(context_mismatches(a, b) > 0);
}

TEST_CASE("face/context parameter blocks are disjoint") {
  WorldConfig cfg = small_world();
  auto world = generate_world(cfg);
  // Swap face params between two identities; context pixels must not move.
  IdentitySpec hybrid = world[0];
  hybrid.face_params = world[1].face_params;
  FrameSample base = render_pristine(world[0], 4242, cfg);
  FrameSample swapped_params = render_pristine(hybrid, 4242, cfg);
  CHECK(context_mismatches(base, swapped_params) == 0);

  // And the face region did change (different palette).
  size_t face_diff = 0;
  for (int y = 0; y < cfg.image_size; ++y)
    for (int x = 0; x < cfg.image_size; ++x)
      if (base.mask.at(y, x))
        for (int c = 0; c < 3; ++c) face_diff += base.image.at(y, x, c) != swapped_params.image.at(y, x, c);
  CHECK(face_diff > 0);
}

TEST_CASE("apply_swap: A1 exactness, labels, errors, and a visible face change") {
  WorldConfig cfg = small_world();
  auto world = generate_world(cfg);
  FrameSample target = render_pristine(world[2], 555, cfg);

  for (SwapMethod method : {SwapMethod::a, SwapMethod::b}) {
    FrameSample fake = apply_swap(target, world[4], method, cfg);
    CHECK(fake.label == (method == SwapMethod::a ? Label::swap_a : Label::swap_b));
    CHECK(fake.face_identity == 4);
    CHECK(fake.context_identity == 2);
    CHECK(fake.mask.data == target.mask.data);
    CHECK(context_mismatches(target, fake) == 0);  // bit-identical outside the mask

    double mad = 0;
    size_t n = 0;
    for (int y = 0; y < cfg.image_size; ++y)
      for (int x = 0; x < cfg.image_size; ++x)
        if (target.mask.at(y, x))
          for (int c = 0; c < 3; ++c) {
            mad += std::abs(static_cast<double>(fake.image.at(y, x, c)) - target.image.at(y, x, c));
            ++n;
          }
    CHECK(mad / static_cast<double>(n) > 0.0);
  }

  FrameSample self_sample = render_pristine(world[1], 556, cfg);
  CHECK_THROWS_AS(apply_swap(self_sample, world[1], SwapMethod::a, cfg), std::invalid_argument);
  FrameSample already_fake = apply_swap(target, world[4], SwapMethod::a, cfg);
  CHECK_THROWS_AS(apply_swap(already_fake, world[0], SwapMethod::a, cfg), std::invalid_argument);
}

TEST_CASE("apply_reenact: identity preserved, context untouched, deterministic") {
  WorldConfig cfg = small_world();
  auto world = generate_world(cfg);
  FrameSample target = render_pristine(world[0], 777, cfg);
  FrameSample r1 = apply_reenact(target, world, 31337, cfg);
  FrameSample r2 = apply_reenact(target, world, 31337, cfg);
  CHECK(r1.label == Label::reenact);
  CHECK(r1.face_identity == 0);
  CHECK(r1.context_identity == 0);
  CHECK(context_mismatches(target, r1) == 0);
  CHECK(images_equal(r1.image, r2.image));
  CHECK_THROWS_AS(apply_reenact(r1, world, 1, cfg), std::invalid_argument);
}

TEST_CASE("region disjointness holds across a generated dataset") {
  // A1, universally quantified over generated manipulated samples: rebuild
  // the pristine parent and compare pixels outside the mask.
  WorldConfig cfg = small_world(13);
  cfg.frames_per_identity = 4;
  auto samples = build_dataset(cfg, 2);
  auto world = generate_world(cfg);
  size_t checked = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].meta.label == Label::pristine) continue;
    // pristine parent precedes its fakes with the same pose seed
    size_t parent = i;
    while (parent > 0 && samples[parent].meta.label != Label::pristine) --parent;
    CHECK(context_mismatches(samples[parent].frame, samples[i].frame) == 0);
    ++checked;
  }
  CHECK(checked > 0);
}

TEST_CASE("dataset: split rules and deterministic parallel generation") {
  WorldConfig cfg = small_world(23);
  auto serial = build_dataset(cfg, 1);
  auto parallel = build_dataset(cfg, 4);
  REQUIRE(serial.size() == parallel.size());
  for (size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].meta.sample_id == parallel[i].meta.sample_id);
    CHECK(images_equal(serial[i].frame.image, parallel[i].frame.image));
  }

  size_t swap_b_total = 0;
  for (const auto& s : serial) {
    if (s.meta.label == Label::swap_b) {
      ++swap_b_total;
      CHECK_FALSE(s.meta.method_seen);
      CHECK(s.meta.split == Split::test);  // unseen methods only in test
    } else {
      CHECK(s.meta.method_seen);
    }
    if (s.meta.label == Label::pristine) CHECK(s.meta.face_identity == s.meta.context_identity);
    if (s.meta.label == Label::swap_a || s.meta.label == Label::swap_b)
      CHECK(s.meta.face_identity != s.meta.context_identity);
    if (s.meta.label == Label::reenact) CHECK(s.meta.face_identity == s.meta.context_identity);
  }
  CHECK(swap_b_total > 0);
}

TEST_CASE("manifest: lossless round trip and errors name the culprit") {
  fs::path dir = fs::temp_directory_path() / "fcd_tests" / "manifest";
  fs::remove_all(dir);
  WorldConfig cfg = small_world(29);
  cfg.frames_per_identity = 3;
  auto samples = build_dataset(cfg, 2);
  write_manifest(samples, dir.string());

  auto loaded = read_manifest((dir / "manifest.tsv").string());
  REQUIRE(loaded.size() == samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    CHECK(loaded[i].meta.sample_id == samples[i].meta.sample_id);
    CHECK(loaded[i].meta.image_path == samples[i].meta.image_path);
    CHECK(loaded[i].meta.mask_path == samples[i].meta.mask_path);
    CHECK(loaded[i].meta.face_identity == samples[i].meta.face_identity);
    CHECK(loaded[i].meta.context_identity == samples[i].meta.context_identity);
    CHECK(loaded[i].meta.label == samples[i].meta.label);
    CHECK(loaded[i].meta.split == samples[i].meta.split);
    CHECK(loaded[i].meta.method_seen == samples[i].meta.method_seen);
    CHECK(images_equal(loaded[i].frame.image, samples[i].frame.image));
    CHECK(loaded[i].frame.mask.data == samples[i].frame.mask.data);
  }

  // Deleting one raster produces an error naming the sample and path.
  fs::remove(dir / samples[5].meta.image_path);
  try {
    read_manifest((dir / "manifest.tsv").string());
    FAIL("expected an error for the missing raster");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("sample " + std::to_string(samples[5].meta.sample_id)) != std::string::npos);
    CHECK(msg.find(samples[5].meta.image_path.substr(7)) != std::string::npos);
  }
}

TEST_CASE("context pixels alone identify people above chance (A2 probe)") {
  WorldConfig cfg = small_world(37);
  cfg.identities = 8;
  cfg.frames_per_identity = 12;
  auto samples = build_dataset(cfg, 2);
  double acc = context_centroid_accuracy(samples);
  CHECK(acc > 2.0 / 8.0);  // comfortably above the 1/K chance rate
}
