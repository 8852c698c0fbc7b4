#include <doctest.h>

#include "fcd/preprocess.hpp"
#include "fcd/rng.hpp"

using namespace fcd;
using preprocess::FaceBox;
using preprocess::SquareRect;

TEST_CASE("enlarge_and_square: side is the grown longer axis") {
  FaceBox box{10, 10, 50, 100, 1.0};
  SquareRect r = preprocess::enlarge_and_square(box, 256, 256);
  CHECK(r.side == 120);

  FaceBox square_box{30, 40, 100, 100, 1.0};
  SquareRect r2 = preprocess::enlarge_and_square(square_box, 256, 256);
  CHECK(r2.side == 120);
  // centered on the box center
  CHECK(r2.x0 == 30 + 50 - 60);
  CHECK(r2.y0 == 40 + 50 - 60);
}

TEST_CASE("enlarge_and_square near a corner keeps its side; crop replicates") {
  FaceBox box{0, 0, 40, 40, 1.0};
  SquareRect r = preprocess::enlarge_and_square(box, 64, 64);
  CHECK(r.side == 48);
  CHECK(r.x0 < 0);  // extends past the border
  Image img(64, 64, 3, 0.25f);
  for (int y = 0; y < 64; ++y) img.at(y, 0, 0) = 1.0f;  // marked left column
  Image crop = preprocess::extract_crop(img, r);
  CHECK(crop.height == 48);
  CHECK(crop.width == 48);
  // replicated pixels repeat the border column
  CHECK(crop.at(10, 0, 0) == 1.0f);
  CHECK(crop.at(10, 1, 0) == 1.0f);
}

TEST_CASE("enlarge_and_square rejects degenerate or disjoint boxes") {
  CHECK_THROWS_AS(preprocess::enlarge_and_square(FaceBox{0, 0, 0, 10, 1.0}, 64, 64), std::invalid_argument);
  CHECK_THROWS_AS(preprocess::enlarge_and_square(FaceBox{100, 100, 10, 10, 1.0}, 64, 64),
                  std::invalid_argument);
}

TEST_CASE("resize_crop: shape and constant preservation") {
  Image crop(120, 120, 3, 0.6f);
  Image out = preprocess::resize_crop(crop, 64);
  CHECK(out.height == 64);
  CHECK(out.width == 64);
  for (Real v : out.data) CHECK(v == doctest::Approx(0.6).epsilon(1e-6));
}

TEST_CASE("split_face_context: boundary masks and complementarity identity") {
  const Real fill = 0.5f;
  Rng rng(9);
  Image crop(8, 8, 3);
  // Dyadic values keep the complementarity identity exact in float.
  for (auto& v : crop.data) v = static_cast<Real>(rng.uniform_index(256)) / 256.0f;

  Mask ones(8, 8, 1);
  auto pair_ones = preprocess::split_face_context(crop, ones, fill);
  CHECK(pair_ones.face.data == crop.data);
  CHECK(pair_ones.degenerate_mask);
  for (Real v : pair_ones.context.data) CHECK(v == fill);

  Mask zeros(8, 8, 0);
  auto pair_zeros = preprocess::split_face_context(crop, zeros, fill);
  CHECK(pair_zeros.context.data == crop.data);
  CHECK(pair_zeros.degenerate_mask);
  for (Real v : pair_zeros.face.data) CHECK(v == fill);

  Mask checker(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) checker.at(y, x) = (x + y) % 2;
  auto pair = preprocess::split_face_context(crop, checker, fill);
  CHECK_FALSE(pair.degenerate_mask);
  for (size_t i = 0; i < crop.data.size(); ++i) {
    CHECK(pair.face.data[i] + pair.context.data[i] - fill == crop.data[i]);
  }
}

TEST_CASE("split_face_context: complementarity is exclusive per pixel") {
  Rng rng(10);
  Image crop(16, 16, 3);
  for (auto& v : crop.data) v = static_cast<Real>(0.25 + 0.5 * rng.uniform());  // never equals fill
  Mask mask(16, 16);
  for (auto& v : mask.data) v = rng.bernoulli(0.4);
  auto pair = preprocess::split_face_context(crop, mask, 0.0f);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < 3; ++c) {
        bool in_face = pair.face.at(y, x, c) == crop.at(y, x, c);
        bool in_ctx = pair.context.at(y, x, c) == crop.at(y, x, c);
        CHECK(in_face != in_ctx);
      }
}

TEST_CASE("split_face_context rejects misaligned masks") {
  Image crop(8, 8, 3, 0.5f);
  Mask mask(4, 4, 1);
  CHECK_THROWS_AS(preprocess::split_face_context(crop, mask, 0.5f), std::invalid_argument);
}

TEST_CASE("mask_bbox finds the tight box") {
  Mask mask(10, 12, 0);
  for (int y = 3; y <= 6; ++y)
    for (int x = 2; x <= 9; ++x) mask.at(y, x) = 1;
  FaceBox box = preprocess::mask_bbox(mask);
  CHECK(box.x0 == 2);
  CHECK(box.y0 == 3);
  CHECK(box.width == 8);
  CHECK(box.height == 4);
  Mask empty(4, 4, 0);
  CHECK_THROWS_AS(preprocess::mask_bbox(empty), Error);
}

TEST_CASE("enlarge_and_square applied twice grows the side exactly once per call") {
  FaceBox box{20, 20, 30, 30, 1.0};
  SquareRect r1 = preprocess::enlarge_and_square(box, 128, 128);
  FaceBox as_box{static_cast<double>(r1.x0), static_cast<double>(r1.y0), static_cast<double>(r1.side),
                 static_cast<double>(r1.side), 1.0};
  SquareRect r2 = preprocess::enlarge_and_square(as_box, 128, 128);
  CHECK(r1.side == 36);
  CHECK(r2.side == 43);  // already square: one more 1.2x growth only
}
