#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "fcd/checkpoint.hpp"
#include "fcd/common.hpp"
#include "fcd/image.hpp"
#include "fcd/rng.hpp"

using namespace fcd;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
  fs::path dir = fs::temp_directory_path() / "fcd_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("rng: deterministic, bounds, shuffle permutes") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  Rng c(7);
  std::vector<int> v = {0, 1, 2, 3, 4, 5, 6, 7};
  auto sorted = v;
  c.shuffle(v.begin(), v.end());
  auto shuffled = v;
  std::sort(v.begin(), v.end());
  CHECK(v == sorted);
  CHECK(shuffled != sorted);  // 1/8! chance of false alarm with this seed: verified stable
}

TEST_CASE("rng: normal has roughly unit moments") {
  Rng rng(99);
  double sum = 0, sq = 0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(std::abs(sq / n - 1.0) < 0.03);
}

TEST_CASE("seed_chain separates derivation paths") {
  CHECK(seed_chain(1, {2, 3}) != seed_chain(1, {3, 2}));
  CHECK(seed_chain(1, {2}) != seed_chain(2, {2}));
  CHECK(seed_chain(5, {7, 8}) == seed_chain(5, {7, 8}));
}

TEST_CASE("parallel_for covers every index exactly once") {
  std::vector<int> hits(1000, 0);
  parallel_for(1000, 4, [&](int64_t lo, int64_t hi, int) {
    for (int64_t i = lo; i < hi; ++i) hits[static_cast<size_t>(i)] += 1;
  });
  for (int h : hits) CHECK(h == 1);
}

TEST_CASE("ppm/pgm round trip is lossless for quantized rasters") {
  fs::path dir = temp_dir("raster");
  Rng rng(3);
  Image img(17, 23, 3);
  for (auto& v : img.data) v = quantize_u8(rng.uniform());
  Mask mask(17, 23);
  for (auto& v : mask.data) v = rng.bernoulli(0.3);

  write_ppm(img, (dir / "a.ppm").string());
  write_pgm(mask, (dir / "a.pgm").string());
  Image img2 = read_ppm((dir / "a.ppm").string());
  Mask mask2 = read_pgm((dir / "a.pgm").string());
  CHECK(img2.height == img.height);
  CHECK(img2.width == img.width);
  CHECK(img.data == img2.data);
  CHECK(mask.data == mask2.data);
}

TEST_CASE("raster readers report missing and truncated files") {
  fs::path dir = temp_dir("raster_err");
  CHECK_THROWS_AS(read_ppm((dir / "missing.ppm").string()), Error);
  {
    std::FILE* f = std::fopen((dir / "trunc.ppm").string().c_str(), "wb");
    std::fputs("P6\n10 10\n255\nab", f);  // far fewer than 300 bytes
    std::fclose(f);
  }
  CHECK_THROWS_AS(read_ppm((dir / "trunc.ppm").string()), Error);
}

TEST_CASE("bilinear resize: shape, constants, smooth round trip") {
  Image img(120, 120, 3);
  for (auto& v : img.data) v = 0.25f;
  Image small = resize_bilinear(img, 64, 64);
  CHECK(small.height == 64);
  CHECK(small.width == 64);
  for (Real v : small.data) CHECK(v == doctest::Approx(0.25).epsilon(1e-6));

  // Smooth gradient survives upscale + downscale within a small tolerance.
  Image grad(32, 32, 1);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) grad.at(y, x, 0) = static_cast<Real>((x + y) / 64.0);
  Image up = resize_bilinear(grad, 64, 64);
  Image back = resize_bilinear(up, 32, 32);
  double max_err = 0;
  for (size_t i = 0; i < grad.data.size(); ++i)
    max_err = std::max(max_err, std::abs(static_cast<double>(grad.data[i]) - back.data[i]));
  CHECK(max_err < 0.02);
}

TEST_CASE("crop replication clamps to edges") {
  Image img(4, 4, 1);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) img.at(y, x, 0) = static_cast<Real>(y * 4 + x);
  Image crop = crop_replicate(img, -2, -2, 4, 4);
  CHECK(crop.at(0, 0, 0) == img.at(0, 0, 0));
  CHECK(crop.at(3, 3, 0) == img.at(1, 1, 0));
}

TEST_CASE("rotation by zero degrees is identity; masks stay binary") {
  Rng rng(5);
  Image img(16, 16, 3);
  for (auto& v : img.data) v = static_cast<Real>(rng.uniform());
  Image rot = rotate_bilinear(img, 0.0);
  for (size_t i = 0; i < img.data.size(); ++i) CHECK(rot.data[i] == doctest::Approx(img.data[i]).epsilon(1e-6));

  Mask mask(16, 16);
  for (auto& v : mask.data) v = rng.bernoulli(0.5);
  Mask mrot = rotate_nearest(mask, 23.0);
  for (uint8_t v : mrot.data) CHECK((v == 0 || v == 1));
}

TEST_CASE("checkpoint container round trips tensors and metadata") {
  fs::path dir = temp_dir("ckpt");
  Checkpoint ckpt;
  ckpt.meta["kind"] = "test";
  ckpt.meta["config"] = {{"alpha", 3}};
  std::vector<float> t1 = {1.5f, -2.0f, 0.25f, 7.0f};
  ckpt.put_tensor("layer.w", {2, 2}, t1.data(), t1.size());
  ckpt.put_vector("stats", {0.5f, 0.75f});
  std::string path = (dir / "model.fckpt").string();
  ckpt.save(path);

  Checkpoint loaded = Checkpoint::load(path);
  CHECK(loaded.meta["kind"] == "test");
  CHECK(loaded.meta["config"]["alpha"] == 3);
  CHECK(loaded.tensor("layer.w").shape == std::vector<int>({2, 2}));
  CHECK(loaded.tensor("layer.w").data == t1);
  CHECK(loaded.get_vector("stats") == std::vector<float>({0.5f, 0.75f}));
  CHECK_THROWS_AS(loaded.tensor("nope"), Error);
}

TEST_CASE("checkpoint loader rejects corrupt and truncated files") {
  fs::path dir = temp_dir("ckpt_err");
  std::string path = (dir / "bad.fckpt").string();
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("NOTACKPT", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(Checkpoint::load(path), Error);

  Checkpoint good;
  good.meta["kind"] = "x";
  std::vector<float> data(64, 1.0f);
  good.put_tensor("t", {64}, data.data(), data.size());
  std::string good_path = (dir / "good.fckpt").string();
  good.save(good_path);
  auto bytes = fs::file_size(good_path);
  fs::resize_file(good_path, bytes - 40);
  CHECK_THROWS_AS(Checkpoint::load(good_path), Error);
}
