#include <doctest.h>

#include "fcd/datasets.hpp"
#include "fcd/fusion.hpp"
#include "fcd/synthworld.hpp"

using namespace fcd;
using namespace fcd::fusion;

namespace {

identnet::BackboneConfig tiny_id_cfg(int classes) {
  identnet::BackboneConfig cfg;
  cfg.input_size = 32;
  cfg.entry_channels = 12;
  cfg.block_channels = {16, 24};
  cfg.block_strides = {2, 2};
  cfg.tail_channels = 24;
  cfg.num_classes = classes;
  return cfg;
}

struct TinySetup {
  std::vector<datasets::CropSample> crops;
  std::vector<DetectorSample> det_train;
};

TinySetup tiny_setup(uint64_t seed = 43, bool with_reenactment = false) {
  synthworld::WorldConfig w;
  w.identities = 4;
  w.image_size = 32;
  w.frames_per_identity = 8;
  w.master_seed = seed;
  auto samples = synthworld::build_dataset(w, 2);
  TinySetup out;
  out.crops = datasets::make_crop_samples(samples, 1.2, 32, 2);
  out.det_train = datasets::detector_samples(out.crops, synthworld::Split::train, with_reenactment);
  return out;
}

FusionModel tiny_fusion(bool with_er, uint64_t seed) {
  identnet::IdModel ef(tiny_id_cfg(4), seed_chain(seed, {1}));
  identnet::IdModel ec(tiny_id_cfg(4), seed_chain(seed, {2}));
  identnet::IdModel es(tiny_id_cfg(1), seed_chain(seed, {3}));
  std::optional<identnet::IdModel> er;
  if (with_er) er.emplace(tiny_id_cfg(1), seed_chain(seed, {4}));
  FusionVariant variant = configure_variant(with_er, 4, 24);
  return FusionModel(std::move(ef), std::move(ec), std::move(es), std::move(er), variant, 32,
                     seed_chain(seed, {5}));
}

}  // namespace

TEST_CASE("discrepancy: identity case, one-hot arithmetic, errors") {
  std::vector<Real> v(8, 0.125f);
  auto zero = discrepancy(v, v);
  for (Real x : zero) CHECK(x == 0.0f);

  std::vector<Real> vf(8, 0.0f), vc(8, 0.0f);
  vf[2] = 1.0f;
  vc[5] = 1.0f;
  auto d = discrepancy(vf, vc);
  CHECK(d[2] == 1.0f);
  CHECK(d[5] == -1.0f);
  for (size_t i = 0; i < d.size(); ++i)
    if (i != 2 && i != 5) CHECK(d[i] == 0.0f);
  CHECK(l1_norm(d) == doctest::Approx(2.0));  // maximal

  CHECK_THROWS_AS(discrepancy(vf, std::vector<Real>(4, 0.25f)), std::invalid_argument);
}

TEST_CASE("discrepancy of unit-sum vectors sums to zero (property)") {
  Rng rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    int k = rng.uniform_int(2, 40);
    std::vector<Real> vf(static_cast<size_t>(k)), vc(static_cast<size_t>(k));
    double sf = 0, sc = 0;
    for (int i = 0; i < k; ++i) {
      vf[static_cast<size_t>(i)] = static_cast<Real>(rng.uniform());
      vc[static_cast<size_t>(i)] = static_cast<Real>(rng.uniform());
      sf += vf[static_cast<size_t>(i)];
      sc += vc[static_cast<size_t>(i)];
    }
    for (int i = 0; i < k; ++i) {
      vf[static_cast<size_t>(i)] = static_cast<Real>(vf[static_cast<size_t>(i)] / sf);
      vc[static_cast<size_t>(i)] = static_cast<Real>(vc[static_cast<size_t>(i)] / sc);
    }
    auto d = discrepancy(vf, vc);
    double sum = 0;
    for (Real x : d) sum += x;
    CHECK(std::abs(sum) < 1e-6);
    for (Real x : d) {
      CHECK(x >= -1.0f);
      CHECK(x <= 1.0f);
    }
  }
}

TEST_CASE("configure_variant fixes D's input width") {
  FusionVariant no_er = configure_variant(false, 32, 128);
  CHECK(no_er.d_input_width() == 32 + 128);
  FusionVariant with_er = configure_variant(true, 32, 128);
  CHECK(with_er.d_input_width() == 32 + 2 * 128);
  CHECK_THROWS_AS(configure_variant(false, 1, 128), std::invalid_argument);
}

TEST_CASE("binary_forward: deterministic pairs and configured penultimate width") {
  identnet::IdModel es(tiny_id_cfg(1), 9);
  Rng rng(5);
  Image crop(32, 32, 3);
  for (auto& v : crop.data) v = static_cast<Real>(rng.uniform());
  BinaryForward a = binary_forward(es, crop);
  BinaryForward b = binary_forward(es, crop);
  CHECK(a.score == b.score);
  CHECK(a.penult == b.penult);
  CHECK(a.penult.size() == 24);

  identnet::IdModel not_binary(tiny_id_cfg(4), 9);
  CHECK_THROWS_AS(binary_forward(not_binary, crop), std::invalid_argument);
}

TEST_CASE("classifier D: zero input yields the finite bias pathway; batches decouple in inference") {
  Rng rng(7);
  ClassifierD d;
  d.init(10, 16, rng);
  ClassifierD::Workspace ws;
  std::vector<Real> zero(10, 0.0f);
  d.forward(zero.data(), 1, false, false, ws);
  Real bias_value = ws.logits[0];
  CHECK(std::isfinite(bias_value));

  // Permuting batch rows permutes scores identically in inference mode.
  const int n = 5;
  std::vector<Real> x(static_cast<size_t>(n) * 10);
  for (auto& v : x) v = static_cast<Real>(rng.uniform(-1, 1));
  d.forward(x.data(), n, false, false, ws);
  std::vector<Real> scores(ws.logits);

  std::vector<int> perm = {3, 0, 4, 1, 2};
  std::vector<Real> xp(x.size());
  for (int i = 0; i < n; ++i)
    std::copy(x.begin() + perm[static_cast<size_t>(i)] * 10, x.begin() + (perm[static_cast<size_t>(i)] + 1) * 10,
              xp.begin() + static_cast<long>(i) * 10);
  d.forward(xp.data(), n, false, false, ws);
  for (int i = 0; i < n; ++i) CHECK(ws.logits[static_cast<size_t>(i)] == scores[static_cast<size_t>(perm[static_cast<size_t>(i)])]);
}

TEST_CASE("train_detector: frozen mode leaves identity nets bit-identical") {
  TinySetup setup = tiny_setup(51);
  FusionModel model = tiny_fusion(false, 51);

  uint64_t ef_before = model_checksum(model.ef());
  uint64_t ec_before = model_checksum(model.ec());
  uint64_t es_before = model_checksum(model.es());

  // Probe outputs before training for the freeze invariant.
  const auto& probe = setup.det_train.front();
  Image i_f = identnet::make_role_input(probe.crop, probe.mask, identnet::Role::face, 0.5f);
  auto vf_before = model.ef().forward(i_f).probs;

  DetectorTrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 2;
  cfg.seed = 3;
  auto result = train_detector(model, setup.det_train, TrainMode::frozen, cfg);
  CHECK(result.epoch_loss.size() == 2);

  CHECK(model_checksum(model.ef()) == ef_before);
  CHECK(model_checksum(model.ec()) == ec_before);
  CHECK(model_checksum(model.es()) != es_before);  // E_s is fine-tuned
  CHECK(model.ef().forward(i_f).probs == vf_before);
}

TEST_CASE("train_detector: end-to-end mode updates the identity nets") {
  TinySetup setup = tiny_setup(53);
  FusionModel model = tiny_fusion(false, 53);
  uint64_t ef_before = model_checksum(model.ef());
  DetectorTrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 2;
  cfg.seed = 5;
  train_detector(model, setup.det_train, TrainMode::end_to_end, cfg);
  CHECK(model_checksum(model.ef()) != ef_before);
}

TEST_CASE("both detector variants train through a smoke epoch with consistent shapes") {
  for (bool with_er : {false, true}) {
    TinySetup setup = tiny_setup(57, with_er);
    FusionModel model = tiny_fusion(with_er, 57);
    CHECK(model.variant().d_input_width() == (with_er ? 4 + 48 : 4 + 24));
    DetectorTrainConfig cfg;
    cfg.batch_size = 8;
    cfg.epochs = 1;
    cfg.seed = 7;
    auto result = train_detector(model, setup.det_train, TrainMode::frozen, cfg);
    CHECK(result.epoch_loss.size() == 1);
    CHECK(std::isfinite(result.epoch_loss[0]));

    const auto& probe = setup.det_train.front();
    auto feats = model.score_face(probe.crop, probe.mask, 0.5f);
    CHECK(feats.v_d.size() == 4);
    CHECK(feats.v_s.size() == 24);
    CHECK(feats.v_r.size() == (with_er ? 24 : 0));
    CHECK(std::isfinite(feats.d_score));
  }
}

TEST_CASE("composite checkpoint round trips the whole detector") {
  namespace fs = std::filesystem;
  TinySetup setup = tiny_setup(61);
  FusionModel model = tiny_fusion(false, 61);
  DetectorTrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 1;
  cfg.seed = 11;
  train_detector(model, setup.det_train, TrainMode::frozen, cfg);

  fs::path dir = fs::temp_directory_path() / "fcd_tests" / "fusion_ckpt";
  fs::create_directories(dir);
  std::string path = (dir / "detector.fckpt").string();
  model.save(path, {{"note", "test"}});

  FusionModel loaded = FusionModel::load_file(path);
  CHECK(loaded.variant().with_reenactment == false);
  const auto& probe = setup.det_train.front();
  auto a = model.score_face(probe.crop, probe.mask, 0.5f);
  auto b = loaded.score_face(probe.crop, probe.mask, 0.5f);
  CHECK(a.d_score == b.d_score);
  CHECK(a.v_d == b.v_d);
  CHECK(a.es_score == b.es_score);
}

TEST_CASE("train_detector validates its dataset") {
  FusionModel model = tiny_fusion(false, 63);
  DetectorTrainConfig cfg;
  std::vector<DetectorSample> empty;
  CHECK_THROWS_AS(train_detector(model, empty, TrainMode::frozen, cfg), std::invalid_argument);

  TinySetup setup = tiny_setup(63);
  std::vector<DetectorSample> reals_only;
  for (const auto& s : setup.det_train)
    if (s.target_sign > 0) reals_only.push_back(s);
  CHECK_THROWS_AS(train_detector(model, reals_only, TrainMode::frozen, cfg), std::invalid_argument);
}
