#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fcd/identnet.hpp"
#include "fcd/nn/kernels.hpp"

namespace fcd::fusion {

// v_d = v_f - v_c, elementwise, no renormalization. Entries sum to ~0 for
// unit-sum inputs.
std::vector<Real> discrepancy(const std::vector<Real>& v_f, const std::vector<Real>& v_c);

double l1_norm(const std::vector<Real>& v);

// Final classifier: linear -> batch normalization -> ReLU -> linear -> one
// logit. Positive logit means real, so the minimum over faces selects the
// most-fake face.
template <typename S>
struct ClassifierDT {
  int input_width = 0;
  int hidden = 256;
  nn::Linear<S> fc1, fc2;
  nn::BatchNorm1d<S> bn;

  void init(int in_width, int hidden_width, Rng& rng) {
    input_width = in_width;
    hidden = hidden_width;
    // Weights drawn from a normal distribution; biases zero.
    fc1.init("d.fc1", in_width, hidden_width, rng, 0.02);
    bn.init("d.bn", hidden_width);
    fc2.init("d.fc2", hidden_width, 1, rng, 0.02);
  }

  void collect_params(std::vector<nn::Param<S>*>& out) {
    fc1.collect_params(out);
    bn.collect_params(out);
    fc2.collect_params(out);
  }

  struct Workspace {
    std::vector<S> h1, act, logits;
    std::vector<S> d_h1, d_act;
    typename nn::BatchNorm1d<S>::Cache bn_cache;
  };

  // x: [n, input_width] row-major; fills ws.logits [n]. Batch-normalization
  // mode is explicit: training uses batch statistics, inference the running
  // estimates.
  void forward(const S* x, int n, bool training, bool update_running, Workspace& ws) {
    ws.h1.resize(static_cast<size_t>(n) * hidden);
    ws.act.resize(ws.h1.size());
    ws.logits.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
      fc1.forward(x + static_cast<size_t>(i) * input_width, ws.h1.data() + static_cast<size_t>(i) * hidden);
    bn.forward(ws.h1.data(), n, ws.act.data(), training, update_running, ws.bn_cache);
    nn::relu_forward(ws.act.data(), ws.act.size());
    for (int i = 0; i < n; ++i)
      fc2.forward(ws.act.data() + static_cast<size_t>(i) * hidden, ws.logits.data() + i);
  }

  // dx (nullable): [n, input_width], must be zeroed by the caller.
  void backward(const S* x, const S* dlogits, int n, Workspace& ws, S* dx) {
    ws.d_act.assign(ws.act.size(), S(0));
    ws.d_h1.assign(ws.h1.size(), S(0));
    for (int i = 0; i < n; ++i)
      fc2.backward(ws.act.data() + static_cast<size_t>(i) * hidden, dlogits + i,
                   ws.d_act.data() + static_cast<size_t>(i) * hidden);
    nn::relu_backward(ws.act.data(), ws.d_act.data(), ws.act.size());
    bn.backward(ws.bn_cache, ws.d_act.data(), ws.d_h1.data());
    for (int i = 0; i < n; ++i)
      fc1.backward(x + static_cast<size_t>(i) * input_width, ws.d_h1.data() + static_cast<size_t>(i) * hidden,
                   dx ? dx + static_cast<size_t>(i) * input_width : nullptr);
  }
};

using ClassifierD = ClassifierDT<Real>;

// Detector composition switch: omitting the reenactment network shrinks D's
// input width by one penultimate-vector span.
struct FusionVariant {
  bool with_reenactment = false;
  int identity_count = 32;    // K, the v_d width
  int penult_width = 128;     // P
  bool discrepancy_from_logits = false;

  int d_input_width() const { return identity_count + penult_width * (with_reenactment ? 2 : 1); }
};

FusionVariant configure_variant(bool with_reenactment, int identity_count, int penult_width,
                                bool discrepancy_from_logits = false);

// Full detector bundle of Fig-style composition: two frozen identity
// networks, the manipulation-specific binary network(s), and classifier D.
class FusionModel {
 public:
  FusionModel(identnet::IdModel ef, identnet::IdModel ec, identnet::IdModel es,
              std::optional<identnet::IdModel> er, const FusionVariant& variant, int d_hidden,
              uint64_t init_seed);

  const FusionVariant& variant() const { return variant_; }
  identnet::IdModel& ef() { return ef_; }
  identnet::IdModel& ec() { return ec_; }
  identnet::IdModel& es() { return es_; }
  std::optional<identnet::IdModel>& er() { return er_; }
  const identnet::IdModel& ef() const { return ef_; }
  const identnet::IdModel& ec() const { return ec_; }
  const identnet::IdModel& es() const { return es_; }
  const std::optional<identnet::IdModel>& er() const { return er_; }
  ClassifierD& d() { return d_; }

  struct FaceFeatures {
    std::vector<Real> v_f, v_c, v_d, v_s, v_r;
    Real es_score = 0;  // standalone binary logit
    Real er_score = 0;
    Real d_score = 0;  // fused logit, positive = real
  };

  // Inference path for one preprocessed face crop (BN in running-stats mode).
  FaceFeatures score_face(const Image& crop, const Mask& seg_mask, Real fill) const;

  void save(const std::string& path, const nlohmann::json& extra = {}) const;
  static FusionModel load_file(const std::string& path);

 private:
  identnet::IdModel ef_, ec_, es_;
  std::optional<identnet::IdModel> er_;
  FusionVariant variant_;
  mutable ClassifierD d_;
};

struct DetectorSample {
  Image crop;
  Mask mask;
  int target_sign = 1;  // +1 real, -1 fake
};

enum class TrainMode { frozen, end_to_end };

struct DetectorTrainConfig {
  int batch_size = 16;
  int epochs = 12;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int lr_halve_every = 10;
  Real fill = 0.5f;
  uint64_t seed = 0;
  int threads = 0;
};

struct DetectorTrainResult {
  std::vector<double> epoch_loss;
};

// Trains D (random init) with a logistic loss while fine-tuning E_s (and E_r
// when present). In frozen mode the identity networks are never touched; in
// end-to-end mode their weights are updated through the discrepancy path.
DetectorTrainResult train_detector(FusionModel& model, const std::vector<DetectorSample>& dataset,
                                   TrainMode mode, const DetectorTrainConfig& cfg);

// Binary (real vs fake) pretraining of a manipulation-specific network.
struct BinaryTrainConfig {
  int batch_size = 16;
  int epochs = 8;
  double learning_rate = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int lr_halve_every = 10;
  double hflip_prob = 0.5;
  uint64_t seed = 0;
  int threads = 0;
};

struct BinarySample {
  Image crop;
  int target_sign = 1;  // +1 real, -1 fake
};

struct BinaryTrainResult {
  std::vector<double> epoch_loss;
};

BinaryTrainResult train_binary(identnet::IdModel& model, const std::vector<BinarySample>& dataset,
                               const BinaryTrainConfig& cfg);

// Standalone binary network forward: (score, penultimate vector).
struct BinaryForward {
  Real score = 0;
  std::vector<Real> penult;
};
BinaryForward binary_forward(const identnet::IdModel& model, const Image& crop);

// FNV-style digest of parameter bytes; used for freeze contracts.
uint64_t params_checksum(const std::vector<nn::Param<Real>*>& params);
uint64_t model_checksum(const identnet::IdModel& model);

}  // namespace fcd::fusion
