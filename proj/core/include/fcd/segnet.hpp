#pragma once

#include <string>
#include <vector>

#include "fcd/checkpoint.hpp"
#include "fcd/image.hpp"
#include "fcd/nn/kernels.hpp"

namespace fcd::segnet {

struct SegConfig {
  int input_size = 64;
  int in_channels = 3;
  int base_channels = 16;
  int depth = 3;  // down/up levels
};

// Encoder-decoder face/context segmenter. Upsampling is bilinear
// interpolation followed by a convolution; skip connections concatenate.
template <typename S>
struct UNetT {
  SegConfig cfg;
  std::vector<nn::Conv2d<S>> enc;      // 3x3, one per level
  nn::Conv2d<S> bottleneck;            // 3x3
  std::vector<nn::Conv2d<S>> up_proj;  // 1x1 after each upsample
  std::vector<nn::Conv2d<S>> merge;    // 3x3 after each skip concat
  nn::Conv2d<S> head;                  // 1x1 -> 2 channels

  int enc_channels(int level) const { return cfg.base_channels << level; }
  int bott_channels() const { return cfg.base_channels << cfg.depth; }
  int level_size(int level) const { return cfg.input_size >> level; }
  int conv_count() const { return 3 * cfg.depth + 2; }

  void init(const SegConfig& config, Rng& rng) {
    cfg = config;
    check_arg(cfg.depth >= 1 && cfg.base_channels >= 1, "segnet: bad config");
    check_arg((cfg.input_size >> cfg.depth) << cfg.depth == cfg.input_size,
              "segnet: input_size must be divisible by 2^depth");
    enc.resize(static_cast<size_t>(cfg.depth));
    up_proj.resize(static_cast<size_t>(cfg.depth));
    merge.resize(static_cast<size_t>(cfg.depth));
    int in_c = cfg.in_channels;
    for (int l = 0; l < cfg.depth; ++l) {
      enc[static_cast<size_t>(l)].init("enc" + std::to_string(l), in_c, enc_channels(l), 3, 1, 1, rng);
      in_c = enc_channels(l);
    }
    bottleneck.init("bott", enc_channels(cfg.depth - 1), bott_channels(), 3, 1, 1, rng);
    for (int l = cfg.depth - 1; l >= 0; --l) {
      int cur = (l == cfg.depth - 1) ? bott_channels() : enc_channels(l + 1);
      up_proj[static_cast<size_t>(l)].init("up" + std::to_string(l), cur, enc_channels(l), 1, 1, 0, rng);
      merge[static_cast<size_t>(l)].init("mrg" + std::to_string(l), 2 * enc_channels(l), enc_channels(l), 3,
                                         1, 1, rng);
    }
    head.init("head", cfg.base_channels, 2, 1, 1, 0, rng);
  }

  void collect_params(std::vector<nn::Param<S>*>& out) {
    for (auto& c : enc) c.collect_params(out);
    bottleneck.collect_params(out);
    for (auto& c : up_proj) c.collect_params(out);
    for (auto& c : merge) c.collect_params(out);
    head.collect_params(out);
  }

  struct Workspace {
    std::vector<std::vector<S>> enc_act, pooled, up_out, proj_act, cat, merge_act;
    std::vector<std::vector<uint8_t>> pool_arg;
    std::vector<S> bott_act, logits;
    std::vector<std::vector<S>> cols;  // per conv id
    std::vector<S> dcols;
    // backward mirrors
    std::vector<std::vector<S>> d_enc_act, d_pooled, d_up_out, d_proj_act, d_cat, d_merge_act;
    std::vector<S> d_bott_act;
  };

  void setup(Workspace& ws) const {
    int d = cfg.depth;
    auto sz = [&](int level) { return level_size(level) * level_size(level); };
    ws.enc_act.resize(static_cast<size_t>(d));
    ws.pooled.resize(static_cast<size_t>(d));
    ws.pool_arg.resize(static_cast<size_t>(d));
    ws.up_out.resize(static_cast<size_t>(d));
    ws.proj_act.resize(static_cast<size_t>(d));
    ws.cat.resize(static_cast<size_t>(d));
    ws.merge_act.resize(static_cast<size_t>(d));
    ws.d_enc_act.resize(static_cast<size_t>(d));
    ws.d_pooled.resize(static_cast<size_t>(d));
    ws.d_up_out.resize(static_cast<size_t>(d));
    ws.d_proj_act.resize(static_cast<size_t>(d));
    ws.d_cat.resize(static_cast<size_t>(d));
    ws.d_merge_act.resize(static_cast<size_t>(d));
    for (int l = 0; l < d; ++l) {
      size_t li = static_cast<size_t>(l);
      ws.enc_act[li].resize(static_cast<size_t>(enc_channels(l)) * sz(l));
      ws.pooled[li].resize(static_cast<size_t>(enc_channels(l)) * sz(l + 1));
      ws.pool_arg[li].resize(ws.pooled[li].size());
      int cur = (l == d - 1) ? bott_channels() : enc_channels(l + 1);
      ws.up_out[li].resize(static_cast<size_t>(cur) * sz(l));
      ws.proj_act[li].resize(static_cast<size_t>(enc_channels(l)) * sz(l));
      ws.cat[li].resize(static_cast<size_t>(2 * enc_channels(l)) * sz(l));
      ws.merge_act[li].resize(static_cast<size_t>(enc_channels(l)) * sz(l));
      ws.d_enc_act[li].resize(ws.enc_act[li].size());
      ws.d_pooled[li].resize(ws.pooled[li].size());
      ws.d_up_out[li].resize(ws.up_out[li].size());
      ws.d_proj_act[li].resize(ws.proj_act[li].size());
      ws.d_cat[li].resize(ws.cat[li].size());
      ws.d_merge_act[li].resize(ws.merge_act[li].size());
    }
    ws.bott_act.resize(static_cast<size_t>(bott_channels()) * sz(d));
    ws.d_bott_act.resize(ws.bott_act.size());
    ws.logits.resize(static_cast<size_t>(2) * sz(0));
    ws.cols.resize(static_cast<size_t>(conv_count()));
  }

  // image: CHW [in_channels, input_size, input_size]; fills ws.logits.
  void forward(const S* image, Workspace& ws) const {
    int d = cfg.depth;
    const S* cur = image;
    int conv_id = 0;
    for (int l = 0; l < d; ++l) {
      size_t li = static_cast<size_t>(l);
      int s = level_size(l);
      enc[li].forward(cur, s, s, ws.enc_act[li].data(), ws.cols[static_cast<size_t>(conv_id++)]);
      nn::relu_forward(ws.enc_act[li].data(), ws.enc_act[li].size());
      nn::maxpool2x2_forward(ws.enc_act[li].data(), enc_channels(l), s, s, ws.pooled[li].data(),
                             ws.pool_arg[li].data());
      cur = ws.pooled[li].data();
    }
    int sb = level_size(d);
    bottleneck.forward(cur, sb, sb, ws.bott_act.data(), ws.cols[static_cast<size_t>(conv_id++)]);
    nn::relu_forward(ws.bott_act.data(), ws.bott_act.size());

    cur = ws.bott_act.data();
    int cur_ch = bott_channels();
    for (int l = d - 1; l >= 0; --l) {
      size_t li = static_cast<size_t>(l);
      int s_in = level_size(l + 1), s_out = level_size(l);
      nn::upsample2x_forward(cur, cur_ch, s_in, s_in, ws.up_out[li].data());
      up_proj[li].forward(ws.up_out[li].data(), s_out, s_out, ws.proj_act[li].data(),
                          ws.cols[static_cast<size_t>(conv_id++)]);
      nn::relu_forward(ws.proj_act[li].data(), ws.proj_act[li].size());
      size_t half = ws.proj_act[li].size();
      std::copy(ws.proj_act[li].begin(), ws.proj_act[li].end(), ws.cat[li].begin());
      std::copy(ws.enc_act[li].begin(), ws.enc_act[li].end(), ws.cat[li].begin() + static_cast<long>(half));
      merge[li].forward(ws.cat[li].data(), s_out, s_out, ws.merge_act[li].data(),
                        ws.cols[static_cast<size_t>(conv_id++)]);
      nn::relu_forward(ws.merge_act[li].data(), ws.merge_act[li].size());
      cur = ws.merge_act[li].data();
      cur_ch = enc_channels(l);
    }
    head.forward(cur, level_size(0), level_size(0), ws.logits.data(), ws.cols[static_cast<size_t>(conv_id)]);
  }

  // dlogits: gradient at ws.logits. Accumulates parameter gradients.
  void backward(const S* image, const S* dlogits, Workspace& ws) {
    int d = cfg.depth;
    int conv_id = conv_count() - 1;
    for (auto& buf : ws.d_enc_act) std::fill(buf.begin(), buf.end(), S(0));
    std::fill(ws.d_bott_act.begin(), ws.d_bott_act.end(), S(0));

    std::fill(ws.d_merge_act[0].begin(), ws.d_merge_act[0].end(), S(0));
    head.backward(dlogits, level_size(0), level_size(0), ws.cols[static_cast<size_t>(conv_id--)],
                  ws.d_merge_act[0].data(), ws.dcols);

    for (int l = 0; l < d; ++l) {
      size_t li = static_cast<size_t>(l);
      int s_in = level_size(l + 1), s_out = level_size(l);
      int cur_ch = (l == d - 1) ? bott_channels() : enc_channels(l + 1);
      nn::relu_backward(ws.merge_act[li].data(), ws.d_merge_act[li].data(), ws.merge_act[li].size());
      std::fill(ws.d_cat[li].begin(), ws.d_cat[li].end(), S(0));
      merge[li].backward(ws.d_merge_act[li].data(), s_out, s_out, ws.cols[static_cast<size_t>(conv_id--)],
                         ws.d_cat[li].data(), ws.dcols);
      size_t half = ws.proj_act[li].size();
      std::copy(ws.d_cat[li].begin(), ws.d_cat[li].begin() + static_cast<long>(half),
                ws.d_proj_act[li].begin());
      for (size_t i = 0; i < ws.enc_act[li].size(); ++i)
        ws.d_enc_act[li][i] += ws.d_cat[li][half + i];  // skip-path gradient
      nn::relu_backward(ws.proj_act[li].data(), ws.d_proj_act[li].data(), ws.proj_act[li].size());
      std::fill(ws.d_up_out[li].begin(), ws.d_up_out[li].end(), S(0));
      up_proj[li].backward(ws.d_proj_act[li].data(), s_out, s_out, ws.cols[static_cast<size_t>(conv_id--)],
                           ws.d_up_out[li].data(), ws.dcols);
      S* d_cur = (l == d - 1) ? ws.d_bott_act.data() : ws.d_merge_act[static_cast<size_t>(l + 1)].data();
      if (l != d - 1)
        std::fill(ws.d_merge_act[static_cast<size_t>(l + 1)].begin(),
                  ws.d_merge_act[static_cast<size_t>(l + 1)].end(), S(0));
      nn::upsample2x_backward(ws.d_up_out[li].data(), cur_ch, s_in, s_in, d_cur);
    }

    nn::relu_backward(ws.bott_act.data(), ws.d_bott_act.data(), ws.bott_act.size());
    int sb = level_size(d);
    std::fill(ws.d_pooled[static_cast<size_t>(d - 1)].begin(), ws.d_pooled[static_cast<size_t>(d - 1)].end(),
              S(0));
    bottleneck.backward(ws.d_bott_act.data(), sb, sb, ws.cols[static_cast<size_t>(conv_id--)],
                        ws.d_pooled[static_cast<size_t>(d - 1)].data(), ws.dcols);

    for (int l = d - 1; l >= 0; --l) {
      size_t li = static_cast<size_t>(l);
      int s = level_size(l);
      nn::maxpool2x2_backward(ws.d_pooled[li].data(), enc_channels(l), s, s, ws.pool_arg[li].data(),
                              ws.d_enc_act[li].data());
      nn::relu_backward(ws.enc_act[li].data(), ws.d_enc_act[li].data(), ws.enc_act[li].size());
      S* din = nullptr;
      if (l > 0) {
        din = ws.d_pooled[static_cast<size_t>(l - 1)].data();
        std::fill(ws.d_pooled[static_cast<size_t>(l - 1)].begin(),
                  ws.d_pooled[static_cast<size_t>(l - 1)].end(), S(0));
      }
      (void)image;
      enc[li].backward(ws.d_enc_act[li].data(), s, s, ws.cols[static_cast<size_t>(conv_id--)], din,
                       ws.dcols);
    }
  }

  void save_state(Checkpoint& ckpt, const std::string& prefix) {
    std::vector<nn::Param<S>*> params;
    collect_params(params);
    ckpt.put_params(prefix, params);
  }
  void load_state(const Checkpoint& ckpt, const std::string& prefix) {
    std::vector<nn::Param<S>*> params;
    collect_params(params);
    ckpt.load_params(prefix, params);
  }
};

using UNet = UNetT<Real>;

// Converts an interleaved image to the planar layout the networks consume.
void image_to_chw(const Image& img, std::vector<Real>& out);

// Inference wrapper around a trained (or fresh) UNet.
class SegModel {
 public:
  explicit SegModel(const SegConfig& cfg, uint64_t init_seed = 0);

  const SegConfig& config() const { return cfg_; }
  UNet& net() { return net_; }
  const UNet& net() const { return net_; }

  // Per-pixel probabilities, planar [2, s, s]; channel pair sums to 1.
  std::vector<Real> forward_probs(const Image& crop) const;
  // Argmax face mask.
  Mask predict_mask(const Image& crop) const;

  void save(const std::string& path, const nlohmann::json& extra_meta = {}) const;
  static SegModel load_file(const std::string& path);

 private:
  SegConfig cfg_;
  mutable UNet net_;
};

struct AugmentationPolicy {
  double rotation_degrees = 30.0;  // uniform in +/- range
  double hflip_prob = 0.5;
  double blur_prob = 0.5;
  int blur_kernel = 5;
  double blur_sigma = 1.1;
  double brightness = 0.2;
  double contrast = 0.2;
  double saturation = 0.2;
  double hue = 0.05;

  void validate() const;
  static AugmentationPolicy none() {
    AugmentationPolicy p;
    p.rotation_degrees = 0;
    p.hflip_prob = 0;
    p.blur_prob = 0;
    p.brightness = p.contrast = p.saturation = p.hue = 0;
    return p;
  }
};

struct SegSample {
  Image crop;
  Mask mask;
};

// Rotation/flip applied identically to image and mask (nearest-neighbor for
// the mask); photometric jitter and blur touch the image only.
SegSample augment(const SegSample& sample, const AugmentationPolicy& policy, Rng& rng);

struct SegTrainConfig {
  int batch_size = 16;
  int iters_per_epoch = 500;
  int epochs = 3;
  double learning_rate = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int lr_halve_every = 10;
  uint64_t seed = 0;
  int threads = 0;
  AugmentationPolicy augment;
};

struct SegTrainResult {
  std::vector<double> epoch_loss;
  std::vector<std::string> checkpoint_paths;
};

// Trains on (crop, mask) pairs; writes one checkpoint per epoch when
// `out_dir` is non-empty. Aborts with the offending batch index if the loss
// goes non-finite.
SegTrainResult seg_train(SegModel& model, const std::vector<SegSample>& dataset,
                         const SegTrainConfig& cfg, const std::string& out_dir);

// Mean over samples of the face/background IoU average.
double mean_iou(const SegModel& model, const std::vector<SegSample>& dataset);

}  // namespace fcd::segnet
