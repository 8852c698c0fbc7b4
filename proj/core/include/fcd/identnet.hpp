#pragma once

#include <string>
#include <vector>

#include "fcd/checkpoint.hpp"
#include "fcd/image.hpp"
#include "fcd/nn/kernels.hpp"
#include "fcd/preprocess.hpp"

namespace fcd::identnet {

// Recognition backbone: strided entry convolution, depthwise-separable
// blocks with residual connections (disabled on the last block), two tail
// separable convolutions, global average pooling, linear head.
struct BackboneConfig {
  int input_size = 64;
  int in_channels = 3;
  int entry_channels = 32;
  int entry_stride = 2;
  std::vector<int> block_channels = {64, 96, 128, 128};
  std::vector<int> block_strides = {2, 2, 2, 1};
  std::vector<int> residual_flags;  // empty = residual everywhere but the last block
  int tail_channels = 128;          // penultimate width
  int num_classes = 32;

  bool block_residual(size_t b) const {
    if (!residual_flags.empty()) return residual_flags[b] != 0;
    return b + 1 != block_channels.size();
  }
  void validate() const {
    check_arg(!block_channels.empty(), "backbone: need at least one block");
    check_arg(block_channels.size() == block_strides.size(), "backbone: block config length mismatch");
    check_arg(residual_flags.empty() || residual_flags.size() == block_channels.size(),
              "backbone: residual flag length mismatch");
    check_arg(num_classes >= 1 && tail_channels >= 1 && entry_channels >= 1, "backbone: bad widths");
    for (int s : block_strides) check_arg(s == 1 || s == 2, "backbone: block strides must be 1 or 2");
  }
};

template <typename S>
struct BackboneT {
  BackboneConfig cfg;
  nn::Conv2d<S> entry;
  struct Block {
    nn::DepthwiseConv3x3<S> dw1;
    nn::Conv2d<S> pw1;
    nn::DepthwiseConv3x3<S> dw2;
    nn::Conv2d<S> pw2;
    nn::Conv2d<S> shortcut;  // 1x1 projection when shape changes
    bool has_proj = false;
    bool pool = false;
    bool residual = true;
    int in_ch = 0, out_ch = 0, in_size = 0, out_size = 0;
    int pw1_id = 0, pw2_id = 0, short_id = 0;
  };
  std::vector<Block> blocks;
  nn::DepthwiseConv3x3<S> tail_dw1;
  nn::Conv2d<S> tail_pw1;
  nn::DepthwiseConv3x3<S> tail_dw2;
  nn::Conv2d<S> tail_pw2;
  nn::Linear<S> head;
  int final_size = 0;
  int n_cols = 0;

  void init(const BackboneConfig& config, Rng& rng) {
    cfg = config;
    cfg.validate();
    int col_id = 0;
    entry.init("entry", cfg.in_channels, cfg.entry_channels, 3, cfg.entry_stride, 1, rng);
    ++col_id;  // entry uses cols[0]
    int size = entry.out_extent(cfg.input_size);
    int ch = cfg.entry_channels;
    blocks.resize(cfg.block_channels.size());
    for (size_t b = 0; b < blocks.size(); ++b) {
      Block& blk = blocks[b];
      blk.in_ch = ch;
      blk.out_ch = cfg.block_channels[b];
      blk.in_size = size;
      blk.pool = cfg.block_strides[b] == 2;
      blk.residual = cfg.block_residual(b);
      check_arg(!blk.pool || size % 2 == 0, "backbone: odd extent before pooling");
      blk.out_size = blk.pool ? size / 2 : size;
      std::string name = "b" + std::to_string(b);
      blk.dw1.init(name + ".dw1", blk.in_ch, rng);
      blk.pw1.init(name + ".pw1", blk.in_ch, blk.out_ch, 1, 1, 0, rng);
      blk.pw1_id = col_id++;
      blk.dw2.init(name + ".dw2", blk.out_ch, rng);
      blk.pw2.init(name + ".pw2", blk.out_ch, blk.out_ch, 1, 1, 0, rng);
      blk.pw2_id = col_id++;
      blk.has_proj = blk.residual && (blk.in_ch != blk.out_ch || blk.pool);
      if (blk.has_proj) {
        blk.shortcut.init(name + ".short", blk.in_ch, blk.out_ch, 1, blk.pool ? 2 : 1, 0, rng);
        blk.short_id = col_id++;
      }
      ch = blk.out_ch;
      size = blk.out_size;
    }
    final_size = size;
    tail_dw1.init("tail.dw1", ch, rng);
    tail_pw1.init("tail.pw1", ch, cfg.tail_channels, 1, 1, 0, rng);
    int tail_pw1_id = col_id++;
    (void)tail_pw1_id;
    tail_dw2.init("tail.dw2", cfg.tail_channels, rng);
    tail_pw2.init("tail.pw2", cfg.tail_channels, cfg.tail_channels, 1, 1, 0, rng);
    ++col_id;
    // Zero-initialized head: an untrained model emits the uniform vector.
    head.init("head", cfg.tail_channels, cfg.num_classes, rng, 0.0);
    n_cols = col_id;
  }

  int tail_pw1_col() const { return n_cols - 2; }
  int tail_pw2_col() const { return n_cols - 1; }

  void collect_params(std::vector<nn::Param<S>*>& out) {
    entry.collect_params(out);
    for (auto& b : blocks) {
      b.dw1.collect_params(out);
      b.pw1.collect_params(out);
      b.dw2.collect_params(out);
      b.pw2.collect_params(out);
      if (b.has_proj) b.shortcut.collect_params(out);
    }
    tail_dw1.collect_params(out);
    tail_pw1.collect_params(out);
    tail_dw2.collect_params(out);
    tail_pw2.collect_params(out);
    head.collect_params(out);
  }

  struct BlockWs {
    std::vector<S> dw1_out, sep1_out, dw2_out, sep2_out, pooled, short_out, out;
    std::vector<uint8_t> argmax;
    std::vector<S> d_dw1_out, d_sep1_out, d_dw2_out, d_sep2_out, d_pooled, d_out;
  };
  struct Workspace {
    std::vector<S> entry_out, d_entry_out;
    std::vector<BlockWs> blocks;
    std::vector<S> tail_dw1_out, tail1_out, tail_dw2_out, tail2_out;
    std::vector<S> d_tail_dw1_out, d_tail1_out, d_tail_dw2_out, d_tail2_out;
    std::vector<S> penult, logits, d_penult;
    std::vector<std::vector<S>> cols;
    std::vector<S> dcols;
  };

  void setup(Workspace& ws) const {
    int esz = entry.out_extent(cfg.input_size);
    ws.entry_out.resize(static_cast<size_t>(cfg.entry_channels) * esz * esz);
    ws.d_entry_out.resize(ws.entry_out.size());
    ws.blocks.resize(blocks.size());
    for (size_t b = 0; b < blocks.size(); ++b) {
      const Block& blk = blocks[b];
      BlockWs& bw = ws.blocks[b];
      size_t in_hw = static_cast<size_t>(blk.in_size) * blk.in_size;
      size_t out_hw = static_cast<size_t>(blk.out_size) * blk.out_size;
      bw.dw1_out.resize(static_cast<size_t>(blk.in_ch) * in_hw);
      bw.sep1_out.resize(static_cast<size_t>(blk.out_ch) * in_hw);
      bw.dw2_out.resize(static_cast<size_t>(blk.out_ch) * in_hw);
      bw.sep2_out.resize(static_cast<size_t>(blk.out_ch) * in_hw);
      if (blk.pool) {
        bw.pooled.resize(static_cast<size_t>(blk.out_ch) * out_hw);
        bw.argmax.resize(bw.pooled.size());
        bw.d_pooled.resize(bw.pooled.size());
      }
      if (blk.residual) bw.short_out.resize(static_cast<size_t>(blk.out_ch) * out_hw);
      bw.out.resize(static_cast<size_t>(blk.out_ch) * out_hw);
      bw.d_dw1_out.resize(bw.dw1_out.size());
      bw.d_sep1_out.resize(bw.sep1_out.size());
      bw.d_dw2_out.resize(bw.dw2_out.size());
      bw.d_sep2_out.resize(bw.sep2_out.size());
      bw.d_out.resize(bw.out.size());
    }
    int ch = blocks.back().out_ch;
    size_t fin_hw = static_cast<size_t>(final_size) * final_size;
    ws.tail_dw1_out.resize(static_cast<size_t>(ch) * fin_hw);
    ws.tail1_out.resize(static_cast<size_t>(cfg.tail_channels) * fin_hw);
    ws.tail_dw2_out.resize(ws.tail1_out.size());
    ws.tail2_out.resize(ws.tail1_out.size());
    ws.d_tail_dw1_out.resize(ws.tail_dw1_out.size());
    ws.d_tail1_out.resize(ws.tail1_out.size());
    ws.d_tail_dw2_out.resize(ws.tail_dw2_out.size());
    ws.d_tail2_out.resize(ws.tail2_out.size());
    ws.penult.resize(static_cast<size_t>(cfg.tail_channels));
    ws.d_penult.resize(ws.penult.size());
    ws.logits.resize(static_cast<size_t>(cfg.num_classes));
    ws.cols.resize(static_cast<size_t>(n_cols));
  }

  // image: CHW [in_channels, input_size, input_size]. Fills ws.logits and
  // ws.penult (post-pooling activations).
  void forward(const S* image, Workspace& ws) const {
    entry.forward(image, cfg.input_size, cfg.input_size, ws.entry_out.data(), ws.cols[0]);
    nn::relu_forward(ws.entry_out.data(), ws.entry_out.size());

    const S* cur = ws.entry_out.data();
    for (size_t b = 0; b < blocks.size(); ++b) {
      const Block& blk = blocks[b];
      BlockWs& bw = ws.blocks[b];
      int s = blk.in_size;
      blk.dw1.forward(cur, s, s, bw.dw1_out.data());
      blk.pw1.forward(bw.dw1_out.data(), s, s, bw.sep1_out.data(), ws.cols[static_cast<size_t>(blk.pw1_id)]);
      nn::relu_forward(bw.sep1_out.data(), bw.sep1_out.size());
      blk.dw2.forward(bw.sep1_out.data(), s, s, bw.dw2_out.data());
      blk.pw2.forward(bw.dw2_out.data(), s, s, bw.sep2_out.data(), ws.cols[static_cast<size_t>(blk.pw2_id)]);
      nn::relu_forward(bw.sep2_out.data(), bw.sep2_out.size());
      const S* h = bw.sep2_out.data();
      if (blk.pool) {
        nn::maxpool2x2_forward(bw.sep2_out.data(), blk.out_ch, s, s, bw.pooled.data(), bw.argmax.data());
        h = bw.pooled.data();
      }
      if (blk.residual) {
        if (blk.has_proj) {
          blk.shortcut.forward(cur, s, s, bw.short_out.data(), ws.cols[static_cast<size_t>(blk.short_id)]);
        } else {
          std::copy(cur, cur + bw.short_out.size(), bw.short_out.begin());
        }
        for (size_t i = 0; i < bw.out.size(); ++i) bw.out[i] = h[i] + bw.short_out[i];
      } else {
        std::copy(h, h + bw.out.size(), bw.out.begin());
      }
      cur = bw.out.data();
    }

    int fs = final_size;
    int ch = blocks.back().out_ch;
    tail_dw1.forward(cur, fs, fs, ws.tail_dw1_out.data());
    tail_pw1.forward(ws.tail_dw1_out.data(), fs, fs, ws.tail1_out.data(),
                     ws.cols[static_cast<size_t>(tail_pw1_col())]);
    nn::relu_forward(ws.tail1_out.data(), ws.tail1_out.size());
    tail_dw2.forward(ws.tail1_out.data(), fs, fs, ws.tail_dw2_out.data());
    tail_pw2.forward(ws.tail_dw2_out.data(), fs, fs, ws.tail2_out.data(),
                     ws.cols[static_cast<size_t>(tail_pw2_col())]);
    nn::relu_forward(ws.tail2_out.data(), ws.tail2_out.size());
    nn::global_avg_pool_forward(ws.tail2_out.data(), cfg.tail_channels, fs * fs, ws.penult.data());
    head.forward(ws.penult.data(), ws.logits.data());
    (void)ch;
  }

  // Either gradient entry point may be null. Accumulates parameter grads.
  void backward(const S* image, const S* dlogits, const S* dpenult, Workspace& ws) {
    std::fill(ws.d_penult.begin(), ws.d_penult.end(), S(0));
    if (dpenult)
      for (size_t i = 0; i < ws.d_penult.size(); ++i) ws.d_penult[i] = dpenult[i];
    if (dlogits) head.backward(ws.penult.data(), dlogits, ws.d_penult.data());

    int fs = final_size;
    int fin_hw = fs * fs;
    std::fill(ws.d_tail2_out.begin(), ws.d_tail2_out.end(), S(0));
    nn::global_avg_pool_backward(ws.d_penult.data(), cfg.tail_channels, fin_hw, ws.d_tail2_out.data());
    nn::relu_backward(ws.tail2_out.data(), ws.d_tail2_out.data(), ws.tail2_out.size());
    std::fill(ws.d_tail_dw2_out.begin(), ws.d_tail_dw2_out.end(), S(0));
    tail_pw2.backward(ws.d_tail2_out.data(), fs, fs, ws.cols[static_cast<size_t>(tail_pw2_col())],
                      ws.d_tail_dw2_out.data(), ws.dcols);
    std::fill(ws.d_tail1_out.begin(), ws.d_tail1_out.end(), S(0));
    tail_dw2.backward(ws.tail1_out.data(), ws.d_tail_dw2_out.data(), fs, fs, ws.d_tail1_out.data());
    nn::relu_backward(ws.tail1_out.data(), ws.d_tail1_out.data(), ws.tail1_out.size());
    std::fill(ws.d_tail_dw1_out.begin(), ws.d_tail_dw1_out.end(), S(0));
    tail_pw1.backward(ws.d_tail1_out.data(), fs, fs, ws.cols[static_cast<size_t>(tail_pw1_col())],
                      ws.d_tail_dw1_out.data(), ws.dcols);
    BlockWs& last = ws.blocks.back();
    std::fill(last.d_out.begin(), last.d_out.end(), S(0));
    tail_dw1.backward(ws.blocks.back().out.data(), ws.d_tail_dw1_out.data(), fs, fs, last.d_out.data());

    for (size_t bi = blocks.size(); bi-- > 0;) {
      Block& blk = blocks[bi];
      BlockWs& bw = ws.blocks[bi];
      int s = blk.in_size;
      const S* in = bi == 0 ? ws.entry_out.data() : ws.blocks[bi - 1].out.data();
      S* d_in = bi == 0 ? ws.d_entry_out.data() : ws.blocks[bi - 1].d_out.data();
      size_t d_in_n = bi == 0 ? ws.d_entry_out.size() : ws.blocks[bi - 1].d_out.size();
      std::fill(d_in, d_in + d_in_n, S(0));

      // Main path.
      S* d_h;
      if (blk.pool) {
        std::fill(bw.d_sep2_out.begin(), bw.d_sep2_out.end(), S(0));
        nn::maxpool2x2_backward(bw.d_out.data(), blk.out_ch, s, s, bw.argmax.data(), bw.d_sep2_out.data());
        d_h = bw.d_sep2_out.data();
      } else {
        std::copy(bw.d_out.begin(), bw.d_out.end(), bw.d_sep2_out.begin());
        d_h = bw.d_sep2_out.data();
      }
      nn::relu_backward(bw.sep2_out.data(), d_h, bw.sep2_out.size());
      std::fill(bw.d_dw2_out.begin(), bw.d_dw2_out.end(), S(0));
      blk.pw2.backward(d_h, s, s, ws.cols[static_cast<size_t>(blk.pw2_id)], bw.d_dw2_out.data(), ws.dcols);
      std::fill(bw.d_sep1_out.begin(), bw.d_sep1_out.end(), S(0));
      blk.dw2.backward(bw.sep1_out.data(), bw.d_dw2_out.data(), s, s, bw.d_sep1_out.data());
      nn::relu_backward(bw.sep1_out.data(), bw.d_sep1_out.data(), bw.sep1_out.size());
      std::fill(bw.d_dw1_out.begin(), bw.d_dw1_out.end(), S(0));
      blk.pw1.backward(bw.d_sep1_out.data(), s, s, ws.cols[static_cast<size_t>(blk.pw1_id)],
                       bw.d_dw1_out.data(), ws.dcols);
      blk.dw1.backward(in, bw.d_dw1_out.data(), s, s, d_in);

      // Residual path.
      if (blk.residual) {
        if (blk.has_proj) {
          blk.shortcut.backward(bw.d_out.data(), s, s, ws.cols[static_cast<size_t>(blk.short_id)], d_in,
                                ws.dcols);
        } else {
          for (size_t i = 0; i < bw.d_out.size(); ++i) d_in[i] += bw.d_out[i];
        }
      }
    }

    nn::relu_backward(ws.entry_out.data(), ws.d_entry_out.data(), ws.entry_out.size());
    entry.backward(ws.d_entry_out.data(), cfg.input_size, cfg.input_size, ws.cols[0], nullptr, ws.dcols);
    (void)image;
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

using Backbone = BackboneT<Real>;

enum class Role { face, context };
std::string to_string(Role role);

// Masked-input construction for a given network role: the other region is
// filled with the constant color before the network ever sees the crop.
Image make_role_input(const Image& crop, const Mask& mask, Role role, Real fill);

struct IdForward {
  std::vector<Real> probs;   // pseudo-probability vector, sums to 1
  std::vector<Real> logits;  // pre-softmax scores
  std::vector<Real> penult;  // penultimate (pooled) activations
};

// Inference wrapper; thread-safe for concurrent callers (per-call workspace).
class IdModel {
 public:
  IdModel(const BackboneConfig& cfg, uint64_t init_seed = 0);

  const BackboneConfig& config() const { return cfg_; }
  Backbone& net() { return net_; }
  const Backbone& net() const { return net_; }

  IdForward forward(const Image& masked_input) const;

  void save(const std::string& path, const std::string& kind, const nlohmann::json& extra = {}) const;
  static IdModel load_file(const std::string& path, const std::string& expected_kind);

  static BackboneConfig config_from_meta(const nlohmann::json& meta);
  static nlohmann::json config_to_meta(const BackboneConfig& cfg);

 private:
  BackboneConfig cfg_;
  Backbone net_;
};

struct IdSample {
  Image crop;
  Mask mask;
  int identity = 0;
};

struct IdTrainConfig {
  int batch_size = 32;
  int epochs = 8;
  double learning_rate = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int lr_halve_every = 10;
  double hflip_prob = 0.5;  // the only identity-net augmentation
  Real fill = 0.5f;
  uint64_t seed = 0;
  int threads = 0;
};

struct IdTrainResult {
  std::vector<double> epoch_loss;
  std::vector<std::string> checkpoint_paths;
};

// K-way identification training on masked inputs. Rejects datasets with a
// single identity; aborts on non-finite loss.
IdTrainResult id_train(IdModel& model, const std::vector<IdSample>& dataset, Role role,
                       const IdTrainConfig& cfg, const std::string& out_dir);

// Held-out top-1 accuracy on masked inputs.
double top1_accuracy(const IdModel& model, const std::vector<IdSample>& dataset, Role role, Real fill);

struct VerificationPair {
  Image crop_a;
  Mask mask_a;
  Image crop_b;
  Mask mask_b;
  bool same_identity = false;
};

struct VerificationResult {
  double auc_final = 0.0;
  double auc_penultimate = 0.0;
};

// Same/different-identity ROC from cosine similarity, computed twice: on the
// final pseudo-probability vectors and on the penultimate activations.
VerificationResult verification_eval(const IdModel& net_a, Role role_a, const IdModel& net_b, Role role_b,
                                     const std::vector<VerificationPair>& pairs, Real fill);

double cosine_similarity(const std::vector<Real>& a, const std::vector<Real>& b);

}  // namespace fcd::identnet
