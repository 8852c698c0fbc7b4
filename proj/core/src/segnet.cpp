#include "fcd/segnet.hpp"

#include <cmath>
#include <filesystem>

#include "fcd/nn/param.hpp"

namespace fcd::segnet {

namespace fs = std::filesystem;

void image_to_chw(const Image& img, std::vector<Real>& out) {
  out.resize(img.data.size());
  size_t plane = static_cast<size_t>(img.height) * img.width;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out[static_cast<size_t>(c) * plane + static_cast<size_t>(y) * img.width + x] = img.at(y, x, c);
}

SegModel::SegModel(const SegConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  Rng rng(seed_chain(init_seed, {0x736567ull}));  // "seg"
  net_.init(cfg, rng);
}

std::vector<Real> SegModel::forward_probs(const Image& crop) const {
  check_arg(crop.height == cfg_.input_size && crop.width == cfg_.input_size &&
                crop.channels == cfg_.in_channels,
            "segnet: wrong input size");
  UNet::Workspace ws;
  net_.setup(ws);
  std::vector<Real> chw;
  image_to_chw(crop, chw);
  net_.forward(chw.data(), ws);
  int hw = cfg_.input_size * cfg_.input_size;
  std::vector<Real> probs(static_cast<size_t>(2) * hw);
  for (int i = 0; i < hw; ++i) {
    Real z[2] = {ws.logits[static_cast<size_t>(i)], ws.logits[static_cast<size_t>(hw + i)]};
    Real p[2];
    nn::softmax(z, 2, p);
    probs[static_cast<size_t>(i)] = p[0];
    probs[static_cast<size_t>(hw + i)] = p[1];
  }
  return probs;
}

Mask SegModel::predict_mask(const Image& crop) const {
  std::vector<Real> probs = forward_probs(crop);
  int s = cfg_.input_size, hw = s * s;
  Mask mask(s, s);
  for (int i = 0; i < hw; ++i) mask.data[static_cast<size_t>(i)] = probs[static_cast<size_t>(hw + i)] > 0.5f;
  return mask;
}

void SegModel::save(const std::string& path, const nlohmann::json& extra_meta) const {
  Checkpoint ckpt;
  ckpt.meta["kind"] = "segnet";
  ckpt.meta["config"] = {{"input_size", cfg_.input_size},
                         {"in_channels", cfg_.in_channels},
                         {"base_channels", cfg_.base_channels},
                         {"depth", cfg_.depth}};
  if (!extra_meta.is_null()) ckpt.meta["extra"] = extra_meta;
  net_.save_state(ckpt, "seg/");
  ckpt.save(path);
}

SegModel SegModel::load_file(const std::string& path) {
  Checkpoint ckpt = Checkpoint::load(path);
  check(ckpt.meta.value("kind", "") == "segnet", "not a segnet checkpoint: " + path);
  SegConfig cfg;
  cfg.input_size = ckpt.meta["config"]["input_size"];
  cfg.in_channels = ckpt.meta["config"]["in_channels"];
  cfg.base_channels = ckpt.meta["config"]["base_channels"];
  cfg.depth = ckpt.meta["config"]["depth"];
  SegModel model(cfg);
  model.net_.load_state(ckpt, "seg/");
  return model;
}

void AugmentationPolicy::validate() const {
  check_arg(hflip_prob >= 0 && hflip_prob <= 1 && blur_prob >= 0 && blur_prob <= 1,
            "augmentation: probabilities must lie in [0,1]");
  check_arg(rotation_degrees >= 0, "augmentation: rotation range must be symmetric (non-negative)");
}

namespace {

// Rotates RGB about the gray axis; a compact hue-jitter approximation.
void hue_rotate(Image& img, double turns) {
  double th = turns * 2.0 * 3.14159265358979323846;
  double cs = std::cos(th), sn = std::sin(th);
  double third = 1.0 / 3.0, rt = std::sqrt(1.0 / 3.0);
  double m[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double same = static_cast<double>(i == j);
      m[i][j] = cs * same + (1 - cs) * third + sn * rt * ((i - j + 3) % 3 == 1 ? 1.0 : ((j - i + 3) % 3 == 1 ? -1.0 : 0.0));
    }
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
      img.at(y, x, 0) = static_cast<Real>(std::clamp(m[0][0] * r + m[0][1] * g + m[0][2] * b, 0.0, 1.0));
      img.at(y, x, 1) = static_cast<Real>(std::clamp(m[1][0] * r + m[1][1] * g + m[1][2] * b, 0.0, 1.0));
      img.at(y, x, 2) = static_cast<Real>(std::clamp(m[2][0] * r + m[2][1] * g + m[2][2] * b, 0.0, 1.0));
    }
}

}  // namespace

SegSample augment(const SegSample& sample, const AugmentationPolicy& policy, Rng& rng) {
  policy.validate();
  SegSample out = sample;

  if (policy.rotation_degrees > 0) {
    double angle = rng.uniform(-policy.rotation_degrees, policy.rotation_degrees);
    out.crop = rotate_bilinear(out.crop, angle);
    out.mask = rotate_nearest(out.mask, angle);
  }
  if (policy.hflip_prob > 0 && rng.bernoulli(policy.hflip_prob)) {
    out.crop = hflip(out.crop);
    out.mask = hflip(out.mask);
  }
  if (policy.brightness > 0) {
    double f = 1.0 + rng.uniform(-policy.brightness, policy.brightness);
    for (auto& v : out.crop.data) v = static_cast<Real>(std::clamp(static_cast<double>(v) * f, 0.0, 1.0));
  }
  if (policy.contrast > 0) {
    double f = 1.0 + rng.uniform(-policy.contrast, policy.contrast);
    double mean = 0;
    for (Real v : out.crop.data) mean += v;
    mean /= static_cast<double>(out.crop.data.size());
    for (auto& v : out.crop.data)
      v = static_cast<Real>(std::clamp(mean + (static_cast<double>(v) - mean) * f, 0.0, 1.0));
  }
  if (policy.saturation > 0) {
    double f = 1.0 + rng.uniform(-policy.saturation, policy.saturation);
    for (int y = 0; y < out.crop.height; ++y)
      for (int x = 0; x < out.crop.width; ++x) {
        double gray =
            (out.crop.at(y, x, 0) + out.crop.at(y, x, 1) + out.crop.at(y, x, 2)) / 3.0;
        for (int c = 0; c < 3; ++c)
          out.crop.at(y, x, c) =
              static_cast<Real>(std::clamp(gray + (out.crop.at(y, x, c) - gray) * f, 0.0, 1.0));
      }
  }
  if (policy.hue > 0) hue_rotate(out.crop, rng.uniform(-policy.hue, policy.hue));
  if (policy.blur_prob > 0 && rng.bernoulli(policy.blur_prob)) {
    out.crop = gaussian_blur(out.crop, policy.blur_kernel, policy.blur_sigma);
  }
  return out;
}

SegTrainResult seg_train(SegModel& model, const std::vector<SegSample>& dataset, const SegTrainConfig& cfg,
                         const std::string& out_dir) {
  check_arg(!dataset.empty(), "seg_train: empty dataset");
  check_arg(cfg.batch_size >= 1 && cfg.iters_per_epoch >= 1 && cfg.epochs >= 1, "seg_train: bad schedule");
  for (const auto& s : dataset)
    check_arg(s.crop.height == model.config().input_size && s.crop.width == model.config().input_size &&
                  s.mask.height == model.config().input_size,
              "seg_train: sample size does not match model input size");

  const int threads = resolve_threads(cfg.threads);
  const int workers = std::min(threads, cfg.batch_size);
  UNet& master = model.net();
  std::vector<nn::Param<Real>*> master_params;
  master.collect_params(master_params);

  std::vector<UNet> replicas(static_cast<size_t>(workers), master);
  std::vector<std::vector<nn::Param<Real>*>> replica_params(static_cast<size_t>(workers));
  std::vector<UNet::Workspace> ws(static_cast<size_t>(workers));
  for (int t = 0; t < workers; ++t) {
    replicas[static_cast<size_t>(t)].collect_params(replica_params[static_cast<size_t>(t)]);
    master.setup(ws[static_cast<size_t>(t)]);
  }

  nn::Adam<Real> adam(cfg.adam_beta1, cfg.adam_beta2);
  Rng sampler(seed_chain(cfg.seed, {0x7365677472ull}));  // "segtr"
  const int hw = model.config().input_size * model.config().input_size;
  const Real scale = Real(1) / static_cast<Real>(cfg.batch_size);

  SegTrainResult result;
  if (!out_dir.empty()) fs::create_directories(out_dir);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double lr = nn::lr_for_epoch(cfg.learning_rate, epoch, cfg.lr_halve_every);
    double epoch_loss = 0.0;
    for (int iter = 0; iter < cfg.iters_per_epoch; ++iter) {
      std::vector<size_t> batch_idx(static_cast<size_t>(cfg.batch_size));
      for (auto& idx : batch_idx) idx = sampler.uniform_index(dataset.size());

      std::vector<double> worker_loss(static_cast<size_t>(workers), 0.0);
      parallel_for(cfg.batch_size, workers, [&](int64_t lo, int64_t hi, int t) {
        size_t ti = static_cast<size_t>(t);
        UNet& net = replicas[ti];
        std::vector<Real> chw;
        std::vector<Real> dlogits(static_cast<size_t>(2) * hw);
        for (int64_t slot = lo; slot < hi; ++slot) {
          Rng aug_rng(seed_chain(cfg.seed, {0x617567ull, static_cast<uint64_t>(epoch),
                                            static_cast<uint64_t>(iter), static_cast<uint64_t>(slot)}));
          SegSample s = augment(dataset[batch_idx[static_cast<size_t>(slot)]], cfg.augment, aug_rng);
          image_to_chw(s.crop, chw);
          net.forward(chw.data(), ws[ti]);
          worker_loss[ti] +=
              nn::seg_xent2(ws[ti].logits.data(), hw, s.mask.data.data(), dlogits.data(), scale);
          net.backward(chw.data(), dlogits.data(), ws[ti]);
        }
      });

      double iter_loss = 0.0;
      for (double l : worker_loss) iter_loss += l;
      iter_loss /= cfg.batch_size;
      if (!std::isfinite(iter_loss))
        throw Error("seg_train: non-finite loss at epoch " + std::to_string(epoch) + ", batch index " +
                    std::to_string(iter));
      epoch_loss += iter_loss;

      for (int t = 0; t < workers; ++t)
        nn::accumulate_grads(master_params, replica_params[static_cast<size_t>(t)]);
      adam.step(master_params, lr);
      nn::zero_grads(master_params);
      for (int t = 0; t < workers; ++t) {
        nn::copy_values(replica_params[static_cast<size_t>(t)], master_params);
        nn::zero_grads(replica_params[static_cast<size_t>(t)]);
      }
    }
    result.epoch_loss.push_back(epoch_loss / cfg.iters_per_epoch);

    if (!out_dir.empty()) {
      char name[64];
      std::snprintf(name, sizeof(name), "seg_epoch_%03d.fckpt", epoch);
      std::string path = (fs::path(out_dir) / name).string();
      nlohmann::json extra = {{"epoch", epoch}, {"mean_loss", result.epoch_loss.back()}};
      model.save(path, extra);
      result.checkpoint_paths.push_back(path);
    }
  }
  return result;
}

double mean_iou(const SegModel& model, const std::vector<SegSample>& dataset) {
  check_arg(!dataset.empty(), "mean_iou: empty dataset");
  double total = 0.0;
  for (const auto& s : dataset) {
    Mask pred = model.predict_mask(s.crop);
    double inter[2] = {0, 0}, uni[2] = {0, 0};
    for (size_t i = 0; i < pred.data.size(); ++i) {
      int p = pred.data[i], g = s.mask.data[i];
      for (int cls = 0; cls < 2; ++cls) {
        bool pp = p == cls, gg = g == cls;
        inter[cls] += pp && gg;
        uni[cls] += pp || gg;
      }
    }
    double iou0 = uni[0] > 0 ? inter[0] / uni[0] : 1.0;
    double iou1 = uni[1] > 0 ? inter[1] / uni[1] : 1.0;
    total += 0.5 * (iou0 + iou1);
  }
  return total / static_cast<double>(dataset.size());
}

}  // namespace fcd::segnet
