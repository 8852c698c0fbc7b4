#include "fcd/identnet.hpp"

#include <cmath>
#include <filesystem>
#include <set>

#include "fcd/evalkit.hpp"
#include "fcd/nn/param.hpp"
#include "fcd/segnet.hpp"

namespace fcd::identnet {

namespace fs = std::filesystem;

std::string to_string(Role role) { return role == Role::face ? "face" : "context"; }

Image make_role_input(const Image& crop, const Mask& mask, Role role, Real fill) {
  preprocess::CropPair pair = preprocess::split_face_context(crop, mask, fill);
  return role == Role::face ? std::move(pair.face) : std::move(pair.context);
}

IdModel::IdModel(const BackboneConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  Rng rng(seed_chain(init_seed, {0x6964656eull}));  // "iden"
  net_.init(cfg, rng);
}

IdForward IdModel::forward(const Image& masked_input) const {
  check_arg(masked_input.height == cfg_.input_size && masked_input.width == cfg_.input_size &&
                masked_input.channels == cfg_.in_channels,
            "identnet: resolution mismatch");
  Backbone::Workspace ws;
  net_.setup(ws);
  std::vector<Real> chw;
  segnet::image_to_chw(masked_input, chw);
  net_.forward(chw.data(), ws);
  IdForward out;
  out.logits = ws.logits;
  out.penult = ws.penult;
  out.probs.resize(ws.logits.size());
  nn::softmax(ws.logits.data(), static_cast<int>(ws.logits.size()), out.probs.data());
  return out;
}

nlohmann::json IdModel::config_to_meta(const BackboneConfig& cfg) {
  return {{"input_size", cfg.input_size},     {"in_channels", cfg.in_channels},
          {"entry_channels", cfg.entry_channels}, {"entry_stride", cfg.entry_stride},
          {"block_channels", cfg.block_channels}, {"block_strides", cfg.block_strides},
          {"residual_flags", cfg.residual_flags}, {"tail_channels", cfg.tail_channels},
          {"num_classes", cfg.num_classes}};
}

BackboneConfig IdModel::config_from_meta(const nlohmann::json& meta) {
  BackboneConfig cfg;
  cfg.input_size = meta["input_size"];
  cfg.in_channels = meta["in_channels"];
  cfg.entry_channels = meta["entry_channels"];
  cfg.entry_stride = meta["entry_stride"];
  cfg.block_channels = meta["block_channels"].get<std::vector<int>>();
  cfg.block_strides = meta["block_strides"].get<std::vector<int>>();
  cfg.residual_flags = meta["residual_flags"].get<std::vector<int>>();
  cfg.tail_channels = meta["tail_channels"];
  cfg.num_classes = meta["num_classes"];
  return cfg;
}

void IdModel::save(const std::string& path, const std::string& kind, const nlohmann::json& extra) const {
  Checkpoint ckpt;
  ckpt.meta["kind"] = kind;
  ckpt.meta["config"] = config_to_meta(cfg_);
  if (!extra.is_null()) ckpt.meta["extra"] = extra;
  const_cast<Backbone&>(net_).save_state(ckpt, "net/");
  ckpt.save(path);
}

IdModel IdModel::load_file(const std::string& path, const std::string& expected_kind) {
  Checkpoint ckpt = Checkpoint::load(path);
  check(ckpt.meta.value("kind", "") == expected_kind,
        "checkpoint kind mismatch for " + path + " (want " + expected_kind + ")");
  IdModel model(config_from_meta(ckpt.meta["config"]));
  model.net_.load_state(ckpt, "net/");
  return model;
}

IdTrainResult id_train(IdModel& model, const std::vector<IdSample>& dataset, Role role,
                       const IdTrainConfig& cfg, const std::string& out_dir) {
  check_arg(!dataset.empty(), "id_train: empty dataset");
  std::set<int> identities;
  for (const auto& s : dataset) identities.insert(s.identity);
  check_arg(identities.size() >= 2, "id_train: dataset with a single identity");
  for (const auto& s : dataset)
    check_arg(s.identity >= 0 && s.identity < model.config().num_classes,
              "id_train: identity label outside the class range");

  const int threads = resolve_threads(cfg.threads);
  const int workers = std::min(threads, cfg.batch_size);
  Backbone& master = model.net();
  std::vector<nn::Param<Real>*> master_params;
  master.collect_params(master_params);

  std::vector<Backbone> replicas(static_cast<size_t>(workers), master);
  std::vector<std::vector<nn::Param<Real>*>> replica_params(static_cast<size_t>(workers));
  std::vector<Backbone::Workspace> ws(static_cast<size_t>(workers));
  for (int t = 0; t < workers; ++t) {
    replicas[static_cast<size_t>(t)].collect_params(replica_params[static_cast<size_t>(t)]);
    master.setup(ws[static_cast<size_t>(t)]);
  }

  nn::Adam<Real> adam(cfg.adam_beta1, cfg.adam_beta2);
  Rng sampler(seed_chain(cfg.seed, {0x696474ull, static_cast<uint64_t>(role)}));  // "idt"
  const int iters_per_epoch = std::max<int>(1, static_cast<int>(dataset.size()) / cfg.batch_size);
  const Real scale = Real(1) / static_cast<Real>(cfg.batch_size);
  const int k = model.config().num_classes;

  IdTrainResult result;
  if (!out_dir.empty()) fs::create_directories(out_dir);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double lr = nn::lr_for_epoch(cfg.learning_rate, epoch, cfg.lr_halve_every);
    double epoch_loss = 0.0;
    for (int iter = 0; iter < iters_per_epoch; ++iter) {
      std::vector<size_t> batch_idx(static_cast<size_t>(cfg.batch_size));
      for (auto& idx : batch_idx) idx = sampler.uniform_index(dataset.size());

      std::vector<double> worker_loss(static_cast<size_t>(workers), 0.0);
      parallel_for(cfg.batch_size, workers, [&](int64_t lo, int64_t hi, int t) {
        size_t ti = static_cast<size_t>(t);
        Backbone& net = replicas[ti];
        std::vector<Real> chw;
        std::vector<Real> dlogits(static_cast<size_t>(k));
        for (int64_t slot = lo; slot < hi; ++slot) {
          const IdSample& raw = dataset[batch_idx[static_cast<size_t>(slot)]];
          Rng aug_rng(seed_chain(cfg.seed, {0x69646175ull, static_cast<uint64_t>(epoch),
                                            static_cast<uint64_t>(iter), static_cast<uint64_t>(slot)}));
          Image crop = raw.crop;
          Mask mask = raw.mask;
          if (cfg.hflip_prob > 0 && aug_rng.bernoulli(cfg.hflip_prob)) {
            crop = hflip(crop);
            mask = hflip(mask);
          }
          Image masked = make_role_input(crop, mask, role, cfg.fill);
          segnet::image_to_chw(masked, chw);
          net.forward(chw.data(), ws[ti]);
          worker_loss[ti] += nn::softmax_xent(ws[ti].logits.data(), k, raw.identity, dlogits.data(), scale);
          net.backward(chw.data(), dlogits.data(), nullptr, ws[ti]);
        }
      });

      double iter_loss = 0.0;
      for (double l : worker_loss) iter_loss += l;
      iter_loss /= cfg.batch_size;
      if (!std::isfinite(iter_loss))
        throw Error("id_train(" + to_string(role) + "): non-finite loss at epoch " + std::to_string(epoch) +
                    ", batch index " + std::to_string(iter));
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
    result.epoch_loss.push_back(epoch_loss / iters_per_epoch);

    if (!out_dir.empty()) {
      char name[64];
      std::snprintf(name, sizeof(name), "id_%s_epoch_%03d.fckpt", to_string(role).c_str(), epoch);
      std::string path = (fs::path(out_dir) / name).string();
      model.save(path, "identnet_" + to_string(role),
                 {{"epoch", epoch}, {"mean_loss", result.epoch_loss.back()}});
      result.checkpoint_paths.push_back(path);
    }
  }
  return result;
}

double top1_accuracy(const IdModel& model, const std::vector<IdSample>& dataset, Role role, Real fill) {
  check_arg(!dataset.empty(), "top1_accuracy: empty dataset");
  size_t hits = 0;
  for (const auto& s : dataset) {
    IdForward out = model.forward(make_role_input(s.crop, s.mask, role, fill));
    int argmax = 0;
    for (size_t i = 1; i < out.probs.size(); ++i)
      if (out.probs[i] > out.probs[static_cast<size_t>(argmax)]) argmax = static_cast<int>(i);
    hits += argmax == s.identity;
  }
  return static_cast<double>(hits) / static_cast<double>(dataset.size());
}

double cosine_similarity(const std::vector<Real>& a, const std::vector<Real>& b) {
  check_arg(a.size() == b.size(), "cosine_similarity: length mismatch");
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

VerificationResult verification_eval(const IdModel& net_a, Role role_a, const IdModel& net_b, Role role_b,
                                     const std::vector<VerificationPair>& pairs, Real fill) {
  check_arg(!pairs.empty(), "verification_eval: empty pair list");
  evalkit::ScoredSet final_set{"verification_final", {}};
  evalkit::ScoredSet penult_set{"verification_penultimate", {}};
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    IdForward out_a = net_a.forward(make_role_input(p.crop_a, p.mask_a, role_a, fill));
    IdForward out_b = net_b.forward(make_role_input(p.crop_b, p.mask_b, role_b, fill));
    std::string id = "pair" + std::to_string(i);
    // "fake" = different identity, so AUC > 0.5 means same-pairs score higher.
    final_set.frames.push_back({id, cosine_similarity(out_a.probs, out_b.probs), !p.same_identity});
    penult_set.frames.push_back({id, cosine_similarity(out_a.penult, out_b.penult), !p.same_identity});
  }
  VerificationResult result;
  result.auc_final = evalkit::auc(final_set);
  result.auc_penultimate = evalkit::auc(penult_set);
  return result;
}

}  // namespace fcd::identnet
