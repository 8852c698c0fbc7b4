#include "fcd/fusion.hpp"

#include <cmath>
#include <cstring>

#include "fcd/nn/param.hpp"
#include "fcd/preprocess.hpp"
#include "fcd/segnet.hpp"

namespace fcd::fusion {

std::vector<Real> discrepancy(const std::vector<Real>& v_f, const std::vector<Real>& v_c) {
  check_arg(v_f.size() == v_c.size(), "discrepancy: length mismatch");
  check_arg(!v_f.empty(), "discrepancy: empty vectors");
  std::vector<Real> v_d(v_f.size());
  for (size_t i = 0; i < v_f.size(); ++i) v_d[i] = v_f[i] - v_c[i];
  return v_d;
}

double l1_norm(const std::vector<Real>& v) {
  double s = 0;
  for (Real x : v) s += std::abs(static_cast<double>(x));
  return s;
}

FusionVariant configure_variant(bool with_reenactment, int identity_count, int penult_width,
                                bool discrepancy_from_logits) {
  check_arg(identity_count >= 2 && penult_width >= 1, "configure_variant: bad widths");
  FusionVariant v;
  v.with_reenactment = with_reenactment;
  v.identity_count = identity_count;
  v.penult_width = penult_width;
  v.discrepancy_from_logits = discrepancy_from_logits;
  return v;
}

FusionModel::FusionModel(identnet::IdModel ef, identnet::IdModel ec, identnet::IdModel es,
                         std::optional<identnet::IdModel> er, const FusionVariant& variant, int d_hidden,
                         uint64_t init_seed)
    : ef_(std::move(ef)), ec_(std::move(ec)), es_(std::move(es)), er_(std::move(er)), variant_(variant) {
  check_arg(ef_.config().num_classes == variant_.identity_count &&
                ec_.config().num_classes == variant_.identity_count,
            "fusion: identity head width does not match the variant's identity count");
  check_arg(es_.config().num_classes == 1, "fusion: E_s must have a single-logit head");
  check_arg(es_.config().tail_channels == variant_.penult_width,
            "fusion: E_s penultimate width does not match the variant");
  check_arg(variant_.with_reenactment == er_.has_value(),
            "fusion: reenactment flag does not match the provided networks");
  if (er_) {
    check_arg(er_->config().num_classes == 1 && er_->config().tail_channels == variant_.penult_width,
              "fusion: E_r shape mismatch");
  }
  Rng rng(seed_chain(init_seed, {0x64636c73ull}));  // "dcls"
  d_.init(variant_.d_input_width(), d_hidden, rng);
}

FusionModel::FaceFeatures FusionModel::score_face(const Image& crop, const Mask& seg_mask, Real fill) const {
  FaceFeatures f;
  Image i_f = identnet::make_role_input(crop, seg_mask, identnet::Role::face, fill);
  Image i_c = identnet::make_role_input(crop, seg_mask, identnet::Role::context, fill);
  identnet::IdForward of = ef_.forward(i_f);
  identnet::IdForward oc = ec_.forward(i_c);
  f.v_f = variant_.discrepancy_from_logits ? of.logits : of.probs;
  f.v_c = variant_.discrepancy_from_logits ? oc.logits : oc.probs;
  f.v_d = discrepancy(f.v_f, f.v_c);

  identnet::IdForward os = es_.forward(crop);
  f.es_score = os.logits[0];
  f.v_s = os.penult;
  if (er_) {
    identnet::IdForward orr = er_->forward(crop);
    f.er_score = orr.logits[0];
    f.v_r = orr.penult;
  }

  std::vector<Real> x;
  x.reserve(static_cast<size_t>(variant_.d_input_width()));
  x.insert(x.end(), f.v_d.begin(), f.v_d.end());
  x.insert(x.end(), f.v_s.begin(), f.v_s.end());
  if (er_) x.insert(x.end(), f.v_r.begin(), f.v_r.end());
  ClassifierD::Workspace ws;
  d_.forward(x.data(), 1, /*training=*/false, /*update_running=*/false, ws);
  f.d_score = ws.logits[0];
  return f;
}

void FusionModel::save(const std::string& path, const nlohmann::json& extra) const {
  Checkpoint ckpt;
  ckpt.meta["kind"] = "fusion_detector";
  ckpt.meta["variant"] = {{"with_reenactment", variant_.with_reenactment},
                          {"identity_count", variant_.identity_count},
                          {"penult_width", variant_.penult_width},
                          {"discrepancy_from_logits", variant_.discrepancy_from_logits}};
  ckpt.meta["d_hidden"] = d_.hidden;
  ckpt.meta["ef_config"] = identnet::IdModel::config_to_meta(ef_.config());
  ckpt.meta["ec_config"] = identnet::IdModel::config_to_meta(ec_.config());
  ckpt.meta["es_config"] = identnet::IdModel::config_to_meta(es_.config());
  if (er_) ckpt.meta["er_config"] = identnet::IdModel::config_to_meta(er_->config());
  if (!extra.is_null()) ckpt.meta["extra"] = extra;

  const_cast<identnet::IdModel&>(ef_).net().save_state(ckpt, "ef/");
  const_cast<identnet::IdModel&>(ec_).net().save_state(ckpt, "ec/");
  const_cast<identnet::IdModel&>(es_).net().save_state(ckpt, "es/");
  if (er_) const_cast<identnet::IdModel&>(*er_).net().save_state(ckpt, "er/");

  std::vector<nn::Param<Real>*> d_params;
  d_.collect_params(d_params);
  ckpt.put_params("d/", d_params);
  std::vector<float> rm(d_.bn.running_mean.begin(), d_.bn.running_mean.end());
  std::vector<float> rv(d_.bn.running_var.begin(), d_.bn.running_var.end());
  ckpt.put_vector("d/bn.running_mean", rm);
  ckpt.put_vector("d/bn.running_var", rv);
  ckpt.save(path);
}

FusionModel FusionModel::load_file(const std::string& path) {
  Checkpoint ckpt = Checkpoint::load(path);
  check(ckpt.meta.value("kind", "") == "fusion_detector", "not a detector checkpoint: " + path);
  FusionVariant variant;
  variant.with_reenactment = ckpt.meta["variant"]["with_reenactment"];
  variant.identity_count = ckpt.meta["variant"]["identity_count"];
  variant.penult_width = ckpt.meta["variant"]["penult_width"];
  variant.discrepancy_from_logits = ckpt.meta["variant"]["discrepancy_from_logits"];

  identnet::IdModel ef(identnet::IdModel::config_from_meta(ckpt.meta["ef_config"]));
  identnet::IdModel ec(identnet::IdModel::config_from_meta(ckpt.meta["ec_config"]));
  identnet::IdModel es(identnet::IdModel::config_from_meta(ckpt.meta["es_config"]));
  ef.net().load_state(ckpt, "ef/");
  ec.net().load_state(ckpt, "ec/");
  es.net().load_state(ckpt, "es/");
  std::optional<identnet::IdModel> er;
  if (variant.with_reenactment) {
    er.emplace(identnet::IdModel::config_from_meta(ckpt.meta["er_config"]));
    er->net().load_state(ckpt, "er/");
  }

  FusionModel model(std::move(ef), std::move(ec), std::move(es), std::move(er), variant,
                    ckpt.meta["d_hidden"], 0);
  std::vector<nn::Param<Real>*> d_params;
  model.d_.collect_params(d_params);
  ckpt.load_params("d/", d_params);
  std::vector<float> rm = ckpt.get_vector("d/bn.running_mean");
  std::vector<float> rv = ckpt.get_vector("d/bn.running_var");
  model.d_.bn.running_mean.assign(rm.begin(), rm.end());
  model.d_.bn.running_var.assign(rv.begin(), rv.end());
  return model;
}

namespace {

void require_both_signs(const std::vector<DetectorSample>& dataset) {
  bool has_real = false, has_fake = false;
  for (const auto& s : dataset) {
    (s.target_sign > 0 ? has_real : has_fake) = true;
  }
  check_arg(has_real && has_fake, "train_detector: need both real and fake samples");
}

}  // namespace

DetectorTrainResult train_detector(FusionModel& model, const std::vector<DetectorSample>& dataset,
                                   TrainMode mode, const DetectorTrainConfig& cfg) {
  check_arg(!dataset.empty(), "train_detector: empty dataset");
  require_both_signs(dataset);
  const bool e2e = mode == TrainMode::end_to_end;
  const bool with_er = model.variant().with_reenactment;
  const bool logit_vd = model.variant().discrepancy_from_logits;
  const int k = model.variant().identity_count;
  const int p = model.variant().penult_width;
  const int width = model.variant().d_input_width();

  const int threads = resolve_threads(cfg.threads);
  const int workers = std::min(threads, cfg.batch_size);

  using Backbone = identnet::Backbone;
  Backbone& ef_net = model.ef().net();
  Backbone& ec_net = model.ec().net();
  Backbone& es_net = model.es().net();
  Backbone* er_net = with_er ? &model.er()->net() : nullptr;

  // Trainable replicas per worker. Identity networks join only in
  // end-to-end mode; in frozen mode they are shared read-only.
  std::vector<Backbone> es_reps(static_cast<size_t>(workers), es_net);
  std::vector<Backbone> er_reps;
  if (with_er) er_reps.assign(static_cast<size_t>(workers), *er_net);
  std::vector<Backbone> ef_reps, ec_reps;
  if (e2e) {
    ef_reps.assign(static_cast<size_t>(workers), ef_net);
    ec_reps.assign(static_cast<size_t>(workers), ec_net);
  }

  std::vector<Backbone::Workspace> ws_ef(static_cast<size_t>(workers)), ws_ec(static_cast<size_t>(workers)),
      ws_es(static_cast<size_t>(workers)), ws_er(static_cast<size_t>(workers));
  for (int t = 0; t < workers; ++t) {
    ef_net.setup(ws_ef[static_cast<size_t>(t)]);
    ec_net.setup(ws_ec[static_cast<size_t>(t)]);
    es_net.setup(ws_es[static_cast<size_t>(t)]);
    if (with_er) er_net->setup(ws_er[static_cast<size_t>(t)]);
  }

  // Master parameter list in fixed order: D, E_s, E_r, then identity nets in
  // end-to-end mode.
  std::vector<nn::Param<Real>*> master_params;
  model.d().collect_params(master_params);
  size_t es_off = master_params.size();
  es_net.collect_params(master_params);
  size_t er_off = master_params.size();
  if (with_er) er_net->collect_params(master_params);
  size_t id_off = master_params.size();
  if (e2e) {
    ef_net.collect_params(master_params);
    ec_net.collect_params(master_params);
  }

  auto replica_param_list = [&](int t) {
    std::vector<nn::Param<Real>*> params;
    es_reps[static_cast<size_t>(t)].collect_params(params);
    if (with_er) er_reps[static_cast<size_t>(t)].collect_params(params);
    if (e2e) {
      ef_reps[static_cast<size_t>(t)].collect_params(params);
      ec_reps[static_cast<size_t>(t)].collect_params(params);
    }
    return params;
  };
  std::vector<std::vector<nn::Param<Real>*>> rep_params(static_cast<size_t>(workers));
  for (int t = 0; t < workers; ++t) rep_params[static_cast<size_t>(t)] = replica_param_list(t);
  std::vector<nn::Param<Real>*> master_rep_view(master_params.begin() + static_cast<long>(es_off),
                                                master_params.end());

  nn::Adam<Real> adam(cfg.adam_beta1, cfg.adam_beta2);
  Rng sampler(seed_chain(cfg.seed, {0x64657474ull, static_cast<uint64_t>(e2e)}));  // "dett"
  const int iters_per_epoch = std::max<int>(1, static_cast<int>(dataset.size()) / cfg.batch_size);
  const Real scale = Real(1) / static_cast<Real>(cfg.batch_size);
  const int n = cfg.batch_size;

  std::vector<Real> x(static_cast<size_t>(n) * width);
  std::vector<Real> dx(x.size());
  std::vector<Real> dlogits(static_cast<size_t>(n));
  std::vector<Real> probs_f(static_cast<size_t>(n) * k), probs_c(static_cast<size_t>(n) * k);
  ClassifierD::Workspace d_ws;

  DetectorTrainResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double lr = nn::lr_for_epoch(cfg.learning_rate, epoch, cfg.lr_halve_every);
    double epoch_loss = 0.0;
    for (int iter = 0; iter < iters_per_epoch; ++iter) {
      std::vector<size_t> batch_idx(static_cast<size_t>(n));
      for (auto& idx : batch_idx) idx = sampler.uniform_index(dataset.size());

      // Phase 1: forward all samples, building D's input batch.
      parallel_for(n, workers, [&](int64_t lo, int64_t hi, int t) {
        size_t ti = static_cast<size_t>(t);
        Backbone& ef_b = e2e ? ef_reps[ti] : ef_net;
        Backbone& ec_b = e2e ? ec_reps[ti] : ec_net;
        Backbone& es_b = es_reps[ti];
        std::vector<Real> chw;
        for (int64_t slot = lo; slot < hi; ++slot) {
          const DetectorSample& s = dataset[batch_idx[static_cast<size_t>(slot)]];
          Image i_f = identnet::make_role_input(s.crop, s.mask, identnet::Role::face, cfg.fill);
          Image i_c = identnet::make_role_input(s.crop, s.mask, identnet::Role::context, cfg.fill);
          Real* xrow = x.data() + static_cast<size_t>(slot) * width;

          segnet::image_to_chw(i_f, chw);
          ef_b.forward(chw.data(), ws_ef[ti]);
          Real* pf = probs_f.data() + static_cast<size_t>(slot) * k;
          if (logit_vd)
            std::copy(ws_ef[ti].logits.begin(), ws_ef[ti].logits.end(), pf);
          else
            nn::softmax(ws_ef[ti].logits.data(), k, pf);

          segnet::image_to_chw(i_c, chw);
          ec_b.forward(chw.data(), ws_ec[ti]);
          Real* pc = probs_c.data() + static_cast<size_t>(slot) * k;
          if (logit_vd)
            std::copy(ws_ec[ti].logits.begin(), ws_ec[ti].logits.end(), pc);
          else
            nn::softmax(ws_ec[ti].logits.data(), k, pc);

          for (int i = 0; i < k; ++i) xrow[i] = pf[i] - pc[i];

          segnet::image_to_chw(s.crop, chw);
          es_b.forward(chw.data(), ws_es[ti]);
          std::copy(ws_es[ti].penult.begin(), ws_es[ti].penult.end(), xrow + k);
          if (with_er) {
            er_reps[ti].forward(chw.data(), ws_er[ti]);
            std::copy(ws_er[ti].penult.begin(), ws_er[ti].penult.end(), xrow + k + p);
          }
        }
      });

      // Phase 2: classifier D forward/backward on the batch.
      model.d().forward(x.data(), n, /*training=*/true, /*update_running=*/true, d_ws);
      double iter_loss = 0.0;
      for (int i = 0; i < n; ++i) {
        Real dz;
        iter_loss += nn::logistic_loss(d_ws.logits[static_cast<size_t>(i)],
                                       dataset[batch_idx[static_cast<size_t>(i)]].target_sign, &dz, scale);
        dlogits[static_cast<size_t>(i)] = dz;
      }
      iter_loss /= n;
      if (!std::isfinite(iter_loss))
        throw Error("train_detector: non-finite loss at epoch " + std::to_string(epoch) + ", batch index " +
                    std::to_string(iter));
      epoch_loss += iter_loss;
      std::fill(dx.begin(), dx.end(), Real(0));
      model.d().backward(x.data(), dlogits.data(), n, d_ws, dx.data());

      // Phase 3: re-forward and backprop the trainable backbones.
      parallel_for(n, workers, [&](int64_t lo, int64_t hi, int t) {
        size_t ti = static_cast<size_t>(t);
        Backbone& es_b = es_reps[ti];
        std::vector<Real> chw;
        std::vector<Real> dlog(static_cast<size_t>(k));
        for (int64_t slot = lo; slot < hi; ++slot) {
          const DetectorSample& s = dataset[batch_idx[static_cast<size_t>(slot)]];
          const Real* dxrow = dx.data() + static_cast<size_t>(slot) * width;

          segnet::image_to_chw(s.crop, chw);
          es_b.forward(chw.data(), ws_es[ti]);
          es_b.backward(chw.data(), nullptr, dxrow + k, ws_es[ti]);
          if (with_er) {
            er_reps[ti].forward(chw.data(), ws_er[ti]);
            er_reps[ti].backward(chw.data(), nullptr, dxrow + k + p, ws_er[ti]);
          }

          if (e2e) {
            const Real* pf = probs_f.data() + static_cast<size_t>(slot) * k;
            const Real* pc = probs_c.data() + static_cast<size_t>(slot) * k;
            Image i_f = identnet::make_role_input(s.crop, s.mask, identnet::Role::face, cfg.fill);
            segnet::image_to_chw(i_f, chw);
            ef_reps[ti].forward(chw.data(), ws_ef[ti]);
            if (logit_vd)
              std::copy(dxrow, dxrow + k, dlog.begin());
            else
              nn::softmax_backward(pf, dxrow, k, dlog.data());
            ef_reps[ti].backward(chw.data(), dlog.data(), nullptr, ws_ef[ti]);

            Image i_c = identnet::make_role_input(s.crop, s.mask, identnet::Role::context, cfg.fill);
            segnet::image_to_chw(i_c, chw);
            ec_reps[ti].forward(chw.data(), ws_ec[ti]);
            for (int i = 0; i < k; ++i) dlog[static_cast<size_t>(i)] = -dxrow[i];
            if (!logit_vd) {
              std::vector<Real> neg(dlog);
              nn::softmax_backward(pc, neg.data(), k, dlog.data());
            }
            ec_reps[ti].backward(chw.data(), dlog.data(), nullptr, ws_ec[ti]);
          }
        }
      });

      for (int t = 0; t < workers; ++t)
        nn::accumulate_grads(master_rep_view, rep_params[static_cast<size_t>(t)]);
      adam.step(master_params, lr);
      nn::zero_grads(master_params);
      for (int t = 0; t < workers; ++t) {
        nn::copy_values(rep_params[static_cast<size_t>(t)], master_rep_view);
        nn::zero_grads(rep_params[static_cast<size_t>(t)]);
      }
    }
    result.epoch_loss.push_back(epoch_loss / iters_per_epoch);
  }
  (void)es_off;
  (void)er_off;
  (void)id_off;
  return result;
}

BinaryTrainResult train_binary(identnet::IdModel& model, const std::vector<BinarySample>& dataset,
                               const BinaryTrainConfig& cfg) {
  check_arg(!dataset.empty(), "train_binary: empty dataset");
  check_arg(model.config().num_classes == 1, "train_binary: model must have a single-logit head");
  bool has_real = false, has_fake = false;
  for (const auto& s : dataset) (s.target_sign > 0 ? has_real : has_fake) = true;
  check_arg(has_real && has_fake, "train_binary: need both real and fake samples");

  const int threads = resolve_threads(cfg.threads);
  const int workers = std::min(threads, cfg.batch_size);
  identnet::Backbone& master = model.net();
  std::vector<nn::Param<Real>*> master_params;
  master.collect_params(master_params);

  std::vector<identnet::Backbone> replicas(static_cast<size_t>(workers), master);
  std::vector<std::vector<nn::Param<Real>*>> rep_params(static_cast<size_t>(workers));
  std::vector<identnet::Backbone::Workspace> ws(static_cast<size_t>(workers));
  for (int t = 0; t < workers; ++t) {
    replicas[static_cast<size_t>(t)].collect_params(rep_params[static_cast<size_t>(t)]);
    master.setup(ws[static_cast<size_t>(t)]);
  }

  nn::Adam<Real> adam(cfg.adam_beta1, cfg.adam_beta2);
  Rng sampler(seed_chain(cfg.seed, {0x62696e74ull}));  // "bint"
  const int iters_per_epoch = std::max<int>(1, static_cast<int>(dataset.size()) / cfg.batch_size);
  const Real scale = Real(1) / static_cast<Real>(cfg.batch_size);

  BinaryTrainResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double lr = nn::lr_for_epoch(cfg.learning_rate, epoch, cfg.lr_halve_every);
    double epoch_loss = 0.0;
    for (int iter = 0; iter < iters_per_epoch; ++iter) {
      std::vector<size_t> batch_idx(static_cast<size_t>(cfg.batch_size));
      for (auto& idx : batch_idx) idx = sampler.uniform_index(dataset.size());

      std::vector<double> worker_loss(static_cast<size_t>(workers), 0.0);
      parallel_for(cfg.batch_size, workers, [&](int64_t lo, int64_t hi, int t) {
        size_t ti = static_cast<size_t>(t);
        identnet::Backbone& net = replicas[ti];
        std::vector<Real> chw;
        for (int64_t slot = lo; slot < hi; ++slot) {
          const BinarySample& raw = dataset[batch_idx[static_cast<size_t>(slot)]];
          Rng aug_rng(seed_chain(cfg.seed, {0x62696e61ull, static_cast<uint64_t>(epoch),
                                            static_cast<uint64_t>(iter), static_cast<uint64_t>(slot)}));
          Image crop = raw.crop;
          if (cfg.hflip_prob > 0 && aug_rng.bernoulli(cfg.hflip_prob)) crop = hflip(crop);
          segnet::image_to_chw(crop, chw);
          net.forward(chw.data(), ws[ti]);
          Real dz;
          worker_loss[ti] += nn::logistic_loss(ws[ti].logits[0], raw.target_sign, &dz, scale);
          Real dlog[1] = {dz};
          net.backward(chw.data(), dlog, nullptr, ws[ti]);
        }
      });

      double iter_loss = 0.0;
      for (double l : worker_loss) iter_loss += l;
      iter_loss /= cfg.batch_size;
      if (!std::isfinite(iter_loss))
        throw Error("train_binary: non-finite loss at epoch " + std::to_string(epoch) + ", batch index " +
                    std::to_string(iter));
      epoch_loss += iter_loss;

      for (int t = 0; t < workers; ++t)
        nn::accumulate_grads(master_params, rep_params[static_cast<size_t>(t)]);
      adam.step(master_params, lr);
      nn::zero_grads(master_params);
      for (int t = 0; t < workers; ++t) {
        nn::copy_values(rep_params[static_cast<size_t>(t)], master_params);
        nn::zero_grads(rep_params[static_cast<size_t>(t)]);
      }
    }
    result.epoch_loss.push_back(epoch_loss / iters_per_epoch);
  }
  return result;
}

BinaryForward binary_forward(const identnet::IdModel& model, const Image& crop) {
  check_arg(model.config().num_classes == 1, "binary_forward: model must have a single-logit head");
  identnet::IdForward out = model.forward(crop);
  BinaryForward bf;
  bf.score = out.logits[0];
  bf.penult = std::move(out.penult);
  return bf;
}

uint64_t params_checksum(const std::vector<nn::Param<Real>*>& params) {
  uint64_t h = 0xcbf29ce484222325ull;
  auto fold = [&h](const void* data, size_t bytes) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const auto* p : params) {
    fold(p->name.data(), p->name.size());
    fold(p->value.data(), p->value.size() * sizeof(Real));
  }
  return h;
}

uint64_t model_checksum(const identnet::IdModel& model) {
  std::vector<nn::Param<Real>*> params;
  const_cast<identnet::IdModel&>(model).net().collect_params(params);
  return params_checksum(params);
}

}  // namespace fcd::fusion
