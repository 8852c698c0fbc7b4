#include "fcd/config.hpp"

#include <fstream>

namespace fcd {

RunConfig RunConfig::defaults() { return RunConfig{}; }

namespace {

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  check(j.is_object() || j.is_null(), "config: top level must be a JSON object");
  RunConfig c;
  c.seed = get_or<uint64_t>(j, "seed", c.seed);
  c.threads = get_or<int>(j, "threads", c.threads);

  nlohmann::json w = j.value("world", nlohmann::json::object());
  c.world.identities = get_or<int>(w, "identities", c.world.identities);
  c.world.image_size = get_or<int>(w, "image_size", c.world.image_size);
  c.world.frames_per_identity = get_or<int>(w, "frames_per_identity", c.world.frames_per_identity);
  c.world.swap_blend_width_a = get_or<double>(w, "swap_blend_width_a", c.world.swap_blend_width_a);
  c.world.swap_blend_width_b = get_or<double>(w, "swap_blend_width_b", c.world.swap_blend_width_b);
  c.world.swap_color_transfer_b = get_or<double>(w, "swap_color_transfer_b", c.world.swap_color_transfer_b);
  c.world.noise_level = get_or<double>(w, "noise_level", c.world.noise_level);
  c.world.train_fraction = get_or<double>(w, "train_fraction", c.world.train_fraction);
  c.world.val_fraction = get_or<double>(w, "val_fraction", c.world.val_fraction);
  c.world.master_seed = c.seed;

  nlohmann::json p = j.value("preprocess", nlohmann::json::object());
  c.preprocess.enlarge_factor = get_or<double>(p, "enlarge_factor", c.preprocess.enlarge_factor);
  c.preprocess.crop_size = get_or<int>(p, "crop_size", c.preprocess.crop_size);
  c.preprocess.fill = get_or<double>(p, "fill", c.preprocess.fill);

  nlohmann::json sm = j.value("segnet", nlohmann::json::object());
  c.seg_model.input_size = c.preprocess.crop_size;
  c.seg_model.base_channels = get_or<int>(sm, "base_channels", c.seg_model.base_channels);
  c.seg_model.depth = get_or<int>(sm, "depth", c.seg_model.depth);
  nlohmann::json st = sm.value("train", nlohmann::json::object());
  c.seg_train.batch_size = get_or<int>(st, "batch_size", c.seg_train.batch_size);
  c.seg_train.iters_per_epoch = get_or<int>(st, "iters_per_epoch", c.seg_train.iters_per_epoch);
  c.seg_train.epochs = get_or<int>(st, "epochs", c.seg_train.epochs);
  c.seg_train.learning_rate = get_or<double>(st, "learning_rate", c.seg_train.learning_rate);
  c.seg_train.adam_beta1 = get_or<double>(st, "adam_beta1", c.seg_train.adam_beta1);
  c.seg_train.adam_beta2 = get_or<double>(st, "adam_beta2", c.seg_train.adam_beta2);
  c.seg_train.lr_halve_every = get_or<int>(st, "lr_halve_every", c.seg_train.lr_halve_every);
  nlohmann::json au = st.value("augment", nlohmann::json::object());
  c.seg_train.augment.rotation_degrees = get_or<double>(au, "rotation_degrees", c.seg_train.augment.rotation_degrees);
  c.seg_train.augment.hflip_prob = get_or<double>(au, "hflip_prob", c.seg_train.augment.hflip_prob);
  c.seg_train.augment.blur_prob = get_or<double>(au, "blur_prob", c.seg_train.augment.blur_prob);
  c.seg_train.augment.blur_kernel = get_or<int>(au, "blur_kernel", c.seg_train.augment.blur_kernel);
  c.seg_train.augment.blur_sigma = get_or<double>(au, "blur_sigma", c.seg_train.augment.blur_sigma);
  c.seg_train.augment.brightness = get_or<double>(au, "brightness", c.seg_train.augment.brightness);
  c.seg_train.augment.contrast = get_or<double>(au, "contrast", c.seg_train.augment.contrast);
  c.seg_train.augment.saturation = get_or<double>(au, "saturation", c.seg_train.augment.saturation);
  c.seg_train.augment.hue = get_or<double>(au, "hue", c.seg_train.augment.hue);

  nlohmann::json im = j.value("identnet", nlohmann::json::object());
  c.id_model.input_size = c.preprocess.crop_size;
  c.id_model.entry_channels = get_or<int>(im, "entry_channels", c.id_model.entry_channels);
  c.id_model.entry_stride = get_or<int>(im, "entry_stride", c.id_model.entry_stride);
  c.id_model.block_channels = get_or<std::vector<int>>(im, "block_channels", c.id_model.block_channels);
  c.id_model.block_strides = get_or<std::vector<int>>(im, "block_strides", c.id_model.block_strides);
  c.id_model.residual_flags = get_or<std::vector<int>>(im, "residual_flags", c.id_model.residual_flags);
  c.id_model.tail_channels = get_or<int>(im, "tail_channels", c.id_model.tail_channels);
  nlohmann::json it = im.value("train", nlohmann::json::object());
  c.id_train.batch_size = get_or<int>(it, "batch_size", c.id_train.batch_size);
  c.id_train.epochs = get_or<int>(it, "epochs", c.id_train.epochs);
  c.id_train.learning_rate = get_or<double>(it, "learning_rate", c.id_train.learning_rate);
  c.id_train.adam_beta1 = get_or<double>(it, "adam_beta1", c.id_train.adam_beta1);
  c.id_train.adam_beta2 = get_or<double>(it, "adam_beta2", c.id_train.adam_beta2);
  c.id_train.lr_halve_every = get_or<int>(it, "lr_halve_every", c.id_train.lr_halve_every);
  c.id_train.hflip_prob = get_or<double>(it, "hflip_prob", c.id_train.hflip_prob);
  c.id_train.fill = static_cast<Real>(c.preprocess.fill);

  nlohmann::json bm = j.value("binary", nlohmann::json::object());
  c.binary_model.input_size = c.preprocess.crop_size;
  c.binary_model.entry_channels = get_or<int>(bm, "entry_channels", c.binary_model.entry_channels);
  c.binary_model.entry_stride = get_or<int>(bm, "entry_stride", c.binary_model.entry_stride);
  c.binary_model.block_channels = get_or<std::vector<int>>(bm, "block_channels", c.binary_model.block_channels);
  c.binary_model.block_strides = get_or<std::vector<int>>(bm, "block_strides", c.binary_model.block_strides);
  c.binary_model.residual_flags = get_or<std::vector<int>>(bm, "residual_flags", c.binary_model.residual_flags);
  c.binary_model.tail_channels = get_or<int>(bm, "tail_channels", c.binary_model.tail_channels);
  nlohmann::json bt = bm.value("train", nlohmann::json::object());
  c.binary_train.batch_size = get_or<int>(bt, "batch_size", c.binary_train.batch_size);
  c.binary_train.epochs = get_or<int>(bt, "epochs", c.binary_train.epochs);
  c.binary_train.learning_rate = get_or<double>(bt, "learning_rate", c.binary_train.learning_rate);
  c.binary_train.adam_beta1 = get_or<double>(bt, "adam_beta1", c.binary_train.adam_beta1);
  c.binary_train.adam_beta2 = get_or<double>(bt, "adam_beta2", c.binary_train.adam_beta2);
  c.binary_train.lr_halve_every = get_or<int>(bt, "lr_halve_every", c.binary_train.lr_halve_every);
  c.binary_train.hflip_prob = get_or<double>(bt, "hflip_prob", c.binary_train.hflip_prob);

  nlohmann::json dt = j.value("detector", nlohmann::json::object());
  c.detector.hidden_width = get_or<int>(dt, "hidden_width", c.detector.hidden_width);
  c.detector.with_reenactment = get_or<bool>(dt, "with_reenactment", c.detector.with_reenactment);
  c.detector.discrepancy_from_logits =
      get_or<bool>(dt, "discrepancy_from_logits", c.detector.discrepancy_from_logits);
  nlohmann::json dtt = dt.value("train", nlohmann::json::object());
  c.detector_train.batch_size = get_or<int>(dtt, "batch_size", c.detector_train.batch_size);
  c.detector_train.epochs = get_or<int>(dtt, "epochs", c.detector_train.epochs);
  c.detector_train.learning_rate = get_or<double>(dtt, "learning_rate", c.detector_train.learning_rate);
  c.detector_train.adam_beta1 = get_or<double>(dtt, "adam_beta1", c.detector_train.adam_beta1);
  c.detector_train.adam_beta2 = get_or<double>(dtt, "adam_beta2", c.detector_train.adam_beta2);
  c.detector_train.lr_halve_every = get_or<int>(dtt, "lr_halve_every", c.detector_train.lr_halve_every);
  c.detector_train.fill = static_cast<Real>(c.preprocess.fill);

  nlohmann::json pl = j.value("pipeline", nlohmann::json::object());
  c.pipeline.min_face_height = get_or<double>(pl, "min_face_height", c.pipeline.min_face_height);
  c.pipeline.detector = get_or<std::string>(pl, "detector", c.pipeline.detector);
  return c;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["threads"] = threads;
  j["world"] = {{"identities", world.identities},
                {"image_size", world.image_size},
                {"frames_per_identity", world.frames_per_identity},
                {"swap_blend_width_a", world.swap_blend_width_a},
                {"swap_blend_width_b", world.swap_blend_width_b},
                {"swap_color_transfer_b", world.swap_color_transfer_b},
                {"noise_level", world.noise_level},
                {"train_fraction", world.train_fraction},
                {"val_fraction", world.val_fraction}};
  j["preprocess"] = {{"enlarge_factor", preprocess.enlarge_factor},
                     {"crop_size", preprocess.crop_size},
                     {"fill", preprocess.fill}};
  j["segnet"] = {{"base_channels", seg_model.base_channels},
                 {"depth", seg_model.depth},
                 {"train",
                  {{"batch_size", seg_train.batch_size},
                   {"iters_per_epoch", seg_train.iters_per_epoch},
                   {"epochs", seg_train.epochs},
                   {"learning_rate", seg_train.learning_rate},
                   {"adam_beta1", seg_train.adam_beta1},
                   {"adam_beta2", seg_train.adam_beta2},
                   {"lr_halve_every", seg_train.lr_halve_every},
                   {"augment",
                    {{"rotation_degrees", seg_train.augment.rotation_degrees},
                     {"hflip_prob", seg_train.augment.hflip_prob},
                     {"blur_prob", seg_train.augment.blur_prob},
                     {"blur_kernel", seg_train.augment.blur_kernel},
                     {"blur_sigma", seg_train.augment.blur_sigma},
                     {"brightness", seg_train.augment.brightness},
                     {"contrast", seg_train.augment.contrast},
                     {"saturation", seg_train.augment.saturation},
                     {"hue", seg_train.augment.hue}}}}}};
  j["identnet"] = {{"entry_channels", id_model.entry_channels},
                   {"entry_stride", id_model.entry_stride},
                   {"block_channels", id_model.block_channels},
                   {"block_strides", id_model.block_strides},
                   {"residual_flags", id_model.residual_flags},
                   {"tail_channels", id_model.tail_channels},
                   {"train",
                    {{"batch_size", id_train.batch_size},
                     {"epochs", id_train.epochs},
                     {"learning_rate", id_train.learning_rate},
                     {"adam_beta1", id_train.adam_beta1},
                     {"adam_beta2", id_train.adam_beta2},
                     {"lr_halve_every", id_train.lr_halve_every},
                     {"hflip_prob", id_train.hflip_prob}}}};
  j["binary"] = {{"entry_channels", binary_model.entry_channels},
                 {"entry_stride", binary_model.entry_stride},
                 {"block_channels", binary_model.block_channels},
                 {"block_strides", binary_model.block_strides},
                 {"residual_flags", binary_model.residual_flags},
                 {"tail_channels", binary_model.tail_channels},
                 {"train",
                  {{"batch_size", binary_train.batch_size},
                   {"epochs", binary_train.epochs},
                   {"learning_rate", binary_train.learning_rate},
                   {"adam_beta1", binary_train.adam_beta1},
                   {"adam_beta2", binary_train.adam_beta2},
                   {"lr_halve_every", binary_train.lr_halve_every},
                   {"hflip_prob", binary_train.hflip_prob}}}};
  j["detector"] = {{"hidden_width", detector.hidden_width},
                   {"with_reenactment", detector.with_reenactment},
                   {"discrepancy_from_logits", detector.discrepancy_from_logits},
                   {"train",
                    {{"batch_size", detector_train.batch_size},
                     {"epochs", detector_train.epochs},
                     {"learning_rate", detector_train.learning_rate},
                     {"adam_beta1", detector_train.adam_beta1},
                     {"adam_beta2", detector_train.adam_beta2},
                     {"lr_halve_every", detector_train.lr_halve_every}}}};
  j["pipeline"] = {{"min_face_height", pipeline.min_face_height}, {"detector", pipeline.detector}};
  return j;
}

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot open config file: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  check(!j.is_discarded(), "config file is not valid JSON: " + path);
  return from_json(j);
}

void RunConfig::save_file(const std::string& path) const {
  std::ofstream out(path);
  check(out.good(), "cannot open config file for writing: " + path);
  out << to_json().dump(2) << "\n";
  check(out.good(), "config write failed: " + path);
}

identnet::BackboneConfig RunConfig::id_model_for_world() const {
  identnet::BackboneConfig cfg = id_model;
  cfg.input_size = preprocess.crop_size;
  cfg.num_classes = world.identities;
  return cfg;
}

identnet::BackboneConfig RunConfig::binary_model_config() const {
  identnet::BackboneConfig cfg = binary_model;
  cfg.input_size = preprocess.crop_size;
  cfg.num_classes = 1;
  return cfg;
}

fusion::FusionVariant RunConfig::fusion_variant() const {
  return fusion::configure_variant(detector.with_reenactment, world.identities, binary_model.tail_channels,
                                   detector.discrepancy_from_logits);
}

}  // namespace fcd
