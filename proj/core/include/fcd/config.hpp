#pragma once

#include <string>

#include <json.hpp>

#include "fcd/fusion.hpp"
#include "fcd/identnet.hpp"
#include "fcd/segnet.hpp"
#include "fcd/synthworld.hpp"

namespace fcd {

// One configuration governs every stage; every random draw in the system
// derives from `seed`. The JSON form is echoed into checkpoints and reports.
struct RunConfig {
  uint64_t seed = 17;
  int threads = 0;  // 0 = hardware concurrency

  synthworld::WorldConfig world;

  struct Preprocess {
    double enlarge_factor = 1.2;
    int crop_size = 64;
    double fill = 0.5;
  } preprocess;

  segnet::SegConfig seg_model;
  segnet::SegTrainConfig seg_train;

  identnet::BackboneConfig id_model;  // num_classes follows world.identities
  identnet::IdTrainConfig id_train;

  identnet::BackboneConfig binary_model;  // single-logit head
  fusion::BinaryTrainConfig binary_train;

  struct Detector {
    int hidden_width = 256;
    bool with_reenactment = false;
    bool discrepancy_from_logits = false;
  } detector;
  fusion::DetectorTrainConfig detector_train;

  struct Pipeline {
    double min_face_height = 16;  // desk-scale images; the full-scale rule is 64
    std::string detector = "oracle";
  } pipeline;

  static RunConfig defaults();
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  static RunConfig load_file(const std::string& path);
  void save_file(const std::string& path) const;

  // Derived helpers.
  identnet::BackboneConfig id_model_for_world() const;
  identnet::BackboneConfig binary_model_config() const;
  fusion::FusionVariant fusion_variant() const;
};

}  // namespace fcd
