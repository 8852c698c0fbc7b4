#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fcd/common.hpp"
#include "fcd/nn/param.hpp"

namespace fcd {

// Versioned checkpoint container: a JSON metadata blob (config echo, stage
// info) plus named float32 tensors. Sub-networks of a composite model are
// stored under name prefixes ("ef/", "ec/", ...).
class Checkpoint {
 public:
  struct TensorEntry {
    std::vector<int> shape;
    std::vector<float> data;
  };

  nlohmann::json meta;

  void put_tensor(const std::string& name, const std::vector<int>& shape, const float* data, size_t count);
  bool has_tensor(const std::string& name) const { return tensors_.count(name) > 0; }
  const TensorEntry& tensor(const std::string& name) const;

  template <typename S>
  void put_params(const std::string& prefix, const std::vector<nn::Param<S>*>& params) {
    for (auto* p : params) {
      std::vector<float> buf(p->value.size());
      for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(p->value[i]);
      put_tensor(prefix + p->name, p->shape, buf.data(), buf.size());
    }
  }

  template <typename S>
  void load_params(const std::string& prefix, const std::vector<nn::Param<S>*>& params) const {
    for (auto* p : params) {
      const TensorEntry& t = tensor(prefix + p->name);
      check(t.shape == p->shape, "checkpoint tensor shape mismatch: " + prefix + p->name);
      for (size_t i = 0; i < p->value.size(); ++i) p->value[i] = static_cast<S>(t.data[i]);
    }
  }

  void put_vector(const std::string& name, const std::vector<float>& v);
  std::vector<float> get_vector(const std::string& name) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  size_t tensor_count() const { return tensors_.size(); }

 private:
  std::map<std::string, TensorEntry> tensors_;
};

}  // namespace fcd
