#pragma once

#include <cstdint>
#include <deque>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace ickan {

// One trainable array. The adjoint buffer always matches the value shape;
// m/v are the Adam moment accumulators (allocated on first optimizer step).
struct Parameter {
  std::string name;
  std::vector<double> value;
  std::vector<double> adjoint;
  std::vector<double> m, v;

  int size() const { return static_cast<int>(value.size()); }
  void zero_adjoint() { adjoint.assign(value.size(), 0.0); }
};

// Owns all Parameters of a model. std::deque keeps addresses stable so
// layers can hold plain pointers.
class ParameterStore {
 public:
  Parameter* create(const std::string& name, std::vector<double> init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    params_.push_back(Parameter{name, std::move(init), {}, {}, {}});
    Parameter* p = &params_.back();
    p->zero_adjoint();
    index_[name] = p;
    return p;
  }

  Parameter* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : it->second;
  }

  std::deque<Parameter>& all() { return params_; }
  const std::deque<Parameter>& all() const { return params_; }

  void zero_adjoints() {
    for (auto& p : params_) p.zero_adjoint();
  }

  std::vector<std::vector<double>> snapshot() const {
    std::vector<std::vector<double>> s;
    s.reserve(params_.size());
    for (const auto& p : params_) s.push_back(p.value);
    return s;
  }

  void restore(const std::vector<std::vector<double>>& s) {
    if (s.size() != params_.size()) throw std::invalid_argument("snapshot size mismatch");
    size_t i = 0;
    for (auto& p : params_) p.value = s[i++];
  }

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, Parameter*> index_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction. A step with any non-finite adjoint is
// skipped entirely (no moment/step-counter update) and counted.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Returns false when the step was skipped because of a non-finite gradient.
  // Adjoints are zeroed either way.
  bool step(ParameterStore& store);

  int64_t steps() const { return t_; }
  int64_t skipped() const { return skipped_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  int64_t skipped_ = 0;
};

}  // namespace ickan
