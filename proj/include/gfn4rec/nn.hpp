#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gfn4rec/autograd.hpp"
#include "gfn4rec/errors.hpp"
#include "gfn4rec/rng.hpp"

namespace gfn4rec::nn {

using ag::Matrix;
using ag::Tensor;

/// Named, ordered collection of trainable parameters. Names are paths like
/// "encoder.layer0.attn.wq"; insertion order is the canonical order used by
/// checkpoints and optimizers.
class ParameterStore {
 public:
  Tensor add(const std::string& name, Matrix init) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter name: " + name);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(name, Tensor::parameter(std::move(init)));
    return entries_.back().second;
  }

  const Tensor& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].second;
  }
  Tensor& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second].second;
  }
  bool contains(const std::string& name) const { return index_.contains(name); }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : entries_) n += static_cast<std::size_t>(t.value().size());
    return n;
  }

  void zero_grad() {
    for (auto& [_, t] : entries_) t.zero_grad();
  }

  /// Parameter names that start with the given prefix.
  std::vector<std::string> names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [name, _] : entries_) {
      if (name.starts_with(prefix)) out.push_back(name);
    }
    return out;
  }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

inline Matrix random_normal(ag::Index rows, ag::Index cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (ag::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * standard_normal(rng);
  return m;
}

/// Fully connected layer y = x W + b with W stored in_dim x out_dim.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int in_dim, int out_dim, Rng& rng, bool bias = true) {
    weight_ = store.add(name + ".weight", random_normal(in_dim, out_dim, 1.0 / std::sqrt(in_dim), rng));
    if (bias) bias_ = store.add(name + ".bias", Matrix::Zero(1, out_dim));
  }

  Tensor operator()(const Tensor& x) const {
    Tensor y = ag::matmul(x, weight_);
    return bias_.defined() ? ag::add_row(y, bias_) : y;
  }

  const Tensor& weight() const { return weight_; }

 private:
  Tensor weight_;
  Tensor bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, int dim) {
    gain_ = store.add(name + ".gain", Matrix::Ones(1, dim));
    bias_ = store.add(name + ".bias", Matrix::Zero(1, dim));
  }
  Tensor operator()(const Tensor& x) const { return ag::layer_norm(x, gain_, bias_); }

 private:
  Tensor gain_;
  Tensor bias_;
};

/// Two-layer perceptron with a tanh hidden layer.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& name, int in_dim, int hidden_dim, int out_dim, Rng& rng)
      : hidden_(store, name + ".hidden", in_dim, hidden_dim, rng), out_(store, name + ".out", hidden_dim, out_dim, rng) {}

  Tensor operator()(const Tensor& x) const { return out_(ag::tanh(hidden_(x))); }

 private:
  Linear hidden_;
  Linear out_;
};

struct AdamConfig {
  double learning_rate{1e-3};
  double beta1{0.9};
  double beta2{0.999};
  double epsilon{1e-8};
  double l2{0.0};  // coupled L2 penalty added to the gradient
};

/// Adam with an optional L2 penalty. State is keyed by parameter name.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(ParameterStore& store) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : store) {
      if (!p.has_grad() && cfg_.l2 == 0.0) continue;
      Matrix g = p.grad();
      if (cfg_.l2 != 0.0) g += cfg_.l2 * p.value();
      auto& [m, v] = state_[name];
      if (m.size() == 0) {
        m = Matrix::Zero(g.rows(), g.cols());
        v = Matrix::Zero(g.rows(), g.cols());
      }
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      p.mutable_value().array() -=
          cfg_.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.epsilon);
    }
    store.zero_grad();
  }

  const AdamConfig& config() const { return cfg_; }
  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  long t_{0};
  std::map<std::string, std::pair<Matrix, Matrix>> state_;
};

}  // namespace gfn4rec::nn
