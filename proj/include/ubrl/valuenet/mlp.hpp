#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ubrl/common/error.hpp"
#include "ubrl/common/rng.hpp"

namespace ubrl::valuenet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Layer {
  Matrix w;  ///< out x in
  Vector b;

  friend bool operator==(const Layer& x, const Layer& y) { return x.w == y.w && x.b == y.b; }
};

/// Gradient buffers with the same shapes as the layers.
using Gradients = std::vector<Layer>;

/**
 * Fully connected network, rectifier on hidden layers, linear output.
 * Batches are column-major: one sample per column.
 */
class Mlp {
 public:
  Mlp() = default;

  /// `widths` lists input, hidden and output sizes; all parameters start at zero.
  explicit Mlp(std::vector<int> widths) : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw ContractViolation("mlp needs at least input and output widths");
    for (std::size_t i = 0; i + 1 < widths_.size(); ++i) {
      if (widths_[i] <= 0 || widths_[i + 1] <= 0) throw ContractViolation("mlp widths must be positive");
      layers_.push_back({Matrix::Zero(widths_[i + 1], widths_[i]), Vector::Zero(widths_[i + 1])});
    }
  }

  /// Each parameter ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), drawn layer by layer.
  static Mlp random(std::vector<int> widths, Rng& rng) {
    Mlp m(std::move(widths));
    for (auto& l : m.layers_) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(l.w.cols()));
      for (Eigen::Index c = 0; c < l.w.cols(); ++c)
        for (Eigen::Index r = 0; r < l.w.rows(); ++r) l.w(r, c) = uniform(rng, -bound, bound);
      for (Eigen::Index r = 0; r < l.b.size(); ++r) l.b(r) = uniform(rng, -bound, bound);
    }
    return m;
  }

  const std::vector<int>& widths() const { return widths_; }
  int input_size() const { return widths_.front(); }
  int output_size() const { return widths_.back(); }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  /// Activations of every layer, input first; filled by `forward(X, tape)`.
  struct Tape {
    std::vector<Matrix> acts;
  };

  Matrix forward(const Matrix& x, Tape& tape) const {
    check_input(x.rows());
    tape.acts.resize(layers_.size() + 1);
    tape.acts[0] = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Matrix z = layers_[i].w * tape.acts[i];
      z.colwise() += layers_[i].b;
      if (i + 1 < layers_.size()) z = z.cwiseMax(0.0);
      tape.acts[i + 1] = std::move(z);
    }
    return tape.acts.back();
  }

  Matrix forward(const Matrix& x) const {
    check_input(x.rows());
    Matrix a = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Matrix z = layers_[i].w * a;
      z.colwise() += layers_[i].b;
      if (i + 1 < layers_.size()) z = z.cwiseMax(0.0);
      a = std::move(z);
    }
    return a;
  }

  Vector forward(std::span<const double> s) const {
    return forward(Eigen::Map<const Matrix>(s.data(), static_cast<Eigen::Index>(s.size()), 1)).col(0);
  }

  /// Parameter gradients of sum_j <d_out_j, f(x_j)> given the tape of the same batch.
  Gradients backward(const Tape& tape, const Matrix& d_out) const {
    Gradients g(layers_.size());
    Matrix delta = d_out;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      g[k].w = delta * tape.acts[k].transpose();
      g[k].b = delta.rowwise().sum();
      if (k == 0) break;
      Matrix back = layers_[k].w.transpose() * delta;
      back.array() *= (tape.acts[k].array() > 0.0).cast<double>();
      delta = std::move(back);
    }
    return g;
  }

  /// Gradient step: parameters -= rate * g.
  void descend(const Gradients& g, double rate) {
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      layers_[k].w.noalias() -= rate * g[k].w;
      layers_[k].b.noalias() -= rate * g[k].b;
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.w.size() + l.b.size());
    return n;
  }

  /// Per layer: weights in column-major order, then biases.
  std::vector<double> flat() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& l : layers_) {
      out.insert(out.end(), l.w.data(), l.w.data() + l.w.size());
      out.insert(out.end(), l.b.data(), l.b.data() + l.b.size());
    }
    return out;
  }

  void set_flat(std::span<const double> p) {
    if (p.size() != parameter_count()) throw ContractViolation("flat parameter length mismatch");
    std::size_t at = 0;
    for (auto& l : layers_) {
      std::copy_n(p.data() + at, l.w.size(), l.w.data());
      at += static_cast<std::size_t>(l.w.size());
      std::copy_n(p.data() + at, l.b.size(), l.b.data());
      at += static_cast<std::size_t>(l.b.size());
    }
  }

  friend bool operator==(const Mlp& x, const Mlp& y) { return x.widths_ == y.widths_ && x.layers_ == y.layers_; }

 private:
  void check_input(Eigen::Index rows) const {
    if (rows != input_size())
      throw ContractViolation("input length " + std::to_string(rows) + " does not match network input " +
                              std::to_string(input_size()));
  }

  std::vector<int> widths_;
  std::vector<Layer> layers_;
};

}  // namespace ubrl::valuenet
