#pragma once

// Fully connected feed-forward network with a flat parameter vector.
// Layer l maps sizes[l] -> sizes[l+1]; hidden layers use the chosen
// activation, the output layer is affine.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lshed/error.hpp"

namespace lshed {

enum class Activation { relu, tanh, linear };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::linear: return "linear";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "linear") return Activation::linear;
  throw ValidationError("unknown activation '" + s + "'");
}

enum class LossKind { mse, softmax_xent };

class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<std::size_t> sizes, Activation act) : sizes_(std::move(sizes)), act_(act) {
    if (sizes_.size() < 2) throw ValidationError("network needs at least an input and an output layer");
    for (std::size_t s : sizes_)
      if (s == 0) throw ValidationError("layer sizes must be positive");
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      w_off_.push_back(off);
      off += sizes_[l] * sizes_[l + 1];
      b_off_.push_back(off);
      off += sizes_[l + 1];
    }
    theta_.assign(off, 0.0);
  }

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  Activation activation() const { return act_; }
  std::size_t num_layers() const { return sizes_.size() - 1; }
  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  std::vector<double>& params() { return theta_; }
  const std::vector<double>& params() const { return theta_; }

  double& w(std::size_t l, std::size_t row, std::size_t col) { return theta_[w_off_[l] + row * sizes_[l] + col]; }
  double w(std::size_t l, std::size_t row, std::size_t col) const { return theta_[w_off_[l] + row * sizes_[l] + col]; }
  double& b(std::size_t l, std::size_t row) { return theta_[b_off_[l] + row]; }
  double b(std::size_t l, std::size_t row) const { return theta_[b_off_[l] + row]; }
  bool is_weight(std::size_t p) const {
    for (std::size_t l = 0; l < num_layers(); ++l)
      if (p >= w_off_[l] && p < b_off_[l]) return true;
    return false;
  }

  /// Uniform Glorot (tanh, linear) or He (relu) initialization, zero biases.
  /// With zero_output the network starts as the constant-zero predictor.
  void initialize(std::uint64_t seed, bool zero_output = false) {
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < num_layers(); ++l) {
      const double fan_in = static_cast<double>(sizes_[l]), fan_out = static_cast<double>(sizes_[l + 1]);
      const double limit =
          act_ == Activation::relu ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> u(-limit, limit);
      const bool zero = zero_output && l + 1 == num_layers();
      for (std::size_t k = w_off_[l]; k < b_off_[l]; ++k) theta_[k] = zero ? 0.0 : u(rng);
      for (std::size_t k = b_off_[l]; k < b_off_[l] + sizes_[l + 1]; ++k) theta_[k] = 0.0;
    }
  }

  /// Pre-activations per layer; zs[l] has sizes[l+1] entries.
  void forward_trace(std::span<const double> x, std::vector<std::vector<double>>& zs,
                     std::vector<std::vector<double>>& as) const {
    if (x.size() != input_size()) throw ValidationError("input length differs from network input size");
    zs.resize(num_layers());
    as.resize(num_layers() + 1);
    as[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < num_layers(); ++l) {
      const std::size_t in = sizes_[l], out = sizes_[l + 1];
      zs[l].assign(out, 0.0);
      const double* wl = &theta_[w_off_[l]];
      const double* bl = &theta_[b_off_[l]];
      const std::vector<double>& a = as[l];
      for (std::size_t r = 0; r < out; ++r) {
        double s = bl[r];
        const double* row = wl + r * in;
        for (std::size_t c = 0; c < in; ++c) s += row[c] * a[c];
        zs[l][r] = s;
      }
      as[l + 1] = zs[l];
      if (l + 1 < num_layers()) activate(as[l + 1]);
    }
  }

  std::vector<double> forward(std::span<const double> x) const {
    std::vector<std::vector<double>> zs, as;
    forward_trace(x, zs, as);
    return as.back();
  }

  /// Mean per-sample loss plus weight_decay * sum of squared weights; the
  /// gradient of the same quantity is written to grad when non-null.
  /// MSE targets are row-major n x output_size; cross-entropy targets are
  /// class indices.
  double loss(std::span<const double> x, std::span<const double> targets, std::size_t n, LossKind kind,
              double weight_decay, std::vector<double>* grad) const {
    const std::size_t d = input_size(), m = output_size();
    if (x.size() != n * d) throw ValidationError("batch input size mismatch");
    if (targets.size() != (kind == LossKind::mse ? n * m : n)) throw ValidationError("batch target size mismatch");
    if (grad) grad->assign(theta_.size(), 0.0);
    std::vector<std::vector<double>> zs, as;
    std::vector<double> delta, prev;
    double total = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      forward_trace(x.subspan(s * d, d), zs, as);
      const std::vector<double>& y = as.back();
      delta.assign(m, 0.0);
      if (kind == LossKind::mse) {
        for (std::size_t o = 0; o < m; ++o) {
          const double e = y[o] - targets[s * m + o];
          total += e * e;
          delta[o] = 2.0 * e;
        }
      } else {
        const auto cls = static_cast<std::size_t>(targets[s]);
        if (cls >= m) throw ValidationError("class index out of range");
        const double mx = *std::max_element(y.begin(), y.end());
        double z = 0.0;
        for (double v : y) z += std::exp(v - mx);
        total += std::log(z) + mx - y[cls];
        for (std::size_t o = 0; o < m; ++o) delta[o] = std::exp(y[o] - mx) / z - (o == cls ? 1.0 : 0.0);
      }
      if (!grad) continue;
      for (std::size_t l = num_layers(); l-- > 0;) {
        const std::size_t in = sizes_[l], out = sizes_[l + 1];
        double* gw = &(*grad)[w_off_[l]];
        double* gb = &(*grad)[b_off_[l]];
        const std::vector<double>& a = as[l];
        for (std::size_t r = 0; r < out; ++r) {
          gb[r] += delta[r];
          double* grow = gw + r * in;
          for (std::size_t c = 0; c < in; ++c) grow[c] += delta[r] * a[c];
        }
        if (l == 0) break;
        prev.assign(in, 0.0);
        const double* wl = &theta_[w_off_[l]];
        for (std::size_t r = 0; r < out; ++r) {
          const double* row = wl + r * in;
          for (std::size_t c = 0; c < in; ++c) prev[c] += row[c] * delta[r];
        }
        for (std::size_t c = 0; c < in; ++c) prev[c] *= activation_derivative(zs[l - 1][c]);
        delta.swap(prev);
      }
    }
    const double inv_n = n ? 1.0 / static_cast<double>(n) : 0.0;
    double penalty = 0.0;
    for (std::size_t l = 0; l < num_layers(); ++l)
      for (std::size_t k = w_off_[l]; k < b_off_[l]; ++k) penalty += theta_[k] * theta_[k];
    if (grad) {
      for (double& g : *grad) g *= inv_n;
      for (std::size_t l = 0; l < num_layers(); ++l)
        for (std::size_t k = w_off_[l]; k < b_off_[l]; ++k) (*grad)[k] += 2.0 * weight_decay * theta_[k];
    }
    return total * inv_n + weight_decay * penalty;
  }

  /// Smallest |pre-activation| of any hidden unit over the batch; relu
  /// gradients are only checkable when this is well away from zero.
  double min_kink_margin(std::span<const double> x, std::size_t n) const {
    double margin = std::numeric_limits<double>::infinity();
    if (act_ != Activation::relu) return margin;
    std::vector<std::vector<double>> zs, as;
    for (std::size_t s = 0; s < n; ++s) {
      forward_trace(x.subspan(s * input_size(), input_size()), zs, as);
      for (std::size_t l = 0; l + 1 < num_layers(); ++l)
        for (double z : zs[l]) margin = std::min(margin, std::abs(z));
    }
    return margin;
  }

 private:
  void activate(std::vector<double>& v) const {
    if (act_ == Activation::relu)
      for (double& e : v) e = e > 0.0 ? e : 0.0;
    else if (act_ == Activation::tanh)
      for (double& e : v) e = std::tanh(e);
  }
  double activation_derivative(double z) const {
    if (act_ == Activation::relu) return z > 0.0 ? 1.0 : 0.0;
    if (act_ == Activation::tanh) {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    return 1.0;
  }

  std::vector<std::size_t> sizes_;
  Activation act_ = Activation::relu;
  std::vector<double> theta_;
  std::vector<std::size_t> w_off_, b_off_;
};

/// Max relative error between the analytic gradient and central differences
/// with step h; entries are compared as |a - f| / max(|a|, |f|, floor), so
/// components smaller than floor are held to an absolute bound instead.
inline double gradient_check(const Mlp& net, std::span<const double> x, std::span<const double> targets,
                             std::size_t n, LossKind kind, double weight_decay = 0.0, double h = 1e-5,
                             double floor = 1e-4) {
  std::vector<double> grad;
  net.loss(x, targets, n, kind, weight_decay, &grad);
  Mlp probe = net;
  double worst = 0.0;
  for (std::size_t p = 0; p < grad.size(); ++p) {
    const double orig = probe.params()[p];
    probe.params()[p] = orig + h;
    const double up = probe.loss(x, targets, n, kind, weight_decay, nullptr);
    probe.params()[p] = orig - h;
    const double down = probe.loss(x, targets, n, kind, weight_decay, nullptr);
    probe.params()[p] = orig;
    const double fd = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(grad[p]), std::abs(fd), floor});
    worst = std::max(worst, std::abs(grad[p] - fd) / denom);
  }
  return worst;
}

struct Adam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  std::uint64_t t = 0;

  void step(std::vector<double>& theta, const std::vector<double>& grad) {
    if (m.size() != theta.size()) {
      m.assign(theta.size(), 0.0);
      v.assign(theta.size(), 0.0);
    }
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t k = 0; k < theta.size(); ++k) {
      m[k] = beta1 * m[k] + (1.0 - beta1) * grad[k];
      v[k] = beta2 * v[k] + (1.0 - beta2) * grad[k] * grad[k];
      theta[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
    }
  }
};

}  // namespace lshed
