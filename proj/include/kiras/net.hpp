#pragma once

#include <vector>

#include "kiras/common.hpp"

namespace kiras {

enum class Act { Elu, Tanh, Linear };

struct ForwardCache;
struct NetGrads;

// Fully connected network, double precision throughout. Layer l maps
// dims[l] -> dims[l+1] via w[l] * x + b[l] followed by act[l].
class DenseNet {
 public:
  DenseNet() = default;
  // Hidden layers use `hidden_act`, the output layer is linear.
  DenseNet(const std::vector<int>& layer_dims, Act hidden_act = Act::Elu);

  int in_dim() const { return dims_.front(); }
  int out_dim() const { return dims_.back(); }
  int num_layers() const { return static_cast<int>(w_.size()); }
  const std::vector<int>& dims() const { return dims_; }

  Mat& weight(int l) { return w_[l]; }
  const Mat& weight(int l) const { return w_[l]; }
  Vec& bias(int l) { return b_[l]; }
  const Vec& bias(int l) const { return b_[l]; }
  Act activation(int l) const { return act_[l]; }
  void set_activation(int l, Act a) { act_[l] = a; }

  // Orthogonal weights (gain 1), zero biases; the output layer weight is
  // scaled by `last_layer_gain` (small values keep initial outputs near 0).
  void init_orthogonal(Rng& rng, double last_layer_gain = 1.0);

  Vec forward(const Vec& input) const;
  // Batched forward, one sample per column.
  Mat forward(const Mat& input) const;
  ForwardCache forward_cached(const Mat& input) const;

  // Exact reverse-mode gradients of sum_batch <upstream_col, output_col>.
  NetGrads backward(const ForwardCache& cache, const Mat& upstream) const;

  bool all_finite() const;
  std::int64_t param_count() const;
  // Flat parameter view in (w0, b0, w1, b1, ...) order, column-major
  // within each weight matrix. Used by finite-difference checks.
  double get_param(std::int64_t i) const;
  void set_param(std::int64_t i, double v);

  // Inserts a zero column into the first-layer weight at input `index`;
  // outputs are unchanged for inputs that carry 0 in the new slot.
  void insert_input_column(int index);

  // Inserts a zero row (and bias) into the last layer at output `index`;
  // pre-existing output entries are unchanged, the new one is always 0.
  void insert_output_row(int index);

 private:
  void check_input(Eigen::Index rows) const;

  std::vector<int> dims_;
  std::vector<Mat> w_;
  std::vector<Vec> b_;
  std::vector<Act> act_;
};

struct ForwardCache {
  Mat input;
  std::vector<Mat> pre;   // pre-activation per layer
  std::vector<Mat> post;  // post-activation per layer
  bool valid = false;

  const Mat& output() const {
    if (!valid) throw UsageError("forward cache is empty");
    return post.back();
  }
};

struct NetGrads {
  std::vector<Mat> w;
  std::vector<Vec> b;
  Mat input;  // gradient w.r.t. the input batch

  void setZero() {
    for (auto& m : w) m.setZero();
    for (auto& v : b) v.setZero();
    input.setZero();
  }
  double squared_norm() const;
  void scale(double s);
  bool all_finite() const;
};

NetGrads make_grads_like(const DenseNet& net);

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step_count = 0;
  std::vector<Mat> m_w, v_w;
  std::vector<Vec> m_b, v_b;

  static AdamState for_net(const DenseNet& net, double lr = 1e-3);
};

// One bias-corrected Adam update on the network parameters.
void adam_step(DenseNet& net, const NetGrads& grads, AdamState& state);

// Adam on a standalone vector parameter (e.g. a policy log-std).
struct AdamVecState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step_count = 0;
  Vec m, v;

  static AdamVecState for_vec(const Vec& p, double lr = 1e-3);
};

void adam_step(Vec& param, const Vec& grad, AdamVecState& state);

double activate_scalar(Act a, double x);
double activate_grad_scalar(Act a, double pre);

}  // namespace kiras
