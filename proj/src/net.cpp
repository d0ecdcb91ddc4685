#include "kiras/net.hpp"

#include <Eigen/Dense>

namespace kiras {

namespace {

void apply_act(Act a, Mat& x) {
  switch (a) {
    case Act::Elu:
      x = x.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
      break;
    case Act::Tanh:
      x = x.array().tanh().matrix();
      break;
    case Act::Linear:
      break;
  }
}

// Derivative evaluated from the pre-activation.
Mat act_grad(Act a, const Mat& pre) {
  switch (a) {
    case Act::Elu:
      return pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : std::exp(v); });
    case Act::Tanh: {
      Mat t = pre.array().tanh().matrix();
      return (1.0 - t.array().square()).matrix();
    }
    case Act::Linear:
      return Mat::Ones(pre.rows(), pre.cols());
  }
  return Mat();
}

// Orthogonal matrix via QR of a Gaussian draw, signs fixed by diag(R).
Mat orthogonal(int rows, int cols, Rng& rng) {
  const bool tall = rows >= cols;
  Mat g(tall ? rows : cols, tall ? cols : rows);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (Eigen::Index j = 0; j < g.cols(); ++j)
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = nd(rng);
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(g.rows(), g.cols());
  Mat r = qr.matrixQR().topRows(g.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return tall ? q : Mat(q.transpose());
}

}  // namespace

double activate_scalar(Act a, double x) {
  switch (a) {
    case Act::Elu: return x > 0.0 ? x : std::expm1(x);
    case Act::Tanh: return std::tanh(x);
    case Act::Linear: return x;
  }
  return x;
}

double activate_grad_scalar(Act a, double pre) {
  switch (a) {
    case Act::Elu: return pre > 0.0 ? 1.0 : std::exp(pre);
    case Act::Tanh: { double t = std::tanh(pre); return 1.0 - t * t; }
    case Act::Linear: return 1.0;
  }
  return 1.0;
}

DenseNet::DenseNet(const std::vector<int>& layer_dims, Act hidden_act) : dims_(layer_dims) {
  if (dims_.size() < 2) throw InvalidArgument("network needs at least one layer");
  for (int d : dims_)
    if (d <= 0) throw InvalidArgument("layer dims must be positive");
  const int layers = static_cast<int>(dims_.size()) - 1;
  w_.reserve(layers);
  b_.reserve(layers);
  act_.reserve(layers);
  for (int l = 0; l < layers; ++l) {
    w_.emplace_back(Mat::Zero(dims_[l + 1], dims_[l]));
    b_.emplace_back(Vec::Zero(dims_[l + 1]));
    act_.push_back(l + 1 == layers ? Act::Linear : hidden_act);
  }
}

void DenseNet::init_orthogonal(Rng& rng, double last_layer_gain) {
  for (int l = 0; l < num_layers(); ++l) {
    w_[l] = orthogonal(static_cast<int>(w_[l].rows()), static_cast<int>(w_[l].cols()), rng);
    if (l + 1 == num_layers()) w_[l] *= last_layer_gain;
    b_[l].setZero();
  }
}

void DenseNet::check_input(Eigen::Index rows) const {
  if (rows != in_dim())
    throw InvalidArgument("input dim " + std::to_string(rows) + " does not match network input " +
                          std::to_string(in_dim()));
}

Vec DenseNet::forward(const Vec& input) const {
  check_input(input.size());
  Vec x = input;
  for (int l = 0; l < num_layers(); ++l) {
    // column-sequential accumulation: a zero input slot against a zero
    // weight column leaves every output bit unchanged
    Vec y = b_[l];
    for (Eigen::Index j = 0; j < w_[l].cols(); ++j) y += x(j) * w_[l].col(j);
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = activate_scalar(act_[l], y(i));
    x = std::move(y);
  }
  return x;
}

Mat DenseNet::forward(const Mat& input) const {
  check_input(input.rows());
  Mat x = input;
  for (int l = 0; l < num_layers(); ++l) {
    x = (w_[l] * x).colwise() + b_[l];
    apply_act(act_[l], x);
  }
  return x;
}

ForwardCache DenseNet::forward_cached(const Mat& input) const {
  check_input(input.rows());
  ForwardCache cache;
  cache.input = input;
  cache.pre.resize(num_layers());
  cache.post.resize(num_layers());
  const Mat* x = &input;
  for (int l = 0; l < num_layers(); ++l) {
    cache.pre[l] = (w_[l] * (*x)).colwise() + b_[l];
    cache.post[l] = cache.pre[l];
    apply_act(act_[l], cache.post[l]);
    x = &cache.post[l];
  }
  cache.valid = true;
  return cache;
}

NetGrads DenseNet::backward(const ForwardCache& cache, const Mat& upstream) const {
  if (!cache.valid) throw UsageError("backward called without a cached forward");
  if (upstream.rows() != out_dim() || upstream.cols() != cache.input.cols())
    throw InvalidArgument("upstream gradient shape mismatch");

  NetGrads g = make_grads_like(*this);
  Mat delta = upstream.cwiseProduct(act_grad(act_.back(), cache.pre.back()));
  for (int l = num_layers() - 1; l >= 0; --l) {
    const Mat& below = l == 0 ? cache.input : cache.post[l - 1];
    g.w[l] = delta * below.transpose();
    g.b[l] = delta.rowwise().sum();
    if (l > 0) delta = (w_[l].transpose() * delta).cwiseProduct(act_grad(act_[l - 1], cache.pre[l - 1]));
    else g.input = w_[0].transpose() * delta;
  }
  return g;
}

bool DenseNet::all_finite() const {
  for (const auto& m : w_)
    if (!m.allFinite()) return false;
  for (const auto& v : b_)
    if (!v.allFinite()) return false;
  return true;
}

std::int64_t DenseNet::param_count() const {
  std::int64_t n = 0;
  for (int l = 0; l < num_layers(); ++l) n += w_[l].size() + b_[l].size();
  return n;
}

double DenseNet::get_param(std::int64_t i) const {
  for (int l = 0; l < num_layers(); ++l) {
    if (i < w_[l].size()) return w_[l].data()[i];
    i -= w_[l].size();
    if (i < b_[l].size()) return b_[l](i);
    i -= b_[l].size();
  }
  throw InvalidArgument("parameter index out of range");
}

void DenseNet::set_param(std::int64_t i, double v) {
  for (int l = 0; l < num_layers(); ++l) {
    if (i < w_[l].size()) { w_[l].data()[i] = v; return; }
    i -= w_[l].size();
    if (i < b_[l].size()) { b_[l](i) = v; return; }
    i -= b_[l].size();
  }
  throw InvalidArgument("parameter index out of range");
}

void DenseNet::insert_input_column(int index) {
  if (index < 0 || index > dims_.front()) throw InvalidArgument("insert index out of range");
  Mat wide(w_[0].rows(), w_[0].cols() + 1);
  wide.leftCols(index) = w_[0].leftCols(index);
  wide.col(index).setZero();
  wide.rightCols(w_[0].cols() - index) = w_[0].rightCols(w_[0].cols() - index);
  w_[0] = wide;
  dims_.front() += 1;
}

void DenseNet::insert_output_row(int index) {
  if (index < 0 || index > dims_.back()) throw InvalidArgument("insert index out of range");
  Mat& last = w_.back();
  Mat tall(last.rows() + 1, last.cols());
  tall.topRows(index) = last.topRows(index);
  tall.row(index).setZero();
  tall.bottomRows(last.rows() - index) = last.bottomRows(last.rows() - index);
  last = tall;
  Vec& bias = b_.back();
  Vec grown(bias.size() + 1);
  grown.head(index) = bias.head(index);
  grown(index) = 0.0;
  grown.tail(bias.size() - index) = bias.tail(bias.size() - index);
  bias = grown;
  dims_.back() += 1;
}

double NetGrads::squared_norm() const {
  double s = 0.0;
  for (const auto& m : w) s += m.squaredNorm();
  for (const auto& v : b) s += v.squaredNorm();
  return s;
}

void NetGrads::scale(double s) {
  for (auto& m : w) m *= s;
  for (auto& v : b) v *= s;
}

bool NetGrads::all_finite() const {
  for (const auto& m : w)
    if (!m.allFinite()) return false;
  for (const auto& v : b)
    if (!v.allFinite()) return false;
  return true;
}

NetGrads make_grads_like(const DenseNet& net) {
  NetGrads g;
  g.w.reserve(net.num_layers());
  g.b.reserve(net.num_layers());
  for (int l = 0; l < net.num_layers(); ++l) {
    g.w.emplace_back(Mat::Zero(net.weight(l).rows(), net.weight(l).cols()));
    g.b.emplace_back(Vec::Zero(net.bias(l).size()));
  }
  g.input = Mat::Zero(net.in_dim(), 0);
  return g;
}

AdamState AdamState::for_net(const DenseNet& net, double lr) {
  AdamState s;
  s.learning_rate = lr;
  for (int l = 0; l < net.num_layers(); ++l) {
    s.m_w.emplace_back(Mat::Zero(net.weight(l).rows(), net.weight(l).cols()));
    s.v_w.emplace_back(Mat::Zero(net.weight(l).rows(), net.weight(l).cols()));
    s.m_b.emplace_back(Vec::Zero(net.bias(l).size()));
    s.v_b.emplace_back(Vec::Zero(net.bias(l).size()));
  }
  return s;
}

namespace {

template <typename T>
void adam_update(T& p, const T& g, T& m, T& v, double lr, double b1, double b2, double eps,
                 double bc1, double bc2) {
  m = b1 * m + (1.0 - b1) * g;
  v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
  p -= lr * (m / bc1).cwiseQuotient(((v / bc2).cwiseSqrt().array() + eps).matrix());
}

}  // namespace

void adam_step(DenseNet& net, const NetGrads& grads, AdamState& state) {
  if (static_cast<int>(grads.w.size()) != net.num_layers() ||
      static_cast<int>(state.m_w.size()) != net.num_layers())
    throw InvalidArgument("adam state/gradient layer count mismatch");
  for (int l = 0; l < net.num_layers(); ++l) {
    if (grads.w[l].rows() != net.weight(l).rows() || grads.w[l].cols() != net.weight(l).cols() ||
        grads.b[l].size() != net.bias(l).size() || state.m_w[l].rows() != net.weight(l).rows() ||
        state.m_w[l].cols() != net.weight(l).cols())
      throw InvalidArgument("adam shapes do not match parameters");
  }
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (int l = 0; l < net.num_layers(); ++l) {
    adam_update(net.weight(l), grads.w[l], state.m_w[l], state.v_w[l], state.learning_rate,
                state.beta1, state.beta2, state.epsilon, bc1, bc2);
    adam_update(net.bias(l), grads.b[l], state.m_b[l], state.v_b[l], state.learning_rate,
                state.beta1, state.beta2, state.epsilon, bc1, bc2);
  }
}

AdamVecState AdamVecState::for_vec(const Vec& p, double lr) {
  AdamVecState s;
  s.learning_rate = lr;
  s.m = Vec::Zero(p.size());
  s.v = Vec::Zero(p.size());
  return s;
}

void adam_step(Vec& param, const Vec& grad, AdamVecState& state) {
  if (grad.size() != param.size() || state.m.size() != param.size())
    throw InvalidArgument("adam vector shape mismatch");
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  adam_update(param, grad, state.m, state.v, state.learning_rate, state.beta1, state.beta2,
              state.epsilon, bc1, bc2);
}

}  // namespace kiras
