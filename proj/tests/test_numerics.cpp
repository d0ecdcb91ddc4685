#include <doctest.h>

#include <cstring>
#include <vector>

#include "kiras/net.hpp"

using namespace kiras;

namespace {

// plain loop-based forward, kept independent of the Eigen paths
std::vector<double> oracle_forward(const DenseNet& net, const std::vector<double>& in) {
  std::vector<double> x = in;
  for (int l = 0; l < net.num_layers(); ++l) {
    std::vector<double> y(net.weight(l).rows());
    for (size_t i = 0; i < y.size(); ++i) {
      double s = net.bias(l)(static_cast<Eigen::Index>(i));
      for (size_t j = 0; j < x.size(); ++j)
        s += net.weight(l)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * x[j];
      y[i] = activate_scalar(net.activation(l), s);
    }
    x = std::move(y);
  }
  return x;
}

double grad_at(const NetGrads& g, std::int64_t i) {
  for (size_t l = 0; l < g.w.size(); ++l) {
    if (i < g.w[l].size()) return g.w[l].data()[i];
    i -= g.w[l].size();
    if (i < g.b[l].size()) return g.b[l](i);
    i -= g.b[l].size();
  }
  throw InvalidArgument("grad index out of range");
}

double scalar_loss(const DenseNet& net, const Mat& input, const Mat& upstream) {
  return (net.forward(input).cwiseProduct(upstream)).sum();
}

void check_fd(const DenseNet& base, Act hidden, Rng& rng) {
  DenseNet net = base;
  for (int l = 0; l + 1 < net.num_layers(); ++l) net.set_activation(l, hidden);

  Mat input(net.in_dim(), 4);
  for (Eigen::Index j = 0; j < input.cols(); ++j)
    for (Eigen::Index i = 0; i < input.rows(); ++i) input(i, j) = normal(rng, 0.0, 1.0);
  Mat upstream(net.out_dim(), 4);
  for (Eigen::Index j = 0; j < upstream.cols(); ++j)
    for (Eigen::Index i = 0; i < upstream.rows(); ++i) upstream(i, j) = normal(rng, 0.0, 1.0);

  auto cache = net.forward_cached(input);
  NetGrads g = net.backward(cache, upstream);

  const double h = 1e-5;
  std::uniform_int_distribution<std::int64_t> pick(0, net.param_count() - 1);
  for (int k = 0; k < 64; ++k) {
    std::int64_t i = pick(rng);
    DenseNet plus = net, minus = net;
    plus.set_param(i, net.get_param(i) + h);
    minus.set_param(i, net.get_param(i) - h);
    double fd = (scalar_loss(plus, input, upstream) - scalar_loss(minus, input, upstream)) / (2 * h);
    double an = grad_at(g, i);
    CHECK(std::abs(fd - an) <= 1e-4 * std::max(1.0, std::max(std::abs(fd), std::abs(an))));
  }

  // input gradient, a few random entries
  std::uniform_int_distribution<Eigen::Index> pr(0, input.rows() - 1), pc(0, input.cols() - 1);
  for (int k = 0; k < 16; ++k) {
    Eigen::Index i = pr(rng), j = pc(rng);
    Mat plus = input, minus = input;
    plus(i, j) += h;
    minus(i, j) -= h;
    double fd = (scalar_loss(net, plus, upstream) - scalar_loss(net, minus, upstream)) / (2 * h);
    double an = g.input(i, j);
    CHECK(std::abs(fd - an) <= 1e-4 * std::max(1.0, std::max(std::abs(fd), std::abs(an))));
  }
}

}  // namespace

TEST_SUITE("numerics") {

TEST_CASE("zero network maps everything to zero") {
  DenseNet net({3, 4, 2});
  Vec x(3);
  x << 1.0, -2.0, 0.5;
  CHECK(net.forward(x).isZero(0.0));
}

TEST_CASE("identity layer reproduces its input") {
  DenseNet net({3, 3});
  net.weight(0) = Mat::Identity(3, 3);
  Vec x(3);
  x << 0.25, -1.5, 3.0;
  Vec y = net.forward(x);
  CHECK(y(0) == 0.25);
  CHECK(y(1) == -1.5);
  CHECK(y(2) == 3.0);
}

TEST_CASE("forward matches a plain loop oracle") {
  Rng rng(7);
  DenseNet net({5, 8, 7, 3});
  net.init_orthogonal(rng);
  for (int l = 0; l < net.num_layers(); ++l)
    for (Eigen::Index i = 0; i < net.bias(l).size(); ++i) net.bias(l)(i) = normal(rng, 0.0, 0.3);

  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> in(5);
    Vec x(5);
    for (int i = 0; i < 5; ++i) {
      in[i] = normal(rng, 0.0, 1.0);
      x(i) = in[i];
    }
    std::vector<double> want = oracle_forward(net, in);
    Vec got = net.forward(x);
    Mat got_batch = net.forward(Mat(x));
    REQUIRE(want.size() == 3);
    for (int i = 0; i < 3; ++i) {
      CHECK(got(i) == doctest::Approx(want[i]).epsilon(1e-12));
      CHECK(got_batch(i, 0) == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("backward of a single linear unit returns the input as weight gradient") {
  DenseNet net({2, 1});
  net.weight(0) << 3.0, -1.0;
  Mat x(2, 1);
  x << 0.5, 2.0;
  auto cache = net.forward_cached(x);
  CHECK(cache.output()(0, 0) == doctest::Approx(0.5 * 3.0 - 2.0));
  NetGrads g = net.backward(cache, Mat::Ones(1, 1));
  CHECK(g.w[0](0, 0) == 0.5);
  CHECK(g.w[0](0, 1) == 2.0);
  CHECK(g.b[0](0) == 1.0);
  CHECK(g.input(0, 0) == 3.0);
  CHECK(g.input(1, 0) == -1.0);
}

TEST_CASE("gradients match central finite differences") {
  Rng rng(11);
  DenseNet net({5, 7, 6, 3});
  net.init_orthogonal(rng);
  for (int l = 0; l < net.num_layers(); ++l)
    for (Eigen::Index i = 0; i < net.bias(l).size(); ++i) net.bias(l)(i) = normal(rng, 0.0, 0.2);
  check_fd(net, Act::Elu, rng);
  check_fd(net, Act::Tanh, rng);
}

TEST_CASE("zero upstream yields zero gradients") {
  Rng rng(3);
  DenseNet net({4, 6, 2});
  net.init_orthogonal(rng);
  Mat x = Mat::Ones(4, 3);
  NetGrads g = net.backward(net.forward_cached(x), Mat::Zero(2, 3));
  CHECK(g.squared_norm() == 0.0);
  CHECK(g.input.isZero(0.0));
}

TEST_CASE("adam first step moves a parameter by about the learning rate") {
  DenseNet net({1, 1});
  net.weight(0)(0, 0) = 2.0;
  AdamState st = AdamState::for_net(net, 1e-3);
  NetGrads g = make_grads_like(net);
  g.w[0](0, 0) = 4.0;
  adam_step(net, g, st);
  CHECK(std::abs(net.weight(0)(0, 0) - (2.0 - 1e-3)) < 1e-8);
  CHECK(st.step_count == 1);
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
  Rng rng(5);
  DenseNet net({3, 4, 2});
  net.init_orthogonal(rng);
  DenseNet before = net;
  AdamState st = AdamState::for_net(net, 1e-3);
  NetGrads g = make_grads_like(net);
  adam_step(net, g, st);
  for (int l = 0; l < net.num_layers(); ++l) {
    CHECK(net.weight(l) == before.weight(l));
    CHECK(net.bias(l) == before.bias(l));
  }
}

TEST_CASE("identical updates stay bit-identical across copies") {
  Rng rng(9);
  DenseNet a({4, 8, 3});
  a.init_orthogonal(rng);
  DenseNet b = a;
  AdamState sa = AdamState::for_net(a), sb = AdamState::for_net(b);
  Rng grng(21);
  for (int step = 0; step < 10; ++step) {
    NetGrads g = make_grads_like(a);
    for (auto& m : g.w)
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(grng, 0.0, 1.0);
    for (auto& v : g.b)
      for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(grng, 0.0, 1.0);
    adam_step(a, g, sa);
    adam_step(b, g, sb);
  }
  for (int l = 0; l < a.num_layers(); ++l) {
    CHECK(a.weight(l) == b.weight(l));
    CHECK(a.bias(l) == b.bias(l));
  }
}

TEST_CASE("repeated forwards return identical bits") {
  Rng rng(13);
  DenseNet net({6, 9, 4});
  net.init_orthogonal(rng);
  Vec x(6);
  for (int i = 0; i < 6; ++i) x(i) = normal(rng, 0.0, 1.0);
  Vec y1 = net.forward(x), y2 = net.forward(x);
  CHECK(std::memcmp(y1.data(), y2.data(), sizeof(double) * 4) == 0);
}

TEST_CASE("orthogonal init gives orthonormal directions and scaled last layer") {
  Rng rng(17);
  DenseNet net({8, 16, 4});
  net.init_orthogonal(rng, 0.5);
  const Mat& w0 = net.weight(0);  // 16x8, tall
  CHECK((w0.transpose() * w0 - Mat::Identity(8, 8)).cwiseAbs().maxCoeff() < 1e-9);
  const Mat& w1 = net.weight(1);  // 4x16, wide, gain 0.5
  CHECK((w1 * w1.transpose() - 0.25 * Mat::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(net.bias(0).isZero(0.0));
}

TEST_CASE("inserting a zero input column preserves outputs bit for bit") {
  Rng rng(19);
  DenseNet net({5, 8, 3});
  net.init_orthogonal(rng);
  for (int l = 0; l < net.num_layers(); ++l)
    for (Eigen::Index i = 0; i < net.bias(l).size(); ++i) net.bias(l)(i) = normal(rng, 0.0, 0.1);
  Vec x(5);
  for (int i = 0; i < 5; ++i) x(i) = normal(rng, 0.0, 1.0);
  Vec before = net.forward(x);

  DenseNet widened = net;
  widened.insert_input_column(2);
  CHECK(widened.in_dim() == 6);
  Vec x2 = RunningStat::inserted(x, 2, 0.0);
  Vec after = widened.forward(x2);
  CHECK(std::memcmp(before.data(), after.data(), sizeof(double) * 3) == 0);
}

TEST_CASE("flat parameter indexing round-trips") {
  Rng rng(23);
  DenseNet net({3, 5, 2});
  net.init_orthogonal(rng);
  std::int64_t n = net.param_count();
  CHECK(n == 5 * 3 + 5 + 2 * 5 + 2);
  std::uniform_int_distribution<std::int64_t> pick(0, n - 1);
  for (int k = 0; k < 20; ++k) {
    std::int64_t i = pick(rng);
    double v = normal(rng, 0.0, 1.0);
    net.set_param(i, v);
    CHECK(net.get_param(i) == v);
  }
  CHECK_THROWS_AS((void)net.get_param(n), InvalidArgument);
}

TEST_CASE("running stat matches a two-pass oracle and honors freeze") {
  Rng rng(29);
  RunningStat rs(3);
  std::vector<Vec> samples;
  for (int i = 0; i < 200; ++i) {
    Vec s(3);
    s << normal(rng, 1.0, 2.0), normal(rng, -3.0, 0.5), normal(rng, 0.0, 1.0);
    samples.push_back(s);
    rs.update(s);
  }
  Vec mean = Vec::Zero(3);
  for (const auto& s : samples) mean += s;
  mean /= 200.0;
  Vec var = Vec::Zero(3);
  for (const auto& s : samples) var += (s - mean).cwiseProduct(s - mean);
  var /= 200.0;
  for (int i = 0; i < 3; ++i) {
    CHECK(rs.mean()(i) == doctest::Approx(mean(i)).epsilon(1e-10));
    CHECK(rs.stddev()(i) == doctest::Approx(std::sqrt(var(i))).epsilon(1e-10));
  }
  Vec probe(3);
  probe << 2.0, -2.0, 0.3;
  Vec n1 = rs.normalize(probe);
  rs.freeze();
  Vec bogus(3);
  bogus << 100.0, 100.0, 100.0;
  rs.update(bogus);
  Vec n2 = rs.normalize(probe);
  CHECK((n1 - n2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("running stat with an inserted dimension keeps old normalization") {
  Rng rng(31);
  RunningStat rs(2);
  for (int i = 0; i < 50; ++i) {
    Vec s(2);
    s << normal(rng, 0.5, 1.5), normal(rng, -1.0, 0.7);
    rs.update(s);
  }
  Vec probe(2);
  probe << 0.9, -0.4;
  Vec before = rs.normalize(probe);
  rs.insert_dim(1);
  Vec wide = rs.normalize(RunningStat::inserted(probe, 1, 0.0));
  CHECK(wide(0) == before(0));
  CHECK(wide(2) == before(1));
  CHECK(wide(1) == 0.0);
}

TEST_CASE("rng state survives a text round trip") {
  Rng rng(42);
  for (int i = 0; i < 100; ++i) (void)rng();
  std::string snap = rng_to_string(rng);
  std::vector<std::uint64_t> want;
  for (int i = 0; i < 10; ++i) want.push_back(rng());
  Rng other(1);
  rng_from_string(other, snap);
  for (int i = 0; i < 10; ++i) CHECK(other() == want[static_cast<size_t>(i)]);
}

TEST_CASE("dimension mismatches and misuse are rejected") {
  DenseNet net({3, 2});
  Vec bad(4);
  bad.setZero();
  CHECK_THROWS_AS((void)net.forward(bad), InvalidArgument);
  ForwardCache empty;
  CHECK_THROWS_AS((void)net.backward(empty, Mat::Zero(2, 1)), UsageError);
  CHECK_THROWS_AS(DenseNet({5}), InvalidArgument);
  CHECK_THROWS_AS(DenseNet({3, 0, 2}), InvalidArgument);
}

}  // TEST_SUITE
