#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "kiras/ece.hpp"

using namespace kiras;

namespace {

Mat random_mat(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = normal(rng);
  return m;
}

EceNets small_nets(Rng& rng) {
  EceNets nets(2, 3, 3, 2, 4, {8}, {8});
  nets.encoder.init_orthogonal(rng);
  nets.decoder.init_orthogonal(rng);
  nets.prior.init_orthogonal(rng);
  return nets;
}

EceBatch small_batch(const EceNets& nets, Eigen::Index b, Rng& rng) {
  EceBatch batch;
  batch.history = random_mat(nets.history * nets.prop, b, rng);
  batch.onehot = Mat::Zero(nets.n_skills, b);
  for (Eigen::Index c = 0; c < b; ++c) batch.onehot(c % nets.n_skills, c) = 1.0;
  batch.v_true = random_mat(nets.v_dim, b, rng);
  batch.o_next = random_mat(nets.prop, b, rng);
  return batch;
}

// flat (w0,b0,w1,b1) indexing mirrors DenseNet::get_param
double grad_at(const DenseNet& net, const NetGrads& g, std::int64_t idx) {
  std::int64_t off = idx;
  for (int l = 0; l < net.num_layers(); ++l) {
    const auto& wl = g.w[static_cast<size_t>(l)];
    if (off < static_cast<std::int64_t>(wl.size())) return wl(off % wl.rows(), off / wl.rows());
    off -= static_cast<std::int64_t>(wl.size());
    const auto& bl = g.b[static_cast<size_t>(l)];
    if (off < static_cast<std::int64_t>(bl.size())) return bl(off);
    off -= static_cast<std::int64_t>(bl.size());
  }
  FAIL("parameter index out of range");
  return 0.0;
}

Vec net_params(const DenseNet& net) {
  Vec out(net.param_count());
  for (std::int64_t i = 0; i < net.param_count(); ++i) out(i) = net.get_param(i);
  return out;
}

}  // namespace

TEST_SUITE("ece") {

TEST_CASE("network shapes follow the configured dimensions") {
  const EceNets nets(4, 7, 5, 2, 8, {16, 12}, {12, 16});
  CHECK(nets.encoder.in_dim() == 28);
  CHECK(nets.encoder.out_dim() == 18);
  CHECK(nets.decoder.in_dim() == 13);
  CHECK(nets.decoder.out_dim() == 7);
  CHECK(nets.prior.in_dim() == 5);
  CHECK(nets.prior.out_dim() == 16);
  CHECK(nets.z_dim() == 10);

  CHECK_THROWS_AS(EceNets(0, 7, 5, 2, 8, {16}, {16}), InvalidArgument);
  CHECK_THROWS_AS(EceNets(4, 7, 5, 2, 0, {16}, {16}), InvalidArgument);
}

TEST_CASE("zero-weight networks estimate zero") {
  const EceNets nets(4, 3, 2, 2, 4, {6}, {6});
  Rng rng(1);
  Vec history(12);
  for (Eigen::Index i = 0; i < 12; ++i) history(i) = normal(rng);
  Vec onehot = Vec::Zero(2);
  onehot(1) = 1.0;

  const EceOutput inf = ece_forward(nets, history, onehot, nullptr);
  CHECK(inf.v_hat.cwiseAbs().maxCoeff() == 0.0);
  CHECK(inf.recon.cwiseAbs().maxCoeff() == 0.0);
  CHECK(inf.z_lat.cwiseAbs().maxCoeff() == 0.0);
  CHECK(inf.z.size() == 6);
  CHECK(inf.z.cwiseAbs().maxCoeff() == 0.0);

  // sampled latent passes the zero decoder unchanged into a zero reconstruction
  const EceOutput train = ece_forward(nets, history, onehot, &rng);
  CHECK(train.recon.cwiseAbs().maxCoeff() == 0.0);
  CHECK(train.z_lat.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("inference at the posterior mean is deterministic") {
  Rng rng(2);
  const EceNets nets = small_nets(rng);
  Vec history(6);
  for (Eigen::Index i = 0; i < 6; ++i) history(i) = normal(rng);
  Vec onehot = Vec::Zero(3);
  onehot(0) = 1.0;

  const EceOutput a = ece_forward(nets, history, onehot, nullptr);
  const EceOutput b = ece_forward(nets, history, onehot, nullptr);
  CHECK((a.z - b.z).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.recon - b.recon).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.z_lat - a.post_mean).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("seeded sampling reproduces the reparameterized draw") {
  Rng rng(3);
  const EceNets nets = small_nets(rng);
  Vec history(6);
  for (Eigen::Index i = 0; i < 6; ++i) history(i) = normal(rng);
  Vec onehot = Vec::Zero(3);
  onehot(2) = 1.0;

  Rng sa(7), sb(7), sc(8);
  const EceOutput a = ece_forward(nets, history, onehot, &sa);
  const EceOutput b = ece_forward(nets, history, onehot, &sb);
  const EceOutput c = ece_forward(nets, history, onehot, &sc);
  CHECK((a.z_lat - b.z_lat).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.recon - b.recon).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.z_lat - c.z_lat).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("input size mismatches are rejected") {
  Rng rng(4);
  const EceNets nets = small_nets(rng);
  CHECK_THROWS_AS(ece_forward(nets, Vec::Zero(5), Vec::Zero(3), nullptr), InvalidArgument);
  CHECK_THROWS_AS(ece_forward(nets, Vec::Zero(6), Vec::Zero(4), nullptr), InvalidArgument);
}

TEST_CASE("closed-form gaussian kl matches hand values") {
  const Vec zero = Vec::Zero(4);
  CHECK(gaussian_kl(zero, zero, zero, zero) == 0.0);

  Vec mq(1), lq(1), mp(1), lp(1);
  mq << 1.0;
  lq << 0.0;
  mp << 0.0;
  lp << 0.0;
  CHECK(gaussian_kl(mq, lq, mp, lp) == doctest::Approx(0.5).epsilon(1e-12));

  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    Vec a(3), b(3), c(3), d(3);
    for (int i = 0; i < 3; ++i) {
      a(i) = 2.0 * normal(rng);
      b(i) = 2.0 * normal(rng);
      c(i) = 2.0 * normal(rng);
      d(i) = 2.0 * normal(rng);
    }
    CHECK(gaussian_kl(a, b, c, d) >= -1e-12);
  }

  CHECK_THROWS_AS(gaussian_kl(Vec::Zero(3), Vec::Zero(3), Vec::Zero(3), Vec::Zero(2)),
                  InvalidArgument);
}

TEST_CASE("beta zero reduces the loss to its two mse terms") {
  Rng rng(6);
  const EceNets nets = small_nets(rng);
  const EceBatch batch = small_batch(nets, 6, rng);
  const Mat eps = random_mat(nets.lat_dim, 6, rng);

  const EceTerms t0 = ece_loss_eval(nets, batch, 0.0, eps);
  CHECK(t0.total == t0.mse_v + t0.mse_o);
  CHECK(t0.kl > 0.0);

  const EceTerms tb = ece_loss_eval(nets, batch, 0.1, eps);
  CHECK(tb.total == doctest::Approx(tb.mse_v + tb.mse_o + 0.1 * tb.kl).epsilon(1e-15));
  CHECK(tb.mse_v == t0.mse_v);
  CHECK(tb.mse_o == t0.mse_o);
}

TEST_CASE("perfect prediction with a matched prior gives zero loss") {
  const EceNets nets(2, 3, 2, 2, 4, {6}, {6});
  EceBatch batch;
  Rng rng(7);
  batch.history = random_mat(6, 5, rng);
  batch.onehot = Mat::Zero(2, 5);
  for (Eigen::Index c = 0; c < 5; ++c) batch.onehot(c % 2, c) = 1.0;
  batch.v_true = Mat::Zero(2, 5);
  batch.o_next = Mat::Zero(3, 5);
  const Mat eps = Mat::Zero(4, 5);

  const EceTerms t = ece_loss_eval(nets, batch, 0.1, eps);
  CHECK(t.mse_v == 0.0);
  CHECK(t.mse_o == 0.0);
  CHECK(t.kl == 0.0);
  CHECK(t.total == 0.0);
}

TEST_CASE("full loss gradient matches central finite differences") {
  Rng rng(8);
  EceNets nets = small_nets(rng);
  const EceBatch batch = small_batch(nets, 5, rng);
  const Mat eps = random_mat(nets.lat_dim, 5, rng);
  const double beta = 0.1;

  EceGrads grads;
  const EceTerms terms = ece_loss_and_grads(nets, batch, beta, eps, &grads);
  CHECK(terms.total == ece_loss_eval(nets, batch, beta, eps).total);

  const double h = 1e-5;
  EceNets probe = nets;
  struct Target {
    DenseNet* net;
    const DenseNet* ref;
    const NetGrads* grad;
    int trials;
  };
  const Target targets[] = {{&probe.encoder, &nets.encoder, &grads.encoder, 22},
                            {&probe.decoder, &nets.decoder, &grads.decoder, 22},
                            {&probe.prior, &nets.prior, &grads.prior, 20}};
  for (const Target& target : targets) {
    const auto count = target.net->param_count();
    for (int trial = 0; trial < target.trials; ++trial) {
      const auto idx =
          static_cast<std::int64_t>(uniform(rng, 0.0, 1.0) * static_cast<double>(count));
      const double orig = target.net->get_param(idx);
      target.net->set_param(idx, orig + h);
      const double up = ece_loss_eval(probe, batch, beta, eps).total;
      target.net->set_param(idx, orig - h);
      const double dn = ece_loss_eval(probe, batch, beta, eps).total;
      target.net->set_param(idx, orig);
      const double fd = (up - dn) / (2.0 * h);
      const double an = grad_at(*target.ref, *target.grad, idx);
      CHECK(std::abs(fd - an) <= 1e-4 * std::max({1.0, std::abs(fd), std::abs(an)}));
    }
  }
}

TEST_CASE("updates are seed-reproducible and reject non-finite batches") {
  Rng rng(9);
  EceNets a = small_nets(rng);
  EceNets b = a;
  const EceBatch batch = small_batch(a, 6, rng);
  EceOptimizers opt_a = EceOptimizers::for_nets(a, 1e-3);
  EceOptimizers opt_b = EceOptimizers::for_nets(b, 1e-3);

  const Vec before = net_params(a.encoder);
  Rng ra(21), rb(21);
  const EceTerms ta = ece_update(a, opt_a, batch, 0.1, 1.0, ra);
  const EceTerms tb = ece_update(b, opt_b, batch, 0.1, 1.0, rb);
  CHECK(std::isfinite(ta.total));
  CHECK(ta.total == tb.total);
  CHECK((net_params(a.encoder) - before).cwiseAbs().maxCoeff() > 0.0);
  for (const DenseNet* net : {&a.encoder, &a.decoder, &a.prior}) {
    const DenseNet* other = net == &a.encoder ? &b.encoder
                            : net == &a.decoder ? &b.decoder
                                                : &b.prior;
    const Vec pa = net_params(*net), pb = net_params(*other);
    for (Eigen::Index i = 0; i < pa.size(); ++i) CHECK(pa(i) == pb(i));
  }

  EceBatch poisoned = batch;
  poisoned.history(0, 0) = std::numeric_limits<double>::quiet_NaN();
  Rng rc(22);
  CHECK_THROWS_AS(ece_update(a, opt_a, poisoned, 0.1, 1.0, rc), NumericalError);
}

TEST_CASE("the update gate clamps the reward ratio") {
  CHECK(adaboot_gate(1.0, 1.0) == 1.0);
  CHECK(adaboot_gate(0.5, 1.0) == 0.5);
  CHECK(adaboot_gate(0.1, 1.0) == 0.2);
  CHECK(adaboot_gate(2.0, 1.0) == 1.0);
  CHECK(adaboot_gate(-1.0, 1.0) == 0.2);
  CHECK(adaboot_gate(0.0, 0.0) == 0.2);
  CHECK(adaboot_gate(5e-7, 0.0) == doctest::Approx(0.5).epsilon(1e-12));
}

}  // TEST_SUITE
