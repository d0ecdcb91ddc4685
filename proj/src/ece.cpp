#include "kiras/ece.hpp"

#include <algorithm>
#include <cmath>

namespace kiras {

namespace {

std::vector<int> layer_dims(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> dims;
  dims.push_back(in);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

}  // namespace

EceNets::EceNets(int history_frames, int prop_dim, int n_skills_, int v_dim_, int lat,
                 const std::vector<int>& enc_hidden, const std::vector<int>& dec_hidden)
    : encoder(layer_dims(history_frames * prop_dim, enc_hidden, v_dim_ + 2 * lat), Act::Elu),
      decoder(layer_dims(lat + n_skills_, dec_hidden, prop_dim), Act::Elu),
      prior(std::vector<int>{n_skills_, 2 * lat}, Act::Elu),
      v_dim(v_dim_),
      lat_dim(lat),
      n_skills(n_skills_),
      prop(prop_dim),
      history(history_frames) {
  if (history_frames < 1 || prop_dim < 1 || n_skills_ < 1 || v_dim_ < 1 || lat < 1)
    throw InvalidArgument("estimator dimensions must be positive");
}

EceOutput ece_forward(const EceNets& nets, const Vec& history_flat, const Vec& skill_onehot,
                      Rng* rng) {
  if (history_flat.size() != nets.history * nets.prop)
    throw InvalidArgument("estimator history has wrong size");
  if (skill_onehot.size() != nets.n_skills)
    throw InvalidArgument("estimator one-hot has wrong size");

  EceOutput out;
  const Vec enc = nets.encoder.forward(history_flat);
  out.v_hat = enc.head(nets.v_dim);
  out.post_mean = enc.segment(nets.v_dim, nets.lat_dim);
  out.post_logvar = enc.segment(nets.v_dim + nets.lat_dim, nets.lat_dim);

  const Vec pri = nets.prior.forward(skill_onehot);
  out.prior_mean = pri.head(nets.lat_dim);
  out.prior_logvar = pri.tail(nets.lat_dim);

  if (rng != nullptr) {
    Vec eps(nets.lat_dim);
    for (int i = 0; i < nets.lat_dim; ++i) eps(i) = normal(*rng);
    out.z_lat = out.post_mean.array() + (0.5 * out.post_logvar.array()).exp() * eps.array();
  } else {
    out.z_lat = out.post_mean;
  }

  Vec dec_in(nets.lat_dim + nets.n_skills);
  dec_in << out.z_lat, skill_onehot;
  out.recon = nets.decoder.forward(dec_in);

  out.z = Vec(nets.v_dim + nets.lat_dim);
  out.z << out.v_hat, out.z_lat;
  return out;
}

double gaussian_kl(const Vec& mq, const Vec& lq, const Vec& mp, const Vec& lp) {
  if (mq.size() != lq.size() || mq.size() != mp.size() || mq.size() != lp.size())
    throw InvalidArgument("kl dimension mismatch");
  double kl = 0.0;
  for (int i = 0; i < mq.size(); ++i) {
    const double d = mq(i) - mp(i);
    kl += 0.5 * (std::exp(lq(i) - lp(i)) + d * d * std::exp(-lp(i)) - 1.0 + lp(i) - lq(i));
  }
  return kl;
}

namespace {

struct EceForwardBatch {
  ForwardCache enc_cache, dec_cache, prior_cache;
  Mat v_hat, mq, lq, pm, plv, z, recon;
};

EceForwardBatch forward_batch(const EceNets& nets, const EceBatch& batch, const Mat& eps) {
  const auto B = batch.history.cols();
  if (batch.history.rows() != nets.history * nets.prop)
    throw InvalidArgument("estimator batch history has wrong rows");
  if (batch.onehot.rows() != nets.n_skills || batch.onehot.cols() != B)
    throw InvalidArgument("estimator batch one-hot has wrong shape");
  if (batch.v_true.rows() != nets.v_dim || batch.v_true.cols() != B)
    throw InvalidArgument("estimator batch velocity target has wrong shape");
  if (batch.o_next.rows() != nets.prop || batch.o_next.cols() != B)
    throw InvalidArgument("estimator batch next-frame target has wrong shape");
  if (eps.rows() != nets.lat_dim || eps.cols() != B)
    throw InvalidArgument("estimator noise has wrong shape");

  EceForwardBatch fb;
  fb.enc_cache = nets.encoder.forward_cached(batch.history);
  const Mat& enc = fb.enc_cache.output();
  fb.v_hat = enc.topRows(nets.v_dim);
  fb.mq = enc.middleRows(nets.v_dim, nets.lat_dim);
  fb.lq = enc.middleRows(nets.v_dim + nets.lat_dim, nets.lat_dim);

  fb.prior_cache = nets.prior.forward_cached(batch.onehot);
  const Mat& pri = fb.prior_cache.output();
  fb.pm = pri.topRows(nets.lat_dim);
  fb.plv = pri.bottomRows(nets.lat_dim);

  fb.z = fb.mq.array() + (0.5 * fb.lq.array()).exp() * eps.array();

  Mat dec_in(nets.lat_dim + nets.n_skills, B);
  dec_in.topRows(nets.lat_dim) = fb.z;
  dec_in.bottomRows(nets.n_skills) = batch.onehot;
  fb.dec_cache = nets.decoder.forward_cached(dec_in);
  fb.recon = fb.dec_cache.output();
  return fb;
}

EceTerms loss_terms(const EceNets& nets, const EceBatch& batch, double beta,
                    const EceForwardBatch& fb) {
  const auto B = batch.history.cols();
  EceTerms t;
  t.mse_v = (fb.v_hat - batch.v_true).squaredNorm() / static_cast<double>(B);
  t.mse_o = (fb.recon - batch.o_next).squaredNorm() / static_cast<double>(B);
  double kl = 0.0;
  for (Eigen::Index b = 0; b < B; ++b)
    kl += gaussian_kl(fb.mq.col(b), fb.lq.col(b), fb.pm.col(b), fb.plv.col(b));
  t.kl = kl / static_cast<double>(B);
  t.total = t.mse_v + t.mse_o + beta * t.kl;
  return t;
}

}  // namespace

EceTerms ece_loss_eval(const EceNets& nets, const EceBatch& batch, double beta, const Mat& eps) {
  return loss_terms(nets, batch, beta, forward_batch(nets, batch, eps));
}

EceTerms ece_loss_and_grads(const EceNets& nets, const EceBatch& batch, double beta,
                            const Mat& eps, EceGrads* grads) {
  const auto B = batch.history.cols();
  const double inv_b = 1.0 / static_cast<double>(B);
  const EceForwardBatch fb = forward_batch(nets, batch, eps);
  const EceTerms terms = loss_terms(nets, batch, beta, fb);

  // reconstruction path through the decoder, then into z
  Mat d_recon = 2.0 * inv_b * (fb.recon - batch.o_next);
  NetGrads dec_g = nets.decoder.backward(fb.dec_cache, d_recon);
  const Mat d_z = dec_g.input.topRows(nets.lat_dim);

  // z = mq + exp(lq / 2) * eps
  Mat d_mq = d_z;
  Mat d_lq = (d_z.array() * 0.5 * (fb.z - fb.mq).array()).matrix();

  // KL terms, batch-averaged and scaled by beta
  const double kb = beta * inv_b;
  const Mat ratio = ((fb.lq - fb.plv).array().exp()).matrix();
  const Mat diff = fb.mq - fb.pm;
  const Mat inv_pvar = ((-fb.plv.array()).exp()).matrix();
  d_mq.array() += kb * diff.array() * inv_pvar.array();
  d_lq.array() += kb * 0.5 * (ratio.array() - 1.0);
  Mat d_pm = (-kb * diff.array() * inv_pvar.array()).matrix();
  Mat d_plv =
      (kb * 0.5 * (1.0 - ratio.array() - diff.array().square() * inv_pvar.array())).matrix();

  Mat d_enc(nets.v_dim + 2 * nets.lat_dim, B);
  d_enc.topRows(nets.v_dim) = 2.0 * inv_b * (fb.v_hat - batch.v_true);
  d_enc.middleRows(nets.v_dim, nets.lat_dim) = d_mq;
  d_enc.middleRows(nets.v_dim + nets.lat_dim, nets.lat_dim) = d_lq;
  NetGrads enc_g = nets.encoder.backward(fb.enc_cache, d_enc);

  Mat d_pri(2 * nets.lat_dim, B);
  d_pri.topRows(nets.lat_dim) = d_pm;
  d_pri.bottomRows(nets.lat_dim) = d_plv;
  NetGrads pri_g = nets.prior.backward(fb.prior_cache, d_pri);

  if (grads != nullptr) {
    grads->encoder = std::move(enc_g);
    grads->decoder = std::move(dec_g);
    grads->prior = std::move(pri_g);
  }
  return terms;
}

EceOptimizers EceOptimizers::for_nets(const EceNets& nets, double lr) {
  EceOptimizers opt;
  opt.encoder = AdamState::for_net(nets.encoder, lr);
  opt.decoder = AdamState::for_net(nets.decoder, lr);
  opt.prior = AdamState::for_net(nets.prior, lr);
  return opt;
}

EceTerms ece_update(EceNets& nets, EceOptimizers& opt, const EceBatch& batch, double beta,
                    double grad_clip, Rng& rng) {
  Mat eps(nets.lat_dim, batch.history.cols());
  for (Eigen::Index c = 0; c < eps.cols(); ++c)
    for (Eigen::Index r = 0; r < eps.rows(); ++r) eps(r, c) = normal(rng);

  EceGrads grads;
  const EceTerms terms = ece_loss_and_grads(nets, batch, beta, eps, &grads);
  if (!std::isfinite(terms.total)) throw NumericalError("estimator loss is not finite");
  for (NetGrads* g : {&grads.encoder, &grads.decoder, &grads.prior}) {
    if (!g->all_finite()) throw NumericalError("estimator gradients are not finite");
    if (grad_clip > 0.0) {
      const double norm = std::sqrt(g->squared_norm());
      if (norm > grad_clip) g->scale(grad_clip / norm);
    }
  }
  adam_step(nets.encoder, grads.encoder, opt.encoder);
  adam_step(nets.decoder, grads.decoder, opt.decoder);
  adam_step(nets.prior, grads.prior, opt.prior);
  return terms;
}

double adaboot_gate(double batch_mean_reward, double running_best) {
  const double p = batch_mean_reward / std::max(running_best, 1e-6);
  return std::clamp(p, 0.2, 1.0);
}

}  // namespace kiras
