#pragma once

#include "kiras/net.hpp"

namespace kiras {

// skill-conditioned CVAE over proprioceptive history: encoder emits a
// velocity estimate plus posterior params, decoder reconstructs the next
// proprioceptive frame from the latent and the skill one-hot
struct EceNets {
  DenseNet encoder;  // H*prop -> v_dim + 2*lat
  DenseNet decoder;  // lat + n_skills -> prop
  DenseNet prior;    // n_skills -> 2*lat, single linear layer
  int v_dim = 2;
  int lat_dim = 8;
  int n_skills = 5;
  int prop = 0;
  int history = 4;

  EceNets() = default;
  EceNets(int history_frames, int prop_dim, int n_skills_, int v_dim_, int lat,
          const std::vector<int>& enc_hidden, const std::vector<int>& dec_hidden);

  int z_dim() const { return v_dim + lat_dim; }
};

struct EceOutput {
  Vec v_hat;
  Vec post_mean, post_logvar;
  Vec prior_mean, prior_logvar;
  Vec z_lat;
  Vec z;      // concat(v_hat, z_lat), the actor/critic context input
  Vec recon;  // predicted next proprioceptive frame
};

// rng == nullptr evaluates at the posterior mean (inference)
EceOutput ece_forward(const EceNets& nets, const Vec& history_flat, const Vec& skill_onehot,
                      Rng* rng);

struct EceBatch {
  Mat history;  // (H*prop, B)
  Mat onehot;   // (n_skills, B)
  Mat v_true;   // (v_dim, B)
  Mat o_next;   // (prop, B)
};

struct EceTerms {
  double total = 0.0;
  double mse_v = 0.0;
  double mse_o = 0.0;
  double kl = 0.0;
};

// closed-form diagonal-Gaussian KL(q || p), summed over dims
double gaussian_kl(const Vec& mq, const Vec& lq, const Vec& mp, const Vec& lp);

// loss under a fixed reparameterization noise matrix (lat_dim x B)
EceTerms ece_loss_eval(const EceNets& nets, const EceBatch& batch, double beta, const Mat& eps);

struct EceGrads {
  NetGrads encoder, decoder, prior;
};

EceTerms ece_loss_and_grads(const EceNets& nets, const EceBatch& batch, double beta,
                            const Mat& eps, EceGrads* grads);

struct EceOptimizers {
  AdamState encoder, decoder, prior;
  static EceOptimizers for_nets(const EceNets& nets, double lr = 1e-3);
};

EceTerms ece_update(EceNets& nets, EceOptimizers& opt, const EceBatch& batch, double beta,
                    double grad_clip, Rng& rng);

// probability of applying this iteration's estimator update
double adaboot_gate(double batch_mean_reward, double running_best);

}  // namespace kiras
