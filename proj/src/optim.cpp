#include "margo/optim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace margo::optim {

namespace {

// Flat views over the parameter blocks, in fingerprint order. Keeps the
// finite-difference sampler and Adam agnostic of the block structure.
std::vector<std::span<double>> param_blocks(model::ModelParams& p) {
  std::vector<std::span<double>> b;
  for (auto& mp : p.modalities) {
    b.emplace_back(mp.user_embeddings.a);
    b.emplace_back(mp.item_projection.a);
    b.emplace_back(mp.item_bias);
  }
  b.emplace_back(p.weight_logits.a);
  return b;
}

std::vector<std::span<double>> grad_blocks(Gradients& g) {
  std::vector<std::span<double>> b;
  for (size_t m = 0; m < g.user_embeddings.size(); ++m) {
    b.emplace_back(g.user_embeddings[m].a);
    b.emplace_back(g.item_projection[m].a);
    b.emplace_back(g.item_bias[m]);
  }
  b.emplace_back(g.weight_logits.a);
  return b;
}

std::vector<std::span<const double>> grad_blocks(const Gradients& g) {
  std::vector<std::span<const double>> b;
  for (size_t m = 0; m < g.user_embeddings.size(); ++m) {
    b.emplace_back(g.user_embeddings[m].a);
    b.emplace_back(g.item_projection[m].a);
    b.emplace_back(g.item_bias[m]);
  }
  b.emplace_back(g.weight_logits.a);
  return b;
}

}  // namespace

Gradients Gradients::zeros_like(const model::ModelParams& p) {
  Gradients g;
  for (int m = 0; m < p.modality_count; ++m) {
    g.user_embeddings.emplace_back(p.user_count, p.embed_dim);
    g.item_projection.emplace_back(p.embed_dim, p.modality_dims[m]);
    g.item_bias.emplace_back(p.embed_dim, 0.0);
  }
  g.weight_logits = Mat(p.item_count, p.modality_count);
  return g;
}

double Gradients::linf_diff(const Gradients& o) const {
  double mx = 0.0;
  auto acc = [&mx](const std::vector<double>& a, const std::vector<double>& b) {
    for (size_t i = 0; i < a.size(); ++i) mx = std::max(mx, std::abs(a[i] - b[i]));
  };
  for (size_t m = 0; m < user_embeddings.size(); ++m) {
    acc(user_embeddings[m].a, o.user_embeddings[m].a);
    acc(item_projection[m].a, o.item_projection[m].a);
    acc(item_bias[m], o.item_bias[m]);
  }
  acc(weight_logits.a, o.weight_logits.a);
  return mx;
}

std::pair<double, Gradients> backward(const std::vector<data::Triplet>& batch,
                                      const model::ModelParams& p,
                                      const std::vector<data::ModalityFeatureTable>& features,
                                      model::Stage stage, const losses::Hyperparams& hp,
                                      const BackwardOptions& opts) {
  const int M = p.modality_count;
  const int d = p.embed_dim;
  const bool stage2 = stage == model::Stage::II;
  const double joint_factor = hp.normalize_joint_weights ? 0.5 : 1.0;

  Gradients g = Gradients::zeros_like(p);
  double loss = 0.0;

  Vec g_pos_m(M), g_neg_m(M), g_wpos(M), g_wneg(M), de(d);

  for (const auto& t : batch) {
    auto s = model::score_triplet(p, features, t, stage);
    double margin = s.fused_pos - s.fused_neg;
    double sig = sigmoid(margin);
    double bpr = losses::bpr_loss(s.fused_pos, s.fused_neg);
    loss += bpr;
    if (opts.stats) {
      opts.stats->bpr_sum += bpr;
      opts.stats->count += 1;
    }

    // d/d(margin) of softplus(-margin)
    double g_fused_pos = -(1.0 - sig);
    double g_fused_neg = 1.0 - sig;
    std::fill(g_pos_m.begin(), g_pos_m.end(), 0.0);
    std::fill(g_neg_m.begin(), g_neg_m.end(), 0.0);

    if (stage2) {
      std::fill(g_wpos.begin(), g_wpos.end(), 0.0);
      std::fill(g_wneg.begin(), g_wneg.end(), 0.0);

      if (hp.alpha != 0.0 || opts.stats) {
        auto signal = losses::make_signal(s, hp.tau);
        const auto& z = signal.reliability;
        const double gamma = signal.confidence;
        double cal = losses::calibration_loss(signal, s.w_pos, s.w_neg,
                                              hp.normalize_joint_weights);
        if (opts.stats) {
          opts.stats->cal_sum += cal;
          opts.stats->gamma_sum += gamma;
        }
        if (hp.alpha != 0.0) loss += hp.alpha * cal;

        // Calibration pulls the joint weight q = w_i + w_k toward z:
        // d/dw of -gamma z log q is -gamma z / q (per component).
        if (hp.alpha != 0.0)
          for (int m = 0; m < M; ++m) {
            if (z[m] == 0.0) continue;
            double q = joint_factor * (s.w_pos[m] + s.w_neg[m]);
            if (q <= tol::kLogClamp) continue;
            double gq = -hp.alpha * gamma * z[m] * joint_factor / q;
            g_wpos[m] += gq;
            g_wneg[m] += gq;
          }

        if (opts.allow_signal_grad && hp.alpha != 0.0) {
          // KL sum and its z-derivatives, honoring the same clamps the loss
          // value uses.
          double kl = 0.0;
          Vec u(M, 0.0);
          for (int m = 0; m < M; ++m) {
            double q = std::max(joint_factor * (s.w_pos[m] + s.w_neg[m]), tol::kLogClamp);
            double zt = std::max(z[m], tol::kLogClamp);
            if (z[m] != 0.0) kl += z[m] * (std::log(zt) - std::log(q));
            u[m] = std::log(zt) + (z[m] > tol::kLogClamp ? 1.0 : 0.0) - std::log(q);
          }
          // Through the confidence: gamma = tanh(margin/tau) on the
          // satisfied-ranking branch, constant 0 otherwise.
          if (margin > 0.0) {
            double dgamma = hp.alpha * kl * (1.0 - gamma * gamma) / hp.tau;
            g_fused_pos += dgamma;
            g_fused_neg -= dgamma;
          }
          // Through the reliability vector: softmax Jacobian composed with
          // the g-mapping (identity branch only; the negative branch is a
          // constant plateau).
          double proj = 0.0;
          for (int m = 0; m < M; ++m) proj += u[m] * z[m];
          for (int m = 0; m < M; ++m) {
            if (signal.difference[m] < 0.0) continue;
            double gd = hp.alpha * gamma * z[m] * (u[m] - proj);
            g_pos_m[m] += gd;
            g_neg_m[m] -= gd;
          }
        }
      }

      // Weighted fusion: y = sum_m w[m] y^m.
      for (int m = 0; m < M; ++m) {
        g_pos_m[m] += g_fused_pos * s.w_pos[m];
        g_neg_m[m] += g_fused_neg * s.w_neg[m];
        g_wpos[m] += g_fused_pos * s.pos_rating[m];
        g_wneg[m] += g_fused_neg * s.neg_rating[m];
      }

      // Softmax Jacobian onto the logit rows.
      double dot_pos = 0.0, dot_neg = 0.0;
      for (int m = 0; m < M; ++m) {
        dot_pos += g_wpos[m] * s.w_pos[m];
        dot_neg += g_wneg[m] * s.w_neg[m];
      }
      double* gl_pos = g.weight_logits.row(t.pos_item);
      double* gl_neg = g.weight_logits.row(t.neg_item);
      for (int m = 0; m < M; ++m) {
        gl_pos[m] += s.w_pos[m] * (g_wpos[m] - dot_pos);
        gl_neg[m] += s.w_neg[m] * (g_wneg[m] - dot_neg);
      }
    } else {
      // Uniform fusion: y = sum_m y^m.
      for (int m = 0; m < M; ++m) {
        g_pos_m[m] += g_fused_pos;
        g_neg_m[m] += g_fused_neg;
      }
    }

    // Ratings into embeddings: y^m = e_u . e_i.
    for (int m = 0; m < M; ++m) {
      double* gu = g.user_embeddings[m].row(t.user);
      for (int r = 0; r < d; ++r)
        gu[r] += g_pos_m[m] * s.e_pos[m][r] + g_neg_m[m] * s.e_neg[m][r];

      const int dm = p.modality_dims[m];
      const double* f_pos = features[m].features.row(t.pos_item);
      const double* f_neg = features[m].features.row(t.neg_item);
      auto& gp = g.item_projection[m];
      auto& gb = g.item_bias[m];
      for (int r = 0; r < d; ++r) {
        double de_pos = g_pos_m[m] * s.e_u[m][r];
        double de_neg = g_neg_m[m] * s.e_u[m][r];
        double* gp_row = gp.row(r);
        for (int c = 0; c < dm; ++c) gp_row[c] += de_pos * f_pos[c] + de_neg * f_neg[c];
        gb[r] += de_pos + de_neg;
      }
    }

    if (!std::isfinite(loss))
      throw NumericError("non-finite loss at triplet (user=" + std::to_string(t.user) +
                         ", pos=" + std::to_string(t.pos_item) +
                         ", neg=" + std::to_string(t.neg_item) + ")");
  }

  // Global L2 regularizer over the encoder parameters (weight logits are not
  // regularized): d/dtheta of beta*||Theta||_2 is beta*theta/||Theta||_2.
  double norm = losses::param_l2_norm(p);
  loss += hp.beta * norm;
  if (hp.beta != 0.0 && norm > 0.0) {
    double scale = hp.beta / norm;
    for (int m = 0; m < M; ++m) {
      const auto& mp = p.modalities[m];
      for (size_t i = 0; i < mp.user_embeddings.a.size(); ++i)
        g.user_embeddings[m].a[i] += scale * mp.user_embeddings.a[i];
      for (size_t i = 0; i < mp.item_projection.a.size(); ++i)
        g.item_projection[m].a[i] += scale * mp.item_projection.a[i];
      for (size_t i = 0; i < mp.item_bias.size(); ++i)
        g.item_bias[m][i] += scale * mp.item_bias[i];
    }
  }

  return {loss, std::move(g)};
}

AdamState AdamState::zeros_like(const model::ModelParams& p) {
  AdamState s;
  s.m = Gradients::zeros_like(p);
  s.v = Gradients::zeros_like(p);
  return s;
}

void adam_step(model::ModelParams& p, const Gradients& g, AdamState& state, double lr) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));

  auto blocks_p = param_blocks(p);
  auto blocks_g = grad_blocks(g);
  auto blocks_m = grad_blocks(state.m);
  auto blocks_v = grad_blocks(state.v);
  if (blocks_p.size() != blocks_g.size()) throw UsageError("adam_step: shape mismatch");

  for (size_t b = 0; b < blocks_p.size(); ++b) {
    auto theta = blocks_p[b];
    auto grad = blocks_g[b];
    auto m1 = blocks_m[b];
    auto m2 = blocks_v[b];
    if (theta.size() != grad.size()) throw UsageError("adam_step: shape mismatch");
    for (size_t i = 0; i < theta.size(); ++i) {
      m1[i] = state.beta1 * m1[i] + (1.0 - state.beta1) * grad[i];
      m2[i] = state.beta2 * m2[i] + (1.0 - state.beta2) * grad[i] * grad[i];
      double mhat = m1[i] / bc1;
      double vhat = m2[i] / bc2;
      theta[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double finite_diff_check(const std::function<double(const model::ModelParams&)>& loss_fn,
                         const model::ModelParams& params, const Gradients& analytic,
                         double h, int sample_count, uint64_t seed) {
  if (h <= 0.0) throw UsageError("finite_diff_check: h must be > 0");

  model::ModelParams work = params;
  auto blocks = param_blocks(work);
  auto gblocks = grad_blocks(analytic);

  size_t total = 0;
  for (const auto& b : blocks) total += b.size();

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> coord(0, total - 1);

  double max_rel = 0.0;
  for (int n = 0; n < sample_count; ++n) {
    size_t flat = coord(rng);
    size_t b = 0;
    while (flat >= blocks[b].size()) {
      flat -= blocks[b].size();
      ++b;
    }
    double saved = blocks[b][flat];
    blocks[b][flat] = saved + h;
    double up = loss_fn(work);
    blocks[b][flat] = saved - h;
    double down = loss_fn(work);
    blocks[b][flat] = saved;

    double numeric = (up - down) / (2.0 * h);
    double a = gblocks[b][flat];
    double rel = std::abs(a - numeric) /
                 std::max({std::abs(a), std::abs(numeric), tol::kRelErrFloor});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace margo::optim
