#include "mnce/simulator.hpp"

#include <cmath>

#include "mnce/geometry.hpp"
#include "mnce/loss.hpp"

namespace mnce {

TrainConfig TrainConfig::normalized() const {
  TrainConfig cfg = *this;
  if (cfg.n_classes < 1 || cfg.n_samples < cfg.n_classes ||
      cfg.input_dim < 2 || cfg.embed_dim < 2) {
    throw Error(ErrorCode::invalid_argument,
                "TrainConfig: need n_classes >= 1, n_samples >= n_classes, "
                "dims >= 2");
  }
  if (cfg.batch < 2 || cfg.steps < 1 || !(cfg.lr >= 0.0) ||
      !(cfg.ema_momentum >= 0.0 && cfg.ema_momentum <= 1.0) ||
      !(cfg.sigma_view >= 0.0) || !(cfg.sigma_class >= 0.0)) {
    throw Error(ErrorCode::invalid_argument,
                "TrainConfig: invalid optimizer/data parameters");
  }
  if (cfg.mode == Mode::byol_like) {
    cfg.margin_params.beta = 0.0;
    if (cfg.scheme.scheme == Scheme::attenuation_I ||
        cfg.scheme.scheme == Scheme::attenuation_II) {
      throw Error(ErrorCode::invalid_argument,
                  "byol_like forbids attenuation schemes: q~ needs "
                  "negatives");
    }
  }
  cfg.margin_params.validate();
  cfg.scheme.validate();
  return cfg;
}

SyntheticDataset generate_dataset(int n_classes, int n_samples, int input_dim,
                                  double sigma_class, std::uint64_t seed) {
  if (n_classes < 1 || n_samples < n_classes || input_dim < 2) {
    throw Error(ErrorCode::invalid_argument,
                "generate_dataset: need K >= 1, N >= K, D >= 2");
  }
  Rng rng(mix64(seed));
  SyntheticDataset data;
  // Centroids cluster around a shared base direction. Independent unit
  // draws in high dimension are nearly orthogonal and the task becomes
  // trivially separable; correlated centroids keep the class structure
  // partially entangled with the sample noise so the accuracy metric has
  // room to move.
  constexpr double kCentroidSpread = 0.10;
  Eigen::VectorXd base(input_dim);
  for (int d = 0; d < input_dim; ++d) base(d) = rng.gaussian();
  base = normalize(base);
  data.class_centroids.resize(n_classes, input_dim);
  for (int k = 0; k < n_classes; ++k) {
    Eigen::VectorXd c = base;
    for (int d = 0; d < input_dim; ++d) {
      c(d) += kCentroidSpread * rng.gaussian();
    }
    data.class_centroids.row(k) = normalize(c).transpose();
  }
  data.inputs.resize(n_samples, input_dim);
  data.labels.resize(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    const int label = i % n_classes;
    data.labels[i] = label;
    Eigen::VectorXd x = data.class_centroids.row(label).transpose();
    for (int d = 0; d < input_dim; ++d) x(d) += sigma_class * rng.gaussian();
    data.inputs.row(i) = normalize(x).transpose();
  }
  return data;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> make_views(
    const Eigen::VectorXd& x, double sigma_view, Rng& rng) {
  if (!(sigma_view >= 0.0)) {
    throw Error(ErrorCode::invalid_argument,
                "make_views: sigma_view must be >= 0");
  }
  Eigen::VectorXd a = x;
  Eigen::VectorXd b = x;
  for (long d = 0; d < x.size(); ++d) a(d) += sigma_view * rng.gaussian();
  for (long d = 0; d < x.size(); ++d) b(d) += sigma_view * rng.gaussian();
  return {a, b};
}

Eigen::VectorXd encode(const Eigen::MatrixXd& weights,
                       const Eigen::VectorXd& x) {
  return normalize(weights * x);
}

double nearest_centroid_accuracy(const Eigen::MatrixXd& embeddings,
                                 const std::vector<int>& labels) {
  const int n = static_cast<int>(embeddings.rows());
  if (n == 0 || static_cast<int>(labels.size()) != n) {
    throw Error(ErrorCode::invalid_argument,
                "nearest_centroid_accuracy: labels must match embeddings");
  }
  int n_classes = 0;
  for (int label : labels) n_classes = std::max(n_classes, label + 1);
  Eigen::MatrixXd centroids =
      Eigen::MatrixXd::Zero(n_classes, embeddings.cols());
  std::vector<int> counts(n_classes, 0);
  for (int i = 0; i < n; ++i) {
    centroids.row(labels[i]) += embeddings.row(i);
    ++counts[labels[i]];
  }
  for (int k = 0; k < n_classes; ++k) {
    if (counts[k] == 0) {
      throw Error(ErrorCode::invalid_argument,
                  "nearest_centroid_accuracy: every class needs a sample");
    }
    const double norm = centroids.row(k).norm();
    if (norm > 1e-30) centroids.row(k) /= norm;
  }
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double best_cos = -2.0;
    for (int k = 0; k < n_classes; ++k) {
      const double c = embeddings.row(i).dot(centroids.row(k));
      if (c > best_cos) {
        best_cos = c;
        best = k;
      }
    }
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / n;
}

namespace {

struct EncodedBatch {
  Eigen::MatrixXd views;       // B x D, raw anchor views
  Eigen::MatrixXd anchors;     // B x d, unit rows (student)
  Eigen::MatrixXd candidates;  // B x d, unit rows (teacher/student)
  Eigen::VectorXd pre_norms;   // |W v| per anchor
};

EncodedBatch encode_batch(const EncoderState& state,
                          const SyntheticDataset& dataset,
                          const TrainConfig& cfg, long step) {
  Rng rng(mix64(cfg.seed ^ mix64(static_cast<std::uint64_t>(step) + 1)));
  const int b = cfg.batch;
  const Eigen::MatrixXd& candidate_weights = cfg.mode == Mode::simclr_like
                                                 ? state.weights
                                                 : state.teacher_weights;
  EncodedBatch enc;
  enc.views.resize(b, cfg.input_dim);
  enc.anchors.resize(b, cfg.embed_dim);
  enc.candidates.resize(b, cfg.embed_dim);
  enc.pre_norms.resize(b);
  for (int i = 0; i < b; ++i) {
    const int idx = rng.uniform_int(dataset.inputs.rows());
    const auto [view_a, view_b] =
        make_views(dataset.inputs.row(idx).transpose(), cfg.sigma_view, rng);
    enc.views.row(i) = view_a.transpose();
    const Eigen::VectorXd h = state.weights * view_a;
    enc.pre_norms(i) = h.norm();
    enc.anchors.row(i) = encode(state.weights, view_a).transpose();
    enc.candidates.row(i) = encode(candidate_weights, view_b).transpose();
  }
  return enc;
}

BatchAngles batch_from_embeddings(const EncodedBatch& enc) {
  const int b = static_cast<int>(enc.anchors.rows());
  BatchAngles batch;
  batch.angles.resize(b, b);
  batch.targets = Eigen::MatrixXd::Identity(b, b);
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < b; ++j) {
      batch.angles(i, j) =
          angle(enc.anchors.row(i).transpose(), enc.candidates.row(j).transpose());
    }
  }
  return batch;
}

// Accumulated dL/dW for the mean anchor loss. Candidate embeddings are
// stop-gradient targets in every mode. Near-singular pairs are skipped.
Eigen::MatrixXd weight_gradient(const EncodedBatch& enc,
                                const BatchAngles& batch,
                                const Eigen::MatrixXd& grad_field,
                                const TrainConfig& cfg) {
  const int b = static_cast<int>(enc.anchors.rows());
  const double scale = 1.0 / b;
  Eigen::MatrixXd grad_w =
      Eigen::MatrixXd::Zero(cfg.embed_dim, cfg.input_dim);
  for (int i = 0; i < b; ++i) {
    const Eigen::VectorXd z = enc.anchors.row(i).transpose();
    Eigen::VectorXd grad_z = Eigen::VectorXd::Zero(cfg.embed_dim);
    for (int j = 0; j < b; ++j) {
      const double g = grad_field(i, j);
      if (g == 0.0) continue;
      try {
        grad_z += scale * g *
                  angle_grad_wrt_embedding(z, enc.candidates.row(j).transpose());
      } catch (const Error& e) {
        if (e.code() != ErrorCode::near_singular) throw;
      }
    }
    // back through z = h/|h|: (I - z z^T) / |h|
    const Eigen::VectorXd grad_h =
        (grad_z - z * z.dot(grad_z)) / enc.pre_norms(i);
    grad_w += grad_h * enc.views.row(i);
  }
  return grad_w;
}

}  // namespace

StepMetrics train_step(EncoderState& state, const SyntheticDataset& dataset,
                       const TrainConfig& config) {
  const TrainConfig cfg = config.normalized();
  const EncodedBatch enc = encode_batch(state, dataset, cfg, state.step);
  const BatchAngles batch = batch_from_embeddings(enc);

  StepMetrics metrics;
  metrics.loss = loss(batch, cfg.margin_params).mean();
  metrics.alignment = batch.angles.diagonal().mean();
  double spread = 0.0;
  for (int i = 0; i < cfg.batch; ++i) {
    for (int j = 0; j < cfg.batch; ++j) {
      if (i != j) spread += std::fabs(std::cos(batch.angles(i, j)));
    }
  }
  metrics.spread = spread / (cfg.batch * (cfg.batch - 1.0));

  if (cfg.lr > 0.0) {
    const GradientField field =
        modified_grad(batch, cfg.margin_params, cfg.scheme);
    state.weights -= cfg.lr * weight_gradient(enc, batch, field.grad, cfg);
  }
  state.step += 1;
  if (cfg.mode == Mode::simclr_like) {
    state.teacher_weights = state.weights;
  } else {
    state.teacher_weights = cfg.ema_momentum * state.teacher_weights +
                            (1.0 - cfg.ema_momentum) * state.weights;
  }
  return metrics;
}

RunMetrics run(const TrainConfig& config) {
  const TrainConfig cfg = config.normalized();
  const SyntheticDataset dataset =
      generate_dataset(cfg.n_classes, cfg.n_samples, cfg.input_dim,
                       cfg.sigma_class, cfg.seed);

  // Held-out evaluation views, fixed for the whole run.
  Rng eval_rng(mix64(cfg.seed ^ 0xE7A1ULL));
  Eigen::MatrixXd eval_views(cfg.n_samples, cfg.input_dim);
  for (int i = 0; i < cfg.n_samples; ++i) {
    eval_views.row(i) =
        make_views(dataset.inputs.row(i).transpose(), cfg.sigma_view, eval_rng)
            .first.transpose();
  }

  EncoderState state;
  state.rng_seed = cfg.seed;
  Rng init_rng(mix64(cfg.seed ^ 0x11D7ULL));
  state.weights.resize(cfg.embed_dim, cfg.input_dim);
  const double init_scale = 3.0 / std::sqrt(cfg.input_dim);
  for (int r = 0; r < cfg.embed_dim; ++r) {
    for (int c = 0; c < cfg.input_dim; ++c) {
      state.weights(r, c) = init_scale * init_rng.gaussian();
    }
  }
  state.teacher_weights = state.weights;

  RunMetrics metrics;
  metrics.steps.reserve(cfg.steps);
  Eigen::MatrixXd eval_embeddings(cfg.n_samples, cfg.embed_dim);
  for (long step = 0; step < cfg.steps; ++step) {
    StepMetrics m = train_step(state, dataset, cfg);
    for (int i = 0; i < cfg.n_samples; ++i) {
      eval_embeddings.row(i) =
          encode(state.weights, eval_views.row(i).transpose()).transpose();
    }
    m.accuracy = nearest_centroid_accuracy(eval_embeddings, dataset.labels);
    // mean pairwise cosine via |sum z|^2 = N + 2 * sum_{i<j} cos_ij
    const double sq = eval_embeddings.colwise().sum().squaredNorm();
    const double n = cfg.n_samples;
    m.collapsed = (sq - n) / (n * (n - 1.0)) > 0.99;
    metrics.steps.push_back(m);
  }
  return metrics;
}

}  // namespace mnce
