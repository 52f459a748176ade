#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "mnce/grad_mods.hpp"
#include "mnce/rng.hpp"
#include "mnce/types.hpp"

namespace mnce {

enum class Mode { moco_like, simclr_like, byol_like };

/// Class-mixture data on the unit sphere: inputs are normalized
/// centroid-plus-noise draws.
struct SyntheticDataset {
  Eigen::MatrixXd inputs;           // N x D, rows unit norm
  std::vector<int> labels;          // in [0, K)
  Eigen::MatrixXd class_centroids;  // K x D, rows unit norm
};

/// Linear encoder with an EMA teacher copy.
struct EncoderState {
  Eigen::MatrixXd weights;          // d x D
  Eigen::MatrixXd teacher_weights;  // d x D
  long step = 0;
  std::uint64_t rng_seed = 0;
};

struct TrainConfig {
  Mode mode = Mode::moco_like;
  MarginParams margin_params{};
  SchemeConfig scheme{};
  double lr = 0.05;
  double ema_momentum = 0.99;
  int batch = 64;
  long steps = 2000;
  double sigma_view = 0.05;
  std::uint64_t seed = 0;

  // dataset
  int n_classes = 4;
  int n_samples = 512;
  int input_dim = 32;
  int embed_dim = 16;
  double sigma_class = 0.1;

  /// Checks the mode/scheme rules and returns the effective parameters
  /// (byol_like forces beta = 0 and forbids attenuation schemes).
  TrainConfig normalized() const;
};

struct StepMetrics {
  double loss = 0.0;
  double alignment = 0.0;  // mean positive-pair angle
  double spread = 0.0;     // mean |cos| over negative pairs
  double accuracy = 0.0;   // nearest-centroid on held-out views
  bool collapsed = false;  // mean pairwise cosine > 0.99
};

struct RunMetrics {
  std::vector<StepMetrics> steps;
};

SyntheticDataset generate_dataset(int n_classes, int n_samples, int input_dim,
                                  double sigma_class, std::uint64_t seed);

/// Two independent Gaussian perturbations of x.
std::pair<Eigen::VectorXd, Eigen::VectorXd> make_views(
    const Eigen::VectorXd& x, double sigma_view, Rng& rng);

/// normalize(W x). Throws zero_vector if W x vanishes.
Eigen::VectorXd encode(const Eigen::MatrixXd& weights,
                       const Eigen::VectorXd& x);

/// Fraction of embeddings whose nearest class centroid (cosine) matches
/// their label. Centroids include the query point (no leave-one-out).
double nearest_centroid_accuracy(const Eigen::MatrixXd& embeddings,
                                 const std::vector<int>& labels);

/// One SGD step: sample a batch from (seed, step), build the cross-view
/// angle matrix, push grads through geometry -> grad_mods -> chain rule,
/// update the student and then the EMA teacher.
StepMetrics train_step(EncoderState& state, const SyntheticDataset& dataset,
                       const TrainConfig& config);

RunMetrics run(const TrainConfig& config);

}  // namespace mnce
