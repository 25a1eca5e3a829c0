#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "exprsim/dataset.hpp"
#include "exprsim/metrics.hpp"
#include "exprsim/nn.hpp"

namespace exprsim {

struct TrainConfig {
  double lr = 5e-4;
  int iterations = 0;
  int batch_per_type = 30;
  double margin_one_class = 0.1;
  double margin_two_class = 0.2;
  double margin_three_class = 0.2;
  std::uint64_t seed = 0;
  int eval_every = 0;  // 0: evaluate only at the end (when heldout present)
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

/// Margin for a training triplet; Other-typed triplets are never sampled.
double margin_for_type(const TrainConfig& config, TripletType type);

struct TripletLossResult {
  double loss = 0;
  Eigen::VectorXd g1, g2, g3;
};

/// Symmetric hinge loss on the annotated pair (a,b) vs the odd image c:
///   max(0, |ea-eb|^2 - |ea-ec|^2 + margin)
/// + max(0, |ea-eb|^2 - |eb-ec|^2 + margin),
/// with exact subgradients (zero for inactive hinges).
TripletLossResult triplet_loss(const Eigen::VectorXd& e1, const Eigen::VectorXd& e2,
                               const Eigen::VectorXd& e3, int odd_one_out,
                               double margin);

struct AdamState {
  Eigen::VectorXd m, v;
  long t = 0;
  static AdamState zeros(Eigen::Index n);
};

/// Bias-corrected Adam update in place; rejects non-finite gradients.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps);

/// batch_per_type indices drawn uniformly with replacement from each pool,
/// blocks in pool-key order. An empty pool raises DataError.
std::vector<std::size_t> stratified_batch(
    const std::map<TripletType, std::vector<std::size_t>>& pools,
    int batch_per_type, Rng& rng);

struct TrainCurvePoint {
  int iteration = 0;
  double mean_loss = 0;       // mean over the interval ending here
  double heldout_accuracy = 0;
};

struct TrainReport {
  std::vector<TrainCurvePoint> curve;
  HeadParams params;
  double final_heldout_accuracy = -1;  // -1 when no heldout set was given
};

/// The training loop: stratified batch -> train-mode forward -> per-triplet
/// loss with the type margin -> batch mean -> backward -> Adam. Heldout
/// triplet accuracy (infer mode, L2) is recorded every eval_every
/// iterations. Deterministic given (config, data).
TrainReport train_embedding(const std::vector<AnnotatedTriplet>& train,
                            const std::vector<AnnotatedTriplet>& heldout,
                            const FeatureStore& features, const HeadSpec& spec,
                            const TrainConfig& config, std::ostream* log = nullptr);

/// Embeds every face id (infer mode), in the store's order, in batches.
FeatureStore embed_all(const HeadParams& params, const FeatureStore& features);

/// Category-label triplets: two faces sharing a class and one from another,
/// odd slot uniform. Faces must carry exactly one label each. The returned
/// triplets carry a Strong consensus and are TwoClass by construction.
std::vector<AnnotatedTriplet> label_triplet_sampler(
    const std::vector<FaceRecord>& faces, int count, Rng& rng);

/// Cross-entropy over softmax(logits) against a class index, with
/// log-sum-exp stabilization. Returns (loss, dloss/dlogits).
std::pair<double, Eigen::VectorXd> softmax_ce_loss(const Eigen::VectorXd& logits,
                                                   int class_index);

/// Mean over outputs of sigmoid cross-entropy against 0/1 flags.
std::pair<double, Eigen::VectorXd> multi_binary_ce_loss(
    const Eigen::VectorXd& logits, const Eigen::VectorXd& flags);

}  // namespace exprsim
