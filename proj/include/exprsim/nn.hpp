#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "exprsim/common.hpp"

namespace exprsim {

/// Shape of the trainable embedding head: a bottleneck projection feeding a
/// densely-concatenated stack, then FC -> batchnorm -> ReLU6 -> dropout ->
/// linear -> unit-norm output.
struct HeadSpec {
  int in_dim = 0;
  int bottleneck = 512;
  int dense_layers = 5;
  int growth = 64;
  int fc_width = 512;
  int emb_dim = 16;
  double dropout_rate = 0.5;
  bool use_batchnorm = true;

  int dense_out_dim() const { return bottleneck + dense_layers * growth; }
  void validate() const;  // throws std::invalid_argument

  bool operator==(const HeadSpec&) const = default;
};

enum class Mode { Train, Infer };

struct LinearParams {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;
};

struct BatchNormParams {
  Eigen::VectorXd gamma, beta;
  Eigen::VectorXd running_mean, running_var;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.99;

struct DenseBlockParams {
  LinearParams input;                 // in_dim -> bottleneck
  std::vector<BatchNormParams> bn;    // one per growth layer; empty without BN
  std::vector<LinearParams> lin;      // growth layers
};

/// All parameters of the head. Doubles as the gradient container (same
/// shapes; running stats stay zero in gradients).
struct HeadParams {
  HeadSpec spec;
  DenseBlockParams dense;
  LinearParams fc;
  BatchNormParams fc_bn;
  LinearParams emb;

  /// Trainable tensors in declaration order (weights, biases, BN scale and
  /// shift). Running statistics are excluded; they are not optimized.
  std::size_t trainable_size() const;
  Eigen::VectorXd flatten_trainable() const;
  void unflatten_trainable(const Eigen::VectorXd& flat);

  /// Zero-valued gradients shaped like these parameters.
  HeadParams zeros_like() const;
};

/// Entries i.i.d. uniform on [-b, b], b = sqrt(6 / (rows + cols)).
Eigen::MatrixXd xavier_init(int rows, int cols, Rng& rng);

/// Xavier weights, zero biases, BN scale 1 / shift 0 / running stats (0, 1).
HeadParams init_head(const HeadSpec& spec, Rng& rng);

// --- elementwise pieces (batches are row-per-sample matrices) ---

Eigen::MatrixXd relu6(const Eigen::MatrixXd& x);
/// Subgradient 1 on (0, 6), 0 elsewhere including the kinks.
Eigen::MatrixXd relu6_backward(const Eigen::MatrixXd& x,
                               const Eigen::MatrixXd& upstream);

struct BatchNormTrace {
  Eigen::MatrixXd x_hat;     // normalized pre-affine values
  Eigen::VectorXd inv_std;   // 1/sqrt(var + eps) per feature
};

/// Train: normalize by batch statistics (requires >= 2 rows) and update the
/// running stats in place. Infer: use running stats, no trace needed.
Eigen::MatrixXd batchnorm_forward(const Eigen::MatrixXd& x, BatchNormParams& params,
                                  Mode mode, BatchNormTrace* trace);

struct BatchNormGrads {
  Eigen::VectorXd dgamma, dbeta;
};

/// Gradient through train-mode batch statistics.
Eigen::MatrixXd batchnorm_backward(const BatchNormTrace& trace,
                                   const BatchNormParams& params,
                                   const Eigen::MatrixXd& upstream,
                                   BatchNormGrads& grads);

/// Rows scaled to unit L2 norm; a row norm under 1e-12 raises NumericError.
Eigen::MatrixXd l2_normalize(const Eigen::MatrixXd& x);
Eigen::MatrixXd l2_normalize_backward(const Eigen::MatrixXd& x,
                                      const Eigen::MatrixXd& upstream);

// --- dense block ---

struct DenseBlockTrace {
  Eigen::MatrixXd input;      // the block input
  Eigen::MatrixXd concat;     // final concatenated state (n x dense_out_dim)
  std::vector<BatchNormTrace> bn;
  std::vector<Eigen::MatrixXd> pre_act;   // BN output per layer (relu6 input)
  std::vector<Eigen::MatrixXd> act;       // relu6 output per layer
};

/// Bottleneck projection, then each growth layer maps the running
/// concatenation through (BN) -> ReLU6 -> linear and appends its output.
Eigen::MatrixXd dense_block_forward(DenseBlockParams& params,
                                    const Eigen::MatrixXd& x, Mode mode,
                                    DenseBlockTrace* trace);

/// Returns the gradient w.r.t. the block input; parameter gradients are
/// accumulated into `grads`.
Eigen::MatrixXd dense_block_backward(const DenseBlockParams& params,
                                     const DenseBlockTrace& trace,
                                     const Eigen::MatrixXd& upstream,
                                     DenseBlockParams& grads, bool use_batchnorm);

// --- full head ---

struct ForwardTrace {
  Mode mode = Mode::Infer;
  DenseBlockTrace dense;
  Eigen::MatrixXd fc_input;      // dense block output
  Eigen::MatrixXd fc_pre_bn;     // after the FC linear
  BatchNormTrace fc_bn;
  Eigen::MatrixXd fc_pre_act;    // BN output (relu6 input)
  Eigen::MatrixXd dropout_mask;  // scaled keep mask; empty when inactive
  Eigen::MatrixXd emb_input;     // after dropout
  Eigen::MatrixXd emb_pre_norm;  // embedding linear output
};

/// Forward over a batch (rows are samples). Train mode updates BN running
/// stats and draws dropout masks from `rng`; outputs are unit-norm rows.
std::pair<Eigen::MatrixXd, ForwardTrace> head_forward(HeadParams& params,
                                                      const Eigen::MatrixXd& x,
                                                      Mode mode, Rng* rng);

/// Inference without trace bookkeeping.
Eigen::MatrixXd embed(const HeadParams& params, const Eigen::MatrixXd& x);

/// Exact gradients of the traced computation w.r.t. every trainable tensor;
/// requires a Train-mode trace. Returns them in a HeadParams-shaped
/// container.
HeadParams head_backward(const HeadParams& params, const ForwardTrace& trace,
                         const Eigen::MatrixXd& upstream);

// --- model file ---

/// Magic "FECH", u32 version, the spec, provenance (init seed and config
/// digest), then every tensor (including BN running stats) as little-endian
/// f32 in declaration order, matrices row-major.
void save_model(const std::string& path, const HeadParams& params,
                std::uint64_t seed, std::uint64_t config_digest);

struct LoadedModel {
  HeadParams params;
  std::uint64_t seed = 0;
  std::uint64_t config_digest = 0;
};

LoadedModel load_model(const std::string& path);

}  // namespace exprsim
