#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "exprsim/dataset.hpp"

namespace exprsim {

enum class DistanceKind { L1, L2, Cosine };

DistanceKind parse_distance_kind(std::string_view name);
const char* distance_kind_name(DistanceKind kind);

/// L1, L2 or cosine distance (1 - u.v / (|u||v|)). Cosine rejects
/// zero-norm inputs.
double distance(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                DistanceKind kind);

struct TypeCount {
  std::int64_t correct = 0;
  std::int64_t total = 0;
  double accuracy() const { return total == 0 ? 0.0 : double(correct) / double(total); }
};

struct AccuracyBreakdown {
  std::int64_t correct = 0;
  std::int64_t total = 0;
  std::map<TripletType, TypeCount> per_type;
  double overall() const { return total == 0 ? 0.0 : double(correct) / double(total); }
};

/// Fraction of triplets whose annotated pair is strictly closer than both of
/// its distances to the odd image; ties count as incorrect. Every triplet
/// must carry a consensus label (filter first) and every face an embedding.
AccuracyBreakdown triplet_prediction_accuracy(
    const FeatureStore& embeddings, const std::vector<AnnotatedTriplet>& triplets,
    DistanceKind kind);

/// Per rater: how often their vote equals the maximum-voted label of the
/// triplets they annotated. Triplets without a unique maximum-voted label
/// are excluded from the denominator; raters with nothing countable are
/// omitted.
std::map<std::string, double> per_rater_accuracy(
    const std::vector<TripletRecord>& triplets);

/// Mann-Whitney AUC: P(score+ > score-) + 0.5 P(tie), computed via midranks.
/// Requires at least one positive and one negative label.
double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels);

/// One-vs-rest AUC averaged over classes. `scores` is n x C, `labels` holds
/// class indices into the columns. Classes missing a positive or a negative
/// are skipped; all skipped -> DataError.
double macro_auc(const Eigen::MatrixXd& scores, const std::vector<int>& labels);

/// Mean over output columns of 2TP/(2TP+FP+FN), with 0/0 -> 0.
double f1_score(const Eigen::MatrixXi& predictions, const Eigen::MatrixXi& labels);

struct EvalReport {
  AccuracyBreakdown accuracy;
  std::map<std::string, double> per_rater;
  DistanceKind kind = DistanceKind::L2;
  std::string model_digest;
  std::int64_t faces_embedded = 0;

  /// Stable-key-order textual form (JSON) consumed by the CLI and tests.
  std::string to_text() const;
};

}  // namespace exprsim
