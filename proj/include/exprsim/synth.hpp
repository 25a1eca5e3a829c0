#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "exprsim/dataset.hpp"

namespace exprsim {

/// A frozen random two-layer map g: R^D -> R^d* (hidden width 4 d*, tanh)
/// that stands in for the raters' latent notion of expression similarity.
/// Fully determined by (seed, in_dim, emb_dim).
struct PlantedOracle {
  std::uint64_t seed = 0;
  int in_dim = 0;
  int emb_dim = 0;
  Eigen::MatrixXd w1;  // 4*emb_dim x in_dim
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // emb_dim x 4*emb_dim
  Eigen::VectorXd b2;

  Eigen::VectorXd map(const Eigen::VectorXd& x) const;
  /// Rows are samples.
  Eigen::MatrixXd map_rows(const Eigen::MatrixXd& x) const;
};

/// Deterministic given its arguments. emb_dim must be >= 2 and <= in_dim.
PlantedOracle make_oracle(std::uint64_t seed, int in_dim, int emb_dim);

/// n faces around n_classes well-separated anchors; face i carries the label
/// of anchor (i mod n_classes), so class counts differ by at most one.
/// Ids are "syn://<i>"-derived; features have dimension in_dim.
std::vector<FaceRecord> generate_faces(const PlantedOracle& oracle, int n,
                                       int n_classes, std::uint64_t seed);

/// Odd-one-out by pairwise squared distance in g-space. Returns nullopt
/// (reject) when the gap between the two smallest pairwise distances is
/// below `tau`; otherwise a Strong consensus.
std::optional<ConsensusResult> label_triplet_by_oracle(const PlantedOracle& oracle,
                                                       const FaceRecord& f1,
                                                       const FaceRecord& f2,
                                                       const FaceRecord& f3,
                                                       double tau);

/// 0.1 x the median pairwise squared g-distance over the faces (sampled
/// pairs when the face set is large). Used as the default reject margin.
double default_ambiguity_margin(const PlantedOracle& oracle,
                                const std::vector<FaceRecord>& faces);

struct TypeCounts {
  int one_class = 0;
  int two_class = 0;
  int three_class = 0;
};

struct SyntheticDataset {
  std::vector<FaceRecord> faces;          // with features and labels
  std::vector<AnnotatedTriplet> triplets; // all Strong, oracle-consistent

  TripletDataset to_triplet_dataset() const;
};

/// Samples exactly the requested number of triplets per type, resampling
/// rejects; deterministic given seed. Throws DataError when a type cannot
/// be realized within a bounded resampling budget.
SyntheticDataset generate_triplet_set(const PlantedOracle& oracle,
                                      const std::vector<FaceRecord>& faces,
                                      const TypeCounts& counts, double tau,
                                      std::uint64_t seed);

}  // namespace exprsim
