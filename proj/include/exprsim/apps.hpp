#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "exprsim/dataset.hpp"
#include "exprsim/metrics.hpp"

namespace exprsim {

/// Per-class fraction among the k nearest database entries; ties at the
/// k-th distance break by database order. Scores sum to one.
Eigen::VectorXd knn_classify(const Eigen::VectorXd& query,
                             const Eigen::MatrixXd& db_embeddings,
                             const std::vector<int>& db_classes, int k,
                             DistanceKind kind, int num_classes);

/// The n smallest-distance ids in nondecreasing distance; ties break by id.
/// n = 0 gives an empty result.
std::vector<std::string> retrieve(const Eigen::VectorXd& query,
                                  const FeatureStore& database, int n,
                                  DistanceKind kind);

enum class PairOutcome { FirstWins, SecondWins, Tie };

struct PairJudgement {
  std::string first, second;
  PairOutcome outcome = PairOutcome::Tie;
};

/// Accumulated pairwise scores and the induced global ranking.
struct RankingTable {
  std::vector<std::string> items;
  Eigen::MatrixXi scores;             // antisymmetric judgment totals
  std::vector<std::string> ranking;   // best to worst

  /// 1-based rank; rank 1 is best. Unknown id -> DataError.
  int rank_of(const std::string& id) const;
};

/// Winner +1, loser -1, ties 0; items are ranked by total score descending,
/// ties broken by first appearance in `items`.
RankingTable pairwise_to_ranking(const std::vector<std::string>& items,
                                 const std::vector<PairJudgement>& judgements);

/// (mean rank of baseline - mean rank of candidate) / N. Positive values
/// mean the candidate retrievals rank better; ids present in both sets
/// contribute their shared rank to both means.
double rank_difference(const std::vector<std::string>& candidate,
                       const std::vector<std::string>& baseline,
                       const RankingTable& ranking);

enum class Linkage { Complete };

/// Bottom-up merging of the closest cluster pair (complete linkage: max
/// pairwise point distance) until k clusters remain. Ties break toward the
/// pair with the lexicographically smallest (min member index, min member
/// index). Rows of `points` are the items; the result maps each row to a
/// cluster id in [0, k'), clusters numbered by smallest member index.
std::vector<int> agglomerative_cluster(const Eigen::MatrixXd& points, int k,
                                       DistanceKind kind = DistanceKind::Cosine,
                                       Linkage linkage = Linkage::Complete);

struct Summary {
  struct Entry {
    std::string face_id;   // the cluster medoid
    int cluster_size = 0;
  };
  std::vector<Entry> entries;  // by descending cluster size
};

/// Clusters the album and keeps, per cluster, the member closest (cosine)
/// to the normalized mean of the cluster; a degenerate mean falls back to
/// the member with the smallest total cosine distance to its peers.
Summary summarize_album(const FeatureStore& album, int k);

}  // namespace exprsim
