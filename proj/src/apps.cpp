#include "exprsim/apps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace exprsim {

Eigen::VectorXd knn_classify(const Eigen::VectorXd& query,
                             const Eigen::MatrixXd& db_embeddings,
                             const std::vector<int>& db_classes, int k,
                             DistanceKind kind, int num_classes) {
  const auto n = static_cast<std::size_t>(db_embeddings.rows());
  if (n == 0) throw DataError("knn_classify: empty database");
  if (db_classes.size() != n)
    throw DataError("knn_classify: classes and embeddings differ in length");
  if (k < 1) throw std::invalid_argument("knn_classify: k must be >= 1");
  if (static_cast<std::size_t>(k) > n)
    throw DataError("knn_classify: k exceeds database size");
  if (num_classes < 1) throw std::invalid_argument("knn_classify: num_classes < 1");

  std::vector<std::pair<double, std::size_t>> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    order[i] = {distance(query, db_embeddings.row(static_cast<Eigen::Index>(i))
                                    .transpose(),
                         kind),
                i};
  }
  // (distance, database index) sorts ties at the k-th distance by db order.
  std::partial_sort(order.begin(), order.begin() + k, order.end());

  Eigen::VectorXd scores = Eigen::VectorXd::Zero(num_classes);
  for (int i = 0; i < k; ++i) {
    const int cls = db_classes[order[static_cast<std::size_t>(i)].second];
    if (cls < 0 || cls >= num_classes)
      throw DataError("knn_classify: class id out of range");
    scores[cls] += 1.0;
  }
  return scores / double(k);
}

std::vector<std::string> retrieve(const Eigen::VectorXd& query,
                                  const FeatureStore& database, int n,
                                  DistanceKind kind) {
  if (n < 0) throw std::invalid_argument("retrieve: n < 0");
  if (n == 0) return {};
  if (static_cast<std::size_t>(n) > database.size())
    throw DataError("retrieve: n exceeds database size");

  std::vector<std::pair<double, const std::string*>> order;
  order.reserve(database.size());
  for (const std::string& id : database.ids())
    order.emplace_back(distance(query, database.at(id), kind), &id);
  std::partial_sort(order.begin(), order.begin() + n, order.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first < b.first;
                      return *a.second < *b.second;
                    });
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(*order[static_cast<std::size_t>(i)].second);
  return out;
}

int RankingTable::rank_of(const std::string& id) const {
  for (std::size_t i = 0; i < ranking.size(); ++i)
    if (ranking[i] == id) return static_cast<int>(i) + 1;
  throw DataError("ranking does not contain id: " + id);
}

RankingTable pairwise_to_ranking(const std::vector<std::string>& items,
                                 const std::vector<PairJudgement>& judgements) {
  RankingTable table;
  table.items = items;
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto [it, inserted] = index.try_emplace(items[i], static_cast<int>(i));
    if (!inserted) throw DataError("pairwise_to_ranking: duplicate item " + items[i]);
  }
  const int n = static_cast<int>(items.size());
  table.scores = Eigen::MatrixXi::Zero(n, n);
  for (const PairJudgement& j : judgements) {
    auto a = index.find(j.first);
    auto b = index.find(j.second);
    if (a == index.end()) throw DataError("judgement references unknown item: " + j.first);
    if (b == index.end()) throw DataError("judgement references unknown item: " + j.second);
    if (a->second == b->second)
      throw DataError("judgement compares an item to itself: " + j.first);
    int delta = 0;
    if (j.outcome == PairOutcome::FirstWins) delta = 1;
    if (j.outcome == PairOutcome::SecondWins) delta = -1;
    table.scores(a->second, b->second) += delta;
    table.scores(b->second, a->second) -= delta;
  }

  std::vector<int> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<long> totals(items.size(), 0);
  for (std::size_t i = 0; i < items.size(); ++i)
    totals[i] = table.scores.row(static_cast<Eigen::Index>(i)).sum();
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return totals[a] > totals[b]; });
  for (int i : order) table.ranking.push_back(items[static_cast<std::size_t>(i)]);
  return table;
}

double rank_difference(const std::vector<std::string>& candidate,
                       const std::vector<std::string>& baseline,
                       const RankingTable& ranking) {
  if (candidate.empty() || candidate.size() != baseline.size())
    throw std::invalid_argument("rank_difference: sets must be equal-sized, nonempty");
  const double n = double(candidate.size());
  double mean_candidate = 0, mean_baseline = 0;
  for (const std::string& id : candidate) mean_candidate += ranking.rank_of(id);
  for (const std::string& id : baseline) mean_baseline += ranking.rank_of(id);
  mean_candidate /= n;
  mean_baseline /= n;
  return (mean_baseline - mean_candidate) / n;
}

std::vector<int> agglomerative_cluster(const Eigen::MatrixXd& points, int k,
                                       DistanceKind kind, Linkage linkage) {
  (void)linkage;  // only complete linkage exists
  const int n = static_cast<int>(points.rows());
  if (n == 0) throw DataError("agglomerative_cluster: no points");
  if (k < 1) throw std::invalid_argument("agglomerative_cluster: k must be >= 1");

  // Cluster state: representative = smallest member index, used for the
  // deterministic tie-break and the output numbering.
  std::vector<std::vector<int>> members(static_cast<std::size_t>(n));
  std::vector<bool> active(static_cast<std::size_t>(n), true);
  for (int i = 0; i < n; ++i) members[static_cast<std::size_t>(i)] = {i};

  Eigen::MatrixXd dist(n, n);
  dist.setZero();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double d = distance(points.row(i).transpose(),
                                points.row(j).transpose(), kind);
      dist(i, j) = d;
      dist(j, i) = d;
    }

  int remaining = n;
  while (remaining > k) {
    double best = std::numeric_limits<double>::infinity();
    int best_i = -1, best_j = -1;
    for (int i = 0; i < n; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      for (int j = i + 1; j < n; ++j) {
        if (!active[static_cast<std::size_t>(j)]) continue;
        // Strict < keeps the smallest (i, j) pair on ties; clusters are
        // indexed by their smallest member because merges fold into min(i,j).
        if (dist(i, j) < best) {
          best = dist(i, j);
          best_i = i;
          best_j = j;
        }
      }
    }
    // Complete linkage via Lance-Williams: d(i+j, m) = max(d(i,m), d(j,m)).
    for (int m = 0; m < n; ++m) {
      if (!active[static_cast<std::size_t>(m)] || m == best_i || m == best_j)
        continue;
      const double d = std::max(dist(best_i, m), dist(best_j, m));
      dist(best_i, m) = d;
      dist(m, best_i) = d;
    }
    auto& into = members[static_cast<std::size_t>(best_i)];
    auto& from = members[static_cast<std::size_t>(best_j)];
    into.insert(into.end(), from.begin(), from.end());
    from.clear();
    active[static_cast<std::size_t>(best_j)] = false;
    --remaining;
  }

  std::vector<int> assignment(static_cast<std::size_t>(n), -1);
  int next_id = 0;
  for (int i = 0; i < n; ++i) {
    if (!active[static_cast<std::size_t>(i)]) continue;
    for (int m : members[static_cast<std::size_t>(i)])
      assignment[static_cast<std::size_t>(m)] = next_id;
    ++next_id;
  }
  return assignment;
}

Summary summarize_album(const FeatureStore& album, int k) {
  if (album.empty()) throw DataError("summarize_album: empty album");
  if (k < 1) throw std::invalid_argument("summarize_album: k must be >= 1");
  const auto& ids = album.ids();
  const int n = static_cast<int>(ids.size());
  Eigen::MatrixXd points(n, album.dim());
  for (int i = 0; i < n; ++i)
    points.row(i) = album.at(ids[static_cast<std::size_t>(i)]).transpose();

  std::vector<int> assignment = agglomerative_cluster(points, k);
  const int n_clusters = 1 + *std::max_element(assignment.begin(), assignment.end());

  std::vector<std::vector<int>> clusters(static_cast<std::size_t>(n_clusters));
  for (int i = 0; i < n; ++i)
    clusters[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])]
        .push_back(i);

  Summary summary;
  for (const auto& cluster : clusters) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(album.dim());
    for (int m : cluster) mean += points.row(m).transpose();
    mean /= double(cluster.size());

    int medoid = -1;
    if (mean.norm() >= 1e-12) {
      const Eigen::VectorXd center = mean / mean.norm();
      double best = -std::numeric_limits<double>::infinity();
      for (int m : cluster) {
        const Eigen::VectorXd p = points.row(m).transpose();
        const double sim = p.dot(center) / p.norm();  // cosine similarity
        const std::string& id = ids[static_cast<std::size_t>(m)];
        if (sim > best ||
            (sim == best && id < ids[static_cast<std::size_t>(medoid)])) {
          best = sim;
          medoid = m;
        }
      }
    } else {
      // Degenerate mean: fall back to the member with minimal total cosine
      // distance to the rest of the cluster.
      double best = std::numeric_limits<double>::infinity();
      for (int m : cluster) {
        double total = 0;
        for (int o : cluster) {
          if (o == m) continue;
          total += distance(points.row(m).transpose(), points.row(o).transpose(),
                            DistanceKind::Cosine);
        }
        const std::string& id = ids[static_cast<std::size_t>(m)];
        if (total < best ||
            (total == best && medoid >= 0 &&
             id < ids[static_cast<std::size_t>(medoid)])) {
          best = total;
          medoid = m;
        }
      }
    }
    summary.entries.push_back(
        {ids[static_cast<std::size_t>(medoid)], static_cast<int>(cluster.size())});
  }

  std::stable_sort(summary.entries.begin(), summary.entries.end(),
                   [](const Summary::Entry& a, const Summary::Entry& b) {
                     return a.cluster_size > b.cluster_size;
                   });
  return summary;
}

}  // namespace exprsim
