#include "exprsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace exprsim {

DistanceKind parse_distance_kind(std::string_view name) {
  std::string n(name);
  std::transform(n.begin(), n.end(), n.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (n == "l1") return DistanceKind::L1;
  if (n == "l2") return DistanceKind::L2;
  if (n == "cosine") return DistanceKind::Cosine;
  throw DataError("unknown distance kind: " + std::string(name));
}

const char* distance_kind_name(DistanceKind kind) {
  switch (kind) {
    case DistanceKind::L1: return "l1";
    case DistanceKind::L2: return "l2";
    case DistanceKind::Cosine: return "cosine";
  }
  return "l2";
}

double distance(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                DistanceKind kind) {
  if (u.size() != v.size())
    throw DataError("distance: dimension mismatch (" + std::to_string(u.size()) +
                    " vs " + std::to_string(v.size()) + ")");
  switch (kind) {
    case DistanceKind::L1:
      return (u - v).lpNorm<1>();
    case DistanceKind::L2:
      return (u - v).norm();
    case DistanceKind::Cosine: {
      double nu = u.norm(), nv = v.norm();
      if (nu < 1e-12 || nv < 1e-12)
        throw NumericError("cosine distance undefined for zero vector");
      return 1.0 - u.dot(v) / (nu * nv);
    }
  }
  throw DataError("distance: bad kind");
}

AccuracyBreakdown triplet_prediction_accuracy(
    const FeatureStore& embeddings, const std::vector<AnnotatedTriplet>& triplets,
    DistanceKind kind) {
  AccuracyBreakdown result;
  for (const AnnotatedTriplet& t : triplets) {
    if (!t.consensus.label)
      throw DataError("triplet without consensus label; filter first");
    const int odd = *t.consensus.label;  // 1-based slot of the odd image
    const int a = odd == 1 ? 1 : 0;
    const int b = odd == 3 ? 1 : 2;
    const int c = odd - 1;
    const Eigen::VectorXd& ea = embeddings.at(t.record.faces[a]);
    const Eigen::VectorXd& eb = embeddings.at(t.record.faces[b]);
    const Eigen::VectorXd& ec = embeddings.at(t.record.faces[c]);
    const double pair = distance(ea, eb, kind);
    const bool correct =
        pair < distance(ea, ec, kind) && pair < distance(eb, ec, kind);
    ++result.total;
    if (correct) ++result.correct;
    TypeCount& tc = result.per_type[t.type];
    ++tc.total;
    if (correct) ++tc.correct;
  }
  return result;
}

std::map<std::string, double> per_rater_accuracy(
    const std::vector<TripletRecord>& triplets) {
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> tallies;  // hit, seen
  for (const TripletRecord& t : triplets) {
    if (t.votes.empty()) continue;
    int counts[4] = {0, 0, 0, 0};
    for (const RaterVote& v : t.votes) {
      if (v.choice < 1 || v.choice > 3)
        throw DataError("per_rater_accuracy: vote out of range");
      ++counts[v.choice];
    }
    int best = 1;
    for (int c = 2; c <= 3; ++c)
      if (counts[c] > counts[best]) best = c;
    const int m = counts[best];
    const bool unique =
        (counts[1] == m) + (counts[2] == m) + (counts[3] == m) == 1;
    if (!unique) continue;  // no maximum-voted label to agree with
    for (const RaterVote& v : t.votes) {
      auto& tally = tallies[v.rater_id];
      ++tally.second;
      if (v.choice == best) ++tally.first;
    }
  }
  std::map<std::string, double> out;
  for (const auto& [rater, tally] : tallies)
    out[rater] = double(tally.first) / double(tally.second);
  return out;
}

namespace {

// Midrank AUC; equivalent to brute-force pair counting with half-credit ties.
double auc_from_pairs(const std::vector<double>& scores,
                      const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::int64_t n_pos = 0, n_neg = 0;
  for (int l : labels) (l ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0)
    throw DataError("auc_roc: need at least one positive and one negative");

  double rank_sum_pos = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * double(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]]) rank_sum_pos += midrank;
    i = j;
  }
  return (rank_sum_pos - 0.5 * double(n_pos) * double(n_pos + 1)) /
         (double(n_pos) * double(n_neg));
}

}  // namespace

double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw DataError("auc_roc: scores and labels differ in length");
  if (scores.empty()) throw DataError("auc_roc: empty input");
  return auc_from_pairs(scores, labels);
}

double macro_auc(const Eigen::MatrixXd& scores, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(scores.rows()) != labels.size())
    throw DataError("macro_auc: scores rows and labels differ in length");
  const int n_classes = static_cast<int>(scores.cols());
  double sum = 0;
  int used = 0;
  for (int c = 0; c < n_classes; ++c) {
    std::int64_t pos = 0;
    std::vector<int> binary(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      binary[i] = labels[i] == c ? 1 : 0;
      pos += binary[i];
    }
    if (pos == 0 || pos == static_cast<std::int64_t>(labels.size())) continue;
    std::vector<double> col(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
      col[i] = scores(static_cast<Eigen::Index>(i), c);
    sum += auc_from_pairs(col, binary);
    ++used;
  }
  if (used == 0) throw DataError("macro_auc: no class with both outcomes");
  return sum / used;
}

double f1_score(const Eigen::MatrixXi& predictions, const Eigen::MatrixXi& labels) {
  if (predictions.rows() != labels.rows() || predictions.cols() != labels.cols())
    throw DataError("f1_score: shape mismatch");
  if (predictions.size() == 0) throw DataError("f1_score: empty input");
  double sum = 0;
  for (Eigen::Index c = 0; c < predictions.cols(); ++c) {
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (Eigen::Index r = 0; r < predictions.rows(); ++r) {
      const int p = predictions(r, c), l = labels(r, c);
      if ((p != 0 && p != 1) || (l != 0 && l != 1))
        throw DataError("f1_score: entries must be 0/1");
      tp += p & l;
      fp += p & (1 - l);
      fn += (1 - p) & l;
    }
    const std::int64_t denom = 2 * tp + fp + fn;
    sum += denom == 0 ? 0.0 : 2.0 * double(tp) / double(denom);
  }
  return sum / double(predictions.cols());
}

std::string EvalReport::to_text() const {
  nlohmann::ordered_json j;
  j["distance"] = distance_kind_name(kind);
  j["model_digest"] = model_digest;
  j["faces_embedded"] = faces_embedded;
  j["triplets_evaluated"] = accuracy.total;
  j["overall_accuracy"] = accuracy.overall();
  nlohmann::ordered_json types;
  for (TripletType type : {TripletType::OneClass, TripletType::TwoClass,
                           TripletType::ThreeClass, TripletType::Other}) {
    auto it = accuracy.per_type.find(type);
    if (it == accuracy.per_type.end()) {
      if (type == TripletType::Other) continue;  // only shown when present
      types[triplet_type_name(type)] = {{"count", 0}, {"accuracy", 0.0}};
    } else {
      types[triplet_type_name(type)] = {{"count", it->second.total},
                                        {"accuracy", it->second.accuracy()}};
    }
  }
  j["per_type"] = types;
  nlohmann::ordered_json raters = nlohmann::ordered_json::object();
  for (const auto& [rater, acc] : per_rater) raters[rater] = acc;
  j["per_rater"] = raters;
  return j.dump(2) + "\n";
}

}  // namespace exprsim
