#include "exprsim/metrics.hpp"

#include <cmath>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "test_helpers.hpp"

using namespace exprsim;
using exprsim::testing::random_unit_vector;

namespace {

Eigen::Vector2d vec2(double a, double b) { return Eigen::Vector2d(a, b); }

// O(n^2) pair-counting AUC: P(score+ > score-) + 0.5 P(tie).
double brute_force_auc(const std::vector<double>& scores,
                       const std::vector<int>& labels) {
  double wins = 0;
  long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / double(pairs);
}

AnnotatedTriplet make_triplet(const std::string& a, const std::string& b,
                              const std::string& c, int odd,
                              TripletType type = TripletType::OneClass) {
  AnnotatedTriplet t;
  t.record.faces = {a, b, c};
  t.record.votes = {{"r0", odd}};
  t.consensus = {odd, Agreement::Strong};
  t.type = type;
  return t;
}

}  // namespace

TEST_CASE("distance: named metrics and their edge cases") {
  CHECK(distance(vec2(0, 0), vec2(3, 4), DistanceKind::L2) == doctest::Approx(5.0));
  CHECK(distance(vec2(1, 2), vec2(2, 0), DistanceKind::L1) == doctest::Approx(3.0));
  Eigen::Vector2d u = vec2(0.3, -1.7);
  CHECK(distance(u, u, DistanceKind::Cosine) == doctest::Approx(0.0));
  CHECK(distance(vec2(1, 0), vec2(0, 1), DistanceKind::Cosine) ==
        doctest::Approx(1.0));
  CHECK_THROWS_AS(distance(vec2(0, 0), vec2(1, 0), DistanceKind::Cosine),
                  NumericError);
  CHECK_THROWS_AS(distance(Eigen::Vector3d::Ones(), vec2(1, 0), DistanceKind::L2),
                  DataError);
  CHECK(parse_distance_kind("COSINE") == DistanceKind::Cosine);
  CHECK_THROWS_AS(parse_distance_kind("manhattan"), DataError);
}

TEST_CASE("triplet accuracy: correctness rule and tie handling") {
  FeatureStore emb;
  emb.insert("a", vec2(0, 0));
  emb.insert("b", vec2(0, 1));
  emb.insert("c", vec2(5, 0));

  // Odd one out is c (slot 3): pair (a,b) at distance 1, both cross pairs far.
  std::vector<AnnotatedTriplet> good = {make_triplet("a", "b", "c", 3)};
  CHECK(triplet_prediction_accuracy(emb, good, DistanceKind::L2).overall() == 1.0);

  // Wrong annotation: pair (a,c) is not the closest.
  std::vector<AnnotatedTriplet> bad = {make_triplet("a", "c", "b", 2)};
  CHECK(triplet_prediction_accuracy(emb, bad, DistanceKind::L2).overall() == 0.0);

  // Degenerate embeddings: everything ties, ties count as incorrect.
  FeatureStore point;
  point.insert("a", vec2(1, 1));
  point.insert("b", vec2(1, 1));
  point.insert("c", vec2(1, 1));
  CHECK(triplet_prediction_accuracy(point, good, DistanceKind::L2).overall() == 0.0);

  // Missing consensus label is the caller's bug.
  AnnotatedTriplet unlabeled = make_triplet("a", "b", "c", 3);
  unlabeled.consensus = {std::nullopt, Agreement::None};
  CHECK_THROWS_AS(
      triplet_prediction_accuracy(emb, {unlabeled}, DistanceKind::L2), DataError);
}

TEST_CASE("triplet accuracy: per-type breakdown recombines to the overall value") {
  Rng rng(42);
  FeatureStore emb;
  const int n_faces = 40;
  for (int i = 0; i < n_faces; ++i)
    emb.insert("f" + std::to_string(i), random_unit_vector(8, rng));

  std::uniform_int_distribution<int> pick(0, n_faces - 1);
  std::uniform_int_distribution<int> odd(1, 3);
  std::uniform_int_distribution<int> type(0, 2);
  std::vector<AnnotatedTriplet> triplets;
  for (int i = 0; i < 300; ++i) {
    int a = pick(rng), b, c;
    do b = pick(rng); while (b == a);
    do c = pick(rng); while (c == a || c == b);
    triplets.push_back(make_triplet("f" + std::to_string(a),
                                    "f" + std::to_string(b),
                                    "f" + std::to_string(c), odd(rng),
                                    static_cast<TripletType>(type(rng))));
  }
  AccuracyBreakdown acc = triplet_prediction_accuracy(emb, triplets, DistanceKind::L2);
  std::int64_t correct = 0, total = 0;
  for (const auto& [t, counts] : acc.per_type) {
    correct += counts.correct;
    total += counts.total;
  }
  CHECK(total == acc.total);
  CHECK(correct == acc.correct);
  CHECK(acc.overall() >= 0.0);
  CHECK(acc.overall() <= 1.0);
}

TEST_CASE("triplet accuracy: invariances") {
  Rng rng(7);
  const int dim = 6;
  FeatureStore emb;
  for (int i = 0; i < 30; ++i)
    emb.insert("f" + std::to_string(i), random_unit_vector(dim, rng));

  std::uniform_int_distribution<int> pick(0, 29);
  std::uniform_int_distribution<int> odd(1, 3);
  std::vector<AnnotatedTriplet> triplets;
  for (int i = 0; i < 200; ++i) {
    int a = pick(rng), b, c;
    do b = pick(rng); while (b == a);
    do c = pick(rng); while (c == a || c == b);
    triplets.push_back(make_triplet("f" + std::to_string(a),
                                    "f" + std::to_string(b),
                                    "f" + std::to_string(c), odd(rng)));
  }

  const double base_l2 =
      triplet_prediction_accuracy(emb, triplets, DistanceKind::L2).overall();

  SUBCASE("global orthogonal transform preserves L2 decisions") {
    // Householder reflection: I - 2vv^T.
    Eigen::VectorXd v = random_unit_vector(dim, rng);
    Eigen::MatrixXd q =
        Eigen::MatrixXd::Identity(dim, dim) - 2.0 * v * v.transpose();
    FeatureStore rotated;
    for (const std::string& id : emb.ids()) rotated.insert(id, q * emb.at(id));
    CHECK(triplet_prediction_accuracy(rotated, triplets, DistanceKind::L2)
              .overall() == base_l2);
  }
  SUBCASE("positive scaling preserves decisions for every metric") {
    FeatureStore scaled;
    for (const std::string& id : emb.ids()) scaled.insert(id, 3.7 * emb.at(id));
    for (DistanceKind kind :
         {DistanceKind::L1, DistanceKind::L2, DistanceKind::Cosine}) {
      CHECK(triplet_prediction_accuracy(scaled, triplets, kind).overall() ==
            triplet_prediction_accuracy(emb, triplets, kind).overall());
    }
  }
  SUBCASE("unit-norm embeddings decide identically under L2 and cosine") {
    AccuracyBreakdown l2 = triplet_prediction_accuracy(emb, triplets, DistanceKind::L2);
    AccuracyBreakdown cos =
        triplet_prediction_accuracy(emb, triplets, DistanceKind::Cosine);
    CHECK(l2.correct == cos.correct);
    CHECK(l2.total == cos.total);
  }
}

TEST_CASE("per-rater accuracy: agreement with the maximum-voted label") {
  // "good"/"also" always match the eventual majority, "bad" never does.
  std::vector<TripletRecord> triplets;
  for (int i = 0; i < 10; ++i) {
    TripletRecord t;
    t.faces = {"a" + std::to_string(i), "b" + std::to_string(i),
               "c" + std::to_string(i)};
    t.votes = {{"good", 1}, {"also", 1}, {"bad", 2}};
    triplets.push_back(t);
  }
  auto acc = per_rater_accuracy(triplets);
  CHECK(acc.at("good") == 1.0);
  CHECK(acc.at("also") == 1.0);
  CHECK(acc.at("bad") == 0.0);
}

TEST_CASE("per-rater accuracy: no-unique-max triplets are excluded") {
  TripletRecord tied;
  tied.faces = {"a", "b", "c"};
  tied.votes = {{"r1", 1}, {"r2", 2}};  // 1-1 tie, nobody countable
  TripletRecord decided;
  decided.faces = {"a", "b", "d"};
  decided.votes = {{"r1", 3}, {"r2", 3}, {"r3", 1}};

  auto acc = per_rater_accuracy({tied, decided});
  CHECK(acc.at("r1") == 1.0);  // only the decided triplet counts
  CHECK(acc.at("r2") == 1.0);
  CHECK(acc.at("r3") == 0.0);
  // A rater appearing only in tied triplets is omitted entirely.
  TripletRecord only_tied;
  only_tied.faces = {"a", "b", "c"};
  only_tied.votes = {{"lonely", 1}, {"x", 2}};
  auto acc2 = per_rater_accuracy({only_tied});
  CHECK(acc2.count("lonely") == 0);
}

TEST_CASE("per-rater accuracy agrees with direct enumeration on random tables") {
  Rng rng(99);
  std::uniform_int_distribution<int> choice(1, 3);
  const int n_raters = 6, n_triplets = 120;

  std::vector<TripletRecord> triplets;
  std::vector<std::array<int, 6>> table;
  for (int i = 0; i < n_triplets; ++i) {
    TripletRecord t;
    t.faces = {"x" + std::to_string(i), "y" + std::to_string(i),
               "z" + std::to_string(i)};
    std::array<int, 6> row{};
    for (int r = 0; r < n_raters; ++r) {
      row[static_cast<std::size_t>(r)] = choice(rng);
      t.votes.push_back(
          {"rater" + std::to_string(r), row[static_cast<std::size_t>(r)]});
    }
    table.push_back(row);
    triplets.push_back(t);
  }

  auto acc = per_rater_accuracy(triplets);
  for (int r = 0; r < n_raters; ++r) {
    long hits = 0, seen = 0;
    for (const auto& row : table) {
      int counts[4] = {0, 0, 0, 0};
      for (int v : row) ++counts[v];
      int m = std::max({counts[1], counts[2], counts[3]});
      int winners = (counts[1] == m) + (counts[2] == m) + (counts[3] == m);
      if (winners != 1) continue;
      int argmax = counts[1] == m ? 1 : counts[2] == m ? 2 : 3;
      ++seen;
      if (row[static_cast<std::size_t>(r)] == argmax) ++hits;
    }
    REQUIRE(seen > 0);
    CHECK(acc.at("rater" + std::to_string(r)) ==
          doctest::Approx(double(hits) / double(seen)));
  }
}

TEST_CASE("auc_roc: separations, ties, and the midrank identity") {
  CHECK(auc_roc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == doctest::Approx(1.0));
  CHECK(auc_roc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}) == doctest::Approx(0.0));
  CHECK(auc_roc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(auc_roc({0.1, 0.2}, {1, 1}), DataError);
  CHECK_THROWS_AS(auc_roc({}, {}), DataError);

  Rng rng(17);
  std::uniform_int_distribution<int> label(0, 1);
  std::uniform_int_distribution<int> coarse(0, 4);  // tie-heavy scores
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> scores;
    std::vector<int> labels;
    bool has_pos = false, has_neg = false;
    for (int i = 0; i < 60; ++i) {
      scores.push_back(coarse(rng) / 4.0);
      labels.push_back(label(rng));
      (labels.back() ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) continue;
    const double fast = auc_roc(scores, labels);
    CHECK(std::abs(fast - brute_force_auc(scores, labels)) < 1e-12);

    std::vector<double> negated(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) negated[i] = -scores[i];
    CHECK(fast + auc_roc(negated, labels) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("macro_auc averages one-vs-rest AUCs") {
  Eigen::MatrixXd scores(4, 3);
  scores << 0.9, 0.1, 0.1,
            0.8, 0.3, 0.2,
            0.1, 0.3, 0.5,
            0.0, 0.3, 0.9;
  std::vector<int> labels = {0, 0, 1, 2};
  // Verified column by column against brute-force pair counting.
  double expected = 0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> col;
    std::vector<int> binary;
    for (int r = 0; r < 4; ++r) {
      col.push_back(scores(r, c));
      binary.push_back(labels[static_cast<std::size_t>(r)] == c ? 1 : 0);
    }
    expected += brute_force_auc(col, binary);
  }
  expected /= 3;
  CHECK(macro_auc(scores, labels) == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS_AS(macro_auc(scores, std::vector<int>{0, 0, 0, 0}), DataError);
}

TEST_CASE("f1_score: conventions and the textbook value") {
  Eigen::MatrixXi labels(4, 1), predictions(4, 1);
  labels << 1, 1, 0, 0;

  predictions << 1, 1, 0, 0;
  CHECK(f1_score(predictions, labels) == doctest::Approx(1.0));

  // precision 1/2 (one true positive, one false positive), recall 1.
  Eigen::MatrixXi labels2(4, 1), pred2(4, 1);
  labels2 << 1, 0, 0, 0;
  pred2 << 1, 1, 0, 0;
  CHECK(f1_score(pred2, labels2) == doctest::Approx(2.0 / 3.0));

  // No predicted positives, no true positives: 0 by the 0/0 convention.
  Eigen::MatrixXi zero = Eigen::MatrixXi::Zero(4, 1);
  CHECK(f1_score(zero, zero) == doctest::Approx(0.0));

  // Mean over output columns.
  Eigen::MatrixXi ml(2, 2), mp(2, 2);
  ml << 1, 0, 1, 0;
  mp << 1, 0, 1, 0;  // column 0 perfect, column 1 empty
  CHECK(f1_score(mp, ml) == doctest::Approx(0.5));

  Eigen::MatrixXi bad(1, 1);
  bad << 2;
  CHECK_THROWS_AS(f1_score(bad, Eigen::MatrixXi::Zero(1, 1)), DataError);
}

TEST_CASE("EvalReport serializes with stable keys") {
  EvalReport report;
  report.kind = DistanceKind::Cosine;
  report.model_digest = "cafe";
  report.faces_embedded = 3;
  report.accuracy.total = 4;
  report.accuracy.correct = 3;
  report.accuracy.per_type[TripletType::OneClass] = {1, 2};
  report.accuracy.per_type[TripletType::TwoClass] = {2, 2};
  report.per_rater["r1"] = 0.75;

  const std::string text = report.to_text();
  auto j = nlohmann::ordered_json::parse(text);
  CHECK(j.at("distance") == "cosine");
  CHECK(j.at("overall_accuracy") == doctest::Approx(0.75));
  CHECK(j.at("per_type").at("one_class").at("count") == 2);
  CHECK(j.at("per_type").at("three_class").at("count") == 0);
  CHECK(j.at("per_rater").at("r1") == doctest::Approx(0.75));
  // Key order is part of the format.
  CHECK(text.find("\"distance\"") < text.find("\"overall_accuracy\""));
  CHECK(text.find("\"overall_accuracy\"") < text.find("\"per_type\""));
  CHECK(report.to_text() == text);
}
