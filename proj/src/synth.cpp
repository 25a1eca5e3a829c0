#include "exprsim/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace exprsim {

Eigen::VectorXd PlantedOracle::map(const Eigen::VectorXd& x) const {
  return w2 * (w1 * x + b1).array().tanh().matrix() + b2;
}

Eigen::MatrixXd PlantedOracle::map_rows(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd hidden = ((x * w1.transpose()).rowwise() + b1.transpose())
                               .array()
                               .tanh()
                               .matrix();
  return (hidden * w2.transpose()).rowwise() + b2.transpose();
}

PlantedOracle make_oracle(std::uint64_t seed, int in_dim, int emb_dim) {
  if (emb_dim < 2) throw std::invalid_argument("make_oracle: emb_dim must be >= 2");
  if (in_dim < emb_dim)
    throw std::invalid_argument("make_oracle: in_dim must be >= emb_dim");
  PlantedOracle oracle;
  oracle.seed = seed;
  oracle.in_dim = in_dim;
  oracle.emb_dim = emb_dim;
  const int hidden = 4 * emb_dim;

  Rng rng(mix_seed(seed, 0x0517ac1e));
  std::normal_distribution<double> gauss(0.0, 1.0);
  // Scales keep the tanh units in their responsive range for unit-scale
  // inputs while staying clearly nonlinear.
  const double s1 = 1.5 / std::sqrt(double(in_dim));
  const double s2 = 1.0 / std::sqrt(double(hidden));
  oracle.w1.resize(hidden, in_dim);
  for (int r = 0; r < hidden; ++r)
    for (int c = 0; c < in_dim; ++c) oracle.w1(r, c) = s1 * gauss(rng);
  oracle.b1.resize(hidden);
  for (int r = 0; r < hidden; ++r) oracle.b1[r] = 0.3 * gauss(rng);
  oracle.w2.resize(emb_dim, hidden);
  for (int r = 0; r < emb_dim; ++r)
    for (int c = 0; c < hidden; ++c) oracle.w2(r, c) = s2 * gauss(rng);
  oracle.b2.resize(emb_dim);
  for (int r = 0; r < emb_dim; ++r) oracle.b2[r] = 0.1 * gauss(rng);
  return oracle;
}

std::vector<FaceRecord> generate_faces(const PlantedOracle& oracle, int n,
                                       int n_classes, std::uint64_t seed) {
  if (n_classes < 1 || n < n_classes)
    throw std::invalid_argument("generate_faces: need n >= n_classes >= 1");
  if (n_classes > kNumEmotionLabels)
    throw std::invalid_argument("generate_faces: at most 30 classes");

  Rng rng(mix_seed(seed, 0xface5));
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Anchors spread in input space; per-face jitter is small enough that
  // classes stay separated but large enough to give within-class variety.
  const double anchor_scale = 1.6;
  const double jitter = 0.45;
  Eigen::MatrixXd anchors(n_classes, oracle.in_dim);
  for (int c = 0; c < n_classes; ++c)
    for (int d = 0; d < oracle.in_dim; ++d) anchors(c, d) = anchor_scale * gauss(rng);

  std::vector<FaceRecord> faces;
  faces.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int cls = i % n_classes;
    FaceRecord face;
    face.source_uri = "syn://" + std::to_string(i);
    face.id = face_id_for(face.source_uri, std::nullopt);
    face.labels.insert(static_cast<EmotionLabel>(cls));
    Eigen::VectorXd x(oracle.in_dim);
    for (int d = 0; d < oracle.in_dim; ++d)
      x[d] = anchors(cls, d) + jitter * gauss(rng);
    face.feature = std::move(x);
    faces.push_back(std::move(face));
  }
  return faces;
}

std::optional<ConsensusResult> label_triplet_by_oracle(const PlantedOracle& oracle,
                                                       const FaceRecord& f1,
                                                       const FaceRecord& f2,
                                                       const FaceRecord& f3,
                                                       double tau) {
  if (tau < 0) throw std::invalid_argument("label_triplet_by_oracle: tau < 0");
  if (!f1.feature || !f2.feature || !f3.feature)
    throw DataError("label_triplet_by_oracle: face without feature");
  const Eigen::VectorXd g1 = oracle.map(*f1.feature);
  const Eigen::VectorXd g2 = oracle.map(*f2.feature);
  const Eigen::VectorXd g3 = oracle.map(*f3.feature);
  // d[i] is the squared distance of the pair excluding image i+1.
  const double d[3] = {(g2 - g3).squaredNorm(), (g1 - g3).squaredNorm(),
                       (g1 - g2).squaredNorm()};
  int odd = 0;
  for (int i = 1; i < 3; ++i)
    if (d[i] < d[odd]) odd = i;
  double second = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i)
    if (i != odd) second = std::min(second, d[i]);
  if (second - d[odd] < tau) return std::nullopt;
  return ConsensusResult{odd + 1, Agreement::Strong};
}

double default_ambiguity_margin(const PlantedOracle& oracle,
                                const std::vector<FaceRecord>& faces) {
  if (faces.size() < 2) throw DataError("need at least two faces");
  Eigen::MatrixXd g(faces.size(), oracle.emb_dim);
  for (std::size_t i = 0; i < faces.size(); ++i) {
    if (!faces[i].feature) throw DataError("face without feature");
    g.row(static_cast<Eigen::Index>(i)) = oracle.map(*faces[i].feature).transpose();
  }
  std::vector<double> dists;
  const std::size_t n = faces.size();
  if (n <= 512) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        dists.push_back((g.row(i) - g.row(j)).squaredNorm());
  } else {
    // Large sets: a seeded pair sample is plenty for a scale estimate.
    Rng rng(mix_seed(oracle.seed, 0x7a0));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (int k = 0; k < 20000; ++k) {
      std::size_t i = pick(rng), j = pick(rng);
      if (i == j) continue;
      dists.push_back((g.row(i) - g.row(j)).squaredNorm());
    }
  }
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  return 0.1 * dists[dists.size() / 2];
}

TripletDataset SyntheticDataset::to_triplet_dataset() const {
  TripletDataset out;
  out.faces = faces;
  out.triplets.reserve(triplets.size());
  for (const AnnotatedTriplet& t : triplets) out.triplets.push_back(t.record);
  return out;
}

namespace {

struct TypePlan {
  TripletType type;
  int want;
};

}  // namespace

SyntheticDataset generate_triplet_set(const PlantedOracle& oracle,
                                      const std::vector<FaceRecord>& faces,
                                      const TypeCounts& counts, double tau,
                                      std::uint64_t seed) {
  if (counts.one_class < 0 || counts.two_class < 0 || counts.three_class < 0)
    throw std::invalid_argument("generate_triplet_set: negative count");

  // Faces grouped by (single) label; synthetic faces carry exactly one.
  std::map<EmotionLabel, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < faces.size(); ++i) {
    if (faces[i].labels.size() != 1)
      throw DataError("generate_triplet_set: faces must carry exactly one label");
    by_label[*faces[i].labels.begin()].push_back(i);
  }
  std::vector<std::vector<std::size_t>> classes;
  for (auto& [label, members] : by_label) classes.push_back(members);
  const int n_classes = static_cast<int>(classes.size());

  Rng rng(mix_seed(seed, 0x3e7));
  auto pick = [&](std::size_t bound) {
    return std::uniform_int_distribution<std::size_t>(0, bound - 1)(rng);
  };

  SyntheticDataset out;
  out.faces = faces;

  const TypePlan plans[3] = {{TripletType::OneClass, counts.one_class},
                             {TripletType::TwoClass, counts.two_class},
                             {TripletType::ThreeClass, counts.three_class}};
  for (const TypePlan& plan : plans) {
    if (plan.want == 0) continue;
    // Feasibility before sampling.
    bool feasible = false;
    switch (plan.type) {
      case TripletType::OneClass:
        for (const auto& c : classes) feasible = feasible || c.size() >= 3;
        break;
      case TripletType::TwoClass:
        if (n_classes >= 2)
          for (const auto& c : classes) feasible = feasible || c.size() >= 2;
        break;
      case TripletType::ThreeClass:
        feasible = n_classes >= 3;
        break;
      default:
        break;
    }
    if (!feasible)
      throw DataError(std::string("generate_triplet_set: no faces can realize ") +
                      triplet_type_name(plan.type) + " triplets");

    long budget = 1000L * plan.want + 1000;
    int made = 0;
    while (made < plan.want) {
      if (--budget < 0)
        throw DataError(std::string("generate_triplet_set: resampling budget "
                                    "exhausted for ") +
                        triplet_type_name(plan.type) +
                        " (ambiguity margin too strict?)");
      std::size_t idx[3];
      if (plan.type == TripletType::OneClass) {
        const auto& c = classes[pick(classes.size())];
        if (c.size() < 3) continue;
        idx[0] = c[pick(c.size())];
        do idx[1] = c[pick(c.size())]; while (idx[1] == idx[0]);
        do idx[2] = c[pick(c.size())]; while (idx[2] == idx[0] || idx[2] == idx[1]);
      } else if (plan.type == TripletType::TwoClass) {
        std::size_t ca = pick(classes.size());
        if (classes[ca].size() < 2) continue;
        std::size_t cb;
        do cb = pick(classes.size()); while (cb == ca);
        idx[0] = classes[ca][pick(classes[ca].size())];
        do idx[1] = classes[ca][pick(classes[ca].size())]; while (idx[1] == idx[0]);
        idx[2] = classes[cb][pick(classes[cb].size())];
      } else {
        std::size_t ca = pick(classes.size());
        std::size_t cb, cc;
        do cb = pick(classes.size()); while (cb == ca);
        do cc = pick(classes.size()); while (cc == ca || cc == cb);
        idx[0] = classes[ca][pick(classes[ca].size())];
        idx[1] = classes[cb][pick(classes[cb].size())];
        idx[2] = classes[cc][pick(classes[cc].size())];
      }
      // Shuffle slots so the odd one out is not positionally biased.
      for (int i = 2; i > 0; --i) std::swap(idx[i], idx[pick(std::size_t(i) + 1)]);

      auto consensus = label_triplet_by_oracle(oracle, faces[idx[0]], faces[idx[1]],
                                               faces[idx[2]], tau);
      if (!consensus) continue;  // ambiguous; resample

      AnnotatedTriplet t;
      t.record.faces = {faces[idx[0]].id, faces[idx[1]].id, faces[idx[2]].id};
      t.record.declared_type = plan.type;
      for (int r = 0; r < 6; ++r)
        t.record.votes.push_back({"sim" + std::to_string(r), *consensus->label});
      t.consensus = *consensus;
      t.type = plan.type;
      out.triplets.push_back(std::move(t));
      ++made;
    }
  }
  return out;
}

}  // namespace exprsim
