#include "exprsim/train.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

namespace exprsim {

void TrainConfig::validate() const {
  if (lr <= 0) throw std::invalid_argument("train config: lr must be > 0");
  if (iterations < 0) throw std::invalid_argument("train config: iterations < 0");
  if (batch_per_type < 1)
    throw std::invalid_argument("train config: batch_per_type must be >= 1");
  if (margin_one_class < 0 || margin_two_class < 0 || margin_three_class < 0)
    throw std::invalid_argument("train config: margins must be >= 0");
  if (eval_every < 0) throw std::invalid_argument("train config: eval_every < 0");
}

double margin_for_type(const TrainConfig& config, TripletType type) {
  switch (type) {
    case TripletType::OneClass: return config.margin_one_class;
    case TripletType::TwoClass: return config.margin_two_class;
    case TripletType::ThreeClass: return config.margin_three_class;
    case TripletType::Other: break;
  }
  throw std::invalid_argument("margin_for_type: untyped triplets are not sampled");
}

TripletLossResult triplet_loss(const Eigen::VectorXd& e1, const Eigen::VectorXd& e2,
                               const Eigen::VectorXd& e3, int odd_one_out,
                               double margin) {
  if (odd_one_out < 1 || odd_one_out > 3)
    throw std::invalid_argument("triplet_loss: odd_one_out must be in {1,2,3}");
  if (margin < 0) throw std::invalid_argument("triplet_loss: margin must be >= 0");
  const Eigen::VectorXd* e[3] = {&e1, &e2, &e3};
  const int c = odd_one_out - 1;
  const int a = c == 0 ? 1 : 0;
  const int b = c == 2 ? 1 : 2;

  const Eigen::VectorXd ab = *e[a] - *e[b];
  const Eigen::VectorXd ac = *e[a] - *e[c];
  const Eigen::VectorXd bc = *e[b] - *e[c];
  const double d_ab = ab.squaredNorm();
  const double term1 = d_ab - ac.squaredNorm() + margin;
  const double term2 = d_ab - bc.squaredNorm() + margin;

  TripletLossResult result;
  Eigen::VectorXd* g[3];
  TripletLossResult& r = result;
  r.g1 = Eigen::VectorXd::Zero(e1.size());
  r.g2 = Eigen::VectorXd::Zero(e2.size());
  r.g3 = Eigen::VectorXd::Zero(e3.size());
  g[0] = &r.g1;
  g[1] = &r.g2;
  g[2] = &r.g3;

  if (term1 > 0) {
    r.loss += term1;
    *g[a] += 2 * ab - 2 * ac;
    *g[b] += -2 * ab;
    *g[c] += 2 * ac;
  }
  if (term2 > 0) {
    r.loss += term2;
    *g[a] += 2 * ab;
    *g[b] += -2 * ab - 2 * bc;
    *g[c] += 2 * bc;
  }
  return result;
}

AdamState AdamState::zeros(Eigen::Index n) {
  return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0};
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               AdamState& state, double lr, double beta1, double beta2,
               double eps) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      params.size() != state.v.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  if (!grads.allFinite()) throw NumericError("adam_step: non-finite gradient");

  state.t += 1;
  state.m = beta1 * state.m + (1 - beta1) * grads;
  state.v = (beta2 * state.v.array() + (1 - beta2) * grads.array().square()).matrix();
  const double bias1 = 1 - std::pow(beta1, double(state.t));
  const double bias2 = 1 - std::pow(beta2, double(state.t));
  params.array() -=
      lr * (state.m.array() / bias1) / ((state.v.array() / bias2).sqrt() + eps);
}

std::vector<std::size_t> stratified_batch(
    const std::map<TripletType, std::vector<std::size_t>>& pools,
    int batch_per_type, Rng& rng) {
  if (batch_per_type < 1)
    throw std::invalid_argument("stratified_batch: batch_per_type must be >= 1");
  std::vector<std::size_t> batch;
  batch.reserve(pools.size() * static_cast<std::size_t>(batch_per_type));
  for (const auto& [type, pool] : pools) {
    if (pool.empty())
      throw DataError(std::string("stratified_batch: empty pool for ") +
                      triplet_type_name(type));
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (int i = 0; i < batch_per_type; ++i) batch.push_back(pool[pick(rng)]);
  }
  return batch;
}

FeatureStore embed_all(const HeadParams& params, const FeatureStore& features) {
  FeatureStore out;
  const auto& ids = features.ids();
  constexpr std::size_t kChunk = 512;
  for (std::size_t begin = 0; begin < ids.size(); begin += kChunk) {
    const std::size_t count = std::min(kChunk, ids.size() - begin);
    Eigen::MatrixXd x(count, features.dim());
    for (std::size_t i = 0; i < count; ++i)
      x.row(static_cast<Eigen::Index>(i)) = features.at(ids[begin + i]).transpose();
    Eigen::MatrixXd y = embed(params, x);
    for (std::size_t i = 0; i < count; ++i)
      out.insert(ids[begin + i], y.row(static_cast<Eigen::Index>(i)).transpose());
  }
  return out;
}

namespace {

struct IndexedData {
  Eigen::MatrixXd features;                 // one row per distinct face
  std::map<std::string, Eigen::Index> row;  // face id -> row
};

IndexedData index_features(const std::vector<AnnotatedTriplet>& triplets,
                           const FeatureStore& store) {
  IndexedData data;
  std::vector<const Eigen::VectorXd*> rows;
  for (const AnnotatedTriplet& t : triplets) {
    for (const std::string& id : t.record.faces) {
      if (data.row.count(id)) continue;
      const Eigen::VectorXd* v = store.find(id);
      if (!v) throw DataError("missing feature for " + id);
      data.row[id] = static_cast<Eigen::Index>(rows.size());
      rows.push_back(v);
    }
  }
  if (rows.empty()) return data;
  data.features.resize(rows.size(), rows[0]->size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    data.features.row(static_cast<Eigen::Index>(i)) = rows[i]->transpose();
  return data;
}

double heldout_accuracy(const HeadParams& params,
                        const std::vector<AnnotatedTriplet>& heldout,
                        const FeatureStore& features) {
  FeatureStore needed;
  for (const AnnotatedTriplet& t : heldout)
    for (const std::string& id : t.record.faces)
      if (!needed.find(id)) needed.insert(id, features.at(id));
  FeatureStore embeddings = embed_all(params, needed);
  return triplet_prediction_accuracy(embeddings, heldout, DistanceKind::L2)
      .overall();
}

}  // namespace

TrainReport train_embedding(const std::vector<AnnotatedTriplet>& train,
                            const std::vector<AnnotatedTriplet>& heldout,
                            const FeatureStore& features, const HeadSpec& spec,
                            const TrainConfig& config, std::ostream* log) {
  spec.validate();
  config.validate();

  // Pools over the types actually present; every training triplet needs a
  // consensus label and a margin-bearing type.
  std::map<TripletType, std::vector<std::size_t>> pools;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const AnnotatedTriplet& t = train[i];
    if (!t.consensus.label)
      throw DataError("train_embedding: triplet without consensus label");
    if (t.type == TripletType::Other)
      throw DataError("train_embedding: untyped (Other) triplet in training pool");
    pools[t.type].push_back(i);
  }

  IndexedData data = index_features(train, features);

  Rng init_rng(mix_seed(config.seed, 1));
  Rng batch_rng(mix_seed(config.seed, 2));
  Rng dropout_rng(mix_seed(config.seed, 3));

  TrainReport report;
  report.params = init_head(spec, init_rng);

  Eigen::VectorXd flat = report.params.flatten_trainable();
  AdamState adam = AdamState::zeros(flat.size());

  double loss_accum = 0;
  int loss_count = 0;
  for (int iter = 1; iter <= config.iterations; ++iter) {
    std::vector<std::size_t> batch =
        stratified_batch(pools, config.batch_per_type, batch_rng);
    const int n_triplets = static_cast<int>(batch.size());

    Eigen::MatrixXd x(3 * n_triplets, spec.in_dim);
    for (int t = 0; t < n_triplets; ++t) {
      const AnnotatedTriplet& triplet = train[batch[t]];
      for (int s = 0; s < 3; ++s)
        x.row(3 * t + s) = data.features.row(data.row.at(triplet.record.faces[s]));
    }

    auto [y, trace] = head_forward(report.params, x, Mode::Train, &dropout_rng);
    if (!y.allFinite())
      throw NumericError("train_embedding: non-finite embeddings at iteration " +
                         std::to_string(iter) + " (diverged?)");

    double batch_loss = 0;
    Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(y.rows(), y.cols());
    for (int t = 0; t < n_triplets; ++t) {
      const AnnotatedTriplet& triplet = train[batch[t]];
      TripletLossResult r = triplet_loss(
          y.row(3 * t).transpose(), y.row(3 * t + 1).transpose(),
          y.row(3 * t + 2).transpose(), *triplet.consensus.label,
          margin_for_type(config, triplet.type));
      batch_loss += r.loss;
      upstream.row(3 * t) = r.g1.transpose() / n_triplets;
      upstream.row(3 * t + 1) = r.g2.transpose() / n_triplets;
      upstream.row(3 * t + 2) = r.g3.transpose() / n_triplets;
    }
    batch_loss /= n_triplets;
    if (!std::isfinite(batch_loss))
      throw NumericError("train_embedding: non-finite loss at iteration " +
                         std::to_string(iter));

    HeadParams grads = head_backward(report.params, trace, upstream);
    Eigen::VectorXd flat_grads = grads.flatten_trainable();
    adam_step(flat, flat_grads, adam, config.lr, config.adam_beta1,
              config.adam_beta2, config.adam_eps);
    report.params.unflatten_trainable(flat);

    loss_accum += batch_loss;
    ++loss_count;

    const bool eval_now = config.eval_every > 0 && iter % config.eval_every == 0;
    if (eval_now) {
      TrainCurvePoint point;
      point.iteration = iter;
      point.mean_loss = loss_accum / loss_count;
      point.heldout_accuracy =
          heldout.empty() ? -1 : heldout_accuracy(report.params, heldout, features);
      report.curve.push_back(point);
      if (log)
        (*log) << "iter=" << point.iteration << " loss=" << point.mean_loss
               << " heldout_acc=" << point.heldout_accuracy << "\n";
      loss_accum = 0;
      loss_count = 0;
    }
  }

  if (!heldout.empty()) {
    report.final_heldout_accuracy =
        heldout_accuracy(report.params, heldout, features);
    if (log)
      (*log) << "final heldout_acc=" << report.final_heldout_accuracy << "\n";
  }
  return report;
}

std::vector<AnnotatedTriplet> label_triplet_sampler(
    const std::vector<FaceRecord>& faces, int count, Rng& rng) {
  if (count < 0) throw std::invalid_argument("label_triplet_sampler: count < 0");
  std::map<EmotionLabel, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < faces.size(); ++i) {
    if (faces[i].labels.size() != 1)
      throw DataError("label_triplet_sampler: faces must carry exactly one label");
    by_label[*faces[i].labels.begin()].push_back(i);
  }
  std::vector<std::vector<std::size_t>> classes;
  std::vector<std::size_t> pair_classes;  // classes with >= 2 members
  for (auto& [label, members] : by_label) {
    if (members.size() >= 2) pair_classes.push_back(classes.size());
    classes.push_back(members);
  }
  if (classes.size() < 2 || pair_classes.empty())
    throw DataError("label_triplet_sampler: no valid triplet exists");

  auto pick = [&](std::size_t bound) {
    return std::uniform_int_distribution<std::size_t>(0, bound - 1)(rng);
  };

  std::vector<AnnotatedTriplet> out;
  out.reserve(static_cast<std::size_t>(count));
  while (static_cast<int>(out.size()) < count) {
    const auto& same = classes[pair_classes[pick(pair_classes.size())]];
    std::size_t i = same[pick(same.size())];
    std::size_t j;
    do j = same[pick(same.size())]; while (j == i);
    std::size_t other_class;
    do other_class = pick(classes.size());
    while (&classes[other_class] == &same);
    std::size_t k = classes[other_class][pick(classes[other_class].size())];

    const int odd_slot = static_cast<int>(pick(3));  // uniform over positions
    std::array<std::size_t, 3> slots{};
    slots[static_cast<std::size_t>(odd_slot)] = k;
    int cursor = 0;
    for (int s = 0; s < 3; ++s) {
      if (s == odd_slot) continue;
      slots[static_cast<std::size_t>(s)] = cursor++ == 0 ? i : j;
    }

    AnnotatedTriplet t;
    t.record.faces = {faces[slots[0]].id, faces[slots[1]].id, faces[slots[2]].id};
    t.record.votes.push_back({"label-sampler", odd_slot + 1});
    t.record.declared_type = TripletType::TwoClass;
    t.consensus = {odd_slot + 1, Agreement::Strong};
    t.type = TripletType::TwoClass;
    out.push_back(std::move(t));
  }
  return out;
}

std::pair<double, Eigen::VectorXd> softmax_ce_loss(const Eigen::VectorXd& logits,
                                                   int class_index) {
  if (class_index < 0 || class_index >= logits.size())
    throw std::invalid_argument("softmax_ce_loss: class index out of range");
  const double max_logit = logits.maxCoeff();
  const Eigen::ArrayXd shifted = logits.array() - max_logit;
  const double lse = std::log(shifted.exp().sum()) + max_logit;
  const double loss = lse - logits[class_index];
  Eigen::VectorXd grad = (logits.array() - lse).exp().matrix();  // softmax
  grad[class_index] -= 1.0;
  return {loss, std::move(grad)};
}

std::pair<double, Eigen::VectorXd> multi_binary_ce_loss(
    const Eigen::VectorXd& logits, const Eigen::VectorXd& flags) {
  if (logits.size() != flags.size())
    throw std::invalid_argument("multi_binary_ce_loss: shape mismatch");
  if (logits.size() == 0)
    throw std::invalid_argument("multi_binary_ce_loss: empty input");
  const double n = double(logits.size());
  double loss = 0;
  Eigen::VectorXd grad(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    const double y = flags[i];
    if (y != 0.0 && y != 1.0)
      throw std::invalid_argument("multi_binary_ce_loss: flags must be 0/1");
    // max(z,0) - z*y + log(1 + exp(-|z|)) is the stable sigmoid CE.
    loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    const double sigmoid = 1.0 / (1.0 + std::exp(-z));
    grad[i] = (sigmoid - y) / n;
  }
  return {loss / n, std::move(grad)};
}

}  // namespace exprsim
