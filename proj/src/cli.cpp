#include "exprsim/cli.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "exprsim/apps.hpp"
#include "exprsim/dataset.hpp"
#include "exprsim/metrics.hpp"
#include "exprsim/nn.hpp"
#include "exprsim/synth.hpp"
#include "exprsim/train.hpp"

namespace exprsim {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open for digest: " + path);
  std::uint64_t state = 14695981039346656037ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    state = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())),
                    state);
  return to_hex(state);
}

namespace {

ordered_json make_manifest(const std::string& command, ordered_json config,
                           const std::vector<std::pair<std::string, std::string>>&
                               inputs) {
  ordered_json m;
  m["command"] = command;
  m["tool_version"] = kToolVersion;
  m["config"] = std::move(config);
  ordered_json in = ordered_json::object();
  for (const auto& [label, path] : inputs) {
    in[label] = {{"path", path}, {"digest", file_digest(path)}};
  }
  m["inputs"] = in;
  return m;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << text;
  if (!out) throw DataError("write failed: " + path);
}

void emit_report(const std::string& out_path, std::ostream& fallback,
                 const ordered_json& doc) {
  const std::string text = doc.dump(2) + "\n";
  if (out_path.empty())
    fallback << text;
  else
    write_text_file(out_path, text);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ordered_json parse_json_file(const std::string& path) {
  try {
    return ordered_json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": invalid json: " + e.what());
  }
}

FeatureStore load_embeddings(const EmbeddingSource& source) {
  const bool direct = !source.embeddings.empty();
  const bool via_model = !source.model.empty() || !source.features.empty();
  if (direct == via_model)
    throw std::invalid_argument(
        "give either --embeddings or both --model and --features");
  if (direct) return FeatureStore::read_file(source.embeddings);
  if (source.model.empty() || source.features.empty())
    throw std::invalid_argument("--model and --features are both required");
  LoadedModel model = load_model(source.model);
  FeatureStore features = FeatureStore::read_file(source.features);
  if (features.dim() != model.params.spec.in_dim)
    throw DataError("feature dimension " + std::to_string(features.dim()) +
                    " does not match model input " +
                    std::to_string(model.params.spec.in_dim));
  return embed_all(model.params, features);
}

void add_embedding_inputs(std::vector<std::pair<std::string, std::string>>& inputs,
                          const std::string& prefix, const EmbeddingSource& s) {
  if (!s.embeddings.empty()) inputs.emplace_back(prefix + "_embeddings", s.embeddings);
  if (!s.model.empty()) inputs.emplace_back(prefix + "_model", s.model);
  if (!s.features.empty()) inputs.emplace_back(prefix + "_features", s.features);
}

std::vector<std::pair<std::string, std::string>> read_labels_csv(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open labels file: " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    auto comma = line.find(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 >= line.size())
      throw DataError(path + ": bad label row " + std::to_string(row));
    out.emplace_back(line.substr(0, comma), line.substr(comma + 1));
  }
  return out;
}

std::vector<AnnotatedTriplet> load_labeled_triplets(const std::string& path,
                                                    const std::string& agreement) {
  TripletDataset ds = read_triplets_file(path, TripletSchema::canonical());
  return with_consensus_label(
      filter_by_agreement(ds.annotate(), parse_agreement_policy(agreement)));
}

ordered_json stats_to_json(const DatasetStats& stats) {
  ordered_json grid = ordered_json::object();
  static const AgreementPolicy policies[3] = {AgreementPolicy::StrongOnly,
                                              AgreementPolicy::StrongPlusWeak,
                                              AgreementPolicy::All};
  for (AgreementPolicy policy : policies) {
    ordered_json row;
    row["one_class"] = stats.at(policy, TripletType::OneClass);
    row["two_class"] = stats.at(policy, TripletType::TwoClass);
    row["three_class"] = stats.at(policy, TripletType::ThreeClass);
    row["all"] = stats.total(policy);
    grid[agreement_policy_name(policy)] = row;
  }
  ordered_json j;
  j["triplets"] = grid;
  j["faces"] = stats.distinct_faces;
  return j;
}

}  // namespace

void cmd_import(const ImportArgs& args, std::ostream& report) {
  if (args.triplets.empty() || args.out.empty())
    throw std::invalid_argument("import: --triplets and --out are required");
  TripletSchema schema = args.schema.empty()
                             ? TripletSchema::canonical()
                             : TripletSchema::from_json_file(args.schema);
  TripletDataset dataset = read_triplets_file(args.triplets, schema);
  write_triplets_file(args.out, dataset);

  ordered_json config;
  config["out"] = args.out;
  config["schema"] = args.schema.empty() ? "canonical" : args.schema;
  std::vector<std::pair<std::string, std::string>> inputs = {
      {"triplets", args.triplets}};
  if (!args.schema.empty()) inputs.emplace_back("schema", args.schema);

  ordered_json doc;
  doc["manifest"] = make_manifest("import", config, inputs);
  doc["stats"] = stats_to_json(dataset_stats(dataset.annotate()));
  const std::string text = doc.dump(2) + "\n";
  report << text;
  write_text_file(args.out + ".manifest.json", text);
}

void cmd_synth(const SynthArgs& args, std::ostream& report) {
  if (args.out_dir.empty()) throw std::invalid_argument("synth: --out is required");
  PlantedOracle oracle = make_oracle(args.seed, args.in_dim, args.oracle_dim);
  std::vector<FaceRecord> faces =
      generate_faces(oracle, args.faces, args.classes, mix_seed(args.seed, 11));
  const double tau =
      args.tau >= 0 ? args.tau : default_ambiguity_margin(oracle, faces);
  SyntheticDataset dataset = generate_triplet_set(
      oracle, faces,
      TypeCounts{args.per_type, args.per_type, args.per_type}, tau,
      mix_seed(args.seed, 12));

  fs::create_directories(args.out_dir);
  const std::string triplet_path = (fs::path(args.out_dir) / "triplets.csv").string();
  const std::string feature_path =
      (fs::path(args.out_dir) / (args.binary_features ? "features.trif"
                                                      : "features.csv"))
          .string();
  const std::string labels_path = (fs::path(args.out_dir) / "labels.csv").string();
  const std::string oracle_path = (fs::path(args.out_dir) / "oracle.json").string();

  write_triplets_file(triplet_path, dataset.to_triplet_dataset());

  FeatureStore store;
  for (const FaceRecord& face : dataset.faces) store.insert(face.id, *face.feature);
  store.write_file(feature_path, args.binary_features);

  std::string labels_text;
  for (const FaceRecord& face : dataset.faces)
    labels_text += face.id + "," + emotion_name(*face.labels.begin()) + "\n";
  write_text_file(labels_path, labels_text);

  // The oracle is reconstructible from these three values; keep tau so the
  // labeling is reproducible too.
  ordered_json oracle_json;
  oracle_json["seed"] = args.seed;
  oracle_json["in_dim"] = args.in_dim;
  oracle_json["emb_dim"] = args.oracle_dim;
  oracle_json["tau"] = tau;
  write_text_file(oracle_path, oracle_json.dump(2) + "\n");

  ordered_json config;
  config["faces"] = args.faces;
  config["classes"] = args.classes;
  config["per_type"] = args.per_type;
  config["in_dim"] = args.in_dim;
  config["oracle_dim"] = args.oracle_dim;
  config["tau"] = tau;
  config["seed"] = args.seed;
  config["out"] = args.out_dir;

  ordered_json doc;
  doc["manifest"] = make_manifest("synth", config, {});
  doc["outputs"] = {{"triplets", triplet_path},
                    {"features", feature_path},
                    {"labels", labels_path},
                    {"oracle", oracle_path}};
  doc["triplet_count"] = dataset.triplets.size();
  const std::string text = doc.dump(2) + "\n";
  report << text;
  write_text_file((fs::path(args.out_dir) / "manifest.json").string(), text);
}

namespace {

ordered_json train_config_json(const TrainArgs& args) {
  ordered_json config;
  config["dim"] = args.dim;
  config["iterations"] = args.iterations;
  config["lr"] = args.lr;
  config["margin_one_class"] = args.margin_one;
  config["margin_two_class"] = args.margin_multi;
  config["margin_three_class"] = args.margin_multi;
  config["batch_per_type"] = args.batch_per_type;
  config["dropout"] = args.dropout;
  config["agreement"] = args.agreement;
  config["eval_every"] = args.eval_every;
  config["seed"] = args.seed;
  return config;
}

}  // namespace

void cmd_train(const TrainArgs& args, std::ostream& log) {
  if (args.triplets.empty() || args.features.empty() || args.out.empty())
    throw std::invalid_argument("train: --triplets, --features and --out are required");

  std::vector<AnnotatedTriplet> train_pool =
      load_labeled_triplets(args.triplets, args.agreement);
  if (train_pool.empty()) throw DataError("train: no usable triplets after filtering");
  std::vector<AnnotatedTriplet> heldout;
  if (!args.heldout_triplets.empty())
    heldout = load_labeled_triplets(args.heldout_triplets, args.agreement);

  FeatureStore features = FeatureStore::read_file(args.features);

  HeadSpec spec;
  spec.in_dim = features.dim();
  spec.emb_dim = args.dim;
  spec.dropout_rate = args.dropout;

  TrainConfig config;
  config.lr = args.lr;
  config.iterations = args.iterations;
  config.batch_per_type = args.batch_per_type;
  config.margin_one_class = args.margin_one;
  config.margin_two_class = args.margin_multi;
  config.margin_three_class = args.margin_multi;
  config.seed = args.seed;
  config.eval_every = args.eval_every;

  ordered_json config_json = train_config_json(args);
  const std::uint64_t digest = fnv1a64(config_json.dump());

  std::vector<std::pair<std::string, std::string>> inputs = {
      {"triplets", args.triplets}, {"features", args.features}};
  if (!args.heldout_triplets.empty())
    inputs.emplace_back("heldout_triplets", args.heldout_triplets);
  ordered_json manifest = make_manifest("train", config_json, inputs);

  TrainReport result = train_embedding(train_pool, heldout, features, spec, config,
                                       &log);
  save_model(args.out, result.params, args.seed, digest);

  ordered_json doc;
  doc["manifest"] = manifest;
  doc["model"] = args.out;
  doc["final_heldout_accuracy"] = result.final_heldout_accuracy;
  ordered_json curve = ordered_json::array();
  for (const TrainCurvePoint& p : result.curve)
    curve.push_back({{"iteration", p.iteration},
                     {"mean_loss", p.mean_loss},
                     {"heldout_accuracy", p.heldout_accuracy}});
  doc["curve"] = curve;
  write_text_file(args.out + ".manifest.json", doc.dump(2) + "\n");
}

void cmd_eval(const EvalArgs& args, std::ostream& fallback_out) {
  if (args.model.empty() || args.triplets.empty() || args.features.empty())
    throw std::invalid_argument("eval: --model, --triplets and --features are required");
  LoadedModel model = load_model(args.model);
  std::vector<AnnotatedTriplet> triplets =
      load_labeled_triplets(args.triplets, args.agreement);
  if (triplets.empty()) throw DataError("eval: no labeled triplets after filtering");
  FeatureStore features = FeatureStore::read_file(args.features);
  if (features.dim() != model.params.spec.in_dim)
    throw DataError("feature dimension does not match model input");

  FeatureStore needed;
  for (const AnnotatedTriplet& t : triplets)
    for (const std::string& id : t.record.faces)
      if (!needed.find(id)) needed.insert(id, features.at(id));
  FeatureStore embeddings = embed_all(model.params, needed);

  EvalReport eval;
  eval.kind = parse_distance_kind(args.distance);
  eval.accuracy = triplet_prediction_accuracy(embeddings, triplets, eval.kind);
  std::vector<TripletRecord> records;
  records.reserve(triplets.size());
  for (const AnnotatedTriplet& t : triplets) records.push_back(t.record);
  eval.per_rater = per_rater_accuracy(records);
  eval.model_digest = file_digest(args.model);
  eval.faces_embedded = static_cast<std::int64_t>(needed.size());

  ordered_json config;
  config["distance"] = args.distance;
  config["agreement"] = args.agreement;
  ordered_json doc;
  doc["manifest"] = make_manifest(
      "eval", config,
      {{"model", args.model}, {"triplets", args.triplets},
       {"features", args.features}});
  doc["report"] = ordered_json::parse(eval.to_text());
  emit_report(args.out, fallback_out, doc);
}

void cmd_retrieve(const RetrieveArgs& args, std::ostream& fallback_out) {
  if (args.queries.empty())
    throw std::invalid_argument("retrieve: at least one --query is required");
  FeatureStore embeddings = load_embeddings(args.source);
  const DistanceKind kind = parse_distance_kind(args.distance);

  ordered_json queries = ordered_json::array();
  for (const std::string& id : args.queries) {
    std::vector<std::string> hits = retrieve(embeddings.at(id), embeddings, args.n,
                                             kind);
    queries.push_back({{"id", id}, {"results", hits}});
  }

  ordered_json config;
  config["n"] = args.n;
  config["distance"] = args.distance;
  config["queries"] = args.queries;
  std::vector<std::pair<std::string, std::string>> inputs;
  add_embedding_inputs(inputs, "database", args.source);

  ordered_json doc;
  doc["manifest"] = make_manifest("retrieve", config, inputs);
  doc["queries"] = queries;
  emit_report(args.out, fallback_out, doc);
}

namespace {

std::map<std::string, std::vector<std::string>> read_retrieval_doc(
    const std::string& path) {
  ordered_json doc = parse_json_file(path);
  if (!doc.contains("queries"))
    throw DataError(path + ": not a retrieval document (no 'queries')");
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& q : doc.at("queries")) {
    std::vector<std::string> ids;
    for (const auto& r : q.at("results")) ids.push_back(r.get<std::string>());
    if (!out.emplace(q.at("id").get<std::string>(), std::move(ids)).second)
      throw DataError(path + ": duplicate query id");
  }
  return out;
}

std::map<std::string, std::vector<PairJudgement>> read_judgement_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open judgement file: " + path);
  std::map<std::string, std::vector<PairJudgement>> out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      auto pos = line.find(',', start);
      if (pos == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, pos - start));
      start = pos + 1;
    }
    if (fields.size() != 4)
      throw DataError(path + ": judgement row " + std::to_string(row) +
                      " needs query,item_a,item_b,outcome");
    PairJudgement j;
    j.first = fields[1];
    j.second = fields[2];
    if (fields[3] == "a")
      j.outcome = PairOutcome::FirstWins;
    else if (fields[3] == "b")
      j.outcome = PairOutcome::SecondWins;
    else if (fields[3] == "tie")
      j.outcome = PairOutcome::Tie;
    else
      throw DataError(path + ": judgement row " + std::to_string(row) +
                      ": outcome must be a, b or tie");
    out[fields[0]].push_back(std::move(j));
  }
  return out;
}

}  // namespace

void cmd_rankdiff(const RankDiffArgs& args, std::ostream& fallback_out) {
  if (args.candidate.empty() || args.baseline.empty())
    throw std::invalid_argument("rankdiff: --candidate and --baseline are required");
  const bool from_file = !args.judgements.empty();
  const bool from_oracle = !args.judge_features.empty();
  if (from_file == from_oracle)
    throw std::invalid_argument(
        "rankdiff: give exactly one of --judgements or --judge-features");

  auto candidate = read_retrieval_doc(args.candidate);
  auto baseline = read_retrieval_doc(args.baseline);
  if (candidate.size() != baseline.size())
    throw DataError("rankdiff: query sets differ between candidate and baseline");

  std::map<std::string, std::vector<PairJudgement>> judgements;
  FeatureStore judge;
  const DistanceKind kind = parse_distance_kind(args.distance);
  if (from_file)
    judgements = read_judgement_file(args.judgements);
  else
    judge = FeatureStore::read_file(args.judge_features);

  ordered_json per_query = ordered_json::array();
  double sum = 0;
  for (const auto& [query, cand_ids] : candidate) {
    auto base_it = baseline.find(query);
    if (base_it == baseline.end())
      throw DataError("rankdiff: query missing from baseline: " + query);
    const std::vector<std::string>& base_ids = base_it->second;
    if (cand_ids.size() != base_ids.size())
      throw DataError("rankdiff: retrieval sizes differ for query " + query);

    // Union of both retrieval sets, candidate-first for the ranking
    // tie-break on first appearance.
    std::vector<std::string> items;
    std::set<std::string> seen;
    for (const std::string& id : cand_ids)
      if (seen.insert(id).second) items.push_back(id);
    for (const std::string& id : base_ids)
      if (seen.insert(id).second) items.push_back(id);

    std::vector<PairJudgement> query_judgements;
    if (from_file) {
      auto it = judgements.find(query);
      if (it == judgements.end())
        throw DataError("rankdiff: no judgements for query " + query);
      query_judgements = it->second;
    } else {
      const Eigen::VectorXd& q = judge.at(query);
      for (std::size_t i = 0; i < items.size(); ++i) {
        for (std::size_t j = i + 1; j < items.size(); ++j) {
          const double di = distance(q, judge.at(items[i]), kind);
          const double dj = distance(q, judge.at(items[j]), kind);
          PairJudgement pj;
          pj.first = items[i];
          pj.second = items[j];
          pj.outcome = di < dj   ? PairOutcome::FirstWins
                       : dj < di ? PairOutcome::SecondWins
                                 : PairOutcome::Tie;
          query_judgements.push_back(std::move(pj));
        }
      }
    }

    RankingTable ranking = pairwise_to_ranking(items, query_judgements);
    const double value = rank_difference(cand_ids, base_ids, ranking);
    sum += value;
    per_query.push_back({{"query", query}, {"value", value}});
  }

  ordered_json config;
  config["distance"] = args.distance;
  config["judge"] = from_file ? "file" : "oracle";
  std::vector<std::pair<std::string, std::string>> inputs = {
      {"candidate", args.candidate}, {"baseline", args.baseline}};
  if (from_file) inputs.emplace_back("judgements", args.judgements);
  if (from_oracle) inputs.emplace_back("judge_features", args.judge_features);

  ordered_json doc;
  doc["manifest"] = make_manifest("rankdiff", config, inputs);
  doc["per_query"] = per_query;
  doc["mean"] = candidate.empty() ? 0.0 : sum / double(candidate.size());
  emit_report(args.out, fallback_out, doc);
}

void cmd_summarize(const SummarizeArgs& args, std::ostream& fallback_out) {
  FeatureStore embeddings = load_embeddings(args.source);
  Summary summary = summarize_album(embeddings, args.clusters);

  ordered_json entries = ordered_json::array();
  for (const Summary::Entry& e : summary.entries)
    entries.push_back({{"medoid", e.face_id}, {"cluster_size", e.cluster_size}});

  ordered_json config;
  config["clusters"] = args.clusters;
  std::vector<std::pair<std::string, std::string>> inputs;
  add_embedding_inputs(inputs, "album", args.source);

  ordered_json doc;
  doc["manifest"] = make_manifest("summarize", config, inputs);
  doc["summary"] = entries;
  emit_report(args.out, fallback_out, doc);
}

void cmd_knn(const KnnArgs& args, std::ostream& fallback_out) {
  if (args.database_labels.empty())
    throw std::invalid_argument("knn: --database-labels is required");
  FeatureStore db = load_embeddings(args.database);
  FeatureStore queries = load_embeddings(args.queries);
  const DistanceKind kind = parse_distance_kind(args.distance);

  auto label_rows = read_labels_csv(args.database_labels);
  std::map<std::string, std::string> label_of;
  std::set<std::string> class_names;
  for (const auto& [id, label] : label_rows) {
    label_of[id] = label;
    class_names.insert(label);
  }
  std::vector<std::string> classes(class_names.begin(), class_names.end());
  std::map<std::string, int> class_index;
  for (std::size_t i = 0; i < classes.size(); ++i)
    class_index[classes[i]] = static_cast<int>(i);

  Eigen::MatrixXd db_matrix(db.size(), db.dim());
  std::vector<int> db_classes(db.size());
  for (std::size_t i = 0; i < db.ids().size(); ++i) {
    const std::string& id = db.ids()[i];
    db_matrix.row(static_cast<Eigen::Index>(i)) = db.at(id).transpose();
    auto it = label_of.find(id);
    if (it == label_of.end()) throw DataError("knn: no label for database id " + id);
    db_classes[i] = class_index.at(it->second);
  }

  Eigen::MatrixXd score_matrix(queries.size(), classes.size());
  ordered_json results = ordered_json::array();
  for (std::size_t i = 0; i < queries.ids().size(); ++i) {
    const std::string& id = queries.ids()[i];
    Eigen::VectorXd scores =
        knn_classify(queries.at(id), db_matrix, db_classes, args.k, kind,
                     static_cast<int>(classes.size()));
    score_matrix.row(static_cast<Eigen::Index>(i)) = scores.transpose();
    Eigen::Index best;
    scores.maxCoeff(&best);
    ordered_json entry;
    entry["id"] = id;
    entry["predicted"] = classes[static_cast<std::size_t>(best)];
    ordered_json per_class = ordered_json::object();
    for (std::size_t c = 0; c < classes.size(); ++c)
      per_class[classes[c]] = scores[static_cast<Eigen::Index>(c)];
    entry["scores"] = per_class;
    results.push_back(std::move(entry));
  }

  ordered_json doc;
  ordered_json config;
  config["k"] = args.k;
  config["distance"] = args.distance;
  std::vector<std::pair<std::string, std::string>> inputs;
  add_embedding_inputs(inputs, "database", args.database);
  add_embedding_inputs(inputs, "query", args.queries);
  inputs.emplace_back("database_labels", args.database_labels);
  if (!args.query_labels.empty())
    inputs.emplace_back("query_labels", args.query_labels);
  doc["manifest"] = make_manifest("knn", config, inputs);
  doc["results"] = results;

  if (!args.query_labels.empty()) {
    auto query_label_rows = read_labels_csv(args.query_labels);
    std::map<std::string, std::string> query_label_of(query_label_rows.begin(),
                                                      query_label_rows.end());
    std::vector<int> truth(queries.size());
    for (std::size_t i = 0; i < queries.ids().size(); ++i) {
      auto it = query_label_of.find(queries.ids()[i]);
      if (it == query_label_of.end())
        throw DataError("knn: no label for query id " + queries.ids()[i]);
      auto cls = class_index.find(it->second);
      if (cls == class_index.end())
        throw DataError("knn: query label not in database vocabulary: " +
                        it->second);
      truth[i] = cls->second;
    }
    doc["macro_auc"] = macro_auc(score_matrix, truth);
  }
  emit_report(args.out, fallback_out, doc);
}

}  // namespace exprsim
