#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "exprsim/common.hpp"

namespace exprsim {

// Exit codes: 0 success, then distinct classes of failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 64;    // bad flags / arguments
inline constexpr int kExitData = 65;     // unreadable or inconsistent data
inline constexpr int kExitNumeric = 70;  // numeric failure (divergence etc.)

/// FNV-1a digest of a file's bytes, as hex. DataError if unreadable.
std::string file_digest(const std::string& path);

struct ImportArgs {
  std::string triplets;
  std::string schema;  // empty: canonical layout
  std::string out;
};

struct SynthArgs {
  int faces = 1000;
  int classes = 10;
  int per_type = 1000;
  int in_dim = 64;
  int oracle_dim = 8;
  double tau = -1;  // negative: use the default ambiguity margin
  std::uint64_t seed = 1;
  bool binary_features = false;
  std::string out_dir;
};

struct TrainArgs {
  std::string triplets;
  std::string features;
  std::string heldout_triplets;  // optional
  int dim = 16;
  int iterations = 2000;
  double lr = 5e-4;
  double margin_one = 0.1;
  double margin_multi = 0.2;
  int batch_per_type = 30;
  double dropout = 0.5;
  std::string agreement = "strong";
  int eval_every = 200;
  std::uint64_t seed = 1;
  std::string out;  // model path
};

struct EvalArgs {
  std::string model;
  std::string triplets;
  std::string features;
  std::string distance = "l2";
  std::string agreement = "strong";
  std::string out;  // empty: stdout
};

struct EmbeddingSource {
  std::string embeddings;  // precomputed embedding file
  std::string model;       // or: model + raw features
  std::string features;
};

struct RetrieveArgs {
  EmbeddingSource source;
  std::vector<std::string> queries;  // query ids (must be in the database)
  int n = 5;
  std::string distance = "l2";
  std::string out;
};

struct RankDiffArgs {
  std::string candidate;   // retrieval document (from cmd_retrieve)
  std::string baseline;
  std::string judgements;       // judgement file, or
  std::string judge_features;   // oracle-judge embedding file
  std::string distance = "l2";  // for the oracle judge
  std::string out;
};

struct SummarizeArgs {
  EmbeddingSource source;
  int clusters = 10;
  std::string out;
};

struct KnnArgs {
  EmbeddingSource database;
  std::string database_labels;
  EmbeddingSource queries;
  std::string query_labels;  // optional: adds macro AUC to the report
  int k = 200;
  std::string distance = "l2";
  std::string out;
};

// Each command throws DataError / NumericError / std::invalid_argument on
// failure; main() maps those to exit codes. Reports and artifacts carry a
// run manifest (resolved config, seeds, input digests, tool version).
void cmd_import(const ImportArgs& args, std::ostream& report);
void cmd_synth(const SynthArgs& args, std::ostream& report);
void cmd_train(const TrainArgs& args, std::ostream& log);
void cmd_eval(const EvalArgs& args, std::ostream& fallback_out);
void cmd_retrieve(const RetrieveArgs& args, std::ostream& fallback_out);
void cmd_rankdiff(const RankDiffArgs& args, std::ostream& fallback_out);
void cmd_summarize(const SummarizeArgs& args, std::ostream& fallback_out);
void cmd_knn(const KnnArgs& args, std::ostream& fallback_out);

}  // namespace exprsim
