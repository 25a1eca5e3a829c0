#include <iostream>

#include "CLI11.hpp"

#include "exprsim/cli.hpp"
#include "exprsim/common.hpp"

namespace {

void add_embedding_flags(CLI::App* cmd, exprsim::EmbeddingSource& source,
                         const std::string& what) {
  cmd->add_option("--embeddings", source.embeddings,
                  "precomputed " + what + " embedding file");
  cmd->add_option("--model", source.model, "model file to embed " + what + " with");
  cmd->add_option("--features", source.features, what + " feature file");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"facial-expression similarity embedding toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(exprsim::kToolVersion));

  exprsim::ImportArgs import_args;
  CLI::App* import = app.add_subcommand("import", "ingest a triplet file");
  import->add_option("--triplets", import_args.triplets, "source triplet file")
      ->required();
  import->add_option("--schema", import_args.schema,
                     "schema json mapping logical fields to columns "
                     "(default: canonical layout)");
  import->add_option("--out", import_args.out, "canonical triplet file to write")
      ->required();

  exprsim::SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "generate an oracle-labeled dataset");
  synth->add_option("--faces", synth_args.faces, "number of faces");
  synth->add_option("--classes", synth_args.classes, "number of label classes");
  synth->add_option("--per-type", synth_args.per_type, "triplets per type");
  synth->add_option("--in-dim", synth_args.in_dim, "feature dimension");
  synth->add_option("--oracle-dim", synth_args.oracle_dim, "oracle embedding dimension");
  synth->add_option("--tau", synth_args.tau,
                    "ambiguity margin (negative: derive from data)");
  synth->add_option("--seed", synth_args.seed, "rng seed");
  synth->add_flag("--binary-features", synth_args.binary_features,
                  "write the binary feature format");
  synth->add_option("--out", synth_args.out_dir, "output directory")->required();

  exprsim::TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "train the embedding head");
  train->add_option("--triplets", train_args.triplets, "training triplet file")
      ->required();
  train->add_option("--features", train_args.features, "feature file")->required();
  train->add_option("--heldout-triplets", train_args.heldout_triplets,
                    "held-out triplet file for validation");
  train->add_option("--dim", train_args.dim, "embedding dimensionality");
  train->add_option("--iters", train_args.iterations, "iteration budget");
  train->add_option("--lr", train_args.lr, "Adam learning rate");
  train->add_option("--margin-one", train_args.margin_one, "one-class margin");
  train->add_option("--margin-multi", train_args.margin_multi,
                    "two/three-class margin");
  train->add_option("--batch-per-type", train_args.batch_per_type,
                    "triplets per type per batch");
  train->add_option("--dropout", train_args.dropout, "dropout rate");
  train->add_option("--agreement", train_args.agreement,
                    "training pool: strong|strong+weak|all");
  train->add_option("--eval-every", train_args.eval_every,
                    "validation interval in iterations");
  train->add_option("--seed", train_args.seed, "rng seed");
  train->add_option("--out", train_args.out, "model file to write")->required();

  exprsim::EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a model on triplets");
  eval->add_option("--model", eval_args.model, "model file")->required();
  eval->add_option("--triplets", eval_args.triplets, "triplet file")->required();
  eval->add_option("--features", eval_args.features, "feature file")->required();
  eval->add_option("--distance", eval_args.distance, "l1|l2|cosine");
  eval->add_option("--agreement", eval_args.agreement,
                   "evaluation pool: strong|strong+weak|all");
  eval->add_option("--out", eval_args.out, "report path (default: stdout)");

  exprsim::RetrieveArgs retrieve_args;
  CLI::App* retrieve = app.add_subcommand("retrieve", "nearest-neighbor retrieval");
  add_embedding_flags(retrieve, retrieve_args.source, "database");
  retrieve->add_option("--query", retrieve_args.queries, "query id (repeatable)")
      ->required();
  retrieve->add_option("--n", retrieve_args.n, "neighbors per query");
  retrieve->add_option("--distance", retrieve_args.distance, "l1|l2|cosine");
  retrieve->add_option("--out", retrieve_args.out, "report path (default: stdout)");

  exprsim::RankDiffArgs rankdiff_args;
  CLI::App* rankdiff =
      app.add_subcommand("rankdiff", "rank-difference between two retrievals");
  rankdiff->add_option("--candidate", rankdiff_args.candidate,
                       "candidate retrieval document")
      ->required();
  rankdiff->add_option("--baseline", rankdiff_args.baseline,
                       "baseline retrieval document")
      ->required();
  rankdiff->add_option("--judgements", rankdiff_args.judgements,
                       "pairwise judgement file (query,item_a,item_b,a|b|tie)");
  rankdiff->add_option("--judge-features", rankdiff_args.judge_features,
                       "judge-embedding file for oracle judgements");
  rankdiff->add_option("--distance", rankdiff_args.distance,
                       "judge distance: l1|l2|cosine");
  rankdiff->add_option("--out", rankdiff_args.out, "report path (default: stdout)");

  exprsim::SummarizeArgs summarize_args;
  CLI::App* summarize = app.add_subcommand("summarize", "album summarization");
  add_embedding_flags(summarize, summarize_args.source, "album");
  summarize->add_option("--clusters", summarize_args.clusters, "cluster count");
  summarize->add_option("--out", summarize_args.out, "report path (default: stdout)");

  exprsim::KnnArgs knn_args;
  CLI::App* knn = app.add_subcommand("knn", "k-nearest-neighbor classification");
  add_embedding_flags(knn, knn_args.database, "database");
  knn->add_option("--database-labels", knn_args.database_labels,
                  "id,label rows for the database")
      ->required();
  knn->add_option("--query-embeddings", knn_args.queries.embeddings,
                  "precomputed query embedding file");
  knn->add_option("--query-model", knn_args.queries.model,
                  "model file to embed queries with");
  knn->add_option("--query-features", knn_args.queries.features,
                  "query feature file");
  knn->add_option("--query-labels", knn_args.query_labels,
                  "id,label rows for queries (enables macro AUC)");
  knn->add_option("--k", knn_args.k, "neighbor count");
  knn->add_option("--distance", knn_args.distance, "l1|l2|cosine");
  knn->add_option("--out", knn_args.out, "report path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exprsim::kExitOk : exprsim::kExitUsage;
  }

  try {
    if (import->parsed()) exprsim::cmd_import(import_args, std::cout);
    if (synth->parsed()) exprsim::cmd_synth(synth_args, std::cout);
    if (train->parsed()) exprsim::cmd_train(train_args, std::cout);
    if (eval->parsed()) exprsim::cmd_eval(eval_args, std::cout);
    if (retrieve->parsed()) exprsim::cmd_retrieve(retrieve_args, std::cout);
    if (rankdiff->parsed()) exprsim::cmd_rankdiff(rankdiff_args, std::cout);
    if (summarize->parsed()) exprsim::cmd_summarize(summarize_args, std::cout);
    if (knn->parsed()) exprsim::cmd_knn(knn_args, std::cout);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exprsim::kExitUsage;
  } catch (const exprsim::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return exprsim::kExitNumeric;
  } catch (const exprsim::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return exprsim::kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exprsim::kExitData;
  }
  return exprsim::kExitOk;
}
