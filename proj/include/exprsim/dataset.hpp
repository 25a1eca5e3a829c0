#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "exprsim/common.hpp"

namespace exprsim {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// The 30 emotion categories, with stable integer codes 0..29.
enum class EmotionLabel : int {
  Amusement = 0,
  Anger,
  Awe,
  Boredom,
  Concentration,
  Confusion,
  Contemplation,
  Contempt,
  Contentment,
  Desire,
  Disappointment,
  Disgust,
  Distress,
  Doubt,
  Ecstasy,
  Elation,
  Embarrassment,
  Fear,
  Interest,
  Love,
  Neutral,
  Pain,
  Pride,
  Realization,
  Relief,
  Sadness,
  Shame,
  Surprise,
  Sympathy,
  Triumph,
};

inline constexpr int kNumEmotionLabels = 30;

const std::string& emotion_name(EmotionLabel label);

/// Case-insensitive lookup; throws DataError for unknown names.
EmotionLabel parse_emotion(std::string_view name);

using LabelSet = std::set<EmotionLabel>;

/// Normalized crop rectangle; all fields are fractions of the image size.
struct BBox {
  double left = 0, right = 0, top = 0, bottom = 0;
  bool operator==(const BBox&) const = default;
};

struct FaceRecord {
  std::string id;               // non-empty, unique within a dataset
  std::string source_uri;       // may be empty
  std::optional<BBox> bbox;
  LabelSet labels;              // possibly empty (sources are not exhaustively labeled)
  std::optional<Eigen::VectorXd> feature;
};

/// One rater's odd-one-out pick: image `choice` is least like the other two.
struct RaterVote {
  std::string rater_id;
  int choice = 0;  // in {1,2,3}
  bool operator==(const RaterVote&) const = default;
};

enum class TripletType { OneClass, TwoClass, ThreeClass, Other };

const char* triplet_type_name(TripletType type);

/// Accepts the canonical names ("one_class", ...) and the released-CSV
/// spellings ("ONE_CLASS_TRIPLET", ...), case-insensitively.
TripletType parse_triplet_type(std::string_view name);

struct TripletRecord {
  std::array<std::string, 3> faces;  // pairwise distinct face ids
  std::vector<RaterVote> votes;
  std::optional<TripletType> declared_type;
};

enum class Agreement { Strong, Weak, None };

const char* agreement_name(Agreement a);

struct ConsensusResult {
  std::optional<int> label;  // present iff agreement != None
  Agreement agreement = Agreement::None;
};

/// Majority aggregation. With R votes: strong iff the max-voted label has
/// at least ceil(2R/3) votes; weak iff not strong, the argmax is unique and
/// it has at least ceil(R/2) votes; otherwise no consensus. For R=6 this is
/// exactly the published 4-vote / unique-3-vote rule.
ConsensusResult aggregate_votes(const std::vector<RaterVote>& votes);

/// Label-overlap taxonomy of a triplet. OneClass: some label shared by all
/// three. ThreeClass: no pairwise overlap at all. TwoClass: exactly one of
/// the three pairs overlaps. Anything else (two disjoint shared pairs) is
/// Other and is excluded from typed sampling.
TripletType classify_triplet_type(const LabelSet& labels1,
                                  const LabelSet& labels2,
                                  const LabelSet& labels3);

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// A triplet together with its derived consensus and type. `type` comes from
/// the record's declared type when present, else from the faces' label sets.
struct AnnotatedTriplet {
  TripletRecord record;
  ConsensusResult consensus;
  TripletType type = TripletType::Other;
};

struct TripletDataset {
  std::vector<FaceRecord> faces;        // unique ids, first-appearance order
  std::vector<TripletRecord> triplets;  // source row order

  const FaceRecord& face(const std::string& id) const;  // DataError if absent
  FaceRecord& face(const std::string& id);
  bool has_face(const std::string& id) const;

  /// Consensus + type for every triplet, in order.
  std::vector<AnnotatedTriplet> annotate() const;

 private:
  mutable std::map<std::string, std::size_t> index_;  // lazily rebuilt
  void reindex() const;
};

/// Stable face identity for rows referencing the same crop: FNV-1a over the
/// uri and the bbox rounded to 6 decimals.
std::string face_id_for(const std::string& uri, const std::optional<BBox>& bbox);

// ---------------------------------------------------------------------------
// Triplet file ingestion
// ---------------------------------------------------------------------------

/// A column reference: a 0-based position, or a header name.
struct ColumnRef {
  int index = -1;
  std::string name;
  bool present() const { return index >= 0 || !name.empty(); }
};

/// Maps logical triplet fields onto the columns of a delimiter-separated
/// file. The released-data layout and the canonical layout are both
/// expressible; see TripletSchema::canonical() and schemas/fec.json.
struct TripletSchema {
  bool has_header = true;
  char delimiter = ',';
  std::array<ColumnRef, 3> face_uri;
  std::array<std::array<ColumnRef, 4>, 3> face_bbox;  // left,right,top,bottom; optional
  ColumnRef declared_type;                            // optional
  // Vote layout: either (rater,vote) pairs from a fixed column to end of row,
  // or explicit parallel column lists.
  int votes_from = -1;
  std::vector<ColumnRef> rater_columns;
  std::vector<ColumnRef> vote_columns;

  bool bbox_present(int face) const;

  /// Schema of the toolkit's own on-disk triplet format.
  static TripletSchema canonical();
  static TripletSchema from_json(const std::string& json_text);
  static TripletSchema from_json_file(const std::string& path);
};

/// Parses delimiter-separated triplet rows. Face ids are derived from
/// (uri, bbox) so repeated crops unify; row order is preserved; duplicate
/// rows are kept. Malformed rows raise DataError naming the data row
/// (1-based) and field.
TripletDataset parse_triplets(std::istream& input, const TripletSchema& schema);

/// Writes the canonical comma-delimited format (UTF-8, LF): header, then
/// per row the three (uri, bbox) groups, the declared type, and trailing
/// rater/vote pairs. parse(write(ds)) == ds.
void write_triplets(std::ostream& out, const TripletDataset& dataset);

void write_triplets_file(const std::string& path, const TripletDataset& dataset);
TripletDataset read_triplets_file(const std::string& path, const TripletSchema& schema);

// ---------------------------------------------------------------------------
// Feature files
// ---------------------------------------------------------------------------

/// Insertion-ordered id -> vector map; all vectors share one dimension.
/// Doubles as the container for computed embeddings.
class FeatureStore {
 public:
  int dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<std::string>& ids() const { return ids_; }

  const Eigen::VectorXd* find(const std::string& id) const;
  const Eigen::VectorXd& at(const std::string& id) const;  // DataError if absent

  /// Rejects duplicate ids and dimension mismatches.
  void insert(const std::string& id, Eigen::VectorXd v);

  /// Text form: `id,v1,...,vD` per row.
  static FeatureStore read_text(std::istream& in);
  void write_text(std::ostream& out) const;

  /// Binary form: magic "TRIF", u32 version=1, u32 D, then records of
  /// (u16 id length, id bytes, D little-endian f32). Integers little-endian.
  static FeatureStore read_binary(std::istream& in);
  void write_binary(std::ostream& out) const;

  /// Sniffs the TRIF magic and dispatches.
  static FeatureStore read_file(const std::string& path);
  void write_file(const std::string& path, bool binary) const;

 private:
  int dim_ = -1;
  std::vector<std::string> ids_;
  std::map<std::string, Eigen::VectorXd> by_id_;
};

/// Copies each referenced face's feature vector out of the store.
/// Missing id or dimension mismatch against existing features -> DataError.
void attach_features(TripletDataset& dataset, const FeatureStore& store);

// ---------------------------------------------------------------------------
// Filtering and statistics
// ---------------------------------------------------------------------------

enum class AgreementPolicy { StrongOnly, StrongPlusWeak, All };

AgreementPolicy parse_agreement_policy(std::string_view name);
const char* agreement_policy_name(AgreementPolicy policy);

/// Keeps triplets matching the policy, preserving order. `All` keeps every
/// row; callers that need ground truth should follow with with_consensus_label.
std::vector<AnnotatedTriplet> filter_by_agreement(
    const std::vector<AnnotatedTriplet>& triplets, AgreementPolicy policy);

/// Drops triplets without a consensus label (agreement None).
std::vector<AnnotatedTriplet> with_consensus_label(
    const std::vector<AnnotatedTriplet>& triplets);

/// Counts in the published grid layout: one row per agreement bucket
/// (strong / strong+weak / all), columns one/two/three-class plus the row
/// total (which also covers Other-typed rows).
struct DatasetStats {
  std::array<std::array<std::int64_t, 4>, 3> counts{};  // [policy][type..all]
  std::int64_t distinct_faces = 0;

  std::int64_t at(AgreementPolicy policy, TripletType type) const;
  std::int64_t total(AgreementPolicy policy) const;
};

DatasetStats dataset_stats(const std::vector<AnnotatedTriplet>& triplets);

}  // namespace exprsim
