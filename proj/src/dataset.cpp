#include "exprsim/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "exprsim/detail/binio.hpp"

namespace exprsim {

namespace {

const std::array<std::string, kNumEmotionLabels> kEmotionNames = {
    "Amusement",      "Anger",      "Awe",           "Boredom",
    "Concentration",  "Confusion",  "Contemplation", "Contempt",
    "Contentment",    "Desire",     "Disappointment", "Disgust",
    "Distress",       "Doubt",      "Ecstasy",       "Elation",
    "Embarrassment",  "Fear",       "Interest",      "Love",
    "Neutral",        "Pain",       "Pride",         "Realization",
    "Relief",         "Sadness",    "Shame",         "Surprise",
    "Sympathy",       "Triumph",
};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

const std::string& emotion_name(EmotionLabel label) {
  return kEmotionNames.at(static_cast<std::size_t>(label));
}

EmotionLabel parse_emotion(std::string_view name) {
  std::string needle = lower(name);
  for (int i = 0; i < kNumEmotionLabels; ++i) {
    if (lower(kEmotionNames[i]) == needle) return static_cast<EmotionLabel>(i);
  }
  throw DataError("unknown emotion label: " + std::string(name));
}

const char* triplet_type_name(TripletType type) {
  switch (type) {
    case TripletType::OneClass: return "one_class";
    case TripletType::TwoClass: return "two_class";
    case TripletType::ThreeClass: return "three_class";
    case TripletType::Other: return "other";
  }
  return "other";
}

TripletType parse_triplet_type(std::string_view name) {
  std::string n = lower(name);
  if (n == "one_class" || n == "one_class_triplet") return TripletType::OneClass;
  if (n == "two_class" || n == "two_class_triplet") return TripletType::TwoClass;
  if (n == "three_class" || n == "three_class_triplet") return TripletType::ThreeClass;
  if (n == "other") return TripletType::Other;
  throw DataError("unknown triplet type: " + std::string(name));
}

const char* agreement_name(Agreement a) {
  switch (a) {
    case Agreement::Strong: return "strong";
    case Agreement::Weak: return "weak";
    case Agreement::None: return "none";
  }
  return "none";
}

ConsensusResult aggregate_votes(const std::vector<RaterVote>& votes) {
  if (votes.empty()) throw DataError("aggregate_votes: empty vote sequence");
  int counts[4] = {0, 0, 0, 0};
  for (const RaterVote& v : votes) {
    if (v.choice < 1 || v.choice > 3)
      throw DataError("aggregate_votes: vote out of range");
    ++counts[v.choice];
  }
  const int total = static_cast<int>(votes.size());
  int best = 1;
  for (int c = 2; c <= 3; ++c)
    if (counts[c] > counts[best]) best = c;
  const int m = counts[best];
  const bool unique =
      (counts[1] == m) + (counts[2] == m) + (counts[3] == m) == 1;

  const int strong_threshold = (2 * total + 2) / 3;  // ceil(2R/3)
  const int weak_threshold = (total + 1) / 2;        // ceil(R/2)

  // Two labels cannot tie at the strong threshold (2*ceil(2R/3) > R for
  // R >= 2, and R = 1 is trivially unique), so a strong argmax is unique.
  if (m >= strong_threshold && unique)
    return {best, Agreement::Strong};
  if (unique && m >= weak_threshold)
    return {best, Agreement::Weak};
  return {std::nullopt, Agreement::None};
}

TripletType classify_triplet_type(const LabelSet& labels1,
                                  const LabelSet& labels2,
                                  const LabelSet& labels3) {
  auto intersects = [](const LabelSet& a, const LabelSet& b) {
    const LabelSet& small = a.size() <= b.size() ? a : b;
    const LabelSet& large = a.size() <= b.size() ? b : a;
    return std::any_of(small.begin(), small.end(),
                       [&](EmotionLabel l) { return large.count(l) > 0; });
  };
  bool common = std::any_of(labels1.begin(), labels1.end(), [&](EmotionLabel l) {
    return labels2.count(l) > 0 && labels3.count(l) > 0;
  });
  if (common) return TripletType::OneClass;

  int shared_pairs = intersects(labels1, labels2) + intersects(labels1, labels3) +
                     intersects(labels2, labels3);
  if (shared_pairs == 1) return TripletType::TwoClass;
  if (shared_pairs == 0) return TripletType::ThreeClass;
  return TripletType::Other;
}

// ---------------------------------------------------------------------------
// TripletDataset
// ---------------------------------------------------------------------------

void TripletDataset::reindex() const {
  index_.clear();
  for (std::size_t i = 0; i < faces.size(); ++i) index_[faces[i].id] = i;
}

const FaceRecord& TripletDataset::face(const std::string& id) const {
  if (index_.size() != faces.size()) reindex();
  auto it = index_.find(id);
  if (it == index_.end()) throw DataError("unknown face id: " + id);
  return faces[it->second];
}

FaceRecord& TripletDataset::face(const std::string& id) {
  const FaceRecord& f = static_cast<const TripletDataset*>(this)->face(id);
  return const_cast<FaceRecord&>(f);
}

bool TripletDataset::has_face(const std::string& id) const {
  if (index_.size() != faces.size()) reindex();
  return index_.count(id) > 0;
}

std::vector<AnnotatedTriplet> TripletDataset::annotate() const {
  std::vector<AnnotatedTriplet> out;
  out.reserve(triplets.size());
  for (const TripletRecord& record : triplets) {
    AnnotatedTriplet at;
    at.record = record;
    at.consensus = record.votes.empty() ? ConsensusResult{}
                                        : aggregate_votes(record.votes);
    if (record.declared_type) {
      at.type = *record.declared_type;
    } else {
      at.type = classify_triplet_type(face(record.faces[0]).labels,
                                      face(record.faces[1]).labels,
                                      face(record.faces[2]).labels);
    }
    out.push_back(std::move(at));
  }
  return out;
}

std::string face_id_for(const std::string& uri, const std::optional<BBox>& bbox) {
  char buf[160];
  std::string key = uri;
  key.push_back('\x1f');
  if (bbox) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f", bbox->left,
                  bbox->right, bbox->top, bbox->bottom);
    key += buf;
  } else {
    key += "-";
  }
  return to_hex(fnv1a64(key));
}

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

bool TripletSchema::bbox_present(int face) const {
  return face_bbox[face][0].present();
}

TripletSchema TripletSchema::canonical() {
  TripletSchema s;
  s.has_header = true;
  s.delimiter = ',';
  static const char* axes[4] = {"left", "right", "top", "bottom"};
  for (int f = 0; f < 3; ++f) {
    std::string base = "face" + std::to_string(f + 1);
    s.face_uri[f].name = base + "_uri";
    for (int a = 0; a < 4; ++a) s.face_bbox[f][a].name = base + "_" + axes[a];
  }
  s.declared_type.name = "declared_type";
  s.votes_from = 16;
  return s;
}

namespace {

ColumnRef column_from_json(const nlohmann::json& j) {
  ColumnRef ref;
  if (j.is_number_integer()) {
    ref.index = j.get<int>();
  } else if (j.is_string()) {
    ref.name = j.get<std::string>();
  } else {
    throw DataError("schema: column reference must be an index or a name");
  }
  return ref;
}

}  // namespace

TripletSchema TripletSchema::from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("schema: invalid json: ") + e.what());
  }
  TripletSchema s;
  s.has_header = j.value("has_header", false);
  std::string delim = j.value("delimiter", ",");
  if (delim.size() != 1) throw DataError("schema: delimiter must be one character");
  s.delimiter = delim[0];
  for (int f = 0; f < 3; ++f) {
    std::string base = "face" + std::to_string(f + 1);
    if (!j.contains(base + "_uri"))
      throw DataError("schema: missing field " + base + "_uri");
    s.face_uri[f] = column_from_json(j.at(base + "_uri"));
    if (j.contains(base + "_bbox")) {
      const auto& arr = j.at(base + "_bbox");
      if (!arr.is_array() || arr.size() != 4)
        throw DataError("schema: " + base + "_bbox must list 4 columns");
      for (int a = 0; a < 4; ++a) s.face_bbox[f][a] = column_from_json(arr[a]);
    }
  }
  if (j.contains("declared_type"))
    s.declared_type = column_from_json(j.at("declared_type"));
  if (j.contains("votes_from")) {
    s.votes_from = j.at("votes_from").get<int>();
  } else if (j.contains("vote_columns")) {
    for (const auto& c : j.at("vote_columns"))
      s.vote_columns.push_back(column_from_json(c));
    if (j.contains("rater_columns")) {
      for (const auto& c : j.at("rater_columns"))
        s.rater_columns.push_back(column_from_json(c));
      if (s.rater_columns.size() != s.vote_columns.size())
        throw DataError("schema: rater_columns and vote_columns differ in length");
    }
  }
  return s;
}

TripletSchema TripletSchema::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schema file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_row(const std::string& line, char delimiter) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(delimiter, start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

struct RowContext {
  std::size_t row = 0;  // 1-based data row
  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(what + " at row " + std::to_string(row));
  }
};

class ColumnResolver {
 public:
  ColumnResolver(const TripletSchema& schema, const std::vector<std::string>& header)
      : schema_(schema) {
    for (std::size_t i = 0; i < header.size(); ++i) by_name_[header[i]] = static_cast<int>(i);
  }

  int resolve(const ColumnRef& ref, const char* what) const {
    if (ref.index >= 0) return ref.index;
    auto it = by_name_.find(ref.name);
    if (it == by_name_.end())
      throw DataError(std::string("schema: no column named '") + ref.name +
                      "' for field " + what);
    return it->second;
  }

  const TripletSchema& schema_;

 private:
  std::map<std::string, int> by_name_;
};

std::string field_at(const std::vector<std::string>& fields, int col,
                     const char* what, const RowContext& ctx) {
  if (col < 0 || static_cast<std::size_t>(col) >= fields.size())
    ctx.fail(std::string("missing field ") + what);
  return fields[static_cast<std::size_t>(col)];
}

double parse_fraction(const std::string& text, const char* what,
                      const RowContext& ctx) {
  double value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    ctx.fail(std::string("non-numeric ") + what + " '" + text + "'");
  return value;
}

int parse_vote(const std::string& text, const RowContext& ctx) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    ctx.fail("non-numeric vote '" + text + "'");
  if (value < 1 || value > 3) ctx.fail("vote out of range");
  return value;
}

}  // namespace

TripletDataset parse_triplets(std::istream& input, const TripletSchema& schema) {
  TripletDataset dataset;
  std::map<std::string, std::size_t> face_index;

  std::string line;
  std::vector<std::string> header;
  if (schema.has_header) {
    if (!std::getline(input, line)) return dataset;  // empty input
    if (!line.empty() && line.back() == '\r') line.pop_back();
    header = split_row(line, schema.delimiter);
  }
  ColumnResolver resolver(schema, header);

  // Resolve every column once up front.
  int uri_col[3];
  int bbox_col[3][4];
  for (int f = 0; f < 3; ++f) {
    uri_col[f] = resolver.resolve(schema.face_uri[f], "face_uri");
    for (int a = 0; a < 4; ++a)
      bbox_col[f][a] = schema.bbox_present(f)
                           ? resolver.resolve(schema.face_bbox[f][a], "face_bbox")
                           : -1;
  }
  int type_col = schema.declared_type.present()
                     ? resolver.resolve(schema.declared_type, "declared_type")
                     : -1;
  std::vector<std::pair<int, int>> vote_cols;  // (rater col or -1, vote col)
  for (std::size_t i = 0; i < schema.vote_columns.size(); ++i) {
    int rc = i < schema.rater_columns.size()
                 ? resolver.resolve(schema.rater_columns[i], "rater")
                 : -1;
    vote_cols.emplace_back(rc, resolver.resolve(schema.vote_columns[i], "vote"));
  }

  RowContext ctx;
  while (std::getline(input, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++ctx.row;
    std::vector<std::string> fields = split_row(line, schema.delimiter);

    TripletRecord record;
    for (int f = 0; f < 3; ++f) {
      FaceRecord face;
      face.source_uri = field_at(fields, uri_col[f], "face_uri", ctx);
      if (face.source_uri.empty()) ctx.fail("empty face uri");
      if (schema.bbox_present(f)) {
        static const char* axes[4] = {"bbox left", "bbox right", "bbox top",
                                      "bbox bottom"};
        std::string raw[4];
        bool all_empty = true;
        for (int a = 0; a < 4; ++a) {
          raw[a] = field_at(fields, bbox_col[f][a], axes[a], ctx);
          all_empty = all_empty && raw[a].empty();
        }
        if (!all_empty) {
          BBox bbox;
          bbox.left = parse_fraction(raw[0], axes[0], ctx);
          bbox.right = parse_fraction(raw[1], axes[1], ctx);
          bbox.top = parse_fraction(raw[2], axes[2], ctx);
          bbox.bottom = parse_fraction(raw[3], axes[3], ctx);
          if (!(bbox.left < bbox.right) || !(bbox.top < bbox.bottom))
            ctx.fail("degenerate bbox");
          face.bbox = bbox;
        }
      }
      face.id = face_id_for(face.source_uri, face.bbox);
      record.faces[f] = face.id;
      auto [it, inserted] = face_index.try_emplace(face.id, dataset.faces.size());
      if (inserted) dataset.faces.push_back(std::move(face));
    }
    if (record.faces[0] == record.faces[1] || record.faces[0] == record.faces[2] ||
        record.faces[1] == record.faces[2])
      ctx.fail("triplet references the same face twice");

    if (type_col >= 0) {
      std::string text = field_at(fields, type_col, "declared_type", ctx);
      if (!text.empty()) {
        try {
          record.declared_type = parse_triplet_type(text);
        } catch (const DataError&) {
          ctx.fail("unknown triplet type '" + text + "'");
        }
      }
    }

    if (schema.votes_from >= 0) {
      for (std::size_t col = static_cast<std::size_t>(schema.votes_from);
           col < fields.size(); col += 2) {
        const std::string& rater = fields[col];
        if (col + 1 >= fields.size()) {
          if (rater.empty()) break;
          ctx.fail("dangling rater id without vote");
        }
        const std::string& vote = fields[col + 1];
        if (rater.empty() && vote.empty()) continue;  // padding
        record.votes.push_back({rater, parse_vote(vote, ctx)});
      }
    } else {
      for (std::size_t i = 0; i < vote_cols.size(); ++i) {
        auto [rc, vc] = vote_cols[i];
        std::string vote = field_at(fields, vc, "vote", ctx);
        if (vote.empty()) continue;
        std::string rater = rc >= 0 ? field_at(fields, rc, "rater", ctx)
                                    : "rater" + std::to_string(i + 1);
        record.votes.push_back({rater, parse_vote(vote, ctx)});
      }
    }

    dataset.triplets.push_back(std::move(record));
  }
  return dataset;
}

// ---------------------------------------------------------------------------
// Canonical serialization
// ---------------------------------------------------------------------------

namespace {

std::string format_fraction(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

void write_triplets(std::ostream& out, const TripletDataset& dataset) {
  std::size_t max_votes = 0;
  for (const TripletRecord& t : dataset.triplets)
    max_votes = std::max(max_votes, t.votes.size());

  static const char* axes[4] = {"left", "right", "top", "bottom"};
  for (int f = 0; f < 3; ++f) {
    std::string base = "face" + std::to_string(f + 1);
    out << base << "_uri,";
    for (int a = 0; a < 4; ++a) out << base << "_" << axes[a] << ",";
  }
  out << "declared_type";
  for (std::size_t i = 1; i <= max_votes; ++i)
    out << ",rater_id_" << i << ",vote_" << i;
  out << "\n";

  for (const TripletRecord& t : dataset.triplets) {
    for (int f = 0; f < 3; ++f) {
      const FaceRecord& face = dataset.face(t.faces[f]);
      out << face.source_uri << ",";
      if (face.bbox) {
        out << format_fraction(face.bbox->left) << ","
            << format_fraction(face.bbox->right) << ","
            << format_fraction(face.bbox->top) << ","
            << format_fraction(face.bbox->bottom) << ",";
      } else {
        out << ",,,,";
      }
    }
    if (t.declared_type) out << triplet_type_name(*t.declared_type);
    for (std::size_t i = 0; i < max_votes; ++i) {
      if (i < t.votes.size())
        out << "," << t.votes[i].rater_id << "," << t.votes[i].choice;
      else
        out << ",,";
    }
    out << "\n";
  }
}

void write_triplets_file(const std::string& path, const TripletDataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  write_triplets(out, dataset);
  if (!out) throw DataError("write failed: " + path);
}

TripletDataset read_triplets_file(const std::string& path,
                                  const TripletSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open triplet file: " + path);
  return parse_triplets(in, schema);
}

// ---------------------------------------------------------------------------
// FeatureStore
// ---------------------------------------------------------------------------

const Eigen::VectorXd* FeatureStore::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &it->second;
}

const Eigen::VectorXd& FeatureStore::at(const std::string& id) const {
  const Eigen::VectorXd* v = find(id);
  if (!v) throw DataError("missing feature for " + id);
  return *v;
}

void FeatureStore::insert(const std::string& id, Eigen::VectorXd v) {
  if (id.empty()) throw DataError("feature store: empty id");
  if (dim_ < 0) dim_ = static_cast<int>(v.size());
  if (v.size() != dim_)
    throw DataError("feature store: dimension mismatch for " + id + " (" +
                    std::to_string(v.size()) + " vs " + std::to_string(dim_) + ")");
  auto [it, inserted] = by_id_.try_emplace(id, std::move(v));
  if (!inserted) throw DataError("feature store: duplicate id " + id);
  ids_.push_back(id);
}

FeatureStore FeatureStore::read_text(std::istream& in) {
  FeatureStore store;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    std::vector<std::string> fields = split_row(line, ',');
    if (fields.size() < 2)
      throw DataError("feature row " + std::to_string(row) + ": no values");
    Eigen::VectorXd v(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      double value = 0;
      auto [ptr, ec] =
          std::from_chars(fields[i].data(), fields[i].data() + fields[i].size(), value);
      if (ec != std::errc() || ptr != fields[i].data() + fields[i].size())
        throw DataError("feature row " + std::to_string(row) +
                        ": non-numeric value '" + fields[i] + "'");
      v[static_cast<Eigen::Index>(i - 1)] = value;
    }
    store.insert(fields[0], std::move(v));
  }
  return store;
}

void FeatureStore::write_text(std::ostream& out) const {
  out.precision(17);
  for (const std::string& id : ids_) {
    out << id;
    const Eigen::VectorXd& v = by_id_.at(id);
    for (Eigen::Index i = 0; i < v.size(); ++i) out << "," << v[i];
    out << "\n";
  }
}

namespace {

using detail::read_f32;
using detail::read_u16;
using detail::read_u32;
using detail::write_f32;
using detail::write_u16;
using detail::write_u32;

constexpr char kFeatureMagic[4] = {'T', 'R', 'I', 'F'};

}  // namespace

FeatureStore FeatureStore::read_binary(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFeatureMagic, 4) != 0)
    throw DataError("feature file: bad magic");
  std::uint32_t version = read_u32(in);
  if (version != 1)
    throw DataError("feature file: unsupported version " + std::to_string(version));
  std::uint32_t dim = read_u32(in);
  if (dim == 0) throw DataError("feature file: zero dimension");

  FeatureStore store;
  while (true) {
    in.peek();
    if (in.eof()) break;
    std::uint16_t len = read_u16(in);
    std::string id(len, '\0');
    in.read(id.data(), len);
    if (!in) throw DataError("feature file: truncated id");
    Eigen::VectorXd v(dim);
    for (std::uint32_t i = 0; i < dim; ++i) v[i] = read_f32(in);
    store.insert(id, std::move(v));
  }
  return store;
}

void FeatureStore::write_binary(std::ostream& out) const {
  out.write(kFeatureMagic, 4);
  write_u32(out, 1);
  write_u32(out, static_cast<std::uint32_t>(std::max(dim_, 0)));
  for (const std::string& id : ids_) {
    if (id.size() > 0xFFFF) throw DataError("feature id too long: " + id);
    write_u16(out, static_cast<std::uint16_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    const Eigen::VectorXd& v = by_id_.at(id);
    for (Eigen::Index i = 0; i < v.size(); ++i)
      write_f32(out, static_cast<float>(v[i]));
  }
}

FeatureStore FeatureStore::read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file: " + path);
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  in.clear();
  in.seekg(0);
  if (std::memcmp(magic, kFeatureMagic, 4) == 0) return read_binary(in);
  return read_text(in);
}

void FeatureStore::write_file(const std::string& path, bool binary) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  if (binary)
    write_binary(out);
  else
    write_text(out);
  if (!out) throw DataError("write failed: " + path);
}

void attach_features(TripletDataset& dataset, const FeatureStore& store) {
  for (FaceRecord& face : dataset.faces) {
    const Eigen::VectorXd* v = store.find(face.id);
    if (!v) throw DataError("missing feature for " + face.id);
    if (face.feature && face.feature->size() != v->size())
      throw DataError("feature dimension mismatch for " + face.id);
    face.feature = *v;
  }
}

// ---------------------------------------------------------------------------
// Filtering and stats
// ---------------------------------------------------------------------------

AgreementPolicy parse_agreement_policy(std::string_view name) {
  std::string n = lower(name);
  if (n == "strong") return AgreementPolicy::StrongOnly;
  if (n == "strong+weak" || n == "strong_weak") return AgreementPolicy::StrongPlusWeak;
  if (n == "all") return AgreementPolicy::All;
  throw DataError("unknown agreement policy: " + std::string(name));
}

const char* agreement_policy_name(AgreementPolicy policy) {
  switch (policy) {
    case AgreementPolicy::StrongOnly: return "strong";
    case AgreementPolicy::StrongPlusWeak: return "strong+weak";
    case AgreementPolicy::All: return "all";
  }
  return "all";
}

std::vector<AnnotatedTriplet> filter_by_agreement(
    const std::vector<AnnotatedTriplet>& triplets, AgreementPolicy policy) {
  std::vector<AnnotatedTriplet> out;
  for (const AnnotatedTriplet& t : triplets) {
    bool keep = policy == AgreementPolicy::All ||
                t.consensus.agreement == Agreement::Strong ||
                (policy == AgreementPolicy::StrongPlusWeak &&
                 t.consensus.agreement == Agreement::Weak);
    if (keep) out.push_back(t);
  }
  return out;
}

std::vector<AnnotatedTriplet> with_consensus_label(
    const std::vector<AnnotatedTriplet>& triplets) {
  std::vector<AnnotatedTriplet> out;
  for (const AnnotatedTriplet& t : triplets)
    if (t.consensus.label) out.push_back(t);
  return out;
}

std::int64_t DatasetStats::at(AgreementPolicy policy, TripletType type) const {
  auto row = static_cast<std::size_t>(policy);
  if (type == TripletType::Other)
    throw DataError("stats grid has no Other column; use total()");
  return counts[row][static_cast<std::size_t>(type)];
}

std::int64_t DatasetStats::total(AgreementPolicy policy) const {
  return counts[static_cast<std::size_t>(policy)][3];
}

DatasetStats dataset_stats(const std::vector<AnnotatedTriplet>& triplets) {
  DatasetStats stats;
  std::set<std::string> faces;
  for (const AnnotatedTriplet& t : triplets) {
    for (const std::string& id : t.record.faces) faces.insert(id);
    // Rows are cumulative: strong counts into all three buckets, weak into
    // strong+weak and all, the rest into all only.
    std::size_t first_row;
    switch (t.consensus.agreement) {
      case Agreement::Strong: first_row = 0; break;
      case Agreement::Weak: first_row = 1; break;
      default: first_row = 2; break;
    }
    for (std::size_t row = first_row; row < 3; ++row) {
      if (t.type != TripletType::Other)
        ++stats.counts[row][static_cast<std::size_t>(t.type)];
      ++stats.counts[row][3];
    }
  }
  stats.distinct_faces = static_cast<std::int64_t>(faces.size());
  return stats;
}

}  // namespace exprsim
