#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "nes/corpus.hpp"
#include "nes/error.hpp"
#include "nes/text.hpp"

namespace nes {

struct EmbeddingProviderConfig {
  enum class Kind : std::uint8_t { hash = 0, external = 1 };

  Kind kind = Kind::hash;
  std::uint32_t d_raw = 256;
  std::uint32_t window = 2;  // context half-width
  std::uint64_t seed = 0;

  friend bool operator==(const EmbeddingProviderConfig&, const EmbeddingProviderConfig&) = default;
};

struct TokenVectors {
  SentenceId sentence_id = 0;
  Eigen::MatrixXd rows;  // one row per token
};

struct SentenceVector {
  SentenceId sentence_id = 0;
  Eigen::VectorXd vector;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dim() const = 0;
  virtual EmbeddingProviderConfig config() const = 0;
  virtual TokenVectors embed_tokens(const Sentence& s) const = 0;
  virtual SentenceVector embed_sentence(const Sentence& s) const = 0;
};

/// Signed feature hashing over local syntactic context. Each feature string is
/// hashed with FNV-1a (basis salted by the seed); index = h mod d_raw, sign =
/// bit 63. Token rows are L2-normalised; the sentence vector is their mean.
class HashEmbedder final : public EmbeddingProvider {
 public:
  explicit HashEmbedder(EmbeddingProviderConfig cfg = {}) : cfg_(cfg) {
    cfg_.kind = EmbeddingProviderConfig::Kind::hash;
    if (cfg_.d_raw == 0) fail(Errc::InvalidArgument, "d_raw must be positive");
  }

  std::size_t dim() const override { return cfg_.d_raw; }
  EmbeddingProviderConfig config() const override { return cfg_; }

  static std::vector<std::string> token_features(const Sentence& s, std::size_t i, std::uint32_t window) {
    const Token& t = s.tokens[i];
    std::vector<std::string> f;
    f.push_back("lem=" + text::lower(t.lemma));
    f.push_back("w=" + text::lower(t.surface));
    f.push_back("pos=" + t.pos);
    f.push_back("dep=" + t.deprel);
    f.push_back("hl=" + (t.head == kRoot ? std::string("<root>")
                                          : text::lower(s.tokens[static_cast<std::size_t>(t.head)].lemma)));
    const auto n = static_cast<std::int64_t>(s.tokens.size());
    const auto w = static_cast<std::int64_t>(window);
    for (std::int64_t o = -w; o <= w; ++o) {
      const std::int64_t j = static_cast<std::int64_t>(i) + o;
      if (o == 0 || j < 0 || j >= n) continue;
      f.push_back("n" + std::string(o > 0 ? "+" : "") + std::to_string(o) + "=" +
                  text::lower(s.tokens[static_cast<std::size_t>(j)].lemma));
    }
    if (const std::string* label = s.entity_at(i)) f.push_back("ent=" + *label);
    return f;
  }

  TokenVectors embed_tokens(const Sentence& s) const override {
    TokenVectors out{s.id, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.tokens.size()), cfg_.d_raw)};
    const std::uint64_t basis = text::kFnvOffset ^ cfg_.seed;
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      auto row = out.rows.row(static_cast<Eigen::Index>(i));
      for (const auto& feat : token_features(s, i, cfg_.window)) {
        const std::uint64_t h = text::fnv1a64(feat, basis);
        const double sign = (h >> 63) ? -1.0 : 1.0;
        row(static_cast<Eigen::Index>(h % cfg_.d_raw)) += sign;
      }
      double sq = 0.0;
      for (Eigen::Index c = 0; c < row.size(); ++c) sq += row(c) * row(c);
      if (sq > 0.0) row /= std::sqrt(sq);
    }
    return out;
  }

  SentenceVector embed_sentence(const Sentence& s) const override {
    if (s.tokens.empty()) fail(Errc::EmptySentence, "sentence " + std::to_string(s.id) + " has no tokens");
    const TokenVectors tv = embed_tokens(s);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(cfg_.d_raw);
    for (Eigen::Index r = 0; r < tv.rows.rows(); ++r) mean += tv.rows.row(r).transpose();
    mean /= static_cast<double>(tv.rows.rows());
    return {s.id, std::move(mean)};
  }

 private:
  EmbeddingProviderConfig cfg_;
};

/// One record of the external vector file.
struct ExternalRecord {
  SentenceId id = 0;
  std::vector<double> sent;
  std::vector<std::vector<double>> tok;
};

/// Serves precomputed (e.g. language-model) vectors keyed by sentence id.
class ExternalVectors final : public EmbeddingProvider {
 public:
  explicit ExternalVectors(std::vector<ExternalRecord> records) {
    for (auto& r : records) {
      if (dim_ == 0) dim_ = r.sent.size();
      if (r.sent.size() != dim_ || dim_ == 0) fail(Errc::FormatError, "inconsistent sentence vector width");
      for (const auto& row : r.tok)
        if (row.size() != dim_) fail(Errc::FormatError, "inconsistent token vector width");
      const SentenceId id = r.id;
      if (!records_.emplace(id, std::move(r)).second)
        fail(Errc::FormatError, "duplicate record id " + std::to_string(id));
    }
  }

  std::size_t dim() const override { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool contains(SentenceId id) const { return records_.count(id) != 0; }

  EmbeddingProviderConfig config() const override {
    EmbeddingProviderConfig c;
    c.kind = EmbeddingProviderConfig::Kind::external;
    c.d_raw = static_cast<std::uint32_t>(dim_);
    c.window = 0;
    return c;
  }

  TokenVectors embed_tokens(const Sentence& s) const override {
    const ExternalRecord& r = lookup(s.id);
    if (r.tok.size() != s.tokens.size())
      fail(Errc::DimensionMismatch, "sentence " + std::to_string(s.id) + ": token vector count mismatch");
    TokenVectors out{s.id, Eigen::MatrixXd(static_cast<Eigen::Index>(r.tok.size()), static_cast<Eigen::Index>(dim_))};
    for (std::size_t i = 0; i < r.tok.size(); ++i)
      for (std::size_t c = 0; c < dim_; ++c)
        out.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = r.tok[i][c];
    return out;
  }

  SentenceVector embed_sentence(const Sentence& s) const override {
    if (s.tokens.empty()) fail(Errc::EmptySentence, "sentence " + std::to_string(s.id) + " has no tokens");
    const ExternalRecord& r = lookup(s.id);
    return {s.id, Eigen::Map<const Eigen::VectorXd>(r.sent.data(), static_cast<Eigen::Index>(r.sent.size()))};
  }

 private:
  const ExternalRecord& lookup(SentenceId id) const {
    auto it = records_.find(id);
    if (it == records_.end()) fail(Errc::MissingExternalVector, "no external vector for sentence " + std::to_string(id));
    return it->second;
  }

  std::unordered_map<SentenceId, ExternalRecord> records_;
  std::size_t dim_ = 0;
};

/// Newline-delimited `{"id": int, "sent": [...], "tok": [[...], ...]}`.
/// Doubles are printed shortest-round-trip, so write/read is bit exact.
inline void write_external_vectors(std::ostream& out, const std::vector<ExternalRecord>& records) {
  for (const auto& r : records) {
    nlohmann::json j;
    j["id"] = r.id;
    j["sent"] = r.sent;
    j["tok"] = r.tok;
    out << j.dump() << '\n';
  }
}

inline std::vector<ExternalRecord> read_external_records(std::istream& in) {
  std::vector<ExternalRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ExternalRecord r;
      r.id = j.at("id").get<SentenceId>();
      r.sent = j.at("sent").get<std::vector<double>>();
      if (j.contains("tok")) r.tok = j.at("tok").get<std::vector<std::vector<double>>>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::FormatError, "vector file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline std::unique_ptr<ExternalVectors> load_external_vectors(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot open vector file '" + path + "'");
  return std::make_unique<ExternalVectors>(read_external_records(in));
}

}  // namespace nes
