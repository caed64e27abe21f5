#pragma once

#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "nes/binary_io.hpp"
#include "nes/corpus.hpp"
#include "nes/error.hpp"
#include "nes/text.hpp"

namespace nes {

struct IngestOptions {
  SentenceId first_id = 0;
  std::string default_doc_id = "doc";
};

namespace detail {

inline std::int32_t parse_int(const std::string& s, std::size_t line_no) {
  if (s.empty()) fail(Errc::MalformedLine, "line " + std::to_string(line_no) + ": empty integer field");
  std::int64_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9')
      fail(Errc::MalformedLine, "line " + std::to_string(line_no) + ": bad integer '" + s + "'");
    v = v * 10 + (c - '0');
    if (v > INT32_MAX) fail(Errc::MalformedLine, "line " + std::to_string(line_no) + ": integer overflow");
  }
  return static_cast<std::int32_t>(v);
}

struct SentenceBuilder {
  Sentence sentence;
  std::vector<bool> space_after;
  // Index into sentence.entities of the span still open at the previous token.
  std::optional<std::size_t> open_entity;

  void add_entity(std::uint32_t tok, const std::string& value) {
    std::string label = value;
    bool continuation = false;
    if (label.rfind("I-", 0) == 0) {
      label = label.substr(2);
      continuation = true;
    } else if (label.rfind("B-", 0) == 0) {
      label = label.substr(2);
    }
    auto& ents = sentence.entities;
    if (continuation && open_entity && ents[*open_entity].label == label && ents[*open_entity].end == tok) {
      ents[*open_entity].end = tok + 1;
      return;
    }
    ents.push_back(EntitySpan{tok, tok + 1, label});
    open_entity = ents.size() - 1;
  }

  Sentence finish() {
    std::string txt;
    for (std::size_t i = 0; i < sentence.tokens.size(); ++i) {
      txt += sentence.tokens[i].surface;
      if (i + 1 < sentence.tokens.size() && space_after[i]) txt.push_back(' ');
    }
    sentence.text = std::move(txt);
    validate_sentence(sentence);
    return std::move(sentence);
  }
};

}  // namespace detail

/// Reads CoNLL-U. Entities ride the MISC column as `Entity=LABEL` (begin) and
/// `Entity=I-LABEL` (continuation). `# newdoc id = X` sets the document id;
/// every other comment is ignored. Multiword-token and empty-node lines are
/// skipped.
inline Corpus ingest_conllu(std::istream& in, const IngestOptions& options = {}) {
  std::vector<Sentence> out;
  std::string doc_id = options.default_doc_id;
  SentenceId next_id = options.first_id;
  std::optional<detail::SentenceBuilder> cur;
  std::string line;
  std::size_t line_no = 0;

  auto flush = [&] {
    if (cur && !cur->sentence.tokens.empty()) out.push_back(cur->finish());
    cur.reset();
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) {
      flush();
      continue;
    }
    if (line[0] == '#') {
      constexpr std::string_view kNewdoc = "# newdoc id = ";
      if (line.rfind(kNewdoc, 0) == 0) doc_id = std::string(text::trim(line.substr(kNewdoc.size())));
      continue;
    }
    auto cols = text::split(line, '\t');
    if (cols.size() != 10)
      fail(Errc::MalformedLine,
           "line " + std::to_string(line_no) + ": expected 10 columns, got " + std::to_string(cols.size()));
    if (cols[0].find_first_of("-.") != std::string::npos) continue;
    if (!cur) {
      cur.emplace();
      cur->sentence.id = next_id++;
      cur->sentence.doc_id = doc_id;
    }
    auto& b = *cur;
    const std::int32_t idx = detail::parse_int(cols[0], line_no);
    if (idx != static_cast<std::int32_t>(b.sentence.tokens.size()) + 1)
      fail(Errc::MalformedLine, "line " + std::to_string(line_no) + ": token id out of sequence");
    const std::int32_t head = detail::parse_int(cols[6], line_no);
    Token t{cols[1], cols[2], cols[3], head == 0 ? kRoot : head - 1, cols[7]};
    const auto tok = static_cast<std::uint32_t>(b.sentence.tokens.size());
    b.sentence.tokens.push_back(std::move(t));
    bool space = true;
    bool saw_entity = false;
    if (cols[9] != "_") {
      for (const auto& attr : text::split(cols[9], '|')) {
        if (attr.rfind("Entity=", 0) == 0) {
          b.add_entity(tok, attr.substr(7));
          saw_entity = true;
        } else if (attr == "SpaceAfter=No") {
          space = false;
        }
      }
    }
    if (!saw_entity) b.open_entity.reset();
    b.space_after.push_back(space);
  }
  flush();
  return Corpus(std::move(out));
}

inline Corpus ingest_conllu_text(const std::string& data, const IngestOptions& options = {}) {
  std::istringstream in(data);
  return ingest_conllu(in, options);
}

/// Writes sentences back as CoNLL-U in the dialect `ingest_conllu` reads.
inline void write_conllu(const std::vector<Sentence>& sentences, std::ostream& out) {
  const std::string* last_doc = nullptr;
  for (const Sentence& s : sentences) {
    if (!last_doc || *last_doc != s.doc_id) out << "# newdoc id = " << s.doc_id << '\n';
    last_doc = &s.doc_id;
    out << "# sent_id = " << s.id << '\n';
    out << "# text = " << s.text << '\n';
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      const Token& t = s.tokens[i];
      std::vector<std::string> misc;
      for (const auto& e : s.entities) {
        if (e.start == i) misc.push_back("Entity=" + e.label);
        else if (e.start < i && i < e.end) misc.push_back("Entity=I-" + e.label);
      }
      cursor += t.surface.size();
      if (i + 1 < s.tokens.size()) {
        if (cursor < s.text.size() && s.text[cursor] == ' ') ++cursor;
        else misc.push_back("SpaceAfter=No");
      }
      std::string misc_col;
      for (const auto& m : misc) misc_col += (misc_col.empty() ? "" : "|") + m;
      out << (i + 1) << '\t' << t.surface << '\t' << t.lemma << '\t' << t.pos << "\t_\t_\t"
          << (t.head == kRoot ? 0 : t.head + 1) << '\t' << t.deprel << "\t_\t"
          << (misc_col.empty() ? "_" : misc_col) << '\n';
    }
    out << '\n';
  }
}

inline std::string to_conllu(const std::vector<Sentence>& sentences) {
  std::ostringstream out;
  write_conllu(sentences, out);
  return out.str();
}

// ---- NESC1 snapshot ------------------------------------------------------

inline constexpr std::string_view kCorpusMagic = "NESC1";
inline constexpr std::uint8_t kCorpusVersion = 1;

inline std::string save_corpus(const Corpus& corpus) {
  std::string out;
  bin::Writer w(out);
  w.raw(kCorpusMagic);
  w.u8(kCorpusVersion);
  w.u64(corpus.size());
  for (const Sentence& s : corpus.sentences()) {
    std::string rec;
    bin::Writer r(rec);
    r.u64(s.id);
    r.str(s.doc_id);
    r.str(s.text);
    r.u32(static_cast<std::uint32_t>(s.tokens.size()));
    for (const Token& t : s.tokens) {
      r.str(t.surface);
      r.str(t.lemma);
      r.str(t.pos);
      r.i32(t.head);
      r.str(t.deprel);
    }
    r.u32(static_cast<std::uint32_t>(s.entities.size()));
    for (const EntitySpan& e : s.entities) {
      r.u32(e.start);
      r.u32(e.end);
      r.str(e.label);
    }
    w.str(rec);
  }
  return out;
}

inline Corpus load_corpus(std::string_view bytes) {
  bin::Reader r(bytes);
  if (bytes.size() < kCorpusMagic.size() || r.raw(kCorpusMagic.size()) != kCorpusMagic)
    fail(Errc::FormatError, "not a NESC1 corpus snapshot");
  if (r.u8() != kCorpusVersion) fail(Errc::FormatError, "unsupported corpus snapshot version");
  const std::uint64_t n = r.u64();
  std::vector<Sentence> sentences;
  sentences.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 20)));
  for (std::uint64_t k = 0; k < n; ++k) {
    const std::string rec = r.str();
    bin::Reader p(rec);
    Sentence s;
    s.id = p.u64();
    s.doc_id = p.str();
    s.text = p.str();
    const std::uint32_t nt = p.u32();
    for (std::uint32_t i = 0; i < nt; ++i) {
      Token t;
      t.surface = p.str();
      t.lemma = p.str();
      t.pos = p.str();
      t.head = p.i32();
      t.deprel = p.str();
      s.tokens.push_back(std::move(t));
    }
    const std::uint32_t ne = p.u32();
    for (std::uint32_t i = 0; i < ne; ++i) {
      EntitySpan e;
      e.start = p.u32();
      e.end = p.u32();
      e.label = p.str();
      s.entities.push_back(std::move(e));
    }
    if (!p.done()) fail(Errc::FormatError, "trailing bytes in sentence record");
    sentences.push_back(std::move(s));
  }
  if (!r.done()) fail(Errc::FormatError, "trailing bytes after corpus snapshot");
  return Corpus(std::move(sentences));
}

inline void save_corpus_file(const Corpus& corpus, const std::string& path) {
  bin::write_file(path, save_corpus(corpus));
}

inline Corpus load_corpus_file(const std::string& path) {
  return load_corpus(bin::read_file(path, Errc::UnknownCorpus));
}

}  // namespace nes
