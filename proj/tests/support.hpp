#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "nes/nes.hpp"

namespace nes::test {

// "X causes Y ." with causes as root.
inline const char* kCausesConllu =
    "1\tX\tX\tPROPN\t_\t_\t2\tnsubj\t_\t_\n"
    "2\tcauses\tcause\tVERB\t_\t_\t0\troot\t_\t_\n"
    "3\tY\tY\tPROPN\t_\t_\t2\tobj\t_\tSpaceAfter=No\n"
    "4\t.\t.\tPUNCT\t_\t_\t2\tpunct\t_\t_\n\n";

inline Token tok(std::string w, std::string lemma, std::string pos, std::int32_t head, std::string dep) {
  return {std::move(w), std::move(lemma), std::move(pos), head, std::move(dep)};
}

inline Sentence make_sentence(SentenceId id, std::vector<Token> toks, std::vector<EntitySpan> ents = {}) {
  Sentence s;
  s.id = id;
  s.doc_id = "d";
  s.tokens = std::move(toks);
  s.entities = std::move(ents);
  for (std::size_t i = 0; i < s.tokens.size(); ++i) s.text += (i ? " " : "") + s.tokens[i].surface;
  return s;
}

/// "Bacteremia treatment with penicillin and ceftriaxone"
inline Sentence bacteremia(SentenceId id, std::vector<EntitySpan> ents) {
  return make_sentence(id,
                       {tok("Bacteremia", "bacteremia", "NOUN", 1, "nsubj"), tok("treatment", "treatment", "NOUN", kRoot, "root"),
                        tok("with", "with", "ADP", 3, "case"), tok("penicillin", "penicillin", "NOUN", 1, "nmod"),
                        tok("and", "and", "CCONJ", 5, "cc"), tok("ceftriaxone", "ceftriaxone", "NOUN", 3, "conj")},
                       std::move(ents));
}

inline SynthSpec small_spec(std::uint32_t sentences = 1000, std::uint64_t seed = 42) {
  SynthSpec spec;
  spec.seed = seed;
  spec.sentences = sentences;
  return spec;
}

inline const SynthCorpus& synth_1000() {
  static const SynthCorpus sc = synth_corpus(small_spec());
  return sc;
}

inline const Corpus& corpus_1000() {
  static const Corpus c(synth_1000().sentences);
  return c;
}

// ---- oracles -------------------------------------------------------------

/// Full scan: ids of sentences whose tokens / entities carry the key.
inline std::vector<SentenceId> scan_ids(const Corpus& c, KeyKind kind, const std::string& key) {
  std::vector<SentenceId> out;
  for (const auto& s : c.sentences()) {
    bool hit = false;
    for (const auto& t : s.tokens) {
      if (kind == KeyKind::word && text::iequals(t.surface, key)) hit = true;
      if (kind == KeyKind::lemma && text::iequals(t.lemma, key)) hit = true;
    }
    if (kind == KeyKind::entity)
      for (const auto& e : s.entities) hit |= e.label == key;
    if (hit) out.push_back(s.id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Sorts every row's distance against `q` with a plain double loop.
inline std::vector<Neighbor> naive_knn(const std::vector<SentenceId>& ids, const std::vector<std::vector<float>>& data,
                                       const std::vector<float>& q, std::size_t k) {
  std::vector<Neighbor> all;
  for (std::size_t i = 0; i < data.size(); ++i) {
    double d = 0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      const double diff = static_cast<double>(data[i][j]) - static_cast<double>(q[j]);
      d += diff * diff;
    }
    all.push_back({ids[i], d});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

/// Cyclic Jacobi eigenvalue iteration for symmetric matrices; eigenvalues descending.
inline std::vector<double> jacobi_eigenvalues(Eigen::MatrixXd a, int sweeps = 100) {
  const Eigen::Index n = a.rows();
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    double off = 0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-22) break;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) ev[static_cast<std::size_t>(i)] = a(i, i);
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

/// Smallest k whose leading eigenvalues reach `target` of the total.
inline std::size_t components_for(const std::vector<double>& ev, double target) {
  double total = 0;
  for (double v : ev) total += std::max(v, 0.0);
  double acc = 0;
  for (std::size_t k = 0; k < ev.size(); ++k) {
    acc += std::max(ev[k], 0.0);
    if (acc / total >= target) return k + 1;
  }
  return ev.size();
}

inline Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& x) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd c = x.rowwise() - mean;
  return c.transpose() * c / static_cast<double>(x.rows() - 1);
}

/// Data with a prescribed spectrum: column j scaled by sqrt(spectrum[j]),
/// then rotated by a random orthogonal matrix.
inline Eigen::MatrixXd planted_spectrum(const std::vector<double>& spectrum, std::size_t rows, std::uint64_t seed) {
  Rng rng(seed);
  const auto d = static_cast<Eigen::Index>(spectrum.size());
  Eigen::MatrixXd z(static_cast<Eigen::Index>(rows), d);
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < d; ++j) z(i, j) = rng.normal() * std::sqrt(spectrum[static_cast<std::size_t>(j)]);
  Eigen::MatrixXd g(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) g(i, j) = rng.normal();
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  return z * q.transpose();
}

/// Every contiguous span of length <= max_len with its Euclidean distance to
/// `anchor` after projection; the closest non-gold span, ties to the earliest.
inline std::pair<Span, double> exhaustive_hardest_negative(const AlignModel& m, const Eigen::MatrixXd& rows,
                                                           const Span& gold, const Eigen::VectorXd& anchor,
                                                           std::size_t max_len) {
  Span best{};
  double best_d = INFINITY;
  const auto n = static_cast<std::uint32_t>(rows.rows());
  for (std::uint32_t s = 0; s < n; ++s)
    for (std::uint32_t e = s + 1; e <= n && e - s <= max_len; ++e) {
      if (Span{s, e} == gold) continue;
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(rows.cols());
      for (std::uint32_t i = s; i < e; ++i) mean += rows.row(i).transpose();
      mean /= static_cast<double>(e - s);
      const double d = (m.projection * mean - anchor).norm();
      if (d < best_d) {
        best_d = d;
        best = {s, e};
      }
    }
  return {best, best_d};
}

/// Summed hinge loss with negatives held fixed, computed straight from the
/// definition (used as the finite-difference target).
inline double frozen_loss(const Eigen::MatrixXd& P, const AlignExample& ex, const std::vector<Span>& negatives,
                          double margin) {
  auto mean = [](const Eigen::MatrixXd& rows, Span s) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(rows.cols());
    for (std::uint32_t i = s.start; i < s.end; ++i) v += rows.row(i).transpose();
    return Eigen::VectorXd(v / static_cast<double>(s.end - s.start));
  };
  double total = 0;
  for (std::size_t a = 0; a < ex.s1_args.size(); ++a) {
    const Eigen::VectorXd h = P * mean(ex.s1_rows, ex.s1_args[a]);
    const double dp = (h - P * mean(ex.s2_rows, ex.s2_gold[a])).norm();
    const double dn = (h - P * mean(ex.s2_rows, negatives[a])).norm();
    total += std::max(0.0, dp - dn + margin);
  }
  return total;
}

/// Random dense alignment instance: token rows uniform in [-1, 1], two
/// disjoint args on each side.
inline AlignExample random_align_example(Rng& rng, std::size_t d) {
  auto rows = [&](std::size_t n) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-1, 1);
    return m;
  };
  auto args = [&](std::uint32_t n) {
    const std::uint32_t cut = 1 + static_cast<std::uint32_t>(rng.below(n - 1));
    const std::uint32_t a = static_cast<std::uint32_t>(rng.below(cut));
    const std::uint32_t b = cut + static_cast<std::uint32_t>(rng.below(n - cut));
    return std::vector<Span>{{a, a + 1 + static_cast<std::uint32_t>(rng.below(std::min<std::uint32_t>(2, cut - a)))},
                             {b, b + 1}};
  };
  const auto n1 = static_cast<std::uint32_t>(4 + rng.below(5)), n2 = static_cast<std::uint32_t>(4 + rng.below(5));
  return AlignExample{rows(n1), rows(n2), args(n1), args(n2)};
}

/// Worst entrywise gap between the analytic gradient and central differences,
/// relative to the largest finite-difference entry.
inline double gradient_relative_error(const AlignModel& m, const AlignExample& ex, double eps = 1e-6) {
  const TripletTerms terms = pair_loss(m, ex);
  const Eigen::MatrixXd g = loss_gradient(m, ex);
  Eigen::MatrixXd fd(g.rows(), g.cols());
  Eigen::MatrixXd P = m.projection;
  for (Eigen::Index i = 0; i < P.rows(); ++i)
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
      const double keep = P(i, j);
      P(i, j) = keep + eps;
      const double up = frozen_loss(P, ex, terms.negatives, m.config.margin);
      P(i, j) = keep - eps;
      const double down = frozen_loss(P, ex, terms.negatives, m.config.margin);
      P(i, j) = keep;
      fd(i, j) = (up - down) / (2 * eps);
    }
  const double scale = std::max(fd.cwiseAbs().maxCoeff(), 1e-12);
  return (g - fd).cwiseAbs().maxCoeff() / scale;
}

/// Random connected subtree (1..max_nodes) of a random corpus sentence with
/// mixed constraints; some are perturbed so the pattern may match nothing.
inline SyntacticPattern random_pattern(const Corpus& c, Rng& rng, std::size_t max_nodes = 4) {
  const Sentence& s = c.sentences()[rng.below(c.size())];
  const std::size_t want = 1 + rng.below(std::min(max_nodes, s.size()));
  std::vector<std::uint32_t> members{static_cast<std::uint32_t>(rng.below(s.size()))};
  while (members.size() < want) {
    std::vector<std::uint32_t> frontier;
    for (std::uint32_t m : members) {
      if (s.tokens[m].head != kRoot) frontier.push_back(static_cast<std::uint32_t>(s.tokens[m].head));
      for (std::uint32_t k : s.children(m)) frontier.push_back(k);
    }
    std::erase_if(frontier, [&](std::uint32_t t) { return std::find(members.begin(), members.end(), t) != members.end(); });
    if (frontier.empty()) break;
    members.push_back(frontier[rng.below(frontier.size())]);
  }
  std::sort(members.begin(), members.end());
  SyntacticPattern p;
  std::map<std::uint32_t, std::uint32_t> node_of;
  int captures = 0;
  for (std::uint32_t t : members) {
    node_of[t] = static_cast<std::uint32_t>(p.nodes.size());
    PatternNode n;
    n.source_token = t;
    switch (rng.below(5)) {
      case 0: break;  // wildcard
      case 1: n.lemma = s.tokens[t].lemma; break;
      case 2: n.word = s.tokens[t].surface; break;
      case 3:
        n.word = s.tokens[t].surface;
        n.lemma = s.tokens[t].lemma;
        break;
      default:
        if (const std::string* l = s.entity_at(t)) n.entity = *l;
        else n.lemma = s.tokens[t].lemma;
    }
    if (rng.below(2)) n.capture = "c" + std::to_string(captures++);
    p.nodes.push_back(std::move(n));
  }
  std::uint32_t top = members.front();
  for (std::uint32_t t : members) {
    const std::int32_t h = s.tokens[t].head;
    if (h == kRoot || !node_of.count(static_cast<std::uint32_t>(h))) top = t;
  }
  p.root = node_of[top];
  for (std::uint32_t t : members)
    if (t != top) p.edges.push_back({node_of[static_cast<std::uint32_t>(s.tokens[t].head)], node_of[t], s.tokens[t].deprel});
  // Occasionally perturb one constraint.
  if (rng.below(5) == 0 && !p.edges.empty()) p.edges[rng.below(p.edges.size())].deprel = "nmod";
  if (rng.below(5) == 0) p.nodes[rng.below(p.nodes.size())].lemma = "the";
  return p;
}

/// Isotropic Gaussian blobs: `centers` means drawn N(0, spread^2), unit noise.
inline std::vector<std::vector<float>> gaussian_mixture(std::size_t n, std::size_t d, std::size_t centers, double spread,
                                                        std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> means(centers, std::vector<double>(d));
  for (auto& m : means)
    for (auto& x : m) x = rng.normal() * spread;
  std::vector<std::vector<float>> out(n, std::vector<float>(d));
  for (auto& v : out) {
    const auto& m = means[rng.below(centers)];
    for (std::size_t j = 0; j < d; ++j) v[j] = static_cast<float>(m[j] + rng.normal());
  }
  return out;
}

inline std::vector<std::vector<float>> random_vectors(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<float>> out(n, std::vector<float>(d));
  for (auto& v : out)
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return out;
}

inline std::vector<SentenceId> iota_ids(std::size_t n) {
  std::vector<SentenceId> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  return ids;
}

/// Index and a lightly trained model over corpus_1000(), built once.
struct Pipeline {
  HashEmbedder embedder{EmbeddingProviderConfig{}};
  IndexBundle index;
  AlignModel model;

  SearchContext context() const { return {&corpus_1000(), &index, &embedder, &model}; }
};

inline const Pipeline& pipeline_1000() {
  static const Pipeline p = [] {
    Pipeline out;
    BuildIndexOptions opt;
    opt.clusters = 16;
    out.index = build_index(corpus_1000(), out.embedder, opt);
    std::map<std::string, std::vector<SyntacticPattern>> rel;
    for (const auto& q : synth_1000().queries) rel[q.relation].push_back(compile_by_example(q.query, corpus_1000()));
    TrainConfig cfg;
    cfg.epochs = 10;
    out.model = train(build_pairs(rel, corpus_1000(), 30, {}, 0).train, out.embedder, cfg).model;
    return out;
  }();
  return p;
}

/// Non-owning shared_ptr for long-lived fixtures.
template <class T>
std::shared_ptr<const T> borrow(const T& x) {
  return std::shared_ptr<const T>(&x, [](const T*) {});
}

/// Service on an ephemeral loopback port, served from a background thread.
class TestServer {
 public:
  explicit TestServer(ServiceState state) : service_(std::move(state)) {
    port_ = service_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { service_.listen_after_bind(); });
    service_.wait_until_ready();
  }
  ~TestServer() {
    service_.stop();
    thread_.join();
  }
  int port() const { return port_; }
  Service& service() { return service_; }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(600, 0);
    return c;
  }

 private:
  Service service_;
  int port_ = 0;
  std::thread thread_;
};

/// One streamed POST: lines as they arrive, with arrival times from send.
struct StreamedResponse {
  int status = 0;
  std::string session;
  std::string body;
  std::vector<std::string> lines;
  std::vector<double> line_ms;
};

inline StreamedResponse stream_post(httplib::Client& cli, const std::string& path, const std::string& body,
                                    std::function<bool(const std::string&)> on_line = nullptr) {
  StreamedResponse out;
  std::string pending;
  const auto t0 = std::chrono::steady_clock::now();
  httplib::Request req;
  req.method = "POST";
  req.path = path;
  req.body = body;
  req.set_header("Content-Type", "application/json");
  req.response_handler = [&](const httplib::Response& r) {
    out.status = r.status;
    out.session = r.get_header_value("X-Session-Id");
    return true;
  };
  req.content_receiver = [&](const char* data, std::size_t n, std::uint64_t, std::uint64_t) {
    out.body.append(data, n);
    pending.append(data, n);
    for (std::size_t nl; (nl = pending.find('\n')) != std::string::npos;) {
      out.lines.push_back(pending.substr(0, nl));
      out.line_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
      pending.erase(0, nl + 1);
      if (on_line && !on_line(out.lines.back())) return false;
    }
    return true;
  };
  cli.send(req);
  return out;
}

/// First `n` sentences of a corpus.
inline Corpus prefix_corpus(const Corpus& c, std::size_t n) {
  std::vector<Sentence> ss(c.sentences().begin(), c.sentences().begin() + static_cast<std::ptrdiff_t>(std::min(n, c.size())));
  return Corpus(std::move(ss));
}

}  // namespace nes::test
