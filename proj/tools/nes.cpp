// nes: command-line entry points for the extractive search engine.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "nes/nes.hpp"

namespace fs = std::filesystem;
using namespace nes;

namespace {

std::string read_text(const std::string& path, Errc missing = Errc::IoError) { return bin::read_file(path, missing); }

void write_text(const std::string& path, const std::string& data) {
  if (path == "-") {
    std::cout << data;
    return;
  }
  bin::write_file(path, data);
}

Corpus open_corpus(const std::string& path) {
  if (path.size() > 7 && path.ends_with(".conllu")) {
    std::ifstream in(path);
    if (!in) fail(Errc::UnknownCorpus, "cannot open corpus '" + path + "'");
    return ingest_conllu(in);
  }
  return load_corpus_file(path);
}

std::unique_ptr<EmbeddingProvider> make_provider(const EmbeddingProviderConfig& cfg, const std::string& vectors) {
  if (cfg.kind == EmbeddingProviderConfig::Kind::external || !vectors.empty()) {
    if (vectors.empty()) fail(Errc::MissingExternalVector, "index was built from external vectors; pass --vectors");
    return load_external_vectors(vectors);
  }
  return std::make_unique<HashEmbedder>(cfg);
}

std::vector<RelationQuery> read_relation_queries(const std::string& path) {
  std::istringstream in(read_text(path));
  std::vector<RelationQuery> out;
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("relation") || !j.contains("query"))
      fail(Errc::FormatError, "relation file lines need 'relation' and 'query'");
    out.push_back({j["relation"].get<std::string>(), 0, j["query"].get<std::string>()});
  }
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoError, "cannot open '" + path + "'");
  return in;
}

int exit_code(Errc c) {
  switch (c) {
    case Errc::UnknownCorpus:
    case Errc::IoError:
    case Errc::FormatError: return 2;
    default: return 1;
  }
}

// Flat JSON config: keys name long flags of the selected subcommand; values
// fill options the command line left unset.
void apply_config(CLI::App* cmd, const std::string& path) {
  const auto j = nlohmann::json::parse(read_text(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail(Errc::FormatError, "config must be a flat JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "config") continue;
    CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (!opt) fail(Errc::InvalidArgument, "unknown config key '" + key + "'");
    if (opt->count() > 0) continue;
    auto add = [&](const nlohmann::json& v) {
      opt->add_result(v.is_string() ? v.get<std::string>() : v.dump());
    };
    if (value.is_array()) {
      for (const auto& v : value) add(v);
    } else {
      add(value);
    }
    opt->run_callback();
  }
}

struct Embed {
  std::uint32_t d_raw = 256;
  std::uint32_t window = 2;
  std::uint64_t seed = 0;
  std::string vectors;

  void bind(CLI::App* c) {
    c->add_option("--d-raw", d_raw, "hash embedding width");
    c->add_option("--window", window, "hash context half-width");
    c->add_option("--embed-seed", seed, "hash salt");
    c->add_option("--vectors", vectors, "external vector file (JSONL)");
  }
  EmbeddingProviderConfig config() const {
    EmbeddingProviderConfig c;
    c.d_raw = d_raw;
    c.window = window;
    c.seed = seed;
    return c;
  }
};

// Effective value of every option of the selected command, flags or defaults.
void print_resolved(const CLI::App* cmd) {
  std::cerr << "# " << cmd->get_name() << '\n';
  for (const CLI::Option* opt : cmd->get_options()) {
    if (opt->get_name() == "--help") continue;
    std::string value = opt->get_expected_min() == 0 ? "false" : opt->get_default_str();
    if (opt->count() > 0) {
      value.clear();
      for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
    }
    std::string name = opt->get_name(false, true);
    while (!name.empty() && name.front() == '-') name.erase(0, 1);
    std::cerr << name << " = " << value << '\n';
  }
}

void print_search_results(const std::vector<ExtractionResult>& results) {
  for (const auto& r : results) std::cout << json::to_json(r).dump() << '\n';
}

std::string aggregate_tsv(const CaptureTable& t) {
  std::string out;
  for (const auto& [slot, values] : t.slots) {
    out += "# " + slot + "\n";
    for (const auto& v : values) out += v.value + "\t" + std::to_string(v.count) + "\n";
  }
  for (const auto& [key, values] : t.pairs) {
    out += "# " + key.first + " x " + key.second + "\n";
    for (const auto& v : values) out += v.first + "\t" + v.second + "\t" + std::to_string(v.count) + "\n";
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nes: neural extractive search"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();
  std::string config_path;
  app.add_option("--config", config_path, "flat JSON config; flags override it");

  // synth
  SynthSpec spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a labeled synthetic relation corpus");
  synth->add_option("--seed", spec.seed);
  synth->add_option("--relations", spec.relations);
  synth->add_option("--templates", spec.templates_per_relation);
  synth->add_option("--sentences", spec.sentences);
  synth->add_option("--arg-vocab", spec.arg_vocab);
  synth->add_option("--context-vocab", spec.context_vocab);
  synth->add_option("--topic-words", spec.topic_words);
  synth->add_option("--topic-vocab", spec.topic_vocab);
  synth->add_option("--out", synth_out, "output directory (corpus.conllu, gold.jsonl, relations.jsonl)")->required();

  // ingest
  std::string ingest_in, ingest_out;
  auto* ingest = app.add_subcommand("ingest", "CoNLL-U -> corpus snapshot");
  ingest->add_option("input", ingest_in, "CoNLL-U file")->required();
  ingest->add_option("--out", ingest_out, "snapshot path")->required();

  // build-index
  std::string bi_corpus, bi_out, metric_name = "l2";
  BuildIndexOptions bi;
  Embed bi_embed;
  auto* build = app.add_subcommand("build-index", "embed, reduce and index every sentence");
  build->add_option("--corpus", bi_corpus)->required();
  build->add_option("--out", bi_out)->required();
  build->add_option("--variance", bi.target_variance, "retained variance");
  build->add_option("--clusters", bi.clusters);
  build->add_option("--kmeans-iters", bi.kmeans_iters);
  build->add_option("--seed", bi.seed);
  build->add_option("--nprobe", bi.default_nprobe);
  build->add_option("--metric", metric_name)->check(CLI::IsMember({"l2", "cosine"}));
  bi_embed.bind(build);

  // train-align
  std::string ta_corpus, ta_relations, ta_out, ta_index, ta_dev_gold, ta_dev_pred;
  std::vector<std::string> ta_dev;
  std::size_t ta_per = 200;
  std::uint64_t ta_pair_seed = 0;
  TrainConfig tc;
  Embed ta_embed;
  auto* ta = app.add_subcommand("train-align", "train the span alignment projection");
  ta->add_option("--corpus", ta_corpus)->required();
  ta->add_option("--relations", ta_relations, "relation query file (JSONL)")->required();
  ta->add_option("--out", ta_out)->required();
  ta->add_option("--index", ta_index, "take embedding settings from this index");
  ta->add_option("--dev-relations", ta_dev, "relations held out of training")->delimiter(',');
  ta->add_option("--per-relation", ta_per, "sentence pairs sampled per relation");
  ta->add_option("--pair-seed", ta_pair_seed);
  ta->add_option("--epochs", tc.epochs);
  ta->add_option("--lr", tc.learning_rate);
  ta->add_option("--margin", tc.margin);
  ta->add_option("--max-span-len", tc.max_span_len);
  ta->add_option("--seed", tc.seed);
  ta->add_option("--dev-gold", ta_dev_gold, "write held-out gold spans (JSONL)");
  ta->add_option("--dev-pred", ta_dev_pred, "write held-out predictions (JSONL)");
  ta_embed.bind(ta);

  // search
  std::string s_query, s_corpus, s_mode = "subtree";
  std::size_t s_limit = 0;
  bool s_aggregate = false;
  auto* search = app.add_subcommand("search", "symbolic search; results in id order");
  search->add_option("query", s_query)->required();
  search->add_option("--corpus", s_corpus)->required();
  search->add_option("--limit", s_limit, "0 = unlimited");
  search->add_option("--mode", s_mode)->check(CLI::IsMember({"token", "subtree"}));
  search->add_flag("--aggregate", s_aggregate, "print count-ranked tables instead of matches");

  // neural-search
  std::string n_query, n_corpus, n_index, n_model, n_mode = "subtree", n_keyword, n_vectors;
  SessionConfig n_cfg;
  auto* neural = app.add_subcommand("neural-search", "stream symbolic then neural results as NDJSON");
  neural->add_option("query", n_query)->required();
  neural->add_option("--corpus", n_corpus)->required();
  neural->add_option("--index", n_index)->required();
  neural->add_option("--model", n_model)->required();
  neural->add_option("--vectors", n_vectors);
  neural->add_option("--k", n_cfg.k);
  neural->add_option("--pool-cap", n_cfg.pool_cap);
  neural->add_option("--keyword", n_keyword);
  neural->add_option("--mode", n_mode)->check(CLI::IsMember({"token", "subtree"}));
  neural->add_option("--nprobe", n_cfg.nprobe, "0 = exact search");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluation protocols");
  eval->require_subcommand(1);
  std::string e_results, e_labels, e_summary, e_pred, e_gold, e_corpus;
  auto* rel = eval->add_subcommand("relevancy", "relevance by rank bucket");
  rel->add_option("--results", e_results, "JSONL {relation, ids}")->required();
  rel->add_option("--labels", e_labels)->required();
  rel->add_option("--summary", e_summary, "machine-readable summary path");
  auto* al = eval->add_subcommand("alignment", "subset-criterion alignment accuracy");
  al->add_option("--pred", e_pred)->required();
  al->add_option("--gold", e_gold)->required();
  al->add_option("--corpus", e_corpus, "bounds-check spans against this corpus");
  al->add_option("--summary", e_summary);
  std::string c_query, c_relation, c_relations, c_index, c_model, c_vectors;
  SessionConfig c_cfg;
  c_cfg.k = 300;
  c_cfg.capture_display_mode = CaptureMode::token;
  auto* cmp = eval->add_subcommand("compare", "symbolic vs neural counts for one query");
  cmp->add_option("--corpus", e_corpus)->required();
  cmp->add_option("--index", c_index)->required();
  cmp->add_option("--model", c_model)->required();
  cmp->add_option("--vectors", c_vectors);
  cmp->add_option("--labels", e_labels)->required();
  cmp->add_option("--relation", c_relation)->required();
  cmp->add_option("--query", c_query, "defaults to the relation's first query in --relations");
  cmp->add_option("--relations", c_relations);
  cmp->add_option("--k", c_cfg.k);
  cmp->add_option("--pool-cap", c_cfg.pool_cap);
  cmp->add_option("--summary", e_summary);

  // serve
  std::string v_corpus, v_index, v_model, v_host = "127.0.0.1", v_vectors;
  int v_port = kDefaultPort;
  auto* serve = app.add_subcommand("serve", "HTTP service");
  serve->add_option("--corpus", v_corpus);
  serve->add_option("--index", v_index);
  serve->add_option("--model", v_model);
  serve->add_option("--vectors", v_vectors);
  serve->add_option("--host", v_host);
  serve->add_option("--port", v_port);

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      std::cerr << "InvalidArgument: " << e.what() << '\n';
      return 1;
    }
    CLI::App* cmd = app.get_subcommands().front();
    if (cmd == eval) cmd = eval->get_subcommands().front();
    if (!config_path.empty()) apply_config(cmd, config_path);
    print_resolved(cmd);

    if (cmd == synth) {
      const SynthCorpus sc = synth_corpus(spec);
      fs::create_directories(synth_out);
      bin::write_file((fs::path(synth_out) / "corpus.conllu").string(), sc.conllu());
      bin::write_file((fs::path(synth_out) / "gold.jsonl").string(), gold_labels_jsonl(sc.gold));
      bin::write_file((fs::path(synth_out) / "relations.jsonl").string(), relation_queries_jsonl(sc.queries));
      std::cout << sc.sentences.size() << " sentences, " << sc.queries.size() << " queries -> " << synth_out << '\n';
    } else if (cmd == ingest) {
      std::ifstream in(ingest_in);
      if (!in) fail(Errc::UnknownCorpus, "cannot open '" + ingest_in + "'");
      const Corpus corpus = ingest_conllu(in);
      save_corpus_file(corpus, ingest_out);
      std::cout << corpus.size() << " sentences -> " << ingest_out << '\n';
    } else if (cmd == build) {
      bi.metric = metric_name == "cosine" ? Metric::cosine : Metric::l2;
      const Corpus corpus = open_corpus(bi_corpus);
      const auto provider = make_provider(bi_embed.config(), bi_embed.vectors);
      const IndexBundle index = build_index(corpus, *provider, bi);
      save_index_file(index, bi_out);
      std::cout << corpus.size() << " vectors, dim " << index.pca.input_dim() << " -> " << index.pca.output_dim()
                << ", " << index.ivf.clusters() << " cells -> " << bi_out << '\n';
    } else if (cmd == ta) {
      const Corpus corpus = open_corpus(ta_corpus);
      EmbeddingProviderConfig ecfg = ta_embed.config();
      if (!ta_index.empty()) ecfg = load_index_file(ta_index).embed;
      const auto provider = make_provider(ecfg, ta_embed.vectors);
      std::map<std::string, std::vector<SyntacticPattern>> relations;
      for (const auto& q : read_relation_queries(ta_relations))
        relations[q.relation].push_back(compile_by_example(q.query, corpus));
      const PairSets pairs =
          build_pairs(relations, corpus, ta_per, {ta_dev.begin(), ta_dev.end()}, ta_pair_seed);
      log::info(std::to_string(pairs.train.size()) + " training pairs, " + std::to_string(pairs.dev.size()) +
                " held-out pairs");
      const TrainResult result = train(pairs.train, *provider, tc);
      save_model_file(result.model, ta_out);
      std::cout << "final epoch loss " << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()) << " -> "
                << ta_out << '\n';
      if (!pairs.dev.empty()) {
        const auto [pred, gold] = predict_pairs(result.model, pairs.dev, *provider);
        if (!ta_dev_gold.empty()) write_text(ta_dev_gold, aligned_pairs_jsonl(gold));
        if (!ta_dev_pred.empty()) write_text(ta_dev_pred, aligned_pairs_jsonl(pred));
        const auto sc = alignment_eval(pred, gold);
        std::cout << "held-out per-arg " << format_percent(sc.per_arg()) << ", both args "
                  << format_percent(sc.both_args()) << '\n';
      }
    } else if (cmd == search) {
      const Corpus corpus = open_corpus(s_corpus);
      const auto results = symbolic_search(s_query, corpus, json::mode_from_name(s_mode),
                                           s_limit ? std::optional<std::size_t>(s_limit) : std::nullopt);
      if (s_aggregate) std::cout << aggregate_tsv(aggregate(results));
      else print_search_results(results);
    } else if (cmd == neural) {
      const Corpus corpus = open_corpus(n_corpus);
      const IndexBundle index = load_index_file(n_index);
      const AlignModel model = load_model_file(n_model);
      const auto provider = make_provider(index.embed, n_vectors);
      n_cfg.capture_display_mode = json::mode_from_name(n_mode);
      if (!n_keyword.empty()) n_cfg.keyword_filter = n_keyword;
      const SearchContext ctx{&corpus, &index, provider.get(), &model};
      extractive_neural_search(n_query, ctx, n_cfg, [](const StreamRecord& rec) {
        auto j = json::to_record(rec);
        if (std::holds_alternative<SearchSummary>(rec)) j.erase("elapsed_ms");  // keeps stdout reproducible
        std::cout << j.dump() << '\n' << std::flush;
        return static_cast<bool>(std::cout);
      });
    } else if (cmd == rel) {
      std::map<std::string, std::vector<SentenceId>> ranked;
      std::istringstream in(read_text(e_results));
      std::string line;
      while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("relation") || !j.contains("ids"))
          fail(Errc::FormatError, "result lines need 'relation' and 'ids'");
        ranked[j["relation"].get<std::string>()] = j["ids"].get<std::vector<SentenceId>>();
      }
      auto lin = open_in(e_labels);
      const auto report = relevancy_eval(ranked, LabelSet(read_labels(lin)));
      std::cout << report.table();
      if (!e_summary.empty()) write_text(e_summary, report.summary().dump(2) + "\n");
    } else if (cmd == al) {
      auto pin = open_in(e_pred);
      auto gin = open_in(e_gold);
      std::optional<Corpus> corpus;
      if (!e_corpus.empty()) corpus = open_corpus(e_corpus);
      const auto scores = alignment_eval(read_aligned_pairs(pin), read_aligned_pairs(gin), corpus ? &*corpus : nullptr);
      std::cout << "per_arg\t" << format_percent(scores.per_arg()) << "\nboth_args\t"
                << format_percent(scores.both_args()) << '\n';
      if (!e_summary.empty()) write_text(e_summary, scores.summary().dump(2) + "\n");
    } else if (cmd == cmp) {
      const Corpus corpus = open_corpus(e_corpus);
      const IndexBundle index = load_index_file(c_index);
      const AlignModel model = load_model_file(c_model);
      const auto provider = make_provider(index.embed, c_vectors);
      if (c_query.empty()) {
        if (c_relations.empty()) fail(Errc::InvalidArgument, "pass --query or --relations");
        for (const auto& q : read_relation_queries(c_relations))
          if (q.relation == c_relation) {
            c_query = q.query;
            break;
          }
        if (c_query.empty()) fail(Errc::InvalidArgument, "no query for relation '" + c_relation + "'");
      }
      auto lin = open_in(e_labels);
      const SearchContext ctx{&corpus, &index, provider.get(), &model};
      const auto result = compare_symbolic_neural(c_query, ctx, LabelSet(read_labels(lin)), c_relation, c_cfg);
      std::cout << result.table();
      if (!e_summary.empty()) write_text(e_summary, result.summary().dump(2) + "\n");
    } else if (cmd == serve) {
      ServiceState st;
      if (!v_corpus.empty()) {
        st.corpus = std::make_shared<Corpus>(open_corpus(v_corpus));
        st.corpus_name = fs::path(v_corpus).stem().string();
      }
      if (!v_index.empty()) {
        auto index = std::make_shared<IndexBundle>(load_index_file(v_index));
        st.provider = make_provider(index->embed, v_vectors);
        st.index = std::move(index);
      }
      if (!v_model.empty()) st.model = std::make_shared<AlignModel>(load_model_file(v_model));
      Service service(std::move(st));
      if (!service.listen(v_host, v_port)) fail(Errc::IoError, "cannot listen on port " + std::to_string(v_port));
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "InvalidArgument: " << e.what() << '\n';
    return 1;
  }
}
