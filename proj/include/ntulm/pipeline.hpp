#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ntulm/benchmark.hpp"
#include "ntulm/checkpoint.hpp"
#include "ntulm/content_hash.hpp"
#include "ntulm/corpus.hpp"
#include "ntulm/graph_io.hpp"
#include "ntulm/kg_embed.hpp"
#include "ntulm/mlm.hpp"
#include "ntulm/synthetic.hpp"
#include "ntulm/table_io.hpp"
#include "ntulm/tweet_embed.hpp"
#include "ntulm/vocab.hpp"

// File-to-file pipeline stages behind the `ntulm` command line tool. Every
// stage reads its inputs from the output directory (or from paths in the
// config), writes its artifacts there and records a manifest of content
// hashes under manifests/.
namespace ntulm::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

struct TaskSpec {
  std::string name;
  Metric metric = Metric::MacroF1;
  TaskType type = TaskType::Multiclass;
  std::string train;  // JSONL paths, relative to the config file
  std::string eval;
  std::vector<Variant> variants{Variant::Ntulm, Variant::TextOnly, Variant::PostConcat};
  bool strip_label_hashtag = false;  // hashtag prediction: drop the target from text and NTU keys
};

struct PipelineConfig {
  fs::path base_dir = ".";
  std::uint64_t seed = 0;
  std::string corpus;
  std::string mlm_eval;  // empty: score the training corpus
  KgeConfig kge;
  double kge_heldout = 0.1;
  EncoderConfig encoder;
  std::size_t max_vocab = 5000;
  std::size_t probe_epochs = 200;
  double probe_learning_rate = 1e-2;
  std::size_t probe_repeats = 1;
  std::vector<TaskSpec> tasks;

  fs::path resolve(const std::string& p) const { return base_dir / p; }

  KgeConfig kge_settings() const {
    auto k = kge;
    k.rng_seed = seed;
    return k;
  }

  EncoderConfig encoder_settings(bool use_ntu, std::size_t vocab_size, std::size_t ntu_dim) const {
    auto e = encoder;
    e.use_ntu = use_ntu;
    e.vocab_size = vocab_size;
    e.ntu_dim = use_ntu ? ntu_dim : 0;
    e.rng_seed = seed;
    return e;
  }

  BenchmarkConfig benchmark() const {
    BenchmarkConfig b;
    b.epochs = probe_epochs;
    b.learning_rate = probe_learning_rate;
    b.seeds.clear();
    for (std::size_t i = 0; i < probe_repeats; ++i) b.seeds.push_back(seed + i);
    return b;
  }
};

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw Error(ErrorCode::ConfigInvalid, "unknown key '" + key + "' in " + where);
  }
}

inline TaskSpec parse_task(const json& j) {
  check_keys(j, {"name", "metric", "type", "train", "eval", "variants", "strip_label_hashtag"}, "task");
  TaskSpec t;
  t.name = j.at("name").get<std::string>();
  if (t.name.empty() || t.name.find_first_of("/\\. ") != std::string::npos)
    throw Error(ErrorCode::ConfigInvalid, "task name must be a plain identifier: '" + t.name + "'");
  const auto metric = parse_metric(j.value("metric", std::string("macro_f1")));
  if (!metric) throw Error(ErrorCode::ConfigInvalid, "task " + t.name + ": unknown metric");
  t.metric = *metric;
  const auto type = j.value("type", std::string("multiclass"));
  if (type != "multiclass" && type != "multilabel")
    throw Error(ErrorCode::ConfigInvalid, "task " + t.name + ": type must be multiclass or multilabel");
  t.type = type == "multiclass" ? TaskType::Multiclass : TaskType::Multilabel;
  t.train = j.at("train").get<std::string>();
  t.eval = j.at("eval").get<std::string>();
  if (j.contains("variants")) {
    t.variants.clear();
    for (const auto& v : j.at("variants")) {
      const auto parsed = parse_variant(v.get<std::string>());
      if (!parsed) throw Error(ErrorCode::ConfigInvalid, "task " + t.name + ": unknown variant " + v.dump());
      if (std::find(t.variants.begin(), t.variants.end(), *parsed) == t.variants.end()) t.variants.push_back(*parsed);
    }
    if (t.variants.empty()) throw Error(ErrorCode::ConfigInvalid, "task " + t.name + ": no variants");
  }
  t.strip_label_hashtag = j.value("strip_label_hashtag", false);
  return t;
}

}  // namespace detail

inline PipelineConfig parse_config(const json& j, fs::path base_dir) {
  try {
    detail::check_keys(j, {"seed", "corpus", "mlm_eval", "kge", "encoder", "probe", "tasks"}, "config");
    PipelineConfig c;
    c.base_dir = std::move(base_dir);
    c.seed = j.value("seed", std::uint64_t{0});
    c.corpus = j.at("corpus").get<std::string>();
    c.mlm_eval = j.value("mlm_eval", std::string{});
    if (j.contains("kge")) {
      const auto& k = j.at("kge");
      detail::check_keys(k,
                         {"dim", "learning_rate", "epochs", "batch_size", "batch_negatives", "uniform_negatives",
                          "parallel", "threads", "heldout_fraction"},
                         "kge");
      c.kge.dim = k.value("dim", c.kge.dim);
      c.kge.learning_rate = k.value("learning_rate", c.kge.learning_rate);
      c.kge.epochs = k.value("epochs", c.kge.epochs);
      c.kge.batch_size = k.value("batch_size", c.kge.batch_size);
      c.kge.batch_negatives = k.value("batch_negatives", c.kge.batch_negatives);
      c.kge.uniform_negatives = k.value("uniform_negatives", c.kge.uniform_negatives);
      c.kge.parallel = k.value("parallel", c.kge.parallel);
      c.kge.threads = k.value("threads", c.kge.threads);
      c.kge_heldout = k.value("heldout_fraction", c.kge_heldout);
    }
    if (!(c.kge_heldout >= 0.0 && c.kge_heldout < 1.0))
      throw Error(ErrorCode::ConfigInvalid, "kge.heldout_fraction must be in [0,1)");
    c.kge.validate();
    if (j.contains("encoder")) {
      const auto& e = j.at("encoder");
      detail::check_keys(e,
                         {"hidden_dim", "layers", "heads", "ffn_dim", "max_len", "mask_rate", "learning_rate", "epochs",
                          "batch_size", "init_std", "pool_special_tokens", "max_vocab"},
                         "encoder");
      from_json(e, c.encoder);
      c.max_vocab = e.value("max_vocab", c.max_vocab);
    }
    c.encoder_settings(true, Vocabulary::kNumReserved + 1, c.kge.dim).validate();
    if (j.contains("probe")) {
      const auto& p = j.at("probe");
      detail::check_keys(p, {"epochs", "learning_rate", "repeats"}, "probe");
      c.probe_epochs = p.value("epochs", c.probe_epochs);
      c.probe_learning_rate = p.value("learning_rate", c.probe_learning_rate);
      c.probe_repeats = p.value("repeats", c.probe_repeats);
    }
    if (!(c.probe_learning_rate > 0) || c.probe_repeats == 0)
      throw Error(ErrorCode::ConfigInvalid, "probe needs learning_rate > 0 and repeats >= 1");
    std::set<std::string> names;
    for (const auto& t : j.value("tasks", json::array())) {
      c.tasks.push_back(detail::parse_task(t));
      if (!names.insert(c.tasks.back().name).second)
        throw Error(ErrorCode::ConfigInvalid, "duplicate task " + c.tasks.back().name);
    }
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("config: ") + e.what());
  }
}

inline PipelineConfig load_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot open config " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, "config " + file.string() + ": " + e.what());
  }
  return parse_config(j, file.parent_path().empty() ? fs::path(".") : file.parent_path());
}

/// Artifact names inside the output directory.
struct Layout {
  fs::path dir;

  fs::path graph() const { return dir / "graph.txt"; }
  fs::path table() const { return dir / "kge.bin"; }
  fs::path table_index() const { return dir / "kge.nodes.tsv"; }
  fs::path table_tsv() const { return dir / "kge.tsv"; }
  fs::path heldout() const { return dir / "kge.heldout.txt"; }
  fs::path kge_train() const { return dir / "kge.train.json"; }
  fs::path kge_eval() const { return dir / "kge.eval.json"; }
  fs::path vocab() const { return dir / "vocab.txt"; }
  fs::path checkpoint(Variant v) const {
    return dir / (v == Variant::TextOnly ? "mlm.text.ckpt" : "mlm.ntulm.ckpt");
  }
  fs::path mlm_train() const { return dir / "mlm.train.json"; }
  fs::path mlm_eval() const { return dir / "mlm.eval.json"; }
  fs::path embeddings(const std::string& task, const std::string& split, Variant v) const {
    return dir / "embeddings" / (task + "." + split + "." + std::string(to_string(v)) + ".jsonl");
  }
  fs::path probe() const { return dir / "probe.json"; }
  fs::path report_tsv() const { return dir / "report.tsv"; }
  fs::path report_summary() const { return dir / "summary.txt"; }
  fs::path manifest(const std::string& name) const { return dir / "manifests" / (name + ".json"); }
};

struct Context {
  PipelineConfig config;
  Layout out;
  std::ostream& log;
};

inline bool is_user_error(ErrorCode c) {
  switch (c) {
    case ErrorCode::MissingArtifact:
    case ErrorCode::ConfigInvalid:
    case ErrorCode::CorpusDecodeError:
    case ErrorCode::FormatError:
    case ErrorCode::EmptyAfterNormalization:
    case ErrorCode::EmptyGraph:
    case ErrorCode::EmptyText:
    case ErrorCode::DegenerateLabels:
    case ErrorCode::KTooLarge:
    case ErrorCode::NoRelevantItems:
    case ErrorCode::UnknownNode:
      return true;
    default:
      return false;
  }
}

/// Input and output hashes of one command run. Paths are stored relative to
/// the output directory or the config directory, never absolute, so reruns
/// elsewhere produce the same manifest.
class Manifest {
 public:
  Manifest(const Context& ctx, std::string name, json stage_config)
      : ctx_(ctx), name_(std::move(name)), config_sha1_(sha1_hex(stage_config.dump())) {
    stage_config_ = std::move(stage_config);
  }

  void input(const fs::path& p) { inputs_.push_back(entry(p)); }

  void output(const fs::path& p) { outputs_.push_back(p); }

  void write() const {
    std::string closure_src = name_ + "\n" + config_sha1_ + "\n";
    for (const auto& in : inputs_) closure_src += in.dump() + "\n";
    const auto closure = sha1_hex(closure_src);
    json j;
    j["command"] = name_;
    j["config"] = stage_config_;
    j["config_sha1"] = config_sha1_;
    j["inputs"] = inputs_;
    j["outputs"] = json::array();
    for (const auto& p : outputs_) {
      auto e = entry(p);
      e["closure"] = closure;
      j["outputs"].push_back(std::move(e));
    }
    write_file(ctx_.out.manifest(name_), j.dump(2) + "\n");
  }

  static void write_file(const fs::path& p, const std::string& content) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::MissingArtifact, "cannot write " + p.string());
    out << content;
    if (!out) throw Error(ErrorCode::MissingArtifact, "write failed: " + p.string());
  }

 private:
  json entry(const fs::path& p) const {
    const auto full = fs::weakly_canonical(p);
    const auto rel_out = full.lexically_relative(fs::weakly_canonical(ctx_.out.dir));
    const bool in_out = !rel_out.empty() && *rel_out.begin() != "..";
    const auto rel = in_out ? rel_out : full.lexically_relative(fs::weakly_canonical(ctx_.config.base_dir));
    return {{"root", in_out ? "out" : "config"}, {"path", (rel.empty() ? full : rel).generic_string()},
            {"sha1", file_blob_hash(p)}};
  }

  const Context& ctx_;
  std::string name_;
  std::string config_sha1_;
  json stage_config_;
  std::vector<json> inputs_;
  std::vector<fs::path> outputs_;
};

namespace detail {

inline void require(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) throw Error(ErrorCode::MissingArtifact, p.string() + " not found (" + hint + ")");
}

inline std::vector<TweetRecord> load_records(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot open " + p.string());
  try {
    return read_corpus(in);
  } catch (const Error& e) {
    throw Error(e.code(), p.filename().string() + ": " + e.what());
  }
}

inline std::ifstream open(const fs::path& p, const std::string& hint) {
  require(p, hint);
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot open " + p.string());
  return in;
}

inline HeteroGraph load_graph(const fs::path& p) {
  auto in = open(p, "run build-graph first");
  return read_graph(in);
}

inline EmbeddingTable load_table(const Layout& out) {
  require(out.table(), "run train-kge first");
  auto bin = open(out.table(), "run train-kge first");
  auto idx = open(out.table_index(), "run train-kge first");
  return read_table(bin, idx);
}

inline Vocabulary load_vocab(const Layout& out) {
  auto in = open(out.vocab(), "run train-mlm first");
  return Vocabulary::read(in);
}

inline EncoderState load_encoder(const Layout& out, Variant v) {
  auto in = open(out.checkpoint(v), "run train-mlm first");
  return read_checkpoint(in);
}

inline json kge_json(const KgeConfig& k, double heldout) {
  return {{"dim", k.dim},
          {"learning_rate", k.learning_rate},
          {"epochs", k.epochs},
          {"batch_size", k.batch_size},
          {"batch_negatives", k.batch_negatives},
          {"uniform_negatives", k.uniform_negatives},
          {"parallel", k.parallel},
          {"threads", k.threads},
          {"heldout_fraction", heldout},
          {"seed", k.rng_seed}};
}

inline json stats_json(const RankStats& s) {
  return {{"count", s.count}, {"mrr", s.mrr}, {"hits_at_1", s.hits_at_1}, {"hits_at_10", s.hits_at_10}};
}

inline std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

inline bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace detail

/// Removes every occurrence of hashtag `tag` from the post: from its hashtag
/// list and as a "#tag" word in the text.
inline TweetRecord strip_hashtag(TweetRecord rec, const std::string& tag) {
  const auto target = normalize_hashtag(tag);
  std::erase_if(rec.hashtags, [&](const std::string& h) { return normalize_hashtag(h) == target; });
  std::istringstream words(rec.text);
  std::string word, text;
  while (words >> word) {
    if (word.front() == '#') {
      auto core = word;
      while (!core.empty() && !detail::is_word_char(core.back())) core.pop_back();
      const auto first = core.find_first_not_of('#');
      if (first != std::string::npos) {
        std::string lowered = core.substr(first);
        for (auto& ch : lowered) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        if (lowered == target) continue;
      }
    }
    text += (text.empty() ? "" : " ") + word;
  }
  rec.text = std::move(text);
  return rec;
}

/// Records of one task split, with the target hashtag removed when the task
/// asks for it.
inline std::vector<TweetRecord> task_records(const PipelineConfig& cfg, const TaskSpec& task, const std::string& split) {
  auto records = detail::load_records(cfg.resolve(split == "train" ? task.train : task.eval));
  if (task.strip_label_hashtag) {
    for (auto& r : records) {
      auto it = r.labels.find(task.name);
      if (it == r.labels.end()) continue;
      for (const auto& l : it->second) r = strip_hashtag(std::move(r), l);
    }
  }
  return records;
}

inline HeteroGraph cmd_build_graph(const Context& ctx) {
  const auto corpus_path = ctx.config.resolve(ctx.config.corpus);
  detail::require(corpus_path, "corpus named in the config");
  const auto records = detail::load_records(corpus_path);
  const auto g = build_graph(records);
  std::ostringstream os;
  write_graph(os, g);
  Manifest m(ctx, "build-graph", {{"corpus", ctx.config.corpus}});
  m.input(corpus_path);
  Manifest::write_file(ctx.out.graph(), os.str());
  m.output(ctx.out.graph());
  m.write();
  ctx.log << "users=" << g.num_users() << " hashtags=" << g.num_hashtags()
          << " authored=" << g.relation_count(RelationKind::Authored)
          << " favorited=" << g.relation_count(RelationKind::Favorited)
          << " co_mentioned=" << g.relation_count(RelationKind::CoMentioned) << '\n';
  return g;
}

/// Holds out a seeded random fraction of the edges, trains on the rest and
/// writes the table in binary, index and TSV form.
inline EmbeddingTable cmd_train_kge(const Context& ctx) {
  const auto& cfg = ctx.config;
  const auto kge = cfg.kge_settings();
  const auto g = detail::load_graph(ctx.out.graph());
  if (g.num_edges() == 0) throw Error(ErrorCode::EmptyGraph, "graph has no edges to train on");

  std::vector<std::size_t> order(g.num_edges());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(cfg.seed ^ 0x6e1dULL);
  rng.shuffle(order.begin(), order.end());
  auto n_held = static_cast<std::size_t>(cfg.kge_heldout * static_cast<double>(g.num_edges()));
  n_held = std::min(n_held, g.num_edges() - 1);
  std::vector<std::size_t> held_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_held));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_held), order.end());
  std::sort(held_idx.begin(), held_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::vector<Edge> held, train;
  for (auto i : held_idx) held.push_back(g.edges()[i]);
  for (auto i : train_idx) train.push_back(g.edges()[i]);

  std::vector<double> trace;
  const auto table = train_kge(synthetic::subgraph(g, train), kge, &trace);

  Manifest m(ctx, "train-kge", detail::kge_json(kge, cfg.kge_heldout));
  m.input(ctx.out.graph());
  std::ostringstream bin, idx, tsv, heldout;
  write_table(bin, table);
  write_table_index(idx, table);
  write_table_tsv(tsv, table);
  write_graph(heldout, synthetic::subgraph(g, held));
  const json summary = {{"train_edges", train.size()}, {"heldout_edges", held.size()}, {"loss_trace", trace}};
  const std::pair<fs::path, std::string> files[] = {{ctx.out.table(), bin.str()},
                                                    {ctx.out.table_index(), idx.str()},
                                                    {ctx.out.table_tsv(), tsv.str()},
                                                    {ctx.out.heldout(), heldout.str()},
                                                    {ctx.out.kge_train(), summary.dump(2) + "\n"}};
  for (const auto& [path, content] : files) {
    Manifest::write_file(path, content);
    m.output(path);
  }
  m.write();
  ctx.log << "nodes=" << table.num_nodes() << " dim=" << table.dim << " train_edges=" << train.size()
          << " heldout_edges=" << held.size() << " final_loss=" << (trace.empty() ? 0.0 : trace.back()) << '\n';
  return table;
}

/// Tail ranking on the held-out edges (all edges when none were held out),
/// next to the same ranking under an untrained table of equal shape.
inline LinkEvalReport cmd_eval_kge(const Context& ctx) {
  const auto table = detail::load_table(ctx.out);
  auto held = detail::load_graph(ctx.out.heldout());
  const fs::path edges_from = held.num_edges() > 0 ? ctx.out.heldout() : ctx.out.graph();
  if (held.num_edges() == 0) held = detail::load_graph(ctx.out.graph());
  std::vector<EdgeTriplet> triplets;
  for (const auto& e : held.edges()) triplets.push_back(held.resolve(e));
  const auto rep = link_prediction_eval(table, std::span<const EdgeTriplet>(triplets));
  Rng rng(ctx.config.seed ^ 0xba5eULL);
  const auto random_table = init_table(table.registry, table.dim, rng);
  const auto base = link_prediction_eval(random_table, std::span<const EdgeTriplet>(triplets));

  json j = detail::stats_json(rep.overall);
  j["random_mrr"] = base.overall.mrr;
  j["per_relation"] = json::object();
  for (const auto& [r, s] : rep.per_relation) j["per_relation"][std::string(to_string(r))] = detail::stats_json(s);
  Manifest m(ctx, "eval-kge", {{"seed", ctx.config.seed}});
  m.input(ctx.out.table());
  m.input(ctx.out.table_index());
  m.input(edges_from);
  Manifest::write_file(ctx.out.kge_eval(), j.dump(2) + "\n");
  m.output(ctx.out.kge_eval());
  m.write();
  ctx.log << "edges=" << rep.overall.count << " mrr=" << detail::fixed(rep.overall.mrr)
          << " hits@1=" << detail::fixed(rep.overall.hits_at_1) << " hits@10=" << detail::fixed(rep.overall.hits_at_10)
          << " random_mrr=" << detail::fixed(base.overall.mrr) << '\n';
  return rep;
}

inline std::vector<EncodedTweet> encode_records(std::span<const TweetRecord> records, const Vocabulary& vocab,
                                                const NtuResolver& ntu, std::size_t max_tokens) {
  std::vector<EncodedTweet> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const auto keys = ntu_keys(r);
    out.push_back({vocab.tokenize(r.text, max_tokens), ntu(keys).vector});
  }
  return out;
}

struct MlmModels {
  Vocabulary vocab;
  EncoderState ntulm;
  EncoderState text;
};

/// Builds the vocabulary from the corpus and trains the NTU-enriched and the
/// text-only encoder with identical settings and seed.
inline MlmModels cmd_train_mlm(const Context& ctx) {
  const auto& cfg = ctx.config;
  const auto corpus_path = cfg.resolve(cfg.corpus);
  const auto records = detail::load_records(corpus_path);
  const auto table = detail::load_table(ctx.out);
  std::vector<std::string> texts;
  for (const auto& r : records) texts.push_back(r.text);
  auto vocab = Vocabulary::build(texts, cfg.max_vocab);

  auto ntulm = init_encoder(cfg.encoder_settings(true, vocab.size(), table.dim));
  auto text = init_encoder(cfg.encoder_settings(false, vocab.size(), table.dim));
  const NtuResolver resolver(table);
  const auto corpus = encode_records(records, vocab, resolver, ntulm.config.max_tokens());
  const auto ntulm_trace = train_mlm(ntulm, corpus);
  const auto text_trace = train_mlm(text, corpus);

  json stage = ntulm.config;
  stage["max_vocab"] = cfg.max_vocab;
  Manifest m(ctx, "train-mlm", stage);
  m.input(corpus_path);
  m.input(ctx.out.table());
  m.input(ctx.out.table_index());
  std::ostringstream vocab_os, ntulm_os, text_os;
  vocab.write(vocab_os);
  write_checkpoint(ntulm_os, ntulm);
  write_checkpoint(text_os, text);
  const json summary = {{"tweets", records.size()}, {"vocab_size", vocab.size()}, {"ntulm_loss", ntulm_trace},
                        {"text_loss", text_trace}};
  const std::pair<fs::path, std::string> files[] = {{ctx.out.vocab(), vocab_os.str()},
                                                    {ctx.out.checkpoint(Variant::Ntulm), ntulm_os.str()},
                                                    {ctx.out.checkpoint(Variant::TextOnly), text_os.str()},
                                                    {ctx.out.mlm_train(), summary.dump(2) + "\n"}};
  for (const auto& [path, content] : files) {
    Manifest::write_file(path, content);
    m.output(path);
  }
  m.write();
  const auto last = [](const std::vector<double>& t) { return t.empty() ? 0.0 : t.back(); };
  ctx.log << "tweets=" << records.size() << " vocab=" << vocab.size() << " ntulm_loss=" << detail::fixed(last(ntulm_trace))
          << " text_loss=" << detail::fixed(last(text_trace)) << '\n';
  return {std::move(vocab), std::move(ntulm), std::move(text)};
}

struct MlmEval {
  double ntulm_bits = 0.0;
  double text_bits = 0.0;
};

/// Masked-token cross-entropy in bits for both encoders under the same
/// seeded masking.
inline MlmEval cmd_eval_mlm(const Context& ctx) {
  const auto& cfg = ctx.config;
  const auto path = cfg.resolve(cfg.mlm_eval.empty() ? cfg.corpus : cfg.mlm_eval);
  const auto records = detail::load_records(path);
  const auto table = detail::load_table(ctx.out);
  const auto vocab = detail::load_vocab(ctx.out);
  const auto ntulm = detail::load_encoder(ctx.out, Variant::Ntulm);
  const auto text = detail::load_encoder(ctx.out, Variant::TextOnly);
  const NtuResolver resolver(table);
  const auto corpus = encode_records(records, vocab, resolver, ntulm.config.max_tokens());
  MlmEval r{perplexity_bits(corpus, ntulm, cfg.seed), perplexity_bits(corpus, text, cfg.seed)};

  Manifest m(ctx, "eval-mlm", {{"seed", cfg.seed}, {"eval", cfg.mlm_eval.empty() ? cfg.corpus : cfg.mlm_eval}});
  for (const auto& p : {path, ctx.out.table(), ctx.out.table_index(), ctx.out.vocab(), ctx.out.checkpoint(Variant::Ntulm),
                        ctx.out.checkpoint(Variant::TextOnly)})
    m.input(p);
  const json j = {{"tweets", records.size()}, {"ntulm_bits", r.ntulm_bits}, {"text_bits", r.text_bits}};
  Manifest::write_file(ctx.out.mlm_eval(), j.dump(2) + "\n");
  m.output(ctx.out.mlm_eval());
  m.write();
  ctx.log << "ntulm_bits=" << detail::fixed(r.ntulm_bits) << " text_bits=" << detail::fixed(r.text_bits) << '\n';
  return r;
}

/// Writes one JSON Lines file per task split for `variant`. Tasks that do not
/// list the variant are skipped; without tasks the training corpus is
/// embedded as task "corpus".
inline std::vector<fs::path> cmd_embed(const Context& ctx, Variant variant) {
  const auto& cfg = ctx.config;
  const bool needs_table = variant != Variant::TextOnly;
  if (needs_table && !fs::exists(ctx.out.table()))
    throw Error(ErrorCode::MissingArtifact, ctx.out.table().string() + " not found: variant " +
                                                std::string(to_string(variant)) + " needs the NTU table (run train-kge)");
  std::optional<EmbeddingTable> table;
  if (fs::exists(ctx.out.table())) table = detail::load_table(ctx.out);
  const auto vocab = detail::load_vocab(ctx.out);
  std::optional<EncoderState> ntulm, text;
  if (variant == Variant::Ntulm) ntulm = detail::load_encoder(ctx.out, Variant::Ntulm);
  if (variant != Variant::Ntulm) text = detail::load_encoder(ctx.out, Variant::TextOnly);
  const TweetEmbedder embedder(vocab, ntulm ? &*ntulm : nullptr, text ? &*text : nullptr, table ? &*table : nullptr);

  Manifest m(ctx, "embed." + std::string(to_string(variant)), {{"variant", to_string(variant)}});
  m.input(ctx.out.vocab());
  if (table) {
    m.input(ctx.out.table());
    m.input(ctx.out.table_index());
  }
  m.input(ctx.out.checkpoint(variant == Variant::Ntulm ? Variant::Ntulm : Variant::TextOnly));

  std::vector<fs::path> written;
  const auto embed_split = [&](const std::string& task, const std::string& split, const std::vector<TweetRecord>& recs) {
    std::string lines;
    for (const auto& r : recs) {
      const auto keys = ntu_keys(r);
      try {
        lines += embedding_to_json(r.id, embedder.embed(variant, r.text, keys)).dump() + "\n";
      } catch (const Error& e) {
        throw Error(e.code(), "post " + r.id + ": " + e.what());
      }
    }
    const auto path = ctx.out.embeddings(task, split, variant);
    Manifest::write_file(path, lines);
    m.output(path);
    written.push_back(path);
  };
  if (cfg.tasks.empty()) {
    const auto corpus_path = cfg.resolve(cfg.corpus);
    m.input(corpus_path);
    embed_split("corpus", "all", detail::load_records(corpus_path));
  }
  for (const auto& task : cfg.tasks) {
    if (std::find(task.variants.begin(), task.variants.end(), variant) == task.variants.end()) continue;
    for (const std::string split : {"train", "eval"}) {
      m.input(cfg.resolve(split == "train" ? task.train : task.eval));
      embed_split(task.name, split, task_records(cfg, task, split));
    }
  }
  m.write();
  ctx.log << "variant=" << to_string(variant) << " files=" << written.size() << '\n';
  return written;
}

namespace detail {

inline Eigen::MatrixXd read_embeddings(const fs::path& p, std::span<const TweetRecord> records) {
  auto in = open(p, "run embed for this variant first");
  std::string line;
  std::vector<Eigen::VectorXd> rows;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      const auto idx = rows.size();
      if (idx >= records.size() || j.at("id").get<std::string>() != records[idx].id)
        throw Error(ErrorCode::FormatError, "embedding ids do not follow the dataset order");
      const auto v = j.at("vector").get<std::vector<double>>();
      rows.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::FormatError, p.filename().string() + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (rows.size() != records.size())
    throw Error(ErrorCode::FormatError, p.filename().string() + ": expected " + std::to_string(records.size()) + " rows");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols()) throw Error(ErrorCode::FormatError, p.filename().string() + ": ragged vectors");
    m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  return m;
}

inline Eigen::MatrixXd targets(std::span<const TweetRecord> records, const TaskSpec& task,
                               const std::vector<std::string>& classes) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(classes.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& labels = records[i].labels.at(task.name);
    for (const auto& l : labels) {
      const auto c = std::lower_bound(classes.begin(), classes.end(), l) - classes.begin();
      t(static_cast<Eigen::Index>(i), c) = 1.0;
    }
  }
  return t;
}

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace detail

inline json report_to_json(const MetricsReport& rep) {
  json rows = json::array();
  for (const auto& r : rep.rows) {
    rows.push_back({{"task", r.task},
                    {"variant", to_string(r.variant)},
                    {"slice", r.slice},
                    {"metric", to_string(r.metric)},
                    {"value", detail::number_or_null(r.value)},
                    {"delta_pct", r.delta_pct ? detail::number_or_null(*r.delta_pct) : json(nullptr)}});
  }
  return {{"has_deltas", rep.has_deltas}, {"probe_fingerprint", rep.probe_fingerprint}, {"rows", rows}};
}

inline MetricsReport report_from_json(const json& j) {
  try {
    MetricsReport rep;
    rep.has_deltas = j.at("has_deltas").get<bool>();
    rep.probe_fingerprint = j.at("probe_fingerprint").get<std::map<std::string, std::uint64_t>>();
    for (const auto& r : j.at("rows")) {
      const auto variant = parse_variant(r.at("variant").get<std::string>());
      const auto metric = parse_metric(r.at("metric").get<std::string>());
      if (!variant || !metric) throw Error(ErrorCode::FormatError, "probe results: unknown variant or metric");
      MetricsRow row{r.at("task").get<std::string>(), *variant, r.at("slice").get<std::string>(), *metric,
                     r.at("value").is_null() ? std::numeric_limits<double>::quiet_NaN() : r.at("value").get<double>(),
                     std::nullopt};
      if (!r.at("delta_pct").is_null()) row.delta_pct = r.at("delta_pct").get<double>();
      rep.rows.push_back(std::move(row));
    }
    return rep;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("probe results: ") + e.what());
  }
}

/// Trains the probes for every configured task and variant on the exported
/// embeddings and scores the overall / overlap / non-overlap slices.
inline MetricsReport cmd_probe(const Context& ctx) {
  const auto& cfg = ctx.config;
  if (cfg.tasks.empty()) throw Error(ErrorCode::ConfigInvalid, "no tasks configured");
  const auto table = detail::load_table(ctx.out);
  json stage = {{"epochs", cfg.probe_epochs}, {"learning_rate", cfg.probe_learning_rate}, {"seeds", cfg.benchmark().seeds}};
  Manifest m(ctx, "probe", stage);
  m.input(ctx.out.table());
  m.input(ctx.out.table_index());

  std::vector<TaskInput> inputs;
  for (const auto& task : cfg.tasks) {
    const auto train = task_records(cfg, task, "train");
    const auto eval = task_records(cfg, task, "eval");
    m.input(cfg.resolve(task.train));
    m.input(cfg.resolve(task.eval));
    std::set<std::string> class_set;
    for (const auto* split : {&train, &eval})
      for (const auto& r : *split) {
        const auto it = r.labels.find(task.name);
        if (it == r.labels.end() || it->second.empty())
          throw Error(ErrorCode::FormatError, "post " + r.id + " has no label for task " + task.name);
        if (task.type == TaskType::Multiclass && it->second.size() != 1)
          throw Error(ErrorCode::FormatError, "post " + r.id + " needs exactly one label for task " + task.name);
        class_set.insert(it->second.begin(), it->second.end());
      }
    const std::vector<std::string> classes(class_set.begin(), class_set.end());
    TaskInput in;
    in.name = task.name;
    in.metric = task.metric;
    in.type = task.type;
    in.train_targets = detail::targets(train, task, classes);
    in.eval_targets = detail::targets(eval, task, classes);
    in.eval_overlap.assign(eval.size(), false);
    for (auto i : overlap_split(eval, table).overlap) in.eval_overlap[i] = true;
    for (auto v : task.variants) {
      const auto train_path = ctx.out.embeddings(task.name, "train", v);
      const auto eval_path = ctx.out.embeddings(task.name, "eval", v);
      in.variants.push_back({v, detail::read_embeddings(train_path, train), detail::read_embeddings(eval_path, eval)});
      m.input(train_path);
      m.input(eval_path);
    }
    inputs.push_back(std::move(in));
  }
  const auto report = run_benchmark(inputs, cfg.benchmark());
  Manifest::write_file(ctx.out.probe(), report_to_json(report).dump(2) + "\n");
  m.output(ctx.out.probe());
  m.write();
  ctx.log << "tasks=" << inputs.size() << " rows=" << report.rows.size() << '\n';
  return report;
}

/// Renders the probe results as TSV and as a fixed-width summary table.
inline MetricsReport cmd_report(const Context& ctx) {
  auto in = detail::open(ctx.out.probe(), "run probe first");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("probe results: ") + e.what());
  }
  const auto rep = report_from_json(j);
  std::ostringstream tsv, summary;
  write_report_tsv(tsv, rep);
  write_report_summary(summary, rep);
  Manifest m(ctx, "report", json::object());
  m.input(ctx.out.probe());
  Manifest::write_file(ctx.out.report_tsv(), tsv.str());
  Manifest::write_file(ctx.out.report_summary(), summary.str());
  m.output(ctx.out.report_tsv());
  m.output(ctx.out.report_summary());
  m.write();
  ctx.log << summary.str();
  return rep;
}

/// Every stage in order, embedding each variant some task asks for.
inline void run_all(const Context& ctx) {
  cmd_build_graph(ctx);
  cmd_train_kge(ctx);
  cmd_eval_kge(ctx);
  cmd_train_mlm(ctx);
  cmd_eval_mlm(ctx);
  std::set<Variant> variants;
  for (const auto& t : ctx.config.tasks) variants.insert(t.variants.begin(), t.variants.end());
  if (ctx.config.tasks.empty()) variants = {Variant::Ntulm, Variant::TextOnly, Variant::PostConcat};
  for (auto v : variants) cmd_embed(ctx, v);
  if (!ctx.config.tasks.empty()) {
    cmd_probe(ctx);
    cmd_report(ctx);
  }
}

/// Desk-scale settings for the synthetic demo suite.
inline json demo_config(std::uint64_t seed) {
  return {{"seed", seed},
          {"corpus", "corpus.jsonl"},
          {"kge", {{"dim", 32}, {"epochs", 10}, {"batch_size", 32}, {"learning_rate", 0.05}, {"heldout_fraction", 0.1}}},
          {"encoder",
           {{"hidden_dim", 64}, {"layers", 2}, {"heads", 2}, {"ffn_dim", 128}, {"max_len", 16}, {"learning_rate", 1e-3},
            {"epochs", 3}, {"batch_size", 32}}},
          {"probe", {{"epochs", 1000}, {"learning_rate", 0.1}, {"repeats", 1}}},
          {"tasks",
           {{{"name", "community"}, {"metric", "accuracy"}, {"train", "community.train.jsonl"}, {"eval", "community.eval.jsonl"}},
            {{"name", "hashtag"},
             {"metric", "recall_at_10"},
             {"train", "hashtag.train.jsonl"},
             {"eval", "hashtag.eval.jsonl"},
             {"strip_label_hashtag", true}}}}};
}

/// Writes the demo datasets and `config` as config.json into `dir`; returns
/// the config path.
inline fs::path write_demo(const fs::path& dir, const synthetic::DemoSuiteConfig& suite_cfg, const json& config) {
  const auto suite = synthetic::demo_suite(suite_cfg);
  const std::pair<const char*, const std::vector<TweetRecord>*> files[] = {
      {"corpus.jsonl", &suite.corpus},
      {"community.train.jsonl", &suite.community_train},
      {"community.eval.jsonl", &suite.community_eval},
      {"hashtag.train.jsonl", &suite.hashtag_train},
      {"hashtag.eval.jsonl", &suite.hashtag_eval}};
  for (const auto& [name, recs] : files) {
    std::ostringstream os;
    write_corpus(os, *recs);
    Manifest::write_file(dir / name, os.str());
  }
  Manifest::write_file(dir / "config.json", config.dump(2) + "\n");
  return dir / "config.json";
}

}  // namespace ntulm::pipeline
