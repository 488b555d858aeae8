#pragma once

#include <string>
#include <vector>

#include "ntulm/hin_graph.hpp"

// Synthetic graphs and corpora with a known planted signal. Used by the
// acceptance suite and by `ntulm-synth` to produce demo inputs.
namespace ntulm::synthetic {

struct PlantedPartition {
  HeteroGraph graph;                // every node registered, all edges
  std::vector<int> block;           // block id per node index
};

/// `blocks` equal communities; every edge joins a user and a hashtag of the
/// same block with a uniformly random relation.
inline PlantedPartition planted_partition(std::size_t blocks, std::size_t users, std::size_t hashtags,
                                          std::size_t edges, std::uint64_t seed) {
  Rng rng(seed);
  PlantedPartition p;
  std::vector<std::vector<std::uint32_t>> block_users(blocks), block_tags(blocks);
  for (std::size_t i = 0; i < users; ++i) {
    const auto b = i % blocks;
    block_users[b].push_back(p.graph.add_node({NodeKind::User, "user" + std::to_string(i)}));
    p.block.push_back(static_cast<int>(b));
  }
  for (std::size_t i = 0; i < hashtags; ++i) {
    const auto b = i % blocks;
    block_tags[b].push_back(p.graph.add_node({NodeKind::Hashtag, "tag" + std::to_string(i)}));
    p.block.push_back(static_cast<int>(b));
  }
  for (std::size_t i = 0; i < edges; ++i) {
    const auto b = rng.below(blocks);
    const auto& us = block_users[b];
    const auto& ts = block_tags[b];
    p.graph.add_edge(Edge{us[rng.below(us.size())], kAllRelations[rng.below(kNumRelations)], ts[rng.below(ts.size())]});
  }
  return p;
}

/// Tweets from `communities` disjoint groups of users and hashtags. Each post
/// is written by a member, tagged with one of the community's hashtags and
/// favorited by other members. Its text is filler words around a fixed slot
/// that holds the community's answer word, and optionally a cue word that
/// names the community with probability `text_signal` (otherwise a random
/// community's cue). The hashtag never appears in the text.
struct CommunityCorpusConfig {
  std::size_t communities = 4;
  std::size_t users_per_community = 20;
  std::size_t hashtags_per_community = 3;
  std::size_t tweets = 2000;
  std::size_t favorites_per_tweet = 2;
  std::size_t filler_vocab = 16;
  std::size_t filler_before = 2;
  std::size_t filler_after = 3;
  bool answer_slot = true;
  double text_signal = -1.0;  // < 0: no cue word at all
  std::string user_prefix = "user";
  std::string hashtag_prefix = "tag";
  std::string id_prefix = "t";
  std::string task = "community";
  std::uint64_t seed = 0;
};

struct CommunityCorpus {
  std::vector<TweetRecord> records;
  std::vector<int> community;  // per record
  std::size_t answer_token = 0;  // position of the answer word in the tokenized post ([CLS] is 0)
};

inline std::string answer_word(std::size_t c) { return "ans" + std::to_string(c); }
inline std::string cue_word(std::size_t c) { return "cue" + std::to_string(c); }
inline std::string community_label(std::size_t c) { return "c" + std::to_string(c); }

inline CommunityCorpus community_corpus(const CommunityCorpusConfig& cfg) {
  Rng rng(cfg.seed);
  CommunityCorpus out;
  out.answer_token = 1 + cfg.filler_before;
  const auto member = [&](std::size_t c) {
    return cfg.user_prefix + std::to_string(c * cfg.users_per_community + rng.below(cfg.users_per_community));
  };
  const auto filler = [&] { return "w" + std::to_string(rng.below(cfg.filler_vocab)); };
  for (std::size_t i = 0; i < cfg.tweets; ++i) {
    const std::size_t c = rng.below(cfg.communities);
    TweetRecord r;
    r.id = cfg.id_prefix + std::to_string(i);
    r.author = member(c);
    r.hashtags = {cfg.hashtag_prefix + std::to_string(c * cfg.hashtags_per_community + rng.below(cfg.hashtags_per_community))};
    for (std::size_t f = 0; f < cfg.favorites_per_tweet; ++f) r.favorited_by.push_back(member(c));
    std::string text;
    const auto word = [&](const std::string& w) { text += (text.empty() ? "" : " ") + w; };
    for (std::size_t k = 0; k < cfg.filler_before; ++k) word(filler());
    if (cfg.answer_slot) word(answer_word(c));
    for (std::size_t k = 0; k < cfg.filler_after; ++k) word(filler());
    if (cfg.text_signal >= 0.0) word(cue_word(rng.bernoulli(cfg.text_signal) ? c : rng.below(cfg.communities)));
    r.text = std::move(text);
    r.labels[cfg.task] = {community_label(c)};
    out.records.push_back(std::move(r));
    out.community.push_back(static_cast<int>(c));
  }
  return out;
}

/// Inputs for a full pipeline run. The pretraining corpus comes from known
/// community members. The community task labels each post with its author's
/// community; part of its posts come from members unseen in the corpus (the
/// non-overlap slice). The hashtag task asks for the post's hashtag, which is
/// also written into the text and must be stripped before embedding.
struct DemoSuiteConfig {
  std::size_t corpus_tweets = 1200;
  std::size_t task_train = 800;
  std::size_t task_eval = 600;
  double train_fresh_fraction = 0.25;
  double eval_fresh_fraction = 0.5;
  double text_signal = 0.4;
  CommunityCorpusConfig base;
  std::uint64_t seed = 0;
};

struct DemoSuite {
  std::vector<TweetRecord> corpus;
  std::vector<TweetRecord> community_train, community_eval;
  std::vector<TweetRecord> hashtag_train, hashtag_eval;
};

inline DemoSuite demo_suite(const DemoSuiteConfig& cfg) {
  std::uint64_t stream = cfg.seed * 1000;
  const auto part = [&](std::size_t n, const std::string& id_prefix, bool fresh, bool answer_slot) {
    auto c = cfg.base;
    c.tweets = n;
    c.seed = ++stream;
    c.id_prefix = id_prefix;
    c.answer_slot = answer_slot;
    c.text_signal = cfg.text_signal;
    if (fresh) {
      c.user_prefix = "new_" + id_prefix + "_user";
      c.hashtag_prefix = "new_" + id_prefix + "_tag";
    }
    return community_corpus(c).records;
  };
  const auto mixed = [&](std::size_t n, double fresh_fraction, const std::string& prefix) {
    const auto n_fresh = static_cast<std::size_t>(fresh_fraction * static_cast<double>(n));
    auto known = part(n - n_fresh, prefix + "k", false, false);
    auto fresh = part(n_fresh, prefix + "f", true, false);
    known.insert(known.end(), fresh.begin(), fresh.end());
    return known;
  };
  DemoSuite s;
  s.corpus = part(cfg.corpus_tweets, "p", false, true);
  s.community_train = mixed(cfg.task_train, cfg.train_fresh_fraction, "ct");
  s.community_eval = mixed(cfg.task_eval, cfg.eval_fresh_fraction, "ce");
  const auto hashtag_task = [&](std::size_t n, const std::string& prefix) {
    auto recs = part(n, prefix, false, false);
    for (auto& r : recs) {
      r.labels.clear();
      r.labels["hashtag"] = {r.hashtags.front()};
      r.text += " #" + r.hashtags.front();
    }
    return recs;
  };
  s.hashtag_train = hashtag_task(cfg.task_train, "ht");
  s.hashtag_eval = hashtag_task(cfg.task_eval / 2, "he");
  return s;
}

/// Copy of `g` with every node but only the selected edges.
inline HeteroGraph subgraph(const HeteroGraph& g, const std::vector<Edge>& edges) {
  HeteroGraph out;
  for (const auto& n : g.registry().nodes()) out.add_node(n);
  for (const auto& e : edges) out.add_edge(e);
  return out;
}

}  // namespace ntulm::synthetic
