#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ntulm/common.hpp"

namespace ntulm {

enum class NodeKind : std::uint8_t { User = 0, Hashtag = 1 };

enum class RelationKind : std::uint8_t { Authored = 0, Favorited = 1, CoMentioned = 2 };

inline constexpr std::size_t kNumRelations = 3;
inline constexpr std::array<RelationKind, kNumRelations> kAllRelations = {
    RelationKind::Authored, RelationKind::Favorited, RelationKind::CoMentioned};

inline std::string_view to_string(NodeKind k) { return k == NodeKind::User ? "user" : "hashtag"; }

inline std::string_view to_string(RelationKind r) {
  switch (r) {
    case RelationKind::Authored: return "authored";
    case RelationKind::Favorited: return "favorited";
    case RelationKind::CoMentioned: return "co_mentioned";
  }
  return "?";
}

inline std::optional<NodeKind> parse_node_kind(std::string_view s) {
  if (s == "user") return NodeKind::User;
  if (s == "hashtag") return NodeKind::Hashtag;
  return std::nullopt;
}

inline std::optional<RelationKind> parse_relation(std::string_view s) {
  for (auto r : kAllRelations)
    if (to_string(r) == s) return r;
  return std::nullopt;
}

struct NodeRef {
  NodeKind kind = NodeKind::User;
  std::string key;

  friend bool operator==(const NodeRef&, const NodeRef&) = default;
  friend auto operator<=>(const NodeRef&, const NodeRef&) = default;
};

struct EdgeTriplet {
  NodeRef head;
  RelationKind relation = RelationKind::Authored;
  NodeRef tail;

  friend bool operator==(const EdgeTriplet&, const EdgeTriplet&) = default;
};

// Index-based edge stored by the graph and consumed by the embedding trainer.
struct Edge {
  std::uint32_t head = 0;
  RelationKind relation = RelationKind::Authored;
  std::uint32_t tail = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct TweetRecord {
  std::string id;
  std::string text;
  std::string author;
  std::vector<std::string> hashtags;
  std::vector<std::string> mentions;
  std::vector<std::string> favorited_by;
  // task name -> one label (multiclass) or several (multilabel)
  std::map<std::string, std::vector<std::string>> labels;
};

/// Strips leading '#' and lowercases (ASCII). Throws EmptyAfterNormalization
/// when nothing is left.
inline std::string normalize_hashtag(std::string_view raw) {
  while (!raw.empty() && raw.front() == '#') raw.remove_prefix(1);
  if (raw.empty()) throw Error(ErrorCode::EmptyAfterNormalization, "hashtag is empty");
  std::string out(raw);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

/// User keys are opaque: only a leading '@' is dropped, case is kept.
inline std::string normalize_user(std::string_view raw) {
  if (!raw.empty() && raw.front() == '@') raw.remove_prefix(1);
  if (raw.empty()) throw Error(ErrorCode::EmptyAfterNormalization, "user key is empty");
  return std::string(raw);
}

/// One Authored edge per hashtag, one Favorited edge per (favoriter, hashtag)
/// and one CoMentioned edge per (mentioned user, hashtag). Mentioned users are
/// never linked to each other.
inline std::vector<EdgeTriplet> edges_from_record(const TweetRecord& rec) {
  std::vector<EdgeTriplet> out;
  if (rec.hashtags.empty()) return out;
  out.reserve(rec.hashtags.size() * (1 + rec.favorited_by.size() + rec.mentions.size()));
  const auto user = [](const std::string& k) { return NodeRef{NodeKind::User, normalize_user(k)}; };
  for (const auto& raw_tag : rec.hashtags) {
    const NodeRef tag{NodeKind::Hashtag, normalize_hashtag(raw_tag)};
    out.push_back({user(rec.author), RelationKind::Authored, tag});
    for (const auto& f : rec.favorited_by) out.push_back({user(f), RelationKind::Favorited, tag});
    for (const auto& m : rec.mentions) out.push_back({user(m), RelationKind::CoMentioned, tag});
  }
  return out;
}

// Dense registry of typed nodes. Index order is first-insertion order.
class NodeRegistry {
 public:
  std::uint32_t intern(const NodeRef& ref) {
    auto [it, inserted] = index_.try_emplace(map_key(ref), static_cast<std::uint32_t>(nodes_.size()));
    if (inserted) {
      nodes_.push_back(ref);
      (ref.kind == NodeKind::User ? users_ : hashtags_).push_back(it->second);
    }
    return it->second;
  }

  std::optional<std::uint32_t> find(const NodeRef& ref) const {
    auto it = index_.find(map_key(ref));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(const NodeRef& ref) const { return index_.count(map_key(ref)) != 0; }

  const NodeRef& at(std::uint32_t i) const { return nodes_.at(i); }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  const std::vector<NodeRef>& nodes() const { return nodes_; }
  const std::vector<std::uint32_t>& users() const { return users_; }
  const std::vector<std::uint32_t>& hashtags() const { return hashtags_; }

 private:
  static std::string map_key(const NodeRef& ref) {
    std::string k;
    k.reserve(ref.key.size() + 2);
    k.push_back(ref.kind == NodeKind::User ? 'u' : 'h');
    k.push_back(':');
    k += ref.key;
    return k;
  }

  std::vector<NodeRef> nodes_;
  std::vector<std::uint32_t> users_;
  std::vector<std::uint32_t> hashtags_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

class HeteroGraph {
 public:
  void add_edge(const EdgeTriplet& e) {
    const auto h = registry_.intern(e.head);
    const auto t = registry_.intern(e.tail);
    add_edge(Edge{h, e.relation, t});
  }

  // Endpoints must already be registered.
  void add_edge(const Edge& e) {
    if (e.head >= registry_.size() || e.tail >= registry_.size())
      throw Error(ErrorCode::UnknownNode, "edge endpoint not in registry");
    edges_.push_back(e);
    if (degree_.size() < registry_.size()) degree_.resize(registry_.size(), 0);
    ++degree_[e.head];
    ++degree_[e.tail];
    ++relation_counts_[static_cast<std::size_t>(e.relation)];
  }

  std::uint32_t add_node(const NodeRef& ref) {
    const auto i = registry_.intern(ref);
    if (degree_.size() < registry_.size()) degree_.resize(registry_.size(), 0);
    return i;
  }

  const NodeRegistry& registry() const { return registry_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t num_nodes() const { return registry_.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  std::size_t num_users() const { return registry_.users().size(); }
  std::size_t num_hashtags() const { return registry_.hashtags().size(); }

  std::size_t relation_count(RelationKind r) const {
    return relation_counts_[static_cast<std::size_t>(r)];
  }

  std::size_t degree(std::uint32_t node) const { return node < degree_.size() ? degree_[node] : 0; }

  EdgeTriplet resolve(const Edge& e) const {
    return {registry_.at(e.head), e.relation, registry_.at(e.tail)};
  }

 private:
  NodeRegistry registry_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> degree_;
  std::array<std::size_t, kNumRelations> relation_counts_{};
};

template <typename Range>
HeteroGraph build_graph(const Range& records) {
  HeteroGraph g;
  for (const TweetRecord& rec : records)
    for (const auto& e : edges_from_record(rec)) g.add_edge(e);
  return g;
}

/// Uniform draws with replacement from the edge multiset.
inline std::vector<Edge> sample_edge_batch(const HeteroGraph& g, std::size_t n, std::uint64_t seed) {
  if (n == 0) return {};
  if (g.num_edges() == 0) throw Error(ErrorCode::EmptyGraph, "cannot sample from a graph with no edges");
  Rng rng(seed);
  std::vector<Edge> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(g.edges()[rng.below(g.num_edges())]);
  return out;
}

}  // namespace ntulm
