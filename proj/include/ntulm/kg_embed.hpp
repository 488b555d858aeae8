#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "ntulm/common.hpp"
#include "ntulm/hin_graph.hpp"

namespace ntulm {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Node and relation vectors for one graph. Row i of `nodes` belongs to
/// registry node i; row k of `relations` to RelationKind k.
struct EmbeddingTable {
  std::size_t dim = 0;
  RowMatrix nodes;
  RowMatrix relations;
  NodeRegistry registry;

  std::size_t num_nodes() const { return static_cast<std::size_t>(nodes.rows()); }

  auto relation(RelationKind r) const { return relations.row(static_cast<Eigen::Index>(r)); }

  std::optional<std::uint32_t> find(const NodeRef& ref) const { return registry.find(ref); }

  bool all_finite() const { return nodes.allFinite() && relations.allFinite(); }

  // Column mean of the node matrix: the stand-in for unknown NTUs.
  Eigen::VectorXd mean_node_vector() const {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < nodes.rows(); ++i) m += nodes.row(i).transpose();
    if (nodes.rows() > 0) m /= static_cast<double>(nodes.rows());
    return m;
  }
};

struct KgeConfig {
  std::size_t dim = 200;
  double learning_rate = 0.05;
  std::size_t epochs = 10;
  std::size_t batch_size = 1000;
  std::size_t batch_negatives = 5;
  std::size_t uniform_negatives = 5;
  std::uint64_t rng_seed = 0;
  bool parallel = false;
  std::size_t threads = 0;  // 0: hardware concurrency (parallel mode only)

  // Values used for the full-scale graph; desk-scale defaults above.
  static KgeConfig full_scale() {
    KgeConfig c;
    c.batch_size = 100'000;
    c.batch_negatives = 500;
    c.uniform_negatives = 500;
    return c;
  }

  void validate() const {
    if (dim == 0 || epochs > 1'000'000 || batch_size == 0 || !(learning_rate > 0))
      throw Error(ErrorCode::ConfigInvalid, "kge config needs dim > 0, batch_size > 0, learning_rate > 0");
    if (batch_negatives + uniform_negatives == 0)
      throw Error(ErrorCode::ConfigInvalid, "kge config needs at least one negative per positive");
  }
};

/// f(u, r, v) = u . (v + r)
template <typename U, typename R, typename V>
double score_triplet(const U& u, const R& r, const V& v) {
  if (u.size() != r.size() || u.size() != v.size())
    throw Error(ErrorCode::DimensionMismatch, "score_triplet operands differ in length");
  double s = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) s += u(i) * (v(i) + r(i));
  return s;
}

inline double score_triplet(std::span<const double> u, std::span<const double> r, std::span<const double> v) {
  using Map = Eigen::Map<const Eigen::VectorXd>;
  return score_triplet(Map(u.data(), static_cast<Eigen::Index>(u.size())),
                       Map(r.data(), static_cast<Eigen::Index>(r.size())),
                       Map(v.data(), static_cast<Eigen::Index>(v.size())));
}

inline double score_edge(const EmbeddingTable& t, const Edge& e) {
  return score_triplet(t.nodes.row(e.head), t.relation(e.relation), t.nodes.row(e.tail));
}

/// Replaces the head with a uniform User (probability 1/2) or the tail with a
/// uniform Hashtag. No check that the result is absent from the graph.
inline Edge corrupt_edge(const Edge& e, const NodeRegistry& reg, Rng& rng) {
  if (reg.users().empty() || reg.hashtags().empty())
    throw Error(ErrorCode::EmptyNodeSet, "corruption needs at least one user and one hashtag");
  Edge out = e;
  if (rng.bernoulli(0.5))
    out.head = reg.users()[rng.below(reg.users().size())];
  else
    out.tail = reg.hashtags()[rng.below(reg.hashtags().size())];
  return out;
}

inline Edge corrupt_edge(const Edge& e, const HeteroGraph& g, Rng& rng) { return corrupt_edge(e, g.registry(), rng); }

/// Per positive: `batch_negatives` corruptions whose replacement endpoint is
/// taken from another positive in the same batch, then `uniform_negatives`
/// corruptions drawn from the whole registry.
inline std::vector<std::vector<Edge>> sample_negatives(std::span<const Edge> positives, std::size_t batch_negatives,
                                                       std::size_t uniform_negatives, const NodeRegistry& reg,
                                                       Rng& rng) {
  std::vector<std::vector<Edge>> out(positives.size());
  const std::size_t n = positives.size();
  for (std::size_t i = 0; i < n; ++i) {
    auto& negs = out[i];
    negs.reserve(batch_negatives + uniform_negatives);
    for (std::size_t k = 0; k < batch_negatives; ++k) {
      if (n < 2) {
        negs.push_back(corrupt_edge(positives[i], reg, rng));
        continue;
      }
      std::size_t other = rng.below(n - 1);
      if (other >= i) ++other;
      Edge neg = positives[i];
      if (rng.bernoulli(0.5))
        neg.head = positives[other].head;
      else
        neg.tail = positives[other].tail;
      negs.push_back(neg);
    }
    for (std::size_t k = 0; k < uniform_negatives; ++k) negs.push_back(corrupt_edge(positives[i], reg, rng));
  }
  return out;
}

// Row-sparse gradient; std::map keeps the update order deterministic.
struct SparseGradient {
  std::map<std::uint32_t, Eigen::VectorXd> nodes;
  std::map<std::uint32_t, Eigen::VectorXd> relations;
};

struct BatchObjective {
  double loss = 0.0;  // summed over positives, negated log-likelihood
  SparseGradient grad;
};

namespace detail {

inline void accumulate(std::map<std::uint32_t, Eigen::VectorXd>& rows, std::uint32_t idx,
                       const Eigen::VectorXd& g, double scale) {
  auto [it, inserted] = rows.try_emplace(idx, Eigen::VectorXd());
  if (inserted)
    it->second = scale * g;
  else
    it->second += scale * g;
}

// Shared body of the serial and hogwild objectives. `row` returns a copy of a
// node (relation=false) or relation row.
template <typename RowFn>
BatchObjective objective_impl(std::span<const Edge> positives, const std::vector<std::vector<Edge>>& negatives,
                              RowFn&& row) {
  BatchObjective out;
  const auto add_term = [&](const Edge& e, bool positive) {
    const Eigen::VectorXd u = row(false, e.head);
    const Eigen::VectorXd v = row(false, e.tail);
    const Eigen::VectorXd r = row(true, static_cast<std::uint32_t>(e.relation));
    const double f = u.dot(v + r);
    // -log s(f) for positives, -log s(-f) for negatives
    out.loss -= positive ? log_sigmoid(f) : log_sigmoid(-f);
    const double dldf = positive ? sigmoid(f) - 1.0 : sigmoid(f);
    accumulate(out.grad.nodes, e.head, v + r, dldf);
    accumulate(out.grad.nodes, e.tail, u, dldf);
    accumulate(out.grad.relations, static_cast<std::uint32_t>(e.relation), u, dldf);
  };
  for (std::size_t i = 0; i < positives.size(); ++i) {
    add_term(positives[i], true);
    if (i < negatives.size())
      for (const auto& neg : negatives[i]) add_term(neg, false);
  }
  if (!std::isfinite(out.loss)) throw Error(ErrorCode::NonFiniteLoss, "kge batch loss is not finite");
  return out;
}

}  // namespace detail

/// Negated negative-sampling log-likelihood of a batch with fixed negatives,
/// and its gradient restricted to the rows the batch touches.
inline BatchObjective batch_objective(std::span<const Edge> positives, const std::vector<std::vector<Edge>>& negatives,
                                      const EmbeddingTable& table) {
  return detail::objective_impl(positives, negatives, [&](bool rel, std::uint32_t i) -> Eigen::VectorXd {
    return rel ? table.relations.row(i).transpose() : table.nodes.row(i).transpose();
  });
}

/// Draws `uniform_negatives_per_positive` corruptions per positive, then
/// evaluates the objective.
inline BatchObjective batch_objective(std::span<const Edge> positives, std::size_t negatives_per_positive,
                                      const EmbeddingTable& table, Rng& rng) {
  if (positives.empty()) throw std::invalid_argument("batch_objective needs at least one positive");
  const auto negs = sample_negatives(positives, 0, negatives_per_positive, table.registry, rng);
  return batch_objective(positives, negs, table);
}

/// i.i.d. uniform in [-1/sqrt(dim), 1/sqrt(dim)], nodes first then relations.
inline EmbeddingTable init_table(const NodeRegistry& reg, std::size_t dim, Rng& rng) {
  EmbeddingTable t;
  t.dim = dim;
  t.registry = reg;
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  t.nodes.resize(static_cast<Eigen::Index>(reg.size()), static_cast<Eigen::Index>(dim));
  t.relations.resize(static_cast<Eigen::Index>(kNumRelations), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < t.nodes.size(); ++i) t.nodes.data()[i] = rng.uniform(-bound, bound);
  for (Eigen::Index i = 0; i < t.relations.size(); ++i) t.relations.data()[i] = rng.uniform(-bound, bound);
  return t;
}

inline void apply_sgd(EmbeddingTable& t, const SparseGradient& g, double lr) {
  for (const auto& [i, v] : g.nodes) t.nodes.row(i) -= lr * v.transpose();
  for (const auto& [k, v] : g.relations) t.relations.row(k) -= lr * v.transpose();
}

namespace detail {

inline void train_epoch_hogwild(EmbeddingTable& t, const HeteroGraph& g, const KgeConfig& cfg,
                                const std::vector<std::size_t>& order, std::uint64_t epoch_seed, double& loss_sum) {
  std::size_t threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(1, order.size() / cfg.batch_size));
  std::vector<double> losses(threads, 0.0);
  std::vector<std::exception_ptr> errors(threads);

  const auto load = [&](bool rel, std::uint32_t i) -> Eigen::VectorXd {
    double* base = rel ? t.relations.row(i).data() : t.nodes.row(i).data();
    Eigen::VectorXd v(static_cast<Eigen::Index>(t.dim));
    for (std::size_t c = 0; c < t.dim; ++c) v(c) = std::atomic_ref<double>(base[c]).load(std::memory_order_relaxed);
    return v;
  };
  const auto store = [&](bool rel, std::uint32_t i, const Eigen::VectorXd& grad) {
    double* base = rel ? t.relations.row(i).data() : t.nodes.row(i).data();
    for (std::size_t c = 0; c < t.dim; ++c)
      std::atomic_ref<double>(base[c]).fetch_add(-cfg.learning_rate * grad(c), std::memory_order_relaxed);
  };

  const auto worker = [&](std::size_t w) {
    try {
      Rng rng(epoch_seed + 0x1000 * (w + 1));
      const std::size_t lo = order.size() * w / threads, hi = order.size() * (w + 1) / threads;
      std::vector<Edge> batch;
      for (std::size_t start = lo; start < hi; start += cfg.batch_size) {
        batch.clear();
        for (std::size_t j = start; j < std::min(hi, start + cfg.batch_size); ++j) batch.push_back(g.edges()[order[j]]);
        const auto negs = sample_negatives(batch, cfg.batch_negatives, cfg.uniform_negatives, g.registry(), rng);
        const auto res = objective_impl(batch, negs, load);
        losses[w] += res.loss;
        for (const auto& [i, v] : res.grad.nodes) store(false, i, v);
        for (const auto& [k, v] : res.grad.relations) store(true, k, v);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };

  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(worker, w);
  pool.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  loss_sum = std::accumulate(losses.begin(), losses.end(), 0.0);
}

}  // namespace detail

/// SGD over shuffled edge batches. The serial path is bit-reproducible for a
/// given seed; the parallel path applies lock-free relaxed updates and only
/// promises finiteness. `loss_trace` receives the mean loss per positive edge
/// for each epoch.
inline EmbeddingTable train_kge(const HeteroGraph& g, const KgeConfig& cfg, std::vector<double>* loss_trace = nullptr) {
  cfg.validate();
  if (g.num_edges() == 0) throw Error(ErrorCode::EmptyGraph, "train_kge needs at least one edge");
  Rng rng(cfg.rng_seed);
  EmbeddingTable t = init_table(g.registry(), cfg.dim, rng);

  std::vector<std::size_t> order(g.num_edges());
  std::vector<Edge> batch;
  batch.reserve(std::min(cfg.batch_size, g.num_edges()));
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    if (cfg.parallel) {
      detail::train_epoch_hogwild(t, g, cfg, order, rng.fork(), loss_sum);
      if (!t.all_finite()) throw Error(ErrorCode::NonFiniteLoss, "embedding table diverged");
    } else {
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        batch.clear();
        for (std::size_t j = start; j < std::min(order.size(), start + cfg.batch_size); ++j)
          batch.push_back(g.edges()[order[j]]);
        const auto negs = sample_negatives(batch, cfg.batch_negatives, cfg.uniform_negatives, g.registry(), rng);
        const auto res = batch_objective(batch, negs, t);
        loss_sum += res.loss;
        apply_sgd(t, res.grad, cfg.learning_rate);
      }
    }
    if (loss_trace) loss_trace->push_back(loss_sum / static_cast<double>(g.num_edges()));
  }
  return t;
}

struct RankStats {
  std::size_t count = 0;
  double mrr = 0.0;
  double hits_at_1 = 0.0;
  double hits_at_10 = 0.0;
};

struct LinkEvalReport {
  RankStats overall;
  std::map<RelationKind, RankStats> per_relation;
};

/// 1-based rank of the true tail among all hashtags by descending f(u, r, .);
/// ties go to the lower node index.
inline std::size_t tail_rank(const EmbeddingTable& t, const Edge& e) {
  const auto u = t.nodes.row(e.head);
  const auto r = t.relation(e.relation);
  const double truth = score_triplet(u, r, t.nodes.row(e.tail));
  std::size_t rank = 1;
  for (auto h : t.registry.hashtags()) {
    if (h == e.tail) continue;
    const double s = score_triplet(u, r, t.nodes.row(h));
    if (s > truth || (s == truth && h < e.tail)) ++rank;
  }
  return rank;
}

inline LinkEvalReport link_prediction_eval(const EmbeddingTable& t, std::span<const Edge> heldout) {
  LinkEvalReport rep;
  const auto add = [](RankStats& s, std::size_t rank) {
    ++s.count;
    s.mrr += 1.0 / static_cast<double>(rank);
    s.hits_at_1 += rank <= 1 ? 1.0 : 0.0;
    s.hits_at_10 += rank <= 10 ? 1.0 : 0.0;
  };
  for (const auto& e : heldout) {
    if (e.head >= t.num_nodes() || e.tail >= t.num_nodes())
      throw Error(ErrorCode::UnknownNode, "held-out edge references an unregistered node");
    const auto rank = tail_rank(t, e);
    add(rep.overall, rank);
    add(rep.per_relation[e.relation], rank);
  }
  const auto finish = [](RankStats& s) {
    if (s.count == 0) return;
    const double n = static_cast<double>(s.count);
    s.mrr /= n;
    s.hits_at_1 /= n;
    s.hits_at_10 /= n;
  };
  finish(rep.overall);
  for (auto& [r, s] : rep.per_relation) finish(s);
  return rep;
}

inline LinkEvalReport link_prediction_eval(const EmbeddingTable& t, std::span<const EdgeTriplet> heldout) {
  std::vector<Edge> edges;
  edges.reserve(heldout.size());
  for (const auto& e : heldout) {
    const auto h = t.find(e.head), v = t.find(e.tail);
    if (!h || !v) throw Error(ErrorCode::UnknownNode, "held-out edge references unknown node '" + (h ? e.tail.key : e.head.key) + "'");
    edges.push_back({*h, e.relation, *v});
  }
  return link_prediction_eval(t, std::span<const Edge>(edges));
}

}  // namespace ntulm
