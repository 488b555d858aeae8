#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ntulm/kg_embed.hpp"
#include "ntulm/synthetic.hpp"
#include "ntulm/table_io.hpp"
#include "test_util.hpp"

using namespace ntulm;

namespace {

EmbeddingTable zero_table(const NodeRegistry& reg, std::size_t dim) {
  EmbeddingTable t;
  t.dim = dim;
  t.registry = reg;
  t.nodes = RowMatrix::Zero(static_cast<Eigen::Index>(reg.size()), static_cast<Eigen::Index>(dim));
  t.relations = RowMatrix::Zero(3, static_cast<Eigen::Index>(dim));
  return t;
}

HeteroGraph small_graph(std::uint64_t seed) {
  // 5 nodes: 3 users, 2 hashtags
  Rng rng(seed);
  HeteroGraph g;
  for (int i = 0; i < 3; ++i) g.add_node({NodeKind::User, "u" + std::to_string(i)});
  for (int i = 0; i < 2; ++i) g.add_node({NodeKind::Hashtag, "h" + std::to_string(i)});
  for (int i = 0; i < 6; ++i)
    g.add_edge(Edge{static_cast<std::uint32_t>(rng.below(3)), kAllRelations[rng.below(3)],
                    static_cast<std::uint32_t>(3 + rng.below(2))});
  return g;
}

// Independent loss: walks the triplets with plain loops, no Eigen rows.
double reference_loss(const std::vector<Edge>& pos, const std::vector<std::vector<Edge>>& neg,
                      const EmbeddingTable& t) {
  auto f = [&](const Edge& e) {
    double s = 0;
    for (std::size_t c = 0; c < t.dim; ++c)
      s += t.nodes(e.head, c) * (t.nodes(e.tail, c) + t.relations(static_cast<int>(e.relation), c));
    return s;
  };
  double loss = 0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    loss += std::log1p(std::exp(-f(pos[i])));
    for (const auto& n : neg[i]) loss += std::log1p(std::exp(f(n)));
  }
  return loss;
}

}  // namespace

TEST(ScoreTriplet, ClosedForms) {
  Eigen::Vector2d u(1, 0), r(0, 0), v(0, 1);
  EXPECT_EQ(score_triplet(u, r, v), 0.0);
  EXPECT_EQ(score_triplet(Eigen::Vector2d(1, 2), Eigen::Vector2d(1, 0), Eigen::Vector2d(3, -1)), 2.0);
  Eigen::Vector3d w(0.5, -2, 3);
  EXPECT_DOUBLE_EQ(score_triplet(w, Eigen::Vector3d::Zero(), w), w.squaredNorm());
}

TEST(ScoreTriplet, SymmetricAtZeroRelation) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd a(7), b(7);
    for (int i = 0; i < 7; ++i) a(i) = rng.normal(), b(i) = rng.normal();
    const Eigen::VectorXd z = Eigen::VectorXd::Zero(7);
    EXPECT_EQ(score_triplet(a, z, b), score_triplet(b, z, a));
  }
}

TEST(ScoreTriplet, DimensionMismatch) {
  try {
    score_triplet(Eigen::Vector2d(1, 1), Eigen::Vector3d(1, 1, 1), Eigen::Vector2d(1, 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(CorruptEdge, SingleUserSingleHashtagReturnsInput) {
  HeteroGraph g;
  g.add_edge(EdgeTriplet{{NodeKind::User, "a"}, RelationKind::Favorited, {NodeKind::Hashtag, "h"}});
  Rng rng(4);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(corrupt_edge(g.edges()[0], g, rng), g.edges()[0]);
}

TEST(CorruptEdge, EmptyNodeSet) {
  HeteroGraph g;
  g.add_node({NodeKind::User, "a"});
  Rng rng(4);
  try {
    corrupt_edge(Edge{0, RelationKind::Authored, 0}, g, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyNodeSet);
  }
}

TEST(CorruptEdge, ChangesOneEndpointAndFairCoin) {
  const auto p = synthetic::planted_partition(2, 50, 10, 200, 7);
  Rng rng(99);
  std::size_t head_changes = 0, tail_changes = 0;
  const std::size_t n = 10'000;
  for (std::size_t i = 0; i < n; ++i) {
    const Edge e = p.graph.edges()[i % p.graph.num_edges()];
    const Edge c = corrupt_edge(e, p.graph, rng);
    EXPECT_EQ(c.relation, e.relation);
    EXPECT_FALSE(c.head != e.head && c.tail != e.tail);
    EXPECT_EQ(p.graph.registry().at(c.head).kind, NodeKind::User);
    EXPECT_EQ(p.graph.registry().at(c.tail).kind, NodeKind::Hashtag);
    head_changes += c.head != e.head;
    tail_changes += c.tail != e.tail;
  }
  // A corruption can redraw the original endpoint; bound the coin through the
  // changed fractions, each of which is (1/2)(1 - 1/|set|).
  const double head_frac = static_cast<double>(head_changes) / n / (1.0 - 1.0 / 50.0);
  const double tail_frac = static_cast<double>(tail_changes) / n / (1.0 - 1.0 / 10.0);
  EXPECT_GE(head_frac, 0.48);
  EXPECT_LE(head_frac, 0.52);
  EXPECT_GE(tail_frac, 0.48);
  EXPECT_LE(tail_frac, 0.52);
}

TEST(BatchObjective, LogTwoAtZeroScore) {
  HeteroGraph g;
  g.add_edge(EdgeTriplet{{NodeKind::User, "a"}, RelationKind::Authored, {NodeKind::Hashtag, "h"}});
  const auto t = zero_table(g.registry(), 4);
  const std::vector<Edge> pos{g.edges()[0]};
  const auto res = batch_objective(pos, std::vector<std::vector<Edge>>{{}}, t);
  EXPECT_NEAR(res.loss, std::log(2.0), 1e-12);
}

TEST(BatchObjective, ZeroTableClosedForm) {
  const auto p = synthetic::planted_partition(2, 20, 6, 50, 3);
  const auto t = zero_table(p.graph.registry(), 8);
  Rng rng(8);
  for (std::size_t k : {0u, 1u, 5u, 12u}) {
    const std::size_t n = 17;
    std::span<const Edge> pos(p.graph.edges().data(), n);
    const auto res = batch_objective(pos, k, t, rng);
    EXPECT_NEAR(res.loss, n * (1.0 + k) * std::log(2.0), 1e-12) << k;
  }
}

TEST(BatchObjective, MatchesReferenceLoss) {
  const auto g = small_graph(5);
  Rng rng(6);
  const auto t = init_table(g.registry(), 4, rng);
  const auto negs = sample_negatives(g.edges(), 2, 3, g.registry(), rng);
  EXPECT_NEAR(batch_objective(g.edges(), negs, t).loss, reference_loss(g.edges(), negs, t), 1e-12);
}

TEST(BatchObjective, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto g = small_graph(seed);
    Rng rng(seed + 100);
    auto t = init_table(g.registry(), 4, rng);
    t.nodes *= 3.0;  // push scores away from 0 so sigmoid curvature matters
    const auto negs = sample_negatives(g.edges(), 2, 2, g.registry(), rng);
    const auto res = batch_objective(g.edges(), negs, t);

    const double h = 1e-6;
    double max_rel = 0.0;
    const auto check = [&](RowMatrix& m, const std::map<std::uint32_t, Eigen::VectorXd>& grad) {
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
          const double saved = m(r, c);
          m(r, c) = saved + h;
          const double up = reference_loss(g.edges(), negs, t);
          m(r, c) = saved - h;
          const double down = reference_loss(g.edges(), negs, t);
          m(r, c) = saved;
          const double numeric = (up - down) / (2 * h);
          auto it = grad.find(static_cast<std::uint32_t>(r));
          const double analytic = it == grad.end() ? 0.0 : it->second(c);
          const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
          max_rel = std::max(max_rel, std::abs(numeric - analytic) / denom);
        }
    };
    check(t.nodes, res.grad.nodes);
    check(t.relations, res.grad.relations);
    EXPECT_LT(max_rel, 1e-4) << "seed " << seed;
  }
}

TEST(BatchObjective, NonFiniteLoss) {
  HeteroGraph g;
  g.add_edge(EdgeTriplet{{NodeKind::User, "a"}, RelationKind::Authored, {NodeKind::Hashtag, "h"}});
  auto t = zero_table(g.registry(), 2);
  t.nodes(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    batch_objective(g.edges(), std::vector<std::vector<Edge>>{{}}, t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteLoss);
  }
}

TEST(TrainKge, ZeroEpochsReturnsInitialization) {
  const auto p = synthetic::planted_partition(2, 10, 4, 40, 1);
  KgeConfig cfg;
  cfg.dim = 6;
  cfg.epochs = 0;
  cfg.rng_seed = 77;
  const auto t = train_kge(p.graph, cfg);
  Rng rng(77);
  const auto init = init_table(p.graph.registry(), 6, rng);
  EXPECT_TRUE(t.nodes == init.nodes);
  EXPECT_TRUE(t.relations == init.relations);
}

TEST(TrainKge, DeterministicSerial) {
  const auto p = synthetic::planted_partition(2, 20, 6, 300, 2);
  KgeConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 3;
  cfg.batch_size = 32;
  cfg.rng_seed = 5;
  const auto a = train_kge(p.graph, cfg);
  const auto b = train_kge(p.graph, cfg);
  EXPECT_EQ(0, std::memcmp(a.nodes.data(), b.nodes.data(), sizeof(double) * a.nodes.size()));
  EXPECT_EQ(0, std::memcmp(a.relations.data(), b.relations.data(), sizeof(double) * a.relations.size()));
}

TEST(TrainKge, UntouchedRowsUnchanged) {
  const auto p = synthetic::planted_partition(2, 30, 8, 200, 4);
  Rng rng(1);
  auto t = init_table(p.graph.registry(), 5, rng);
  const auto before = t;
  const std::vector<Edge> batch(p.graph.edges().begin(), p.graph.edges().begin() + 3);
  const auto negs = sample_negatives(batch, 1, 1, p.graph.registry(), rng);
  const auto res = batch_objective(batch, negs, t);
  apply_sgd(t, res.grad, 0.05);
  std::size_t untouched = 0;
  for (std::uint32_t i = 0; i < t.num_nodes(); ++i) {
    if (res.grad.nodes.count(i)) continue;
    ++untouched;
    EXPECT_EQ(0, std::memcmp(t.nodes.row(i).data(), before.nodes.row(i).data(), sizeof(double) * t.dim));
  }
  EXPECT_GT(untouched, 0u);
}

TEST(TrainKge, PlantedPartitionSeparatesBlocks) {
  const auto p = synthetic::planted_partition(2, 50, 10, 2000, 10);
  KgeConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 10;
  cfg.batch_size = 100;
  cfg.rng_seed = 3;
  std::vector<double> trace;
  const auto t = train_kge(p.graph, cfg, &trace);
  ASSERT_EQ(trace.size(), 10u);
  EXPECT_LT(trace.back(), trace.front());

  double intra = 0, inter = 0;
  std::size_t n_intra = 0, n_inter = 0;
  const auto& reg = p.graph.registry();
  for (auto u : reg.users())
    for (auto h : reg.hashtags()) {
      const double s = score_triplet(t.nodes.row(u), t.relation(RelationKind::Authored), t.nodes.row(h));
      if (p.block[u] == p.block[h])
        intra += s, ++n_intra;
      else
        inter += s, ++n_inter;
    }
  EXPECT_GT(intra / n_intra, inter / n_inter);
}

TEST(TrainKge, ParallelModeStaysFinite) {
  const auto p = synthetic::planted_partition(2, 50, 10, 2000, 10);
  KgeConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 5;
  cfg.batch_size = 50;
  cfg.parallel = true;
  cfg.threads = 4;
  std::vector<double> trace;
  const auto t = train_kge(p.graph, cfg, &trace);
  EXPECT_TRUE(t.all_finite());
  EXPECT_LT(trace.back(), trace.front());
}

TEST(LinkEval, PerfectTableGivesMrrOne) {
  // One-hot construction: user i prefers hashtag i strongly.
  HeteroGraph g;
  for (int i = 0; i < 4; ++i)
    g.add_edge(EdgeTriplet{{NodeKind::User, "u" + std::to_string(i)}, RelationKind::Authored,
                           {NodeKind::Hashtag, "h" + std::to_string(i)}});
  auto t = zero_table(g.registry(), 4);
  for (const auto& e : g.edges()) {
    const int i = static_cast<int>(e.head / 2);
    t.nodes(e.head, i) = 1.0;
    t.nodes(e.tail, i) = 1.0;
  }
  const auto rep = link_prediction_eval(t, std::span<const Edge>(g.edges()));
  EXPECT_DOUBLE_EQ(rep.overall.mrr, 1.0);
  EXPECT_DOUBLE_EQ(rep.overall.hits_at_1, 1.0);
  EXPECT_DOUBLE_EQ(rep.per_relation.at(RelationKind::Authored).mrr, 1.0);
}

TEST(LinkEval, ZeroTableMatchesBruteForceRanking) {
  const auto p = synthetic::planted_partition(3, 30, 15, 120, 6);
  const auto t = zero_table(p.graph.registry(), 3);
  const auto rep = link_prediction_eval(t, std::span<const Edge>(p.graph.edges()));

  // Brute force: sort candidates by (score desc, index asc) and locate truth.
  double mrr = 0, h1 = 0, h10 = 0;
  for (const auto& e : p.graph.edges()) {
    std::vector<std::pair<double, std::uint32_t>> cand;
    for (auto h : p.graph.registry().hashtags()) cand.push_back({-0.0, h});
    std::sort(cand.begin(), cand.end());
    std::size_t rank = 0;
    while (cand[rank].second != e.tail) ++rank;
    ++rank;
    mrr += 1.0 / rank;
    h1 += rank == 1;
    h10 += rank <= 10;
  }
  const double n = static_cast<double>(p.graph.num_edges());
  EXPECT_DOUBLE_EQ(rep.overall.mrr, mrr / n);
  EXPECT_DOUBLE_EQ(rep.overall.hits_at_1, h1 / n);
  EXPECT_DOUBLE_EQ(rep.overall.hits_at_10, h10 / n);
  EXPECT_LE(rep.overall.hits_at_1, rep.overall.hits_at_10);
}

TEST(LinkEval, UnknownNode) {
  const auto p = synthetic::planted_partition(2, 4, 2, 4, 1);
  const auto t = zero_table(p.graph.registry(), 2);
  const std::vector<EdgeTriplet> held{{{NodeKind::User, "ghost"}, RelationKind::Authored, {NodeKind::Hashtag, "tag0"}}};
  try {
    link_prediction_eval(t, std::span<const EdgeTriplet>(held));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownNode);
  }
}

TEST(LinkEval, TrainedBeatsRandomOnHoldout) {
  const auto p = synthetic::planted_partition(2, 50, 10, 2000, 12);
  std::vector<Edge> train(p.graph.edges().begin(), p.graph.edges().begin() + 1800);
  std::vector<Edge> held(p.graph.edges().begin() + 1800, p.graph.edges().end());
  KgeConfig cfg;
  cfg.dim = 8;
  cfg.batch_size = 100;
  cfg.rng_seed = 1;
  const auto trained = train_kge(synthetic::subgraph(p.graph, train), cfg);
  Rng rng(1);
  const auto random = init_table(p.graph.registry(), 8, rng);
  const auto rt = link_prediction_eval(trained, std::span<const Edge>(held));
  const auto rr = link_prediction_eval(random, std::span<const Edge>(held));
  EXPECT_GT(rt.overall.mrr, rr.overall.mrr);
  EXPECT_LE(rt.overall.mrr, 1.0);
  EXPECT_GE(rt.overall.mrr, 0.0);
}

TEST(TableIo, BinaryLayoutAndRoundTrip) {
  const auto p = synthetic::planted_partition(2, 6, 4, 20, 2);
  Rng rng(3);
  const auto t = init_table(p.graph.registry(), 5, rng);
  std::ostringstream bin, idx, tsv;
  write_table(bin, t);
  write_table_index(idx, t);
  write_table_tsv(tsv, t);
  const auto bytes = bin.str();
  ASSERT_EQ(bytes.size(), 20 + 4 * (10 * 5 + 3 * 5));
  EXPECT_EQ(bytes.substr(0, 4), "NTUE");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 5);   // dim
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 10); // node count
  EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 3);  // relation count

  std::istringstream bin_in(bytes), idx_in(idx.str());
  const auto back = read_table(bin_in, idx_in);
  ASSERT_EQ(back.num_nodes(), t.num_nodes());
  for (Eigen::Index i = 0; i < t.nodes.size(); ++i)
    EXPECT_EQ(back.nodes.data()[i], static_cast<double>(static_cast<float>(t.nodes.data()[i])));
  EXPECT_EQ(back.registry.nodes(), t.registry.nodes());
  EXPECT_EQ(tsv.str().substr(0, 6), "user0\t");
}
