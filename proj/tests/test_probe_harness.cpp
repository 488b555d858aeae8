#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "metric_oracles.hpp"
#include "ntulm/benchmark.hpp"
#include "ntulm/metrics.hpp"
#include "ntulm/probe.hpp"
#include "ntulm/synthetic.hpp"

using namespace ntulm;

namespace {

Eigen::MatrixXd one_hot(const std::vector<int>& labels, int classes) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) t(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return t;
}

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::FormatError;
}

}  // namespace

TEST(TrainProbe, SeparableBlobs) {
  Rng rng(1);
  const int n = 200;
  Eigen::MatrixXd x = gaussian(n, 8, rng) * 0.5;
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    labels[i] = i % 2;
    x.row(i).array() += labels[i] ? 1.5 : -1.5;
  }
  ProbeConfig cfg;
  cfg.input_dim = 8;
  cfg.num_classes = 2;
  cfg.rng_seed = 4;
  const auto p = train_probe(x, one_hot(labels, 2), cfg);
  EXPECT_GE(accuracy(argmax_rows(probe_predict(p, x, TaskType::Multiclass)), labels), 0.99);
}

TEST(TrainProbe, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  const Eigen::MatrixXd x = gaussian(6, 5, rng);
  for (auto type : {TaskType::Multiclass, TaskType::Multilabel}) {
    ProbeConfig cfg;
    cfg.input_dim = 5;
    cfg.hidden_dim = 4;
    cfg.num_classes = 3;
    cfg.rng_seed = 9;
    auto p = init_probe(cfg);
    Eigen::MatrixXd t = one_hot({0, 1, 2, 1, 0, 2}, 3);
    if (type == TaskType::Multilabel) t(0, 2) = 1.0, t(3, 0) = 1.0;
    ProbeParams g;
    probe_loss(p, x, t, type, &g);
    const auto res = fixtures::central_difference_check({&p.w1, &p.b1, &p.w2, &p.b2}, {&g.w1, &g.b1, &g.w2, &g.b2},
                                                        [&] { return probe_loss(p, x, t, type, nullptr); });
    EXPECT_LT(res.max_rel_error, 1e-4);
    EXPECT_EQ(res.checked, 5u * 4 + 4 + 4 * 3 + 3);
  }
}

TEST(TrainProbe, ZeroEpochsIsChance) {
  Rng rng(3);
  const int n = 4000;
  const Eigen::MatrixXd x = gaussian(n, 6, rng);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[i] = i % 4;
  ProbeConfig cfg;
  cfg.input_dim = 6;
  cfg.num_classes = 4;
  cfg.epochs = 0;
  const auto p = train_probe(x, one_hot(labels, 4), cfg);
  EXPECT_NEAR(accuracy(argmax_rows(probe_predict(p, x, TaskType::Multiclass)), labels), 0.25, 0.03);
}

TEST(TrainProbe, DegenerateLabels) {
  ProbeConfig cfg;
  cfg.input_dim = 2;
  cfg.num_classes = 2;
  const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 2);
  EXPECT_EQ(code_of([&] { train_probe(x, one_hot({1, 1, 1}, 2), cfg); }), ErrorCode::DegenerateLabels);
}

TEST(MacroF1, Cases) {
  const std::vector<int> golds{0, 1, 0, 1};
  EXPECT_DOUBLE_EQ(macro_f1(golds, golds, 2), 1.0);
  EXPECT_DOUBLE_EQ(macro_f1(std::vector<int>{0, 0, 0, 0}, golds, 2), 1.0 / 3.0);
  // absent class counts as zero
  EXPECT_DOUBLE_EQ(macro_f1(golds, golds, 3), 2.0 / 3.0);
  EXPECT_EQ(code_of([] { macro_f1(std::vector<int>{}, std::vector<int>{}, 2); }), ErrorCode::LengthMismatch);
  EXPECT_EQ(code_of([&] { macro_f1(std::vector<int>{0}, golds, 2); }), ErrorCode::LengthMismatch);
}

TEST(RecallAtK, Cases) {
  Rng rng(4);
  const Eigen::MatrixXd s = gaussian(50, 12, rng);
  std::vector<int> golds(50);
  for (auto& g : golds) g = static_cast<int>(rng.below(12));
  EXPECT_DOUBLE_EQ(recall_at_k(s, golds, 12), 1.0);
  EXPECT_DOUBLE_EQ(recall_at_k(s, argmax_rows(s), 1), 1.0);
  double prev = 0;
  for (int k = 1; k <= 12; ++k) {
    const double r = recall_at_k(s, golds, k);
    EXPECT_GE(r, prev);
    prev = r;
  }
  EXPECT_EQ(code_of([&] { recall_at_k(s, golds, 13); }), ErrorCode::KTooLarge);
}

TEST(RecallAtK, RandomScoresExpectKOverC) {
  Rng rng(5);
  const int n = 10'000, c = 25;
  const Eigen::MatrixXd s = gaussian(n, c, rng);
  std::vector<int> golds(n);
  for (auto& g : golds) g = static_cast<int>(rng.below(c));
  EXPECT_NEAR(recall_at_k(s, golds, 10), 10.0 / c, 0.02);
}

TEST(MeanAveragePrecision, HandComputedAp) {
  // query vs 3 items; relevant ones land at ranks 1 and 3
  Eigen::MatrixXd q(1, 2), corpus(3, 2);
  q << 1, 0;
  corpus << 1, 0.1, 1, 0.5, 0, 1;
  const std::vector<LabelSet> ql{{7}}, cl{{7}, {3}, {7}};
  EXPECT_NEAR(mean_average_precision(q, ql, corpus, cl), 5.0 / 6.0, 1e-15);
}

TEST(MeanAveragePrecision, PerfectAndIdentical) {
  Eigen::MatrixXd e(4, 2);
  e << 1, 0, 1, 0, 0, 1, 0, 1;
  const std::vector<LabelSet> labels{{0}, {0}, {1}, {1}};
  const std::vector<long> self{0, 1, 2, 3};
  EXPECT_DOUBLE_EQ(mean_average_precision(e, labels, e, labels, self), 1.0);
  const std::vector<LabelSet> lonely{{0}, {1}, {2}, {2}};
  EXPECT_EQ(code_of([&] { mean_average_precision(e, lonely, e, lonely, self); }), ErrorCode::NoRelevantItems);
}

TEST(Metrics, MatchBruteForceReferences) {
  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 5 + static_cast<int>(rng.below(46));
    const int c = 2 + static_cast<int>(rng.below(14));
    std::vector<int> preds(n), golds(n);
    for (int i = 0; i < n; ++i) preds[i] = static_cast<int>(rng.below(c)), golds[i] = static_cast<int>(rng.below(c));
    EXPECT_EQ(macro_f1(preds, golds, c), oracle::macro_f1(preds, golds, c));
    Eigen::MatrixXd s = gaussian(n, c, rng);
    for (Eigen::Index i = 0; i < s.size(); i += 3) s.data()[i] = std::round(s.data()[i]);  // force ties
    const int k = 1 + static_cast<int>(rng.below(c));
    EXPECT_EQ(recall_at_k(s, golds, k), oracle::recall_at_k(s, golds, k));
  }
}

TEST(RelativeImprovement, Cases) {
  EXPECT_NEAR(relative_improvement(0.343, 0.327), 4.89, 0.005);
  EXPECT_EQ(relative_improvement(0.7, 0.7), 0.0);
  EXPECT_DOUBLE_EQ(relative_improvement(0.5, 1.0), -50.0);
  EXPECT_EQ(code_of([] { relative_improvement(0.5, 0.0); }), ErrorCode::ZeroBaseline);
}

TEST(OverlapSplit, Cases) {
  Rng rng(1);
  const auto p = synthetic::planted_partition(2, 4, 2, 6, 1);
  const auto table = init_table(p.graph.registry(), 3, rng);
  std::vector<TweetRecord> recs(4);
  recs[0].author = "user1";                         // author known
  recs[1].author = "nobody", recs[1].hashtags = {"tag0"};  // hashtag known
  recs[2].author = "nobody", recs[2].hashtags = {"zzz"};
  recs[3].author = "user2", recs[3].hashtags = {"zzz"};
  const auto split = overlap_split(recs, table);
  EXPECT_EQ(split.overlap, (std::vector<std::size_t>{0, 1, 3}));
  EXPECT_EQ(split.non_overlap, (std::vector<std::size_t>{2}));

  EmbeddingTable empty;
  empty.dim = 3;
  const auto none = overlap_split(recs, empty);
  EXPECT_TRUE(none.overlap.empty());
  EXPECT_EQ(none.non_overlap.size(), recs.size());
}

namespace {

// Eval/train data where the label lives in the "ntulm" features for overlap
// rows only; text features are noise.
std::vector<TaskInput> planted_task(Rng& rng, bool with_text) {
  const int n_train = 300, n_eval = 200, classes = 3, dim = 6;
  auto make = [&](int n, std::vector<bool>& overlap, Eigen::MatrixXd& signal, Eigen::MatrixXd& noise) {
    std::vector<int> labels(n);
    signal = gaussian(n, dim, rng) * 0.3;
    noise = gaussian(n, dim, rng);
    overlap.resize(n);
    for (int i = 0; i < n; ++i) {
      labels[i] = i % classes;
      overlap[i] = i % 4 != 0;
      if (overlap[i]) signal(i, labels[i]) += 2.0;
    }
    return one_hot(labels, classes);
  };
  TaskInput t;
  t.name = "planted";
  t.metric = Metric::Accuracy;
  std::vector<bool> train_overlap;
  Eigen::MatrixXd tr_sig, tr_noise, ev_sig, ev_noise;
  t.train_targets = make(n_train, train_overlap, tr_sig, tr_noise);
  t.eval_targets = make(n_eval, t.eval_overlap, ev_sig, ev_noise);
  t.variants.push_back({Variant::Ntulm, tr_sig, ev_sig});
  if (with_text) t.variants.push_back({Variant::TextOnly, tr_noise, ev_noise});
  return {t};
}

}  // namespace

TEST(RunBenchmark, NoBaselineNoDeltas) {
  Rng rng(7);
  const auto rep = run_benchmark(planted_task(rng, false), BenchmarkConfig{});
  EXPECT_FALSE(rep.has_deltas);
  EXPECT_EQ(rep.rows.size(), 3u);
  for (const auto& r : rep.rows) EXPECT_FALSE(r.delta_pct.has_value());
  std::ostringstream tsv;
  write_report_tsv(tsv, rep);
  EXPECT_EQ(tsv.str().substr(0, tsv.str().find('\n')), "task\tvariant\tslice\tmetric\tvalue");
}

TEST(RunBenchmark, SignalInNtuShowsInOverlapSlice) {
  Rng rng(8);
  BenchmarkConfig cfg;
  cfg.seeds = {1, 2};
  const auto rep = run_benchmark(planted_task(rng, true), cfg);
  ASSERT_TRUE(rep.has_deltas);
  EXPECT_EQ(rep.probe_fingerprint.at("planted/ntulm"), rep.probe_fingerprint.at("planted/text"));
  const auto* ov = rep.find("planted", Variant::Ntulm, "overlap");
  const auto* nov = rep.find("planted", Variant::Ntulm, "non_overlap");
  ASSERT_TRUE(ov && nov && ov->delta_pct && nov->delta_pct);
  EXPECT_GT(*ov->delta_pct, *nov->delta_pct);
  EXPECT_GT(ov->value, 0.9);

  std::ostringstream tsv, summary;
  write_report_tsv(tsv, rep);
  write_report_summary(summary, rep);
  std::size_t lines = 0;
  for (char ch : tsv.str()) lines += ch == '\n';
  EXPECT_EQ(lines, 1 + rep.rows.size());
  EXPECT_NE(summary.str().find("non_overlap"), std::string::npos);
}

TEST(ScoreSlice, MapOverProbeOutputs) {
  Eigen::MatrixXd probs(4, 2), targets(4, 2);
  probs << 0.9, 0.1, 0.8, 0.2, 0.1, 0.9, 0.2, 0.8;
  targets << 1, 0, 1, 0, 0, 1, 0, 1;
  EXPECT_DOUBLE_EQ(score_slice(Metric::MeanAveragePrecision, TaskType::Multilabel, probs, targets, {0, 1, 2, 3}), 1.0);
  EXPECT_TRUE(std::isnan(score_slice(Metric::Accuracy, TaskType::Multiclass, probs, targets, {})));
}
