#pragma once

#include <cstdio>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ntulm/metrics.hpp"
#include "ntulm/probe.hpp"
#include "ntulm/tweet_embed.hpp"

namespace ntulm {

enum class Metric { Accuracy, MacroF1, RecallAt10, MeanAveragePrecision };

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::Accuracy: return "accuracy";
    case Metric::MacroF1: return "macro_f1";
    case Metric::RecallAt10: return "recall_at_10";
    case Metric::MeanAveragePrecision: return "map";
  }
  return "?";
}

inline std::optional<Metric> parse_metric(std::string_view s) {
  for (auto m : {Metric::Accuracy, Metric::MacroF1, Metric::RecallAt10, Metric::MeanAveragePrecision})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

struct VariantData {
  Variant variant = Variant::Ntulm;
  Eigen::MatrixXd train;  // one embedding per row
  Eigen::MatrixXd eval;
};

struct TaskInput {
  std::string name;
  Metric metric = Metric::MacroF1;
  TaskType type = TaskType::Multiclass;
  Eigen::MatrixXd train_targets;  // rows x classes, 0/1
  Eigen::MatrixXd eval_targets;
  std::vector<bool> eval_overlap;
  std::vector<VariantData> variants;
};

struct BenchmarkConfig {
  std::size_t epochs = 200;
  double learning_rate = 1e-2;
  std::vector<std::uint64_t> seeds{0};
};

struct MetricsRow {
  std::string task;
  Variant variant = Variant::Ntulm;
  std::string slice;  // overall | overlap | non_overlap
  Metric metric = Metric::MacroF1;
  double value = 0.0;  // mean over seeds; NaN for an empty slice
  std::optional<double> delta_pct;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;
  bool has_deltas = false;
  // task/variant -> hash of (seeds, epochs, learning rate, activation, split)
  std::map<std::string, std::uint64_t> probe_fingerprint;

  const MetricsRow* find(const std::string& task, Variant v, const std::string& slice) const {
    for (const auto& r : rows)
      if (r.task == task && r.variant == v && r.slice == slice) return &r;
    return nullptr;
  }
};

namespace detail {

class Fnv1a {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) h_ = (h_ ^ b[i]) * 0x100000001b3ULL;
  }
  template <typename T>
  void value(const T& v) { bytes(&v, sizeof v); }
  void text(std::string_view s) { bytes(s.data(), s.size()); }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::vector<LabelSet> label_sets(const Eigen::MatrixXd& targets) {
  std::vector<LabelSet> out(static_cast<std::size_t>(targets.rows()));
  for (Eigen::Index i = 0; i < targets.rows(); ++i)
    for (Eigen::Index c = 0; c < targets.cols(); ++c)
      if (targets(i, c) > 0.5) out[static_cast<std::size_t>(i)].insert(static_cast<int>(c));
  return out;
}

}  // namespace detail

/// Scores `probs` against `targets` on the rows in `subset`. MAP uses the
/// probe outputs as retrieval vectors: each subset row queries all eval rows
/// except itself; queries without any relevant item are skipped.
inline double score_slice(Metric metric, TaskType type, const Eigen::MatrixXd& probs, const Eigen::MatrixXd& targets,
                          const std::vector<Eigen::Index>& subset) {
  if (subset.empty()) return std::numeric_limits<double>::quiet_NaN();
  Eigen::MatrixXd p(static_cast<Eigen::Index>(subset.size()), probs.cols());
  Eigen::MatrixXd t(static_cast<Eigen::Index>(subset.size()), targets.cols());
  for (std::size_t i = 0; i < subset.size(); ++i) {
    p.row(static_cast<Eigen::Index>(i)) = probs.row(subset[i]);
    t.row(static_cast<Eigen::Index>(i)) = targets.row(subset[i]);
  }
  switch (metric) {
    case Metric::Accuracy: {
      const auto pr = argmax_rows(p), go = argmax_rows(t);
      return accuracy(pr, go);
    }
    case Metric::MacroF1: {
      if (type == TaskType::Multilabel) return macro_f1_multilabel((p.array() > 0.5).cast<double>(), t);
      const auto pr = argmax_rows(p), go = argmax_rows(t);
      return macro_f1(pr, go, static_cast<int>(p.cols()));
    }
    case Metric::RecallAt10: {
      const auto go = argmax_rows(t);
      return recall_at_k(p, go, 10);
    }
    case Metric::MeanAveragePrecision: {
      const auto all_labels = detail::label_sets(targets);
      Eigen::MatrixXd q(0, probs.cols());
      std::vector<LabelSet> q_labels;
      std::vector<long> self;
      for (auto row : subset) {
        bool relevant = false;
        for (Eigen::Index c = 0; c < targets.rows() && !relevant; ++c)
          relevant = c != row && shares_label(all_labels[static_cast<std::size_t>(row)], all_labels[static_cast<std::size_t>(c)]);
        if (!relevant) continue;
        q.conservativeResize(q.rows() + 1, Eigen::NoChange);
        q.row(q.rows() - 1) = probs.row(row);
        q_labels.push_back(all_labels[static_cast<std::size_t>(row)]);
        self.push_back(static_cast<long>(row));
      }
      if (q_labels.empty()) return std::numeric_limits<double>::quiet_NaN();
      return mean_average_precision(q, q_labels, probs, all_labels, self);
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

/// Trains one probe per (task, variant, seed) with identical settings and
/// reports overall / overlap / non_overlap scores, averaged over seeds, plus
/// percent deltas against the text-only variant when it is present.
inline MetricsReport run_benchmark(const std::vector<TaskInput>& tasks, const BenchmarkConfig& cfg) {
  MetricsReport report;
  for (const auto& task : tasks) {
    std::vector<Eigen::Index> all, overlap, non_overlap;
    for (Eigen::Index i = 0; i < task.eval_targets.rows(); ++i) {
      all.push_back(i);
      (task.eval_overlap.at(static_cast<std::size_t>(i)) ? overlap : non_overlap).push_back(i);
    }
    const std::pair<const char*, const std::vector<Eigen::Index>*> slices[] = {
        {"overall", &all}, {"overlap", &overlap}, {"non_overlap", &non_overlap}};

    std::map<Variant, std::map<std::string, double>> values;
    for (const auto& vd : task.variants) {
      detail::Fnv1a fp;
      for (auto s : cfg.seeds) fp.value(s);
      fp.value(cfg.epochs);
      fp.value(cfg.learning_rate);
      fp.text("tanh");
      fp.value(vd.train.rows());
      fp.value(vd.eval.rows());
      fp.bytes(task.train_targets.data(), sizeof(double) * static_cast<std::size_t>(task.train_targets.size()));
      report.probe_fingerprint[task.name + "/" + std::string(to_string(vd.variant))] = fp.digest();

      std::map<std::string, double> sums;
      for (auto seed : cfg.seeds) {
        ProbeConfig pc;
        pc.input_dim = static_cast<std::size_t>(vd.train.cols());
        pc.num_classes = static_cast<std::size_t>(task.train_targets.cols());
        pc.epochs = cfg.epochs;
        pc.learning_rate = cfg.learning_rate;
        pc.rng_seed = seed;
        pc.task_type = task.type;
        const auto probe = train_probe(vd.train, task.train_targets, pc);
        const auto probs = probe_predict(probe, vd.eval, task.type);
        for (const auto& [name, rows] : slices) sums[name] += score_slice(task.metric, task.type, probs, task.eval_targets, *rows);
      }
      for (const auto& [name, rows] : slices) values[vd.variant][name] = sums[name] / static_cast<double>(cfg.seeds.size());
    }

    const bool has_base = values.count(Variant::TextOnly) != 0;
    report.has_deltas = report.has_deltas || has_base;
    for (const auto& vd : task.variants)
      for (const auto& [name, rows] : slices) {
        MetricsRow row{task.name, vd.variant, name, task.metric, values[vd.variant][name], std::nullopt};
        if (has_base && vd.variant != Variant::TextOnly) {
          const double base = values[Variant::TextOnly][name];
          if (std::isfinite(row.value) && std::isfinite(base) && base > 0.0)
            row.delta_pct = relative_improvement(row.value, base);
        }
        report.rows.push_back(std::move(row));
      }
  }
  return report;
}

struct OverlapSplit {
  std::vector<std::size_t> overlap;
  std::vector<std::size_t> non_overlap;
};

/// A post is in the overlap slice when its author or any of its hashtags has
/// a row in the table.
inline OverlapSplit overlap_split(std::span<const TweetRecord> records, const EmbeddingTable& table) {
  OverlapSplit out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    bool hit = false;
    for (const auto& k : ntu_keys(records[i])) hit = hit || table.registry.contains(k);
    (hit ? out.overlap : out.non_overlap).push_back(i);
  }
  return out;
}

inline std::string format_value(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// task, variant, slice, metric, value[, delta_pct]
inline void write_report_tsv(std::ostream& out, const MetricsReport& rep) {
  out << "task\tvariant\tslice\tmetric\tvalue";
  if (rep.has_deltas) out << "\tdelta_pct";
  out << '\n';
  for (const auto& r : rep.rows) {
    out << r.task << '\t' << to_string(r.variant) << '\t' << r.slice << '\t' << to_string(r.metric) << '\t'
        << format_value(r.value);
    if (rep.has_deltas) out << '\t' << (r.delta_pct ? format_value(*r.delta_pct) : "NA");
    out << '\n';
  }
}

inline void write_report_summary(std::ostream& out, const MetricsReport& rep) {
  out << std::left << std::setw(20) << "task" << std::setw(8) << "variant" << std::setw(13) << "slice"
      << std::setw(14) << "metric" << std::setw(10) << "value" << "delta%\n";
  out << std::string(72, '-') << '\n';
  for (const auto& r : rep.rows) {
    out << std::left << std::setw(20) << r.task << std::setw(8) << to_string(r.variant) << std::setw(13) << r.slice
        << std::setw(14) << to_string(r.metric) << std::setw(10) << format_value(r.value)
        << (r.delta_pct ? format_value(*r.delta_pct) : std::string("-")) << '\n';
  }
}

}  // namespace ntulm
