#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ntulm/common.hpp"

namespace ntulm {

inline double accuracy(std::span<const int> preds, std::span<const int> golds) {
  if (preds.size() != golds.size() || preds.empty())
    throw Error(ErrorCode::LengthMismatch, "accuracy needs equal, non-empty inputs");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == golds[i];
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

/// Unweighted mean of per-class F1 over all `num_classes` classes. A class
/// absent from both predictions and golds scores 0.
inline double macro_f1(std::span<const int> preds, std::span<const int> golds, int num_classes) {
  if (preds.size() != golds.size()) throw Error(ErrorCode::LengthMismatch, "preds and golds differ in length");
  if (preds.empty()) throw Error(ErrorCode::LengthMismatch, "macro_f1 of an empty set");
  std::vector<std::size_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == golds[i]) {
      ++tp[golds[i]];
    } else {
      ++fp[preds[i]];
      ++fn[golds[i]];
    }
  }
  double sum = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    const auto denom = 2 * tp[c] + fp[c] + fn[c];
    sum += denom ? 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom) : 0.0;
  }
  return sum / num_classes;
}

/// Per-class binary F1 over 0/1 decision and gold matrices, averaged.
inline double macro_f1_multilabel(const Eigen::MatrixXd& decisions, const Eigen::MatrixXd& golds) {
  if (decisions.rows() != golds.rows() || decisions.cols() != golds.cols() || golds.rows() == 0)
    throw Error(ErrorCode::LengthMismatch, "decision and gold matrices differ");
  double sum = 0.0;
  for (Eigen::Index c = 0; c < golds.cols(); ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (Eigen::Index i = 0; i < golds.rows(); ++i) {
      const bool p = decisions(i, c) > 0.5, g = golds(i, c) > 0.5;
      tp += p && g, fp += p && !g, fn += !p && g;
    }
    sum += (2 * tp + fp + fn) > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
  }
  return sum / static_cast<double>(golds.cols());
}

/// Fraction of rows whose gold class is among the k highest scores (ties go
/// to the lower class index).
inline double recall_at_k(const Eigen::MatrixXd& scores, std::span<const int> golds, int k) {
  if (static_cast<std::size_t>(scores.rows()) != golds.size() || golds.empty())
    throw Error(ErrorCode::LengthMismatch, "scores and golds differ in length");
  if (k > scores.cols() || k <= 0) throw Error(ErrorCode::KTooLarge, "k exceeds the number of classes");
  std::size_t hit = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const int g = golds[static_cast<std::size_t>(i)];
    const double s = scores(i, g);
    int better = 0;
    for (Eigen::Index c = 0; c < scores.cols(); ++c)
      if (scores(i, c) > s || (scores(i, c) == s && c < g)) ++better;
    hit += better < k;
  }
  return static_cast<double>(hit) / static_cast<double>(golds.size());
}

inline double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

using LabelSet = std::set<int>;

inline bool shares_label(const LabelSet& a, const LabelSet& b) {
  for (int x : a)
    if (b.count(x)) return true;
  return false;
}

/// Ranks the corpus by cosine similarity to each query (ties: lower corpus
/// index first) and averages the per-query average precision. Relevant means
/// sharing at least one label. `self[i]`, when >= 0, is the corpus row that is
/// query i itself and is left out of its ranking.
inline double mean_average_precision(const Eigen::MatrixXd& queries, std::span<const LabelSet> query_labels,
                                     const Eigen::MatrixXd& corpus, std::span<const LabelSet> corpus_labels,
                                     std::span<const long> self = {}) {
  if (static_cast<std::size_t>(queries.rows()) != query_labels.size() ||
      static_cast<std::size_t>(corpus.rows()) != corpus_labels.size() || queries.rows() == 0)
    throw Error(ErrorCode::LengthMismatch, "embedding and label counts differ");
  double total = 0.0;
  std::vector<std::pair<double, Eigen::Index>> ranked;
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    const long skip = self.empty() ? -1 : self[static_cast<std::size_t>(q)];
    const Eigen::VectorXd qv = queries.row(q).transpose();
    ranked.clear();
    for (Eigen::Index c = 0; c < corpus.rows(); ++c)
      if (c != skip) ranked.push_back({-cosine(qv, corpus.row(c).transpose()), c});
    std::sort(ranked.begin(), ranked.end());
    double hits = 0.0, ap = 0.0;
    for (std::size_t r = 0; r < ranked.size(); ++r)
      if (shares_label(query_labels[static_cast<std::size_t>(q)], corpus_labels[static_cast<std::size_t>(ranked[r].second)])) {
        hits += 1.0;
        ap += hits / static_cast<double>(r + 1);
      }
    if (hits == 0.0) throw Error(ErrorCode::NoRelevantItems, "query " + std::to_string(q) + " has no relevant item");
    total += ap / hits;
  }
  return total / static_cast<double>(queries.rows());
}

/// (model - base) / base * 100.
inline double relative_improvement(double score_model, double score_base) {
  if (!(score_base > 0.0)) throw Error(ErrorCode::ZeroBaseline, "baseline score must be positive");
  return (score_model - score_base) / score_base * 100.0;
}

}  // namespace ntulm
