#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "ntulm/encoder.hpp"
#include "ntulm/hin_graph.hpp"
#include "ntulm/kg_embed.hpp"

namespace ntulm {

enum class NtuSource { FromNtus, Placeholder };

struct NtuContext {
  Eigen::VectorXd vector;
  NtuSource source = NtuSource::Placeholder;
  std::size_t hits = 0;  // keys found in the table
};

/// The NTUs a post contributes: its author and its hashtags.
inline std::vector<NodeRef> ntu_keys(const TweetRecord& rec) {
  std::vector<NodeRef> keys;
  keys.push_back({NodeKind::User, rec.author});
  for (const auto& h : rec.hashtags) keys.push_back({NodeKind::Hashtag, h});
  return keys;
}

// Caches the table's mean node vector, which stands in for every unknown key.
class NtuResolver {
 public:
  explicit NtuResolver(const EmbeddingTable& table) : table_(&table), placeholder_(table.mean_node_vector()) {}

  const Eigen::VectorXd& placeholder() const { return placeholder_; }

  /// Mean over keys, unknown keys counting as the placeholder. With no keys,
  /// or no known keys, the result is the placeholder itself (bit-exact).
  NtuContext operator()(std::span<const NodeRef> keys) const {
    NtuContext ctx;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(placeholder_.size());
    for (const auto& k : keys)
      if (auto row = table_->find(k)) {
        sum += table_->nodes.row(*row).transpose();
        ++ctx.hits;
      }
    if (ctx.hits == 0) {
      ctx.vector = placeholder_;
      ctx.source = NtuSource::Placeholder;
      return ctx;
    }
    const double misses = static_cast<double>(keys.size() - ctx.hits);
    ctx.vector = (sum + misses * placeholder_) / static_cast<double>(keys.size());
    ctx.source = NtuSource::FromNtus;
    return ctx;
  }

 private:
  const EmbeddingTable* table_;
  Eigen::VectorXd placeholder_;
};

inline NtuContext ntu_context(std::span<const NodeRef> keys, const EmbeddingTable& table) {
  return NtuResolver(table)(keys);
}

inline constexpr TokenId kIgnoreLabel = 0;  // never a valid target: reserved ids are not masked

struct MaskedSequence {
  std::vector<TokenId> ids;
  std::vector<TokenId> labels;  // original id at selected positions, kIgnoreLabel elsewhere
  std::size_t selected = 0;
};

/// Each non-reserved position is selected with probability `mask_rate`; a
/// selected token becomes [MASK] (80%), a random word (10%) or stays (10%).
inline MaskedSequence mask_tokens(std::span<const TokenId> ids, double mask_rate, std::size_t vocab_size, Rng& rng) {
  MaskedSequence out{{ids.begin(), ids.end()}, std::vector<TokenId>(ids.size(), kIgnoreLabel), 0};
  if (mask_rate <= 0.0) return out;
  const auto words = vocab_size - static_cast<std::size_t>(Vocabulary::kNumReserved);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (Vocabulary::is_reserved(ids[i]) || !rng.bernoulli(mask_rate)) continue;
    out.labels[i] = ids[i];
    ++out.selected;
    const double r = rng.uniform();
    if (r < 0.8)
      out.ids[i] = Vocabulary::kMask;
    else if (r < 0.9 && words > 0)
      out.ids[i] = static_cast<TokenId>(Vocabulary::kNumReserved + rng.below(words));
  }
  return out;
}

// A post ready for the encoder: token ids plus its NTU context (empty vector
// for text-only encoders).
struct EncodedTweet {
  std::vector<TokenId> ids;
  Eigen::VectorXd ntu;
};

struct MlmExample {
  std::vector<TokenId> ids;
  std::vector<TokenId> labels;
  const Eigen::VectorXd* ntu = nullptr;
};

namespace detail {

inline const Eigen::VectorXd* ntu_ptr(const EncoderState& s, const Eigen::VectorXd& v) {
  return s.config.use_ntu ? &v : nullptr;
}

// Log-softmax of the MLM head output for one hidden row.
inline Eigen::RowVectorXd log_probs(const EncoderState& s, const Eigen::RowVectorXd& z) {
  Eigen::RowVectorXd logits = z * s.params.out_w + s.params.out_b;
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return logits.array() - lse;
}

}  // namespace detail

/// Mean cross-entropy (nats) over every masked position of the batch; a batch
/// with no masked position scores 0. When `grads` is given the gradient of
/// that mean is accumulated into it.
inline double mlm_loss(std::span<const MlmExample> batch, const EncoderState& state, EncoderParams* grads) {
  std::size_t total = 0;
  for (const auto& ex : batch)
    for (auto l : ex.labels) total += l != kIgnoreLabel;
  if (total == 0) return 0.0;
  const double inv_total = 1.0 / static_cast<double>(total);

  double loss = 0.0;
  ForwardCache cache;
  for (const auto& ex : batch) {
    const bool any = std::any_of(ex.labels.begin(), ex.labels.end(), [](TokenId l) { return l != kIgnoreLabel; });
    if (!any) continue;
    const Mat s = build_input(ex.ids, ex.ntu, state);
    const Mat z = forward(s, state, {}, grads ? &cache : nullptr);
    Mat dz = grads ? Mat::Zero(z.rows(), z.cols()) : Mat();
    for (std::size_t i = 0; i < ex.labels.size(); ++i) {
      if (ex.labels[i] == kIgnoreLabel) continue;
      const auto row = static_cast<Eigen::Index>(i);
      const Eigen::RowVectorXd lp = detail::log_probs(state, z.row(row));
      loss -= lp(ex.labels[i]);
      if (grads) {
        Eigen::RowVectorXd dlogits = lp.array().exp();
        dlogits(ex.labels[i]) -= 1.0;
        dlogits *= inv_total;
        grads->out_w += z.row(row).transpose() * dlogits;
        grads->out_b += dlogits;
        dz.row(row) = dlogits * state.params.out_w.transpose();
      }
    }
    if (grads) {
      const Mat ds = backward(dz, state, cache, *grads);
      backward_input(ds, ex.ids, ex.ntu, state, *grads);
    }
  }
  loss *= inv_total;
  if (!std::isfinite(loss)) throw Error(ErrorCode::NonFiniteLoss, "MLM loss is not finite");
  return loss;
}

// Adam with bias correction and no weight decay.
class Adam {
 public:
  explicit Adam(const EncoderParams& like, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(like.zeros_like()), v_(like.zeros_like()), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(EncoderParams& params, const EncoderParams& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    std::vector<Mat*> ps, ms, vs;
    std::vector<const Mat*> gs;
    params.for_each([&](const std::string&, Mat& m) { ps.push_back(&m); });
    m_.for_each([&](const std::string&, Mat& m) { ms.push_back(&m); });
    v_.for_each([&](const std::string&, Mat& m) { vs.push_back(&m); });
    grads.for_each([&](const std::string&, const Mat& m) { gs.push_back(&m); });
    for (std::size_t i = 0; i < ps.size(); ++i) {
      *ms[i] = b1_ * *ms[i] + (1.0 - b1_) * *gs[i];
      *vs[i] = b2_ * *vs[i] + (1.0 - b2_) * gs[i]->cwiseProduct(*gs[i]);
      *ps[i] -= (lr_ * (ms[i]->array() / c1) / ((vs[i]->array() / c2).sqrt() + eps_)).matrix();
    }
  }

  std::size_t steps() const { return t_; }

 private:
  EncoderParams m_, v_;
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
};

/// Masks each post, takes one optimizer step on the batch and returns its loss.
inline double mlm_step(std::span<const EncodedTweet* const> batch, EncoderState& state, Adam& opt, Rng& rng) {
  std::vector<MlmExample> examples;
  examples.reserve(batch.size());
  for (const auto* tw : batch) {
    auto masked = mask_tokens(tw->ids, state.config.mask_rate, state.config.vocab_size, rng);
    examples.push_back({std::move(masked.ids), std::move(masked.labels), detail::ntu_ptr(state, tw->ntu)});
  }
  EncoderParams grads = state.params.zeros_like();
  const double loss = mlm_loss(examples, state, &grads);
  opt.step(state.params, grads);
  if (!state.params.all_finite()) throw Error(ErrorCode::NonFiniteLoss, "parameters diverged");
  return loss;
}

/// Runs `config.epochs` shuffled passes; returns the per-epoch mean batch loss
/// in nats. Deterministic for a given seed.
inline std::vector<double> train_mlm(EncoderState& state, std::span<const EncodedTweet> corpus) {
  const auto& cfg = state.config;
  Rng rng(cfg.rng_seed ^ 0x5eedULL);
  Adam opt(state.params, cfg.learning_rate);
  std::vector<std::size_t> order(corpus.size());
  std::vector<double> trace;
  std::vector<const EncodedTweet*> batch;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t j = start; j < std::min(order.size(), start + cfg.batch_size); ++j)
        batch.push_back(&corpus[order[j]]);
      sum += mlm_step(batch, state, opt, rng);
      ++batches;
    }
    trace.push_back(batches ? sum / static_cast<double>(batches) : 0.0);
  }
  return trace;
}

/// Mean -log2 p(true token) over masked positions; masking is drawn from
/// `seed` so repeated calls agree.
inline double perplexity_bits(std::span<const EncodedTweet> corpus, const EncoderState& state, std::uint64_t seed) {
  Rng rng(seed);
  double bits = 0.0;
  std::size_t count = 0;
  for (const auto& tw : corpus) {
    const auto masked = mask_tokens(tw.ids, state.config.mask_rate, state.config.vocab_size, rng);
    if (masked.selected == 0) continue;
    const Mat z = forward(build_input(masked.ids, detail::ntu_ptr(state, tw.ntu), state), state);
    for (std::size_t i = 0; i < masked.labels.size(); ++i) {
      if (masked.labels[i] == kIgnoreLabel) continue;
      bits -= detail::log_probs(state, z.row(static_cast<Eigen::Index>(i)))(masked.labels[i]) / std::log(2.0);
      ++count;
    }
  }
  return count ? bits / static_cast<double>(count) : 0.0;
}

/// Replaces exactly `positions` with [MASK] and returns the summed -log2 p of
/// the original tokens there.
inline double masked_bits_at(const EncodedTweet& tw, std::span<const std::size_t> positions, const EncoderState& state) {
  std::vector<TokenId> ids = tw.ids;
  for (auto p : positions) ids.at(p) = Vocabulary::kMask;
  const Mat z = forward(build_input(ids, detail::ntu_ptr(state, tw.ntu), state), state);
  double bits = 0.0;
  for (auto p : positions) bits -= detail::log_probs(state, z.row(static_cast<Eigen::Index>(p)))(tw.ids[p]) / std::log(2.0);
  return bits;
}

}  // namespace ntulm
