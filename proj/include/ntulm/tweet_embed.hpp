#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ntulm/encoder.hpp"
#include "ntulm/mlm.hpp"

namespace ntulm {

enum class Variant { Ntulm, TextOnly, PostConcat };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Ntulm: return "ntulm";
    case Variant::TextOnly: return "text";
    case Variant::PostConcat: return "concat";
  }
  return "?";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
  if (s == "ntulm") return Variant::Ntulm;
  if (s == "text") return Variant::TextOnly;
  if (s == "concat") return Variant::PostConcat;
  return std::nullopt;
}

struct TweetEmbedding {
  Eigen::VectorXd vector;
  Variant variant = Variant::Ntulm;
  bool overlap = false;
};

/// Rows of Z that enter the mean pool: content tokens and the NTU row;
/// [CLS]/[SEP] only when `pool_special_tokens` is set. [PAD] never.
inline std::vector<Eigen::Index> pool_rows(std::span<const TokenId> ids, bool has_ntu, bool pool_special_tokens) {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const TokenId t = ids[i];
    if (t == Vocabulary::kPad) continue;
    if ((t == Vocabulary::kCls || t == Vocabulary::kSep) && !pool_special_tokens) continue;
    rows.push_back(static_cast<Eigen::Index>(i));
  }
  if (has_ntu) rows.push_back(static_cast<Eigen::Index>(ids.size()));
  return rows;
}

inline Eigen::VectorXd mean_pool(const Mat& z, std::span<const Eigen::Index> rows) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(z.cols());
  for (auto r : rows) sum += z.row(r).transpose();
  return sum / static_cast<double>(rows.size());
}

/// Frozen inference over trained encoders. Holds references only: nothing it
/// computes writes to the encoders or the table.
class TweetEmbedder {
 public:
  TweetEmbedder(const Vocabulary& vocab, const EncoderState* ntulm, const EncoderState* text_only,
                const EmbeddingTable* table)
      : vocab_(vocab), ntulm_(ntulm), text_(text_only), table_(table) {
    if (table_) resolver_.emplace(*table_);
  }

  bool overlap(std::span<const NodeRef> keys) const {
    if (!table_) return false;
    for (const auto& k : keys)
      if (table_->registry.contains(k)) return true;
    return false;
  }

  NtuContext context(std::span<const NodeRef> keys) const {
    if (!resolver_) throw Error(ErrorCode::MissingArtifact, "NTU embedding table not loaded");
    return (*resolver_)(keys);
  }

  /// Mean of the final hidden states over content tokens plus the NTU row.
  TweetEmbedding ntulm(std::string_view text, std::span<const NodeRef> keys) const {
    if (!ntulm_) throw Error(ErrorCode::MissingArtifact, "NTU-enriched encoder not loaded");
    const auto ctx = context(keys);
    const auto ids = vocab_.tokenize(text, ntulm_->config.max_tokens());
    const Mat z = forward(build_input(ids, &ctx.vector, *ntulm_), *ntulm_);
    const auto rows = pool_rows(ids, true, ntulm_->config.pool_special_tokens);
    return {mean_pool(z, rows), Variant::Ntulm, ctx.hits > 0};
  }

  TweetEmbedding text_only(std::string_view text, std::span<const NodeRef> keys = {}) const {
    if (!text_) throw Error(ErrorCode::MissingArtifact, "text-only encoder not loaded");
    const auto ids = vocab_.tokenize(text, text_->config.max_tokens());
    const auto rows = pool_rows(ids, false, text_->config.pool_special_tokens);
    if (rows.empty()) throw Error(ErrorCode::EmptyText, "text has no content tokens to pool");
    const Mat z = forward(build_input(ids, nullptr, *text_), *text_);
    return {mean_pool(z, rows), Variant::TextOnly, overlap(keys)};
  }

  /// [text-only embedding | NTU context], no interaction between the two.
  TweetEmbedding post_concat(std::string_view text, std::span<const NodeRef> keys) const {
    const auto t = text_only(text, keys);
    const auto ctx = context(keys);
    Eigen::VectorXd v(t.vector.size() + ctx.vector.size());
    v << t.vector, ctx.vector;
    return {std::move(v), Variant::PostConcat, ctx.hits > 0};
  }

  TweetEmbedding embed(Variant variant, std::string_view text, std::span<const NodeRef> keys) const {
    switch (variant) {
      case Variant::Ntulm: return ntulm(text, keys);
      case Variant::TextOnly: return text_only(text, keys);
      case Variant::PostConcat: return post_concat(text, keys);
    }
    throw std::logic_error("unknown variant");
  }

 private:
  const Vocabulary& vocab_;
  const EncoderState* ntulm_;
  const EncoderState* text_;
  const EmbeddingTable* table_;
  std::optional<NtuResolver> resolver_;
};

inline nlohmann::json embedding_to_json(const std::string& id, const TweetEmbedding& e) {
  return {{"id", id},
          {"variant", std::string(to_string(e.variant))},
          {"overlap", e.overlap},
          {"vector", std::vector<double>(e.vector.data(), e.vector.data() + e.vector.size())}};
}

}  // namespace ntulm
