#pragma once

#include <algorithm>
#include <cctype>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ntulm/common.hpp"

namespace ntulm {

using TokenId = std::int32_t;

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kCls = 2;
  static constexpr TokenId kSep = 3;
  static constexpr TokenId kMask = 4;
  static constexpr TokenId kNumReserved = 5;

  Vocabulary() {
    for (const char* t : {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"}) add(t);
  }

  /// Reserved tokens first, then words by descending corpus frequency (ties
  /// alphabetical), keeping at most `max_words` of them.
  template <typename Texts>
  static Vocabulary build(const Texts& texts, std::size_t max_words) {
    std::map<std::string, std::size_t> freq;
    for (const auto& text : texts)
      for (auto& w : split_words(text)) ++freq[w];
    std::vector<std::pair<std::string, std::size_t>> words(freq.begin(), freq.end());
    std::stable_sort(words.begin(), words.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (std::size_t i = 0; i < words.size() && i < max_words; ++i) v.add(words[i].first);
    return v;
  }

  /// Lowercases, then splits on whitespace; every ASCII punctuation character
  /// is a token of its own.
  static std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    const auto flush = [&] {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    };
    for (unsigned char c : text) {
      if (std::isspace(c)) {
        flush();
      } else if (std::ispunct(c)) {
        flush();
        out.emplace_back(1, static_cast<char>(c));
      } else {
        cur.push_back(static_cast<char>(std::tolower(c)));
      }
    }
    flush();
    return out;
  }

  TokenId id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }

  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  static bool is_reserved(TokenId id) { return id < kNumReserved; }

  /// [CLS] words... [SEP], truncated so the result has at most `max_tokens`
  /// entries (>= 2).
  std::vector<TokenId> tokenize(std::string_view text, std::size_t max_tokens) const {
    std::vector<TokenId> ids{kCls};
    const std::size_t room = max_tokens < 2 ? 0 : max_tokens - 2;
    for (const auto& w : split_words(text)) {
      if (ids.size() - 1 >= room) break;
      ids.push_back(id(w));
    }
    ids.push_back(kSep);
    return ids;
  }

  void write(std::ostream& out) const {
    for (const auto& t : tokens_) out << t << '\n';
  }

  static Vocabulary read(std::istream& in) {
    Vocabulary v;
    v.tokens_.clear();
    v.index_.clear();
    std::string line;
    while (std::getline(in, line)) v.add(line);
    if (v.size() < kNumReserved || v.token(kPad) != "[PAD]" || v.token(kMask) != "[MASK]")
      throw Error(ErrorCode::FormatError, "vocabulary file does not start with the reserved tokens");
    return v;
  }

 private:
  void add(const std::string& t) {
    if (index_.count(t)) return;
    index_.emplace(t, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(t);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace ntulm
