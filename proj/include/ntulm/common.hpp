#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ntulm {

enum class ErrorCode {
  EmptyAfterNormalization,
  CorpusDecodeError,
  EmptyGraph,
  EmptyNodeSet,
  DimensionMismatch,
  NonFiniteLoss,
  NonFiniteActivation,
  UnknownNode,
  SequenceTooLong,
  EmptyText,
  DegenerateLabels,
  LengthMismatch,
  KTooLarge,
  NoRelevantItems,
  ZeroBaseline,
  MissingArtifact,
  ConfigInvalid,
  FormatError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyAfterNormalization: return "EmptyAfterNormalization";
    case ErrorCode::CorpusDecodeError: return "CorpusDecodeError";
    case ErrorCode::EmptyGraph: return "EmptyGraph";
    case ErrorCode::EmptyNodeSet: return "EmptyNodeSet";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::SequenceTooLong: return "SequenceTooLong";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::NoRelevantItems: return "NoRelevantItems";
    case ErrorCode::ZeroBaseline: return "ZeroBaseline";
    case ErrorCode::MissingArtifact: return "MissingArtifact";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::FormatError: return "FormatError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Seeded engine plus the few draws the toolkit needs. The draws are written
// out by hand instead of using <random> distributions so that a seed yields
// the same stream on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below(0)");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    // Box-Muller; one value per call keeps the stream easy to reason about.
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  // Derives an independent child seed; used to give each stage its own stream.
  std::uint64_t fork() { return engine_() ^ 0x9e3779b97f4a7c15ULL; }

 private:
  std::mt19937_64 engine_;
};

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigmoid(x)) without overflow for large |x|.
inline double log_sigmoid(double x) {
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

}  // namespace ntulm
