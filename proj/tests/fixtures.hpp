#pragma once

#include "polylogue/error.hpp"
#include "polylogue/types.hpp"

#include <doctest.h>

#include <random>
#include <string>
#include <vector>

namespace fixture {

using namespace polylogue;

/// Trace with rows from `rows` (T x d) and the given token texts.
inline ActivationTrace trace(const MatrixXd& rows, std::vector<std::string> tokens, std::string id = "t0") {
  ActivationTrace t;
  t.trace_id = std::move(id);
  t.model_id = "fixture";
  t.layer = 3;
  t.activations = rows.cast<float>();
  t.tokens = std::move(tokens);
  return t;
}

inline std::vector<std::string> words(Index T) {
  std::vector<std::string> out;
  for (Index t = 0; t < T; ++t) out.push_back(" w" + std::to_string(t));
  return out;
}

inline ActivationTrace random_trace(Index T, Index d, std::uint64_t seed, std::string id = "rand") {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  MatrixXd rows(T, d);
  for (Index i = 0; i < T; ++i)
    for (Index j = 0; j < d; ++j) rows(i, j) = g(rng);
  return trace(rows, words(T), std::move(id));
}

inline PersonaBank bank(const MatrixXd& rows, std::vector<std::string> names = {}) {
  PersonaBank b;
  b.layer = 3;
  b.default_alpha = 2.0;
  b.provenance = "fixture";
  b.vectors = rows.cast<float>();
  if (names.empty())
    for (Index k = 0; k < rows.rows(); ++k) names.push_back("p" + std::to_string(k));
  b.names = std::move(names);
  return b;
}

}  // namespace fixture

/// CHECK that `expr` throws polylogue::Error with the given code.
#define CHECK_ERROR_CODE(expr, expected)                         \
  do {                                                           \
    bool thrown_ = false;                                        \
    try {                                                        \
      (void)(expr);                                              \
    } catch (const polylogue::Error& e_) {                       \
      thrown_ = true;                                            \
      CHECK_MESSAGE(e_.code() == (expected), e_.what());         \
    }                                                            \
    CHECK_MESSAGE(thrown_, "expected polylogue::Error: " #expr); \
  } while (0)
