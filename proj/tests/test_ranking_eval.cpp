#include "fixtures.hpp"
#include "oracles.hpp"

#include "polylogue/ranking_eval.hpp"

#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <numeric>
#include <random>

using namespace polylogue;
using namespace polylogue::ranking;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

ParagraphRanking with_label_rank(int rank, int K = 8) {
  // persona 0 carries the label and sits at `rank`
  std::vector<int> ranks(static_cast<std::size_t>(K));
  std::iota(ranks.begin(), ranks.end(), 1);
  std::swap(ranks[0], ranks[static_cast<std::size_t>(rank - 1)]);
  return {"p", ranks, 0};
}

}  // namespace

TEST_CASE("rank_personas examples") {
  CHECK(rank_personas(vec({0.9, 0.1, 0.5})) == std::vector<int>{1, 3, 2});
  CHECK(rank_personas(VectorXd::Constant(5, 0.3)) == std::vector<int>{1, 2, 3, 4, 5});
  CHECK(rank_personas(vec({0.2, 0.7, 0.7})) == std::vector<int>{3, 1, 2});
  CHECK_ERROR_CODE(rank_personas(vec({0.1, std::numeric_limits<double>::infinity()})), ErrorCode::numeric);
  CHECK_ERROR_CODE(rank_personas(vec({std::numeric_limits<double>::quiet_NaN()})), ErrorCode::numeric);
}

TEST_CASE("rankings are permutations and agree with a sort oracle") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> coarse(0, 3);  // forces many ties
  for (int trial = 0; trial < 500; ++trial) {
    const Index K = 1 + trial % 9;
    VectorXd s(K);
    for (Index k = 0; k < K; ++k) s(k) = coarse(rng) * 0.25;
    const auto ranks = rank_personas(s);
    auto sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> one_to_k(static_cast<std::size_t>(K));
    std::iota(one_to_k.begin(), one_to_k.end(), 1);
    REQUIRE(sorted == one_to_k);
    REQUIRE(ranks == oracle::ranks_by_sort(s));
  }
}

TEST_CASE("whitened paragraph means of a toy trace rank like the sort oracle") {
  MatrixXd s(3, 5);
  s << 0.1, 0.3, -0.2, 0.8, 0.6,
      0.4, 0.2, 0.5, -0.1, 0.1,
      0.0, 0.9, 0.3, 0.3, 0.3;
  const std::vector<std::string> tokens{"a", "b\n\n", "c", "d\n\n", "e"};
  auto seg = segment_tokens(tokens);
  seg.trace_id = "t0";
  const PolylogueMatrix raw{"t0", s, false};
  const auto model = fit_whitening(s.transpose(), 0.05);
  const auto white = apply_whitening(model, raw);
  const MatrixXd means = paragraph_means(white, seg);
  REQUIRE(means.cols() == 3);
  CHECK(means(0, 0) == doctest::Approx((white.scores(0, 0) + white.scores(0, 1)) / 2));
  CHECK(means(2, 2) == doctest::Approx(white.scores(2, 4)));
  for (Index p = 0; p < 3; ++p) CHECK(rank_personas(means.col(p)) == oracle::ranks_by_sort(means.col(p)));
}

TEST_CASE("mrr examples") {
  const std::vector<ParagraphRanking> top{with_label_rank(1), with_label_rank(1)};
  CHECK(mrr(top) == 1.0);
  const std::vector<ParagraphRanking> two{with_label_rank(1), with_label_rank(4)};
  CHECK(mrr(two) == doctest::Approx(0.625));
  CHECK_ERROR_CODE(mrr(std::vector<ParagraphRanking>{}), ErrorCode::empty_input);
}

TEST_CASE("mrr_random") {
  CHECK(mrr_random(1) == 1.0);
  CHECK(mrr_random(2) == doctest::Approx(0.75));
  CHECK(mrr_random(8) == doctest::Approx(0.339732).epsilon(1e-6));
  CHECK(std::round(mrr_random(8) * 100) / 100 == doctest::Approx(0.34));

  // expectation over every label position of a fixed ranking
  for (int K = 1; K <= 10; ++K) {
    std::vector<ParagraphRanking> all;
    for (int r = 1; r <= K; ++r) all.push_back(with_label_rank(r, K));
    CHECK(mrr(all) == doctest::Approx(mrr_random(K)).epsilon(1e-14));
  }
}

TEST_CASE("mrr_frequency") {
  CHECK(mrr_frequency(std::vector<int>{3, 3, 3}, 8) == 1.0);
  CHECK(mrr_frequency(std::vector<int>{0, 0, 1}, 8) == doctest::Approx(5.0 / 6.0));
  std::vector<int> uniform(8);
  std::iota(uniform.begin(), uniform.end(), 0);
  CHECK(mrr_frequency(uniform, 8) == doctest::Approx(mrr_random(8)).epsilon(1e-14));
  CHECK_ERROR_CODE(mrr_frequency(std::vector<int>{}, 8), ErrorCode::empty_input);
  CHECK_ERROR_CODE(mrr_frequency(std::vector<int>{8}, 8), ErrorCode::validation);
}

TEST_CASE("bounds, permutation invariance, and frequency beats random on skewed labels") {
  std::mt19937_64 rng(17);
  const int K = 8;
  std::discrete_distribution<int> skew({8, 4, 2, 1, 1, 1, 1, 1});
  std::vector<int> labels;
  std::vector<ParagraphRanking> rs;
  std::normal_distribution<double> g;
  for (int i = 0; i < 400; ++i) {
    VectorXd s(K);
    for (auto& x : s) x = g(rng);
    const int l = skew(rng);
    labels.push_back(l);
    rs.push_back({"p", rank_personas(s), l});
  }
  const double m = mrr(rs);
  CHECK(m >= 1.0 / K);
  CHECK(m <= 1.0);
  CHECK(mrr_frequency(labels, K) > mrr_random(K));

  std::vector<int> perm(K);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto relabelled = rs;
  for (auto& r : relabelled) {
    std::vector<int> ranks(K);
    for (int k = 0; k < K; ++k) ranks[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])] = r.ranks[static_cast<std::size_t>(k)];
    r.ranks = ranks;
    r.label = perm[static_cast<std::size_t>(r.label)];
  }
  CHECK(mrr(relabelled) == doctest::Approx(m).epsilon(1e-15));
}

TEST_CASE("rank_paragraphs skips unlabelled and empty paragraphs") {
  MatrixXd rows = MatrixXd::Zero(4, 2);
  auto t = fixture::trace(rows, {"a\n\n\n\n", "b", "c", "d"});  // paragraph 1 has no tokens
  t.paragraph_labels = std::vector<ParagraphLabel>{{1, 0}, {2, 1}};
  MatrixXd s(2, 4);
  s << 9.0, 0.0, 0.2, 0.4,
      0.0, 1.0, 0.6, 0.8;
  const auto seg = segment_paragraphs(t);
  REQUIRE(seg.count() == 3);
  const auto rs = rank_paragraphs({"t0", s, true}, seg, t);
  REQUIRE(rs.size() == 1);
  CHECK(rs[0].paragraph_id == "t0#2");
  CHECK(rs[0].ranks == std::vector<int>{2, 1});
  CHECK(rs[0].label == 1);
  CHECK(mrr(rs) == 1.0);

  t.paragraph_labels = std::vector<ParagraphLabel>{{2, 5}};
  CHECK_ERROR_CODE(rank_paragraphs({"t0", s, true}, seg, t), ErrorCode::validation);
  t.paragraph_labels.reset();
  CHECK(rank_paragraphs({"t0", s, true}, seg, t).empty());
}

TEST_CASE("report_json carries the table columns") {
  const std::vector<MrrReport> rows{{"m", mrr_random(8), 0.5, std::nullopt, 12}};
  const auto j = nlohmann::ordered_json::parse(report_json(rows));
  REQUIRE(j.size() == 1);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j[0].items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"model", "Rnd", "Frq", "Poly", "paragraphs"});
  CHECK(j[0]["Poly"].is_null());
  CHECK(j[0]["Frq"] == 0.5);
  CHECK(j[0]["paragraphs"] == 12);
}
