#include "fixtures.hpp"
#include "oracles.hpp"

#include "polylogue/tuning.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <random>

using namespace polylogue;
using namespace polylogue::tuning;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Candidate candidate(int layer, double alpha, std::vector<std::pair<double, double>> scores) {
  Candidate c{layer, alpha, {}};
  for (auto [s, coh] : scores) c.prompts.push_back({"p" + std::to_string(c.prompts.size()), s, coh});
  return c;
}

TuningGrid random_grid(std::mt19937_64& rng, double beta) {
  std::uniform_real_distribution<double> u(0, 100);
  std::bernoulli_distribution drop(0.15);
  TuningGrid g;
  g.beta = beta;
  for (int layer : {8, 12, 16})
    for (double alpha : {1.0, 2.0, 4.0}) {
      Candidate c{layer, alpha, {}};
      for (int p = 0; p < 6; ++p) {
        PromptScores s{"q" + std::to_string(p), u(rng), u(rng)};
        if (drop(rng)) s.trait.reset();
        if (drop(rng)) s.coherence.reset();
        c.prompts.push_back(s);
      }
      g.candidates.push_back(c);
    }
  return g;
}

}  // namespace

TEST_CASE("expected numeric score examples") {
  CHECK(*expected_numeric_score({{{50, 1.7}}, 1.0}) == 50.0);
  const auto s = expected_numeric_score({{{0, 0.0}, {100, std::log(3.0)}, {42, kNegInf}}, 0.9});
  REQUIRE(s.has_value());
  CHECK(*s == doctest::Approx(75.0));
  CHECK_FALSE(expected_numeric_score({{{50, 0.0}}, 0.1}, 0.25).has_value());
  CHECK(expected_numeric_score({{{50, 0.0}}, 0.25}, 0.25).has_value());
  CHECK_ERROR_CODE(expected_numeric_score({{{3, kNegInf}}, 1.0}), ErrorCode::numeric);
  CHECK_ERROR_CODE(expected_numeric_score({{}, 1.0}), ErrorCode::numeric);
  CHECK_ERROR_CODE(expected_numeric_score({{{3, 0.0}}, 1.5}), ErrorCode::validation);
}

TEST_CASE("max-logit subtraction keeps huge logits stable") {
  const auto s = expected_numeric_score({{{10, 1000.0}, {30, 1000.0 + std::log(3.0)}}, 1.0});
  REQUIRE(s.has_value());
  CHECK(*s == doctest::Approx(25.0));
  std::map<int, double> uniform;
  for (int k = 0; k <= 100; ++k) uniform[k] = -800.0;
  CHECK(*expected_numeric_score({uniform, 1.0}) == doctest::Approx(50.0));
}

TEST_CASE("objective examples") {
  CHECK(objective(80, 0, 0.7) == 0.0);
  for (double beta : {0.1, 0.5, 0.7, 0.99}) CHECK(objective(37.5, 37.5, beta) == doctest::Approx(37.5));
  const long double hp = std::pow(100.0L, 0.7L) * std::pow(25.0L, 0.3L);
  CHECK(objective(100, 25, 0.7) == doctest::Approx(static_cast<double>(hp)).epsilon(1e-14));
  CHECK(objective(100, 25, 0.7) == doctest::Approx(65.98).epsilon(1e-4));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 100);
  for (int i = 0; i < 100; ++i) {
    const double s = u(rng), c = u(rng);
    CHECK(objective(s, c, 0.5) == doctest::Approx(std::sqrt(s * c)).epsilon(1e-13));
  }
  CHECK_ERROR_CODE(objective(-1, 5, 0.7), ErrorCode::validation);
  CHECK_ERROR_CODE(objective(1, 5, 1.0), ErrorCode::config);
}

TEST_CASE("select_config examples") {
  SUBCASE("single candidate") {
    const TuningGrid g{{candidate(14, 3.0, {{10, 20}})}};
    const auto s = select_config(g);
    CHECK(s.layer == 14);
    CHECK(s.alpha == 3.0);
  }
  SUBCASE("a fully discarded candidate loses") {
    Candidate dead{2, 1.0, {{"a", std::nullopt, 90.0}, {"b", 95.0, std::nullopt}}};
    const TuningGrid g{{dead, candidate(9, 5.0, {{1, 1}})}};
    CHECK(select_config(g).layer == 9);
  }
  SUBCASE("discarded prompts are left out of the mean") {
    Candidate c{3, 1.0, {{"a", 50.0, 50.0}, {"b", std::nullopt, 0.0}}};
    CHECK(*mean_objective(c, 0.7) == doctest::Approx(50.0));
  }
  SUBCASE("2 layers x 2 alphas against the exhaustive oracle") {
    TuningGrid g;
    g.candidates = {candidate(10, 2.0, {{90, 40}, {70, 80}}), candidate(10, 4.0, {{95, 10}, {99, 30}}),
                    candidate(20, 2.0, {{60, 90}, {65, 85}}), candidate(20, 4.0, {{80, 60}, {85, 70}})};
    const auto s = select_config(g);
    const auto [layer, alpha] = oracle::tuning_argmax(g);
    CHECK(s.layer == layer);
    CHECK(s.alpha == alpha);
    CHECK(s.layer == 20);
    CHECK(s.alpha == 4.0);
  }
  SUBCASE("ties go to the lower layer, then the lower alpha") {
    const TuningGrid g{{candidate(12, 2.0, {{50, 50}}), candidate(8, 4.0, {{50, 50}}),
                        candidate(8, 1.0, {{50, 50}})}};
    const auto s = select_config(g);
    CHECK(s.layer == 8);
    CHECK(s.alpha == 1.0);
  }
  SUBCASE("everything discarded") {
    Candidate dead{2, 1.0, {{"a", std::nullopt, 90.0}}};
    CHECK_ERROR_CODE(select_config(TuningGrid{{dead}}), ErrorCode::no_valid_config);
  }
}

TEST_CASE("random grids match the exhaustive oracle") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    const auto g = random_grid(rng, 0.7);
    const auto s = select_config(g);
    const auto [layer, alpha] = oracle::tuning_argmax(g);
    REQUIRE(s.layer == layer);
    REQUIRE(s.alpha == alpha);
  }
}

TEST_CASE("raising a score never lowers the mean objective") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> bump(0, 20);
  for (int trial = 0; trial < 200; ++trial) {
    auto g = random_grid(rng, 0.7);
    for (auto& c : g.candidates) {
      const auto before = mean_objective(c, g.beta);
      for (auto& p : c.prompts) {
        if (p.trait) p.trait = std::min(100.0, *p.trait + bump(rng));
        if (p.coherence) p.coherence = std::min(100.0, *p.coherence + bump(rng));
      }
      const auto after = mean_objective(c, g.beta);
      REQUIRE(before.has_value() == after.has_value());
      if (before) REQUIRE(*after >= *before);
    }
  }
}

TEST_CASE("as beta -> 1 the ranking follows mean trait score") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    auto g = random_grid(rng, 1.0 - 1e-9);
    for (auto& c : g.candidates)
      for (auto& p : c.prompts)
        if (p.coherence) p.coherence = std::max(*p.coherence, 1.0);
    double best = -1;
    int best_layer = 0;
    double best_alpha = 0;
    for (const auto& c : g.candidates) {
      double sum = 0;
      int n = 0;
      for (const auto& p : c.prompts)
        if (p.trait && p.coherence) sum += *p.trait, ++n;
      if (n && sum / n > best) best = sum / n, best_layer = c.layer, best_alpha = c.alpha;
    }
    const auto s = select_config(g);
    REQUIRE(s.layer == best_layer);
    REQUIRE(s.alpha == best_alpha);
  }
}

TEST_CASE("grid JSONL ingest") {
  const std::string text =
      R"({"layer":12,"alpha":4,"prompt_id":"a","trait_logits":{"0":0,"100":1.0986122886681098},"coherence_logits":{"50":0},"numeric_mass_trait":0.9,"numeric_mass_coherence":0.8})"
      "\n"
      R"({"layer":12,"alpha":4,"prompt_id":"b","trait_logits":{"80":0,"7":null},"coherence_logits":{"60":0},"numeric_mass_trait":0.1,"numeric_mass_coherence":0.8})"
      "\n\n"
      R"({"layer":16,"alpha":2,"prompt_id":"a","trait_logits":{"40":0},"coherence_logits":{"40":0},"numeric_mass_trait":1,"numeric_mass_coherence":1})"
      "\n";
  const auto g = parse_grid_jsonl(text);
  REQUIRE(g.candidates.size() == 2);
  CHECK(g.candidates[0].prompts.size() == 2);
  CHECK(*g.candidates[0].prompts[0].trait == doctest::Approx(75.0));
  CHECK(*g.candidates[0].prompts[0].coherence == 50.0);
  CHECK_FALSE(g.candidates[0].prompts[1].trait.has_value());
  const auto s = select_config(g);
  CHECK(s.layer == 12);
  CHECK(s.mean_objective == doctest::Approx(objective(75, 50, 0.7)));

  const auto j = nlohmann::ordered_json::parse(selection_json(s, "m"));
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"model", "layer", "coef", "mean_objective"});
  CHECK(j["coef"] == 4.0);

  CHECK_ERROR_CODE(parse_grid_jsonl("{not json}\n"), ErrorCode::format);
  CHECK_ERROR_CODE(parse_grid_jsonl(R"({"layer":1,"alpha":1,"prompt_id":"a","trait_logits":{"x":0},"coherence_logits":{"1":0},"numeric_mass_trait":1,"numeric_mass_coherence":1})"),
                   ErrorCode::format);
  CHECK_ERROR_CODE(parse_grid_jsonl("\n\n"), ErrorCode::empty_input);
}
