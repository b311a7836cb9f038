#include "polylogue/ranking_eval.hpp"

#include "polylogue/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace polylogue::ranking {

std::vector<int> rank_personas(const VectorXd& scores) {
  require(scores.size() >= 1, ErrorCode::empty_input, "cannot rank an empty score vector");
  require(scores.allFinite(), ErrorCode::numeric, "persona scores must be finite");
  std::vector<int> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores(a) > scores(b); });
  std::vector<int> ranks(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) ranks[static_cast<std::size_t>(order[r])] = static_cast<int>(r) + 1;
  return ranks;
}

double mrr(std::span<const ParagraphRanking> rankings) {
  require(!rankings.empty(), ErrorCode::empty_input, "MRR over an empty paragraph set");
  double sum = 0;
  for (const auto& r : rankings) {
    require(r.label >= 0 && r.label < static_cast<int>(r.ranks.size()), ErrorCode::validation,
            "paragraph label outside the ranked personas");
    sum += 1.0 / r.ranks[static_cast<std::size_t>(r.label)];
  }
  return sum / static_cast<double>(rankings.size());
}

double mrr_random(int num_personas) {
  require(num_personas >= 1, ErrorCode::config, "K must be >= 1");
  double h = 0;
  for (int r = 1; r <= num_personas; ++r) h += 1.0 / r;
  return h / num_personas;
}

double mrr_frequency(std::span<const int> labels, int num_personas) {
  require(!labels.empty(), ErrorCode::empty_input, "frequency baseline needs at least one label");
  VectorXd counts = VectorXd::Zero(num_personas);
  for (int l : labels) {
    require(l >= 0 && l < num_personas, ErrorCode::validation,
            "label " + std::to_string(l) + " outside 0.." + std::to_string(num_personas - 1));
    counts(l) += 1.0;
  }
  const auto ranks = rank_personas(counts);
  double sum = 0;
  for (int l : labels) sum += 1.0 / ranks[static_cast<std::size_t>(l)];
  return sum / static_cast<double>(labels.size());
}

MatrixXd paragraph_means(const PolylogueMatrix& scores, const ParagraphSegmentation& seg) {
  require(scores.trace_id == seg.trace_id, ErrorCode::consistency,
          "scores and segmentation come from different traces");
  MatrixXd means(scores.num_personas(), seg.count());
  for (int p = 0; p < seg.count(); ++p) {
    const auto [first, last] = seg.ranges[static_cast<std::size_t>(p)];
    if (last > first)
      means.col(p) = scores.scores.middleCols(first, last - first).rowwise().mean();
    else
      means.col(p).setConstant(std::numeric_limits<double>::quiet_NaN());
  }
  return means;
}

std::vector<ParagraphRanking> rank_paragraphs(const PolylogueMatrix& scores,
                                              const ParagraphSegmentation& seg,
                                              const ActivationTrace& trace) {
  std::vector<ParagraphRanking> out;
  if (!trace.paragraph_labels) return out;
  const MatrixXd means = paragraph_means(scores, seg);
  for (int p = 0; p < seg.count(); ++p) {
    const auto label = trace.label_of(p);
    if (!label) continue;
    const auto [first, last] = seg.ranges[static_cast<std::size_t>(p)];
    if (last == first) continue;
    require(*label < scores.num_personas(), ErrorCode::validation,
            "trace '" + trace.trace_id + "' labels paragraph " + std::to_string(p) +
                " with unknown persona " + std::to_string(*label));
    out.push_back({trace.trace_id + "#" + std::to_string(p), rank_personas(means.col(p)), *label});
  }
  return out;
}

std::string report_json(std::span<const MrrReport> rows) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["model"] = r.model;
    j["Rnd"] = r.random;
    j["Frq"] = opt(r.frequency);
    j["Poly"] = opt(r.polylogue);
    j["paragraphs"] = r.paragraphs;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

}  // namespace polylogue::ranking
