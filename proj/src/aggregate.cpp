#include "biodiscover/aggregate.hpp"

#include <algorithm>

#include "biodiscover/errors.hpp"

namespace biodiscover::agg {

const char* rule_name(DecisionRule rule) {
  return rule == DecisionRule::MajorityVote ? "majority" : "weighted";
}

DecisionRule rule_from_name(const std::string& name) {
  if (name == "majority" || name == "majority_vote") return DecisionRule::MajorityVote;
  if (name == "weighted" || name == "weighted_sum") return DecisionRule::WeightedSum;
  throw ConfigError("unknown decision rule: " + name);
}

namespace {

void check_vectors(std::span<const ConfidenceVector> vectors) {
  if (vectors.empty()) throw DataError("aggregate: no confidence vectors for specimen");
  const std::size_t k = vectors.front().probs.size();
  for (const auto& v : vectors) {
    if (v.probs.size() != k) throw DataError("aggregate: inconsistent class counts");
    if (!v.valid()) throw DataError("aggregate: invalid confidence vector");
  }
}

}  // namespace

SpecimenPrediction majority_vote(const std::string& specimen_id,
                                 std::span<const ConfidenceVector> vectors) {
  check_vectors(vectors);
  const int k = vectors.front().num_classes();

  // Summed probabilities double as the tie-breaker at both levels.
  std::vector<double> total(static_cast<std::size_t>(k), 0.0);
  for (const auto& v : vectors)
    for (int c = 0; c < k; ++c) total[static_cast<std::size_t>(c)] += v.probs[static_cast<std::size_t>(c)];

  std::vector<double> votes(static_cast<std::size_t>(k), 0.0);
  for (const auto& v : vectors) {
    double maxp = *std::max_element(v.probs.begin(), v.probs.end());
    int choice = -1;
    for (int c = 0; c < k; ++c) {
      if (v.probs[static_cast<std::size_t>(c)] == maxp) {
        if (choice < 0 || total[static_cast<std::size_t>(c)] > total[static_cast<std::size_t>(choice)])
          choice = c;  // ties keep the lower index (first hit wins on equal totals)
      }
    }
    votes[static_cast<std::size_t>(choice)] += 1.0;
  }

  int best = 0;
  for (int c = 1; c < k; ++c) {
    const auto bc = static_cast<std::size_t>(best);
    const auto cc = static_cast<std::size_t>(c);
    if (votes[cc] > votes[bc] ||
        (votes[cc] == votes[bc] && total[cc] > total[bc]))
      best = c;
  }

  return {specimen_id, DecisionRule::MajorityVote, best, std::move(votes),
          static_cast<int>(vectors.size())};
}

SpecimenPrediction weighted_sum(const std::string& specimen_id,
                                std::span<const ConfidenceVector> vectors) {
  check_vectors(vectors);
  const int k = vectors.front().num_classes();

  // Each image weighted by its own top confidence.
  std::vector<double> s(static_cast<std::size_t>(k), 0.0);
  for (const auto& v : vectors) {
    const double w = *std::max_element(v.probs.begin(), v.probs.end());
    for (int c = 0; c < k; ++c) s[static_cast<std::size_t>(c)] += w * v.probs[static_cast<std::size_t>(c)];
  }

  int best = 0;
  for (int c = 1; c < k; ++c)
    if (s[static_cast<std::size_t>(c)] > s[static_cast<std::size_t>(best)]) best = c;

  return {specimen_id, DecisionRule::WeightedSum, best, std::move(s),
          static_cast<int>(vectors.size())};
}

SpecimenPrediction aggregate(DecisionRule rule, const std::string& specimen_id,
                             std::span<const ConfidenceVector> vectors) {
  return rule == DecisionRule::MajorityVote ? majority_vote(specimen_id, vectors)
                                            : weighted_sum(specimen_id, vectors);
}

}  // namespace biodiscover::agg
