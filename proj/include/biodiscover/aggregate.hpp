#pragma once

#include <span>
#include <string>
#include <vector>

#include "biodiscover/types.hpp"

namespace biodiscover::agg {

enum class DecisionRule { MajorityVote, WeightedSum };

const char* rule_name(DecisionRule rule);
DecisionRule rule_from_name(const std::string& name);

struct SpecimenPrediction {
  std::string specimen_id;
  DecisionRule rule = DecisionRule::MajorityVote;
  int predicted = -1;
  std::vector<double> scores;  // vote counts or weighted sums
  int images_used = 0;
};

// Modal per-image argmax. In-image argmax ties resolve by the specimen's
// summed probability, then lowest class index; vote ties likewise.
SpecimenPrediction majority_vote(const std::string& specimen_id,
                                 std::span<const ConfidenceVector> vectors);

// s = sum_i max(p_i) * p_i, predicted = argmax(s), ties to lowest index.
SpecimenPrediction weighted_sum(const std::string& specimen_id,
                                std::span<const ConfidenceVector> vectors);

SpecimenPrediction aggregate(DecisionRule rule, const std::string& specimen_id,
                             std::span<const ConfidenceVector> vectors);

}  // namespace biodiscover::agg
