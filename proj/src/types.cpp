#include "biodiscover/types.hpp"

#include <cmath>

#include "biodiscover/errors.hpp"

namespace biodiscover {

LabelRegistry::LabelRegistry(std::vector<std::string> names) {
  for (auto& n : names) add(n);
}

int LabelRegistry::add(const std::string& name) {
  int existing = id_of(name);
  if (existing >= 0) return existing;
  int id = static_cast<int>(labels_.size());
  labels_.push_back(SpeciesLabel{id, name});
  return id;
}

int LabelRegistry::id_of(const std::string& name) const {
  for (const auto& l : labels_)
    if (l.name == name) return l.id;
  return -1;
}

const std::string& LabelRegistry::name_of(int id) const {
  if (id < 0 || id >= static_cast<int>(labels_.size()))
    throw InternalError("LabelRegistry: unknown label id " + std::to_string(id));
  return labels_[static_cast<std::size_t>(id)].name;
}

bool ConfidenceVector::valid(double tol) const {
  if (probs.empty()) return false;
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) return false;
    sum += p;
  }
  return std::fabs(sum - 1.0) <= tol;
}

}  // namespace biodiscover
