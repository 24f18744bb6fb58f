#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "biodiscover/types.hpp"

namespace biodiscover::biomass {

// OLS on log(dry_weight) = a + b * log(mean_area) + eps.
struct RegressionFit {
  int label_id = -1;
  std::string species;
  double intercept = 0.0;      // a
  double slope = 0.0;          // b
  double residual_var = 0.0;   // SSR / (n - 2)
  double r2 = 0.0;
  double p_slope = 1.0;        // two-sided t-test, H0: b = 0
  int n = 0;
};

// (area_px2, weight_g) pairs, all strictly positive; n >= 3.
RegressionFit fit_species(const std::string& species, int label_id,
                          std::span<const std::pair<double, double>> area_weight);

struct PredictOptions {
  bool lognormal_bias_correction = false;  // multiply by exp(residual_var / 2)
};

double predict_weight(const RegressionFit& fit, double mean_area_px2,
                      const PredictOptions& opts = {});

struct SkippedSpecies {
  std::string species;
  int weighed_specimens = 0;
};

struct BiomassSummary {
  std::vector<RegressionFit> fits;
  std::vector<SkippedSpecies> skipped;
};

// Fits every species with >= 3 weighed specimens; the rest land on the skip list.
BiomassSummary fit_all(const Dataset& ds);

void write_fits_csv(const BiomassSummary& summary, const std::filesystem::path& path);

// Plot-ready per-species scatter: area, weight, fitted weight.
void write_scatter_csv(const Dataset& ds, const RegressionFit& fit,
                       const std::filesystem::path& path);

}  // namespace biodiscover::biomass
