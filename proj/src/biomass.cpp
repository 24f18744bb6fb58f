#include "biodiscover/biomass.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "biodiscover/errors.hpp"

namespace biodiscover::biomass {

RegressionFit fit_species(const std::string& species, int label_id,
                          std::span<const std::pair<double, double>> area_weight) {
  if (area_weight.size() < 3)
    throw DataError("biomass: species " + species + " has " +
                    std::to_string(area_weight.size()) + " weighed specimens, need 3");
  {
    std::ostringstream offenders;
    int bad = 0;
    for (std::size_t i = 0; i < area_weight.size(); ++i)
      if (area_weight[i].first <= 0.0 || area_weight[i].second <= 0.0) {
        offenders << (bad ? ", " : "") << i;
        ++bad;
      }
    if (bad > 0)
      throw DataError("biomass: species " + species +
                      " has nonpositive area/weight at indices " + offenders.str());
  }

  const int n = static_cast<int>(area_weight.size());
  std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    x[static_cast<std::size_t>(i)] = std::log(area_weight[static_cast<std::size_t>(i)].first);
    y[static_cast<std::size_t>(i)] = std::log(area_weight[static_cast<std::size_t>(i)].second);
  }

  double mx = 0.0, my = 0.0;
  for (int i = 0; i < n; ++i) {
    mx += x[static_cast<std::size_t>(i)];
    my += y[static_cast<std::size_t>(i)];
  }
  mx /= n;
  my /= n;

  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (int i = 0; i < n; ++i) {
    const double dx = x[static_cast<std::size_t>(i)] - mx;
    const double dy = y[static_cast<std::size_t>(i)] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx <= 0.0)
    throw DataError("biomass: species " + species + " has zero variance in log area");

  RegressionFit fit;
  fit.species = species;
  fit.label_id = label_id;
  fit.n = n;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;

  double ssr = 0.0;
  for (int i = 0; i < n; ++i) {
    const double resid = y[static_cast<std::size_t>(i)] - (fit.intercept + fit.slope * x[static_cast<std::size_t>(i)]);
    ssr += resid * resid;
  }
  fit.residual_var = n > 2 ? ssr / (n - 2) : 0.0;
  fit.r2 = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
  fit.r2 = std::clamp(fit.r2, 0.0, 1.0);

  // Two-sided t-test for slope != 0.
  const double se = std::sqrt(fit.residual_var / sxx);
  if (se > 0.0) {
    const double t = fit.slope / se;
    boost::math::students_t dist(static_cast<double>(n - 2));
    fit.p_slope = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
  } else {
    fit.p_slope = fit.slope == 0.0 ? 1.0 : 0.0;  // exact fit
  }
  return fit;
}

double predict_weight(const RegressionFit& fit, double mean_area_px2,
                      const PredictOptions& opts) {
  if (mean_area_px2 <= 0.0) throw DataError("biomass: mean area must be positive");
  double w = std::exp(fit.intercept + fit.slope * std::log(mean_area_px2));
  if (opts.lognormal_bias_correction) w *= std::exp(fit.residual_var / 2.0);
  return w;
}

BiomassSummary fit_all(const Dataset& ds) {
  BiomassSummary summary;
  std::map<int, std::vector<std::pair<double, double>>> by_species;
  for (const auto& sp : ds.specimens) {
    if (!sp.dry_weight_g) continue;
    if (sp.mean_area_px2 <= 0.0 || *sp.dry_weight_g <= 0.0) continue;
    by_species[sp.label_id].push_back({sp.mean_area_px2, *sp.dry_weight_g});
  }
  for (const auto& l : ds.registry.labels()) {
    auto it = by_species.find(l.id);
    const int count = it == by_species.end() ? 0 : static_cast<int>(it->second.size());
    if (count < 3) {
      summary.skipped.push_back({l.name, count});
      continue;
    }
    summary.fits.push_back(fit_species(l.name, l.id, it->second));
  }
  return summary;
}

void write_fits_csv(const BiomassSummary& summary, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write biomass CSV: " + path.string());
  out.precision(17);
  out << "species,a,b,r2,p,n\n";
  for (const auto& f : summary.fits)
    out << f.species << ',' << f.intercept << ',' << f.slope << ',' << f.r2 << ',' << f.p_slope
        << ',' << f.n << '\n';
}

void write_scatter_csv(const Dataset& ds, const RegressionFit& fit,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write scatter CSV: " + path.string());
  out.precision(17);
  out << "specimen_id,mean_area_px2,dry_weight_g,predicted_weight_g\n";
  for (const auto& sp : ds.specimens) {
    if (sp.label_id != fit.label_id || !sp.dry_weight_g || sp.mean_area_px2 <= 0.0) continue;
    out << sp.specimen_id << ',' << sp.mean_area_px2 << ',' << *sp.dry_weight_g << ','
        << predict_weight(fit, sp.mean_area_px2) << '\n';
  }
}

}  // namespace biodiscover::biomass
