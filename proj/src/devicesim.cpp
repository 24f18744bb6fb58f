#include "biodiscover/devicesim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "biodiscover/errors.hpp"

namespace biodiscover::sim {

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::Idle: return "Idle";
    case Phase::Imaging: return "Imaging";
    case Phase::FlushOpen: return "FlushOpen";
    case Phase::Refilling: return "Refilling";
  }
  return "?";
}

void Device::drop_specimen(double t) {
  if (state_.phase != Phase::Idle && state_.phase != Phase::Imaging)
    throw DataError(std::string("device: cannot drop a specimen while ") +
                    phase_name(state_.phase));
  state_.phase = Phase::Imaging;
  state_.occupancy += 1;
  imaging_done_ = false;
  events_.push_back({t, state_.phase, "drop", -1});
}

void Device::imaging_complete(double t) {
  if (state_.phase != Phase::Imaging)
    throw DataError(std::string("device: imaging_complete while ") + phase_name(state_.phase));
  imaging_done_ = true;
  events_.push_back({t, state_.phase, "imaging_complete", -1});
}

int Device::flush(double t, int container) {
  // FlushOpen is only reachable once imaging has completed.
  if (state_.phase != Phase::Imaging || !imaging_done_)
    throw DataError("device: flush requires completed imaging");
  state_.phase = Phase::FlushOpen;
  state_.active_container = container;
  events_.push_back({t, state_.phase, "flush_open", container});
  state_.phase = Phase::Refilling;
  state_.occupancy = 0;
  imaging_done_ = false;
  events_.push_back({t, state_.phase, "refill_start", container});
  return container;
}

void Device::refill_complete(double t) {
  if (state_.phase != Phase::Refilling)
    throw DataError(std::string("device: refill_complete while ") + phase_name(state_.phase));
  state_.phase = Phase::Idle;
  events_.push_back({t + refill_delay_s_, state_.phase, "refill_complete", -1});
}

double frame_rate(const CameraSettings& settings) {
  if (settings.exposure_us <= 0) throw ConfigError("frame_rate: exposure must be positive");
  return std::min(100.0, 100.0 * 1000.0 / static_cast<double>(settings.exposure_us));
}

PassResult simulate_pass(const SpecimenRenderer& renderer, const CameraSettings& settings,
                         const SinkParams& params, std::uint64_t seed) {
  Rng rng(seed);
  const double span = static_cast<double>(renderer.sensor_height());

  double v;
  if (params.fixed_velocity_px_s) {
    v = *params.fixed_velocity_px_s;
  } else {
    if (params.median_sink_s <= 0.0)
      throw ConfigError("simulate_pass: median_sink_s must be positive");
    v = rng.lognormal(std::log(span / params.median_sink_s), params.sigma_log);
  }
  if (v <= 0.0) throw ConfigError("simulate_pass: sink velocity must be positive");

  const double rate = frame_rate(settings);

  PassResult result;
  result.trajectory.velocity_px_s = v;
  result.trajectory.visible_span_px = span;
  result.trajectory.entry_time_s = 0.0;

  // Shared trigger: both cameras fire at the same capture times while the
  // specimen centroid is inside the field of view.
  for (int k = 0;; ++k) {
    const double t = (k + 0.5) / rate;
    const double y = v * t;
    if (y >= span) break;
    result.trajectory.capture_times_s.push_back(t);
    for (int cam = 1; cam <= 2; ++cam) {
      if (params.frame_drop_prob > 0.0 && rng.uniform() < params.frame_drop_prob) continue;
      RawCapture cap;
      cap.camera_id = cam;
      cap.t = t;
      renderer.render(cam, y, rng, cap.frame, cap.true_mask);
      result.captures.push_back(std::move(cap));
    }
  }
  return result;
}

RoutingDecision route(const RoutingRule& rule, std::optional<int> predicted_label,
                      std::optional<double> mean_area_px2) {
  if (rule.size_threshold_px2 && mean_area_px2) {
    return {*mean_area_px2 >= *rule.size_threshold_px2 ? rule.large_container
                                                       : rule.small_container,
            false};
  }
  if (predicted_label) {
    auto it = rule.by_class.find(*predicted_label);
    if (it != rule.by_class.end()) return {it->second, false};
  }
  return {rule.default_container, true};
}

RoutingDecision flush_and_route(Device& device, double t, const RoutingRule& rule,
                                std::optional<int> predicted_label,
                                std::optional<double> mean_area_px2) {
  RoutingDecision decision = route(rule, predicted_label, mean_area_px2);
  device.flush(t, decision.container);
  device.refill_complete(t);
  return decision;
}

std::string event_log_json(const std::vector<DeviceEvent>& events) {
  std::ostringstream out;
  for (const auto& e : events) {
    nlohmann::json j{{"t", e.t}, {"phase", phase_name(e.phase)}, {"event", e.event}};
    if (e.container >= 0) j["container"] = e.container;
    out << j.dump() << '\n';
  }
  return out.str();
}

}  // namespace biodiscover::sim
