#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "biodiscover/image.hpp"
#include "biodiscover/imgproc.hpp"
#include "biodiscover/rng.hpp"
#include "biodiscover/types.hpp"

namespace biodiscover::sim {

enum class Phase { Idle, Imaging, FlushOpen, Refilling };

const char* phase_name(Phase p);

struct DeviceState {
  Phase phase = Phase::Idle;
  int occupancy = 0;        // specimens currently in the cuvette
  int active_container = 0;
};

struct DeviceEvent {
  double t = 0.0;
  Phase phase = Phase::Idle;
  std::string event;
  int container = -1;  // -1 when not a routing event
};

// Cuvette state machine. Illegal transitions throw; the flush sequence
// Imaging -> FlushOpen -> Refilling -> Idle can never be shortcut.
class Device {
 public:
  explicit Device(double refill_delay_s = 1.0) : refill_delay_s_(refill_delay_s) {}

  const DeviceState& state() const { return state_; }
  const std::vector<DeviceEvent>& events() const { return events_; }

  void drop_specimen(double t);       // Idle|Imaging -> Imaging, occupancy+1
  void imaging_complete(double t);    // Imaging -> Imaging (ready to flush)
  // Imaging (complete) -> FlushOpen -> Refilling; returns container index.
  int flush(double t, int container);
  void refill_complete(double t);     // Refilling -> Idle

  bool imaging_done() const { return imaging_done_; }

 private:
  DeviceState state_;
  std::vector<DeviceEvent> events_;
  bool imaging_done_ = false;
  double refill_delay_s_;
};

// Frames per second per camera: proportional to 1/exposure, capped at 100.
double frame_rate(const CameraSettings& settings);

struct SinkTrajectory {
  double entry_time_s = 0.0;
  double velocity_px_s = 0.0;
  double visible_span_px = 0.0;
  std::vector<double> capture_times_s;  // strictly increasing, inside the window
};

struct SinkParams {
  // Terminal velocity ~ lognormal with median visible_span / median_sink_s.
  double median_sink_s = 0.5;
  double sigma_log = 0.4;
  std::optional<double> fixed_velocity_px_s;  // overrides the draw when set
  double frame_drop_prob = 0.0;  // independent per camera, reproduces unequal counts
};

// Renders one specimen at a given vertical position, per camera view.
class SpecimenRenderer {
 public:
  virtual ~SpecimenRenderer() = default;
  virtual int sensor_width() const = 0;
  virtual int sensor_height() const = 0;
  // True mask is the exact rasterization; frame is the sensor image.
  virtual void render(int camera_id, double centroid_row, Rng& rng,
                      Image& frame, Mask& true_mask) const = 0;
  // Sensor image with no specimen (for calibration frames).
  virtual void render_background(int camera_id, Rng& rng, Image& frame) const = 0;
};

struct RawCapture {
  int camera_id = 1;
  double t = 0.0;
  Image frame;
  Mask true_mask;
};

struct PassResult {
  SinkTrajectory trajectory;
  std::vector<RawCapture> captures;  // camera-1/camera-2 pairs per capture time
};

// Sinks the specimen through the field of view, capturing both cameras at the
// shared trigger times. Deterministic per seed.
PassResult simulate_pass(const SpecimenRenderer& renderer, const CameraSettings& settings,
                         const SinkParams& params, std::uint64_t seed);

struct RoutingRule {
  std::map<int, int> by_class;              // label id -> container
  std::optional<double> size_threshold_px2; // mean area >= threshold -> large container
  int small_container = 0;
  int large_container = 1;
  int default_container = 0;
};

struct RoutingDecision {
  int container = 0;
  bool used_default = false;
};

RoutingDecision route(const RoutingRule& rule, std::optional<int> predicted_label,
                      std::optional<double> mean_area_px2);

// Runs the full flush sequence on the device and returns the container.
RoutingDecision flush_and_route(Device& device, double t, const RoutingRule& rule,
                                std::optional<int> predicted_label,
                                std::optional<double> mean_area_px2);

// Event log as line-delimited JSON objects {t, phase, event, container}.
std::string event_log_json(const std::vector<DeviceEvent>& events);

}  // namespace biodiscover::sim
