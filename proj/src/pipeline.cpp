#include <chrono>

#include "glassesim/demosaic.hpp"
#include "glassesim/error.hpp"
#include "glassesim/reconstruct.hpp"

namespace glassesim {

namespace {

class StageTimer {
 public:
  explicit StageTimer(bool enabled) : enabled_(enabled), start_(Clock::now()) {}

  void lap(nlohmann::json& timings, const std::string& stage) {
    if (!enabled_) return;
    const auto now = Clock::now();
    const double seconds = std::chrono::duration<double>(now - start_).count();
    timings[stage] = timings.value(stage, 0.0) + seconds;
    start_ = now;
  }

 private:
  using Clock = std::chrono::steady_clock;
  bool enabled_;
  Clock::time_point start_;
};

LinearImage develop(const Capture& capture, const BurstConfig& burst, nlohmann::json& report) {
  if (capture.frames.empty()) throw DomainError("capture has no frames");
  if (capture.frames.size() == 1) {
    report = {{"frames", 1}};
    return demosaic(capture.frames.front());
  }
  BurstResult merged = burst_merge(capture.frames, burst);
  int dropped = 0;
  for (const auto& f : merged.frames) dropped += f.dropped ? 1 : 0;
  report = {{"frames", capture.frames.size()}, {"dropped", dropped}, {"reference", merged.reference}};
  return std::move(merged.image);
}

}  // namespace

Reconstruction reconstruct_frame(const Captures& captures, const RigSpec& rig,
                                 const ReconstructionOptions& options) {
  rig.validate();
  options.fusion.validate();
  if (captures.details.size() != rig.details.size()) {
    throw DomainError("expected " + std::to_string(rig.details.size()) + " detail captures, got " +
                      std::to_string(captures.details.size()));
  }
  const auto check_dims = [](const Capture& c, const CameraSpec& cam, const std::string& name) {
    for (const auto& f : c.frames) {
      if (f.width() != cam.sensor.width_px || f.height() != cam.sensor.height_px) {
        throw DomainError(name + " capture does not match its camera resolution");
      }
    }
  };
  check_dims(captures.guide, rig.guide.camera, "guide");
  for (std::size_t i = 0; i < rig.details.size(); ++i) {
    check_dims(captures.details[i], rig.details[i].camera, "detail " + std::to_string(i));
  }

  Reconstruction out;
  nlohmann::json timings = nlohmann::json::object();
  nlohmann::json inputs = nlohmann::json::object();
  StageTimer timer(options.record_timings);

  const LinearImage guide = develop(captures.guide, options.burst, inputs["guide"]);
  std::vector<LinearImage> details;
  details.reserve(captures.details.size());
  for (std::size_t i = 0; i < captures.details.size(); ++i) {
    details.push_back(develop(captures.details[i], options.burst, inputs["details"][i]));
  }
  timer.lap(timings, "demosaic");

  out.guide_up = upsample_bicubic(guide, rig.target_scale);
  timer.lap(timings, "upsample");

  std::vector<FusionSource> sources;
  std::vector<int> indices;
  nlohmann::json per_detail = nlohmann::json::array();
  for (std::size_t i = 0; i < details.size(); ++i) {
    const int idx = static_cast<int>(i);
    CorrespondenceField field =
        match_epipolar(out.guide_up, details[i], rig, idx, options.fusion);
    timer.lap(timings, "match");
    WarpedDetail warped = warp_detail(details[i], field);
    timer.lap(timings, "warp");
    per_detail.push_back({{"index", idx},
                          {"valid_fraction", field.valid_fraction()},
                          {"mean_confidence", field.mean_confidence()}});
    sources.push_back({std::move(warped.image), std::move(warped.mask), field.confidence});
    indices.push_back(idx);
    out.fields.push_back(std::move(field));
  }

  FusionResult fused = fuse(out.guide_up, sources, options.fusion);
  out.image = std::move(fused.image);
  out.detail_weight = std::move(fused.detail_weight);
  for (std::size_t i = 0; i < fused.gains.size(); ++i) per_detail[i]["gain"] = fused.gains[i];
  timer.lap(timings, "fuse");

  if (out.fields.empty()) {
    out.depth = Image<float>(out.image.width(), out.image.height(), 1,
                             std::numeric_limits<float>::infinity());
  } else {
    out.depth = triangulate_depth(out.fields, indices, rig, options.fusion);
  }
  timer.lap(timings, "depth");

  out.diagnostics = {{"details", per_detail},
                     {"inputs", inputs},
                     {"target_width", out.image.width()},
                     {"target_height", out.image.height()},
                     {"fusion", options.fusion}};
  if (options.record_timings) out.diagnostics["timings_s"] = timings;
  return out;
}

}  // namespace glassesim
