#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>

#include <fmt/format.h>

#include "commands.hpp"
#include "glassesim/error.hpp"
#include "glassesim/io.hpp"
#include "glassesim/motion.hpp"
#include "glassesim/optics.hpp"
#include "glassesim/radiometry.hpp"
#include "glassesim/reconstruct.hpp"
#include "glassesim/svg.hpp"
#include "glassesim/units.hpp"
#include "ranges.hpp"

namespace glassesim::cli {

namespace {

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    io::write_text(path, text);
  }
}

/// At most `n` evenly spread entries, always including the ends.
std::vector<std::size_t> spread(std::size_t count, std::size_t n) {
  std::vector<std::size_t> out;
  if (count <= n) {
    for (std::size_t i = 0; i < count; ++i) out.push_back(i);
    return out;
  }
  for (std::size_t k = 0; k < n; ++k) out.push_back(k * (count - 1) / (n - 1));
  return out;
}

void add_tradespace(CLI::App& app) {
  struct Opts {
    std::string dtheta, pupil, out = "-", svg;
    double wavelength_nm = 500.0;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("tradespace", "Hyperfocal distance and diffraction feasibility sweep");
  sub->add_option("--dtheta-arcmin", o->dtheta, "Target angular resolutions, arcmin (start:stop:step or list)")
      ->required();
  sub->add_option("--pupil-mm", o->pupil, "Entrance pupil diameters, mm (start:stop:step or list)")->required();
  sub->add_option("--wavelength-nm", o->wavelength_nm, "Wavelength for the diffraction limit, nm")
      ->capture_default_str();
  sub->add_option("--out", o->out, "CSV output path ('-' for stdout)")->capture_default_str();
  sub->add_option("--svg", o->svg, "Optional SVG plot of hyperfocal distance vs pupil");
  on_run(sub, [o] {
    std::vector<double> dtheta = parse_values(o->dtheta), pupil = parse_values(o->pupil);
    for (double& v : dtheta) v *= kArcminToRad;
    for (double& v : pupil) v /= 1000.0;
    const auto rows = tradespace_curve(dtheta, pupil, o->wavelength_nm * 1e-9);
    std::string csv = "dtheta_arcmin,pupil_mm,hyperfocal_m,feasible\n";
    for (const auto& r : rows) {
      csv += fmt::format("{},{},{},{}\n", r.delta_theta / kArcminToRad, r.pupil * 1e3, r.hyperfocal,
                         r.feasible ? 1 : 0);
    }
    emit(o->out, csv);
    if (!o->svg.empty()) {
      LinePlot plot{"Hyperfocal distance (feasible designs)", "entrance pupil [mm]",
                    "hyperfocal distance [m]", {}};
      for (std::size_t k : spread(dtheta.size(), 6)) {
        PlotSeries s{fmt::format("{:.3g} arcmin", dtheta[k] / kArcminToRad), {}, {}};
        for (std::size_t j = 0; j < pupil.size(); ++j) {
          const auto& r = rows[k * pupil.size() + j];
          s.x.push_back(r.pupil * 1e3);
          s.y.push_back(r.feasible ? r.hyperfocal : std::nan(""));
        }
        plot.series.push_back(std::move(s));
      }
      write_svg(o->svg, plot);
    }
  });
}

void add_photon_budget(CLI::App& app) {
  struct Opts {
    std::string illuminance = "10,100,1000,10000", exposure = "1,2.6,10,33";
    std::string camera, out = "-", svg, k = "derived";
    double ifov_arcmin = 2.0, pixel_um = 1.0, f_number = 1.8, transmission = 1.0;
    double required_snr = 0.0;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("photon-budget", "Shot-noise SNR bound over illuminance and exposure");
  sub->add_option("--illuminance-lux", o->illuminance, "Scene illuminances, lux (start:stop:step or list)")
      ->capture_default_str();
  sub->add_option("--exposures-ms", o->exposure, "Exposure times, ms (start:stop:step or list)")
      ->capture_default_str();
  sub->add_option("--camera", o->camera, "CameraSpec JSON (overrides the IFOV/pixel/f-number flags)");
  sub->add_option("--ifov-arcmin", o->ifov_arcmin, "Pixel IFOV, arcmin")->capture_default_str();
  sub->add_option("--pixel-um", o->pixel_um, "Pixel pitch, um")->capture_default_str();
  sub->add_option("--f-number", o->f_number, "Lens f-number")->capture_default_str();
  sub->add_option("--transmission", o->transmission, "Lens transmission")->capture_default_str();
  sub->add_option("--k", o->k, "k constants: 'derived' (from the embedded tables) or 'published'")
      ->capture_default_str()
      ->check(CLI::IsMember({"derived", "published"}));
  sub->add_option("--required-snr", o->required_snr,
                  "Also print the illuminance needed for this green-channel SNR at each exposure");
  sub->add_option("--out", o->out, "CSV output path ('-' for stdout)")->capture_default_str();
  sub->add_option("--svg", o->svg, "Optional SVG plot of green SNR vs illuminance");
  on_run(sub, [o] {
    CameraSpec cam;
    if (!o->camera.empty()) {
      cam = io::read_json(o->camera).get<CameraSpec>();
    } else {
      cam.sensor.pixel_pitch = o->pixel_um * 1e-6;
      cam.lens.focal_length = cam.sensor.pixel_pitch / (o->ifov_arcmin * kArcminToRad);
      cam.lens.entrance_pupil_diameter = cam.lens.focal_length / o->f_number;
      cam.lens.transmission = o->transmission;
      cam.sensor.width_px = cam.sensor.height_px = 2;
      cam.coc_diameter = cam.sensor.pixel_pitch;
    }
    cam.validate();
    const KConstants k = o->k == "published" ? KConstants::published() : KConstants::derived_default();
    const auto lux = parse_values(o->illuminance);
    auto exposure = parse_values(o->exposure);
    for (double& t : exposure) t /= 1000.0;
    std::string csv = "illuminance_lux,exposure_s,snr_r,snr_g,snr_b\n";
    for (double e : lux) {
      for (double t : exposure) {
        Rgb snr{};
        for (int c = 0; c < 3; ++c) {
          snr[static_cast<std::size_t>(c)] =
              std::sqrt(simplified_photons(cam, e, t, static_cast<Channel>(c), k));
        }
        csv += fmt::format("{},{},{},{},{}\n", e, t, snr[0], snr[1], snr[2]);
      }
    }
    emit(o->out, csv);
    if (o->required_snr > 0.0) {
      for (double t : exposure) {
        std::cerr << fmt::format("exposure {} s: {:.1f} lux for SNR {} (green)\n", t,
                                 required_illuminance(cam, t, o->required_snr, Channel::G, k),
                                 o->required_snr);
      }
    }
    if (!o->svg.empty()) {
      LinePlot plot{"Shot-noise SNR bound (green)", "illuminance [lux]", "SNR", {}};
      for (std::size_t j : spread(exposure.size(), 6)) {
        PlotSeries s{fmt::format("{:.3g} ms", exposure[j] * 1e3), {}, {}};
        for (double e : lux) {
          s.x.push_back(e);
          s.y.push_back(std::sqrt(simplified_photons(cam, e, exposure[j], Channel::G, k)));
        }
        plot.series.push_back(std::move(s));
      }
      write_svg(o->svg, plot);
    }
  });
}

void add_motion_analyze(CLI::App& app) {
  struct Opts {
    std::vector<std::string> gyro;
    std::string dtheta = "1,2", exposure = "1:50", out_dir;
    double still_threshold = 0.0, still_min_duration = kDefaultStillMinDuration;
    double trace_start = -1.0, trace_duration = 0.0;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("motion-analyze", "Blur-free fraction CDFs and head-still segments from gyro traces");
  sub->add_option("--gyro", o->gyro, "Gyro CSV file(s) with header t_ns,wx_rad_s,wy_rad_s,wz_rad_s; samples are pooled")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--dtheta-arcmin", o->dtheta, "Angular resolutions, arcmin (start:stop:step or list)")
      ->capture_default_str();
  sub->add_option("--exposures-ms", o->exposure, "Exposure times, ms (start:stop:step or list)")
      ->capture_default_str();
  sub->add_option("--out", o->out_dir, "Output directory")->required();
  sub->add_option("--still-threshold", o->still_threshold,
                  "Angular speed threshold for head-still segments, rad/s (0 disables)")
      ->capture_default_str();
  sub->add_option("--still-min-duration", o->still_min_duration, "Minimum still segment duration, s")
      ->capture_default_str();
  sub->add_option("--trace-start-s", o->trace_start,
                  "Start of a motion-trace window, s after the first sample of the first trace");
  sub->add_option("--trace-duration-s", o->trace_duration, "Length of the motion-trace window, s");
  on_run(sub, [o] {
    std::vector<GyroTrace> traces;
    for (const auto& p : o->gyro) traces.push_back(load_gyro_csv(p));
    const auto dtheta = parse_values(o->dtheta);
    auto exposure = parse_values(o->exposure);
    for (double& t : exposure) t /= 1000.0;
    const std::filesystem::path dir(o->out_dir);
    std::filesystem::create_directories(dir);
    LinePlot plot{"Blur-free sample fraction", "exposure [ms]", "fraction", {}};
    nlohmann::json summary = {{"samples", 0}, {"cdf", nlohmann::json::array()}};
    std::size_t samples = 0;
    for (const auto& t : traces) samples += t.size();
    summary["samples"] = samples;
    for (double d : dtheta) {
      std::string csv = "exposure_s,fraction\n";
      PlotSeries s{fmt::format("{:g} arcmin", d), {}, {}};
      for (double t : exposure) {
        const double f = blur_free_fraction(traces, d * kArcminToRad, t);
        csv += fmt::format("{},{}\n", t, f);
        s.x.push_back(t * 1e3);
        s.y.push_back(f);
      }
      const std::string name = fmt::format("cdf_{:g}arcmin.csv", d);
      io::write_text(dir / name, csv);
      summary["cdf"].push_back({{"dtheta_arcmin", d}, {"file", name}});
      plot.series.push_back(std::move(s));
    }
    write_svg((dir / "cdf.svg").string(), plot);
    if (o->still_threshold > 0.0) {
      std::string csv = "trace,start_s,end_s,peak_speed_rad_s\n";
      for (std::size_t i = 0; i < traces.size(); ++i) {
        const double t0 = static_cast<double>(traces[i].start_ns());
        for (const auto& seg : head_still_segments(traces[i], o->still_threshold, o->still_min_duration)) {
          csv += fmt::format("{},{},{},{}\n", i, (seg.start_ns - t0) * 1e-9, (seg.end_ns - t0) * 1e-9,
                             seg.peak_speed);
        }
      }
      io::write_text(dir / "still_segments.csv", csv);
    }
    if (o->trace_start >= 0.0 && o->trace_duration > 0.0) {
      const auto start = traces.front().start_ns() + static_cast<std::int64_t>(std::llround(o->trace_start * 1e9));
      std::string csv = "yaw_rad,pitch_rad\n";
      for (const auto& p : motion_trace(traces.front(), start, o->trace_duration)) {
        csv += fmt::format("{},{}\n", p.yaw, p.pitch);
      }
      io::write_text(dir / "motion_trace.csv", csv);
    }
    io::write_json(dir / "summary.json", summary);
  });
}

void add_rig_plan(CLI::App& app) {
  struct Opts {
    std::string rig = "eyebrow-3x3", out;
    int tile_size = 256, margin = 8;
    bool roi = false;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("rig-plan", "Print coverage distance and per-detail orientations of a rig");
  sub->add_option("--rig", o->rig, "Rig JSON path or preset (eyebrow-3x3, eyebrow-2x1, identity)")
      ->capture_default_str();
  sub->add_option("--out", o->out, "Write the rig as JSON to this path");
  sub->add_flag("--roi", o->roi, "Also report ROI packing per target tile over the default depth range");
  sub->add_option("--tile-size", o->tile_size, "Target tile size for --roi, px")->capture_default_str();
  sub->add_option("--margin", o->margin, "ROI margin for --roi, px")->capture_default_str();
  on_run(sub, [o] {
    const RigSpec rig = load_rig(o->rig);
    const CameraSpec target = rig.target_camera();
    nlohmann::json report = {
        {"min_covered_distance_m", std::isfinite(min_covered_distance(rig))
                                       ? nlohmann::json(min_covered_distance(rig))
                                       : nlohmann::json("inf")},
        {"angular_overlap_deg", rad_to_deg(rig.angular_overlap)},
        {"target_width_px", target.sensor.width_px},
        {"target_height_px", target.sensor.height_px},
        {"guide_hfov_deg", rad_to_deg(rig.guide.camera.hfov())},
        {"details", nlohmann::json::array()}};
    const Mat3 gr = rig.guide.pose.rotation;
    for (std::size_t i = 0; i < rig.details.size(); ++i) {
      const auto& d = rig.details[i];
      const Vec3 axis = gr.transpose() * d.pose.rotation.col(2);
      report["details"].push_back({{"index", i},
                                   {"yaw_deg", rad_to_deg(std::atan2(axis.x(), axis.z()))},
                                   {"pitch_deg", rad_to_deg(std::asin(std::clamp(axis.y(), -1.0, 1.0)))},
                                   {"center_m", {d.pose.center.x(), d.pose.center.y(), d.pose.center.z()}},
                                   {"hfov_deg", rad_to_deg(d.camera.hfov())}});
    }
    if (o->roi) {
      const FusionConfig defaults;
      const auto tiles = tile_grid(target.sensor.width_px, target.sensor.height_px, o->tile_size, 32);
      auto packs = roi_for_tiles(rig, tiles, o->margin, defaults.near, defaults.far);
      nlohmann::json rois = nlohmann::json::array();
      for (auto& p : packs) {
        shelf_pack(p);
        rois.push_back({{"tile", {p.tile.x, p.tile.y, p.tile.width, p.tile.height}},
                        {"entries", p.entries.size()},
                        {"canvas", {p.canvas_width, p.canvas_height}}});
      }
      report["roi_packs"] = rois;
    }
    std::cout << report.dump(2) << "\n";
    if (!o->out.empty()) io::write_json(o->out, rig);
  });
}

}  // namespace

void add_analysis_commands(CLI::App& app, const GlobalOptions&) {
  add_tradespace(app);
  add_photon_budget(app);
  add_motion_analyze(app);
  add_rig_plan(app);
}

}  // namespace glassesim::cli
