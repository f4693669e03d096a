#include <algorithm>
#include <filesystem>
#include <iostream>

#include <fmt/format.h>

#include "commands.hpp"
#include "glassesim/burst.hpp"
#include "glassesim/degrade.hpp"
#include "glassesim/error.hpp"
#include "glassesim/io.hpp"
#include "glassesim/metrics.hpp"
#include "glassesim/reconstruct.hpp"
#include "glassesim/scene.hpp"
#include "ranges.hpp"

namespace fs = std::filesystem;

namespace glassesim::cli {

RigSpec load_rig(const std::string& path_or_preset) {
  if (fs::exists(path_or_preset)) {
    RigSpec rig;
    try {
      rig = io::read_json(path_or_preset).get<RigSpec>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path_or_preset + ": " + e.what());
    }
    rig.validate();
    return rig;
  }
  return rig_preset(path_or_preset);
}

namespace {

std::string detail_name(std::size_t i) { return fmt::format("detail_{:02d}.png", i); }
std::string burst_dir(std::size_t i) { return fmt::format("burst_{:02d}", i); }
std::string frame_name(int f) { return fmt::format("frame_{:02d}.png", f); }

/// 0/1 mask as a 16-bit PNG.
void write_mask(const fs::path& path, const Mask& mask) {
  LinearImage img(mask.width(), mask.height(), 1, 0.0f);
  for (std::size_t i = 0; i < mask.values().size(); ++i) img.values()[i] = mask.values()[i] ? 1.0f : 0.0f;
  io::write_png16(path, img);
}

Mask read_mask(const fs::path& path) {
  const LinearImage img = io::read_png(path);
  Mask m(img.width(), img.height(), 1, 0);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) m(x, y) = img(x, y, 0) > 0.5f ? 1 : 0;
  }
  return m;
}

SceneSpec load_scene(const std::string& name, std::uint64_t scene_seed) {
  if (name == "three-plane") return three_plane_scene(scene_seed);
  if (!fs::exists(name)) throw ConfigError("scene '" + name + "' is neither a file nor 'three-plane'");
  return scene_from_json(io::read_json(name), fs::path(name).parent_path());
}

NoiseModel load_noise(const std::string& name) {
  if (!fs::exists(name)) return noise_preset(name);
  try {
    return io::read_json(name).get<NoiseModel>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(name + ": " + e.what());
  }
}

/// Sorted raw PNGs of a directory (sidecar JSON files are skipped).
std::vector<RawImage> read_raw_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RawImage> out;
  for (const auto& f : files) out.push_back(read_raw(f));
  return out;
}

Capture read_capture(const fs::path& dir, const std::string& single, const std::string& burst) {
  Capture c;
  if (fs::is_directory(dir / burst)) {
    c.frames = read_raw_dir(dir / burst);
  } else if (fs::exists(dir / single)) {
    c.frames.push_back(read_raw(dir / single));
  } else {
    throw IoError("missing capture " + (dir / single).string());
  }
  return c;
}

void add_render(CLI::App& app, const GlobalOptions&) {
  struct Opts {
    std::string scene = "three-plane", rig = "eyebrow-3x3", out;
    int supersample = 2;
    std::uint64_t scene_seed = 7;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("render", "Render clean target and detail views of a planar scene");
  sub->add_option("--scene", o->scene, "Scene JSON path or 'three-plane'")->capture_default_str();
  sub->add_option("--scene-seed", o->scene_seed, "Texture seed of the built-in scene")->capture_default_str();
  sub->add_option("--rig", o->rig, "Rig JSON path or preset name")->capture_default_str();
  sub->add_option("--supersample", o->supersample, "Samples per pixel along each axis (1-8)")
      ->capture_default_str()
      ->check(CLI::Range(1, 8));
  sub->add_option("--out", o->out, "Output directory")->required();
  on_run(sub, [o] {
    const SceneSpec scene = load_scene(o->scene, o->scene_seed);
    const RigSpec rig = load_rig(o->rig);
    const fs::path dir(o->out);
    fs::create_directories(dir / "masks");
    io::write_json(dir / "rig.json", rig);
    io::write_json(dir / "scene.json", scene_to_json(scene));
    const CameraSpec target = rig.target_camera();
    const Pose& tpose = rig.target_pose();
    io::write_png16(dir / "target.png", render(scene, target, tpose, o->supersample));
    io::write_pfm(dir / "target_depth.pfm", ground_truth_depth(scene, target, tpose));

    const Image<int> quads = quad_index_map(scene, target, tpose);
    Mask textured(quads.width(), quads.height(), 1, 0);
    for (std::size_t i = 0; i < quads.values().size(); ++i) textured.values()[i] = quads.values()[i] >= 0;
    Mask seen(quads.width(), quads.height(), 1, 0);
    for (std::size_t i = 0; i < rig.details.size(); ++i) {
      const auto& d = rig.details[i];
      io::write_png16(dir / detail_name(i), render(scene, d.camera, d.pose, o->supersample));
      const Mask v = visible_from(scene, target, tpose, d.camera, d.pose);
      for (std::size_t p = 0; p < v.values().size(); ++p) seen.values()[p] |= v.values()[p];
    }
    Mask occluded(quads.width(), quads.height(), 1, 0);
    for (std::size_t p = 0; p < occluded.values().size(); ++p) {
      occluded.values()[p] = textured.values()[p] && !seen.values()[p];
    }
    write_mask(dir / "masks" / "textured.png", textured);
    write_mask(dir / "masks" / "occluded.png", occluded);
  });
}

void add_degrade(CLI::App& app, const GlobalOptions& global) {
  struct Opts {
    std::string input, out, psf = "desk-7x7", detail_psf, noise = "desk-g1", export_psf;
    int burst = 1;
    bool bin2x2 = false;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("degrade", "Simulate guide and detail raw captures from a render directory");
  sub->add_option("--input", o->input, "Render directory (target.png, detail_XX.png, rig.json)")->required();
  sub->add_option("--out", o->out, "Capture directory to write")->required();
  sub->add_option("--psf", o->psf, "PSF grid preset or directory for the guide")->capture_default_str();
  sub->add_option("--detail-psf", o->detail_psf, "PSF grid for the details (default: same as --psf)");
  sub->add_option("--noise", o->noise, "Noise preset (desk-g1, head-g1, head-g22, zero) or NoiseModel JSON")
      ->capture_default_str();
  sub->add_option("--burst", o->burst, "Frames per camera; more than one writes burst_XX directories")
      ->capture_default_str()
      ->check(CLI::Range(1, 64));
  sub->add_flag("--bin2x2", o->bin2x2, "Guide read out in 2x2 binning mode (PSF already in the binning)");
  sub->add_option("--export-psf", o->export_psf, "Also write the guide PSF grid to this directory");
  on_run(sub, [o, &global] {
    const fs::path in(o->input), dir(o->out);
    const RigSpec rig = load_rig((in / "rig.json").string());
    const PsfGrid guide_psf = resolve_psf_grid(o->psf);
    const PsfGrid detail_psf = o->detail_psf.empty() ? guide_psf : resolve_psf_grid(o->detail_psf);
    const NoiseModel noise = load_noise(o->noise);
    fs::create_directories(dir);
    if (!o->export_psf.empty()) save_psf_grid(o->export_psf, guide_psf);
    io::write_json(dir / "rig.json", rig);

    auto emit = [&](const LinearImage& clean, const CameraSpec& cam, int factor, const PsfGrid& psf,
                    bool bin, std::uint64_t stream, const std::string& single,
                    const std::string& burst) {
      GuideDegradation g{factor, cam.sensor.bayer_pattern, cam.sensor.bit_depth, bin};
      if (o->burst > 1) fs::create_directories(dir / burst);
      for (int f = 0; f < o->burst; ++f) {
        const RawImage raw =
            degrade_guide(clean, g, psf, noise, global.seed, stream * 1000 + static_cast<std::uint64_t>(f));
        if (f == 0) write_raw(dir / single, raw);
        if (o->burst > 1) write_raw(dir / burst / frame_name(f), raw);
      }
    };
    emit(io::read_png(in / "target.png"), rig.guide.camera, rig.target_scale, guide_psf, o->bin2x2, 0,
         "guide.png", "burst_guide");
    for (std::size_t i = 0; i < rig.details.size(); ++i) {
      emit(io::read_png(in / detail_name(i)), rig.details[i].camera, 1, detail_psf, false, i + 1,
           detail_name(i), burst_dir(i));
    }
  });
}

void add_noise_fit(CLI::App& app, const GlobalOptions&) {
  struct Opts {
    std::string stack, out = "-";
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("noise-fit", "Fit lambda_shot and lambda_read from a static raw stack");
  sub->add_option("--stack", o->stack, "Directory of raw PNG frames (>= 16) of a static scene")->required();
  sub->add_option("--out", o->out, "JSON output path ('-' for stdout)")->capture_default_str();
  on_run(sub, [o] {
    const NoiseFit fit = fit_noise_model(read_raw_dir(o->stack));
    nlohmann::json j = {{"model", fit.model}, {"channels", nlohmann::json::array()}};
    static const char* names[3] = {"R", "G", "B"};
    for (int c = 0; c < 3; ++c) {
      const auto& f = fit.channels[static_cast<std::size_t>(c)];
      j["channels"].push_back({{"channel", names[c]},
                               {"lambda_shot", f.lambda_shot},
                               {"lambda_read", f.lambda_read},
                               {"shot_stderr", f.shot_stderr},
                               {"read_stderr", f.read_stderr},
                               {"points", f.points}});
    }
    if (o->out == "-") {
      std::cout << j.dump(2) << "\n";
    } else {
      io::write_json(o->out, j);
    }
  });
}

void add_burst_merge(CLI::App& app, const GlobalOptions&) {
  struct Opts {
    std::string frames, out, report;
    BurstConfig cfg;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("burst-merge", "Align and merge a burst of raw frames");
  sub->add_option("--frames", o->frames, "Directory of raw PNG frames")->required();
  sub->add_option("--out", o->out, "Merged linear RGB, 16-bit PNG")->required();
  sub->add_option("--report", o->report, "Per-frame alignment report JSON");
  sub->add_option("--clip-sigma", o->cfg.clip_sigma, "Sigma-clipping threshold of the robust mean")
      ->capture_default_str();
  sub->add_option("--min-correlation", o->cfg.min_correlation,
                  "Frames aligning below this normalised correlation are dropped")
      ->capture_default_str();
  on_run(sub, [o] {
    const BurstResult r = burst_merge(read_raw_dir(o->frames), o->cfg);
    io::write_png16(o->out, r.image);
    if (!o->report.empty()) {
      nlohmann::json frames = nlohmann::json::array();
      for (const auto& f : r.frames) {
        frames.push_back({{"index", f.index},
                          {"tx_px", f.motion.tx},
                          {"ty_px", f.motion.ty},
                          {"theta_rad", f.motion.theta},
                          {"correlation", f.correlation},
                          {"dropped", f.dropped}});
      }
      io::write_json(o->report, {{"reference", r.reference}, {"frames", frames}});
    }
  });
}

void add_reconstruct(CLI::App& app, const GlobalOptions&) {
  struct Opts {
    std::string rig, captures, config, out;
    bool timings = false;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("reconstruct", "Fuse guide and detail captures into one high-resolution image");
  sub->add_option("--rig", o->rig, "Rig JSON path or preset name")->required();
  sub->add_option("--captures", o->captures,
                  "Capture directory (guide.png, detail_XX.png, optional burst_guide/ and burst_XX/)")
      ->required();
  sub->add_option("--config", o->config, "FusionConfig JSON (defaults when omitted)");
  sub->add_option("--out", o->out, "Output directory")->required();
  sub->add_flag("--record-timings", o->timings, "Add per-stage wall-clock times to diagnostics.json");
  on_run(sub, [o] {
    const RigSpec rig = load_rig(o->rig);
    ReconstructionOptions opts;
    if (!o->config.empty()) opts.fusion = io::read_json(o->config).get<FusionConfig>();
    opts.record_timings = o->timings;
    const fs::path cap(o->captures), dir(o->out);
    Captures captures;
    captures.guide = read_capture(cap, "guide.png", "burst_guide");
    for (std::size_t i = 0; i < rig.details.size(); ++i) {
      captures.details.push_back(read_capture(cap, detail_name(i), burst_dir(i)));
    }
    const Reconstruction r = reconstruct_frame(captures, rig, opts);
    fs::create_directories(dir);
    io::write_png16(dir / "out.png", r.image);
    io::write_png16(dir / "guide_up.png", r.guide_up);
    io::write_pfm(dir / "depth.pfm", r.depth);
    io::write_pfm(dir / "detail_weight.pfm", r.detail_weight);
    io::write_json(dir / "diagnostics.json", r.diagnostics);
  });
}

void add_evaluate(CLI::App& app, const GlobalOptions&) {
  struct Opts {
    std::string reference, image, baseline, edge_roi, out;
    std::vector<std::string> masks;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("evaluate", "PSNR/SSIM (and optional slanted-edge MTF50) against a reference");
  sub->add_option("--reference", o->reference, "Ground-truth linear PNG")->required()->check(CLI::ExistingFile);
  sub->add_option("--image", o->image, "Image to score")->required()->check(CLI::ExistingFile);
  sub->add_option("--baseline", o->baseline, "Optional second image scored the same way (e.g. guide_up.png)")
      ->check(CLI::ExistingFile);
  sub->add_option("--mask", o->masks, "Region mask PNG(s); PSNR is also reported inside each")
      ->check(CLI::ExistingFile);
  sub->add_option("--edge-roi", o->edge_roi, "x,y,w,h of a slanted-edge region for MTF50");
  sub->add_option("--out", o->out, "Also write the JSON to this path");
  on_run(sub, [o] {
    const LinearImage ref = io::read_png(o->reference);
    std::vector<std::pair<std::string, Mask>> masks;
    for (const auto& m : o->masks) masks.emplace_back(fs::path(m).stem().string(), read_mask(m));
    std::optional<PixelRect> roi;
    if (!o->edge_roi.empty()) {
      const auto v = parse_ints(o->edge_roi, 4);
      roi = PixelRect{v[0], v[1], v[2], v[3]};
    }
    auto score = [&](const std::string& path) {
      const LinearImage img = io::read_png(path);
      nlohmann::json j = {{"psnr_db", psnr(ref, img)}, {"ssim", ssim(ref, img)}};
      for (const auto& [name, mask] : masks) j["masked_psnr_db"][name] = psnr(ref, img, mask);
      if (roi) j["mtf50_cycles_per_px"] = mtf50_slanted_edge(img, *roi);
      return j;
    };
    nlohmann::json result = score(o->image);
    nlohmann::json applied = nlohmann::json::array();
    for (const auto& m : masks) applied.push_back(m.first);
    result["region_masks"] = applied;
    if (!o->baseline.empty()) result["baseline"] = score(o->baseline);
    std::cout << result.dump(2) << "\n";
    if (!o->out.empty()) io::write_json(o->out, result);
  });
}

}  // namespace

void add_pipeline_commands(CLI::App& app, const GlobalOptions& global) {
  add_render(app, global);
  add_degrade(app, global);
  add_noise_fit(app, global);
  add_burst_merge(app, global);
  add_reconstruct(app, global);
  add_evaluate(app, global);
}

}  // namespace glassesim::cli
