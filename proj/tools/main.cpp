// mono3d command-line front end: dataset synthesis, depth solving, parameter
// sweeps, evaluation and energy-landscape emission. Every command is a pure
// function of (flags, input files, seed); outputs are byte-stable across
// reruns. Wall-clock timings go to a separate timing.csv sidecar, which is
// the one deliberately non-deterministic output.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "mono3d/mono3d.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

using namespace mono3d;

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << content;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CorruptionConfig load_corruption_file(const std::string& path) {
  const nlohmann::json j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw CorruptDataError(path + ": not valid JSON");
  return detail::corruption_from_json(j);
}

std::vector<SolverVariant> parse_variants(const std::vector<std::string>& names) {
  if (names.empty()) throw InvalidInputError("--variants must not be empty");
  std::vector<SolverVariant> out;
  for (const std::string& n : names) out.push_back(parse_variant(n));
  return out;
}

SamplingStrategy parse_sampling(const std::string& name) {
  if (name == "uniform") return SamplingStrategy::kUniform;
  if (name == "adaptive") return SamplingStrategy::kAdaptive;
  throw InvalidInputError("unknown sampling strategy: " + name);
}

std::pair<double, double> parse_range(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    throw InvalidInputError("--depth-range expects lo:hi, got '" + text + "'");
  }
  const double lo = parse_double(text.substr(0, colon), "--depth-range");
  const double hi = parse_double(text.substr(colon + 1), "--depth-range");
  if (!(lo < hi)) throw InvalidInputError("--depth-range: lo must be < hi");
  return {lo, hi};
}

struct SynthArgs {
  int scenes = 10;
  std::uint64_t seed = 0;
  std::string depth_range = "5:60";
  std::string corruption_file;
  std::string out;
  int width = 160, height = 120;
  double fx = 160, fy = 160, cx = 80, cy = 60;
  int boxes_per_scene = 1;
  int channels = 8;
};

int cmd_synth(const SynthArgs& args) {
  SceneRanges ranges;
  ranges.width = args.width;
  ranges.height = args.height;
  ranges.fx = args.fx;
  ranges.fy = args.fy;
  ranges.cx = args.cx;
  ranges.cy = args.cy;
  std::tie(ranges.depth_lo, ranges.depth_hi) = parse_range(args.depth_range);
  ranges.boxes_per_scene = args.boxes_per_scene;
  ranges.feature_channels = args.channels;

  CorruptionConfig cfg;
  if (!args.corruption_file.empty()) cfg = load_corruption_file(args.corruption_file);

  const fs::path out_dir(args.out);
  generate_dataset(args.scenes, ranges, cfg, args.seed, out_dir);

  Json config;
  config["command"] = "synth";
  config["seed"] = args.seed;
  config["scenes"] = args.scenes;
  config["ranges"] = detail::ranges_to_json(ranges);
  config["corruption"] = detail::corruption_to_json(cfg);
  write_file(out_dir / "config.json", config.dump(2) + "\n");

  std::cout << (out_dir / "manifest.json").string() << "\n";
  return 0;
}

struct SolveArgs {
  std::string dataset;
  std::string out;
  std::vector<std::string> variants = {"dense_geo"};
  double beta = 1.0;
  double lambda = 0.5;
  int depth_samples = 32;
  std::string sampling = "adaptive";
  double temperature = 0.0;
  double search_half_range = 1.6;
  double tol = 0.005;
  double oracle_step = 0.0025;
  int min_pixels = 8;
  int jobs = 1;
};

SolveOptions make_solve_options(const SolveArgs& args) {
  SolveOptions opt;
  opt.energy.beta = args.beta;
  opt.lambda = args.lambda;
  opt.depth_samples = args.depth_samples;
  opt.sampling = parse_sampling(args.sampling);
  opt.temperature = args.temperature;
  opt.search_half_range = args.search_half_range;
  opt.uniform_half_range = args.search_half_range;
  opt.tol = args.tol;
  opt.oracle_step = args.oracle_step;
  opt.min_instance_pixels = args.min_pixels;
  return opt;
}

Json solve_config_json(const SolveArgs& args) {
  Json j;
  j["dataset"] = args.dataset;
  j["variants"] = args.variants;
  j["beta"] = args.beta;
  j["lambda"] = args.lambda;
  j["depth_samples"] = args.depth_samples;
  j["sampling"] = args.sampling;
  j["temperature"] = args.temperature;
  j["search_half_range"] = args.search_half_range;
  j["tol"] = args.tol;
  j["oracle_step"] = args.oracle_step;
  j["min_pixels"] = args.min_pixels;
  return j;
}

int cmd_solve(const SolveArgs& args) {
  const std::vector<SolverVariant> variants = parse_variants(args.variants);
  const fs::path manifest_path(args.dataset);
  const DatasetManifest manifest = read_manifest(manifest_path);
  const fs::path base_dir = manifest_path.parent_path();
  const SolveOptions opt = make_solve_options(args);

  const auto per_scene = run_scenes(
      manifest.scenes.size(), args.jobs, [&](std::size_t i) {
        const GeneratedScene g = load_scene(manifest, i, base_dir);
        return solve_scene(g, manifest.scenes[i].id, variants, opt);
      });
  std::vector<InstanceResult> rows;
  for (const auto& scene_rows : per_scene) {
    rows.insert(rows.end(), scene_rows.begin(), scene_rows.end());
  }

  const fs::path out_dir(args.out);
  write_file(out_dir / "results.csv", results_to_csv(rows));
  write_file(out_dir / "summary.json", summarize_results(rows).dump(2) + "\n");
  Json config = solve_config_json(args);
  config["command"] = "solve";
  write_file(out_dir / "config.json", config.dump(2) + "\n");

  std::cout << (out_dir / "results.csv").string() << "\n";
  return 0;
}

struct SweepArgs {
  std::string dataset;
  std::string out;
  std::vector<double> lambdas = {0.5};
  std::vector<int> depth_samples = {8, 32};
  std::vector<std::string> samplings = {"uniform", "adaptive"};
  std::vector<double> betas = {1.0};
  double temperature = 0.0;
  double uniform_half_range = 1.6;
  int min_pixels = 8;
  int jobs = 1;
};

int cmd_sweep(const SweepArgs& args) {
  if (args.lambdas.empty() || args.depth_samples.empty() || args.samplings.empty() ||
      args.betas.empty()) {
    throw InvalidInputError("sweep: every grid dimension needs at least one value");
  }
  const fs::path manifest_path(args.dataset);
  const DatasetManifest manifest = read_manifest(manifest_path);
  const fs::path base_dir = manifest_path.parent_path();

  // Scenes are loaded once and shared across sweep cells.
  std::vector<GeneratedScene> scenes;
  scenes.reserve(manifest.scenes.size());
  for (std::size_t i = 0; i < manifest.scenes.size(); ++i) {
    scenes.push_back(load_scene(manifest, i, base_dir));
  }

  std::string table = "lambda,depth_samples,sampling,beta,count,failed,mean_abs_error,median_abs_error\n";
  std::string timing = "lambda,depth_samples,sampling,beta,runtime_ms\n";
  for (double lambda : args.lambdas) {
    for (int d : args.depth_samples) {
      for (const std::string& sampling : args.samplings) {
        for (double beta : args.betas) {
          SolveOptions opt;
          opt.energy.beta = beta;
          opt.lambda = lambda;
          opt.depth_samples = d;
          opt.sampling = parse_sampling(sampling);
          opt.temperature = args.temperature;
          opt.uniform_half_range = args.uniform_half_range;
          opt.min_instance_pixels = args.min_pixels;

          const auto t0 = std::chrono::steady_clock::now();
          const auto per_scene = run_scenes(
              scenes.size(), args.jobs, [&](std::size_t i) {
                return solve_scene(scenes[i], manifest.scenes[i].id,
                                   {SolverVariant::kRefine}, opt);
              });
          const auto t1 = std::chrono::steady_clock::now();

          std::vector<std::pair<double, double>> pairs;
          int failed = 0;
          for (const auto& scene_rows : per_scene) {
            for (const InstanceResult& r : scene_rows) {
              r.ok() ? (void)pairs.push_back({r.z_est, r.z_true}) : (void)++failed;
            }
          }
          table += format_double(lambda) + ',' + std::to_string(d) + ',' + sampling +
                   ',' + format_double(beta) + ',' + std::to_string(pairs.size()) +
                   ',' + std::to_string(failed) + ',';
          if (!pairs.empty()) {
            const DepthErrorStats s = depth_error_stats(pairs);
            table += format_double(s.mean_abs) + ',' + format_double(s.median_abs);
          } else {
            table += ",";
          }
          table += '\n';
          const double ms =
              std::chrono::duration<double, std::milli>(t1 - t0).count();
          timing += format_double(lambda) + ',' + std::to_string(d) + ',' + sampling +
                    ',' + format_double(beta) + ',' + format_double(ms) + '\n';
        }
      }
    }
  }

  const fs::path out_dir(args.out);
  write_file(out_dir / "sweep.csv", table);
  write_file(out_dir / "timing.csv", timing);
  Json config;
  config["command"] = "sweep";
  config["dataset"] = args.dataset;
  config["lambda"] = args.lambdas;
  config["depth_samples"] = args.depth_samples;
  config["sampling"] = args.samplings;
  config["beta"] = args.betas;
  config["temperature"] = args.temperature;
  config["uniform_half_range"] = args.uniform_half_range;
  config["min_pixels"] = args.min_pixels;
  write_file(out_dir / "config.json", config.dump(2) + "\n");

  std::cout << (out_dir / "sweep.csv").string() << "\n";
  return 0;
}

struct EvalArgs {
  std::string results;
  std::string dataset;
  std::vector<double> iou = {0.5, 0.7};
  std::string out;
};

int cmd_eval(const EvalArgs& args) {
  if (args.iou.empty()) throw InvalidInputError("--iou must not be empty");
  const DatasetManifest manifest = read_manifest(args.dataset);
  const std::vector<InstanceResult> rows = parse_results_csv(read_file(args.results));

  // Deterministic variant ordering.
  std::vector<SolverVariant> variants;
  for (SolverVariant v :
       {SolverVariant::kSparseGeo, SolverVariant::kDenseGeo, SolverVariant::kJoint,
        SolverVariant::kOracle, SolverVariant::kRefine}) {
    for (const InstanceResult& r : rows) {
      if (r.variant == v) {
        variants.push_back(v);
        break;
      }
    }
  }

  std::vector<int> class_ids;
  for (const SceneEntry& e : manifest.scenes) {
    for (const Box3D& b : e.boxes) {
      if (std::find(class_ids.begin(), class_ids.end(), b.class_id) == class_ids.end()) {
        class_ids.push_back(b.class_id);
      }
    }
  }
  std::sort(class_ids.begin(), class_ids.end());

  Json report;
  std::string csv = "variant,class_id,kind,iou,ap\n";
  std::string matches_csv = "variant,kind,iou,scene,detection,ground_truth,match_iou,score\n";
  for (SolverVariant v : variants) {
    const std::vector<ApGroup> groups = detections_from_results(manifest, rows, v);
    for (IouKind kind : {IouKind::kBev, IouKind::k3d}) {
      const char* kind_name = kind == IouKind::kBev ? "bev" : "3d";
      for (double thresh : args.iou) {
        for (const MatchRow& m : match_detections(groups, thresh, kind)) {
          matches_csv += std::string(solver_variant_name(v)) + ',' + kind_name + ',' +
                         format_double(thresh) + ',' + std::to_string(m.group) + ',' +
                         std::to_string(m.detection) + ',' +
                         std::to_string(m.ground_truth) + ',' + format_double(m.iou) +
                         ',' + format_double(m.score) + '\n';
        }
      }
    }
    Json vj;
    Json ap_j;
    for (int class_id : class_ids) {
      std::vector<ApGroup> class_groups(groups.size());
      for (std::size_t i = 0; i < groups.size(); ++i) {
        for (const Box3D& b : groups[i].ground_truth) {
          if (b.class_id == class_id) class_groups[i].ground_truth.push_back(b);
        }
        for (const Detection& d : groups[i].detections) {
          if (d.class_id() == class_id) class_groups[i].detections.push_back(d);
        }
      }
      for (IouKind kind : {IouKind::kBev, IouKind::k3d}) {
        const char* kind_name = kind == IouKind::kBev ? "bev" : "3d";
        for (double thresh : args.iou) {
          const double ap = ap_r40_grouped(class_groups, thresh, kind);
          const std::string key = std::string(kind_name) + "@" + format_double(thresh);
          ap_j["class_" + std::to_string(class_id)][key] = ap;
          csv += std::string(solver_variant_name(v)) + ',' + std::to_string(class_id) +
                 ',' + kind_name + ',' + format_double(thresh) + ',' +
                 format_double(ap) + '\n';
        }
      }
    }
    vj["ap_r40"] = ap_j;

    std::vector<std::pair<double, double>> pairs;
    int failed = 0;
    for (const InstanceResult& r : rows) {
      if (r.variant != v) continue;
      r.ok() ? (void)pairs.push_back({r.z_est, r.z_true}) : (void)++failed;
    }
    Json dj;
    dj["count"] = pairs.size();
    dj["failed"] = failed;
    if (!pairs.empty()) {
      const DepthErrorStats s = depth_error_stats(pairs);
      dj["mean_abs_error"] = s.mean_abs;
      dj["median_abs_error"] = s.median_abs;
      dj["p90_abs_error"] = s.p90_abs;
      dj["mean_signed_error"] = s.mean_signed;
    }
    vj["depth_error"] = dj;
    report[solver_variant_name(v)] = vj;
  }

  const fs::path out_dir(args.out);
  write_file(out_dir / "eval.json", report.dump(2) + "\n");
  write_file(out_dir / "eval.csv", csv);
  write_file(out_dir / "matches.csv", matches_csv);
  Json config;
  config["command"] = "eval";
  config["results"] = args.results;
  config["dataset"] = args.dataset;
  config["iou"] = args.iou;
  write_file(out_dir / "config.json", config.dump(2) + "\n");

  std::cout << (out_dir / "eval.json").string() << "\n";
  return 0;
}

struct ProfileArgs {
  std::string dataset;
  int scene = 0;
  int instance = 0;
  std::vector<std::string> variants = {"sparse_geo", "dense_geo", "joint"};
  double range = 1.6;
  int samples = 65;
  double beta = 1.0;
  bool dump_volume = false;
  double lambda = 0.5;
  int depth_samples = 32;
  std::string out;
};

int cmd_profile(const ProfileArgs& args) {
  const std::vector<SolverVariant> variants = parse_variants(args.variants);
  const fs::path manifest_path(args.dataset);
  const DatasetManifest manifest = read_manifest(manifest_path);
  std::size_t index = manifest.scenes.size();
  for (std::size_t i = 0; i < manifest.scenes.size(); ++i) {
    if (manifest.scenes[i].id == args.scene) index = i;
  }
  if (index == manifest.scenes.size()) {
    throw InvalidInputError("profile: unknown scene id " + std::to_string(args.scene));
  }
  const GeneratedScene g = load_scene(manifest, index, manifest_path.parent_path());
  if (args.instance < 0 ||
      static_cast<std::size_t>(args.instance) >= g.sample.boxes.size()) {
    throw InvalidInputError("profile: unknown instance id " +
                            std::to_string(args.instance) + " in scene " +
                            std::to_string(args.scene));
  }

  SolveOptions opt;
  opt.energy.beta = args.beta;
  const fs::path out_dir(args.out);
  for (SolverVariant v : variants) {
    const EnergyProfile p =
        profile_instance(g, static_cast<std::size_t>(args.instance), v, opt,
                         args.range, args.samples);
    write_file(out_dir / (std::string("profile_") + solver_variant_name(v) + ".csv"),
               profile_to_csv(p));
  }

  if (args.dump_volume) {
    const std::size_t inst = static_cast<std::size_t>(args.instance);
    const SceneSample& s = g.sample;
    const Box3D& proposal = s.proposals[inst];
    const PixelSet pixels = pixels_from_mask(s.noc, args.instance);
    if (pixels.empty()) throw NoSupportError("profile: instance has no valid pixels");
    const PixelRect roi = pixel_set_bounds(pixels);
    const double sigma = std::max(opt.belief_sigma_floor, s.proposal_depth_sigma[inst]);
    const DepthGrid grid = adaptive_grid(
        DepthBelief(proposal.pose.center.z(), sigma), args.lambda, args.depth_samples);
    const CostVolume vol = build_cost_volume(roi, s.noc, s.features, proposal, s.camera,
                                             grid, args.instance);
    write_tensor(out_dir / "cost_volume.bin", volume_to_tensor(vol));
    EnergyConfig cfg = opt.energy;
    const RefineResult r = refine_with_grid(roi, s.noc, s.features, proposal, s.camera,
                                            cfg, grid, 0.0, args.instance);
    write_file(out_dir / "refine_diagnostics.json",
               diagnostics_to_json(r.diag).dump(2) + "\n");
    write_file(out_dir / "refine_diagnostics.csv", diagnostics_to_csv(r.diag));
  }

  Json config;
  config["command"] = "profile";
  config["dataset"] = args.dataset;
  config["scene"] = args.scene;
  config["instance"] = args.instance;
  config["variants"] = args.variants;
  config["range"] = args.range;
  config["samples"] = args.samples;
  config["beta"] = args.beta;
  config["dump_volume"] = args.dump_volume;
  config["lambda"] = args.lambda;
  config["depth_samples"] = args.depth_samples;
  write_file(out_dir / "config.json", config.dump(2) + "\n");

  std::cout << out_dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monocular 3D localization lab: synthetic scenes, 2D-3D "
               "constraint solvers, adaptive cost-volume refinement, and "
               "KITTI-style evaluation"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("--scenes", synth.scenes, "Number of scenes");
  synth_cmd->add_option("--seed", synth.seed, "Master RNG seed");
  synth_cmd->add_option("--depth-range", synth.depth_range, "Box depth range lo:hi (m)");
  synth_cmd->add_option("--corruption-file", synth.corruption_file,
                        "JSON file with corruption parameters");
  synth_cmd->add_option("--width", synth.width, "Image width (px)");
  synth_cmd->add_option("--height", synth.height, "Image height (px)");
  synth_cmd->add_option("--fx", synth.fx, "Focal length x (px)");
  synth_cmd->add_option("--fy", synth.fy, "Focal length y (px)");
  synth_cmd->add_option("--cx", synth.cx, "Principal point x (px)");
  synth_cmd->add_option("--cy", synth.cy, "Principal point y (px)");
  synth_cmd->add_option("--boxes-per-scene", synth.boxes_per_scene, "Objects per scene");
  synth_cmd->add_option("--channels", synth.channels, "Semantic feature channels");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();

  SolveArgs solve;
  CLI::App* solve_cmd = app.add_subcommand("solve", "Solve depth per instance");
  solve_cmd->add_option("--dataset", solve.dataset, "Path to manifest.json")->required();
  solve_cmd->add_option("--variants", solve.variants,
                        "Comma-separated: sparse_geo,dense_geo,joint,oracle,refine")
      ->delimiter(',');
  solve_cmd->add_option("--beta", solve.beta, "Semantic weight in the joint energy");
  solve_cmd->add_option("--lambda", solve.lambda, "Adaptive grid step factor");
  solve_cmd->add_option("--depth-samples", solve.depth_samples, "Cost volume depth count");
  solve_cmd->add_option("--sampling", solve.sampling, "uniform or adaptive");
  solve_cmd->add_option("--temperature", solve.temperature,
                        "Softmax temperature (<= 0: auto IQR rule)");
  solve_cmd->add_option("--range", solve.search_half_range, "Search half range (m)");
  solve_cmd->add_option("--tol", solve.tol, "Solver depth tolerance (m)");
  solve_cmd->add_option("--oracle-step", solve.oracle_step, "Brute-force grid step (m)");
  solve_cmd->add_option("--min-pixels", solve.min_pixels, "Minimum instance pixels");
  solve_cmd->add_option("--jobs", solve.jobs, "Parallel scene workers");
  solve_cmd->add_option("--out", solve.out, "Output directory")->required();

  SweepArgs sweep;
  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "Cross-product sweep over the refinement grid");
  sweep_cmd->add_option("--dataset", sweep.dataset, "Path to manifest.json")->required();
  sweep_cmd->add_option("--lambda", sweep.lambdas, "Lambda values")->delimiter(',');
  sweep_cmd->add_option("--depth-samples", sweep.depth_samples, "Depth counts")
      ->delimiter(',');
  sweep_cmd->add_option("--sampling", sweep.samplings, "uniform,adaptive")
      ->delimiter(',');
  sweep_cmd->add_option("--beta", sweep.betas, "Semantic weights")->delimiter(',');
  sweep_cmd->add_option("--temperature", sweep.temperature,
                        "Softmax temperature (<= 0: auto)");
  sweep_cmd->add_option("--uniform-half-range", sweep.uniform_half_range,
                        "Half range of the uniform baseline grid (m)");
  sweep_cmd->add_option("--min-pixels", sweep.min_pixels, "Minimum instance pixels");
  sweep_cmd->add_option("--jobs", sweep.jobs, "Parallel scene workers");
  sweep_cmd->add_option("--out", sweep.out, "Output directory")->required();

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "AP|R40 + depth-error report");
  eval_cmd->add_option("--results", eval.results, "results.csv from solve")->required();
  eval_cmd->add_option("--dataset", eval.dataset, "Path to manifest.json")->required();
  eval_cmd->add_option("--iou", eval.iou, "IoU thresholds")->delimiter(',');
  eval_cmd->add_option("--out", eval.out, "Output directory")->required();

  ProfileArgs profile;
  CLI::App* profile_cmd =
      app.add_subcommand("profile", "Emit depth->energy landscape CSVs");
  profile_cmd->add_option("--dataset", profile.dataset, "Path to manifest.json")
      ->required();
  profile_cmd->add_option("--scene", profile.scene, "Scene id");
  profile_cmd->add_option("--instance", profile.instance, "Instance index");
  profile_cmd->add_option("--variants", profile.variants,
                          "Comma-separated energy variants")
      ->delimiter(',');
  profile_cmd->add_option("--range", profile.range, "Half range around proposal (m)");
  profile_cmd->add_option("--samples", profile.samples, "Profile sample count");
  profile_cmd->add_option("--beta", profile.beta, "Semantic weight");
  profile_cmd->add_flag("--dump-volume", profile.dump_volume,
                        "Also dump the cost volume tensor + refinement diagnostics");
  profile_cmd->add_option("--lambda", profile.lambda, "Adaptive grid step factor");
  profile_cmd->add_option("--depth-samples", profile.depth_samples,
                          "Cost volume depth count");
  profile_cmd->add_option("--out", profile.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(synth);
    if (solve_cmd->parsed()) return cmd_solve(solve);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep);
    if (eval_cmd->parsed()) return cmd_eval(eval);
    if (profile_cmd->parsed()) return cmd_profile(profile);
  } catch (const InvalidInputError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
