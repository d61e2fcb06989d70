#pragma once
// Experiment harness shared by the CLI and the acceptance suite: solving
// every instance of a dataset with the requested solver variants, refinement
// through the cost volume, summaries and deterministic CSV/JSON emission.

#include <atomic>
#include <functional>
#include <map>
#include <sstream>
#include <thread>

#include "mono3d/cost_volume.hpp"
#include "mono3d/dataset.hpp"
#include "mono3d/eval.hpp"

namespace mono3d {

enum class SamplingStrategy { kUniform, kAdaptive };

inline const char* sampling_name(SamplingStrategy s) {
  return s == SamplingStrategy::kUniform ? "uniform" : "adaptive";
}

struct SolveOptions {
  EnergyConfig energy;
  double search_half_range = 1.6;  // meters around the proposal depth
  int coarse_steps = 33;
  double tol = 0.005;
  double oracle_step = 0.0025;
  double lambda = 0.5;
  int depth_samples = 32;
  double temperature = 0.0;            // <= 0 selects the IQR auto rule
  SamplingStrategy sampling = SamplingStrategy::kAdaptive;
  double uniform_half_range = 1.6;     // uniform-grid baseline half range
  double belief_sigma_floor = 0.05;    // when the dataset carries sigma == 0
  int min_instance_pixels = 8;
};

struct InstanceResult {
  int scene_id = 0;
  int instance_id = 0;
  SolverVariant variant = SolverVariant::kDenseGeo;
  std::string status = "ok";
  double z_true = 0.0;
  double z_proposal = 0.0;
  double z_est = std::numeric_limits<double>::quiet_NaN();
  double abs_error = std::numeric_limits<double>::quiet_NaN();
  double energy = std::numeric_limits<double>::quiet_NaN();
  long evaluations = 0;

  bool ok() const { return status == "ok"; }
};

inline SolverVariant parse_variant(const std::string& name) {
  if (name == "sparse_geo") return SolverVariant::kSparseGeo;
  if (name == "dense_geo") return SolverVariant::kDenseGeo;
  if (name == "joint") return SolverVariant::kJoint;
  if (name == "oracle") return SolverVariant::kOracle;
  if (name == "refine") return SolverVariant::kRefine;
  throw InvalidInputError("unknown solver variant: " + name);
}

inline InstanceResult solve_instance(const GeneratedScene& g, std::size_t instance,
                                     SolverVariant variant, const SolveOptions& opt) {
  const SceneSample& s = g.sample;
  InstanceResult row;
  row.instance_id = static_cast<int>(instance);
  row.variant = variant;
  row.z_true = s.boxes[instance].pose.center.z();
  const Box3D& proposal = s.proposals[instance];
  row.z_proposal = proposal.pose.center.z();

  EnergyConfig cfg = opt.energy;
  cfg.min_pixels = std::max(cfg.min_pixels, opt.min_instance_pixels);
  const double lo = std::max(row.z_proposal - opt.search_half_range, 2.0 * kMinDepth);
  const double hi = row.z_proposal + opt.search_half_range;

  try {
    switch (variant) {
      case SolverVariant::kDenseGeo:
      case SolverVariant::kJoint:
      case SolverVariant::kOracle: {
        const PixelSet pixels = pixels_from_mask(s.noc, static_cast<int>(instance));
        const auto fn = [&](const Box3D& b) {
          return variant == SolverVariant::kJoint
                     ? joint_energy(s.features, s.noc, pixels, b, s.camera, cfg)
                     : geometric_energy(s.noc, pixels, b, s.camera, cfg);
        };
        const SolverResult r =
            variant == SolverVariant::kOracle
                ? brute_force_oracle(fn, proposal, s.camera, lo, hi, opt.oracle_step)
                : solve_depth_1d(fn, proposal, s.camera, lo, hi, opt.coarse_steps,
                                 opt.tol, variant);
        row.z_est = r.depth;
        row.energy = r.energy_at_solution;
        row.evaluations = r.evaluations;
        break;
      }
      case SolverVariant::kSparseGeo: {
        const PixelPoint center_px = project(s.camera, proposal.pose.center);
        const SolverResult r =
            solve_sparse(g.keypoints[instance], proposal.dims, proposal.pose.yaw,
                         center_px, s.camera, lo, hi, opt.coarse_steps, opt.tol);
        row.z_est = r.depth;
        row.energy = r.energy_at_solution;
        row.evaluations = r.evaluations;
        break;
      }
      case SolverVariant::kRefine: {
        const PixelSet pixels = pixels_from_mask(s.noc, static_cast<int>(instance));
        if (static_cast<int>(pixels.size()) < cfg.min_pixels) {
          throw InsufficientSupportError("refine: too few instance pixels");
        }
        const PixelRect roi = pixel_set_bounds(pixels);
        const double sigma =
            std::max(opt.belief_sigma_floor, s.proposal_depth_sigma[instance]);
        const DepthGrid grid =
            opt.sampling == SamplingStrategy::kAdaptive
                ? adaptive_grid(DepthBelief(row.z_proposal, sigma), opt.lambda,
                                opt.depth_samples)
                : uniform_grid(row.z_proposal, opt.uniform_half_range,
                               opt.depth_samples);
        const RefineResult r =
            refine_with_grid(roi, s.noc, s.features, proposal, s.camera, cfg, grid,
                             opt.temperature, static_cast<int>(instance));
        row.z_est = r.z_refine;
        double best = std::numeric_limits<double>::infinity();
        for (double e : r.diag.energies) best = std::min(best, e);
        row.energy = best;
        row.evaluations = static_cast<long>(r.diag.energies.size());
        break;
      }
    }
    row.abs_error = std::abs(row.z_est - row.z_true);
  } catch (const InsufficientSupportError&) {
    row.status = "insufficient_support";
  } catch (const NoSupportError&) {
    row.status = "no_support";
  } catch (const Error& e) {
    row.status = std::string("error: ") + e.what();
  }
  return row;
}

inline std::vector<InstanceResult> solve_scene(const GeneratedScene& g, int scene_id,
                                               const std::vector<SolverVariant>& variants,
                                               const SolveOptions& opt) {
  std::vector<InstanceResult> rows;
  for (std::size_t i = 0; i < g.sample.boxes.size(); ++i) {
    for (SolverVariant v : variants) {
      InstanceResult row = solve_instance(g, i, v, opt);
      row.scene_id = scene_id;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// Runs `work(scene_index)` for every scene, instance-parallel with a fixed
// output ordering regardless of the thread count.
inline std::vector<std::vector<InstanceResult>> run_scenes(
    std::size_t scene_count, int jobs,
    const std::function<std::vector<InstanceResult>(std::size_t)>& work) {
  std::vector<std::vector<InstanceResult>> results(scene_count);
  if (jobs <= 1 || scene_count <= 1) {
    for (std::size_t i = 0; i < scene_count; ++i) results[i] = work(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  const int n_threads = std::min<int>(jobs, static_cast<int>(scene_count));
  for (int t = 0; t < n_threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < scene_count; i = next.fetch_add(1)) {
        results[i] = work(i);
      }
    });
  }
  for (auto& th : pool) th.join();
  return results;
}

inline std::string results_to_csv(const std::vector<InstanceResult>& rows) {
  std::string out =
      "scene,instance,variant,status,z_true,z_proposal,z_est,abs_error,energy,"
      "evaluations\n";
  for (const InstanceResult& r : rows) {
    out += std::to_string(r.scene_id) + ',' + std::to_string(r.instance_id) + ',';
    out += solver_variant_name(r.variant);
    out += ',';
    out += r.status + ',' + format_double(r.z_true) + ',' + format_double(r.z_proposal) + ',';
    if (r.ok()) {
      out += format_double(r.z_est) + ',' + format_double(r.abs_error) + ',' +
             format_double(r.energy);
    } else {
      out += ",,";
    }
    out += ',' + std::to_string(r.evaluations) + '\n';
  }
  return out;
}

// Per-variant error summary over the "ok" rows.
inline nlohmann::ordered_json summarize_results(const std::vector<InstanceResult>& rows) {
  std::map<std::string, std::vector<std::pair<double, double>>> by_variant;
  std::map<std::string, int> failures;
  for (const InstanceResult& r : rows) {
    const std::string name = solver_variant_name(r.variant);
    if (r.ok()) {
      by_variant[name].push_back({r.z_est, r.z_true});
    } else {
      ++failures[name];
    }
  }
  nlohmann::ordered_json out;
  for (const auto& [name, pairs] : by_variant) {
    const DepthErrorStats s = depth_error_stats(pairs);
    nlohmann::ordered_json j;
    j["count"] = s.count;
    j["failed"] = failures.count(name) ? failures[name] : 0;
    j["mean_abs_error"] = s.mean_abs;
    j["median_abs_error"] = s.median_abs;
    j["p90_abs_error"] = s.p90_abs;
    j["mean_signed_error"] = s.mean_signed;
    out[name] = j;
  }
  for (const auto& [name, count] : failures) {
    if (!out.contains(name)) {
      out[name] = {{"count", 0}, {"failed", count}};
    }
  }
  return out;
}

// Depth -> energy profile of one instance with the proposal's dims/yaw, the
// range centered on the proposal depth.
inline EnergyProfile profile_instance(const GeneratedScene& g, std::size_t instance,
                                      SolverVariant variant, const SolveOptions& opt,
                                      double half_range, int samples) {
  const SceneSample& s = g.sample;
  const Box3D& proposal = s.proposals[instance];
  EnergyConfig cfg = opt.energy;
  cfg.min_pixels = std::max(cfg.min_pixels, opt.min_instance_pixels);
  const double z0 = proposal.pose.center.z();
  const double lo = std::max(z0 - half_range, 2.0 * kMinDepth);
  const double hi = z0 + half_range;

  switch (variant) {
    case SolverVariant::kSparseGeo: {
      const auto fn = [&](const Box3D& b) {
        return sparse_corner_energy(g.keypoints[instance], b, s.camera);
      };
      return energy_profile(fn, proposal, s.camera, lo, hi, samples);
    }
    case SolverVariant::kJoint: {
      const PixelSet pixels = pixels_from_mask(s.noc, static_cast<int>(instance));
      const auto fn = [&](const Box3D& b) {
        return joint_energy(s.features, s.noc, pixels, b, s.camera, cfg);
      };
      return energy_profile(fn, proposal, s.camera, lo, hi, samples);
    }
    default: {
      const PixelSet pixels = pixels_from_mask(s.noc, static_cast<int>(instance));
      const auto fn = [&](const Box3D& b) {
        return geometric_energy(s.noc, pixels, b, s.camera, cfg);
      };
      return energy_profile(fn, proposal, s.camera, lo, hi, samples);
    }
  }
}

// Detections for evaluation: the proposal box with its depth replaced by the
// solver estimate (center slides along the proposal's projected-center ray),
// scored by negated solution energy.
inline std::vector<ApGroup> detections_from_results(
    const DatasetManifest& manifest, const std::vector<InstanceResult>& rows,
    SolverVariant variant) {
  std::vector<ApGroup> groups(manifest.scenes.size());
  for (std::size_t i = 0; i < manifest.scenes.size(); ++i) {
    groups[i].ground_truth = manifest.scenes[i].boxes;
  }
  for (const InstanceResult& r : rows) {
    if (r.variant != variant || !r.ok()) continue;
    if (r.scene_id < 0 || static_cast<std::size_t>(r.scene_id) >= manifest.scenes.size()) {
      throw InvalidInputError("results reference unknown scene id " +
                              std::to_string(r.scene_id));
    }
    const SceneEntry& entry = manifest.scenes[static_cast<std::size_t>(r.scene_id)];
    if (r.instance_id < 0 ||
        static_cast<std::size_t>(r.instance_id) >= entry.proposals.size()) {
      throw InvalidInputError("results reference unknown instance id " +
                              std::to_string(r.instance_id) + " in scene " +
                              std::to_string(r.scene_id));
    }
    const Box3D det_box = box_at_depth(entry.proposals[static_cast<std::size_t>(r.instance_id)],
                                       entry.camera, r.z_est);
    groups[static_cast<std::size_t>(r.scene_id)].detections.push_back(
        {det_box, -r.energy});
  }
  return groups;
}

inline std::vector<InstanceResult> parse_results_csv(const std::string& text) {
  std::vector<InstanceResult> rows;
  std::istringstream stream(text);
  std::string line;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;  // header
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    while (fields.size() < 10) fields.push_back("");
    const std::string where = "results line " + std::to_string(line_no);
    InstanceResult r;
    r.scene_id = static_cast<int>(parse_long(fields[0], where));
    r.instance_id = static_cast<int>(parse_long(fields[1], where));
    r.variant = parse_variant(fields[2]);
    r.status = fields[3];
    r.z_true = parse_double(fields[4], where);
    r.z_proposal = parse_double(fields[5], where);
    if (r.ok()) {
      r.z_est = parse_double(fields[6], where);
      r.abs_error = parse_double(fields[7], where);
      r.energy = parse_double(fields[8], where);
    }
    r.evaluations = parse_long(fields[9], where);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace mono3d
