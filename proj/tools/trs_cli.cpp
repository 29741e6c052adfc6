#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <json.hpp>

#include "trs/backbone.hpp"
#include "trs/checkpoint.hpp"
#include "trs/fit.hpp"
#include "trs/png_io.hpp"
#include "trs/shape_eval.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace trs;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int env_threads() {
  if (const char* v = std::getenv("TRS_THREADS")) return std::max(1, std::atoi(v));
  return int(hardware_threads());
}

std::string env_out() {
  if (const char* v = std::getenv("TRS_OUT")) return v;
  return ".";
}

fs::path out_file(const std::string& out_dir, const std::string& name) {
  fs::create_directories(out_dir);
  return fs::path(out_dir) / name;
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  return j;
}

// Camera JSON: {"pose": [12 numbers, row-major 3x4 camera-to-world],
// "fov_y_deg": degrees, "width": px, "height": px}.
Camera parse_camera(const json& j, int size_override = 0) {
  std::vector<std::string> errors;
  Camera cam;
  if (!j.contains("pose") || !j["pose"].is_array() || j["pose"].size() != 12) {
    errors.push_back("pose: expected an array of 12 numbers (row-major 3x4)");
  } else {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) cam.rotation(r, c) = j["pose"][r * 4 + c].get<Real>();
      cam.translation[r] = j["pose"][r * 4 + 3].get<Real>();
    }
  }
  if (!j.contains("fov_y_deg") || !j["fov_y_deg"].is_number())
    errors.push_back("fov_y_deg: expected a number (degrees)");
  else
    cam.fov_y = j["fov_y_deg"].get<Real>() * kPi / 180.0;
  cam.width = j.value("width", 0);
  cam.height = j.value("height", 0);
  if (size_override > 0) cam.width = cam.height = size_override;
  if (cam.width < 1 || cam.height < 1)
    errors.push_back("width/height: positive resolution required (or pass --size)");
  if (!errors.empty()) {
    std::string msg = "invalid camera:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw InputError(msg);
  }
  try {
    cam.validate();
  } catch (const std::exception& e) {
    throw InputError(std::string("invalid camera: ") + e.what());
  }
  return cam;
}

struct Model {
  Triplane triplane{2, 1};
  FieldParams field{3, 4, 1};
};

Model load_model(const std::string& path) {
  Checkpoint ck;
  try {
    ck = Checkpoint::load(path);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  Model m;
  try {
    m.triplane = deserialize_triplane(ck.get("triplane"));
    m.field = deserialize_field(ck.get("field"));
  } catch (const std::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  return m;
}

void save_model(const Model& m, const std::string& path) {
  Checkpoint ck;
  ck.set("triplane", serialize_triplane(m.triplane));
  ck.set("field", serialize_field(m.field));
  ck.save(path);
}

std::string format_real(Real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// ---- fit config schema ----

struct FitJob {
  FitConfig cfg;
  ShapeSpec shape;
  int n_views = 8;
  int resolution = 64;
  int checkpoint_every = 0;
};

// Validates the whole document, collecting every failing field.
FitJob parse_fit_config(const json& j) {
  std::vector<std::string> errors;
  FitJob job;

  auto num = [&](const json& obj, const char* scope, const char* key, auto def,
                 auto lo) -> decltype(def) {
    if (!obj.contains(key)) return def;
    if (!obj[key].is_number()) {
      errors.push_back(std::string(scope) + "." + key + ": expected a number");
      return def;
    }
    auto v = obj[key].get<decltype(def)>();
    if (v < lo) {
      errors.push_back(std::string(scope) + "." + key + ": below minimum " + std::to_string(lo));
      return def;
    }
    return v;
  };

  job.cfg.seed = j.value("seed", std::uint64_t(0));

  if (j.contains("scene")) {
    const json& s = j["scene"];
    job.n_views = num(s, "scene", "views", 8, 1);
    job.resolution = num(s, "scene", "resolution", 64, 8);
    if (s.contains("shape")) {
      const json& sh = s["shape"];
      std::string kind = sh.value("kind", "sphere");
      if (kind == "sphere")
        job.shape.kind = ShapeKind::Sphere;
      else if (kind == "box")
        job.shape.kind = ShapeKind::Box;
      else if (kind == "superquadric")
        job.shape.kind = ShapeKind::Superquadric;
      else
        errors.push_back("scene.shape.kind: expected sphere|box|superquadric, got " + kind);
      if (sh.contains("size")) {
        if (sh["size"].is_array() && sh["size"].size() == 3)
          for (int a = 0; a < 3; ++a) job.shape.size[a] = sh["size"][a].get<Real>();
        else if (sh["size"].is_number())
          job.shape.size = Vec3{1, 1, 1} * sh["size"].get<Real>();
        else
          errors.push_back("scene.shape.size: expected a number or [x, y, z]");
      }
      if (sh.contains("center")) {
        if (sh["center"].is_array() && sh["center"].size() == 3)
          for (int a = 0; a < 3; ++a) job.shape.center[a] = sh["center"][a].get<Real>();
        else
          errors.push_back("scene.shape.center: expected [x, y, z]");
      }
      job.shape.exponent = num(sh, "scene.shape", "exponent", Real(4), Real(1));
    }
  }

  if (j.contains("triplane")) {
    job.cfg.triplane_resolution = num(j["triplane"], "triplane", "resolution", 32, 2);
    job.cfg.triplane_channels = num(j["triplane"], "triplane", "channels", 16, 1);
  }
  if (j.contains("field")) {
    job.cfg.field_width = num(j["field"], "field", "width", 64, 1);
    job.cfg.field_layers = num(j["field"], "field", "layers", 4, 1);
  }
  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    job.cfg.optimizer.base_lr = num(o, "optimizer", "base_lr", Real(4e-4), Real(0));
    job.cfg.optimizer.warmup_steps = num(o, "optimizer", "warmup_steps", 2000, 0);
    job.cfg.optimizer.total_steps = num(o, "optimizer", "total_steps", 0, 0);
    job.cfg.optimizer.weight_decay = num(o, "optimizer", "weight_decay", Real(0), Real(0));
  }
  if (j.contains("render")) {
    job.cfg.render.samples_per_ray = num(j["render"], "render", "samples_per_ray", 128, 1);
    job.cfg.render.stratified = j["render"].value("stratified", false);
  }
  if (j.contains("weights")) {
    job.cfg.weights.lambda_lpips = num(j["weights"], "weights", "lambda_lpips", Real(2.0), Real(0));
    job.cfg.weights.lambda_mask = num(j["weights"], "weights", "lambda_mask", Real(0.05), Real(0));
  }
  if (j.contains("patch")) {
    job.cfg.patch.patch_size = num(j["patch"], "patch", "size", 0, 1);
    job.cfg.patch.p_foreground = num(j["patch"], "patch", "p_foreground", Real(0.8), Real(0));
  }
  job.checkpoint_every = num(j, "fit", "checkpoint_every", 0, 0);

  if (!j.contains("patch") || !j["patch"].contains("size"))
    job.cfg.patch.patch_size = job.resolution / 4;  // keeps the 128/512 crop ratio
  if (job.cfg.patch.patch_size > job.resolution)
    errors.push_back("patch.size: larger than scene.resolution");
  if (job.cfg.optimizer.warmup_steps > job.cfg.optimizer.total_steps)
    errors.push_back("optimizer.warmup_steps: exceeds optimizer.total_steps");

  if (!errors.empty()) {
    std::string msg = "invalid fit config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw InputError(msg);
  }
  return job;
}

// ---- commands ----

int cmd_render(const std::string& ckpt, const std::string& camera_path, int size, int samples,
               std::uint64_t seed, int threads, const std::string& out_dir) {
  Model model = load_model(ckpt);
  Camera cam = parse_camera(load_json(camera_path), size);
  RenderConfig rc;
  rc.samples_per_ray = samples;
  rc.seed = seed;
  rc.threads = threads;
  rc.sphere.radius = model.triplane.extent;
  auto t0 = std::chrono::steady_clock::now();
  RenderOutput out = render_view(model.triplane, model.field, cam, rc);
  auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0);
  write_rgb_png(out_file(out_dir, "rgb.png").string(), out);
  write_mask_png(out_file(out_dir, "mask.png").string(), out);
  std::cout << "rendered " << cam.width << "x" << cam.height << " in " << format_real(ms.count())
            << " ms (seed " << seed << ")\n";
  return kExitOk;
}

int cmd_fit(const std::string& config_path, int threads, const std::string& out_dir) {
  FitJob job = parse_fit_config(load_json(config_path));
  job.cfg.render.threads = threads;
  SyntheticScene scene = make_synthetic_scene(job.shape, job.n_views, job.resolution);

  std::ofstream log(out_file(out_dir, "loss.jsonl"));
  auto t0 = std::chrono::steady_clock::now();
  Rng rng(job.cfg.seed ^ 0xf17f17ull);
  FitState state(job.cfg, rng);
  try {
    for (int s = 0; s < job.cfg.optimizer.total_steps; ++s) {
      LossReport rep = fit_step(state, scene, job.cfg, rng);
      state.history.push_back(rep);
      log << "{\"step\":" << s << ",\"total\":" << format_real(rep.total)
          << ",\"mse\":" << format_real(rep.mse)
          << ",\"perceptual\":" << format_real(rep.perceptual)
          << ",\"mask_bce\":" << format_real(rep.mask_bce) << ",\"seed\":" << job.cfg.seed
          << "}\n";
      if (job.checkpoint_every > 0 && (s + 1) % job.checkpoint_every == 0)
        save_model({state.triplane, state.field},
                   out_file(out_dir, "step_" + std::to_string(s + 1) + ".ckpt").string());
    }
  } catch (const FitAbort& e) {
    std::cerr << "error: " << e.what() << " (step " << e.step << ")\n";
    return kExitNumeric;
  }
  double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  save_model({state.triplane, state.field}, out_file(out_dir, "model.ckpt").string());
  int window = std::min<int>(50, int(state.history.size()));
  Real smoothed = 0;
  for (int i = 0; i < window; ++i)
    smoothed += state.history[state.history.size() - 1 - i].total / window;
  std::cout << "fit: " << state.step << " steps in " << format_real(secs) << " s; final smoothed loss ("
            << window << "-step window) " << (window ? format_real(smoothed) : "n/a") << "; seed "
            << job.cfg.seed << "\n";
  return kExitOk;
}

int cmd_extract(const std::string& ckpt, int grid, Real isolevel, bool color, int threads,
                const std::string& mesh_out) {
  Model model = load_model(ckpt);
  DensityGrid dg = sample_density_grid(model.triplane, model.field, grid, threads);
  Mesh mesh = marching_cubes(dg, isolevel);
  if (mesh.empty()) {
    Real max_sigma = *std::max_element(dg.values.begin(), dg.values.end());
    std::cout << "warning: empty isosurface at isolevel " << format_real(isolevel)
              << " (grid max density " << format_real(max_sigma) << "); no file written\n";
    return kExitOk;
  }
  if (color) mesh = colorize_vertices(std::move(mesh), model.triplane, model.field);
  try {
    write_mesh(mesh, mesh_out);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  std::cout << "extracted " << mesh.vertices.size() << " vertices, " << mesh.faces.size()
            << " faces -> " << mesh_out << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, int points,
             std::vector<Real> taus, std::uint64_t seed, int threads, const std::string& csv_path) {
  Mesh pred, gt;
  try {
    pred = read_mesh(pred_path);
    gt = read_mesh(gt_path);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  if (pred.empty() || gt.empty()) throw InputError("eval: empty mesh");
  if (taus.empty()) taus = {0.1, 0.2, 0.5};
  std::sort(taus.begin(), taus.end());
  MetricsReport rep = evaluate(pred, gt, points, seed, taus, threads);

  std::ostringstream row;
  row << pred_path << ',' << gt_path << ',' << format_real(rep.cd);
  for (Real tau : taus) row << ',' << format_real(rep.fs.at(tau));
  row << ',' << format_real(rep.alignment.yaw * 180.0 / kPi) << ',' << rep.icp_iterations << ','
      << rep.seed;

  if (!csv_path.empty()) {
    bool fresh = !fs::exists(csv_path) || fs::file_size(csv_path) == 0;
    std::ofstream csv(csv_path, std::ios::app);
    if (!csv) throw InputError("cannot open for writing: " + csv_path);
    if (fresh) {
      csv << "path_pred,path_gt,cd";
      for (Real tau : taus) csv << ",fs@" << format_real(tau);
      csv << ",yaw_deg,icp_iters,seed\n";
    }
    csv << row.str() << "\n";
  }

  std::cout << "cd " << format_real(rep.cd);
  for (Real tau : taus) std::cout << "  fs@" << format_real(tau) << " " << format_real(rep.fs.at(tau));
  std::cout << "  yaw " << format_real(rep.alignment.yaw * 180.0 / kPi) << " deg  icp "
            << rep.icp_iterations << " iters  seed " << rep.seed << "\n";
  return kExitOk;
}

int cmd_forward(const std::string& image_path, const std::string& preset, std::uint64_t seed,
                const std::string& out_dir) {
  BackboneConfig cfg = preset == "paper" ? BackboneConfig::paper() : BackboneConfig::toy();
  ShapeTrace trace = shape_trace(cfg);
  std::cout << "preset " << preset << "\n"
            << "  image tokens        " << trace.image_tokens << " x " << trace.image_token_width
            << "\n"
            << "  triplane tokens     " << trace.triplane_tokens << " x "
            << trace.triplane_token_width << "\n"
            << "  backbone width      " << trace.backbone_width << " (" << trace.heads
            << " heads x " << trace.head_dim << ")\n"
            << "  coarse planes       " << trace.coarse_plane_resolution << "x"
            << trace.coarse_plane_resolution << "x" << trace.coarse_plane_channels << "\n"
            << "  final planes        " << trace.final_plane_resolution << "x"
            << trace.final_plane_resolution << "x" << trace.final_plane_channels << "\n";
  if (preset == "paper") return kExitOk;  // trace only; no full-scale weights

  RenderOutput img;
  try {
    img = read_rgb_png(image_path);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  if (img.width != img.height) throw InputError("forward: image must be square");
  if (img.width != cfg.image_resolution)
    throw InputError("forward: image must be " + std::to_string(cfg.image_resolution) + "x" +
                     std::to_string(cfg.image_resolution) + " for the toy preset");
  BackboneParams params(cfg);
  Rng rng(seed ^ 0xbacbacull);
  params.init_random(rng);
  Triplane tp = image_to_triplane(img, params);
  for (const auto& plane : tp.planes)
    if (!all_finite(plane)) {
      std::cerr << "error: non-finite triplane output\n";
      return kExitNumeric;
    }
  Checkpoint ck;
  ck.set("triplane", serialize_triplane(tp));
  std::string path = out_file(out_dir, "triplane.ckpt").string();
  ck.save(path);
  std::cout << "triplane " << tp.resolution << "x" << tp.resolution << "x" << tp.channels
            << " -> " << path << " (seed " << seed << ")\n";
  return kExitOk;
}

int cmd_inspect(const std::string& ckpt) {
  Checkpoint ck;
  try {
    ck = Checkpoint::load(ckpt);
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  for (const auto& name : ck.section_names()) {
    std::cout << name << "  " << ck.get(name).size() << " bytes";
    if (name == "triplane") {
      Triplane tp = deserialize_triplane(ck.get(name));
      std::cout << "  (" << tp.resolution << "x" << tp.resolution << "x" << tp.channels
                << ", extent " << format_real(tp.extent) << ")";
    } else if (name == "field") {
      FieldParams f = deserialize_field(ck.get(name));
      std::cout << "  (" << f.trunk.size() << " trunk layers, width " << f.width()
                << ", features " << f.feature_dim() << ")";
    }
    std::cout << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"triplane_sr: single-image-to-3D engine"};
  app.require_subcommand(1);

  int threads = env_threads();
  std::string out_dir = env_out();
  app.add_option("--threads", threads, "worker thread count (1 = bitwise-reference serial)")
      ->capture_default_str();
  app.add_option("--out", out_dir, "output directory")->capture_default_str();

  // render
  auto* render = app.add_subcommand("render", "render a checkpoint from a camera");
  std::string r_ckpt, r_camera;
  int r_size = 0, r_samples = 128;
  std::uint64_t r_seed = 0;
  render->add_option("--checkpoint", r_ckpt, "model checkpoint")->required();
  render->add_option("--camera", r_camera, "camera JSON")->required();
  render->add_option("--size", r_size, "override square resolution");
  render->add_option("--samples", r_samples, "samples per ray")->capture_default_str();
  render->add_option("--seed", r_seed, "render seed");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "fit a triplane + field to a synthetic scene");
  std::string f_config;
  fit_cmd->add_option("--config", f_config, "fit config JSON")->required();

  // extract
  auto* extract = app.add_subcommand("extract", "marching-cubes mesh from a checkpoint");
  std::string e_ckpt, e_mesh;
  int e_grid = 96;
  double e_isolevel = 10.0;
  bool e_color = false;
  extract->add_option("--checkpoint", e_ckpt, "model checkpoint")->required();
  extract->add_option("--mesh-out", e_mesh, "output mesh (.obj or .ply)")->required();
  extract->add_option("--grid", e_grid, "density grid resolution")->capture_default_str();
  extract->add_option("--isolevel", e_isolevel, "density isolevel")->capture_default_str();
  extract->add_flag("--color", e_color, "bake vertex colors from the field");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "chamfer/F-score protocol between two meshes");
  std::string v_pred, v_gt, v_csv;
  int v_points = 10000;
  std::uint64_t v_seed = 0;
  std::vector<double> v_taus;
  eval_cmd->add_option("--pred", v_pred, "predicted mesh")->required();
  eval_cmd->add_option("--gt", v_gt, "ground-truth mesh")->required();
  eval_cmd->add_option("--points", v_points, "surface samples per mesh")->capture_default_str();
  eval_cmd->add_option("--taus", v_taus, "F-score thresholds (default 0.1 0.2 0.5)");
  eval_cmd->add_option("--seed", v_seed, "sampling seed");
  eval_cmd->add_option("--csv", v_csv, "append the metrics row to this CSV");

  // forward
  auto* forward = app.add_subcommand("forward", "camera-free image-to-triplane forward pass");
  std::string w_image, w_preset = "toy";
  std::uint64_t w_seed = 0;
  forward->add_option("--image", w_image, "input PNG");
  forward->add_option("--preset", w_preset, "paper | toy")
      ->check(CLI::IsMember({"paper", "toy"}))
      ->capture_default_str();
  forward->add_option("--seed", w_seed, "weight init seed");

  // inspect
  auto* inspect = app.add_subcommand("inspect", "list checkpoint sections");
  std::string i_ckpt;
  inspect->add_option("--checkpoint", i_ckpt, "checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*render) return cmd_render(r_ckpt, r_camera, r_size, r_samples, r_seed, threads, out_dir);
    if (*fit_cmd) return cmd_fit(f_config, threads, out_dir);
    if (*extract) return cmd_extract(e_ckpt, e_grid, e_isolevel, e_color, threads, e_mesh);
    if (*eval_cmd)
      return cmd_eval(v_pred, v_gt, v_points, std::vector<Real>(v_taus.begin(), v_taus.end()),
                      v_seed, threads, v_csv);
    if (*forward) return cmd_forward(w_image, w_preset, w_seed, out_dir);
    if (*inspect) return cmd_inspect(i_ckpt);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const FitAbort& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}
