// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include "degs/checkpoint.hpp"
#include "degs/config.hpp"
#include "degs/gradcheck.hpp"
#include "degs/image_io.hpp"
#include "degs/losses.hpp"
#include "degs/pipeline.hpp"
#include "degs/splat_renderer.hpp"
#include "degs/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <random>

namespace degs {
namespace fs = std::filesystem;

namespace {

struct SynthArgs {
  std::string out;
  std::uint64_t seed = 0;
  int frames = 8;
  int width = 64;
  int height = 64;
  std::size_t face_splats = 400;
  std::size_t mouth_splats = 100;
  bool no_hair = false;
};

struct TrainArgs {
  std::string stage;
  std::string config;
  std::string dataset;
  std::string out;
  std::string init;
  std::optional<std::uint64_t> seed;
  std::optional<int> iters;
};

struct RenderArgs {
  std::string checkpoint;
  std::string dataset;
  std::string out;
  bool canonical = false;
  bool dump_layers = false;
  bool bench = false;
  std::size_t bench_splats = 10000;
  int bench_size = 256;
  int bench_renders = 30;
  int threads = 8;
  std::uint64_t seed = 0;
};

struct EvalArgs {
  std::string a, b;
};

struct GradArgs {
  std::uint64_t seed = 0;
  int splats = 10;
  int scenes = 20;
};

std::string frame_file(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.png", i);
  return buf;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + p.string());
  out << text;
}

std::string fmt_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char b[64];
  std::snprintf(b, sizeof b, "%.6f", v);
  return b;
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  SynthSpec spec;
  spec.frames = a.frames;
  spec.width = a.width;
  spec.height = a.height;
  spec.face_splats = a.face_splats;
  spec.mouth_splats = a.mouth_splats;
  spec.hair = !a.no_hair;
  const SynthScene scene = synth_sequence(spec, a.seed);
  write_sequence(scene.dataset, a.out);
  const fs::path gt = fs::path(a.out) / "ground_truth";
  fs::create_directories(gt);
  write_text(gt / "face.txt", export_cloud_text(scene.face));
  write_text(gt / "mouth.txt", export_cloud_text(scene.mouth));
  out << "wrote " << spec.frames << " frames (" << spec.width << "x" << spec.height << ") to " << a.out << "\n";
  return 0;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig rc;
  if (!a.config.empty()) rc = load_run_config(a.config, rc);
  if (!a.dataset.empty()) rc.dataset = a.dataset;
  if (!a.out.empty()) rc.out = a.out;
  if (a.seed) rc.seed = *a.seed;
  const Stage stage = parse_stage(a.stage);
  if (a.iters) rc.training.iterations[static_cast<std::size_t>(stage)] = *a.iters;
  rc.training.validate();
  if (rc.dataset.empty()) throw Error(ErrorKind::usage, "train needs --dataset (or dataset= in the config)");
  if (rc.out.empty()) throw Error(ErrorKind::usage, "train needs --out (or out= in the config)");

  const fs::path ckpt = rc.out / "checkpoint.degs";
  fs::path init = a.init.empty() ? ckpt : fs::path(a.init);
  TrainingState state;
  const bool have_ckpt = fs::exists(init);
  if (stage != Stage::static_init && !have_ckpt) {
    throw Error(ErrorKind::state, std::string(to_string(stage)) + " stage requires a prior checkpoint; " +
                                      init.string() + " does not exist (run --stage " +
                                      (stage == Stage::motion ? "static" : "motion") + " first)");
  }
  const Dataset dataset = load_sequence(rc.dataset);
  if (stage == Stage::static_init && a.init.empty()) {
    state = initial_state(rc.training, dataset.manifest.layout, rc.seed);
  } else {
    state = load_checkpoint(init);
    check_compatible(state, rc.training);
  }
  fs::create_directories(rc.out);
  const StageReport report = run_stage(stage, rc.training, dataset, state);
  save_checkpoint(state, ckpt);
  const fs::path csv = rc.out / ("metrics_" + std::string(to_string(stage)) + ".csv");
  write_text(csv, metrics_csv(report.rows));
  out << "stage " << to_string(stage) << ": " << report.rows.size() << " iterations";
  if (!report.rows.empty()) {
    const MetricsRow& last = report.rows.back();
    out << ", final loss " << fmt_number(last.total_loss);
    if (last.evaluated) out << ", psnr " << fmt_number(last.psnr) << " dB, ssim " << fmt_number(last.ssim);
  }
  out << "\ncheckpoint " << ckpt.string() << "\nmetrics " << csv.string() << "\n";
  if (report.skipped_steps > 0) out << "skipped optimizer steps (non-finite gradients): " << report.skipped_steps << "\n";
  if (report.diagnostics.empty_jaw_masks > 0) out << "frames with empty jaw mask: " << report.diagnostics.empty_jaw_masks << "\n";
  return 0;
}

int cmd_bench(const RenderArgs& a, std::ostream& out) {
  if (a.threads > 0) omp_set_num_threads(a.threads);
  const Aabb bounds{Vec3(-1.0, -1.0, -0.5), Vec3(1.0, 1.0, 0.5)};
  RandomCloudOptions opts;
  opts.embedding_dim = 0;
  opts.initial_opacity = 0.6;
  PrimitiveCloud cloud = init_random_cloud(a.bench_splats, bounds, a.seed, opts);
  const Camera cam = Camera::looking_forward(a.bench_size, a.bench_size, 1.25 * a.bench_size, Vec3(0, 0, -3.2));
  RenderOptions ro;
  ro.retain_records = false;
  render(cloud, cam, Vec3::Zero(), ro);  // warm-up
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t visible = 0;
  for (int i = 0; i < a.bench_renders; ++i) visible = render(cloud, cam, Vec3::Zero(), ro).visible_count;
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double rate = a.bench_renders / s;
  nlohmann::json j = {{"splats", a.bench_splats},          {"visible", visible},
                      {"width", a.bench_size},             {"height", a.bench_size},
                      {"renders", a.bench_renders},        {"seconds", s},
                      {"renders_per_second", rate},        {"threads_requested", a.threads},
                      {"threads_available", omp_get_max_threads()},
                      {"hardware_threads", omp_get_num_procs()}};
  out << j.dump() << "\n";
  return 0;
}

int cmd_render(const RenderArgs& a, std::ostream& out) {
  if (a.bench) return cmd_bench(a, out);
  if (a.checkpoint.empty() || a.dataset.empty() || a.out.empty()) {
    throw Error(ErrorKind::usage, "render needs --checkpoint, --dataset and --out (or --bench)");
  }
  const TrainingState state = load_checkpoint(a.checkpoint);
  const Dataset dataset = load_sequence(a.dataset);
  const fs::path dir(a.out);
  fs::create_directories(dir / "frames");
  if (a.dump_layers) {
    for (const char* l : {"face_color", "face_opacity", "mouth_color", "hair_color"}) {
      fs::create_directories(dir / "layers" / l);
    }
  }
  // Hair comes from the reference (first) frame at inference.
  const FrameRecord& ref = dataset.frame(0);
  RenderOptions ro;
  ro.retain_records = false;
  std::string csv = "frame,psnr,ssim,overlap_energy,clamped_values\n";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const FrameRecord& f = dataset.frames[i];
    const BranchView face{&state.face.cloud, a.canonical ? nullptr : &state.face.field};
    const BranchView mouth{&state.mouth.cloud, a.canonical ? nullptr : &state.mouth.field};
    const PortraitRender pr = render_portrait(face, mouth, f.conditioning, ref.image, ref.masks.hair, ro);
    const std::string name = frame_file(static_cast<int>(i));
    write_png(dir / "frames" / name, pr.image, 16);
    if (a.dump_layers) {
      write_png(dir / "layers" / "face_color" / name, pr.layers.face_color, 16);
      write_png(dir / "layers" / "face_opacity" / name, pr.layers.face_opacity, 16);
      write_png(dir / "layers" / "mouth_color" / name, pr.layers.mouth_color, 16);
      write_png(dir / "layers" / "hair_color" / name, pr.layers.hair_color, 16);
    }
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu,%s,%.10g,%.10g,%zu\n", i, fmt_number(metric_psnr(pr.image, f.image)).c_str(),
                  metric_ssim(pr.image, f.image), pr.stats.overlap_energy, pr.stats.clamped_values);
    csv += buf;
  }
  write_text(dir / "render_metrics.csv", csv);
  out << "rendered " << dataset.size() << " frames to " << (dir / "frames").string() << "\n";
  return 0;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const Image ia = read_png(a.a);
  const Image ib = read_png(a.b);
  if (!ia.same_shape(ib)) throw Error(ErrorKind::invalid_input, "images differ in size or channel count");
  out << "psnr: " << fmt_number(metric_psnr(ia, ib)) << "\n";
  out << "ssim: " << fmt_number(metric_ssim(ia, ib)) << "\n";
  return 0;
}

int cmd_gradcheck(const GradArgs& a, std::ostream& out) {
  GradCheckOptions o;
  o.seed = a.seed;
  o.max_splats = a.splats;
  o.scenes = a.scenes;
  const GradCheckReport r = run_gradcheck(o);
  out << format_gradcheck(r);
  return r.passed() ? 0 : 1;
}

int cmd_inspect(const std::string& path, std::ostream& out) {
  out << describe_checkpoint(load_checkpoint(path));
  return 0;
}

void print_error(std::ostream& err, std::string_view kind, const std::string& message) {
  err << nlohmann::json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deformable pre-embedding Gaussian portrait fields"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth-data", "Write a procedural talking-head dataset");
  synth->add_option("--out", sa.out, "Output dataset directory")->required();
  synth->add_option("--seed", sa.seed, "Root seed");
  synth->add_option("--frames", sa.frames, "Frame count");
  synth->add_option("--width", sa.width, "Frame width");
  synth->add_option("--height", sa.height, "Frame height");
  synth->add_option("--face-splats", sa.face_splats, "Ground-truth face splats");
  synth->add_option("--mouth-splats", sa.mouth_splats, "Ground-truth mouth splats");
  synth->add_flag("--no-hair", sa.no_hair, "Leave the hair mask empty");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Run one training stage");
  train->add_option("--stage", ta.stage, "static | motion | finetune")->required()
      ->check(CLI::IsMember({"static", "static_init", "motion", "finetune"}));
  train->add_option("--config", ta.config, "key = value config file");
  train->add_option("--dataset", ta.dataset, "Dataset directory");
  train->add_option("--out", ta.out, "Run directory (checkpoint + metrics)");
  train->add_option("--init", ta.init, "Start from this checkpoint instead of <out>/checkpoint.degs");
  train->add_option("--seed", ta.seed, "Root seed (static stage)");
  train->add_option("--iters", ta.iters, "Override the stage iteration count");

  RenderArgs ra;
  auto* rend = app.add_subcommand("render", "Render a dataset's frames from a checkpoint");
  rend->add_option("--checkpoint", ra.checkpoint, "Checkpoint file");
  rend->add_option("--dataset", ra.dataset, "Dataset providing conditioning and cameras");
  rend->add_option("--out", ra.out, "Output directory");
  rend->add_flag("--canonical", ra.canonical, "Skip the deformation fields");
  rend->add_flag("--dump-layers", ra.dump_layers, "Also write the fusion input layers");
  rend->add_flag("--bench", ra.bench, "Measure render throughput on a random cloud");
  rend->add_option("--splats", ra.bench_splats, "Bench: splat count");
  rend->add_option("--size", ra.bench_size, "Bench: image width and height");
  rend->add_option("--renders", ra.bench_renders, "Bench: timed renders");
  rend->add_option("--threads", ra.threads, "Bench: OpenMP threads");
  rend->add_option("--seed", ra.seed, "Bench: cloud seed");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "PSNR and SSIM between two PNG images");
  eval->add_option("--a", ea.a, "First image")->required();
  eval->add_option("--b", ea.b, "Second image")->required();

  GradArgs ga;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  grad->add_option("--seed", ga.seed, "Root seed");
  grad->add_option("--splats", ga.splats, "Maximum splats per scene");
  grad->add_option("--scenes", ga.scenes, "Random scenes");

  std::string ckpt_path;
  auto* inspect = app.add_subcommand("inspect-ckpt", "Print every shape and version field of a checkpoint");
  inspect->add_option("checkpoint", ckpt_path, "Checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    print_error(err, to_string(ErrorKind::usage), e.what());
    return 2;
  }

  try {
    if (*synth) return cmd_synth(sa, out);
    if (*train) return cmd_train(ta, out);
    if (*rend) return cmd_render(ra, out);
    if (*eval) return cmd_eval(ea, out);
    if (*grad) return cmd_gradcheck(ga, out);
    if (*inspect) return cmd_inspect(ckpt_path, out);
  } catch (const Error& e) {
    print_error(err, to_string(e.kind()), e.what());
    return e.kind() == ErrorKind::usage ? 2 : 1;
  } catch (const std::exception& e) {
    print_error(err, "internal", e.what());
    return 1;
  }
  return 2;
}

}  // namespace degs
