// twin: command line front end for training, running, replaying, cleaning,
// forecasting and benchmarking the heated-plate twin.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>

#include "thermotwin/config.hpp"
#include "thermotwin/pipeline.hpp"
#include "thermotwin/rpca.hpp"
#include "thermotwin/runs.hpp"
#include "thermotwin/service.hpp"
#include "thermotwin/simulator.hpp"

namespace {

using namespace twin;
namespace fs = std::filesystem;

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

void install_signal_handlers() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
}

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
};

TwinConfig load_globals(const Globals& g) {
  TwinConfig cfg = g.config.empty() ? config_from_environment() : load_config(g.config);
  if (g.seed) cfg.simulator.seed = *g.seed;
  return cfg;
}

/// Writes to `path`, or stdout for "-".
void write_output(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text << std::flush;
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), Errc::DiskFull, "cannot write " + path);
  out << text;
  require(static_cast<bool>(out), Errc::DiskFull, "short write to " + path);
}

// -- subcommands ------------------------------------------------------------------

struct SweepArgs {
  std::string out = "data";
  std::optional<std::uint32_t> width;
  std::optional<std::uint32_t> height;
};

int cmd_sweep(const Globals& g, const SweepArgs& a) {
  TwinConfig cfg = load_globals(g);
  if (a.width) cfg.simulator.width = *a.width;
  if (a.height) cfg.simulator.height = *a.height;
  const auto sweep = generate_training_sweep(cfg.simulator);
  fs::create_directories(a.out);
  write_sweep(a.out, sweep);
  Index frames = 0;
  for (const Dataset& ds : sweep) frames += ds.snapshots.snapshots();
  std::cout << "wrote " << sweep.size() << " runs (" << frames << " frames, "
            << cfg.simulator.width << "x" << cfg.simulator.height << ") to " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string data = "data";
  Index rank = 3;
  Index sensors = 3;
  std::string out = "model.twin";
  bool preclean = false;
  Index rpca_window = 50;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  TwinConfig cfg = load_globals(g);
  cfg.pod.rank = a.rank;
  cfg.pod.sensors = a.sensors;
  cfg.rpca.preclean = a.preclean;
  cfg.rpca.window = a.rpca_window;
  cfg.validate();
  require(fs::is_directory(a.data), Errc::NoData, "no training directory " + a.data);
  const auto datasets = read_sweep(a.data);
  const TwinModel model = train(datasets, cfg);
  save_model(a.out, model);
  std::cout << "trained on " << model.info["datasets"] << " runs, "
            << model.info["snapshots"] << " frames; rank " << model.basis.rank()
            << " energy ratio " << model.info["energy_ratio"].get<double>() << "; sensors "
            << model.info["sensor_pixels"].dump() << " -> " << a.out << "\n";
  return 0;
}

struct RunArgs {
  std::string model;
  std::string serve;
  std::string runs;
  Index frames = 0;
  std::optional<double> period;
  std::optional<double> speed;
  std::optional<double> voltage;
  std::optional<std::uint32_t> width;
  std::optional<std::uint32_t> height;
  bool headless = false;
};

int run_headless(const TwinConfig& cfg, std::shared_ptr<const TwinModel> model,
                 const RunArgs& a) {
  require(model->width == cfg.simulator.width && model->height == cfg.simulator.height,
          Errc::DimensionMismatch, "model grid does not match the simulator grid");
  auto tuned = std::make_shared<TwinModel>(*model);
  tuned->detector = cfg.detector;
  Plate plate(cfg.simulator);
  if (a.voltage) plate.set_voltage(*a.voltage);
  Runtime rt(tuned, cfg.prediction);
  RunRecorder rec(cfg.service.runs_dir, cfg, *tuned);
  if (a.voltage) rec.record_control({{"type", "voltage"}, {"volts", *a.voltage}});
  if (!rec.persisting()) std::cerr << "warning: run not persisted: " << *rec.error() << "\n";
  FrameVerdict v;
  for (Index k = 0; (a.frames == 0 || k < a.frames) && !g_interrupted; ++k) {
    const Frame f = plate.render(frame_seed(cfg.simulator.seed, 0, static_cast<std::uint64_t>(k)));
    rt.process_frame(f, v);
    rec.record(f, v);
    std::cout << to_json(v).dump() << "\n";
    plate.step(cfg.simulator.dt);
  }
  rec.finish();
  std::cerr << "run " << rec.id() << ": " << rec.frames() << " frames\n";
  return 0;
}

int cmd_run(const Globals& g, const RunArgs& a) {
  TwinConfig cfg = load_globals(g);
  if (!a.serve.empty()) cfg.service.addr = a.serve;
  if (!a.runs.empty()) cfg.service.runs_dir = a.runs;
  if (!a.model.empty()) cfg.service.model = a.model;
  if (a.period) cfg.service.frame_period = *a.period;
  if (a.speed) cfg.service.speed = *a.speed;
  cfg.service.max_frames = a.frames;
  if (a.width) cfg.simulator.width = *a.width;
  if (a.height) cfg.simulator.height = *a.height;
  cfg.validate();
  auto model = std::make_shared<const TwinModel>(load_model(cfg.service.model));
  install_signal_handlers();
  if (a.headless) return run_headless(cfg, model, a);

  TwinService svc(cfg, model);
  if (a.voltage) {
    const auto r = svc.set_voltage({{"volts", *a.voltage}});
    require(r.status == 200, Errc::BadConfig, r.body.value("message", "invalid voltage"));
  }
  svc.start();
  std::cerr << "serving on " << cfg.service.host_port().first << ":" << svc.port() << ", run "
            << svc.run_id() << "\n";
  while (!g_interrupted && !svc.wait_for(std::chrono::milliseconds(100))) {
  }
  svc.stop();
  std::cerr << "run " << svc.run_id() << ": " << svc.frames() << " frames\n";
  return 0;
}

struct ReplayArgs {
  std::string run;
  std::string serve;
  std::string runs;
  std::optional<double> speed;
};

int cmd_replay(const Globals& g, const ReplayArgs& a) {
  if (a.serve.empty()) {
    const auto recorded = read_verdict_lines(a.run);
    const auto replayed = replay_run(a.run);
    for (std::size_t k = 0; k < std::max(recorded.size(), replayed.size()); ++k) {
      if (k >= recorded.size() || k >= replayed.size() || recorded[k] != replayed[k]) {
        std::cerr << "verdict " << k << " differs from the recording\n";
        return 2;
      }
    }
    std::cout << replayed.size() << " verdicts identical to the recording\n";
    return 0;
  }
  TwinConfig cfg = load_globals(g);
  cfg.service.addr = a.serve;
  if (!a.runs.empty()) cfg.service.runs_dir = a.runs;
  if (a.speed) cfg.service.speed = *a.speed;
  install_signal_handlers();
  TwinService svc(cfg, ReplaySource{a.run});
  svc.start();
  std::cerr << "replaying " << a.run << " on port " << svc.port() << "\n";
  while (!g_interrupted && !svc.wait_for(std::chrono::milliseconds(100))) {
  }
  svc.stop();
  return 0;
}

struct RpcaArgs {
  std::string in;
  Index window = 50;
  double lambda = 0.001;
  double mu = 1e-5;
  bool automatic = false;
  double tol = 1e-7;
  int max_iter = 500;
  std::string out_l;
  std::string out_s;
};

int cmd_rpca(const Globals&, const RpcaArgs& a) {
  require(!a.out_l.empty() || !a.out_s.empty(), Errc::BadConfig,
          "give --out-l and/or --out-s");
  RpcaConfig cfg;
  cfg.window = a.window;
  cfg.tol = a.tol;
  cfg.max_iter = a.max_iter;
  if (a.automatic) {
    cfg.profile = "auto";
  } else {
    cfg.lambda = a.lambda;
    cfg.mu = a.mu;
  }
  Dataset ds = load_dataset(a.in);
  const RpcaSplit split = rpca_windows(ds.snapshots.data, cfg);
  auto save = [&](const std::string& path, PixelMatrix data) {
    if (path.empty()) return;
    Dataset out = ds;
    out.snapshots.data = std::move(data);
    out.meta.label = fs::path(path).stem().string();
    save_dataset(path, out);
  };
  save(a.out_l, split.L);
  save(a.out_s, split.S);
  std::cout << split.windows << " windows, " << split.converged << " converged, max "
            << split.max_iterations << " iterations\n";
  return 0;
}

struct PredictArgs {
  std::string model = "model.twin";
  std::string run;
  std::string in;
  Index w = 100;
  Index l = 100;
  Index origin = -1;
  std::string csv = "-";
};

int cmd_predict(const Globals&, const PredictArgs& a) {
  require(a.run.empty() != a.in.empty(), Errc::BadConfig, "give exactly one of --run or --in");
  auto model = std::make_shared<const TwinModel>(load_model(a.model));
  const fs::path frames_path = a.run.empty() ? fs::path(a.in) : fs::path(a.run) / "frames.therm";
  const Dataset ds = load_dataset(frames_path);
  const auto frames = unstack(ds.snapshots, ds.snapshots.width, ds.snapshots.height);
  const Index origin =
      a.origin >= 0 ? a.origin : static_cast<Index>(frames.size()) - 1 - a.l;
  const auto rows = evaluate_forecast(model, frames, origin, a.w, default_horizons(a.l));
  write_output(a.csv, horizon_csv(rows));
  return 0;
}

struct BenchArgs {
  std::string target = "rpca";
  Index n = 78000;
  std::vector<Index> windows = {10, 50, 100, 200};
  int reps = 1;
  double lambda = 0.001;
  double mu = 1e-5;
  bool automatic = false;
  std::string csv = "-";
};

int cmd_bench(const Globals& g, const BenchArgs& a) {
  require(a.target == "rpca", Errc::BadConfig, "only 'rpca' can be benchmarked");
  RpcaParams p = a.automatic ? RpcaParams::automatic() : RpcaParams{a.lambda, a.mu, 1e-7, 500};
  const auto rows = rpca_bench(a.n, a.windows, a.reps, p, g.seed.value_or(1));
  write_output(a.csv, bench_csv(rows));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Predictive digital twin of a heated plate observed by a thermal camera."};
  app.name("twin");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  Globals g;
  app.add_option("--config", g.config, "JSON config file (default: $TWIN_CONFIG)");
  app.add_option("--seed", g.seed, "Seed for simulator noise and synthetic data");

  std::function<int()> action;

  SweepArgs sweep;
  auto* s = app.add_subcommand("sweep", "Generate the heating/cooling training sweep");
  s->add_option("--out", sweep.out, "Output directory")->capture_default_str();
  s->add_option("--width", sweep.width, "Plate width in pixels (default from config)");
  s->add_option("--height", sweep.height, "Plate height in pixels (default from config)");
  s->callback([&] { action = [&] { return cmd_sweep(g, sweep); }; });

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model from a sweep directory");
  t->add_option("--data", tr.data, "Directory of .therm runs")->capture_default_str();
  t->add_option("--rank", tr.rank, "POD rank r")->capture_default_str();
  t->add_option("--sensors", tr.sensors, "Sampled pixels s")->capture_default_str();
  t->add_option("--out", tr.out, "Model archive to write")->capture_default_str();
  t->add_flag("--rpca-preclean", tr.preclean, "Clean each run with windowed RPCA first");
  t->add_option("--rpca-window", tr.rpca_window, "RPCA window for --rpca-preclean")
      ->capture_default_str();
  t->callback([&] { action = [&] { return cmd_train(g, tr); }; });

  RunArgs run;
  auto* r = app.add_subcommand("run", "Run the live simulator through the twin");
  r->add_option("--model", run.model, "Model archive (default from config: model.twin)");
  r->add_option("--serve", run.serve, "HTTP address host:port (default 127.0.0.1:8080)");
  r->add_option("--runs", run.runs, "Directory for persisted runs (default runs)");
  r->add_option("--frames", run.frames, "Stop after this many frames, 0 for no limit")
      ->capture_default_str();
  r->add_option("--period", run.period, "Wall seconds per frame (default 3.5, 0 = flat out)");
  r->add_option("--speed", run.speed, "Divides the frame period (default 1)");
  r->add_option("--voltage", run.voltage, "Coil voltage at start");
  r->add_option("--width", run.width, "Plate width in pixels (default from config)");
  r->add_option("--height", run.height, "Plate height in pixels (default from config)");
  r->add_flag("--headless", run.headless, "No HTTP; print verdicts as JSON lines");
  r->callback([&] { action = [&] { return cmd_run(g, run); }; });

  ReplayArgs rep;
  auto* rp = app.add_subcommand("replay", "Check or serve a persisted run");
  rp->add_option("--run", rep.run, "Run directory")->required();
  rp->add_option("--serve", rep.serve, "Serve the replay on host:port instead of checking it");
  rp->add_option("--runs", rep.runs, "Directory for the replay's own run record");
  rp->add_option("--speed", rep.speed, "Replay speed factor (default 1)");
  rp->callback([&] { action = [&] { return cmd_replay(g, rep); }; });

  RpcaArgs rc;
  auto* rpca_cmd = app.add_subcommand("rpca", "Split a THERM1 file into low-rank and sparse parts");
  rpca_cmd->add_option("--in", rc.in, "Input .therm file")->required();
  rpca_cmd->add_option("--window", rc.window, "Frames per RPCA window")->capture_default_str();
  rpca_cmd->add_option("--lambda", rc.lambda, "Sparsity weight")->capture_default_str();
  rpca_cmd->add_option("--mu", rc.mu, "Augmented Lagrangian penalty")->capture_default_str();
  rpca_cmd->add_flag("--auto", rc.automatic, "Data-driven lambda and mu instead");
  rpca_cmd->add_option("--tol", rc.tol, "Stopping tolerance")->capture_default_str();
  rpca_cmd->add_option("--max-iter", rc.max_iter, "Iteration cap")->capture_default_str();
  rpca_cmd->add_option("--out-l", rc.out_l, "Low-rank part output .therm");
  rpca_cmd->add_option("--out-s", rc.out_s, "Sparse part output .therm");
  rpca_cmd->callback([&] { action = [&] { return cmd_rpca(g, rc); }; });

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Score forecasts over horizons up to l");
  p->add_option("--model", pr.model, "Model archive")->capture_default_str();
  p->add_option("--run", pr.run, "Run directory to forecast");
  p->add_option("--in", pr.in, "Or a .therm file to forecast");
  p->add_option("--w", pr.w, "Fit window (frames)")->capture_default_str();
  p->add_option("--l", pr.l, "Longest horizon (frames)")->capture_default_str();
  p->add_option("--origin", pr.origin, "Forecast origin frame (default: latest that leaves l frames)");
  p->add_option("--csv", pr.csv, "CSV output, - for stdout")->capture_default_str();
  p->callback([&] { action = [&] { return cmd_predict(g, pr); }; });

  BenchArgs b;
  auto* bc = app.add_subcommand("bench", "Time RPCA on synthetic windows");
  bc->add_option("target", b.target, "What to benchmark (rpca)")->capture_default_str();
  bc->add_option("--n", b.n, "Pixels per frame")->capture_default_str();
  bc->add_option("--windows", b.windows, "Window sizes")->delimiter(',')->capture_default_str();
  bc->add_option("--reps", b.reps, "Repetitions per window")->capture_default_str();
  bc->add_option("--lambda", b.lambda, "Sparsity weight")->capture_default_str();
  bc->add_option("--mu", b.mu, "Augmented Lagrangian penalty")->capture_default_str();
  bc->add_flag("--auto", b.automatic, "Data-driven lambda and mu instead");
  bc->add_option("--csv", b.csv, "CSV output, - for stdout")->capture_default_str();
  bc->callback([&] { action = [&] { return cmd_bench(g, b); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    return action ? action() : 1;
  } catch (const Error& e) {
    std::cerr << "twin: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "twin: " << e.what() << "\n";
    return 2;
  }
}
