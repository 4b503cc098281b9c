#include "thermotwin/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace twin {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax;
  const double dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double s = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  s = std::clamp(s, 0.0, 1.0);
  const double ex = ax + s * dx - px;
  const double ey = ay + s * dy - py;
  return std::sqrt(ex * ex + ey * ey);
}

std::string run_label(Phase phase, double volts) {
  char buf[64];
  if (volts == std::round(volts)) {
    std::snprintf(buf, sizeof buf, "%s_%03ldV", to_string(phase).c_str(), std::lround(volts));
  } else {
    std::snprintf(buf, sizeof buf, "%s_%gV", to_string(phase).c_str(), volts);
  }
  return buf;
}

}  // namespace

void SimulatorConfig::validate() const {
  require(width >= 1 && height >= 1, Errc::BadConfig, "simulator grid must be at least 1x1");
  require(alpha >= 0.0 && h_loss >= 0.0, Errc::BadConfig, "alpha and h_loss must be >= 0");
  require(resistance > 0.0 && heat_capacity > 0.0, Errc::BadConfig,
          "resistance and heat capacity must be positive");
  require(noise_sigma >= 0.0 && dt > 0.0, Errc::BadConfig, "noise_sigma >= 0 and dt > 0 required");
  require(coil_turns >= 1 && coil_spread > 0.0 && coil_floor >= 0.0 && coil_floor <= 1.0,
          Errc::BadConfig, "invalid coil layout");
  require(settle_tol > 0.0 && cool_tol > 0.0 && min_frames >= 2 && max_frames >= min_frames,
          Errc::BadConfig, "invalid sweep stopping rule");
  for (double v : voltages) require(v >= 0.0, Errc::BadConfig, "sweep voltages must be >= 0");
}

std::string to_string(AnomalyKind k) { return k == AnomalyKind::Splash ? "splash" : "object"; }

AnomalyKind anomaly_kind_from_string(const std::string& s) {
  if (s == "splash") return AnomalyKind::Splash;
  if (s == "object") return AnomalyKind::Object;
  throw Error(Errc::BadConfig, "unknown anomaly kind '" + s + "'");
}

std::vector<Index> disc_cells(std::uint32_t width, std::uint32_t height, double cx, double cy,
                              double radius) {
  require(radius > 0.0 && cx - radius >= 0.0 && cy - radius >= 0.0 &&
              cx + radius <= static_cast<double>(width) - 1.0 &&
              cy + radius <= static_cast<double>(height) - 1.0,
          Errc::RegionOutOfBounds, "anomaly disc leaves the plate");
  std::vector<Index> cells;
  const auto r0 = static_cast<long>(std::ceil(cy - radius));
  const auto r1 = static_cast<long>(std::floor(cy + radius));
  const auto c0 = static_cast<long>(std::ceil(cx - radius));
  const auto c1 = static_cast<long>(std::floor(cx + radius));
  for (long i = r0; i <= r1; ++i) {
    for (long j = c0; j <= c1; ++j) {
      const double dx = static_cast<double>(j) - cx;
      const double dy = static_cast<double>(i) - cy;
      if (dx * dx + dy * dy <= radius * radius) cells.push_back(i * Index{width} + j);
    }
  }
  require(!cells.empty(), Errc::RegionOutOfBounds, "anomaly disc covers no cells");
  return cells;
}

Plate::Plate(SimulatorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const Index H = cfg_.height;
  const Index W = cfg_.width;
  T_ = Field::Constant(H, W, cfg_.t_env);
  lap_ = Field::Zero(H, W);

  // Serpentine trace: horizontal runs joined at alternating ends.
  const double x0 = cfg_.coil_margin * static_cast<double>(W - 1);
  const double x1 = static_cast<double>(W - 1) - x0;
  const double y0 = cfg_.coil_margin * static_cast<double>(H - 1);
  const double y1 = static_cast<double>(H - 1) - y0;
  struct Seg { double ax, ay, bx, by; };
  std::vector<Seg> segs;
  const int turns = cfg_.coil_turns;
  auto row_y = [&](int k) {
    return turns == 1 ? 0.5 * (y0 + y1) : y0 + (y1 - y0) * k / (turns - 1);
  };
  for (int k = 0; k < turns; ++k) {
    segs.push_back({x0, row_y(k), x1, row_y(k)});
    if (k + 1 < turns) {
      const double x = k % 2 == 0 ? x1 : x0;
      segs.push_back({x, row_y(k), x, row_y(k + 1)});
    }
  }
  coil_.resize(H, W);
  const double s2 = 2.0 * cfg_.coil_spread * cfg_.coil_spread;
  for (Index i = 0; i < H; ++i) {
    for (Index j = 0; j < W; ++j) {
      double d = std::numeric_limits<double>::infinity();
      for (const Seg& s : segs) {
        d = std::min(d, segment_distance(static_cast<double>(j), static_cast<double>(i), s.ax, s.ay,
                                         s.bx, s.by));
      }
      coil_(i, j) = cfg_.coil_floor + (1.0 - cfg_.coil_floor) * std::exp(-d * d / s2);
    }
  }
  // Total power V^2/R spread over the plate by the coil shape.
  const double n = static_cast<double>(H * W);
  source_unit_ = coil_ * (n / coil_.sum()) / (cfg_.resistance * cfg_.heat_capacity);

  base_emissivity_ = Field::Ones(H, W);
  if (cfg_.emissivity_strips) {
    const Index band = std::max<Index>(1, H / 40);
    for (int k = 1; k <= 3; ++k) {
      const Index r = H * k / 4 - band / 2;
      base_emissivity_.middleRows(std::clamp<Index>(r, 0, H - band), band) = cfg_.strip_emissivity;
    }
  }
  rebuild_objects();
}

void Plate::set_voltage(double volts) {
  require(volts >= 0.0 && std::isfinite(volts), Errc::BadConfig, "voltage must be >= 0");
  voltage_ = volts;
}

void Plate::fill(double temperature) { T_.setConstant(temperature); }

void Plate::set_field(const Field& f) {
  require(f.rows() == T_.rows() && f.cols() == T_.cols(), Errc::DimensionMismatch,
          "field shape does not match the plate");
  require(f.allFinite(), Errc::NonFiniteInput, "field must be finite");
  T_ = f;
}

void Plate::rebuild_objects() {
  loss_ = Field::Constant(cfg_.height, cfg_.width, cfg_.h_loss);
  emissivity_ = base_emissivity_;
  for (const ActiveAnomaly& a : active_) {
    if (a.spec.kind != AnomalyKind::Object) continue;
    for (Index c : a.cells) {
      loss_.data()[c] *= a.spec.magnitude;
      emissivity_.data()[c] *= a.spec.emissivity;
    }
  }
}

void Plate::step(double dt) {
  require(dt > 0.0, Errc::BadConfig, "step needs dt > 0");
  // Splashes act once, at the first step after injection.
  const auto splash_end = std::stable_partition(
      active_.begin(), active_.end(),
      [](const ActiveAnomaly& a) { return a.spec.kind != AnomalyKind::Splash; });
  for (auto it = splash_end; it != active_.end(); ++it) {
    for (Index c : it->cells) T_.data()[c] -= it->spec.magnitude;
  }
  active_.erase(splash_end, active_.end());

  // Explicit stability: alpha * h <= 1/4 and loss * h <= 1.
  const double max_rate = std::max(4.0 * cfg_.alpha, loss_.maxCoeff());
  const auto n_sub = std::max<long>(1, static_cast<long>(std::ceil(dt * max_rate - 1e-12)));
  const double h = dt / static_cast<double>(n_sub);
  const Index H = T_.rows();
  const Index W = T_.cols();
  const double q = voltage_ * voltage_;
  prev_ = T_;
  for (long s = 0; s < n_sub; ++s) {
    lap_.setZero();
    if (H > 1) {
      lap_.topRows(H - 1) += T_.bottomRows(H - 1) - T_.topRows(H - 1);
      lap_.bottomRows(H - 1) -= T_.bottomRows(H - 1) - T_.topRows(H - 1);
    }
    if (W > 1) {
      lap_.leftCols(W - 1) += T_.rightCols(W - 1) - T_.leftCols(W - 1);
      lap_.rightCols(W - 1) -= T_.rightCols(W - 1) - T_.leftCols(W - 1);
    }
    T_ += h * (cfg_.alpha * lap_ + q * source_unit_ - loss_ * (T_ - cfg_.t_env));
  }
  last_change_ = (T_ - prev_).abs().maxCoeff();
  t_ += dt;
}

void Plate::settle(double tol, Index max_steps) {
  for (Index k = 0; k < max_steps; ++k) {
    step(cfg_.dt);
    if (last_change_ < tol) return;
  }
}

void validate_anomaly(const SimulatorConfig& cfg, const AnomalySpec& spec) {
  require(std::isfinite(spec.magnitude), Errc::BadConfig, "anomaly magnitude must be finite");
  if (spec.kind == AnomalyKind::Object) {
    require(spec.magnitude >= 0.0, Errc::BadConfig, "object loss multiplier must be >= 0");
    require(spec.emissivity > 0.0 && std::isfinite(spec.emissivity), Errc::BadConfig,
            "object emissivity factor must be positive");
  }
  disc_cells(cfg.width, cfg.height, spec.cx, spec.cy, spec.radius);
}

int Plate::inject(const AnomalySpec& spec) {
  validate_anomaly(cfg_, spec);
  ActiveAnomaly a;
  a.id = next_id_++;
  a.spec = spec;
  a.started_at = t_;
  a.cells = disc_cells(cfg_.width, cfg_.height, spec.cx, spec.cy, spec.radius);
  active_.push_back(std::move(a));
  if (spec.kind == AnomalyKind::Object) rebuild_objects();
  return active_.back().id;
}

bool Plate::remove(int id) {
  const auto it = std::find_if(active_.begin(), active_.end(),
                               [id](const ActiveAnomaly& a) { return a.id == id; });
  if (it == active_.end()) return false;
  active_.erase(it);
  rebuild_objects();
  return true;
}

Frame Plate::render_clean() const {
  PixelVector v(T_.size());
  const Eigen::Map<const Eigen::ArrayXd> t(T_.data(), T_.size());
  const Eigen::Map<const Eigen::ArrayXd> e(emissivity_.data(), emissivity_.size());
  v = (cfg_.t_env + e * (t - cfg_.t_env)).cast<float>().matrix();
  return Frame(cfg_.width, cfg_.height, t_, std::move(v));
}

Frame Plate::render(std::mt19937_64& rng) const {
  Frame f = render_clean();
  if (cfg_.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg_.noise_sigma);
    const Eigen::Map<const Eigen::ArrayXd> t(T_.data(), T_.size());
    const Eigen::Map<const Eigen::ArrayXd> e(emissivity_.data(), emissivity_.size());
    for (Index i = 0; i < f.size(); ++i) {
      f.values(i) = static_cast<float>(cfg_.t_env + e(i) * (t(i) - cfg_.t_env) + noise(rng));
    }
  }
  return f;
}

Frame Plate::render(std::uint64_t noise_seed) const {
  std::mt19937_64 rng(noise_seed);
  return render(rng);
}

std::uint64_t frame_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t k) {
  return splitmix(splitmix(splitmix(base) ^ stream) ^ k);
}

namespace {

// Heating ends within cool_tol of `target` (the run's steady state), cooling
// within cool_tol of ambient; both also need the per-frame change below
// settle_tol.
Dataset record_run(Plate& plate, const SimulatorConfig& cfg, Phase phase, double volts,
                   const Plate::Field& target, std::uint64_t stream) {
  std::mt19937_64 rng(frame_seed(cfg.seed, stream, 0));
  std::vector<Frame> frames;
  plate.set_time(0.0);
  frames.push_back(plate.render(rng));
  while (static_cast<Index>(frames.size()) < cfg.max_frames) {
    plate.step(cfg.dt);
    frames.push_back(plate.render(rng));
    if (static_cast<Index>(frames.size()) < cfg.min_frames) continue;
    if (plate.last_change() < cfg.settle_tol &&
        (plate.field() - target).abs().maxCoeff() < cfg.cool_tol) {
      break;
    }
  }
  Dataset ds;
  ds.snapshots = stack(frames);
  ds.meta.voltage = volts;
  ds.meta.phase = phase;
  ds.meta.label = run_label(phase, volts);
  return ds;
}

}  // namespace

std::vector<Dataset> generate_training_sweep(const SimulatorConfig& cfg) {
  cfg.validate();
  std::vector<Dataset> out;
  std::uint64_t stream = 0;
  for (double v : cfg.voltages) {
    Plate steady(cfg);
    steady.set_voltage(v);
    steady.settle(1e-7);
    const Plate::Field ambient = Plate::Field::Constant(cfg.height, cfg.width, cfg.t_env);

    Plate plate(cfg);
    plate.fill(cfg.t_env);
    plate.set_voltage(v);
    out.push_back(record_run(plate, cfg, Phase::Heating, v, steady.field(), stream++));
    plate.set_voltage(0.0);
    out.push_back(record_run(plate, cfg, Phase::Cooling, v, ambient, stream++));
  }
  return out;
}

std::vector<std::filesystem::path> write_sweep(const std::filesystem::path& dir,
                                               const std::vector<Dataset>& sweep) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (const Dataset& ds : sweep) {
    const std::string name = ds.meta.label.empty() ? run_label(ds.meta.phase, ds.meta.voltage)
                                                   : ds.meta.label;
    paths.push_back(dir / (name + ".therm"));
    save_dataset(paths.back(), ds);
  }
  return paths;
}

std::vector<Dataset> read_sweep(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), Errc::Io, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".therm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Dataset> out;
  for (const auto& f : files) out.push_back(load_dataset(f));
  return out;
}

}  // namespace twin
