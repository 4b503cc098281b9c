#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "thermotwin/datamodel.hpp"

namespace twin {

/// Explicit finite-difference plate with a serpentine heating coil, Newton
/// losses to ambient and zero-flux edges. Grid spacing is one cell.
struct SimulatorConfig {
  std::uint32_t width = 260;
  std::uint32_t height = 300;
  double alpha = 0.05;          // diffusivity, cells^2/s
  double h_loss = 1.0 / 300.0;  // 1/s
  double t_env = 20.0;
  double resistance = 10.0;       // ohms
  double heat_capacity = 7200.0;  // whole plate, J/degC
  double noise_sigma = 0.05;  // degC, on the order of an uncooled microbolometer
  double dt = 3.5;  // frame interval, s

  int coil_turns = 6;
  double coil_margin = 0.12;  // fraction of each side left unheated
  double coil_spread = 10.0;  // cells, Gaussian half-width of the coil trace
  double coil_floor = 0.35;   // share of the power spread evenly by the plate

  /// Static emissivity strips (adhesive tape on the plate), off by default.
  bool emissivity_strips = false;
  double strip_emissivity = 0.95;

  // Training sweep protocol.
  std::vector<double> voltages = {10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120};
  double settle_tol = 0.01;  // stop when noise-free max |dT| per frame drops below
  double cool_tol = 0.5;     // cooling also ends within this of ambient
  Index min_frames = 3;
  Index max_frames = 3000;
  std::uint64_t seed = 1;

  Index pixels() const noexcept { return Index{width} * Index{height}; }
  void validate() const;
};

enum class AnomalyKind { Splash, Object };

std::string to_string(AnomalyKind k);
AnomalyKind anomaly_kind_from_string(const std::string& s);

/// Disc centred at (cx, cy) in cell coordinates. For a splash `magnitude` is
/// the instantaneous drop in degC; for an object it multiplies the local loss
/// coefficient while the object stays in place, and `emissivity` scales how
/// the camera sees the footprint (a bare metal part reads colder than paint).
struct AnomalySpec {
  AnomalyKind kind = AnomalyKind::Splash;
  double cx = 0.0;
  double cy = 0.0;
  double radius = 3.7;  // 45 cells
  double magnitude = 3.0;
  double emissivity = 1.0;
};

struct ActiveAnomaly {
  int id = 0;
  AnomalySpec spec;
  double started_at = 0.0;
  std::vector<Index> cells;  // row-major pixel indices inside the disc
};

/// Pixel indices inside a disc, ascending. Throws RegionOutOfBounds when the
/// disc leaves the grid or is empty.
std::vector<Index> disc_cells(std::uint32_t width, std::uint32_t height, double cx, double cy,
                              double radius);

/// The checks inject() applies: finite magnitude, object multiplier >= 0,
/// positive emissivity factor, disc on the grid.
void validate_anomaly(const SimulatorConfig& cfg, const AnomalySpec& spec);

class Plate {
 public:
  using Field = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  explicit Plate(SimulatorConfig cfg = {});

  const SimulatorConfig& config() const noexcept { return cfg_; }
  double time() const noexcept { return t_; }
  double voltage() const noexcept { return voltage_; }
  void set_voltage(double volts);
  void set_time(double t) noexcept { t_ = t; }

  /// Temperatures, height x width, row-major like Frame::values.
  const Field& field() const noexcept { return T_; }
  void fill(double temperature);
  void set_field(const Field& f);
  const Field& coil_mask() const noexcept { return coil_; }

  /// Advances by dt, sub-stepping so alpha * dt_sub stays at or below 1/4.
  void step(double dt);
  /// Noise-free max |dT| over the last call to step().
  double last_change() const noexcept { return last_change_; }
  /// Runs with fixed voltage until the per-frame change drops below `tol`.
  void settle(double tol = 1e-6, Index max_steps = 100000);

  int inject(const AnomalySpec& spec);
  bool remove(int id);
  const std::vector<ActiveAnomaly>& anomalies() const noexcept { return active_; }

  /// Observed frame: field (with emissivity strips if enabled) plus Gaussian
  /// noise drawn from `rng`.
  Frame render(std::mt19937_64& rng) const;
  Frame render(std::uint64_t noise_seed) const;
  Frame render_clean() const;

 private:
  void rebuild_objects();

  SimulatorConfig cfg_;
  Field T_;
  Field coil_;
  Field source_unit_;  // degC/s per V^2
  Field loss_;         // h_loss with object multipliers
  Field base_emissivity_;
  Field emissivity_;  // base with object footprints applied
  Field lap_;
  Field prev_;
  double t_ = 0.0;
  double voltage_ = 0.0;
  double last_change_ = 0.0;
  int next_id_ = 1;
  std::vector<ActiveAnomaly> active_;
};

/// One heating run per voltage from ambient to near equilibrium, then the
/// matching cooling run back to ambient: 2 * voltages.size() datasets.
std::vector<Dataset> generate_training_sweep(const SimulatorConfig& cfg);

/// Writes `heat_120V.therm` style files (plus descriptor sidecars) into `dir`.
std::vector<std::filesystem::path> write_sweep(const std::filesystem::path& dir,
                                               const std::vector<Dataset>& sweep);
std::vector<Dataset> read_sweep(const std::filesystem::path& dir);

/// Seed for frame `k` of stream `stream`, so noise does not depend on how the
/// stream is chunked.
std::uint64_t frame_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t k);

}  // namespace twin
