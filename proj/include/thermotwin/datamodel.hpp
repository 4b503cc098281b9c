#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "thermotwin/error.hpp"

namespace twin {

using Index = Eigen::Index;

/// Pixel storage is single precision; every decomposition promotes to double.
using PixelMatrix = Eigen::MatrixXf;
using PixelVector = Eigen::VectorXf;

/// One temperature image. Pixels are row-major: index = row * width + col.
struct Frame {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  double t = 0.0;
  PixelVector values;

  Frame() = default;
  Frame(std::uint32_t w, std::uint32_t h, double time, PixelVector v);

  Index size() const noexcept { return values.size(); }
};

/// Column-stacked frames: column j is frame j, timestamps[j] its time.
struct SnapshotMatrix {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  PixelMatrix data;
  std::vector<double> timestamps;

  Index pixels() const noexcept { return data.rows(); }
  Index snapshots() const noexcept { return data.cols(); }

  /// Mean sample spacing, 0 when fewer than two columns.
  double dt() const noexcept;
};

enum class Phase { Heating, Cooling };

std::string to_string(Phase p);
Phase phase_from_string(const std::string& s);

struct RunDescriptor {
  double voltage = 0.0;
  Phase phase = Phase::Heating;
  std::string label;
};

struct Dataset {
  SnapshotMatrix snapshots;
  RunDescriptor meta;
};

// -- stacking -----------------------------------------------------------------

SnapshotMatrix stack(const std::vector<Frame>& frames);
std::vector<Frame> unstack(const SnapshotMatrix& matrix, std::uint32_t width,
                           std::uint32_t height);

/// Per-pixel piecewise-linear resampling onto t0, t0+dt, ... <= t_last.
SnapshotMatrix regularize_time(const std::vector<Frame>& frames, double dt);
SnapshotMatrix regularize_time(const SnapshotMatrix& m, double dt);

/// Horizontal concatenation of dataset snapshot matrices.
SnapshotMatrix concatenate(const std::vector<Dataset>& datasets);

// -- THERM1 -------------------------------------------------------------------

/// Binary layout (little-endian):
///   "THERM1\0\0" | u32 width | u32 height | u32 frame_count | u32 flags=0 |
///   frame_count x f64 timestamps | frame_count x width*height f32 pixels.
/// The run descriptor, when present, travels in a sidecar `<file>.json`.
Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const Dataset& ds);

/// Same as save/load but on raw byte buffers.
std::vector<std::uint8_t> encode_therm1(const SnapshotMatrix& m);
SnapshotMatrix decode_therm1(const std::uint8_t* bytes, std::size_t size);

/// Writes a THERM1 file frame by frame. Pixels stream to `<path>.part` and
/// close() assembles the final file, so an interrupted run leaves no
/// half-written THERM1. Write failures throw DiskFull.
class Therm1Writer {
 public:
  Therm1Writer(std::filesystem::path path, std::uint32_t width, std::uint32_t height);
  ~Therm1Writer();
  Therm1Writer(const Therm1Writer&) = delete;
  Therm1Writer& operator=(const Therm1Writer&) = delete;

  void append(const Frame& f);
  void close();
  Index frames() const noexcept { return static_cast<Index>(timestamps_.size()); }
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::filesystem::path part_;
  std::uint32_t width_;
  std::uint32_t height_;
  std::vector<double> timestamps_;
  std::FILE* out_ = nullptr;
};

/// Random access to the frames of a THERM1 file without loading it whole.
class Therm1Reader {
 public:
  explicit Therm1Reader(const std::filesystem::path& path);
  ~Therm1Reader();
  Therm1Reader(const Therm1Reader&) = delete;
  Therm1Reader& operator=(const Therm1Reader&) = delete;

  std::uint32_t width() const noexcept { return width_; }
  std::uint32_t height() const noexcept { return height_; }
  Index frames() const noexcept { return static_cast<Index>(timestamps_.size()); }
  const std::vector<double>& timestamps() const noexcept { return timestamps_; }
  /// Fills `out`, reusing its buffer.
  void read(Index k, Frame& out);
  Frame read(Index k);

 private:
  std::FILE* in_ = nullptr;
  std::uint32_t width_ = 0;
  std::uint32_t height_ = 0;
  std::vector<double> timestamps_;
  long long pixel_offset_ = 0;
};

/// One row per frame: t, then pixels.
void export_csv(const std::filesystem::path& path, const SnapshotMatrix& m);

}  // namespace twin
