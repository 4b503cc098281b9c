#include "thermotwin/datamodel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numeric>

namespace twin {

static_assert(std::endian::native == std::endian::little,
              "THERM1 I/O assumes a little-endian host");

Frame::Frame(std::uint32_t w, std::uint32_t h, double time, PixelVector v)
    : width(w), height(h), t(time), values(std::move(v)) {
  require(w >= 1 && h >= 1, Errc::DimensionMismatch, "frame needs width, height >= 1");
  require(values.size() == static_cast<Index>(w) * h, Errc::DimensionMismatch,
          "frame values length != width*height");
  for (Index i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw Error(Errc::NonFinitePixel, "non-finite pixel", i);
  }
}

double SnapshotMatrix::dt() const noexcept {
  if (timestamps.size() < 2) return 0.0;
  return (timestamps.back() - timestamps.front()) / static_cast<double>(timestamps.size() - 1);
}

std::string to_string(Phase p) { return p == Phase::Heating ? "heating" : "cooling"; }

Phase phase_from_string(const std::string& s) {
  if (s == "heating") return Phase::Heating;
  if (s == "cooling") return Phase::Cooling;
  throw Error(Errc::BadConfig, "unknown phase '" + s + "'");
}

SnapshotMatrix stack(const std::vector<Frame>& frames) {
  require(!frames.empty(), Errc::NoData, "stack of zero frames");
  SnapshotMatrix m;
  m.width = frames.front().width;
  m.height = frames.front().height;
  const Index n = static_cast<Index>(m.width) * m.height;
  m.data.resize(n, static_cast<Index>(frames.size()));
  m.timestamps.reserve(frames.size());
  for (std::size_t j = 0; j < frames.size(); ++j) {
    const Frame& f = frames[j];
    require(f.width == m.width && f.height == m.height && f.values.size() == n,
            Errc::DimensionMismatch, "inconsistent frame dimensions in stack");
    m.data.col(static_cast<Index>(j)) = f.values;
    m.timestamps.push_back(f.t);
  }
  return m;
}

std::vector<Frame> unstack(const SnapshotMatrix& matrix, std::uint32_t width,
                           std::uint32_t height) {
  require(static_cast<Index>(width) * height == matrix.pixels(), Errc::DimensionMismatch,
          "unstack dimensions do not match pixel count");
  require(matrix.timestamps.size() == static_cast<std::size_t>(matrix.snapshots()),
          Errc::DimensionMismatch, "timestamp count != column count");
  std::vector<Frame> frames;
  frames.reserve(matrix.timestamps.size());
  for (Index j = 0; j < matrix.snapshots(); ++j) {
    frames.emplace_back(width, height, matrix.timestamps[static_cast<std::size_t>(j)],
                        PixelVector(matrix.data.col(j)));
  }
  return frames;
}

namespace {

SnapshotMatrix resample(const PixelMatrix& data, const std::vector<double>& ts,
                        std::uint32_t width, std::uint32_t height, double dt) {
  require(ts.size() >= 2, Errc::TooFewFrames, "regularize_time needs >= 2 frames");
  require(dt > 0.0 && std::isfinite(dt), Errc::BadConfig, "dt must be positive");
  for (std::size_t i = 1; i < ts.size(); ++i) {
    if (!(ts[i] > ts[i - 1])) {
      throw Error(Errc::NonMonotonicTimestamps, "timestamps not strictly increasing",
                  static_cast<long long>(i));
    }
  }
  const double t0 = ts.front();
  const double span = ts.back() - t0;
  const auto count = static_cast<Index>(std::floor(span / dt + 1e-9)) + 1;

  SnapshotMatrix out;
  out.width = width;
  out.height = height;
  out.data.resize(data.rows(), count);
  out.timestamps.resize(static_cast<std::size_t>(count));

  std::size_t lo = 0;
  for (Index j = 0; j < count; ++j) {
    const double g = std::min(t0 + static_cast<double>(j) * dt, ts.back());
    out.timestamps[static_cast<std::size_t>(j)] = t0 + static_cast<double>(j) * dt;
    while (lo + 1 < ts.size() && ts[lo + 1] <= g) ++lo;
    if (lo + 1 == ts.size() || ts[lo] == g) {
      out.data.col(j) = data.col(static_cast<Index>(lo));
      continue;
    }
    const double w = (g - ts[lo]) / (ts[lo + 1] - ts[lo]);
    const auto a = data.col(static_cast<Index>(lo)).cast<double>();
    const auto b = data.col(static_cast<Index>(lo + 1)).cast<double>();
    out.data.col(j) = ((1.0 - w) * a + w * b).cast<float>();
  }
  return out;
}

}  // namespace

SnapshotMatrix regularize_time(const std::vector<Frame>& frames, double dt) {
  require(frames.size() >= 2, Errc::TooFewFrames, "regularize_time needs >= 2 frames");
  const SnapshotMatrix m = stack(frames);
  return resample(m.data, m.timestamps, m.width, m.height, dt);
}

SnapshotMatrix regularize_time(const SnapshotMatrix& m, double dt) {
  return resample(m.data, m.timestamps, m.width, m.height, dt);
}

SnapshotMatrix concatenate(const std::vector<Dataset>& datasets) {
  require(!datasets.empty(), Errc::NoData, "no datasets");
  SnapshotMatrix out;
  out.width = datasets.front().snapshots.width;
  out.height = datasets.front().snapshots.height;
  Index cols = 0;
  for (const auto& d : datasets) {
    require(d.snapshots.pixels() == datasets.front().snapshots.pixels(),
            Errc::DimensionMismatch, "datasets disagree on pixel count");
    cols += d.snapshots.snapshots();
  }
  out.data.resize(datasets.front().snapshots.pixels(), cols);
  Index at = 0;
  for (const auto& d : datasets) {
    out.data.middleCols(at, d.snapshots.snapshots()) = d.snapshots.data;
    out.timestamps.insert(out.timestamps.end(), d.snapshots.timestamps.begin(),
                          d.snapshots.timestamps.end());
    at += d.snapshots.snapshots();
  }
  return out;
}

// -- THERM1 -------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'T', 'H', 'E', 'R', 'M', '1', '\0', '\0'};
constexpr std::size_t kHeaderBytes = 8 + 4 * 4;

template <typename T>
void put(std::vector<std::uint8_t>& out, const T& v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

std::filesystem::path sidecar(const std::filesystem::path& p) {
  auto s = p;
  s += ".json";
  return s;
}

}  // namespace

std::vector<std::uint8_t> encode_therm1(const SnapshotMatrix& m) {
  require(m.timestamps.size() == static_cast<std::size_t>(m.snapshots()),
          Errc::DimensionMismatch, "timestamp count != column count");
  require(static_cast<Index>(m.width) * m.height == m.pixels(), Errc::DimensionMismatch,
          "width*height != pixel count");
  std::vector<std::uint8_t> out;
  const std::size_t payload = m.timestamps.size() * sizeof(double) +
                              static_cast<std::size_t>(m.data.size()) * sizeof(float);
  out.reserve(kHeaderBytes + payload);
  out.resize(sizeof(kMagic));
  std::memcpy(out.data(), kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, m.width);
  put<std::uint32_t>(out, m.height);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(m.snapshots()));
  put<std::uint32_t>(out, 0u);
  for (double t : m.timestamps) put(out, t);
  // Column-major storage already places each frame's pixels contiguously.
  const auto* px = reinterpret_cast<const std::uint8_t*>(m.data.data());
  out.insert(out.end(), px, px + static_cast<std::size_t>(m.data.size()) * sizeof(float));
  return out;
}

SnapshotMatrix decode_therm1(const std::uint8_t* bytes, std::size_t size) {
  require(size >= kHeaderBytes, Errc::MalformedHeader, "file shorter than header");
  require(std::memcmp(bytes, kMagic, 8) == 0, Errc::MalformedHeader, "bad magic");
  const auto width = get<std::uint32_t>(bytes + 8);
  const auto height = get<std::uint32_t>(bytes + 12);
  const auto count = get<std::uint32_t>(bytes + 16);
  const auto flags = get<std::uint32_t>(bytes + 20);
  require(flags == 0, Errc::MalformedHeader, "unsupported flags");
  require(width >= 1 && height >= 1, Errc::MalformedHeader, "zero width or height");

  const std::size_t n = static_cast<std::size_t>(width) * height;
  const std::size_t expected = kHeaderBytes + count * sizeof(double) + count * n * sizeof(float);
  require(size == expected, Errc::DimensionMismatch,
          "payload holds " + std::to_string(size) + " bytes, header implies " +
              std::to_string(expected));

  SnapshotMatrix m;
  m.width = width;
  m.height = height;
  m.timestamps.resize(count);
  std::memcpy(m.timestamps.data(), bytes + kHeaderBytes, count * sizeof(double));
  m.data.resize(static_cast<Index>(n), static_cast<Index>(count));
  std::memcpy(m.data.data(), bytes + kHeaderBytes + count * sizeof(double),
              count * n * sizeof(float));
  const float* px = m.data.data();
  for (std::size_t i = 0; i < count * n; ++i) {
    if (!std::isfinite(px[i])) {
      throw Error(Errc::NonFinitePixel, "non-finite pixel", static_cast<long long>(i));
    }
  }
  return m;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  Dataset ds;
  ds.snapshots = decode_therm1(bytes.data(), bytes.size());
  ds.meta.label = path.stem().string();
  if (std::ifstream meta(sidecar(path)); meta) {
    const auto j = nlohmann::json::parse(meta, nullptr, false);
    if (j.is_object()) {
      ds.meta.voltage = j.value("voltage", 0.0);
      ds.meta.phase = phase_from_string(j.value("phase", std::string("heating")));
      ds.meta.label = j.value("label", ds.meta.label);
    }
  }
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  require(ds.meta.voltage >= 0.0, Errc::BadConfig, "negative voltage in run descriptor");
  const auto bytes = encode_therm1(ds.snapshots);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), Errc::DiskFull, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), Errc::DiskFull, "short write to " + path.string());
  }
  std::ofstream meta(sidecar(path), std::ios::trunc);
  require(static_cast<bool>(meta), Errc::DiskFull, "cannot write sidecar for " + path.string());
  meta << nlohmann::json{{"voltage", ds.meta.voltage},
                         {"phase", to_string(ds.meta.phase)},
                         {"label", ds.meta.label}}
              .dump(2)
       << '\n';
}

Therm1Writer::Therm1Writer(std::filesystem::path path, std::uint32_t width,
                           std::uint32_t height)
    : path_(std::move(path)), width_(width), height_(height) {
  require(width >= 1 && height >= 1, Errc::DimensionMismatch, "zero width or height");
  part_ = path_;
  part_ += ".part";
  out_ = std::fopen(part_.c_str(), "wb");
  require(out_ != nullptr, Errc::DiskFull, "cannot write " + part_.string());
}

Therm1Writer::~Therm1Writer() {
  if (out_) std::fclose(out_);
}

void Therm1Writer::append(const Frame& f) {
  require(out_ != nullptr, Errc::Io, "THERM1 writer is closed");
  require(f.width == width_ && f.height == height_ && f.size() == Index{width_} * height_,
          Errc::DimensionMismatch, "frame does not match the file dimensions");
  const auto n = static_cast<std::size_t>(f.size());
  require(std::fwrite(f.values.data(), sizeof(float), n, out_) == n, Errc::DiskFull,
          "short write to " + part_.string());
  timestamps_.push_back(f.t);
}

void Therm1Writer::close() {
  if (!out_) return;
  const bool flushed = std::fflush(out_) == 0;
  std::fclose(out_);
  out_ = nullptr;
  require(flushed, Errc::DiskFull, "cannot flush " + part_.string());

  std::FILE* in = std::fopen(part_.c_str(), "rb");
  std::FILE* out = std::fopen(path_.c_str(), "wb");
  bool ok = in && out;
  if (ok) {
    std::vector<std::uint8_t> head(sizeof(kMagic));
    std::memcpy(head.data(), kMagic, sizeof(kMagic));
    put<std::uint32_t>(head, width_);
    put<std::uint32_t>(head, height_);
    put<std::uint32_t>(head, static_cast<std::uint32_t>(timestamps_.size()));
    put<std::uint32_t>(head, 0u);
    ok = std::fwrite(head.data(), 1, head.size(), out) == head.size() &&
         std::fwrite(timestamps_.data(), sizeof(double), timestamps_.size(), out) ==
             timestamps_.size();
    std::vector<char> buf(1 << 20);
    while (ok) {
      const std::size_t got = std::fread(buf.data(), 1, buf.size(), in);
      if (got == 0) break;
      ok = std::fwrite(buf.data(), 1, got, out) == got;
    }
    ok = ok && !std::ferror(in);
  }
  if (in) std::fclose(in);
  if (out) ok = (std::fclose(out) == 0) && ok;
  require(ok, Errc::DiskFull, "cannot assemble " + path_.string());
  std::error_code ec;
  std::filesystem::remove(part_, ec);
}

Therm1Reader::Therm1Reader(const std::filesystem::path& path) {
  in_ = std::fopen(path.c_str(), "rb");
  require(in_ != nullptr, Errc::Io, "cannot open " + path.string());
  std::uint8_t head[kHeaderBytes];
  require(std::fread(head, 1, kHeaderBytes, in_) == kHeaderBytes, Errc::MalformedHeader,
          "file shorter than header");
  require(std::memcmp(head, kMagic, 8) == 0, Errc::MalformedHeader, "bad magic");
  width_ = get<std::uint32_t>(head + 8);
  height_ = get<std::uint32_t>(head + 12);
  const auto count = get<std::uint32_t>(head + 16);
  require(get<std::uint32_t>(head + 20) == 0, Errc::MalformedHeader, "unsupported flags");
  require(width_ >= 1 && height_ >= 1, Errc::MalformedHeader, "zero width or height");
  timestamps_.resize(count);
  require(std::fread(timestamps_.data(), sizeof(double), count, in_) == count,
          Errc::DimensionMismatch, "truncated timestamp block");
  pixel_offset_ = static_cast<long long>(kHeaderBytes + count * sizeof(double));
  const long long expected =
      pixel_offset_ + static_cast<long long>(count) * width_ * height_ * 4LL;
  std::error_code ec;
  const auto size = static_cast<long long>(std::filesystem::file_size(path, ec));
  require(!ec && size == expected, Errc::DimensionMismatch,
          "payload size does not match the header of " + path.string());
}

Therm1Reader::~Therm1Reader() {
  if (in_) std::fclose(in_);
}

void Therm1Reader::read(Index k, Frame& out) {
  if (k < 0 || k >= frames()) throw Error(Errc::IndexOutOfRange, "frame index outside the file", k);
  const std::size_t n = static_cast<std::size_t>(width_) * height_;
  out.width = width_;
  out.height = height_;
  out.t = timestamps_[static_cast<std::size_t>(k)];
  out.values.resize(static_cast<Index>(n));
  const long long at = pixel_offset_ + static_cast<long long>(k * n * sizeof(float));
  require(fseeko(in_, at, SEEK_SET) == 0 &&
              std::fread(out.values.data(), sizeof(float), n, in_) == n,
          Errc::Io, "cannot read frame");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(out.values[static_cast<Index>(i)])) {
      throw Error(Errc::NonFinitePixel, "non-finite pixel", static_cast<long long>(i));
    }
  }
}

Frame Therm1Reader::read(Index k) {
  Frame f;
  read(k, f);
  return f;
}

void export_csv(const std::filesystem::path& path, const SnapshotMatrix& m) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), Errc::DiskFull, "cannot write " + path.string());
  out << std::setprecision(9);
  for (Index j = 0; j < m.snapshots(); ++j) {
    out << m.timestamps[static_cast<std::size_t>(j)];
    for (Index i = 0; i < m.pixels(); ++i) out << ',' << m.data(i, j);
    out << '\n';
  }
}

}  // namespace twin
