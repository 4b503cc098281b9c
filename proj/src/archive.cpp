#include "thermotwin/archive.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "thermotwin/error.hpp"

namespace twin {

namespace {

constexpr char kMagic[8] = {'T', 'W', 'I', 'N', 'A', 'R', 'C', '1'};

template <typename T>
std::vector<std::uint8_t> raw(const T* data, std::size_t count) {
  std::vector<std::uint8_t> out(count * sizeof(T));
  if (count != 0) std::memcpy(out.data(), data, out.size());
  return out;
}

}  // namespace

void ArchiveWriter::put(const std::string& name, const Eigen::MatrixXd& m) {
  arrays_[name] = Entry{"f64", m.rows(), m.cols(),
                        raw(m.data(), static_cast<std::size_t>(m.size()))};
}

void ArchiveWriter::put(const std::string& name, const Eigen::MatrixXcd& m) {
  put(name + ".re", Eigen::MatrixXd(m.real()));
  put(name + ".im", Eigen::MatrixXd(m.imag()));
}

void ArchiveWriter::put_u32(const std::string& name, const std::vector<std::uint32_t>& v) {
  arrays_[name] = Entry{"u32", static_cast<Eigen::Index>(v.size()), 1, raw(v.data(), v.size())};
}

std::vector<std::uint8_t> ArchiveWriter::bytes() const {
  nlohmann::json header;
  header["meta"] = meta_;
  header["arrays"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, e] : arrays_) {
    header["arrays"].push_back({{"name", name},
                                {"dtype", e.dtype},
                                {"rows", e.rows},
                                {"cols", e.cols},
                                {"offset", offset},
                                {"bytes", e.payload.size()}});
    offset += e.payload.size();
  }
  const std::string text = header.dump();
  std::vector<std::uint8_t> out;
  out.reserve(16 + text.size() + offset);
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  const std::uint64_t len = text.size();
  const auto* lp = reinterpret_cast<const std::uint8_t*>(&len);
  out.insert(out.end(), lp, lp + sizeof(len));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, e] : arrays_) out.insert(out.end(), e.payload.begin(), e.payload.end());
  return out;
}

void ArchiveWriter::write(const std::filesystem::path& path) const {
  const auto b = bytes();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), Errc::DiskFull, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  require(static_cast<bool>(out), Errc::DiskFull, "short write to " + path.string());
}

ArchiveReader::ArchiveReader(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::Io, "cannot open " + path.string());
  bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  parse();
}

ArchiveReader::ArchiveReader(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {
  parse();
}

void ArchiveReader::parse() {
  require(bytes_.size() >= 16 && std::memcmp(bytes_.data(), kMagic, 8) == 0,
          Errc::MalformedHeader, "not a twin archive");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes_.data() + 8, sizeof(len));
  require(16 + len <= bytes_.size(), Errc::MalformedHeader, "truncated archive header");
  const auto header = nlohmann::json::parse(bytes_.begin() + 16,
                                            bytes_.begin() + 16 + static_cast<long>(len),
                                            nullptr, false);
  require(header.is_object() && header.contains("arrays"), Errc::MalformedHeader,
          "archive header is not valid JSON");
  meta_ = header.value("meta", nlohmann::json::object());
  data_start_ = 16 + len;
  for (const auto& a : header["arrays"]) {
    const std::size_t end = data_start_ + a.at("offset").get<std::size_t>() +
                            a.at("bytes").get<std::size_t>();
    require(end <= bytes_.size(), Errc::DimensionMismatch, "archive array exceeds file");
    index_[a.at("name").get<std::string>()] = a;
  }
}

const nlohmann::json& ArchiveReader::entry(const std::string& name, const char* dtype) const {
  const auto it = index_.find(name);
  require(it != index_.end(), Errc::MalformedHeader, "archive lacks array '" + name + "'");
  require(it->second.at("dtype") == dtype, Errc::MalformedHeader,
          "array '" + name + "' has unexpected dtype");
  return it->second;
}

Eigen::MatrixXd ArchiveReader::matrix(const std::string& name) const {
  const auto& e = entry(name, "f64");
  const auto rows = e.at("rows").get<Eigen::Index>();
  const auto cols = e.at("cols").get<Eigen::Index>();
  require(e.at("bytes").get<std::size_t>() == static_cast<std::size_t>(rows * cols) * 8,
          Errc::DimensionMismatch, "array '" + name + "' size mismatch");
  Eigen::MatrixXd m(rows, cols);
  if (m.size() != 0) {
    std::memcpy(m.data(), bytes_.data() + data_start_ + e.at("offset").get<std::size_t>(),
                static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  return m;
}

Eigen::VectorXd ArchiveReader::vector(const std::string& name) const {
  const Eigen::MatrixXd m = matrix(name);
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

Eigen::MatrixXcd ArchiveReader::complex_matrix(const std::string& name) const {
  const Eigen::MatrixXd re = matrix(name + ".re");
  const Eigen::MatrixXd im = matrix(name + ".im");
  require(re.rows() == im.rows() && re.cols() == im.cols(), Errc::DimensionMismatch,
          "complex planes disagree for '" + name + "'");
  Eigen::MatrixXcd out(re.rows(), re.cols());
  out.real() = re;
  out.imag() = im;
  return out;
}

std::vector<std::uint32_t> ArchiveReader::u32(const std::string& name) const {
  const auto& e = entry(name, "u32");
  std::vector<std::uint32_t> v(e.at("rows").get<std::size_t>());
  require(e.at("bytes").get<std::size_t>() == v.size() * 4, Errc::DimensionMismatch,
          "array '" + name + "' size mismatch");
  if (!v.empty()) {
    std::memcpy(v.data(), bytes_.data() + data_start_ + e.at("offset").get<std::size_t>(),
                v.size() * sizeof(std::uint32_t));
  }
  return v;
}

}  // namespace twin
