#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace twin {

/// Single-file container: "TWINARC1" | u64 meta_len | JSON meta | raw arrays.
///
/// The JSON carries caller metadata under "meta" and an "arrays" table of
/// {name, dtype, rows, cols, offset, bytes}; offsets are relative to the first
/// byte after the JSON block. Arrays are column-major little-endian. Complex
/// matrices are stored as two f64 planes, `<name>.re` and `<name>.im`.
class ArchiveWriter {
 public:
  nlohmann::json& meta() { return meta_; }

  void put(const std::string& name, const Eigen::MatrixXd& m);
  void put(const std::string& name, const Eigen::MatrixXcd& m);
  void put_u32(const std::string& name, const std::vector<std::uint32_t>& v);

  std::vector<std::uint8_t> bytes() const;
  void write(const std::filesystem::path& path) const;

 private:
  struct Entry {
    std::string dtype;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    std::vector<std::uint8_t> payload;
  };
  nlohmann::json meta_ = nlohmann::json::object();
  std::map<std::string, Entry> arrays_;
};

class ArchiveReader {
 public:
  explicit ArchiveReader(const std::filesystem::path& path);
  explicit ArchiveReader(std::vector<std::uint8_t> bytes);

  const nlohmann::json& meta() const { return meta_; }
  bool has(const std::string& name) const { return index_.contains(name); }

  Eigen::MatrixXd matrix(const std::string& name) const;
  Eigen::VectorXd vector(const std::string& name) const;
  Eigen::MatrixXcd complex_matrix(const std::string& name) const;
  std::vector<std::uint32_t> u32(const std::string& name) const;

 private:
  void parse();
  const nlohmann::json& entry(const std::string& name, const char* dtype) const;

  std::vector<std::uint8_t> bytes_;
  std::size_t data_start_ = 0;
  nlohmann::json meta_;
  std::map<std::string, nlohmann::json> index_;
};

}  // namespace twin
