#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "warpex/geometry.hpp"

namespace warpex {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

/// Sites with header id,x,y.
LocationSet read_sites_csv(const std::filesystem::path& path);
/// id,x,y plus wx,wy when `warped` is given.
void write_sites_csv(const std::filesystem::path& path, const LocationSet& sites, const Coords* warped = nullptr);

/// Wide numeric matrix; the header carries one name per column.
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path, std::vector<std::string>* header = nullptr);
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m, const std::vector<std::string>& header);

/// Long observations site_id,time,value grouped by site in order of first appearance.
struct LongSeries {
  std::vector<std::string> sites;
  std::vector<std::vector<std::string>> times;
  std::vector<std::vector<double>> values;
};
LongSeries read_long_csv(const std::filesystem::path& path);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace warpex
