#include "warpex/io.hpp"

#include <charconv>
#include <map>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "warpex/error.hpp"

namespace warpex {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') cell += '"', ++i;
      else if (ch == '"') quoted = false;
      else cell += ch;
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell += ch;
    }
  }
  out.push_back(cell);
  return out;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}

double parse_double(const std::string& s, const fs::path& path, size_t line) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && *b == ' ') ++b;
  const auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e)
    throw ValidationError(path.string() + ":" + std::to_string(line) + ": '" + s + "' is not a number");
  return v;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty file");
  t.header = split_line(line);
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto row = split_line(line);
    if (row.size() != t.header.size())
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(t.header.size()) + " fields, found " + std::to_string(row.size()));
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_csv(const fs::path& path, const CsvTable& t) {
  auto out = open_out(path);
  auto write_row = [&](const std::vector<std::string>& r) {
    for (size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << quote(r[i]);
    out << '\n';
  };
  write_row(t.header);
  for (const auto& r : t.rows) write_row(r);
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

LocationSet read_sites_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const int ci = t.column("id"), cx = t.column("x"), cy = t.column("y");
  if (cx < 0 || cy < 0) throw ValidationError(path.string() + ": header must contain x and y (expected id,x,y)");
  Coords xy(static_cast<Eigen::Index>(t.rows.size()), 2);
  std::vector<std::string> ids;
  for (size_t r = 0; r < t.rows.size(); ++r) {
    xy(static_cast<Eigen::Index>(r), 0) = parse_double(t.rows[r][static_cast<size_t>(cx)], path, r + 2);
    xy(static_cast<Eigen::Index>(r), 1) = parse_double(t.rows[r][static_cast<size_t>(cy)], path, r + 2);
    ids.push_back(ci >= 0 ? t.rows[r][static_cast<size_t>(ci)] : std::to_string(r + 1));
  }
  if (xy.rows() == 0) throw ValidationError(path.string() + ": no sites");
  if (!xy.allFinite()) throw ValidationError(path.string() + ": non-finite coordinate");
  return LocationSet(xy, ids);
}

void write_sites_csv(const fs::path& path, const LocationSet& sites, const Coords* warped) {
  CsvTable t;
  t.header = {"id", "x", "y"};
  if (warped) t.header.insert(t.header.end(), {"wx", "wy"});
  for (Eigen::Index i = 0; i < sites.size(); ++i) {
    std::vector<std::string> r{sites.label(i), format_double(sites.coords(i, 0)), format_double(sites.coords(i, 1))};
    if (warped) r.insert(r.end(), {format_double((*warped)(i, 0)), format_double((*warped)(i, 1))});
    t.rows.push_back(std::move(r));
  }
  write_csv(path, t);
}

Eigen::MatrixXd read_matrix_csv(const fs::path& path, std::vector<std::string>* header) {
  const CsvTable t = read_csv(path);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (size_t r = 0; r < t.rows.size(); ++r)
    for (size_t c = 0; c < t.header.size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = parse_double(t.rows[r][c], path, r + 2);
  if (header) *header = t.header;
  return m;
}

void write_matrix_csv(const fs::path& path, const Eigen::MatrixXd& m, const std::vector<std::string>& header) {
  if (static_cast<Eigen::Index>(header.size()) != m.cols()) throw ValidationError("write_matrix_csv: header size mismatch");
  auto out = open_out(path);
  for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << quote(header[i]);
  out << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_double(m(r, c));
    out << '\n';
  }
}

LongSeries read_long_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const int cs = t.column("site_id"), ct = t.column("time"), cv = t.column("value");
  if (cs < 0 || cv < 0) throw ValidationError(path.string() + ": header must be site_id,time,value");
  LongSeries ls;
  std::map<std::string, size_t> index;
  for (size_t r = 0; r < t.rows.size(); ++r) {
    const std::string& id = t.rows[r][static_cast<size_t>(cs)];
    auto [it, inserted] = index.emplace(id, ls.sites.size());
    if (inserted) {
      ls.sites.push_back(id);
      ls.times.emplace_back();
      ls.values.emplace_back();
    }
    ls.times[it->second].push_back(ct >= 0 ? t.rows[r][static_cast<size_t>(ct)] : std::to_string(r));
    ls.values[it->second].push_back(parse_double(t.rows[r][static_cast<size_t>(cv)], path, r + 2));
  }
  return ls;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  auto out = open_out(path);
  out << std::setw(2) << j << '\n';
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return os.str();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

}  // namespace warpex
