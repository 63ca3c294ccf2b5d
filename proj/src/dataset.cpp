#include "ktts/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "ktts/errors.hpp"

namespace ktts::data {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write " + path);
  out << contents;
  if (!out) throw DatasetError("short write to " + path);
}

namespace {

std::vector<std::string> split_lines(const std::string& contents) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  if (contents.rfind("\xEF\xBB\xBF", 0) == 0) start = 3;
  while (start <= contents.size()) {
    auto nl = contents.find('\n', start);
    std::string line = contents.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t") == std::string::npos; }

}  // namespace

MetadataLoad parse_metadata(const std::string& contents) {
  MetadataLoad out;
  const auto lines = split_lines(contents);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (blank(line)) continue;
    const auto bar = line.find('|');
    const std::string where = "metadata line " + std::to_string(i + 1);
    if (bar == std::string::npos) {
      out.warnings.push_back(where + ": no '|' separator, skipped");
      continue;
    }
    const auto bar2 = line.find('|', bar + 1);
    UtteranceRecord r;
    r.wav_path = line.substr(0, bar);
    r.text = line.substr(bar + 1, bar2 == std::string::npos ? std::string::npos : bar2 - bar - 1);
    r.line = i + 1;
    if (blank(r.wav_path) || blank(r.text)) {
      out.warnings.push_back(where + ": empty path or text, skipped");
      continue;
    }
    out.records.push_back(std::move(r));
  }
  if (out.records.empty()) throw DatasetError("metadata contains no valid lines");
  return out;
}

MetadataLoad load_metadata(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot read metadata file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_metadata(ss.str());
}

std::vector<std::string> attach_parses(std::vector<UtteranceRecord>& records, const std::string& sidecar_contents) {
  const auto lines = split_lines(sidecar_contents);
  std::vector<std::string> warnings;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (i < lines.size() && !blank(lines[i])) {
      records[i].parse = lines[i];
    } else {
      records[i].parse.reset();
      warnings.push_back("utterance " + records[i].wav_path + ": missing parse, degraded mode (no boundary pipes)");
    }
  }
  return warnings;
}

std::pair<std::vector<UtteranceRecord>, std::vector<UtteranceRecord>> split_dataset(
    const std::vector<UtteranceRecord>& records, double valid_fraction, std::uint64_t seed) {
  const std::size_t n = records.size();
  if (n < 2) throw DatasetError("need at least two records to split, got " + std::to_string(n));
  if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) throw ConfigError("valid fraction must lie in (0, 1)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 engine(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[engine() % i]);
  std::size_t n_valid = static_cast<std::size_t>(std::llround(static_cast<double>(n) * valid_fraction));
  n_valid = std::clamp<std::size_t>(n_valid, 1, n - 1);
  std::vector<UtteranceRecord> train, valid;
  for (std::size_t k = 0; k < n; ++k) (k < n_valid ? valid : train).push_back(records[order[k]]);
  return {std::move(train), std::move(valid)};
}

namespace {
constexpr char kMatrixMagic[8] = {'K', 'T', 'T', 'S', 'M', 'A', 'T', '1'};
}

void save_matrix(const std::string& path, const Eigen::MatrixXd& m, std::uint64_t config_hash) {
  std::string buf(kMatrixMagic, 8);
  auto put = [&buf](const void* p, std::size_t n) { buf.append(static_cast<const char*>(p), n); };
  const std::uint32_t rows = static_cast<std::uint32_t>(m.rows()), cols = static_cast<std::uint32_t>(m.cols());
  put(&rows, 4);
  put(&cols, 4);
  put(&config_hash, 8);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  put(rm.data(), sizeof(double) * static_cast<std::size_t>(rm.size()));
  write_file(path, buf);
}

Eigen::MatrixXd load_matrix(const std::string& path, std::uint64_t* config_hash) {
  const std::string buf = read_file(path);
  if (buf.size() < 24 || std::memcmp(buf.data(), kMatrixMagic, 8) != 0) throw DatasetError(path + ": not a matrix file");
  std::uint32_t rows = 0, cols = 0;
  std::uint64_t hash = 0;
  std::memcpy(&rows, buf.data() + 8, 4);
  std::memcpy(&cols, buf.data() + 12, 4);
  std::memcpy(&hash, buf.data() + 16, 8);
  const std::size_t need = 24 + sizeof(double) * static_cast<std::size_t>(rows) * cols;
  if (buf.size() != need) throw DatasetError(path + ": truncated or oversized matrix data");
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  if (rm.size() > 0) std::memcpy(rm.data(), buf.data() + 24, need - 24);
  if (config_hash) *config_hash = hash;
  return rm;
}

}  // namespace ktts::data
