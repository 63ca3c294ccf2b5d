#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace ktts::data {

/// One corpus item. `ids` and `mel` are filled from the preprocess cache.
struct UtteranceRecord {
  std::string wav_path;  // as written in the metadata file
  std::string text;
  std::optional<std::string> parse;  // bracketed tree from the sidecar
  std::size_t line = 0;              // 1-based metadata line
  std::vector<int> ids;
  Eigen::MatrixXd mel;
  std::uint64_t mel_config_hash = 0;
};

struct MetadataLoad {
  std::vector<UtteranceRecord> records;
  std::vector<std::string> warnings;  // one per skipped line
};

/// Reads "wav_path|text[|ignored...]" lines. CRLF and a UTF-8 BOM are
/// accepted, blank lines are skipped silently, and lines without a pipe or
/// with an empty field are skipped with a warning. Throws DatasetError when
/// the file is unreadable or yields no records.
MetadataLoad load_metadata(const std::string& path);
MetadataLoad parse_metadata(const std::string& contents);

/// Reads a parse sidecar: one bracketed tree per line, line i pairing with
/// record i. Blank lines and a short file leave records without a parse.
/// Returns warnings for records left without one.
std::vector<std::string> attach_parses(std::vector<UtteranceRecord>& records, const std::string& sidecar_contents);

/// Seeded shuffle, then the first round(N * valid_fraction) items (at least
/// one) become the validation set. Throws DatasetError for fewer than two
/// records.
std::pair<std::vector<UtteranceRecord>, std::vector<UtteranceRecord>> split_dataset(
    const std::vector<UtteranceRecord>& records, double valid_fraction, std::uint64_t seed);

/// Portable matrix file: "KTTSMAT1", u32 rows, u32 cols, u64 config hash,
/// then row-major little-endian float64 values.
void save_matrix(const std::string& path, const Eigen::MatrixXd& m, std::uint64_t config_hash);
/// Throws DatasetError on a bad header or truncated data.
Eigen::MatrixXd load_matrix(const std::string& path, std::uint64_t* config_hash = nullptr);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace ktts::data
