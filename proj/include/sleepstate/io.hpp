#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sleepstate/evaluation.hpp"
#include "sleepstate/inference.hpp"
#include "sleepstate/signal.hpp"

namespace sleepstate::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

// One sample per line; blank lines and a non-numeric first line are skipped.
std::vector<double> read_samples_csv(const fs::path& path);

// Raw little-endian IEEE float32.
std::vector<double> read_samples_f32(const fs::path& path);
void write_samples_f32(const fs::path& path, const std::vector<double>& samples);

// One integer stage label per line.
std::vector<int> read_labels_csv(const fs::path& path);

std::string read_file(const fs::path& path);
// Writes through a temporary file and renames it into place.
void write_file(const fs::path& path, const std::string& contents);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const fs::path& path);

// Shortest round-trip decimal form of a double.
std::string format_double(double v);

// Non-finite doubles are stored as the strings "inf", "-inf", "nan".
json encode_double(double v);
double decode_double(const json& j);

// Header line shared by every JSON-lines artifact.
json artifact_header(const std::string& kind, const std::string& hash, const json& extra = json::object());

// Reads a JSON-lines file, returning the header and the records. Verifies the
// artifact kind and, when `expected_hash` is nonempty, the header hash.
struct JsonLines {
  json header;
  std::vector<json> records;
};
JsonLines read_json_lines(const fs::path& path, const std::string& kind, const std::string& expected_hash);

json observation_record(const SpectralObservation& obs, std::size_t t);
SpectralObservation observations_from_records(const json& header, const std::vector<json>& records);

json sample_record(const PosteriorSample& sample);
PosteriorSample sample_from_record(const json& j);

json chain_to_json(const ChainState& chain);
ChainState chain_from_json(const json& j);

}  // namespace sleepstate::io
