#include "sleepstate/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include <openssl/evp.h>

#include "sleepstate/error.hpp"

namespace sleepstate::io {

namespace {

std::ifstream open_input(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw ValidationError("cannot open " + path.string());
  return in;
}

bool parse_double(const std::string& text, double& out) {
  std::size_t b = text.find_first_not_of(" \t\r");
  std::size_t e = text.find_last_not_of(" \t\r,");
  if (b == std::string::npos) return false;
  const char* first = text.data() + b;
  const char* last = text.data() + e + 1;
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

template <class T>
std::vector<T> vector_of(const json& j) {
  return j.get<std::vector<T>>();
}

}  // namespace

std::vector<double> read_samples_csv(const fs::path& path) {
  auto in = open_input(path);
  std::vector<double> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    double v = 0.0;
    if (!parse_double(line, v)) {
      if (lineno == 1) continue;
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": not a number: " + line);
    }
    if (!std::isfinite(v)) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": non-finite sample");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<double> read_samples_f32(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() % 4 != 0) throw ValidationError(path.string() + ": size is not a multiple of 4 bytes");
  std::vector<double> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::array<unsigned char, 4> b;
    std::memcpy(b.data(), bytes.data() + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) std::swap(b[0], b[3]), std::swap(b[1], b[2]);
    float f;
    std::memcpy(&f, b.data(), 4);
    if (!std::isfinite(f)) throw ValidationError(path.string() + ": non-finite sample at index " + std::to_string(i));
    out[i] = f;
  }
  return out;
}

void write_samples_f32(const fs::path& path, const std::vector<double>& samples) {
  std::string bytes(samples.size() * 4, '\0');
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const float f = static_cast<float>(samples[i]);
    std::array<unsigned char, 4> b;
    std::memcpy(b.data(), &f, 4);
    if constexpr (std::endian::native == std::endian::big) std::swap(b[0], b[3]), std::swap(b[1], b[2]);
    std::memcpy(bytes.data() + 4 * i, b.data(), 4);
  }
  write_file(path, bytes);
}

std::vector<int> read_labels_csv(const fs::path& path) {
  auto in = open_input(path);
  std::vector<int> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    double v = 0.0;
    if (!parse_double(line, v) || v != std::floor(v)) {
      if (lineno == 1) continue;
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": not an integer label: " + line);
    }
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::string read_file(const fs::path& path) {
  auto in = open_input(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    out << contents;
    if (!out) throw ValidationError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw ValidationError("SHA-256 computation failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

std::string format_double(double v) {
  std::array<char, 32> buf;
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

json encode_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double decode_double(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw ValidationError("unexpected string where a number was expected: " + s);
  }
  return j.get<double>();
}

json artifact_header(const std::string& kind, const std::string& hash, const json& extra) {
  json h = extra;
  h["artifact"] = kind;
  h["hash"] = hash;
  return h;
}

JsonLines read_json_lines(const fs::path& path, const std::string& kind, const std::string& expected_hash) {
  auto in = open_input(path);
  JsonLines out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (lineno == 1) {
      if (!j.contains("artifact") || j["artifact"] != kind) {
        throw ValidationError(path.string() + ": not a " + kind + " file");
      }
      if (!expected_hash.empty() && j.value("hash", "") != expected_hash) {
        throw ValidationError(path.string() + ": manifest hash " + j.value("hash", "?") + " does not match expected " +
                              expected_hash + "; rerun the upstream stage");
      }
      out.header = std::move(j);
    } else {
      out.records.push_back(std::move(j));
    }
  }
  if (out.header.is_null()) throw ValidationError(path.string() + ": empty file");
  return out;
}

json observation_record(const SpectralObservation& obs, std::size_t t) {
  json coeffs = json::array();
  for (std::size_t b = 0; b < obs.bands; ++b) {
    json band = json::array();
    for (std::size_t m = 0; m < obs.tapers; ++m) {
      const Complex& c = obs.at(t, b, m);
      band.push_back({c.real(), c.imag()});
    }
    coeffs.push_back(std::move(band));
  }
  json selected = json::array();
  for (std::size_t b = 0; b < obs.bands; ++b) selected.push_back(obs.selected_bin(t, b));
  return {{"t", t}, {"valid", static_cast<bool>(obs.valid[t])}, {"selected", selected}, {"coeffs", coeffs}};
}

SpectralObservation observations_from_records(const json& header, const std::vector<json>& records) {
  SpectralObservation obs;
  obs.bands = header.at("bands").get<std::size_t>();
  obs.tapers = header.at("tapers").get<std::size_t>();
  const std::size_t windows = header.at("windows").get<std::size_t>();
  if (records.size() != windows) {
    throw ValidationError("observation file holds " + std::to_string(records.size()) + " records, header says " +
                          std::to_string(windows));
  }
  obs.coeffs.resize(windows * obs.bands * obs.tapers);
  obs.selected.resize(windows * obs.bands);
  obs.valid.resize(windows);
  for (std::size_t t = 0; t < windows; ++t) {
    const json& r = records[t];
    if (r.at("t").get<std::size_t>() != t) throw ValidationError("observation records out of order at " + std::to_string(t));
    obs.valid[t] = r.at("valid").get<bool>();
    const json& c = r.at("coeffs");
    if (c.size() != obs.bands) throw ValidationError("observation record " + std::to_string(t) + " has wrong band count");
    for (std::size_t b = 0; b < obs.bands; ++b) {
      obs.selected[t * obs.bands + b] = r.at("selected").at(b).get<std::size_t>();
      if (c[b].size() != obs.tapers) throw ValidationError("observation record " + std::to_string(t) + " has wrong taper count");
      for (std::size_t m = 0; m < obs.tapers; ++m) obs.at(t, b, m) = {c[b][m][0].get<double>(), c[b][m][1].get<double>()};
    }
  }
  return obs;
}

json sample_record(const PosteriorSample& s) {
  json states = json::array();
  for (const auto& st : s.states) {
    json shape = json::array(), rate = json::array();
    for (const auto& ig : st.posterior) {
      shape.push_back(ig.shape);
      rate.push_back(ig.rate);
    }
    states.push_back({{"label", st.label},
                      {"occupancy", st.occupancy},
                      {"posterior_shape", shape},
                      {"posterior_rate", rate},
                      {"psd", st.psd},
                      {"ig_rate", st.rate}});
  }
  return {{"iteration", s.iteration},   {"occupied", s.occupied()},
          {"gamma", s.gamma},           {"alpha", s.alpha},
          {"log_joint", encode_double(s.log_joint)}, {"trajectory", s.trajectory},
          {"states", states},           {"transition", s.transition},
          {"transition_counts", s.transition_counts}};
}

PosteriorSample sample_from_record(const json& j) {
  PosteriorSample s;
  s.iteration = j.at("iteration").get<std::size_t>();
  s.gamma = j.at("gamma").get<double>();
  s.alpha = j.at("alpha").get<double>();
  s.log_joint = decode_double(j.at("log_joint"));
  s.trajectory = vector_of<std::size_t>(j.at("trajectory"));
  for (const auto& js : j.at("states")) {
    StateSummary st;
    st.label = js.at("label").get<std::size_t>();
    st.occupancy = js.at("occupancy").get<std::size_t>();
    const auto shape = vector_of<double>(js.at("posterior_shape"));
    const auto rate = vector_of<double>(js.at("posterior_rate"));
    if (shape.size() != rate.size()) throw ValidationError("sample record has mismatched posterior arrays");
    for (std::size_t b = 0; b < shape.size(); ++b) st.posterior.push_back({shape[b], rate[b]});
    st.psd = vector_of<double>(js.at("psd"));
    st.rate = vector_of<double>(js.at("ig_rate"));
    s.states.push_back(std::move(st));
  }
  s.transition = j.at("transition").get<std::vector<std::vector<double>>>();
  s.transition_counts = j.at("transition_counts").get<std::vector<std::vector<std::size_t>>>();
  if (j.at("occupied").get<std::size_t>() != s.states.size()) {
    throw ValidationError("sample record occupied count disagrees with its state list");
  }
  return s;
}

json chain_to_json(const ChainState& chain) {
  json rest = json::array();
  for (double v : chain.stick_log_rest) rest.push_back(encode_double(v));
  json frac = json::array();
  for (double v : chain.stick_log_fraction) frac.push_back(encode_double(v));
  return {{"trajectory", chain.trajectory},
          {"gamma", chain.gamma},
          {"alpha", chain.alpha},
          {"stick_log_fraction", frac},
          {"stick_log_rest", rest},
          {"beta", chain.beta},
          {"initial", chain.initial},
          {"transition", chain.transition},
          {"psd", chain.psd},
          {"rate", chain.rate},
          {"iteration", chain.iteration},
          {"rng", serialize_rng(chain.rng)}};
}

ChainState chain_from_json(const json& j) {
  ChainState c;
  c.trajectory = vector_of<std::size_t>(j.at("trajectory"));
  c.gamma = j.at("gamma").get<double>();
  c.alpha = j.at("alpha").get<double>();
  for (const auto& v : j.at("stick_log_fraction")) c.stick_log_fraction.push_back(decode_double(v));
  for (const auto& v : j.at("stick_log_rest")) c.stick_log_rest.push_back(decode_double(v));
  c.beta = vector_of<double>(j.at("beta"));
  c.initial = vector_of<double>(j.at("initial"));
  c.transition = j.at("transition").get<std::vector<std::vector<double>>>();
  c.psd = j.at("psd").get<std::vector<std::vector<double>>>();
  c.rate = j.at("rate").get<std::vector<std::vector<double>>>();
  c.iteration = j.at("iteration").get<std::size_t>();
  c.rng = deserialize_rng(j.at("rng").get<std::string>());
  c.check_invariants();
  return c;
}

}  // namespace sleepstate::io
