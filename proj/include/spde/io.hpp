#pragma once

#include <cstdint>
#include <iosfwd>
#include <json.hpp>
#include <set>
#include <string>
#include <vector>

#include "spde/bounds.hpp"
#include "spde/geometry.hpp"
#include "spde/measure.hpp"
#include "spde/simulate.hpp"
#include "spde/spectral.hpp"

namespace spde {

using json = nlohmann::json;

// Parse text as JSON; syntax errors become ValidationError naming `where`.
json parse_json_text(const std::string& text, const std::string& where);
json read_json_file(const std::string& path);

// Object reader that records the keys it was asked for; finish() rejects the
// rest. Error messages carry the JSON pointer of the offending value.
class JsonObject {
 public:
  JsonObject(const json& j, std::string path);
  bool has(const std::string& key) const;
  double number(const std::string& key) const;
  double number(const std::string& key, double fallback) const;
  long integer(const std::string& key) const;
  long integer(const std::string& key, long fallback) const;
  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) const;
  bool boolean(const std::string& key, bool fallback) const;
  std::string string(const std::string& key) const;
  std::string string(const std::string& key, const std::string& fallback) const;
  std::vector<double> numbers(const std::string& key) const;
  const json& at(const std::string& key) const;
  std::string child(const std::string& key) const { return path_ + "/" + key; }
  const std::string& path() const { return path_; }
  void finish() const;

 private:
  const json& get(const std::string& key) const;
  const json& j_;
  std::string path_;
  mutable std::set<std::string> seen_;
};

// {"kind":"Interval","L":1} | {"kind":"Box","d":2,"L":1} | {"kind":"Ball","d":3,"R":1}
// | {"kind":"Annulus","R1":1,"R2":3} | {"kind":"Product","factors":[...]}
Domain domain_from_json(const json& j, const std::string& path = "");
json domain_to_json(const Domain& D);

// Initial measures. Kinds: atom {y0, mass}, uniform {value}, gap_product_power
// {exponent, scale}, sin_power {L, exponent, scale}, ball_power {b0, b1, scale},
// annulus_power {R1, b0, b1, b2, scale}, sum {parts}. The canonical form fills
// every default.
json canonical_measure(const json& j, const std::string& path = "");
InitialMeasure measure_from_json(const json& canonical);

BC bc_from_json(const json& j, const std::string& path);

struct SimulateConfig {
  static constexpr const char* kSchema = "spde.simulate/1";
  SimConfig sim;
  json domain;   // canonical
  json initial;  // canonical
  bool write_raw = false;
};

// {"schema": "spde.simulate/1", "domain", "bc", "sigma": {"kind":"anderson"} |
//  {"kind":"linear_cone","l","L"}, "lambda", "beta", "initial", "n_space", "dt",
//  "t_end", "trajectories", "seed", "scheme", "output_times", "probes",
//  "record_grid", "modes", "write_raw"}
SimulateConfig simulate_config_from_json(const json& j, const std::string& path = "");
json to_json(const SimulateConfig& c);

// Bounds subcommand input.
struct BoundsConfig {
  static constexpr const char* kSchema = "spde.bounds/1";
  json domain, initial;
  BC bc = BC::Dirichlet;
  ModelParams model;
  BoundConstants constants;
  double t = 1.0;
  Point x, xp;
};
BoundsConfig bounds_config_from_json(const json& j, const std::string& path = "");
json to_json(const BoundsConfig& c);

// ---------------------------------------------------------------- CSV

// Shortest round-trip decimal, '.' separator, independent of the locale.
std::string format_number(double v);

// RFC-4180: comma separated, CRLF line ends, fields quoted when they hold a
// comma, quote or line break.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}
  void header(const std::vector<std::string>& names);
  void row(const std::vector<double>& values);
  void fields(const std::vector<std::string>& values);

 private:
  std::ostream& os_;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t column(const std::string& name) const;
};
CsvTable parse_csv(const std::string& text);
CsvTable read_csv_file(const std::string& path);

// ---------------------------------------------------------------- binary

// "SPDE", u32 version, u32 rank, u64 dims[rank], then little-endian f64 data
// in row-major order.
struct BinaryArray {
  std::uint32_t version = 1;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
};
void write_binary(const std::string& path, const BinaryArray& a);
BinaryArray read_binary(const std::string& path);

// ---------------------------------------------------------------- runs

// Writes metadata.json, field_<k>.csv per output time and, with write_raw,
// trajectories.bin with dims (times, trajectories, points).
struct RunFiles {
  std::vector<std::string> csv;
  std::string metadata, raw;
};
RunFiles write_run(const std::string& dir, const SimulateConfig& cfg, const Ensemble& e, int threads);

struct LoadedRun {
  SimulateConfig config;
  Ensemble ensemble;
};
// Needs trajectories.bin.
LoadedRun load_run(const std::string& dir);

}  // namespace spde
