#include <doctest.h>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "spde/error.hpp"
#include "spde/io.hpp"

using namespace spde;
namespace fs = std::filesystem;

namespace {

json small_config() {
  return json::parse(R"({
    "domain": {"kind": "Interval", "L": 1},
    "bc": "dirichlet",
    "sigma": {"kind": "anderson"},
    "lambda": 1.0,
    "initial": {"kind": "atom", "y0": 0.5},
    "n_space": 16,
    "dt": 0.001,
    "t_end": 0.01,
    "trajectories": 8,
    "seed": 7,
    "probes": [[0.25], [0.5]],
    "write_raw": true
  })");
}

std::string error_of(const json& j) {
  try {
    simulate_config_from_json(j);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("spde_test_io_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("unknown keys are rejected with their path") {
  json j = small_config();
  j["lamda"] = 2.0;
  CHECK(error_of(j).find("/lamda") != std::string::npos);
  CHECK(error_of(j).find("unknown key") != std::string::npos);

  j = small_config();
  j["domain"]["Length"] = 1.0;
  CHECK(error_of(j).find("/domain/Length") != std::string::npos);

  j = small_config();
  j["initial"] = {{"kind", "sum"}, {"parts", {{{"kind", "uniform"}, {"valu", 1}}}}};
  CHECK(error_of(j).find("/initial/parts/0/valu") != std::string::npos);
}

TEST_CASE("type and range errors carry a path") {
  json j = small_config();
  j["dt"] = "small";
  CHECK(error_of(j).find("/dt") != std::string::npos);
  j = small_config();
  j["domain"]["L"] = -1;
  CHECK(error_of(j).find("/domain/L") != std::string::npos);
  j = small_config();
  j.erase("bc");
  CHECK(error_of(j).find("/bc: missing") != std::string::npos);
  j = small_config();
  j["schema"] = "spde.simulate/9";
  CHECK(error_of(j).find("/schema") != std::string::npos);
  j = small_config();
  j["probes"][1] = {"a"};
  CHECK(error_of(j).find("/probes/1/0") != std::string::npos);
}

TEST_CASE("malformed JSON is a ValidationError naming the source") {
  try {
    parse_json_text("{\"a\": 1,,}", "cfg.json");
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("cfg.json") != std::string::npos);
  }
  CHECK_THROWS_AS(read_json_file("/nonexistent/x.json"), ValidationError);
}

TEST_CASE("config echo is a fixed point") {
  SimulateConfig a = simulate_config_from_json(small_config());
  json e1 = to_json(a);
  SimulateConfig b = simulate_config_from_json(e1);
  CHECK(to_json(b) == e1);
  CHECK(config_hash(a.sim) == config_hash(b.sim));
  CHECK(e1["initial"]["y0"] == json::array({0.5}));
  CHECK(e1["initial"]["mass"] == 1.0);

  json other = small_config();
  other["initial"] = {{"kind", "atom"}, {"y0", 0.4}};
  CHECK(config_hash(simulate_config_from_json(other).sim) != config_hash(a.sim));
  other = small_config();
  other["initial"] = {{"kind", "uniform"}, {"value", 2.0}};
  json third = small_config();
  third["initial"] = {{"kind", "uniform"}, {"value", 3.0}};
  CHECK(config_hash(simulate_config_from_json(other).sim) != config_hash(simulate_config_from_json(third).sim));
}

TEST_CASE("every domain kind round-trips") {
  for (const char* txt : {R"({"kind":"Interval","L":2})", R"({"kind":"Box","d":2,"L":1.5})",
                          R"({"kind":"Ball","d":3,"R":1})", R"({"kind":"Annulus","R1":1,"R2":3})",
                          R"({"kind":"Product","factors":[{"kind":"Interval","L":1},{"kind":"Ball","d":2,"R":1}]})"}) {
    json j = json::parse(txt);
    CHECK(domain_to_json(domain_from_json(j)) == j);
  }
  CHECK_THROWS_AS(domain_from_json(json::parse(R"({"kind":"Torus"})")), ValidationError);
}

TEST_CASE("bounds config") {
  json j = json::parse(R"({"domain":{"kind":"Interval","L":1},"bc":"neumann",
    "model":{"lambda":2,"beta":0.5},"t":0.5,"x":[0.3]})");
  BoundsConfig b = bounds_config_from_json(j);
  CHECK(b.model.lambda == 2.0);
  CHECK(b.xp == b.x);
  CHECK(to_json(bounds_config_from_json(to_json(b))) == to_json(b));
  j["x"] = {1.5};
  CHECK_THROWS_AS(bounds_config_from_json(j), ValidationError);
  j["x"] = {0.3};
  j["model"]["gamma"] = 1;
  CHECK_THROWS_WITH_AS(bounds_config_from_json(j), doctest::Contains("/model/gamma"), ValidationError);
}

TEST_CASE("numbers are shortest round-trip") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5e17, 5e-324}) {
    std::string s = format_number(v);
    double back = 0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    CHECK(back == v);
    CHECK(s.find(',') == std::string::npos);
  }
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("CSV quoting and CRLF") {
  std::ostringstream os;
  CsvWriter w(os);
  w.header({"a", "b,c", "say \"hi\""});
  w.row({1.5, -2, 0.1});
  w.fields({"x\r\ny", "", "z"});
  std::string s = os.str();
  CHECK(s.substr(0, s.find("\r\n")) == "a,\"b,c\",\"say \"\"hi\"\"\"");
  CsvTable t = parse_csv(s);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.header[1] == "b,c");
  CHECK(t.header[2] == "say \"hi\"");
  CHECK(t.rows[0][1] == "-2");
  CHECK(t.rows[1][0] == "x\r\ny");
  CHECK(t.rows[1][1].empty());
  CHECK(t.column("b,c") == 1);
  CHECK_THROWS_AS(parse_csv("a,b\r\n1\r\n"), ValidationError);
  CHECK_THROWS_AS(parse_csv("a\r\n\"open\r\n"), ValidationError);
}

TEST_CASE("binary round trip and header") {
  fs::path d = scratch("bin");
  fs::create_directories(d);
  BinaryArray a;
  a.dims = {2, 3};
  a.data = {1, -2, 3.5, 1e-300, std::numeric_limits<double>::infinity(), 0.1};
  write_binary((d / "a.bin").string(), a);
  BinaryArray b = read_binary((d / "a.bin").string());
  CHECK(b.dims == a.dims);
  CHECK(b.data == a.data);
  CHECK(fs::file_size(d / "a.bin") == 4 + 4 + 4 + 2 * 8 + 6 * 8);
  std::ifstream in(d / "a.bin", std::ios::binary);
  char head[8];
  in.read(head, 8);
  CHECK(std::string(head, 4) == "SPDE");
  CHECK(head[4] == 1);
  {
    std::ofstream bad(d / "b.bin", std::ios::binary);
    bad << "NOPE";
  }
  CHECK_THROWS_AS(read_binary((d / "b.bin").string()), ValidationError);
  fs::resize_file(d / "a.bin", 30);
  CHECK_THROWS_AS(read_binary((d / "a.bin").string()), ValidationError);
  fs::remove_all(d);
}

TEST_CASE("run directory round trip") {
  fs::path d = scratch("run");
  SimulateConfig cfg = simulate_config_from_json(small_config());
  Ensemble e = run_ensemble(cfg.sim);
  RunFiles f = write_run(d.string(), cfg, e, 1);
  REQUIRE(f.csv.size() == e.times.size());
  CHECK(fs::exists(d / "metadata.json"));

  CsvTable t = read_csv_file((d / f.csv.back()).string());
  CHECK(t.rows.size() == e.points.size());
  std::size_t cm = t.column("mean");
  double m = 0;
  for (long r = 0; r < e.size(); ++r) m += e.values.back()(r, 1);
  CHECK(std::stod(t.rows[1][cm]) == doctest::Approx(m / double(e.size())).epsilon(1e-14));

  LoadedRun L = load_run(d.string());
  CHECK(to_json(L.config) == to_json(cfg));
  CHECK(L.ensemble.times == e.times);
  CHECK(L.ensemble.points == e.points);
  CHECK(L.ensemble.n_probes == e.n_probes);
  CHECK(L.ensemble.config_hash == e.config_hash);
  REQUIRE(L.ensemble.values.size() == e.values.size());
  for (std::size_t k = 0; k < e.values.size(); ++k) CHECK(L.ensemble.values[k] == e.values[k]);

  json meta = read_json_file((d / "metadata.json").string());
  CHECK(meta["trajectories_kept"] == e.size());
  CHECK(meta["config_hash"].get<std::string>().size() == 16);

  cfg.write_raw = false;
  fs::path d2 = scratch("run_noraw");
  write_run(d2.string(), cfg, e, 1);
  CHECK_THROWS_AS(load_run(d2.string()), ValidationError);
  fs::remove_all(d);
  fs::remove_all(d2);
}
