#include "spde/io.hpp"

#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "spde/error.hpp"

namespace spde {

namespace fs = std::filesystem;

namespace {

std::string where(const std::string& path) { return path.empty() ? "/" : path; }

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ValidationError("config " + where(path) + ": " + msg);
}

template <class F>
auto with_path(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ValidationError& e) {
    std::string m = e.what();
    if (m.rfind("config ", 0) == 0) throw;
    fail(path, m);
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::ostringstream o;
  o << in.rdbuf();
  return o.str();
}

}  // namespace

json parse_json_text(const std::string& text, const std::string& src) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann's text reads "[json.exception.parse_error.101] parse error at line 1, column 26: ..."
    std::string why = e.what();
    std::size_t at = why.find("at line");
    why = at == std::string::npos ? "byte " + std::to_string(e.byte) : why.substr(at + 3);
    throw ValidationError(src + " /: malformed JSON at " + why);
  }
}

json read_json_file(const std::string& path) { return parse_json_text(read_text(path), path); }

// ---------------------------------------------------------------- JsonObject

JsonObject::JsonObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
  if (!j_.is_object()) fail(path_, "expected an object");
}

bool JsonObject::has(const std::string& key) const { return j_.contains(key); }

const json& JsonObject::get(const std::string& key) const {
  seen_.insert(key);
  if (!j_.contains(key)) fail(child(key), "missing required key");
  return j_.at(key);
}

const json& JsonObject::at(const std::string& key) const { return get(key); }

double JsonObject::number(const std::string& key) const {
  const json& v = get(key);
  if (!v.is_number()) fail(child(key), "expected a number");
  double d = v.get<double>();
  if (!std::isfinite(d)) fail(child(key), "expected a finite number");
  return d;
}

double JsonObject::number(const std::string& key, double fallback) const {
  seen_.insert(key);
  return has(key) ? number(key) : fallback;
}

long JsonObject::integer(const std::string& key) const {
  const json& v = get(key);
  if (!v.is_number_integer()) fail(child(key), "expected an integer");
  return v.get<long>();
}

long JsonObject::integer(const std::string& key, long fallback) const {
  seen_.insert(key);
  return has(key) ? integer(key) : fallback;
}

std::uint64_t JsonObject::unsigned_integer(const std::string& key, std::uint64_t fallback) const {
  seen_.insert(key);
  if (!has(key)) return fallback;
  const json& v = get(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    fail(child(key), "expected a nonnegative integer");
  return v.get<std::uint64_t>();
}

bool JsonObject::boolean(const std::string& key, bool fallback) const {
  seen_.insert(key);
  if (!has(key)) return fallback;
  const json& v = get(key);
  if (!v.is_boolean()) fail(child(key), "expected true or false");
  return v.get<bool>();
}

std::string JsonObject::string(const std::string& key) const {
  const json& v = get(key);
  if (!v.is_string()) fail(child(key), "expected a string");
  return v.get<std::string>();
}

std::string JsonObject::string(const std::string& key, const std::string& fallback) const {
  seen_.insert(key);
  return has(key) ? string(key) : fallback;
}

std::vector<double> JsonObject::numbers(const std::string& key) const {
  const json& v = get(key);
  if (!v.is_array()) fail(child(key), "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) fail(child(key) + "/" + std::to_string(i), "expected a number");
    out.push_back(v[i].get<double>());
  }
  return out;
}

void JsonObject::finish() const {
  for (auto it = j_.begin(); it != j_.end(); ++it)
    if (!seen_.count(it.key())) fail(child(it.key()), "unknown key");
}

// ---------------------------------------------------------------- domains, measures

Domain domain_from_json(const json& j, const std::string& path) {
  JsonObject o(j, path);
  std::string kind = o.string("kind");
  Domain D = Domain::interval(1.0);
  if (kind == "Interval") {
    double L = o.number("L");
    D = with_path(o.child("L"), [&] { return Domain::interval(L); });
  } else if (kind == "Box") {
    long d = o.integer("d");
    double L = o.number("L");
    D = with_path(path, [&] { return Domain::box(int(d), L); });
  } else if (kind == "Ball") {
    long d = o.integer("d");
    double R = o.number("R");
    D = with_path(path, [&] { return Domain::ball(int(d), R); });
  } else if (kind == "Annulus") {
    double R1 = o.number("R1"), R2 = o.number("R2");
    D = with_path(path, [&] { return Domain::annulus(R1, R2); });
  } else if (kind == "Product") {
    const json& f = o.at("factors");
    if (!f.is_array() || f.size() < 2) fail(o.child("factors"), "expected an array of at least two domains");
    std::vector<Domain> parts;
    for (std::size_t i = 0; i < f.size(); ++i)
      parts.push_back(domain_from_json(f[i], o.child("factors") + "/" + std::to_string(i)));
    D = with_path(path, [&] { return Domain::product(parts); });
  } else {
    fail(o.child("kind"), "unknown domain kind '" + kind + "' (Interval|Box|Ball|Annulus|Product)");
  }
  o.finish();
  return D;
}

json domain_to_json(const Domain& D) {
  switch (D.kind()) {
    case Domain::Kind::Interval: return {{"kind", "Interval"}, {"L", D.length()}};
    case Domain::Kind::Box: return {{"kind", "Box"}, {"d", D.dim()}, {"L", D.length()}};
    case Domain::Kind::Ball: return {{"kind", "Ball"}, {"d", D.dim()}, {"R", D.radius()}};
    case Domain::Kind::Annulus: return {{"kind", "Annulus"}, {"R1", D.inner_radius()}, {"R2", D.outer_radius()}};
    default: {
      json f = json::array();
      for (const auto& p : D.factors()) f.push_back(domain_to_json(p));
      return {{"kind", "Product"}, {"factors", f}};
    }
  }
}

BC bc_from_json(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected \"dirichlet\" or \"neumann\"");
  return with_path(path, [&] { return parse_bc(j.get<std::string>()); });
}

json canonical_measure(const json& j, const std::string& path) {
  JsonObject o(j, path);
  std::string kind = o.string("kind");
  json c = {{"kind", kind}};
  if (kind == "atom") {
    const json& y = o.at("y0");
    if (y.is_number())
      c["y0"] = json::array({y.get<double>()});
    else
      c["y0"] = o.numbers("y0");
    if (c["y0"].empty()) fail(o.child("y0"), "expected at least one coordinate");
    c["mass"] = o.number("mass", 1.0);
  } else if (kind == "uniform") {
    c["value"] = o.number("value", 1.0);
  } else if (kind == "gap_product_power") {
    c["exponent"] = o.number("exponent");
    c["scale"] = o.number("scale", 1.0);
  } else if (kind == "sin_power") {
    c["L"] = o.number("L");
    c["exponent"] = o.number("exponent");
    c["scale"] = o.number("scale", 1.0);
  } else if (kind == "ball_power") {
    c["b0"] = o.number("b0");
    c["b1"] = o.number("b1");
    c["scale"] = o.number("scale", 1.0);
  } else if (kind == "annulus_power") {
    c["R1"] = o.number("R1");
    c["b0"] = o.number("b0");
    c["b1"] = o.number("b1");
    c["b2"] = o.number("b2");
    c["scale"] = o.number("scale", 1.0);
  } else if (kind == "sum") {
    const json& p = o.at("parts");
    if (!p.is_array() || p.empty()) fail(o.child("parts"), "expected a nonempty array of measures");
    json parts = json::array();
    for (std::size_t i = 0; i < p.size(); ++i)
      parts.push_back(canonical_measure(p[i], o.child("parts") + "/" + std::to_string(i)));
    c["parts"] = parts;
  } else {
    fail(o.child("kind"), "unknown measure kind '" + kind +
                              "' (atom|uniform|gap_product_power|sin_power|ball_power|annulus_power|sum)");
  }
  o.finish();
  return c;
}

InitialMeasure measure_from_json(const json& c) {
  const std::string kind = c.at("kind");
  auto n = [&](const char* k) { return c.at(k).get<double>(); };
  if (kind == "atom") return InitialMeasure::atom(c.at("y0").get<std::vector<double>>(), n("mass"));
  if (kind == "uniform") return InitialMeasure::uniform(n("value"));
  if (kind == "gap_product_power") return InitialMeasure::gap_product_power(n("exponent"), n("scale"));
  if (kind == "sin_power") return InitialMeasure::sin_power(n("L"), n("exponent"), n("scale"));
  if (kind == "ball_power") return InitialMeasure::ball_power(n("b0"), n("b1"), n("scale"));
  if (kind == "annulus_power") return InitialMeasure::annulus_power(n("R1"), n("b0"), n("b1"), n("b2"), n("scale"));
  std::vector<InitialMeasure> parts;
  for (const auto& p : c.at("parts")) parts.push_back(measure_from_json(p));
  return InitialMeasure::sum(parts);
}

// ---------------------------------------------------------------- simulate config

SimulateConfig simulate_config_from_json(const json& j, const std::string& path) {
  JsonObject o(j, path);
  SimulateConfig out;
  std::string schema = o.string("schema", SimulateConfig::kSchema);
  if (schema != SimulateConfig::kSchema)
    fail(o.child("schema"), "unsupported schema '" + schema + "' (expected " + SimulateConfig::kSchema + ")");
  SimConfig& s = out.sim;
  s.domain = domain_from_json(o.at("domain"), o.child("domain"));
  out.domain = domain_to_json(s.domain);
  s.bc = bc_from_json(o.at("bc"), o.child("bc"));
  if (o.has("sigma")) {
    JsonObject so(o.at("sigma"), o.child("sigma"));
    std::string k = so.string("kind");
    if (k == "anderson") {
      s.sigma = SigmaSpec::anderson();
    } else if (k == "linear_cone") {
      double l = so.number("l"), L = so.number("L");
      s.sigma = with_path(so.path(), [&] { return SigmaSpec::linear_cone(l, L); });
    } else {
      fail(so.child("kind"), "unknown sigma kind '" + k + "' (anderson|linear_cone)");
    }
    so.finish();
  } else {
    o.at("sigma");  // required: the model must be explicit
  }
  s.lambda = o.number("lambda", 1.0);
  s.beta = o.number("beta", 0.5);
  out.initial = canonical_measure(o.at("initial"), o.child("initial"));
  s.initial = with_path(o.child("initial"), [&] { return measure_from_json(out.initial); });
  s.n_space = int(o.integer("n_space", 128));
  s.dt = o.number("dt", 1e-4);
  s.t_end = o.number("t_end", 0.1);
  s.trajectories = o.integer("trajectories", 1);
  s.seed = o.unsigned_integer("seed", 0);
  s.scheme = with_path(o.child("scheme"), [&] { return parse_scheme(o.string("scheme", "exp_euler_eigen")); });
  if (o.has("output_times")) s.output_times = o.numbers("output_times");
  if (o.has("probes")) {
    const json& p = o.at("probes");
    if (!p.is_array()) fail(o.child("probes"), "expected an array of points");
    for (std::size_t i = 0; i < p.size(); ++i) {
      std::string pp = o.child("probes") + "/" + std::to_string(i);
      if (!p[i].is_array()) fail(pp, "expected a point (array of numbers)");
      Point x;
      for (std::size_t k = 0; k < p[i].size(); ++k) {
        if (!p[i][k].is_number()) fail(pp + "/" + std::to_string(k), "expected a number");
        x.push_back(p[i][k].get<double>());
      }
      s.probes.push_back(x);
    }
  }
  s.record_grid = o.boolean("record_grid", true);
  s.modes = int(o.integer("modes", 0));
  out.write_raw = o.boolean("write_raw", false);
  o.finish();
  with_path(path, [&] {
    s.validate();
    return 0;
  });
  return out;
}

json to_json(const SimulateConfig& c) {
  const SimConfig& s = c.sim;
  json sigma;
  if (s.sigma.kind == SigmaSpec::Kind::Anderson)
    sigma = {{"kind", "anderson"}};
  else if (s.sigma.kind == SigmaSpec::Kind::LinearCone)
    sigma = {{"kind", "linear_cone"}, {"l", s.sigma.l}, {"L", s.sigma.L}};
  else
    throw ValidationError("to_json: custom sigma has no JSON form");
  json probes = json::array();
  for (const auto& p : s.probes) probes.push_back(p);
  return {{"schema", SimulateConfig::kSchema},
          {"domain", c.domain},
          {"bc", to_string(s.bc)},
          {"sigma", sigma},
          {"lambda", s.lambda},
          {"beta", s.beta},
          {"initial", c.initial},
          {"n_space", s.n_space},
          {"dt", s.dt},
          {"t_end", s.t_end},
          {"trajectories", s.trajectories},
          {"seed", s.seed},
          {"scheme", to_string(s.scheme)},
          {"output_times", s.output_times},
          {"probes", probes},
          {"record_grid", s.record_grid},
          {"modes", s.modes},
          {"write_raw", c.write_raw}};
}

// ---------------------------------------------------------------- bounds config

BoundsConfig bounds_config_from_json(const json& j, const std::string& path) {
  JsonObject o(j, path);
  BoundsConfig b;
  std::string schema = o.string("schema", BoundsConfig::kSchema);
  if (schema != BoundsConfig::kSchema)
    fail(o.child("schema"), "unsupported schema '" + schema + "' (expected " + BoundsConfig::kSchema + ")");
  Domain D = domain_from_json(o.at("domain"), o.child("domain"));
  b.domain = domain_to_json(D);
  b.bc = bc_from_json(o.at("bc"), o.child("bc"));
  b.initial = o.has("initial") ? canonical_measure(o.at("initial"), o.child("initial"))
                               : json{{"kind", "uniform"}, {"value", 1.0}};
  if (o.has("model")) {
    JsonObject m(o.at("model"), o.child("model"));
    ModelParams& p = b.model;
    p.lambda = m.number("lambda", p.lambda);
    p.beta = m.number("beta", p.beta);
    p.L_sigma = m.number("L_sigma", p.L_sigma);
    p.l_sigma = m.number("l_sigma", p.l_sigma);
    p.C_f = m.number("C_f", p.C_f);
    p.p = m.number("p", p.p);
    p.anderson = m.boolean("anderson", p.anderson);
    m.finish();
    with_path(m.path(), [&] {
      validate(p, D.dim());
      return 0;
    });
  }
  if (o.has("constants")) {
    JsonObject k(o.at("constants"), o.child("constants"));
    BoundConstants& c = b.constants;
    c.C = k.number("C", c.C);
    c.c = k.number("c", c.c);
    c.c_prime = k.number("c_prime", c.c_prime);
    c.C_bar = k.number("C_bar", c.C_bar);
    c.c_bar = k.number("c_bar", c.c_bar);
    c.c_tilde = k.number("c_tilde", c.c_tilde);
    c.c_gauss = k.number("c_gauss", c.c_gauss);
    k.finish();
    with_path(k.path(), [&] {
      validate(c);
      return 0;
    });
  }
  b.t = o.number("t", 1.0);
  if (!(b.t > 0)) fail(o.child("t"), "t must be positive");
  b.x = o.numbers("x");
  b.xp = o.has("xp") ? o.numbers("xp") : b.x;
  if (int(b.x.size()) != D.dim() || !D.contains(b.x)) fail(o.child("x"), "point must lie in the domain");
  if (int(b.xp.size()) != D.dim() || !D.contains(b.xp)) fail(o.child("xp"), "point must lie in the domain");
  o.finish();
  return b;
}

json to_json(const BoundsConfig& b) {
  const auto& m = b.model;
  const auto& k = b.constants;
  return {{"schema", BoundsConfig::kSchema},
          {"domain", b.domain},
          {"bc", to_string(b.bc)},
          {"initial", b.initial},
          {"model",
           {{"lambda", m.lambda},
            {"beta", m.beta},
            {"L_sigma", m.L_sigma},
            {"l_sigma", m.l_sigma},
            {"C_f", m.C_f},
            {"p", m.p},
            {"anderson", m.anderson}}},
          {"constants",
           {{"C", k.C},
            {"c", k.c},
            {"c_prime", k.c_prime},
            {"C_bar", k.C_bar},
            {"c_bar", k.c_bar},
            {"c_tilde", k.c_tilde},
            {"c_gauss", k.c_gauss}}},
          {"t", b.t},
          {"x", b.x},
          {"xp", b.xp}};
}

// ---------------------------------------------------------------- CSV

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

std::string quote_field(const std::string& f) {
  if (f.find_first_of(",\"\r\n") == std::string::npos) return f;
  std::string o = "\"";
  for (char c : f) {
    if (c == '"') o += '"';
    o += c;
  }
  return o + "\"";
}

}  // namespace

void CsvWriter::fields(const std::vector<std::string>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) os_ << ',';
    os_ << quote_field(values[i]);
  }
  os_ << "\r\n";
}

void CsvWriter::header(const std::vector<std::string>& names) { fields(names); }

void CsvWriter::row(const std::vector<double>& values) {
  std::vector<std::string> f;
  f.reserve(values.size());
  for (double v : values) f.push_back(format_number(v));
  fields(f);
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw ValidationError("csv: no column '" + name + "'");
}

CsvTable parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> recs;
  std::vector<std::string> rec;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      rec.push_back(field);
      field.clear();
      any = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        rec.push_back(field);
        recs.push_back(rec);
      }
      rec.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw ValidationError("csv: unterminated quoted field");
  if (any || !field.empty()) {
    rec.push_back(field);
    recs.push_back(rec);
  }
  CsvTable t;
  if (recs.empty()) return t;
  t.header = recs.front();
  for (std::size_t i = 1; i < recs.size(); ++i) {
    if (recs[i].size() != t.header.size())
      throw ValidationError("csv: record " + std::to_string(i + 1) + " has " + std::to_string(recs[i].size()) +
                            " fields, expected " + std::to_string(t.header.size()));
    t.rows.push_back(recs[i]);
  }
  return t;
}

CsvTable read_csv_file(const std::string& path) { return parse_csv(read_text(path)); }

// ---------------------------------------------------------------- binary

namespace {

template <class T>
void put_le(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& is, const std::string& path) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw ValidationError("'" + path + "': truncated file");
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace

void write_binary(const std::string& path, const BinaryArray& a) {
  std::uint64_t n = 1;
  for (auto d : a.dims) n *= d;
  require(n == a.data.size(), "write_binary: dims do not match the data length");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ValidationError("cannot write '" + path + "'");
  os.write("SPDE", 4);
  put_le<std::uint32_t>(os, a.version);
  put_le<std::uint32_t>(os, std::uint32_t(a.dims.size()));
  for (auto d : a.dims) put_le<std::uint64_t>(os, d);
  if constexpr (std::endian::native == std::endian::little)
    os.write(reinterpret_cast<const char*>(a.data.data()), std::streamsize(a.data.size() * sizeof(double)));
  else
    for (double v : a.data) put_le<double>(os, v);
  if (!os) throw NumericalError("write to '" + path + "' failed");
}

BinaryArray read_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "SPDE", 4) != 0)
    throw ValidationError("'" + path + "': not an SPDE binary file");
  BinaryArray a;
  a.version = get_le<std::uint32_t>(is, path);
  if (a.version != 1) throw ValidationError("'" + path + "': unsupported version " + std::to_string(a.version));
  std::uint32_t rank = get_le<std::uint32_t>(is, path);
  if (rank > 16) throw ValidationError("'" + path + "': implausible rank");
  std::uint64_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    a.dims.push_back(get_le<std::uint64_t>(is, path));
    n *= a.dims.back();
  }
  a.data.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) a.data[i] = get_le<double>(is, path);
  return a;
}

// ---------------------------------------------------------------- runs

namespace {

std::string hex64(std::uint64_t v) {
  char b[17];
  std::snprintf(b, sizeof b, "%016llx", static_cast<unsigned long long>(v));
  return b;
}

std::string utc_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char b[32];
  std::strftime(b, sizeof b, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return b;
}

}  // namespace

RunFiles write_run(const std::string& dir, const SimulateConfig& cfg, const Ensemble& e, int threads) {
  fs::create_directories(dir);
  RunFiles files;
  const int d = cfg.sim.domain.dim();
  const long M = e.size();
  for (std::size_t t = 0; t < e.times.size(); ++t) {
    std::string name = "field_" + std::to_string(t) + ".csv";
    std::ofstream os(fs::path(dir) / name, std::ios::binary | std::ios::trunc);
    if (!os) throw ValidationError("cannot write '" + (fs::path(dir) / name).string() + "'");
    CsvWriter w(os);
    std::vector<std::string> head{"t"};
    for (int a = 0; a < d; ++a) head.push_back(d == 1 ? "x" : "x" + std::to_string(a + 1));
    for (const char* h : {"probe", "mean", "mean_se", "second_moment", "second_moment_se"}) head.push_back(h);
    w.header(head);
    const Eigen::MatrixXd& V = e.values[t];
    for (std::size_t p = 0; p < e.points.size(); ++p) {
      Eigen::ArrayXd u = V.col(long(p)).array();
      Eigen::ArrayXd u2 = u.square();
      double m1 = u.mean(), m2 = u2.mean();
      double se1 = M > 1 ? std::sqrt((u - m1).square().sum() / double(M - 1) / double(M)) : NAN;
      double se2 = M > 1 ? std::sqrt((u2 - m2).square().sum() / double(M - 1) / double(M)) : NAN;
      std::vector<double> row{e.times[t]};
      for (double c : e.points[p]) row.push_back(c);
      row.push_back(p < e.n_probes ? 1.0 : 0.0);
      for (double v : {m1, se1, m2, se2}) row.push_back(v);
      w.row(row);
    }
    files.csv.push_back(name);
  }
  if (cfg.write_raw) {
    BinaryArray a;
    a.dims = {e.times.size(), std::uint64_t(M), e.points.size()};
    a.data.reserve(a.dims[0] * a.dims[1] * a.dims[2]);
    for (const auto& V : e.values)
      for (long r = 0; r < M; ++r)
        for (long p = 0; p < V.cols(); ++p) a.data.push_back(V(r, p));
    files.raw = "trajectories.bin";
    write_binary((fs::path(dir) / files.raw).string(), a);
  }
  json meta = {{"schema", "spde.run/1"},
               {"config", to_json(cfg)},
               {"config_hash", hex64(e.seed == cfg.sim.seed ? e.config_hash : config_hash(cfg.sim))},
               {"seed", cfg.sim.seed},
               {"times", e.times},
               {"points", e.points.size()},
               {"probes", e.n_probes},
               {"trajectories_kept", M},
               {"rejected", e.rejected},
               {"negative_fraction", e.negative_fraction},
               {"threads", threads},
               {"created", utc_now()},
               {"fields", files.csv},
               {"raw", files.raw}};
  if (e.rejected > 0) meta["kept"] = e.kept;
  files.metadata = "metadata.json";
  std::ofstream os(fs::path(dir) / files.metadata, std::ios::binary | std::ios::trunc);
  os << meta.dump(2) << "\n";
  return files;
}

LoadedRun load_run(const std::string& dir) {
  LoadedRun r;
  fs::path root(dir);
  json meta = read_json_file((root / "metadata.json").string());
  if (!meta.is_object() || !meta.contains("config"))
    throw ValidationError("'" + dir + "': metadata.json has no config");
  r.config = simulate_config_from_json(meta.at("config"), "/config");
  std::string raw = meta.value("raw", std::string());
  if (raw.empty()) throw ValidationError("'" + dir + "': run has no raw trajectories (set write_raw)");
  BinaryArray a = read_binary((root / raw).string());
  Ensemble& e = r.ensemble;
  const SimConfig& s = r.config.sim;
  e.times = meta.at("times").get<std::vector<double>>();
  e.points = s.probes;
  e.n_probes = s.probes.size();
  if (s.record_grid) {
    auto g = make_grid(s.domain, s.n_space);
    e.points.insert(e.points.end(), g.centers.begin(), g.centers.end());
  }
  if (a.dims.size() != 3 || a.dims[0] != e.times.size() || a.dims[2] != e.points.size())
    throw ValidationError("'" + dir + "': raw trajectories do not match the configuration");
  const long M = long(a.dims[1]), P = long(a.dims[2]);
  std::size_t k = 0;
  for (std::size_t t = 0; t < e.times.size(); ++t) {
    Eigen::MatrixXd V(M, P);
    for (long i = 0; i < M; ++i)
      for (long p = 0; p < P; ++p) V(i, p) = a.data[k++];
    e.values.push_back(std::move(V));
  }
  if (meta.contains("kept"))
    e.kept = meta.at("kept").get<std::vector<long>>();
  else
    for (long i = 0; i < M; ++i) e.kept.push_back(i);
  e.rejected = meta.value("rejected", 0L);
  e.negative_fraction = meta.value("negative_fraction", 0.0);
  e.seed = s.seed;
  e.config_hash = config_hash(s);
  return r;
}

}  // namespace spde
