#include "cli_config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <type_traits>

#define TOML_FLOAT_CHARCONV 1  // shortest round-trip floats in dumps
#define TOML_ENABLE_FORMATTERS 1
#include "tomlplusplus/toml.hpp"

namespace statprec::cli {

namespace {

// Rounded so that values entered in degrees print back unchanged.
double rad_to_deg(double rad) { return std::round(rad * 180.0 / kPi * 1e9) / 1e9; }

// Reads typed keys out of one table and remembers which ones were consumed.
class Section {
 public:
  Section(const toml::table& table, std::string name, std::string source)
      : table_(table), name_(std::move(name)), source_(std::move(source)) {}

  const toml::node* find(const char* key) {
    seen_.insert(key);
    return table_.get(key);
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(source_ + ": " + name_ + "." + key + ": " + what);
  }

  void get(const char* key, double& out) {
    if (const auto* n = find(key)) out = number(*n, key);
  }
  void get(const char* key, int& out) {
    if (const auto* n = find(key)) out = integer(*n, key);
  }
  template <class T>
    requires std::is_unsigned_v<T>
  void get(const char* key, T& out) {
    if (const auto* n = find(key)) {
      const auto v = wide_integer(*n, key);
      if (v < 0) fail(key, "must be >= 0");
      out = static_cast<T>(v);
    }
  }
  void get(const char* key, bool& out) {
    if (const auto* n = find(key)) {
      if (!n->is_boolean()) fail(key, "expected a boolean");
      out = n->as_boolean()->get();
    }
  }
  void get(const char* key, std::string& out) {
    if (const auto* n = find(key)) out = string(*n, key);
  }
  void get(const char* key, std::vector<double>& out) {
    if (const auto* n = find(key)) out = list<double>(*n, key, [&](const toml::node& e) { return number(e, key); });
  }
  void get(const char* key, std::vector<int>& out) {
    if (const auto* n = find(key)) out = list<int>(*n, key, [&](const toml::node& e) { return integer(e, key); });
  }
  void get(const char* key, std::vector<std::string>& out) {
    if (const auto* n = find(key))
      out = list<std::string>(*n, key, [&](const toml::node& e) { return string(e, key); });
  }

  void degrees(const char* key, double& radians) {
    double deg = rad_to_deg(radians);
    if (find(key)) {
      get(key, deg);
      radians = deg_to_rad(deg);
    }
  }

  void reject_unknown() const {
    for (const auto& [k, v] : table_)
      if (!seen_.count(std::string(k.str())))
        throw ConfigError(source_ + ": unknown key '" + name_ + "." + std::string(k.str()) + "'");
  }

 private:
  double number(const toml::node& n, const std::string& key) const {
    if (n.is_integer()) return static_cast<double>(n.as_integer()->get());
    if (n.is_floating_point()) return n.as_floating_point()->get();
    fail(key, "expected a number");
  }
  std::int64_t wide_integer(const toml::node& n, const std::string& key) const {
    if (!n.is_integer()) fail(key, "expected an integer");
    return n.as_integer()->get();
  }
  int integer(const toml::node& n, const std::string& key) const {
    const auto v = wide_integer(n, key);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
      fail(key, "out of range");
    return static_cast<int>(v);
  }
  std::string string(const toml::node& n, const std::string& key) const {
    if (!n.is_string()) fail(key, "expected a string");
    return n.as_string()->get();
  }
  template <class T, class F>
  std::vector<T> list(const toml::node& n, const std::string& key, F element) const {
    std::vector<T> out;
    if (const auto* arr = n.as_array()) {
      for (const auto& e : *arr) out.push_back(element(e));
      if (out.empty()) fail(key, "must not be empty");
    } else {
      out.push_back(element(n));
    }
    return out;
  }

  const toml::table& table_;
  std::string name_;
  std::string source_;
  std::set<std::string> seen_;
};

const toml::table& subtable(const toml::table& root, const std::string& name,
                            const std::string& source) {
  static const toml::table empty;
  const toml::node* n = root.get(name);
  if (!n) return empty;
  if (!n->is_table()) throw ConfigError(source + ": '" + name + "' must be a table");
  return *n->as_table();
}

std::string update_name(SpectralUpdate u) {
  return u == SpectralUpdate::kLatentSpectrum ? "latent" : "projection";
}

std::string selection_name(PilotSelection s) {
  return s == PilotSelection::kLowestIndex ? "lowest" : "equispaced";
}

}  // namespace

int CliConfig::training_users() const {
  return gnn.users > 0 ? gnn.users : *std::max_element(system.users.begin(), system.users.end());
}

int CliConfig::training_pilots() const {
  return gnn.pilots > 0 ? gnn.pilots : system.pilots.front();
}

std::vector<std::string> preset_names() { return {"full", "fig2", "fig3a", "fig3b", "desk"}; }

CliConfig preset_config(const std::string& name) {
  CliConfig c;
  c.preset = name;
  // "full": N = 64 ULA, B = 6, n_p = 16, J = 16, SNR 10 dB, full dataset sizes.
  if (name == "full") return c;
  if (name == "fig2") {
    c.system.users = {2, 4, 6, 8, 10, 12, 14, 16};
    return c;
  }
  if (name == "fig3a" || name == "fig3b") {
    c.system.snr_db = {0.0, 5.0, 10.0, 15.0, 20.0};
    c.system.pilots = {name == "fig3a" ? 8 : 16};
    return c;
  }
  if (name == "desk") {
    c.system.geometry = ArrayGeometry::ula(16);
    c.system.users = {4};
    c.system.bits = 4;
    c.system.pilots = {4, 8};
    c.system.snr_db = {0.0, 5.0, 10.0, 15.0, 20.0};
    c.system.d_train = 400;
    c.system.d_val = 100;
    c.system.d_test = 200;
    c.system.m_gmm = 20000;
    c.gnn.hidden_layers = 3;
    c.gnn.width = 64;
    c.gnn.epochs = 100;
    c.gnn.batch_size = 10;  // 400 scenarios: keeps enough Adam steps per epoch
    return c;
  }
  std::string valid;
  for (const auto& p : preset_names()) valid += (valid.empty() ? "" : ", ") + p;
  throw ConfigError("unknown preset '" + name + "' (valid: " + valid + ")");
}

void apply_toml(CliConfig& c, const std::string& text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": "
       << e.description();
    throw ConfigError(os.str());
  }
  static const std::set<std::string> sections = {"system", "channel", "data", "gmm", "gnn",
                                                 "evaluate"};
  for (const auto& [k, v] : root)
    if (!sections.count(std::string(k.str())))
      throw ConfigError(source + ": unknown section or key '" + std::string(k.str()) + "'");

  {
    Section s(subtable(root, "system", source), "system", source);
    std::string geometry = format_geometry(c.system.geometry);
    s.get("geometry", geometry);
    try {
      c.system.geometry = parse_geometry(geometry);
    } catch (const std::invalid_argument& e) {
      s.fail("geometry", e.what());
    }
    s.get("rho", c.system.rho);
    s.get("snr_db", c.system.snr_db);
    s.get("pilots", c.system.pilots);
    s.get("bits", c.system.bits);
    s.get("users", c.system.users);
    s.get("seed", c.system.seed);
    s.get("iwmmse_tol", c.system.iwmmse_tol);
    std::string selection = selection_name(c.system.pilot_selection);
    s.get("pilot_selection", selection);
    if (selection == "lowest")
      c.system.pilot_selection = PilotSelection::kLowestIndex;
    else if (selection == "equispaced")
      c.system.pilot_selection = PilotSelection::kEquispaced;
    else
      s.fail("pilot_selection", "expected \"lowest\" or \"equispaced\"");
    s.reject_unknown();
  }
  {
    Section s(subtable(root, "channel", source), "channel", source);
    s.degrees("angular_spread_deg", c.system.channel.angular_spread);
    s.degrees("azimuth_range_deg", c.system.channel.azimuth_range);
    s.degrees("elevation_range_deg", c.system.channel.elevation_range);
    s.get("grid_size", c.system.channel.grid_size);
    s.reject_unknown();
  }
  {
    Section s(subtable(root, "data", source), "data", source);
    s.get("d_train", c.system.d_train);
    s.get("d_val", c.system.d_val);
    s.get("d_test", c.system.d_test);
    s.get("m_gmm", c.system.m_gmm);
    s.reject_unknown();
  }
  {
    Section s(subtable(root, "gmm", source), "gmm", source);
    s.get("max_iters", c.gmm.max_iters);
    s.get("tol", c.gmm.tol);
    s.get("floor_rel", c.gmm.floor_rel);
    std::string update = update_name(c.gmm.update);
    s.get("update", update);
    if (update == "latent")
      c.gmm.update = SpectralUpdate::kLatentSpectrum;
    else if (update == "projection")
      c.gmm.update = SpectralUpdate::kProjection;
    else
      s.fail("update", "expected \"latent\" or \"projection\"");
    s.reject_unknown();
  }
  {
    Section s(subtable(root, "gnn", source), "gnn", source);
    s.get("hidden_layers", c.gnn.hidden_layers);
    s.get("width", c.gnn.width);
    s.get("beta", c.gnn.beta);
    s.get("epochs", c.gnn.epochs);
    s.get("batch_size", c.gnn.batch_size);
    s.get("learning_rate", c.gnn.learning_rate);
    s.get("snr_min_db", c.gnn.snr_min_db);
    s.get("snr_max_db", c.gnn.snr_max_db);
    s.get("users", c.gnn.users);
    s.get("pilots", c.gnn.pilots);
    s.reject_unknown();
  }
  {
    Section s(subtable(root, "evaluate", source), "evaluate", source);
    s.get("methods", c.eval.methods);
    s.get("iterations", c.eval.iterations);
    s.get("include_timing", c.eval.include_timing);
    s.get("report", c.eval.report);
    s.reject_unknown();
  }
}

void apply_toml_file(CliConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  apply_toml(config, text.str(), path);
}

std::string dump_toml(const CliConfig& c) {
  auto array_of = [](const auto& values) {
    toml::array a;
    for (const auto& v : values) a.push_back(v);
    return a;
  };
  toml::table root{
      {"system",
       toml::table{{"geometry", format_geometry(c.system.geometry)},
                   {"rho", c.system.rho},
                   {"snr_db", array_of(c.system.snr_db)},
                   {"pilots", array_of(c.system.pilots)},
                   {"bits", c.system.bits},
                   {"users", array_of(c.system.users)},
                   {"seed", static_cast<std::int64_t>(c.system.seed)},
                   {"pilot_selection", selection_name(c.system.pilot_selection)},
                   {"iwmmse_tol", c.system.iwmmse_tol}}},
      {"channel",
       toml::table{{"angular_spread_deg", rad_to_deg(c.system.channel.angular_spread)},
                   {"azimuth_range_deg", rad_to_deg(c.system.channel.azimuth_range)},
                   {"elevation_range_deg", rad_to_deg(c.system.channel.elevation_range)},
                   {"grid_size", c.system.channel.grid_size}}},
      {"data", toml::table{{"d_train", static_cast<std::int64_t>(c.system.d_train)},
                           {"d_val", static_cast<std::int64_t>(c.system.d_val)},
                           {"d_test", static_cast<std::int64_t>(c.system.d_test)},
                           {"m_gmm", static_cast<std::int64_t>(c.system.m_gmm)}}},
      {"gmm", toml::table{{"max_iters", c.gmm.max_iters},
                          {"tol", c.gmm.tol},
                          {"floor_rel", c.gmm.floor_rel},
                          {"update", update_name(c.gmm.update)}}},
      {"gnn", toml::table{{"hidden_layers", c.gnn.hidden_layers},
                          {"width", c.gnn.width},
                          {"beta", c.gnn.beta},
                          {"epochs", c.gnn.epochs},
                          {"batch_size", c.gnn.batch_size},
                          {"learning_rate", c.gnn.learning_rate},
                          {"snr_min_db", c.gnn.snr_min_db},
                          {"snr_max_db", c.gnn.snr_max_db},
                          {"users", c.gnn.users},
                          {"pilots", c.gnn.pilots}}},
      {"evaluate", toml::table{{"methods", array_of(c.eval.methods)},
                               {"iterations", c.eval.iterations},
                               {"include_timing", c.eval.include_timing},
                               {"report", c.eval.report}}},
  };
  if (c.eval.methods.empty()) root["evaluate"].as_table()->erase("methods");  // absent means all
  std::ostringstream os;
  os << root << "\n";
  return os.str();
}

std::vector<MethodSpec> resolve_methods(const CliConfig& c) {
  const std::vector<std::string> names = c.eval.methods.empty() ? method_names() : c.eval.methods;
  std::vector<MethodSpec> out;
  for (const auto& n : names) {
    MethodSpec m;
    try {
      m = MethodSpec::parse(n);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    // An explicit "@I" suffix wins over the configured default cap.
    if (m.iterative() && n.find('@') == std::string::npos) m.max_iters = c.eval.iterations;
    if (std::find(out.begin(), out.end(), m) != out.end())
      throw ConfigError("method '" + n + "' listed twice");
    out.push_back(m);
  }
  return out;
}

void validate(const CliConfig& c) {
  try {
    c.system.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid system config: ") + e.what());
  }
  const auto& g = c.gnn;
  if (g.hidden_layers < 0 || g.width < 1) throw ConfigError("gnn: bad network shape");
  if (g.epochs < 1 || g.batch_size < 1) throw ConfigError("gnn: epochs and batch_size must be >= 1");
  if (!(g.learning_rate > 0.0)) throw ConfigError("gnn: learning_rate must be positive");
  if (!(g.beta >= 0.0)) throw ConfigError("gnn: beta must be >= 0");
  if (!std::isfinite(g.snr_min_db) || !std::isfinite(g.snr_max_db) || g.snr_max_db < g.snr_min_db)
    throw ConfigError("gnn: bad training SNR range");
  if (g.users < 0) throw ConfigError("gnn: users must be >= 0");
  if (g.pilots < 0 || g.pilots > c.system.geometry.antennas())
    throw ConfigError("gnn: pilots outside [0, N]");
  if (c.gmm.max_iters < 0 || !(c.gmm.tol >= 0.0) || !(c.gmm.floor_rel > 0.0))
    throw ConfigError("gmm: bad EM settings");
  if (c.eval.iterations < 1) throw ConfigError("evaluate: iterations must be >= 1");
  if (c.eval.report.empty()) throw ConfigError("evaluate: report name is empty");
  resolve_methods(c);
}

}  // namespace statprec::cli
