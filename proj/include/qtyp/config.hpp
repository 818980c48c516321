#pragma once

// Experiment configuration: a versioned JSON document parsed with
// field-level diagnostics. Every error names the offending field path.

#include "qtyp/ensembles.hpp"
#include "qtyp/typicality.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <set>

namespace qtyp {

inline constexpr int kConfigSchemaVersion = 1;

enum class Mode { Speckle, Concentration, Scaling, GradientCheck, PoincareCheck };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Speckle: return "speckle";
    case Mode::Concentration: return "concentration";
    case Mode::Scaling: return "scaling";
    case Mode::GradientCheck: return "gradient-check";
    case Mode::PoincareCheck: return "poincare-check";
  }
  return "?";
}

inline std::optional<Mode> parse_mode(std::string_view s) {
  for (Mode m : {Mode::Speckle, Mode::Concentration, Mode::Scaling, Mode::GradientCheck,
                 Mode::PoincareCheck}) {
    if (s == to_string(m)) return m;
  }
  return std::nullopt;
}

/// Thrown with every problem found, one "field: message" line each.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> issues)
      : std::invalid_argument(join(issues)), issues_(std::move(issues)) {}
  const std::vector<std::string>& issues() const noexcept { return issues_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "invalid config";
    for (const auto& s : v) out += "\n  " + s;
    return out;
  }
  std::vector<std::string> issues_;
};

struct SystemConfig {
  Index dim_s = 2;
  double delta = 1.0;                              // used when spectrum_s is absent
  std::optional<std::vector<double>> spectrum_s;
  Index dim_e = 500;
  double sigma_e = 1.0;
  double epsilon_e = -1.27;
  Index initial_system_level = 1;

  RealVector system_levels() const {
    if (spectrum_s) return Eigen::Map<const RealVector>(spectrum_s->data(), Index(spectrum_s->size()));
    RealVector s = RealVector::Zero(dim_s);
    for (Index k = 0; k < dim_s; ++k) s(k) = delta * double(k);
    return s;
  }
  SystemTemplate system_template() const {
    return SystemTemplate{system_levels(), sigma_e, epsilon_e, initial_system_level};
  }
};

struct EnsembleConfig {
  EnsembleKind kind = EnsembleKind::Wigner;
  Symmetry symmetry = Symmetry::ComplexHermitian;
  double sigma_w = 0.2;
  Normalization normalization = Normalization::Exact;
  std::optional<Band> band;
  std::optional<std::vector<double>> spectrum;  // RRM; absent means semicircle

  EnsembleSpec spec(Index dim) const {
    EnsembleSpec s;
    s.kind = kind;
    s.symmetry = symmetry;
    s.dim = dim;
    s.sigma_w = sigma_w;
    s.normalization = normalization;
    s.band = band;
    if (kind == EnsembleKind::Rrm) s.fixed_spectrum = spectrum ? *spectrum : semicircle_spectrum(dim, sigma_w);
    return s;
  }
};

struct TimeGridConfig {
  double t_max = 10.0;
  Index n_points = 400;
};

struct ScalingConfig {
  std::vector<Index> dims_e;
  double t = 5.0;
};

struct ConcentrationConfig {
  std::vector<double> times;  // extra grid points reported in the summary
};

struct GradientConfig {
  std::vector<Index> dims_e{2, 4, 8};
  Index instances = 100;
  double tau_max = 10.0;
  double step_rel = 1e-5;
};

struct PoincareConfig {
  TestFunction function = TestFunction::Linear;
  Index n = 2000;
  double tau = 1.0;   // population test only
  Index level = 0;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  Mode mode = Mode::Speckle;
  SystemConfig system;
  EnsembleConfig ensemble;
  TimeGridConfig times;
  std::optional<TimeWindow> window;
  Index n_realizations = 2;
  std::uint64_t master_seed = 1;
  unsigned workers = 1;
  std::string output_dir = "out";
  ScalingConfig scaling;
  ConcentrationConfig concentration;
  GradientConfig gradient;
  PoincareConfig poincare;

  Index dim() const { return system.dim_s * system.dim_e; }
};

// ---------------------------------------------------------------------------
// Reading

namespace detail {

using json = nlohmann::ordered_json;

class Reader {
 public:
  std::vector<std::string> issues;

  void fail(const std::string& path, const std::string& msg) { issues.push_back(path + ": " + msg); }

  // Reports keys of `obj` not listed in `known`.
  void only(const json& obj, const std::string& path, std::initializer_list<const char*> known) {
    const std::set<std::string> k(known.begin(), known.end());
    for (const auto& [key, _] : obj.items()) {
      if (!k.count(key)) fail(join(path, key), "unknown field");
    }
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  template <class T>
  void number(const json& obj, const std::string& path, const char* key, T& out, bool required = false) {
    const std::string p = join(path, key);
    if (!obj.contains(key)) {
      if (required) fail(p, "required field missing");
      return;
    }
    const json& v = obj.at(key);
    if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) return fail(p, "expected a number, got " + std::string(v.type_name()));
      out = v.get<T>();
      if (!std::isfinite(double(out))) fail(p, "must be finite");
    } else {
      if (!v.is_number_integer()) return fail(p, "expected an integer, got " + v.dump());
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned() || v.get<long long>() >= 0) {
          out = v.get<T>();
        } else {
          fail(p, "must be >= 0");
        }
      } else {
        out = v.get<T>();
      }
    }
  }

  void string(const json& obj, const std::string& path, const char* key, std::string& out,
              bool required = false) {
    const std::string p = join(path, key);
    if (!obj.contains(key)) {
      if (required) fail(p, "required field missing");
      return;
    }
    if (!obj.at(key).is_string()) return fail(p, "expected a string");
    out = obj.at(key).get<std::string>();
  }

  template <class T>
  bool list(const json& obj, const std::string& path, const char* key, std::vector<T>& out) {
    const std::string p = join(path, key);
    if (!obj.contains(key)) return false;
    const json& v = obj.at(key);
    if (!v.is_array()) {
      fail(p, "expected an array");
      return false;
    }
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const bool ok = std::is_floating_point_v<T> ? v[i].is_number() : v[i].is_number_integer();
      if (!ok) {
        fail(p + "[" + std::to_string(i) + "]", "expected a number");
        return false;
      }
      out.push_back(v[i].get<T>());
    }
    return true;
  }

  const json* object(const json& obj, const std::string& path, const char* key, bool required) {
    if (!obj.contains(key)) {
      if (required) fail(join(path, key), "required section missing");
      return nullptr;
    }
    if (!obj.at(key).is_object()) {
      fail(join(path, key), "expected an object");
      return nullptr;
    }
    return &obj.at(key);
  }
};

inline void read_system(Reader& r, const json& j, SystemConfig& s) {
  const std::string p = "system";
  r.only(j, p, {"dim_s", "delta", "spectrum_s", "dim_e", "sigma_e", "epsilon_e", "initial_system_level"});
  r.number(j, p, "dim_s", s.dim_s);
  r.number(j, p, "delta", s.delta);
  std::vector<double> levels;
  if (r.list(j, p, "spectrum_s", levels)) {
    if (j.contains("delta")) r.fail("system.delta", "give either delta or spectrum_s, not both");
    if (j.contains("dim_s") && Index(levels.size()) != s.dim_s) {
      r.fail("system.spectrum_s", "length " + std::to_string(levels.size()) + " != dim_s " +
                                      std::to_string(s.dim_s));
    }
    s.dim_s = Index(levels.size());
    s.spectrum_s = levels;
  }
  r.number(j, p, "dim_e", s.dim_e, true);
  r.number(j, p, "sigma_e", s.sigma_e);
  r.number(j, p, "epsilon_e", s.epsilon_e);
  r.number(j, p, "initial_system_level", s.initial_system_level);
}

template <class E>
bool read_enum(Reader& r, const json& j, const std::string& p, const char* key, E& out,
               std::initializer_list<E> values) {
  std::string s;
  r.string(j, p, key, s);
  if (s.empty()) return false;
  std::string choices;
  for (E v : values) {
    if (s == to_string(v)) {
      out = v;
      return true;
    }
    choices += (choices.empty() ? "" : ", ") + std::string(to_string(v));
  }
  r.fail(Reader::join(p, key), "unknown value '" + s + "' (expected " + choices + ")");
  return false;
}

inline void read_ensemble(Reader& r, const json& j, EnsembleConfig& e) {
  const std::string p = "ensemble";
  r.only(j, p, {"kind", "symmetry", "sigma_w", "normalization", "band", "spectrum"});
  read_enum(r, j, p, "kind", e.kind, {EnsembleKind::Wigner, EnsembleKind::Wbrm, EnsembleKind::Rrm});
  read_enum(r, j, p, "symmetry", e.symmetry, {Symmetry::ComplexHermitian, Symmetry::RealSymmetric});
  read_enum(r, j, p, "normalization", e.normalization, {Normalization::Exact, Normalization::Expectation});
  r.number(j, p, "sigma_w", e.sigma_w, true);
  if (const json* b = r.object(j, p, "band", false)) {
    Band band;
    r.only(*b, "ensemble.band", {"profile", "width"});
    read_enum(r, *b, "ensemble.band", "profile", band.profile, {BandProfile::HardCutoff, BandProfile::Gaussian});
    r.number(*b, "ensemble.band", "width", band.width, true);
    e.band = band;
  }
  if (j.contains("spectrum")) {
    if (j.at("spectrum").is_string()) {
      if (j.at("spectrum").get<std::string>() != "semicircle") {
        r.fail("ensemble.spectrum", "expected \"semicircle\" or a list of levels");
      }
    } else {
      std::vector<double> d;
      if (r.list(j, p, "spectrum", d)) e.spectrum = d;
    }
  }
}

inline void read_window(Reader& r, const json& j, std::optional<TimeWindow>& w) {
  TimeWindow tw;
  r.only(j, "window", {"t_start", "t_end"});
  r.number(j, "window", "t_start", tw.t_start, true);
  r.number(j, "window", "t_end", tw.t_end, true);
  w = tw;
}

inline void read_modes(Reader& r, const json& j, ExperimentConfig& c) {
  if (const json* s = r.object(j, "", "scaling", c.mode == Mode::Scaling)) {
    r.only(*s, "scaling", {"dims_e", "t"});
    if (!r.list(*s, "scaling", "dims_e", c.scaling.dims_e) && c.mode == Mode::Scaling) {
      r.fail("scaling.dims_e", "required field missing");
    }
    r.number(*s, "scaling", "t", c.scaling.t, c.mode == Mode::Scaling);
  }
  if (const json* s = r.object(j, "", "concentration", false)) {
    r.only(*s, "concentration", {"times"});
    r.list(*s, "concentration", "times", c.concentration.times);
  }
  if (const json* s = r.object(j, "", "gradient", false)) {
    r.only(*s, "gradient", {"dims_e", "instances", "tau_max", "step_rel"});
    r.list(*s, "gradient", "dims_e", c.gradient.dims_e);
    r.number(*s, "gradient", "instances", c.gradient.instances);
    r.number(*s, "gradient", "tau_max", c.gradient.tau_max);
    r.number(*s, "gradient", "step_rel", c.gradient.step_rel);
  }
  if (const json* s = r.object(j, "", "poincare", c.mode == Mode::PoincareCheck)) {
    r.only(*s, "poincare", {"function", "n", "tau", "level"});
    std::string f;
    r.string(*s, "poincare", "function", f, c.mode == Mode::PoincareCheck);
    if (!f.empty()) {
      try {
        c.poincare.function = parse_test_function(f);
      } catch (const std::invalid_argument& e) {
        r.fail("poincare.function", e.what());
      }
    }
    r.number(*s, "poincare", "n", c.poincare.n);
    r.number(*s, "poincare", "tau", c.poincare.tau);
    r.number(*s, "poincare", "level", c.poincare.level);
  }
}

// Semantic checks on a structurally parsed config.
inline void check(Reader& r, const ExperimentConfig& c) {
  const auto& s = c.system;
  if (s.dim_s < 1) r.fail("system.dim_s", "must be >= 1");
  if (s.dim_e < 1) r.fail("system.dim_e", "must be >= 1");
  if (!(s.sigma_e > 0.0)) r.fail("system.sigma_e", "must be > 0");
  if (s.initial_system_level < 0 || s.initial_system_level >= s.dim_s) {
    r.fail("system.initial_system_level", "must lie in [0, dim_s)");
  }
  if (s.dim_s >= 1 && s.dim_e >= 1) {
    const double dim = double(s.dim_s) * double(s.dim_e);
    if (dim > double(kMaxDenseDim)) {
      std::ostringstream msg;
      msg << "dim H = " << dim << " exceeds the dense limit " << kMaxDenseDim
          << "; one dense complex matrix alone needs dim^2 * 16 bytes = " << dim * dim * 16.0 / 1e9
          << " GB";
      r.fail("system.dim_e", msg.str());
    }
  }
  if (!(c.ensemble.sigma_w > 0.0)) r.fail("ensemble.sigma_w", "must be > 0");
  if (c.ensemble.kind == EnsembleKind::Wbrm && !c.ensemble.band) {
    r.fail("ensemble.band", "required for kind=wbrm");
  }
  if (c.ensemble.band && c.ensemble.band->width < 1) r.fail("ensemble.band.width", "must be >= 1");
  if (c.ensemble.kind != EnsembleKind::Wbrm && c.ensemble.band) {
    r.fail("ensemble.band", "only valid for kind=wbrm");
  }
  if (c.ensemble.spectrum && c.ensemble.kind != EnsembleKind::Rrm) {
    r.fail("ensemble.spectrum", "only valid for kind=rrm");
  }
  if (c.ensemble.kind == EnsembleKind::Rrm && c.ensemble.spectrum) {
    if (c.mode == Mode::Scaling || c.mode == Mode::GradientCheck) {
      r.fail("ensemble.spectrum", "an explicit spectrum cannot follow a varying dim_e; use \"semicircle\"");
    } else if (Index(c.ensemble.spectrum->size()) != c.dim()) {
      r.fail("ensemble.spectrum", "length " + std::to_string(c.ensemble.spectrum->size()) +
                                      " != dim_s * dim_e = " + std::to_string(c.dim()));
    } else {
      try {
        c.ensemble.spec(c.dim()).validate();
      } catch (const SpecError& e) {
        r.fail("ensemble.spectrum", e.what());
      }
    }
  }
  if (!(c.times.t_max > 0.0)) r.fail("times.t_max", "must be > 0");
  if (c.times.n_points < 2) r.fail("times.n_points", "must be >= 2");
  if (c.window) {
    if (!(c.window->t_start >= 0.0 && c.window->t_start < c.window->t_end && c.window->t_end <= c.times.t_max)) {
      r.fail("window", "need 0 <= t_start < t_end <= times.t_max");
    }
  }
  if (c.n_realizations < 1) r.fail("n_realizations", "must be >= 1");
  if ((c.mode == Mode::Concentration || c.mode == Mode::Scaling) && c.n_realizations < 2) {
    r.fail("n_realizations", "mode " + std::string(to_string(c.mode)) +
                                 " estimates a variance and needs at least 2 realizations");
  }
  if (c.workers < 1) r.fail("workers", "must be >= 1");
  if (c.output_dir.empty()) r.fail("output_dir", "must not be empty");

  for (double t : c.concentration.times) {
    if (!(t >= 0.0 && t <= c.times.t_max)) r.fail("concentration.times", "entries must lie in [0, t_max]");
  }
  if (c.mode == Mode::Scaling) {
    if (c.scaling.dims_e.empty()) r.fail("scaling.dims_e", "must not be empty");
    for (std::size_t k = 0; k < c.scaling.dims_e.size(); ++k) {
      const Index d = c.scaling.dims_e[k];
      if (d < 1) r.fail("scaling.dims_e", "entries must be >= 1");
      if (k > 0 && d <= c.scaling.dims_e[k - 1]) r.fail("scaling.dims_e", "must be strictly ascending");
      if (double(d) * double(s.dim_s) > double(kMaxDenseDim)) {
        r.fail("scaling.dims_e", "dim_e = " + std::to_string(d) + " exceeds the dense limit");
      }
    }
    if (!(c.scaling.t >= 0.0 && c.scaling.t <= c.times.t_max)) r.fail("scaling.t", "must lie in [0, t_max]");
  }
  if (c.mode == Mode::GradientCheck) {
    if (c.gradient.dims_e.empty()) r.fail("gradient.dims_e", "must not be empty");
    const FiniteDifferenceOptions fd;
    for (Index d : c.gradient.dims_e) {
      if (d < 1 || d * s.dim_s > fd.max_dim) {
        r.fail("gradient.dims_e", "dim_s * dim_e must lie in [1, " + std::to_string(fd.max_dim) + "]");
      }
    }
    if (c.gradient.instances < 1) r.fail("gradient.instances", "must be >= 1");
    if (!(c.gradient.tau_max > 0.0)) r.fail("gradient.tau_max", "must be > 0");
    if (!(c.gradient.step_rel > 0.0)) r.fail("gradient.step_rel", "must be > 0");
  }
  if (c.mode == Mode::PoincareCheck) {
    if (c.poincare.n < 2) r.fail("poincare.n", "must be >= 2");
    if (c.poincare.level < 0 || c.poincare.level >= s.dim_s) r.fail("poincare.level", "must lie in [0, dim_s)");
    if (c.poincare.function == TestFunction::Population && c.dim() > 64) {
      r.fail("system.dim_e", "population test enumerates dim^2 directions; keep dim_s * dim_e <= 64");
    }
  }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::ordered_json& j) {
  detail::Reader r;
  ExperimentConfig c;
  if (!j.is_object()) throw ConfigError({"<root>: expected a JSON object"});
  r.only(j, "", {"schema_version", "mode", "system", "ensemble", "times", "window", "n_realizations",
                 "master_seed", "workers", "output_dir", "scaling", "concentration", "gradient",
                 "poincare", "description"});
  r.number(j, "", "schema_version", c.schema_version, true);
  if (j.contains("schema_version") && c.schema_version != kConfigSchemaVersion) {
    r.fail("schema_version", "unsupported version " + std::to_string(c.schema_version) +
                                 " (this build reads " + std::to_string(kConfigSchemaVersion) + ")");
  }
  std::string mode;
  r.string(j, "", "mode", mode, true);
  if (!mode.empty()) {
    if (auto m = parse_mode(mode)) {
      c.mode = *m;
    } else {
      r.fail("mode", "unknown mode '" + mode +
                         "' (expected speckle, concentration, scaling, gradient-check or poincare-check)");
    }
  }
  if (const auto* s = r.object(j, "", "system", true)) detail::read_system(r, *s, c.system);
  if (const auto* e = r.object(j, "", "ensemble", true)) detail::read_ensemble(r, *e, c.ensemble);
  if (const auto* t = r.object(j, "", "times", false)) {
    r.only(*t, "times", {"t_max", "n_points"});
    r.number(*t, "times", "t_max", c.times.t_max, true);
    r.number(*t, "times", "n_points", c.times.n_points);
  }
  if (const auto* w = r.object(j, "", "window", false)) detail::read_window(r, *w, c.window);
  r.number(j, "", "n_realizations", c.n_realizations);
  r.number(j, "", "master_seed", c.master_seed);
  r.number(j, "", "workers", c.workers);
  r.string(j, "", "output_dir", c.output_dir);
  detail::read_modes(r, j, c);
  if (r.issues.empty()) detail::check(r, c);
  if (!r.issues.empty()) throw ConfigError(std::move(r.issues));
  return c;
}

/// Parses JSON text; syntax errors report line and column.
inline ExperimentConfig parse_config(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t k = 0; k + 1 < e.byte && k < text.size(); ++k) {
      if (text[k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError({"<parse> line " + std::to_string(line) + ", column " + std::to_string(col) +
                       ": " + e.what()});
  }
  return config_from_json(j);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"<file>: cannot open " + path.string()});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Writing (canonical form, also the input of the config hash)

inline nlohmann::ordered_json to_json(const EnsembleConfig& e) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(e.kind);
  j["symmetry"] = to_string(e.symmetry);
  j["sigma_w"] = e.sigma_w;
  j["normalization"] = to_string(e.normalization);
  if (e.band) j["band"] = {{"profile", to_string(e.band->profile)}, {"width", e.band->width}};
  if (e.kind == EnsembleKind::Rrm) {
    if (e.spectrum) {
      j["spectrum"] = *e.spectrum;
    } else {
      j["spectrum"] = "semicircle";
    }
  }
  return j;
}

inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["schema_version"] = c.schema_version;
  j["mode"] = to_string(c.mode);
  auto& s = j["system"];
  s["dim_s"] = c.system.dim_s;
  if (c.system.spectrum_s) {
    s["spectrum_s"] = *c.system.spectrum_s;
  } else {
    s["delta"] = c.system.delta;
  }
  s["dim_e"] = c.system.dim_e;
  s["sigma_e"] = c.system.sigma_e;
  s["epsilon_e"] = c.system.epsilon_e;
  s["initial_system_level"] = c.system.initial_system_level;
  j["ensemble"] = to_json(c.ensemble);
  j["times"] = {{"t_max", c.times.t_max}, {"n_points", c.times.n_points}};
  if (c.window) j["window"] = {{"t_start", c.window->t_start}, {"t_end", c.window->t_end}};
  j["n_realizations"] = c.n_realizations;
  j["master_seed"] = c.master_seed;
  j["workers"] = c.workers;
  j["output_dir"] = c.output_dir;
  switch (c.mode) {
    case Mode::Scaling: j["scaling"] = {{"dims_e", c.scaling.dims_e}, {"t", c.scaling.t}}; break;
    case Mode::Concentration: j["concentration"] = {{"times", c.concentration.times}}; break;
    case Mode::GradientCheck:
      j["gradient"] = {{"dims_e", c.gradient.dims_e},
                       {"instances", c.gradient.instances},
                       {"tau_max", c.gradient.tau_max},
                       {"step_rel", c.gradient.step_rel}};
      break;
    case Mode::PoincareCheck:
      j["poincare"] = {{"function", to_string(c.poincare.function)},
                       {"n", c.poincare.n},
                       {"tau", c.poincare.tau},
                       {"level", c.poincare.level}};
      break;
    case Mode::Speckle: break;
  }
  return j;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Hash of the canonical config with the run-local fields (workers,
/// output_dir) removed, so it identifies the computation, not the run.
inline std::string config_hash(const ExperimentConfig& c) {
  auto j = to_json(c);
  j.erase("workers");
  j.erase("output_dir");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

// ---------------------------------------------------------------------------
// Validation report (schema already enforced by parsing)

struct ValidationReport {
  std::vector<std::string> warnings;
  double dim = 0.0;
  double matrix_bytes = 0.0;     // one dense complex dim x dim matrix
  double peak_bytes_estimate = 0.0;
};

inline ValidationReport validate_config(const ExperimentConfig& c) {
  ValidationReport rep;
  Index dim_e = c.system.dim_e;
  if (c.mode == Mode::Scaling && !c.scaling.dims_e.empty()) dim_e = c.scaling.dims_e.back();
  rep.dim = double(c.system.dim_s) * double(dim_e);
  rep.matrix_bytes = rep.dim * rep.dim * 16.0;
  // H, eigenvectors and solver workspace per worker.
  rep.peak_bytes_estimate = 3.0 * rep.matrix_bytes * double(std::max(1u, c.workers));

  const RealVector s = c.system.system_levels();
  const RealVector e = gaussian_environment_spectrum(dim_e, c.system.sigma_e);
  const double span = (s.maxCoeff() - s.minCoeff()) + (e.maxCoeff() - e.minCoeff());
  if (c.ensemble.sigma_w > 0.1 * span) {
    rep.warnings.push_back("ensemble.sigma_w = " + std::to_string(c.ensemble.sigma_w) +
                           " is not small against the spectral span " + std::to_string(span) +
                           " of H_s + H_e; weak-coupling intuition does not apply");
  }
  if (c.mode == Mode::Speckle || c.mode == Mode::Scaling) {
    if (!c.window && c.ensemble.sigma_w * c.times.t_max < kMinCouplingTimes) {
      rep.warnings.push_back("sigma_w * t_max = " + std::to_string(c.ensemble.sigma_w * c.times.t_max) +
                             " < " + std::to_string(kMinCouplingTimes) +
                             "; the default stationary window may still contain the transient");
    }
  }
  if (c.ensemble.kind == EnsembleKind::Wbrm && c.ensemble.band &&
      band_covers_everything(*c.ensemble.band, Index(rep.dim))) {
    rep.warnings.push_back("ensemble.band covers the whole matrix; samples equal Wigner samples");
  }
  if (rep.peak_bytes_estimate > 8e9) {
    rep.warnings.push_back("estimated peak memory " + std::to_string(rep.peak_bytes_estimate / 1e9) + " GB");
  }
  return rep;
}

}  // namespace qtyp
