#pragma once

// Experiment layer behind the command-line tool: JSON configuration with
// dotted-path overrides, CSV/JSON persistence and the seven commands.
//
// Every command takes a resolved ExperimentConfig and an output directory,
// writes its tables there and returns a process exit code
// (0 done, 2 configuration error, 3 numerical instability).  Configuration
// problems are thrown as ConfigError and mapped to 2 by the caller.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dampwave/blowup.hpp"
#include "dampwave/diagnostics.hpp"
#include "dampwave/diffusion.hpp"
#include "dampwave/feasibility.hpp"
#include "dampwave/model.hpp"
#include "dampwave/solver.hpp"
#include "dampwave/state.hpp"

namespace dampwave::lab {

using json = nlohmann::ordered_json;

enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_unstable = 3 };

// ---------------------------------------------------------------------------
// Configuration document

/// Every recognised key with its default.  null marks "unset / automatic".
inline const json& default_config() {
  static const json defaults = json::parse(R"({
    "model": {
      "n": 1,
      "damping": "scale_invariant",
      "mu": 2.0,
      "beta": 2.0,
      "p": 2.0,
      "nonlinearity": "abs_pow"
    },
    "data": {
      "profile": "polynomial_bump",
      "amplitude": 1.0,
      "r0": 1.0,
      "k": 3,
      "width": 0.5,
      "cutoff": 2.0,
      "u0_coef": 1.0,
      "u1_coef": 0.0
    },
    "grid": {"nr": null, "dr": null, "margin": 2.0, "r_max": null},
    "control": {
      "cfl": 0.5,
      "dt_floor": 1e-12,
      "blowup_threshold": null,
      "blowup_factor": 1e6,
      "refine_factor": 2.0,
      "monotone_window": 20
    },
    "horizon": 10.0,
    "snapshot_stride": 10,
    "weight": {"delta": "auto"},
    "outputs": {"csv_path": "run.csv", "summary_path": "summary.json"},
    "sweep": {
      "p_list": [],
      "mu_list": [],
      "bisect_steps": 6,
      "escalation_steps": 1,
      "escalation_factor": 2.0
    },
    "diffusion": {"times": [20, 40, 80]},
    "testfn": {"R_list": [8, 16, 32], "stride_fraction": 256},
    "feasibility": {
      "eps_list": [0.1, 0.05623413251903491, 0.03162277660168379,
                   0.01778279410038923, 0.01, 0.005623413251903491,
                   0.003162277660168379, 0.001778279410038923, 0.001]
    },
    "convergence": {"levels": [64, 128, 256, 512], "horizon": 1.0, "r_max": 4.0}
  })");
  return defaults;
}

namespace detail {

inline void merge_into(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) {
    throw ConfigError("config: '" + (path.empty() ? std::string("<root>") : path) +
                      "' must be an object");
  }
  for (const auto& [key, value] : user.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + full + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      merge_into(slot, value, full);
    } else {
      slot = value;
    }
  }
}

}  // namespace detail

/// Sets `path` (dot separated) inside `doc`, creating objects on the way.
inline void set_dotted(json& doc, std::string_view path, json value) {
  if (path.empty()) throw ConfigError("override: empty key");
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key(path.substr(start, dot - start));
    if (key.empty()) throw ConfigError("override: malformed key '" + std::string(path) + "'");
    if (!node->is_object()) node = &(*node = json::object());
    if (dot == std::string_view::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

/// "a.b=value"; the value is read as JSON when it parses, else as a string.
inline std::pair<std::string, json> parse_override(std::string_view text) {
  const std::size_t eq = text.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override: expected key=value, got '" + std::string(text) + "'");
  }
  const std::string key(text.substr(0, eq));
  const std::string raw(text.substr(eq + 1));
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  return {key, std::move(value)};
}

/// Defaults, then the user document, then the overrides in order.
inline json resolve_config(const json& user, const std::vector<std::string>& overrides = {}) {
  json patched = user.is_null() ? json::object() : user;
  for (const auto& o : overrides) {
    auto [key, value] = parse_override(o);
    set_dotted(patched, key, std::move(value));
  }
  json resolved = default_config();
  detail::merge_into(resolved, patched, "");
  return resolved;
}

inline json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  json doc = json::parse(in, nullptr, false, true);
  if (doc.is_discarded()) {
    throw ConfigError("config: '" + path.string() + "' is not valid JSON");
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Typed configuration

struct GridSettings {
  std::optional<int> nr;
  std::optional<double> dr;
  double margin = 2.0;
  std::optional<double> r_max;
};

struct SweepSettings {
  std::vector<double> p_list;
  std::vector<double> mu_list;
  int bisect_steps = 6;
  int escalation_steps = 1;
  double escalation_factor = 2.0;
};

struct TestfnSettings {
  std::vector<double> R_list;
  double stride_fraction = 256.0;
};

struct ConvergenceSettings {
  std::vector<int> levels;
  double horizon = 1.0;
  double r_max = 4.0;
};

struct ExperimentConfig {
  ModelSpec model;
  DataSpec data;
  GridSettings grid;
  StepControl control;
  double horizon = 10.0;
  int snapshot_stride = 10;
  std::optional<double> weight_delta;  // nullopt = automatic
  std::string csv_path;
  std::string summary_path;
  SweepSettings sweep;
  std::vector<double> diffusion_times;
  TestfnSettings testfn;
  std::vector<double> eps_list;
  ConvergenceSettings convergence;
  json echo;  // the resolved document
};

namespace detail {

inline const json& at(const json& doc, const std::string& path) {
  const json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    node = &node->at(path.substr(start, dot - start));
    if (dot == std::string::npos) return *node;
    start = dot + 1;
  }
}

inline double number(const json& doc, const std::string& path) {
  const json& v = at(doc, path);
  if (!v.is_number()) throw ConfigError("config: '" + path + "' must be a number");
  return v.get<double>();
}

inline std::optional<double> optional_number(const json& doc, const std::string& path) {
  if (at(doc, path).is_null()) return std::nullopt;
  return number(doc, path);
}

inline int integer(const json& doc, const std::string& path) {
  const json& v = at(doc, path);
  if (!v.is_number_integer()) throw ConfigError("config: '" + path + "' must be an integer");
  return v.get<int>();
}

inline std::string text(const json& doc, const std::string& path) {
  const json& v = at(doc, path);
  if (!v.is_string()) throw ConfigError("config: '" + path + "' must be a string");
  return v.get<std::string>();
}

inline std::vector<double> numbers(const json& doc, const std::string& path) {
  const json& v = at(doc, path);
  if (!v.is_array()) throw ConfigError("config: '" + path + "' must be an array");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw ConfigError("config: '" + path + "' must hold numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

inline Nonlinearity parse_nonlinearity(const std::string& s) {
  if (s == "abs_pow") return Nonlinearity::abs_pow;
  if (s == "signed_pow") return Nonlinearity::signed_pow;
  if (s == "neg_abs_pow") return Nonlinearity::neg_abs_pow;
  if (s == "none") return Nonlinearity::none;
  throw ConfigError("config: unknown nonlinearity '" + s + "'");
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& resolved) {
  using namespace detail;
  ExperimentConfig c;
  c.echo = resolved;

  c.model.n = integer(resolved, "model.n");
  const std::string damping = text(resolved, "model.damping");
  if (damping == "scale_invariant") {
    c.model.damping = ScaleInvariantDamping{number(resolved, "model.mu")};
  } else if (damping == "power_law") {
    c.model.damping = PowerLawDamping{number(resolved, "model.beta")};
  } else {
    throw ConfigError("config: model.damping must be scale_invariant or power_law");
  }
  c.model.p = number(resolved, "model.p");
  c.model.nonlinearity = parse_nonlinearity(text(resolved, "model.nonlinearity"));
  c.model.validate();

  const std::string profile = text(resolved, "data.profile");
  const double amplitude = number(resolved, "data.amplitude");
  if (profile == "polynomial_bump") {
    c.data.profile = PolynomialBump{amplitude, number(resolved, "data.r0"),
                                    integer(resolved, "data.k")};
  } else if (profile == "truncated_gaussian") {
    c.data.profile = TruncatedGaussian{amplitude, number(resolved, "data.width"),
                                       number(resolved, "data.cutoff")};
  } else {
    throw ConfigError("config: data.profile must be polynomial_bump or truncated_gaussian");
  }
  validate_profile(c.data.profile);
  c.data.u0_coef = number(resolved, "data.u0_coef");
  c.data.u1_coef = number(resolved, "data.u1_coef");

  if (!at(resolved, "grid.nr").is_null()) c.grid.nr = integer(resolved, "grid.nr");
  c.grid.dr = optional_number(resolved, "grid.dr");
  c.grid.margin = number(resolved, "grid.margin");
  c.grid.r_max = optional_number(resolved, "grid.r_max");
  if (c.grid.nr && c.grid.dr) throw ConfigError("config: give grid.nr or grid.dr, not both");
  if (c.grid.dr && !(*c.grid.dr > 0.0)) throw ConfigError("config: grid.dr must be positive");
  if (!(c.grid.margin >= 0.0)) throw ConfigError("config: grid.margin must be >= 0");

  c.control.cfl = number(resolved, "control.cfl");
  c.control.dt_floor = number(resolved, "control.dt_floor");
  c.control.blowup_threshold = optional_number(resolved, "control.blowup_threshold");
  c.control.blowup_factor = number(resolved, "control.blowup_factor");
  c.control.refine_factor = number(resolved, "control.refine_factor");
  c.control.monotone_window = integer(resolved, "control.monotone_window");
  c.control.validate();

  c.horizon = number(resolved, "horizon");
  if (!(c.horizon >= 0.0) || !std::isfinite(c.horizon)) {
    throw ConfigError("config: horizon must be finite and >= 0");
  }
  c.snapshot_stride = integer(resolved, "snapshot_stride");
  if (c.snapshot_stride < 1) throw ConfigError("config: snapshot_stride must be >= 1");

  const json& delta = at(resolved, "weight.delta");
  if (delta.is_string() && delta.get<std::string>() == "auto") {
    c.weight_delta.reset();
  } else if (delta.is_number() && delta.get<double>() > 0.0) {
    c.weight_delta = delta.get<double>();
  } else {
    throw ConfigError("config: weight.delta must be \"auto\" or a positive number");
  }

  c.csv_path = text(resolved, "outputs.csv_path");
  c.summary_path = text(resolved, "outputs.summary_path");

  c.sweep.p_list = numbers(resolved, "sweep.p_list");
  c.sweep.mu_list = numbers(resolved, "sweep.mu_list");
  c.sweep.bisect_steps = integer(resolved, "sweep.bisect_steps");
  c.sweep.escalation_steps = integer(resolved, "sweep.escalation_steps");
  c.sweep.escalation_factor = number(resolved, "sweep.escalation_factor");
  if (c.sweep.bisect_steps < 0) throw ConfigError("config: sweep.bisect_steps must be >= 0");
  if (c.sweep.escalation_steps < 1) {
    throw ConfigError("config: sweep.escalation_steps must be >= 1");
  }
  if (!(c.sweep.escalation_factor >= 1.0)) {
    throw ConfigError("config: sweep.escalation_factor must be >= 1");
  }

  c.diffusion_times = numbers(resolved, "diffusion.times");
  c.testfn.R_list = numbers(resolved, "testfn.R_list");
  c.testfn.stride_fraction = number(resolved, "testfn.stride_fraction");
  if (!(c.testfn.stride_fraction >= 64.0)) {
    throw ConfigError("config: testfn.stride_fraction must be >= 64");
  }
  c.eps_list = numbers(resolved, "feasibility.eps_list");

  for (double v : numbers(resolved, "convergence.levels")) {
    if (v != std::floor(v)) throw ConfigError("config: convergence.levels must be integers");
    c.convergence.levels.push_back(static_cast<int>(v));
  }
  c.convergence.horizon = number(resolved, "convergence.horizon");
  c.convergence.r_max = number(resolved, "convergence.r_max");
  return c;
}

inline ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                                    const std::vector<std::string>& overrides = {}) {
  const json user = path ? read_config_file(*path) : json::object();
  try {
    return parse_config(resolve_config(user, overrides));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

/// r_max = support + T + margin unless fixed; spacing from grid.dr, else
/// from grid.nr at the configured horizon, else 0.05.
inline RadialGrid resolve_grid(const ExperimentConfig& c, const Profile& profile,
                               double horizon) {
  const double support = support_radius(profile);
  const double r_max = c.grid.r_max.value_or(support + horizon + c.grid.margin);
  if (!(r_max > 0.0)) throw ConfigError("config: grid radius must be positive");
  if (c.grid.nr && horizon == c.horizon) return make_grid(r_max, *c.grid.nr);
  double dr = 0.05;
  if (c.grid.dr) {
    dr = *c.grid.dr;
  } else if (c.grid.nr) {
    dr = c.grid.r_max.value_or(support + c.horizon + c.grid.margin) / *c.grid.nr;
  }
  return make_grid(r_max, static_cast<int>(std::ceil(r_max / dr - 1e-9)));
}

struct ResolvedWeight {
  WeightSpec spec;
  bool enabled = true;
  std::string source;  // "config", "feasibility", "default" or "disabled"
  std::optional<double> eps;
};

/// δ from the config; "auto" takes the feasibility tuple when p > p_F and
/// δ = 1 otherwise.  Power-law damping has no weight.
inline ResolvedWeight resolve_weight(const ExperimentConfig& c, const ModelSpec& model) {
  const auto mu = model.mu();
  if (!mu) return ResolvedWeight{unit_weight(), false, "disabled", std::nullopt};
  if (c.weight_delta) return ResolvedWeight{make_weight(*mu, *c.weight_delta), true, "config", {}};
  if (model.p > fujita_exponent(model.n)) {
    const FeasibleParams f = solve_feasible(model.n, model.p);
    return ResolvedWeight{make_weight(*mu, f.delta), true, "feasibility", f.eps};
  }
  return ResolvedWeight{make_weight(*mu, 1.0), true, "default", std::nullopt};
}

// ---------------------------------------------------------------------------
// Output

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

using CsvCell = std::variant<std::monostate, double, long, std::string>;

/// RFC-4180 style: header row, comma separated, fields quoted only when they
/// contain a comma, quote or line break; numbers in shortest round-trip form.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : width_(header.size()) {
    std::vector<CsvCell> cells(header.begin(), header.end());
    append(cells);
  }

  void row(const std::vector<CsvCell>& cells) {
    if (cells.size() != width_) throw std::logic_error("csv: row width mismatch");
    append(cells);
  }

  [[nodiscard]] const std::string& str() const { return text_; }

 private:
  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
      if (ch == '"') out += '"';
      out += ch;
    }
    return out + "\"";
  }

  void append(const std::vector<CsvCell>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) text_ += ',';
      std::visit(
          [this](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, double>) {
              text_ += format_number(v);
            } else if constexpr (std::is_same_v<T, long>) {
              text_ += std::to_string(v);
            } else if constexpr (std::is_same_v<T, std::string>) {
              text_ += quote(v);
            }
          },
          cells[i]);
    }
    text_ += '\n';
  }

  std::size_t width_;
  std::string text_;
};

inline CsvCell cell(std::optional<double> v) {
  return v ? CsvCell{*v} : CsvCell{};
}

inline void write_text(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("output: cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw ConfigError("output: write failed for '" + path.string() + "'");
}

inline json number_or_null(std::optional<double> v) {
  return v && std::isfinite(*v) ? json(*v) : json(nullptr);
}

inline std::filesystem::path output_path(const std::filesystem::path& out_dir,
                                         const std::string& name) {
  const std::filesystem::path p(name);
  return p.is_absolute() ? p : out_dir / p;
}

// ---------------------------------------------------------------------------
// Single runs

struct Exponents {
  std::optional<double> l2;
  std::optional<double> weighted_l2;
  std::optional<double> weighted_energy;
  FitWindow window{1.0, 1.0};
  std::string note;
};

/// Fits over the last decade; a series that cannot be fitted (too short,
/// zero, non-positive) gets no exponent and an explanatory note.
inline Exponents fit_exponents(const RunRecord& rec, double horizon) {
  Exponents e;
  e.window = default_window(horizon);
  auto fit = [&](const std::vector<double>& series, const char* name) -> std::optional<double> {
    try {
      return fit_decay_rate(rec.times, series, e.window).exponent;
    } catch (const std::exception& ex) {
      if (!e.note.empty()) e.note += "; ";
      e.note += std::string(name) + ": " + ex.what();
      return std::nullopt;
    }
  };
  e.l2 = fit(rec.l2, "l2");
  e.weighted_l2 = fit(rec.weighted_l2, "weighted_l2");
  e.weighted_energy = fit(rec.weighted_energy, "weighted_energy");
  return e;
}

struct RunOutcome {
  RunRecord record;
  RadialGrid grid;
  ResolvedWeight weight;
  double data_sign = 0.0;
  double seconds = 0.0;
  double horizon = 0.0;
};

inline RunOutcome simulate(const ExperimentConfig& c, const ModelSpec& model,
                           const DataSpec& data, double horizon,
                           std::function<void(const SolutionState&)> on_step = {}) {
  RunOutcome out;
  out.horizon = horizon;
  out.grid = resolve_grid(c, data.profile, horizon);
  const InitialData init = sample_initial_data(data, out.grid);
  out.weight = resolve_weight(c, model);
  out.data_sign = data_sign_functional(init.u0, init.u1, out.grid, model.n,
                                       regime_for(model), model.mu().value_or(0.0));
  RunOptions opts;
  opts.stride = c.snapshot_stride;
  opts.weight = out.weight.spec;
  opts.on_step = std::move(on_step);
  const auto start = std::chrono::steady_clock::now();
  out.record = run(model, out.grid, init, c.control, horizon, opts);
  out.record.weight_enabled = out.weight.enabled;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

inline CsvTable run_table(const RunRecord& rec) {
  CsvTable t({"t", "l2", "weighted_l2", "weighted_energy", "supnorm"});
  for (std::size_t i = 0; i < rec.size(); ++i) {
    t.row({rec.times[i], rec.l2[i], rec.weighted_l2[i], rec.weighted_energy[i],
           rec.supnorm[i]});
  }
  return t;
}

inline json weight_json(const ResolvedWeight& w) {
  json j;
  j["enabled"] = w.enabled;
  j["source"] = w.source;
  j["delta"] = w.enabled ? json(w.spec.delta) : json(nullptr);
  j["a"] = w.spec.a;
  j["eps"] = number_or_null(w.eps);
  return j;
}

/// The run summary: config echo, resolved grid, status, t*, exponents
/// (only for completed runs), data sign functional and wall-clock time.
inline json run_summary(const ExperimentConfig& c, const RunOutcome& o) {
  json s;
  s["config"] = c.echo;
  s["grid"] = {{"r_max", o.grid.r_max}, {"nr", o.grid.nr}, {"dr", o.grid.dr}};
  s["weight"] = weight_json(o.weight);
  s["status"] = std::string(to_string(o.record.status));
  s["t_star"] = number_or_null(o.record.t_star);
  s["steps"] = o.record.steps;
  if (o.record.status == RunStatus::completed) {
    const Exponents e = fit_exponents(o.record, o.horizon);
    s["exponents"] = {{"l2", number_or_null(e.l2)},
                      {"weighted_l2", number_or_null(e.weighted_l2)},
                      {"weighted_energy", number_or_null(e.weighted_energy)},
                      {"window", {e.window.lo, e.window.hi}},
                      {"note", e.note}};
  }
  s["data_sign_functional"] = o.data_sign;
  s["wall_clock_seconds"] = o.seconds;
  return s;
}

struct Context {
  std::filesystem::path out_dir = ".";
  int jobs = 1;
  std::ostream* log = nullptr;

  void say(const std::string& line) const {
    if (log) *log << line << '\n';
  }
};

inline int cmd_run(const ExperimentConfig& c, const Context& ctx) {
  const RunOutcome o = simulate(c, c.model, c.data, c.horizon);
  write_text(output_path(ctx.out_dir, c.csv_path), run_table(o.record).str());
  write_text(output_path(ctx.out_dir, c.summary_path), run_summary(c, o).dump(2) + "\n");
  std::string line = "status=" + std::string(to_string(o.record.status));
  if (o.record.t_star) line += " t_star=" + format_number(*o.record.t_star);
  ctx.say(line);
  return o.record.status == RunStatus::unstable ? exit_unstable : exit_ok;
}

// ---------------------------------------------------------------------------
// Sweeps

/// Maps fn over [0, count) on up to `jobs` threads; results stay in index
/// order whatever the scheduling.
template <class Fn>
auto parallel_map(std::size_t count, int jobs, Fn&& fn) {
  using R = std::invoke_result_t<Fn&, std::size_t>;
  std::vector<std::optional<R>> slots(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) slots[i].emplace(fn(i));
  };
  const auto threads = static_cast<std::size_t>(std::max(1, jobs));
  if (threads == 1 || count <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < std::min(threads, count); ++k) pool.emplace_back(worker);
  }
  std::vector<R> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

enum class Verdict { blowup, global, inconclusive, unstable, error };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::blowup:
      return "blowup";
    case Verdict::global:
      return "global";
    case Verdict::inconclusive:
      return "inconclusive";
    case Verdict::unstable:
      return "unstable";
    case Verdict::error:
      return "error";
  }
  return "error";
}

struct LadderStep {
  int level = 0;
  double amplitude = 0.0;
  double horizon = 0.0;
  std::string status;
  std::optional<double> t_star;
  std::optional<double> weighted_l2_exponent;
};

struct SweepPoint {
  double param = 0.0;
  Verdict verdict = Verdict::error;
  std::vector<LadderStep> path;
  std::string message;
};

inline double amplitude_of(const Profile& p) {
  return std::visit([](const auto& pr) { return pr.amplitude; }, p);
}

inline Profile with_amplitude(Profile p, double a) {
  std::visit([a](auto& pr) { pr.amplitude = a; }, p);
  return p;
}

/// Climbs the (A, T) ladder A·f^k, T·f^k until blow-up, instability or the
/// last rung.  Completed runs count as global when the weighted L² exponent
/// is negative.
inline SweepPoint classify(const ExperimentConfig& c, const ModelSpec& model, double param) {
  SweepPoint pt;
  pt.param = param;
  try {
    model.validate();
    const double a0 = amplitude_of(c.data.profile);
    for (int k = 0; k < c.sweep.escalation_steps; ++k) {
      const double scale = std::pow(c.sweep.escalation_factor, k);
      DataSpec data = c.data;
      data.profile = with_amplitude(data.profile, a0 * scale);
      const double horizon = c.horizon * scale;
      const RunOutcome o = simulate(c, model, data, horizon);
      LadderStep st{k, a0 * scale, horizon, std::string(to_string(o.record.status)),
                    o.record.t_star, std::nullopt};
      if (o.record.status == RunStatus::completed) {
        st.weighted_l2_exponent = fit_exponents(o.record, horizon).weighted_l2;
      }
      pt.path.push_back(st);
      if (o.record.status == RunStatus::blowup_detected) {
        pt.verdict = Verdict::blowup;
        return pt;
      }
      if (o.record.status == RunStatus::unstable) {
        pt.verdict = Verdict::unstable;
        return pt;
      }
      pt.verdict = st.weighted_l2_exponent && *st.weighted_l2_exponent < 0.0
                       ? Verdict::global
                       : Verdict::inconclusive;
    }
  } catch (const std::exception& e) {
    pt.verdict = Verdict::error;
    pt.message = e.what();
  }
  return pt;
}

inline std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

inline CsvTable sweep_table(const std::string& name, const std::vector<SweepPoint>& pts) {
  CsvTable t({name, "verdict", "level", "amplitude", "horizon", "status", "t_star",
              "weighted_l2_exponent", "message"});
  for (const auto& pt : pts) {
    if (pt.path.empty()) {
      t.row({pt.param, std::string(to_string(pt.verdict)), CsvCell{}, CsvCell{}, CsvCell{},
             CsvCell{}, CsvCell{}, CsvCell{}, pt.message});
      continue;
    }
    const LadderStep& last = pt.path.back();
    t.row({pt.param, std::string(to_string(pt.verdict)), static_cast<long>(last.level),
           last.amplitude, last.horizon, last.status, cell(last.t_star),
           cell(last.weighted_l2_exponent), pt.message});
  }
  return t;
}

inline json sweep_point_json(const SweepPoint& pt) {
  json path = json::array();
  for (const auto& st : pt.path) {
    path.push_back({{"level", st.level},
                    {"amplitude", st.amplitude},
                    {"horizon", st.horizon},
                    {"status", st.status},
                    {"t_star", number_or_null(st.t_star)},
                    {"weighted_l2_exponent", number_or_null(st.weighted_l2_exponent)}});
  }
  return {{"value", pt.param},
          {"verdict", std::string(to_string(pt.verdict))},
          {"message", pt.message},
          {"escalation_path", path}};
}

struct PSweepResult {
  std::vector<SweepPoint> points;
  std::vector<SweepPoint> bisection;
  std::optional<double> p_hat;
  std::optional<std::pair<double, double>> bracket;
};

/// Classifies every p (ascending, duplicates dropped), then bisects between
/// the largest blow-up p and the smallest global p above it.
inline PSweepResult sweep_p(const ExperimentConfig& c, int jobs) {
  PSweepResult res;
  const std::vector<double> ps = sorted_unique(c.sweep.p_list);
  auto at_p = [&](double p) {
    ModelSpec m = c.model;
    m.p = p;
    return classify(c, m, p);
  };
  res.points = parallel_map(ps.size(), jobs, [&](std::size_t i) { return at_p(ps[i]); });

  std::optional<double> lo, hi;
  for (const auto& pt : res.points) {
    if (pt.verdict == Verdict::blowup) lo = pt.param;
  }
  for (const auto& pt : res.points) {
    if (pt.verdict == Verdict::global && lo && pt.param > *lo) {
      hi = pt.param;
      break;
    }
  }
  if (!lo || !hi) return res;
  for (int k = 0; k < c.sweep.bisect_steps; ++k) {
    const double mid = 0.5 * (*lo + *hi);
    SweepPoint pt = at_p(mid);
    const Verdict v = pt.verdict;
    res.bisection.push_back(std::move(pt));
    if (v == Verdict::blowup) {
      lo = mid;
    } else if (v == Verdict::global) {
      hi = mid;
    } else {
      break;
    }
  }
  res.bracket = std::make_pair(*lo, *hi);
  res.p_hat = 0.5 * (*lo + *hi);
  return res;
}

inline int cmd_sweep_p(const ExperimentConfig& c, const Context& ctx) {
  const PSweepResult res = sweep_p(c, ctx.jobs);
  write_text(ctx.out_dir / "sweep_p.csv", sweep_table("p", res.points).str());
  write_text(ctx.out_dir / "sweep_p_bisection.csv", sweep_table("p", res.bisection).str());
  json s;
  s["config"] = c.echo;
  s["escalation"] = {{"steps", c.sweep.escalation_steps},
                     {"factor", c.sweep.escalation_factor}};
  json pts = json::array();
  for (const auto& pt : res.points) pts.push_back(sweep_point_json(pt));
  s["points"] = pts;
  json bis = json::array();
  for (const auto& pt : res.bisection) bis.push_back(sweep_point_json(pt));
  s["bisection"] = bis;
  s["p_hat"] = number_or_null(res.p_hat);
  s["bracket"] = res.bracket ? json{res.bracket->first, res.bracket->second} : json(nullptr);
  write_text(ctx.out_dir / "sweep_p.json", s.dump(2) + "\n");
  for (const auto& pt : res.points) {
    ctx.say("p=" + format_number(pt.param) + " " + std::string(to_string(pt.verdict)));
  }
  if (res.p_hat) ctx.say("p_hat=" + format_number(*res.p_hat));
  return exit_ok;
}

inline std::vector<SweepPoint> sweep_mu(const ExperimentConfig& c, int jobs) {
  const std::vector<double> mus = sorted_unique(c.sweep.mu_list);
  return parallel_map(mus.size(), jobs, [&](std::size_t i) {
    ModelSpec m = c.model;
    m.damping = ScaleInvariantDamping{mus[i]};
    return classify(c, m, mus[i]);
  });
}

inline int cmd_sweep_mu(const ExperimentConfig& c, const Context& ctx) {
  const auto pts = sweep_mu(c, ctx.jobs);
  write_text(ctx.out_dir / "sweep_mu.csv", sweep_table("mu", pts).str());
  json s;
  s["config"] = c.echo;
  s["escalation"] = {{"steps", c.sweep.escalation_steps},
                     {"factor", c.sweep.escalation_factor}};
  json arr = json::array();
  for (const auto& pt : pts) arr.push_back(sweep_point_json(pt));
  s["points"] = arr;
  write_text(ctx.out_dir / "sweep_mu.json", s.dump(2) + "\n");
  for (const auto& pt : pts) {
    ctx.say("mu=" + format_number(pt.param) + " " + std::string(to_string(pt.verdict)));
  }
  return exit_ok;
}

// ---------------------------------------------------------------------------
// Feasibility

inline int cmd_feasibility(const ExperimentConfig& c, const Context& ctx) {
  std::vector<double> eps = sorted_unique(c.eps_list);
  std::reverse(eps.begin(), eps.end());
  const auto curve = mu0_curve(c.model.n, c.model.p, eps);
  CsvTable t({"eps", "delta", "nu", "mu0"});
  for (const auto& pt : curve) t.row({pt.eps, pt.delta, pt.nu, pt.mu0});
  write_text(ctx.out_dir / "feasibility.csv", t.str());

  const FeasibleParams f = solve_feasible(c.model.n, c.model.p);
  json s;
  s["n"] = c.model.n;
  s["p"] = c.model.p;
  s["eps_upper_bound"] = eps_upper_bound(c.model.n, c.model.p);
  s["nominal"] = {{"eps", f.eps},       {"delta", f.delta}, {"delta1", f.delta1},
                  {"delta2", f.delta2}, {"delta3", f.delta3}, {"nu", f.nu},
                  {"mu", f.mu},         {"sigma", f.sigma}};
  s["slope"] = curve.size() >= 2 ? json(loglog_slope(curve)) : json(nullptr);
  write_text(ctx.out_dir / "feasibility.json", s.dump(2) + "\n");
  if (curve.size() >= 2) ctx.say("slope=" + format_number(loglog_slope(curve)));
  return exit_ok;
}

// ---------------------------------------------------------------------------
// Diffusion comparison

struct GapRow {
  double t;
  double gap;
  double wave_l2;
  double heat_l2;
};

struct DiffusionResult {
  std::vector<GapRow> rows;
  bool unstable = false;
};

/// Wave solution at each time against the heat flow of u0 alone, on one
/// grid sized for the latest time.
inline DiffusionResult diffusion_study(const ExperimentConfig& c, int jobs) {
  if (c.model.nonlinearity != Nonlinearity::none) {
    throw ConfigError("diffusion: model.nonlinearity must be none");
  }
  const auto mu = c.model.mu();
  if (!mu || !(*mu > 0.0)) {
    throw ConfigError("diffusion: needs scale-invariant damping with mu > 0");
  }
  const std::vector<double> times = sorted_unique(c.diffusion_times);
  if (times.empty()) throw ConfigError("diffusion: diffusion.times is empty");
  if (!(times.front() > 0.0)) throw ConfigError("diffusion: times must be positive");

  const RadialGrid grid = resolve_grid(c, c.data.profile, times.back());
  const InitialData init = sample_initial_data(c.data, grid);
  struct One {
    std::optional<GapRow> row;
  };
  auto one = [&](std::size_t i) {
    const double t = times[i];
    Field u;
    RunOptions opts;
    opts.stride = 1 << 30;
    opts.weight = unit_weight();
    opts.on_step = [&](const SolutionState& s) {
      if (t - s.t <= 1e-9 * std::max(s.dt, 1e-300)) u = s.u_curr;
    };
    const RunRecord rec = run(c.model, grid, init, c.control, t, opts);
    if (rec.status != RunStatus::completed || u.empty()) return One{};
    const Field v = heat_evolve(init.u0, grid, *mu, c.model.n, t);
    return One{GapRow{t, diffusion_gap(u, v, grid, c.model.n), l2_norm(u, grid, c.model.n),
                      l2_norm(v, grid, c.model.n)}};
  };
  DiffusionResult res;
  for (auto& o : parallel_map(times.size(), jobs, one)) {
    if (o.row) {
      res.rows.push_back(*o.row);
    } else {
      res.unstable = true;
    }
  }
  return res;
}

inline int cmd_diffusion(const ExperimentConfig& c, const Context& ctx) {
  const DiffusionResult res = diffusion_study(c, ctx.jobs);
  CsvTable t({"t", "gap", "wave_l2", "heat_l2"});
  for (const auto& r : res.rows) t.row({r.t, r.gap, r.wave_l2, r.heat_l2});
  write_text(ctx.out_dir / "diffusion.csv", t.str());
  bool decreasing = res.rows.size() >= 2;
  for (std::size_t i = 1; i < res.rows.size(); ++i) {
    decreasing = decreasing && res.rows[i].gap < res.rows[i - 1].gap;
  }
  json s;
  s["config"] = c.echo;
  s["heat_data"] = "u0 only; the contribution of u1 to the asymptotic profile is ignored";
  s["strictly_decreasing"] = decreasing;
  s["complete"] = !res.unstable;
  write_text(ctx.out_dir / "diffusion.json", s.dump(2) + "\n");
  for (const auto& r : res.rows) {
    ctx.say("t=" + format_number(r.t) + " gap=" + format_number(r.gap));
  }
  return res.unstable ? exit_unstable : exit_ok;
}

// ---------------------------------------------------------------------------
// Test functional

struct TestfnResult {
  std::vector<TestFunctionalReport> reports;
  RunStatus status = RunStatus::completed;
  std::optional<double> t_star;
  double covered = 0.0;  // last trace time
};

inline TestfnResult testfn_study(const ExperimentConfig& c) {
  const std::vector<double> Rs = sorted_unique(c.testfn.R_list);
  if (Rs.empty()) throw ConfigError("testfn: testfn.R_list is empty");
  if (!(Rs.front() > 0.0)) throw ConfigError("testfn: R must be positive");
  if (Rs.back() > c.horizon) {
    throw ConfigError("testfn: R = " + format_number(Rs.back()) + " exceeds the horizon");
  }
  const GRegime regime = regime_for(c.model);
  const double param = c.model.mu() ? *c.model.mu()
                                    : std::get<PowerLawDamping>(c.model.damping).beta;
  const GTransform gt = g_transform(regime, param);
  const double T = Rs.back();
  const RadialGrid grid = resolve_grid(c, c.data.profile, T);
  const InitialData init = sample_initial_data(c.data, grid);
  RunRecord rec;
  const SolutionTrace trace = collect_trace(c.model, grid, init, c.control, T,
                                            Rs.front() / c.testfn.stride_fraction, &rec);
  TestfnResult res;
  res.status = rec.status;
  res.t_star = rec.t_star;
  res.covered = trace.times.back();
  for (double R : Rs) {
    if (res.covered < R * (1.0 - 1e-12)) continue;  // blow-up before R
    res.reports.push_back(test_functional(trace, make_test_functions(R, c.model.p), gt));
  }
  return res;
}

inline int cmd_testfn(const ExperimentConfig& c, const Context& ctx) {
  const TestfnResult res = testfn_study(c);
  CsvTable t({"R", "I_R", "boundary", "J1", "J2", "J3", "residual", "relative_residual",
              "I_tilde", "I_hat", "scaled", "bound_ratio", "K1", "K2", "K3", "holder_rhs"});
  for (const auto& r : res.reports) {
    t.row({r.R, r.I_R, r.boundary, r.J1, r.J2, r.J3, r.residual,
           r.I_R != 0.0 ? r.residual / std::abs(r.I_R) : 0.0, r.I_tilde, r.I_hat, r.scaled,
           r.bound_ratio, r.K1, r.K2, r.K3, r.holder_rhs});
  }
  write_text(ctx.out_dir / "testfn.csv", t.str());
  json s;
  s["config"] = c.echo;
  s["status"] = std::string(to_string(res.status));
  s["t_star"] = number_or_null(res.t_star);
  s["admissible_R_max"] = res.covered;
  write_text(ctx.out_dir / "testfn.json", s.dump(2) + "\n");
  for (const auto& r : res.reports) {
    ctx.say("R=" + format_number(r.R) + " I_R=" + format_number(r.I_R) +
            " residual=" + format_number(r.residual));
  }
  return res.status == RunStatus::unstable ? exit_unstable : exit_ok;
}

// ---------------------------------------------------------------------------
// Manufactured-solution convergence

/// u(t,r) = e^{-t}(1 - r²/4)₊³ and the source that makes it exact.
struct ManufacturedSolution {
  ModelSpec model;

  static double shape(double r) {
    if (r >= 2.0) return 0.0;
    const double w = 1.0 - 0.25 * r * r;
    return w * w * w;
  }

  [[nodiscard]] double laplacian_shape(double r) const {
    if (r >= 2.0) return 0.0;
    const double w = 1.0 - 0.25 * r * r;
    return -1.5 * model.n * w * w + 1.5 * r * r * w;
  }

  [[nodiscard]] double exact(double t, double r) const { return std::exp(-t) * shape(r); }

  /// u_tt - Δu + b u_t - f(u).
  [[nodiscard]] double source(double t, double r) const {
    const double e = std::exp(-t);
    const double u = e * shape(r);
    return u - e * laplacian_shape(r) - model.damping_at(t) * u - model.nonlinear_term(u);
  }
};

struct ConvergenceRow {
  int nr;
  double dr;
  double error;
  std::optional<double> order;
};

inline std::vector<ConvergenceRow> convergence_study(const ModelSpec& base,
                                                     const ConvergenceSettings& cs,
                                                     const StepControl& ctrl, int jobs) {
  std::vector<int> levels = cs.levels;
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  if (levels.size() < 2) throw ConfigError("convergence: need at least two levels");
  ManufacturedSolution mms{base};
  mms.model.forcing = nullptr;
  ModelSpec model = base;
  model.forcing = [mms](double t, double r) { return mms.source(t, r); };
  auto one = [&](std::size_t i) {
    const RadialGrid grid = make_grid(cs.r_max, levels[i]);
    const DataSpec spec{PolynomialBump{1.0, 2.0, 3}, 1.0, -1.0};
    const InitialData init = sample_initial_data(spec, grid);
    Field u;
    RunOptions opts;
    opts.stride = 1 << 30;
    opts.weight = unit_weight();
    opts.on_step = [&](const SolutionState& s) {
      if (cs.horizon - s.t <= 1e-9 * std::max(s.dt, 1e-300)) u = s.u_curr;
    };
    const RunRecord rec = run(model, grid, init, ctrl, cs.horizon, opts);
    if (rec.status != RunStatus::completed || u.empty()) {
      throw NumericalError("convergence: run at nr = " + std::to_string(levels[i]) +
                           " did not complete");
    }
    Field err(grid.size());
    for (int j = 0; j <= grid.nr; ++j) err[j] = u[j] - mms.exact(cs.horizon, grid.r(j));
    return ConvergenceRow{grid.nr, grid.dr, l2_norm(err, grid, model.n), std::nullopt};
  };
  auto rows = parallel_map(levels.size(), jobs, one);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    rows[i].order = std::log(rows[i - 1].error / rows[i].error) /
                    std::log(rows[i - 1].dr / rows[i].dr);
  }
  return rows;
}

inline int cmd_convergence(const ExperimentConfig& c, const Context& ctx) {
  const auto rows = convergence_study(c.model, c.convergence, c.control, ctx.jobs);
  CsvTable t({"nr", "dr", "l2_error", "order"});
  json orders = json::array();
  for (const auto& r : rows) {
    t.row({static_cast<long>(r.nr), r.dr, r.error, cell(r.order)});
    if (r.order) orders.push_back(*r.order);
  }
  write_text(ctx.out_dir / "convergence.csv", t.str());
  json s;
  s["config"] = c.echo;
  s["solution"] = "u = exp(-t) (1 - r^2/4)_+^3";
  s["orders"] = orders;
  write_text(ctx.out_dir / "convergence.json", s.dump(2) + "\n");
  for (const auto& r : rows) {
    ctx.say("nr=" + std::to_string(r.nr) + " error=" + format_number(r.error) +
            (r.order ? " order=" + format_number(*r.order) : ""));
  }
  return exit_ok;
}

// ---------------------------------------------------------------------------
// Dispatch

inline const std::map<std::string, int (*)(const ExperimentConfig&, const Context&)>&
commands() {
  static const std::map<std::string, int (*)(const ExperimentConfig&, const Context&)> table{
      {"run", &cmd_run},
      {"sweep-p", &cmd_sweep_p},
      {"sweep-mu", &cmd_sweep_mu},
      {"feasibility", &cmd_feasibility},
      {"diffusion", &cmd_diffusion},
      {"testfn", &cmd_testfn},
      {"convergence", &cmd_convergence},
  };
  return table;
}

/// Runs `name` and maps exceptions to exit codes; messages go to `err`.
inline int execute(const std::string& name, const ExperimentConfig& c, const Context& ctx,
                   std::ostream& err) {
  const auto& table = commands();
  const auto it = table.find(name);
  if (it == table.end()) {
    err << "error: unknown command '" << name << "'\n";
    return exit_config;
  }
  try {
    return it->second(c, ctx);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return exit_config;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return exit_unstable;
  }
}

}  // namespace dampwave::lab
