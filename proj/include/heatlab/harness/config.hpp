#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "heatlab/errors.hpp"
#include "heatlab/noise.hpp"
#include "heatlab/seminorm.hpp"
#include "heatlab/sigma.hpp"

namespace heatlab::harness {

using nlohmann::json;

enum class Experiment { holder, coupling, seminorm, smallball, hitting, density, gauge };

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"holder",  "coupling", "seminorm", "smallball",
                                              "hitting", "density",  "gauge"};
  return names;
}

inline std::string to_string(Experiment e) { return experiment_names()[static_cast<std::size_t>(e)]; }

inline std::optional<Experiment> parse_experiment(const std::string& s) {
  const auto& names = experiment_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == s) return static_cast<Experiment>(i);
  }
  return std::nullopt;
}

// Base lattice; x_lo/x_hi follow from J and the pad, the horizon from the
// experiment unless given.
struct GridConfig {
  double dx = 1.0 / 32.0;
  double pad = 6.0;
  double stability_ratio = 0.5;
  double horizon = 0.0;  // 0 = derived from the experiment
  bool operator==(const GridConfig&) const = default;
};

struct SigmaConfig {
  std::string kind = "sine";  // constant | sine | tabulated
  double a = 1.0;             // constant value, or sine offset
  double b = 0.4;
  double omega = 1.0;
  double z0 = 0.0;
  double dz = 1.0;
  std::vector<double> values;
  bool operator==(const SigmaConfig&) const = default;
};

struct Windows {
  Interval I{0.25, 0.5};
  Interval J{0.25, 0.75};
  double M = 1.0;
  double T = 0.5;
  bool operator==(const Windows& o) const {
    return I.lo == o.I.lo && I.hi == o.I.hi && J.lo == o.J.lo && J.hi == o.J.hi && M == o.M && T == o.T;
  }
};

struct Budgets {
  std::size_t replications = 200;
  std::size_t bootstrap = 1000;
  unsigned threads = 1;
  double work_budget = 1e13;
  bool operator==(const Budgets&) const = default;
};

// Anchor (t0, x0) of the local experiments.
struct Anchor {
  double t0 = 0.25;
  double x0 = 0.5;
  bool operator==(const Anchor&) const = default;
};

struct HolderParams {
  Anchor anchor;
  int fine_level = 9;                         // dx = 2^-fine_level
  std::vector<int> time_lags{10, 11, 12, 13, 14};  // h = 2^-k
  std::vector<int> space_lags{3, 4, 5, 6, 7};
  int time_origins = 4;   // spatial increments averaged over this many start times
  int space_origins = 8;  // temporal increments averaged over this many positions
  double variance_t = 0.5;
  double variance_dx = 1.0 / 32.0;
  std::size_t variance_reps = 10000;
  bool operator==(const HolderParams&) const = default;
};

struct CouplingParams {
  Anchor anchor;
  int n_min = 2;
  int n_max = 5;
  double p = 2.0;
  int intervals_per_side = 8;
  std::vector<int> space_lags{4, 5, 6, 7, 8, 9};         // |x - x0| = 2^-k
  std::vector<int> time_lags{8, 10, 12, 14, 16, 18};     // |t - t0| = 2^-k
  std::size_t identity_seeds = 100;
  bool operator==(const CouplingParams&) const = default;
};

struct SeminormConfig {
  double p0 = 16.0;
  double gamma0 = 5.0;
  double theta = 0.25;
  double gamma1 = 0.04;
  double gamma2 = 0.045;
  Anchor anchor;
  std::vector<int> y1_levels{6, 7, 8, 9, 10};   // lattice 2^-k, window 16 time steps
  std::vector<int> y2_levels{7, 8, 9, 10, 11};  // lattice 2^-k, window 16 space steps
  int y_intervals = 16;
  int grr_zeta_level = 6;  // zeta = 2^-k
  int grr_dx_level = 9;
  std::size_t training = 100;
  std::size_t holdout = 500;
  std::optional<double> a;  // default 2 sqrt(zeta)
  bool operator==(const SeminormConfig&) const = default;
};

struct SmallBallParams {
  Anchor anchor{0.5, 0.5};
  int n_min = 2;
  int n_max = 5;
  double z = 0.0;
  int d_max = 3;
  int product_level = 2;
  int intervals_per_side = 8;
  bool operator==(const SmallBallParams&) const = default;
};

struct HittingParams {
  int d = 7;
  std::vector<double> lengths{0.1, 0.2, 0.4};
  std::optional<double> tol;      // default 2 sqrt(fine dx)
  std::optional<double> fine_dx = 1.0 / 128.0;  // spacing on I x J if finer than grid.dx
  double window_sigmas = 1.0;     // margin of the refined window, in sqrt(elapsed time)
  int cover_level = 2;
  bool operator==(const HittingParams&) const = default;
};

struct DensityParams {
  Anchor anchor;
  std::vector<double> zetas{0.25, 0.0625};  // rectangles (zeta^2, zeta)
  int kde_points = 64;
  std::size_t variance_reps = 2000;
  int intervals_per_side = 8;
  bool operator==(const DensityParams&) const = default;
};

struct GaugeParams {
  std::vector<double> betas{-0.5, 0.0, 0.25, 0.5, 1.0};
  std::vector<std::size_t> n_points{64, 128};
  std::size_t max_iters = 200000;
  double tol = 1e-6;
  std::size_t oracle_iters = 20000;
  bool operator==(const GaugeParams&) const = default;
};

using Params = std::variant<HolderParams, CouplingParams, SeminormConfig, SmallBallParams, HittingParams,
                            DensityParams, GaugeParams>;

inline Params default_params(Experiment e) {
  switch (e) {
    case Experiment::holder: return HolderParams{};
    case Experiment::coupling: return CouplingParams{};
    case Experiment::seminorm: return SeminormConfig{};
    case Experiment::smallball: return SmallBallParams{};
    case Experiment::hitting: return HittingParams{};
    case Experiment::density: return DensityParams{};
    case Experiment::gauge: return GaugeParams{};
  }
  throw UsageError("unknown experiment");
}

struct ExperimentConfig {
  Experiment experiment = Experiment::holder;
  GridConfig grid;
  SigmaConfig sigma;
  Windows windows;
  Budgets budgets;
  std::uint64_t seed = 1;
  std::string output = "results";
  Params params = HolderParams{};
  bool operator==(const ExperimentConfig&) const = default;
};

inline ExperimentConfig default_config(Experiment e) {
  ExperimentConfig c;
  c.experiment = e;
  c.params = default_params(e);
  switch (e) {
    case Experiment::smallball: c.budgets.replications = 4000; break;
    case Experiment::hitting:
      c.budgets.replications = 2000;
      c.grid.dx = 1.0 / 32.0;
      break;
    case Experiment::density: c.budgets.replications = 100000; break;
    default: break;
  }
  return c;
}

inline SigmaSpec make_sigma(const SigmaConfig& s) {
  if (s.kind == "constant") return SigmaSpec::constant(s.a);
  if (s.kind == "sine") return SigmaSpec::sine(s.a, s.b, s.omega);
  if (s.kind == "tabulated") return SigmaSpec::tabulated(s.z0, s.dz, s.values);
  throw UsageError("sigma.kind: expected constant, sine or tabulated");
}

inline SeminormParams make_params(const SeminormConfig& s) {
  SeminormParams p;
  p.p0 = s.p0;
  p.gamma0 = s.gamma0;
  p.theta = s.theta;
  p.gamma1 = s.gamma1;
  p.gamma2 = s.gamma2;
  return p;
}

// ---- serialization ----

namespace detail {

// Reads fields of one JSON object and reports errors by field path.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("expected an object");
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw UsageError((path_.empty() ? std::string("config") : path_) + ": " + what);
  }

  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return j_.contains(key); }
  const json& raw(const std::string& key) const { return j_.at(key); }

  template <class T>
  void get(const std::string& key, T& out) const {
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    try {
      read(v, out);
    } catch (const UsageError&) {
      throw;
    } catch (const std::exception&) {
      throw UsageError(sub(key) + ": wrong type");
    }
  }

  template <class T>
  void get(const std::string& key, std::optional<T>& out) const {
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    T v{};
    get(key, v);
    out = v;
  }

  void reject_unknown(std::initializer_list<const char*> known) const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool ok = false;
      for (const char* k : known) ok = ok || it.key() == k;
      if (!ok) throw UsageError(sub(it.key()) + ": unknown field");
    }
  }

 private:
  static void read(const json& v, double& out) {
    if (!v.is_number()) throw std::invalid_argument("number");
    out = v.get<double>();
  }
  static void read(const json& v, int& out) {
    if (!v.is_number_integer()) throw std::invalid_argument("integer");
    out = v.get<int>();
  }
  static void read(const json& v, unsigned& out) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw std::invalid_argument("unsigned");
    }
    out = v.get<unsigned>();
  }
  static void read(const json& v, std::size_t& out) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw std::invalid_argument("unsigned");
    }
    out = v.get<std::size_t>();
  }
  static void read(const json& v, bool& out) {
    if (!v.is_boolean()) throw std::invalid_argument("bool");
    out = v.get<bool>();
  }
  static void read(const json& v, std::string& out) {
    if (!v.is_string()) throw std::invalid_argument("string");
    out = v.get<std::string>();
  }
  template <class T>
  static void read(const json& v, std::vector<T>& out) {
    if (!v.is_array()) throw std::invalid_argument("array");
    out.clear();
    for (const auto& e : v) {
      T x{};
      read(e, x);
      out.push_back(x);
    }
  }

  const json& j_;
  std::string path_;
};

inline json to_json(const Interval& i) { return json::array({i.lo, i.hi}); }

inline Interval interval_from(const Reader& r, const std::string& key, Interval def) {
  if (!r.has(key)) return def;
  std::vector<double> v;
  r.get(key, v);
  if (v.size() != 2) throw UsageError(r.sub(key) + ": expected [lo, hi]");
  return {v[0], v[1]};
}

inline json anchor_json(const Anchor& a) { return {{"t0", a.t0}, {"x0", a.x0}}; }

inline Anchor read_anchor(const Reader& r, const std::string& key, Anchor def) {
  if (!r.has(key)) return def;
  Reader s(r.raw(key), r.sub(key));
  s.reject_unknown({"t0", "x0"});
  s.get("t0", def.t0);
  s.get("x0", def.x0);
  return def;
}

inline json params_json(const Params& p) {
  return std::visit(
      [](const auto& q) -> json {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, HolderParams>) {
          return {{"anchor", anchor_json(q.anchor)}, {"fine_level", q.fine_level}, {"time_lags", q.time_lags},
                  {"space_lags", q.space_lags},       {"time_origins", q.time_origins},
                  {"space_origins", q.space_origins}, {"variance_t", q.variance_t},
                  {"variance_dx", q.variance_dx},     {"variance_reps", q.variance_reps}};
        } else if constexpr (std::is_same_v<T, CouplingParams>) {
          return {{"anchor", anchor_json(q.anchor)},
                  {"n_min", q.n_min},
                  {"n_max", q.n_max},
                  {"p", q.p},
                  {"intervals_per_side", q.intervals_per_side},
                  {"space_lags", q.space_lags},
                  {"time_lags", q.time_lags},
                  {"identity_seeds", q.identity_seeds}};
        } else if constexpr (std::is_same_v<T, SeminormConfig>) {
          json j{{"p0", q.p0},
                 {"gamma0", q.gamma0},
                 {"theta", q.theta},
                 {"gamma1", q.gamma1},
                 {"gamma2", q.gamma2},
                 {"anchor", anchor_json(q.anchor)},
                 {"y1_levels", q.y1_levels},
                 {"y2_levels", q.y2_levels},
                 {"y_intervals", q.y_intervals},
                 {"grr_zeta_level", q.grr_zeta_level},
                 {"grr_dx_level", q.grr_dx_level},
                 {"training", q.training},
                 {"holdout", q.holdout}};
          j["a"] = q.a ? json(*q.a) : json(nullptr);
          return j;
        } else if constexpr (std::is_same_v<T, SmallBallParams>) {
          return {{"anchor", anchor_json(q.anchor)},   {"n_min", q.n_min}, {"n_max", q.n_max},
                  {"z", q.z},                          {"d_max", q.d_max}, {"product_level", q.product_level},
                  {"intervals_per_side", q.intervals_per_side}};
        } else if constexpr (std::is_same_v<T, HittingParams>) {
          json j{{"d", q.d}, {"lengths", q.lengths}, {"cover_level", q.cover_level}, {"window_sigmas", q.window_sigmas}};
          j["tol"] = q.tol ? json(*q.tol) : json(nullptr);
          j["fine_dx"] = q.fine_dx ? json(*q.fine_dx) : json(nullptr);
          return j;
        } else if constexpr (std::is_same_v<T, DensityParams>) {
          return {{"anchor", anchor_json(q.anchor)},
                  {"zetas", q.zetas},
                  {"kde_points", q.kde_points},
                  {"variance_reps", q.variance_reps},
                  {"intervals_per_side", q.intervals_per_side}};
        } else {
          return {{"betas", q.betas},
                  {"n_points", q.n_points},
                  {"max_iters", q.max_iters},
                  {"tol", q.tol},
                  {"oracle_iters", q.oracle_iters}};
        }
      },
      p);
}

inline Params read_params(Experiment e, const json& j) {
  Params out = default_params(e);
  if (j.is_null()) return out;
  Reader r(j, "params");
  std::visit(
      [&](auto& q) {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, HolderParams>) {
          r.reject_unknown({"anchor", "fine_level", "time_lags", "space_lags", "time_origins", "space_origins",
                            "variance_t", "variance_dx", "variance_reps"});
          q.anchor = read_anchor(r, "anchor", q.anchor);
          r.get("fine_level", q.fine_level);
          r.get("time_lags", q.time_lags);
          r.get("space_lags", q.space_lags);
          r.get("time_origins", q.time_origins);
          r.get("space_origins", q.space_origins);
          r.get("variance_t", q.variance_t);
          r.get("variance_dx", q.variance_dx);
          r.get("variance_reps", q.variance_reps);
        } else if constexpr (std::is_same_v<T, CouplingParams>) {
          r.reject_unknown({"anchor", "n_min", "n_max", "p", "intervals_per_side", "space_lags", "time_lags",
                            "identity_seeds"});
          q.anchor = read_anchor(r, "anchor", q.anchor);
          r.get("n_min", q.n_min);
          r.get("n_max", q.n_max);
          r.get("p", q.p);
          r.get("intervals_per_side", q.intervals_per_side);
          r.get("space_lags", q.space_lags);
          r.get("time_lags", q.time_lags);
          r.get("identity_seeds", q.identity_seeds);
        } else if constexpr (std::is_same_v<T, SeminormConfig>) {
          r.reject_unknown({"p0", "gamma0", "theta", "gamma1", "gamma2", "anchor", "y1_levels", "y2_levels",
                            "y_intervals", "grr_zeta_level", "grr_dx_level", "training", "holdout", "a"});
          r.get("p0", q.p0);
          r.get("gamma0", q.gamma0);
          r.get("theta", q.theta);
          r.get("gamma1", q.gamma1);
          r.get("gamma2", q.gamma2);
          q.anchor = read_anchor(r, "anchor", q.anchor);
          r.get("y1_levels", q.y1_levels);
          r.get("y2_levels", q.y2_levels);
          r.get("y_intervals", q.y_intervals);
          r.get("grr_zeta_level", q.grr_zeta_level);
          r.get("grr_dx_level", q.grr_dx_level);
          r.get("training", q.training);
          r.get("holdout", q.holdout);
          r.get("a", q.a);
        } else if constexpr (std::is_same_v<T, SmallBallParams>) {
          r.reject_unknown({"anchor", "n_min", "n_max", "z", "d_max", "product_level", "intervals_per_side"});
          q.anchor = read_anchor(r, "anchor", q.anchor);
          r.get("n_min", q.n_min);
          r.get("n_max", q.n_max);
          r.get("z", q.z);
          r.get("d_max", q.d_max);
          r.get("product_level", q.product_level);
          r.get("intervals_per_side", q.intervals_per_side);
        } else if constexpr (std::is_same_v<T, HittingParams>) {
          r.reject_unknown({"d", "lengths", "tol", "fine_dx", "window_sigmas", "cover_level"});
          r.get("d", q.d);
          r.get("lengths", q.lengths);
          r.get("tol", q.tol);
          r.get("fine_dx", q.fine_dx);
          r.get("window_sigmas", q.window_sigmas);
          r.get("cover_level", q.cover_level);
        } else if constexpr (std::is_same_v<T, DensityParams>) {
          r.reject_unknown({"anchor", "zetas", "kde_points", "variance_reps", "intervals_per_side"});
          q.anchor = read_anchor(r, "anchor", q.anchor);
          r.get("zetas", q.zetas);
          r.get("kde_points", q.kde_points);
          r.get("variance_reps", q.variance_reps);
          r.get("intervals_per_side", q.intervals_per_side);
        } else {
          r.reject_unknown({"betas", "n_points", "max_iters", "tol", "oracle_iters"});
          r.get("betas", q.betas);
          r.get("n_points", q.n_points);
          r.get("max_iters", q.max_iters);
          r.get("tol", q.tol);
          r.get("oracle_iters", q.oracle_iters);
        }
      },
      out);
  return out;
}

}  // namespace detail

inline json to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = to_string(c.experiment);
  j["grid"] = {{"dx", c.grid.dx}, {"pad", c.grid.pad}, {"stability_ratio", c.grid.stability_ratio},
               {"horizon", c.grid.horizon}};
  j["sigma"] = {{"kind", c.sigma.kind}, {"a", c.sigma.a},   {"b", c.sigma.b},          {"omega", c.sigma.omega},
                {"z0", c.sigma.z0},     {"dz", c.sigma.dz}, {"values", c.sigma.values}};
  j["windows"] = {{"I", detail::to_json(c.windows.I)},
                  {"J", detail::to_json(c.windows.J)},
                  {"M", c.windows.M},
                  {"T", c.windows.T}};
  j["budgets"] = {{"replications", c.budgets.replications},
                  {"bootstrap", c.budgets.bootstrap},
                  {"threads", c.budgets.threads},
                  {"work_budget", c.budgets.work_budget}};
  j["seed"] = c.seed;
  j["output"] = c.output;
  j["params"] = detail::params_json(c.params);
  return j;
}

inline std::string serialize(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

// Checks the invariants every experiment relies on; errors name the field.
inline void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& path, const std::string& what) { throw UsageError(path + ": " + what); };
  const auto& w = c.windows;
  if (!(w.T > 0.0)) fail("windows.T", "must be > 0");
  if (!(w.I.lo > 0.0 && w.I.hi > w.I.lo && w.I.hi <= w.T)) fail("windows.I", "must satisfy 0 < lo < hi <= T");
  if (!(w.J.hi > w.J.lo)) fail("windows.J", "must have positive length");
  if (!(w.M > 0.0)) fail("windows.M", "must be > 0");
  if (!(c.grid.dx > 0.0)) fail("grid.dx", "must be > 0");
  if (!(c.grid.pad >= 0.0)) fail("grid.pad", "must be >= 0");
  if (!(c.grid.stability_ratio > 0.0 && c.grid.stability_ratio <= 1.0)) {
    fail("grid.stability_ratio", "must lie in (0, 1] (dt <= dx^2)");
  }
  if (!(c.grid.horizon >= 0.0)) fail("grid.horizon", "must be >= 0");
  if (c.budgets.replications < 2) fail("budgets.replications", "must be >= 2");
  if (c.budgets.work_budget <= 0.0) fail("budgets.work_budget", "must be > 0");
  if (c.output.empty()) fail("output", "must name a directory");
  try {
    const auto s = make_sigma(c.sigma);
    if (!(s.sigma_min > 0.0)) fail("sigma", "must be bounded below by a positive constant");
  } catch (const UsageError&) {
    throw;
  } catch (const Error& e) {
    fail("sigma", e.what());
  }
  auto in_window = [&](const Anchor& a, const std::string& path) {
    if (!w.I.contains(a.t0)) fail(path + ".t0", "must lie in windows.I");
    if (!w.J.contains(a.x0)) fail(path + ".x0", "must lie in windows.J");
  };
  auto positive_levels = [&](const std::vector<int>& v, const std::string& path, std::size_t min_size) {
    if (v.size() < min_size) fail(path, "needs at least " + std::to_string(min_size) + " entries");
    for (int k : v) {
      if (k < 0 || k > 40) fail(path, "levels must lie in [0, 40]");
    }
  };
  std::visit(
      [&](const auto& q) {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, HolderParams>) {
          in_window(q.anchor, "params.anchor");
          positive_levels(q.time_lags, "params.time_lags", 3);
          positive_levels(q.space_lags, "params.space_lags", 3);
          if (q.fine_level < 0 || q.fine_level > 20) fail("params.fine_level", "must lie in [0, 20]");
          if (q.time_origins < 1 || q.space_origins < 1) fail("params.time_origins", "origins must be >= 1");
          if (!(q.variance_t > 0.0)) fail("params.variance_t", "must be > 0");
          if (!(q.variance_dx > 0.0)) fail("params.variance_dx", "must be > 0");
          if (q.variance_reps < 2) fail("params.variance_reps", "must be >= 2");
        } else if constexpr (std::is_same_v<T, CouplingParams>) {
          in_window(q.anchor, "params.anchor");
          if (q.n_min < 0 || q.n_max - q.n_min < 2) fail("params.n_max", "need n_max - n_min >= 2 and n_min >= 0");
          if (!(q.p >= 1.0)) fail("params.p", "must be >= 1");
          if (q.intervals_per_side < 8) fail("params.intervals_per_side", "must be >= 8");
          positive_levels(q.space_lags, "params.space_lags", 3);
          positive_levels(q.time_lags, "params.time_lags", 3);
        } else if constexpr (std::is_same_v<T, SeminormConfig>) {
          try {
            validate(make_params(q));
          } catch (const Error& e) {
            fail("params", e.what());
          }
          in_window(q.anchor, "params.anchor");
          positive_levels(q.y1_levels, "params.y1_levels", 3);
          positive_levels(q.y2_levels, "params.y2_levels", 3);
          if (q.y_intervals < 8) fail("params.y_intervals", "must be >= 8");
          if (q.grr_dx_level < q.grr_zeta_level) fail("params.grr_dx_level", "must be >= grr_zeta_level");
          if (q.training < 100) fail("params.training", "must be >= 100");
          if (q.holdout < 1) fail("params.holdout", "must be >= 1");
          if (q.a && !(*q.a > 0.0)) fail("params.a", "must be > 0");
        } else if constexpr (std::is_same_v<T, SmallBallParams>) {
          in_window(q.anchor, "params.anchor");
          if (q.n_min < 0 || q.n_max - q.n_min < 1) fail("params.n_max", "need n_max > n_min >= 0");
          if (q.d_max < 1 || q.d_max > 8) fail("params.d_max", "must lie in [1, 8]");
          if (std::fabs(q.z) > w.M) fail("params.z", "must satisfy |z| <= M");
          if (q.intervals_per_side < 8) fail("params.intervals_per_side", "must be >= 8");
        } else if constexpr (std::is_same_v<T, HittingParams>) {
          if (q.d < 1 || q.d > 16) fail("params.d", "must lie in [1, 16]");
          if (q.lengths.empty()) fail("params.lengths", "must be nonempty");
          for (double l : q.lengths) {
            if (!(l > 0.0) || l > 2.0 * w.M) fail("params.lengths", "lengths must lie in (0, 2M]");
          }
          if (q.tol && !(*q.tol > 0.0)) fail("params.tol", "must be > 0");
          if (q.fine_dx && !(*q.fine_dx > 0.0)) fail("params.fine_dx", "must be > 0");
          if (!(q.window_sigmas >= 1.0)) fail("params.window_sigmas", "must be >= 1");
          if (q.cover_level < 0 || q.cover_level > 8) fail("params.cover_level", "must lie in [0, 8]");
        } else if constexpr (std::is_same_v<T, DensityParams>) {
          in_window(q.anchor, "params.anchor");
          if (q.zetas.empty()) fail("params.zetas", "must be nonempty");
          for (double z : q.zetas) {
            if (!(z > 0.0 && z <= 1.0)) fail("params.zetas", "must lie in (0, 1]");
          }
          if (q.kde_points < 2) fail("params.kde_points", "must be >= 2");
          if (q.variance_reps < 2) fail("params.variance_reps", "must be >= 2");
          if (q.intervals_per_side < 8) fail("params.intervals_per_side", "must be >= 8");
        } else {
          if (q.betas.empty()) fail("params.betas", "must be nonempty");
          for (auto n : q.n_points) {
            if (n < 2) fail("params.n_points", "must be >= 2");
          }
          if (q.max_iters < 1) fail("params.max_iters", "must be >= 1");
          if (!(q.tol > 0.0)) fail("params.tol", "must be > 0");
        }
      },
      c.params);
}

inline ExperimentConfig from_json(const json& j) {
  detail::Reader r(j, "");
  r.reject_unknown({"experiment", "grid", "sigma", "windows", "budgets", "seed", "output", "params"});
  if (!r.has("experiment")) r.fail("missing field experiment");
  std::string name;
  r.get("experiment", name);
  const auto e = parse_experiment(name);
  if (!e) throw UsageError("experiment: unknown experiment '" + name + "'");
  ExperimentConfig c = default_config(*e);
  if (r.has("grid")) {
    detail::Reader g(r.raw("grid"), "grid");
    g.reject_unknown({"dx", "pad", "stability_ratio", "horizon"});
    g.get("dx", c.grid.dx);
    g.get("pad", c.grid.pad);
    g.get("stability_ratio", c.grid.stability_ratio);
    g.get("horizon", c.grid.horizon);
  }
  if (r.has("sigma")) {
    detail::Reader s(r.raw("sigma"), "sigma");
    s.reject_unknown({"kind", "a", "b", "omega", "z0", "dz", "values", "c0"});
    s.get("kind", c.sigma.kind);
    s.get("a", c.sigma.a);
    s.get("c0", c.sigma.a);
    s.get("b", c.sigma.b);
    s.get("omega", c.sigma.omega);
    s.get("z0", c.sigma.z0);
    s.get("dz", c.sigma.dz);
    s.get("values", c.sigma.values);
  }
  if (r.has("windows")) {
    detail::Reader w(r.raw("windows"), "windows");
    w.reject_unknown({"I", "J", "M", "T"});
    c.windows.I = detail::interval_from(w, "I", c.windows.I);
    c.windows.J = detail::interval_from(w, "J", c.windows.J);
    w.get("M", c.windows.M);
    w.get("T", c.windows.T);
  }
  if (r.has("budgets")) {
    detail::Reader b(r.raw("budgets"), "budgets");
    b.reject_unknown({"replications", "bootstrap", "threads", "work_budget"});
    b.get("replications", c.budgets.replications);
    b.get("bootstrap", c.budgets.bootstrap);
    b.get("threads", c.budgets.threads);
    b.get("work_budget", c.budgets.work_budget);
  }
  if (r.has("seed")) {
    const json& s = r.raw("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) {
      throw UsageError("seed: expected a nonnegative integer");
    }
    c.seed = s.get<std::uint64_t>();
  }
  r.get("output", c.output);
  if (r.has("params")) c.params = detail::read_params(*e, r.raw("params"));
  validate(c);
  return c;
}

inline ExperimentConfig parse(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config: not valid JSON (") + e.what() + ")");
  }
  return from_json(j);
}

// FNV-1a over the canonical serialization.
inline std::string config_hash(const ExperimentConfig& c) {
  const std::string s = to_json(c).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace heatlab::harness
