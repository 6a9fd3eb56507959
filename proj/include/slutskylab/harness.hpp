#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "slutskylab/analytics.hpp"
#include "slutskylab/config.hpp"
#include "slutskylab/errors.hpp"
#include "slutskylab/model.hpp"
#include "slutskylab/parallel.hpp"
#include "slutskylab/rng.hpp"
#include "slutskylab/sampler.hpp"
#include "slutskylab/slutsky.hpp"

namespace slutsky {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr int kCsvSchemaVersion = 1;
inline constexpr int kManifestVersion = 1;

// ---------------------------------------------------------------------------
// Tabular output

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Row {
 public:
  Row& set(const std::string& key, double v) { return put(key, format_number(v)); }
  Row& set(const std::string& key, long v) { return put(key, std::to_string(v)); }
  Row& set(const std::string& key, int v) { return put(key, std::to_string(v)); }
  Row& set(const std::string& key, std::uint64_t v) { return put(key, std::to_string(v)); }
  Row& set(const std::string& key, bool v) { return put(key, v ? "1" : "0"); }
  Row& set(const std::string& key, const std::string& v) { return put(key, v); }
  Row& set(const std::string& key, const char* v) { return put(key, v); }
  Row& matrix(const std::string& prefix, const Matrix& S) {
    for (int i = 0; i < S.rows(); ++i) {
      for (int j = 0; j < S.cols(); ++j) set(prefix + std::to_string(i) + "_" + std::to_string(j), S(i, j));
    }
    return *this;
  }
  Row& append(const Row& other) {
    for (const auto& [k, v] : other.cells_) put(k, v);
    return *this;
  }
  const std::vector<std::pair<std::string, std::string>>& cells() const { return cells_; }
  std::optional<std::string> get(const std::string& key) const {
    for (const auto& [k, v] : cells_) if (k == key) return v;
    return std::nullopt;
  }

 private:
  Row& put(const std::string& key, std::string v) {
    for (auto& [k, old] : cells_) {
      if (k == key) {
        old = std::move(v);
        return *this;
      }
    }
    cells_.emplace_back(key, std::move(v));
    return *this;
  }
  std::vector<std::pair<std::string, std::string>> cells_;
};

// Column set is the union of row keys in first-seen order.
class Table {
 public:
  void add(Row r) { rows_.push_back(std::move(r)); }
  std::size_t size() const { return rows_.size(); }
  const std::vector<Row>& rows() const { return rows_; }

  std::string csv() const {
    std::vector<std::string> cols;
    std::map<std::string, int> seen;
    for (const auto& r : rows_) {
      for (const auto& [k, _] : r.cells()) {
        if (!seen.count(k)) {
          seen[k] = static_cast<int>(cols.size());
          cols.push_back(k);
        }
      }
    }
    std::ostringstream os;
    os << "schema_version";
    for (const auto& c : cols) os << ',' << c;
    os << '\n';
    for (const auto& r : rows_) {
      std::vector<std::string> cells(cols.size());
      for (const auto& [k, v] : r.cells()) cells[seen[k]] = v;
      os << kCsvSchemaVersion;
      for (const auto& c : cells) os << ',' << c;
      os << '\n';
    }
    return os.str();
  }

 private:
  std::vector<Row> rows_;
};

// ---------------------------------------------------------------------------
// Points and parameter application

struct PointSpec {
  Row params;
  ModelSpec spec;
};

inline double interaction_c(const ModelSpec& s) {
  if (const auto* mf = mean_field(s)) return mf->c;
  return 0.0;
}

inline Row parameter_row(const ModelSpec& s) {
  Row r;
  r.set("M", s.num_goods).set("N", s.num_agents).set("beta", s.beta).set("w", s.mean_budget());
  double c = 0.0, k = 0.0, J = 0.0, rho = 0.0;
  if (const auto* mf = mean_field(s)) {
    c = mf->c;
    k = mf->k;
  }
  if (const auto* h = std::get_if<PairwiseHamiltonian>(&s.interaction)) {
    J = h->J;
    rho = h->rho;
  }
  r.set("c", c).set("k", k).set("J", J).set("rho", rho);
  r.set("mode", s.mode == DecisionMode::GlobalUtility ? "global" : "selfish");
  return r;
}

namespace detail {

inline bool uniform(const std::vector<double>& v) {
  for (double x : v) if (x != v.front()) return false;
  return true;
}

inline void apply_axis(ModelSpec& s, const std::string& name, double v) {
  if (name == "c") {
    MeanFieldPreference mf;
    if (const auto* cur = mean_field(s)) mf = *cur;
    else if (!std::holds_alternative<NonInteracting>(s.interaction)) throw ConfigError("axis c requires a mean-field model");
    mf.c = v;
    s.interaction = mf;
  } else if (name == "beta") {
    s.beta = v;
  } else if (name == "w") {
    s.budgets.assign(s.num_agents, v);
  } else if (name == "M") {
    if (!uniform(s.prices) || s.per_agent_preferences() || !uniform(s.preferences)) {
      throw ConfigError("axis M requires uniform prices and preferences");
    }
    const int M = static_cast<int>(v);
    if (M < 1 || M != v) throw ConfigError("axis M values must be positive integers");
    s.num_goods = M;
    s.prices.assign(M, s.prices.front());
    s.preferences.assign(M, s.preferences.front());
  } else if (name == "N") {
    const int N = static_cast<int>(v);
    if (N < 1 || N != v) throw ConfigError("axis N values must be positive integers");
    if (!uniform(s.budgets) || s.per_agent_preferences()) throw ConfigError("axis N requires uniform agents");
    s.num_agents = N;
    s.budgets.assign(N, s.budgets.front());
  } else if (name == "J" || name == "rho") {
    PairwiseHamiltonian h;
    if (const auto* cur = std::get_if<PairwiseHamiltonian>(&s.interaction)) h = *cur;
    else if (!std::holds_alternative<NonInteracting>(s.interaction)) throw ConfigError("axis J/rho requires a Hamiltonian model");
    (name == "J" ? h.J : h.rho) = v;
    s.interaction = h;
  } else {
    throw ConfigError("unknown sweep axis '" + name + "'");
  }
}

}  // namespace detail

inline PointSpec make_point(ModelSpec s) {
  s.validate();
  return {parameter_row(s), std::move(s)};
}

// Grid points, first axis slowest.
inline std::vector<PointSpec> sweep_points(const ModelSpec& base, const SweepSpec& sw) {
  sw.validate();
  std::vector<PointSpec> pts;
  const long n = sw.points();
  for (long idx = 0; idx < n; ++idx) {
    ModelSpec s = base;
    long rem = idx;
    std::vector<std::size_t> pos(sw.axes.size());
    for (int a = static_cast<int>(sw.axes.size()) - 1; a >= 0; --a) {
      const auto len = static_cast<long>(sw.axes[a].second.size());
      pos[a] = static_cast<std::size_t>(rem % len);
      rem /= len;
    }
    for (std::size_t a = 0; a < sw.axes.size(); ++a) detail::apply_axis(s, sw.axes[a].first, sw.axes[a].second[pos[a]]);
    pts.push_back(make_point(std::move(s)));
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Point evaluation

struct EvalOptions {
  bool theory = true;
  bool mc = true;
  bool slutsky = false;
  bool grand_canonical = false;
  bool canonical = true;
  int replicates = 1;
};

struct ChainRecord {
  long point = 0;
  int replicate = 0;
  std::string ensemble;
  bool equilibrated = true;
  double geweke_z = 0.0;
  std::vector<TraceRow> trace;
  std::vector<double> marginal;
};

struct PointOutput {
  std::vector<Row> mc_rows, slutsky_rows;
  std::optional<Row> theory_row;
  std::vector<ChainRecord> chains;
  std::string error;
  bool failed = false;
};

inline ChainConfig scaled_chain(const ChainConfig& base, double scale) {
  ChainConfig c = base;
  const long floor_len = static_cast<long>(c.thinning) * c.batch_count;
  c.measure_sweeps = std::max(floor_len, static_cast<long>(std::llround(base.measure_sweeps * scale)));
  if (base.burn_in_sweeps >= 0) c.burn_in_sweeps = static_cast<long>(std::llround(base.burn_in_sweeps * scale));
  return c;
}

inline Row slutsky_row(const SlutskyEstimate& e, const std::string& level) {
  const bool agg = level == "aggregate";
  const Matrix& S = agg ? e.aggregate : e.mean_individual;
  const Matrix& SE = agg ? e.aggregate_se : e.mean_individual_se;
  const SlutskyMetrics& m = agg ? e.aggregate_metrics : e.metrics;
  Row r;
  r.set("method", method_name(e.method)).set("level", level);
  r.matrix("S_", S);
  r.matrix("SE_", SE.size() ? SE : Matrix::Zero(S.rows(), S.cols()));
  r.set("max_re_lambda", m.max_real).set("trace", m.trace).set("chi", m.chi).set("chi_underflow", m.chi_underflow);
  r.set("homogeneity_residual", m.homogeneity_residual);
  return r;
}

// Analytic columns for a point; pure function of the parameters.
inline Row theory_row(const ModelSpec& spec) {
  Row r;
  const double w = spec.mean_budget();
  const int M = spec.num_goods;
  std::string note;
  try {
    if (std::holds_alternative<PairwiseHamiltonian>(spec.interaction)) {
      const auto h = hamiltonian_meanfield(spec, w);
      for (int i = 0; i < M; ++i) r.set("xbar_" + std::to_string(i), h.x[i]);
      bool stable = true;
      for (bool b : h.stable) stable = stable && b;
      r.set("stable", stable).set("J_crit", h.J_crit ? *h.J_crit : Infinity);
    } else if (spec.per_agent_preferences()) {
      const auto ni = noninteracting_solution(spec);
      for (int i = 0; i < M; ++i) r.set("xbar_" + std::to_string(i), ni.means.col(i).mean());
    } else {
      const auto sad = solve_saddle(spec, w);
      r.set("branch", sad.branch == Branch::Condensed ? "condensed" : "non_condensed");
      r.set("dominant_good", sad.dominant_good).set("herfindahl", sad.herfindahl).set("mu", sad.mu);
      r.set("free_energy", sad.free_energy);
      for (int i = 0; i < M; ++i) r.set("xbar_" + std::to_string(i), sad.xbar[i]);
      const auto cc = critical_c(spec, w);
      r.set("c_inf", cc.c_inf ? *cc.c_inf : Infinity).set("c_crit", cc.c_crit ? *cc.c_crit : Infinity);
      if (spec.finite_beta()) {
        std::vector<double> xb(sad.xbar.data(), sad.xbar.data() + M);
        r.set("sigma2", budget_variance_sigma2(spec, xb));
      }
      ModelSpec inf = spec;
      inf.beta = Infinity;
      const auto si = spec.finite_beta() ? solve_saddle(inf, w) : sad;
      std::vector<double> xi(si.xbar.data(), si.xbar.data() + M);
      const auto cf = closed_form_estimate(inf, xi);
      r.matrix("cf_S_", cf.mean_individual);
      r.set("cf_max_re_lambda", cf.metrics.max_real).set("cf_trace", cf.metrics.trace).set("cf_chi", cf.metrics.chi);
      r.set("cf_aggregate_chi", cf.aggregate_metrics.chi);
      r.set("cf_homogeneity_residual", cf.metrics.homogeneity_residual);
    }
  } catch (const Error& e) {
    note = e.what();
  }
  r.set("theory_note", note);
  return r;
}

inline Row observable_row(const ObservableSet& o) {
  Row r;
  r.set("acceptance", o.acceptance_rate).set("herfindahl", o.herfindahl).set("herfindahl_se", o.herfindahl_se);
  r.set("herfindahl_of_mean", o.herfindahl_of_mean);
  r.set("geweke_z", o.geweke_z).set("equilibrated", o.equilibrated).set("samples", o.samples);
  for (int i = 0; i < o.M; ++i) {
    r.set("xbar_" + std::to_string(i), o.mean_basket[i]).set("xbar_se_" + std::to_string(i), o.mean_basket_se[i]);
  }
  for (int i = 0; i < o.M; ++i) {
    r.set("var_" + std::to_string(i), o.cov_same(i, i)).set("var_se_" + std::to_string(i), o.cov_same_se(i, i));
  }
  r.set("budget_mean", o.budget_mean).set("budget_mean_se", o.budget_mean_se);
  r.set("budget_var", o.budget_var).set("budget_var_se", o.budget_var_se).set("mu", o.mu);
  r.set("calibration_rounds", o.calibration_rounds);
  return r;
}

inline PointOutput evaluate_point(const RunConfig& rc, const PointSpec& pt, long index, const EvalOptions& opt) {
  PointOutput out;
  const ModelSpec& spec = pt.spec;
  try {
    if (opt.theory) {
      Row t;
      t.set("point", index).append(pt.params).append(theory_row(spec));
      out.theory_row = t;
    }
    if (!opt.mc) return out;
    ChainConfig base = scaled_chain(rc.chain, rc.scale);
    const bool want_fr = opt.slutsky && std::find(rc.slutsky.methods.begin(), rc.slutsky.methods.end(), "fr") !=
                                            rc.slutsky.methods.end();
    if (want_fr && std::find(base.reference_goods.begin(), base.reference_goods.end(), rc.slutsky.reference_good) ==
                       base.reference_goods.end()) {
      base.reference_goods.push_back(rc.slutsky.reference_good);
    }
    for (int rep = 0; rep < opt.replicates; ++rep) {
      ChainConfig cfg = base;
      cfg.seed = derive_seed(rc.seed, static_cast<std::uint64_t>(index), static_cast<std::uint64_t>(rep));
      auto record = [&](const ObservableSet& o, const char* ens) {
        Row r;
        r.set("point", index).set("replicate", rep).set("seed", cfg.seed).set("ensemble", ens);
        r.append(pt.params).append(observable_row(o));
        out.mc_rows.push_back(r);
        out.chains.push_back({index, rep, ens, o.equilibrated, o.geweke_z, o.trace, o.marginal});
        return r;
      };
      if (opt.canonical) {
        const auto o = run_chain(spec, cfg);
        record(o, "canonical");
        if (opt.slutsky) {
          auto srow = [&](const SlutskyEstimate& e) {
            for (const char* level : {"individual", "aggregate"}) {
              Row r;
              r.set("point", index).set("replicate", rep).set("seed", cfg.seed);
              r.append(pt.params).append(slutsky_row(e, level));
              out.slutsky_rows.push_back(r);
            }
          };
          for (const auto& m : rc.slutsky.methods) {
            if (m == "fr") {
              WealthMap wm = rc.slutsky.wealth_map;
              if (wm.kappa.empty()) {
                const auto prop = WealthMap::proportional(spec);
                wm.kappa = prop.kappa;
              }
              srow(fr_slutsky(spec, o, rc.slutsky.reference_good, wm));
            } else if (m == "pathwise") {
              ChainConfig pc = cfg;
              pc.trace_every = 0;
              pc.record_marginal = false;
              pc.reference_goods.clear();
              srow(pathwise_estimate(spec, pathwise_slutsky(spec, pc, rc.slutsky.rel_step, BudgetChains::Auto, 1)));
            } else if (m == "closed_form" && rep == 0) {
              if (!spec.per_agent_preferences() && !std::holds_alternative<PairwiseHamiltonian>(spec.interaction)) {
                ModelSpec inf = spec;
                inf.beta = Infinity;
                const auto si = solve_saddle(inf, spec.mean_budget());
                std::vector<double> xi(si.xbar.data(), si.xbar.data() + spec.num_goods);
                srow(closed_form_estimate(inf, xi));
              }
            }
          }
        }
      }
      if (opt.grand_canonical) {
        ChainConfig gc = cfg;
        gc.seed = derive_seed(cfg.seed, 1);
        const bool saddle_model = !spec.per_agent_preferences() && !std::holds_alternative<PairwiseHamiltonian>(spec.interaction);
        if (gc.initial_basket.empty() && saddle_model) {
          const auto sad = solve_saddle(spec, spec.mean_budget());
          gc.initial_basket.assign(sad.xbar.data(), sad.xbar.data() + spec.num_goods);
        }
        const auto o = run_grand_canonical_chain(spec, gc);
        record(o, "grand_canonical");
        if (saddle_model) {
          const auto at = solve_saddle(spec, o.budget_mean);
          out.mc_rows.back().set("sigma2_at_budget_mean", budget_variance_sigma2(spec, std::vector<double>(at.xbar.data(), at.xbar.data() + spec.num_goods)));
        }
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    out.failed = true;
    out.error = e.what();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run outputs and manifest

struct RunResult {
  Table points, slutsky_table, theory, extra;
  std::string extra_name;  // file name for `extra`, empty if unused
  std::vector<ChainRecord> chains;
  std::vector<std::pair<long, std::string>> failures;
  Json manifest;
  std::vector<std::string> files;
  int exit_code = 0;
};

inline void collect(RunResult& res, std::vector<PointOutput>&& outs) {
  for (long i = 0; i < static_cast<long>(outs.size()); ++i) {
    auto& o = outs[i];
    if (o.theory_row) res.theory.add(*o.theory_row);
    for (auto& r : o.mc_rows) res.points.add(r);
    for (auto& r : o.slutsky_rows) res.slutsky_table.add(r);
    for (auto& c : o.chains) res.chains.push_back(std::move(c));
    if (o.failed) res.failures.emplace_back(i, o.error);
  }
}

inline RunResult run_points(const RunConfig& rc, const std::vector<PointSpec>& pts, const EvalOptions& opt,
                            int threads) {
  RunResult res;
  auto outs = parallel_map<PointOutput>(pts.size(), threads, [&](std::size_t i) {
    return evaluate_point(rc, pts[i], static_cast<long>(i), opt);
  });
  collect(res, std::move(outs));
  return res;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + p.string() + "'");
  f << s;
}

inline std::string hex64(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Writes every table and the manifest into `dir`.
inline void write_outputs(RunResult& res, const RunConfig& rc, const std::filesystem::path& dir, double wall,
                          int threads) {
  std::filesystem::create_directories(dir);
  Json files = Json::array();
  auto emit = [&](const std::string& name, const std::string& body, std::size_t rows) {
    write_text(dir / name, body);
    res.files.push_back(name);
    Json f;
    f["name"] = name;
    f["rows"] = rows;
    f["fnv1a64"] = hex64(fnv1a64(body));
    files.push_back(f);
  };
  if (res.points.size()) emit("points.csv", res.points.csv(), res.points.size());
  if (res.slutsky_table.size()) emit("slutsky.csv", res.slutsky_table.csv(), res.slutsky_table.size());
  if (res.theory.size()) emit("theory.csv", res.theory.csv(), res.theory.size());
  if (res.extra.size()) emit(res.extra_name, res.extra.csv(), res.extra.size());
  Json eq = Json::array();
  bool all_eq = true;
  for (const auto& c : res.chains) {
    Json e;
    e["point"] = c.point;
    e["replicate"] = c.replicate;
    e["ensemble"] = c.ensemble;
    e["equilibrated"] = c.equilibrated;
    e["geweke_z"] = detail::number_json(c.geweke_z);
    eq.push_back(e);
    all_eq = all_eq && c.equilibrated;
    const std::string tag = "p" + std::to_string(c.point) + "_r" + std::to_string(c.replicate) + "_" + c.ensemble;
    if (!c.trace.empty()) {
      Table t;
      for (const auto& tr : c.trace) {
        Row r;
        r.set("sweep", tr.sweep);
        for (std::size_t i = 0; i < tr.mean_basket.size(); ++i) r.set("xbar_" + std::to_string(i), tr.mean_basket[i]);
        r.set("herfindahl", tr.herfindahl).set("acceptance", tr.acceptance);
        t.add(r);
      }
      emit("trace_" + tag + ".csv", t.csv(), t.size());
    }
    if (!c.marginal.empty()) {
      Table t;
      for (double v : c.marginal) {
        Row r;
        r.set("x_0", v);
        t.add(r);
      }
      emit("marginal_" + tag + ".csv", t.csv(), t.size());
    }
  }
  Json fails = Json::array();
  for (const auto& [p, msg] : res.failures) {
    Json f;
    f["point"] = p;
    f["error"] = msg;
    fails.push_back(f);
  }
  const Json cfg = run_config_to_json(rc);
  const ChainConfig eff = scaled_chain(rc.chain, rc.scale);
  Json m;
  m["manifest_version"] = kManifestVersion;
  m["tool"] = "slutskylab";
  m["tool_version"] = kToolVersion;
  m["command"] = rc.command;
  m["seed"] = rc.seed;
  m["config"] = cfg;
  m["input_hash"] = hex64(fnv1a64(cfg.dump()));
  Json d;
  d["effective_measure_sweeps"] = eff.measure_sweeps;
  d["effective_burn_in_sweeps"] = eff.burn_in();
  d["burn_in_rule"] = "measure_sweeps / 10 unless burn_in_sweeps is set";
  d["error_bars"] = "batch means over batch_count batches; jackknife for derived estimators";
  d["equilibration_check"] = "mean drift z, first 10% vs last 50% of the measurement window, |z| < 3";
  d["sweep_definition"] = "one sweep is N single-agent proposals";
  m["defaults"] = d;
  m["threads"] = threads;
  m["wall_clock_seconds"] = wall;
  m["all_equilibrated"] = all_eq;
  m["equilibration"] = eq;
  m["failed_points"] = fails;
  m["files"] = files;
  res.manifest = m;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Experiments

namespace detail {

inline double ccrit_or_throw(const ModelSpec& s) {
  const auto cc = critical_c(s, s.mean_budget());
  if (!cc.c_crit) throw ConfigError("no finite critical c for this model");
  return *cc.c_crit;
}

inline ModelSpec with_c(ModelSpec s, double c) {
  apply_axis(s, "c", c);
  return s;
}

// c grid either absolute or in units of c_crit at the model's β.
inline std::vector<double> c_grid(const ModelSpec& s, const PhaseOptions& ph) {
  if (!ph.c_over_ccrit.empty()) {
    const double cc = ccrit_or_throw(s);
    std::vector<double> v;
    for (double r : ph.c_over_ccrit) v.push_back(r * cc);
    return v;
  }
  if (!ph.c_values.empty()) return ph.c_values;
  return {interaction_c(s)};
}

inline std::vector<double> logspace(double a, double b, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(std::exp(std::log(a) + (std::log(b) - std::log(a)) * i / std::max(1, n - 1)));
  return v;
}

}  // namespace detail

// Default configuration tree for a named experiment.
inline Json experiment_defaults(const std::string& fig) {
  Json j;
  j["command"] = "reproduce";
  j["figure"] = fig;
  Json chain;
  chain["measure_sweeps"] = 100000;
  chain["proposal_sigma"] = "auto";
  if (fig == "fig1") {
    j["model"] = {{"goods", 6}, {"agents", 64}, {"beta", 100.0}, {"budgets", 10.0},
                  {"interaction", {{"type", "mean_field"}, {"c", 0.01}, {"k", 2.0}}}};
  } else if (fig == "fig2") {
    j["model"] = {{"goods", 4}, {"agents", 64}, {"beta", 10.0}, {"budgets", 10.0},
                  {"interaction", {{"type", "mean_field"}, {"c", 0.0}, {"k", 2.0}}}};
    j["phase"] = {{"betas", {1.0, 4.0, 10.0}},
                  {"c_over_ccrit", {0.25, 0.5, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.35, 1.5, 2.0, 3.0}},
                  {"mc", true}};
  } else if (fig == "fig3" || fig == "fig4") {
    j["model"] = {{"goods", 4}, {"agents", 16}, {"beta", fig == "fig3" ? Json(4.0) : Json("inf")},
                  {"budgets", 10.0}, {"prices", {2.2, 2.1, 1.6, 2.3}}, {"preferences", 1.0},
                  {"interaction", {{"type", "mean_field"}, {"c", 0.0}, {"k", 2.0}}}};
    if (fig == "fig3") {
      j["phase"] = {{"c_over_ccrit", {0.1, 0.25, 0.5, 0.75, 1.5, 2.0, 4.0, 10.0}}, {"mc", true}};
      chain["reference_goods"] = {0};
    } else {
      j["phase"] = {{"c_over_ccrit", Json::array()}, {"mc", false}, {"curve_points", 40}};
    }
  } else if (fig == "fig5") {
    chain["measure_sweeps"] = 25000;
    j["model"] = {{"goods", 4}, {"agents", 4096}, {"beta", 1.0}, {"budgets", 10.0},
                  {"interaction", {{"type", "mean_field"}, {"c", 0.0}, {"k", 2.0}}}};
    j["phase"] = {{"betas", {1.0, 4.0}}, {"c_over_ccrit", {0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0}}, {"mc", true}};
  } else {
    throw ConfigError("unknown experiment '" + fig + "' (expected fig1..fig5)");
  }
  j["chain"] = chain;
  return j;
}

// Overrides are merged onto the experiment defaults before strict parsing.
inline RunConfig experiment_config(const std::string& fig, const Json& overrides = Json::object()) {
  Json j = experiment_defaults(fig);
  Json o = overrides.contains("manifest_version") ? overrides.at("config") : overrides;
  if (o.contains("figure") && o["figure"] != fig) throw ConfigError("config is for experiment " + o["figure"].dump());
  j.merge_patch(o);
  j["command"] = "reproduce";
  j["figure"] = fig;
  return run_config_from_json(j);
}

// Phase diagram: H̃ over (β, c) grid plus the critical line.
inline RunResult run_phase_diagram(const RunConfig& rc, int threads) {
  std::vector<double> betas = rc.phase.betas.empty() ? std::vector<double>{rc.model.beta} : rc.phase.betas;
  std::vector<PointSpec> pts;
  for (double b : betas) {
    ModelSpec s = rc.model;
    s.beta = b;
    for (double c : detail::c_grid(s, rc.phase)) {
      auto p = make_point(detail::with_c(s, c));
      if (!rc.phase.c_over_ccrit.empty()) p.params.set("c_over_ccrit", c / detail::ccrit_or_throw(s));
      pts.push_back(std::move(p));
    }
  }
  EvalOptions opt;
  opt.mc = rc.phase.mc;
  RunResult res = run_points(rc, pts, opt, threads);
  res.extra_name = "critical_line.csv";
  const auto grid = detail::logspace(0.1, 1000.0, std::max(2, rc.phase.curve_points));
  for (double b : grid) {
    ModelSpec s = rc.model;
    s.beta = b;
    const auto cc = critical_c(s, s.mean_budget());
    Row r;
    r.set("beta", b).set("c_crit", cc.c_crit ? *cc.c_crit : Infinity).set("c_inf", cc.c_inf ? *cc.c_inf : Infinity);
    res.extra.add(r);
  }
  return res;
}

inline RunResult run_experiment(const RunConfig& rc, int threads) {
  const std::string& fig = rc.figure;
  if (fig == "fig1") {
    std::vector<PointSpec> pts;
    for (auto [w, c] : {std::pair{0.5, 1.0}, std::pair{10.0, 0.01}, std::pair{10.0, 0.1}}) {
      ModelSpec s = rc.model;
      s.budgets.assign(s.num_agents, w);
      s = detail::with_c(s, c);
      pts.push_back(make_point(s));
    }
    EvalOptions opt;
    RunResult res = run_points(rc, pts, opt, threads);
    // β→∞ reference for each regime.
    res.extra_name = "theory_beta_inf.csv";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      ModelSpec s = pts[i].spec;
      s.beta = Infinity;
      Row r;
      r.set("point", static_cast<long>(i)).append(parameter_row(s)).append(theory_row(s));
      res.extra.add(r);
    }
    return res;
  }
  if (fig == "fig2") return run_phase_diagram(rc, threads);
  if (fig == "fig3") {
    std::vector<PointSpec> pts;
    for (double c : detail::c_grid(rc.model, rc.phase)) {
      auto p = make_point(detail::with_c(rc.model, c));
      if (!rc.phase.c_over_ccrit.empty()) p.params.set("c_over_ccrit", c / detail::ccrit_or_throw(rc.model));
      pts.push_back(std::move(p));
    }
    EvalOptions opt;
    opt.slutsky = true;
    return run_points(rc, pts, opt, threads);
  }
  if (fig == "fig4") {
    ModelSpec s = rc.model;
    s.beta = Infinity;
    std::vector<double> cs = rc.phase.c_values;
    if (cs.empty()) {
      const double ci = detail::ccrit_or_throw(s);
      cs = detail::logspace(0.05 * ci, 100.0 * ci, std::max(2, rc.phase.curve_points));
    }
    std::vector<PointSpec> pts;
    for (double c : cs) pts.push_back(make_point(detail::with_c(s, c)));
    EvalOptions opt;
    opt.mc = false;
    return run_points(rc, pts, opt, threads);
  }
  if (fig == "fig5") {
    std::vector<double> betas = rc.phase.betas.empty() ? std::vector<double>{rc.model.beta} : rc.phase.betas;
    std::vector<PointSpec> pts;
    for (double b : betas) {
      ModelSpec s = rc.model;
      s.beta = b;
      for (double c : detail::c_grid(s, rc.phase)) {
        auto p = make_point(detail::with_c(s, c));
        if (!rc.phase.c_over_ccrit.empty()) p.params.set("c_over_ccrit", c / detail::ccrit_or_throw(s));
        pts.push_back(std::move(p));
      }
    }
    EvalOptions opt;
    opt.canonical = false;
    opt.grand_canonical = rc.phase.mc;
    opt.mc = rc.phase.mc;
    return run_points(rc, pts, opt, threads);
  }
  throw ConfigError("unknown experiment '" + fig + "'");
}

inline RunResult run_sweep(const RunConfig& rc, int threads) {
  EvalOptions opt;
  opt.replicates = rc.sweep.replicates;
  opt.grand_canonical = rc.ensemble == Ensemble::GrandCanonical;
  opt.canonical = !opt.grand_canonical;
  return run_points(rc, sweep_points(rc.model, rc.sweep), opt, threads);
}

// Dispatches a resolved configuration; the command and figure are taken from the config.
inline RunResult run_command(const RunConfig& rc, int threads) {
  const auto& cmd = rc.command;
  if (cmd == "reproduce") return run_experiment(rc, threads);
  if (cmd == "sweep") return run_sweep(rc, threads);
  if (cmd == "phase-diagram") return run_phase_diagram(rc, threads);
  const std::vector<PointSpec> pts{make_point(rc.model)};
  EvalOptions opt;
  if (cmd == "simulate") {
    opt.grand_canonical = rc.ensemble == Ensemble::GrandCanonical;
    opt.canonical = !opt.grand_canonical;
  } else if (cmd == "solve") {
    opt.mc = false;
  } else if (cmd == "slutsky") {
    opt.slutsky = true;
  } else if (cmd == "ensemble-check") {
    opt.grand_canonical = true;
  } else {
    throw ConfigError("unknown command '" + cmd + "'");
  }
  return run_points(rc, pts, opt, threads);
}

// Runs and persists; exit code 3 if any point failed numerically.
inline RunResult execute(const RunConfig& rc, const std::filesystem::path& out, int threads) {
  const auto t0 = std::chrono::steady_clock::now();
  RunResult res = run_command(rc, threads);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_outputs(res, rc, out, wall, threads);
  res.exit_code = res.failures.empty() ? 0 : 3;
  return res;
}

}  // namespace slutsky
