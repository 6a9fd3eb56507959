#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "slutskylab/errors.hpp"
#include "slutskylab/model.hpp"
#include "slutskylab/sampler.hpp"
#include "slutskylab/slutsky.hpp"

namespace slutsky {

using Json = nlohmann::ordered_json;

inline constexpr int kConfigVersion = 1;

struct SlutskyOptions {
  std::vector<std::string> methods{"fr", "pathwise", "closed_form"};
  int reference_good = 0;
  double rel_step = 1e-2;
  WealthMap wealth_map;  // Proportional by default
};

struct PhaseOptions {
  std::vector<double> c_over_ccrit;  // MC/theory grid in units of c_crit(β)
  std::vector<double> c_values;      // absolute grid (used when c_over_ccrit is empty)
  std::vector<double> betas;
  bool mc = true;
  int curve_points = 48;  // theory c_crit(β) curve samples
};

struct SweepSpec {
  std::vector<std::pair<std::string, std::vector<double>>> axes;  // ordered, first axis slowest
  int replicates = 1;
  long max_points = 10000;

  long points() const {
    long n = 1;
    for (const auto& [_, v] : axes) n *= static_cast<long>(v.size());
    return axes.empty() ? 1 : n;
  }
  void validate() const {
    static const std::set<std::string> names{"c", "beta", "w", "M", "N", "J", "rho"};
    std::set<std::string> seen;
    for (const auto& [k, v] : axes) {
      if (!names.count(k)) throw ConfigError("unknown sweep axis '" + k + "'");
      if (!seen.insert(k).second) throw ConfigError("duplicate sweep axis '" + k + "'");
      if (v.empty()) throw ConfigError("sweep axis '" + k + "' is empty");
    }
    if (replicates < 1) throw ConfigError("replicates must be >= 1");
    if (max_points < 1) throw ConfigError("max_points must be >= 1");
    if (points() > max_points) throw ConfigError("sweep exceeds max_points");
  }
};

struct RunConfig {
  std::string command = "simulate";
  std::string figure;  // reproduce only
  ModelSpec model;
  ChainConfig chain;
  Ensemble ensemble = Ensemble::Canonical;
  SlutskyOptions slutsky;
  PhaseOptions phase;
  SweepSpec sweep;
  std::uint64_t seed = 1;
  double scale = 1.0;
};

namespace detail {

inline void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> ok;
  for (const char* k : allowed) ok.insert(k);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ok.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

inline double get_number(const Json& j, const std::string& where) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "Infinity") return Infinity;
  }
  throw ConfigError(where + " must be a number");
}

inline std::uint64_t get_u64(const Json& j, const std::string& where) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<long long>() >= 0) return static_cast<std::uint64_t>(j.get<long long>());
  throw ConfigError(where + " must be a nonnegative integer");
}

inline long get_long(const Json& j, const std::string& where) {
  if (j.is_number_integer()) return j.get<long>();
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (v == std::floor(v)) return static_cast<long>(v);
  }
  throw ConfigError(where + " must be an integer");
}

inline std::vector<double> get_vector(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + " must be an array");
  std::vector<double> v;
  for (const auto& e : j) v.push_back(get_number(e, where));
  return v;
}

// Scalar broadcast or explicit list.
inline std::vector<double> get_broadcast(const Json& j, std::size_t n, const std::string& where) {
  if (j.is_array()) return get_vector(j, where);
  return std::vector<double>(n, get_number(j, where));
}

inline Json number_json(double v) {
  if (std::isinf(v)) return v > 0 ? Json("inf") : Json("-inf");
  return Json(v);
}

inline Json vector_json(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(number_json(x));
  return a;
}

}  // namespace detail

inline ModelSpec model_from_json(const Json& j) {
  using namespace detail;
  check_keys(j, {"goods", "agents", "prices", "preferences", "budgets", "beta", "interaction", "mode"}, "model");
  ModelSpec s;
  if (!j.contains("goods") || !j.contains("agents")) throw ConfigError("model needs goods and agents");
  s.num_goods = static_cast<int>(get_long(j["goods"], "model.goods"));
  s.num_agents = static_cast<int>(get_long(j["agents"], "model.agents"));
  if (s.num_goods < 1 || s.num_agents < 1) throw ConfigError("goods and agents must be positive");
  s.prices = j.contains("prices") ? get_broadcast(j["prices"], s.num_goods, "model.prices")
                                  : std::vector<double>(s.num_goods, 1.0);
  s.preferences = j.contains("preferences") ? get_broadcast(j["preferences"], s.num_goods, "model.preferences")
                                            : std::vector<double>(s.num_goods, 1.0);
  s.budgets = j.contains("budgets") ? get_broadcast(j["budgets"], s.num_agents, "model.budgets")
                                    : std::vector<double>(s.num_agents, 1.0);
  if (j.contains("beta")) s.beta = get_number(j["beta"], "model.beta");
  if (j.contains("interaction")) {
    const auto& ji = j["interaction"];
    if (!ji.is_object() || !ji.contains("type")) throw ConfigError("model.interaction needs a type");
    const auto type = ji["type"].get<std::string>();
    if (type == "none") {
      check_keys(ji, {"type"}, "model.interaction");
      s.interaction = NonInteracting{};
    } else if (type == "mean_field") {
      check_keys(ji, {"type", "c", "k"}, "model.interaction");
      MeanFieldPreference mf;
      if (ji.contains("c")) mf.c = get_number(ji["c"], "interaction.c");
      if (ji.contains("k")) mf.k = get_number(ji["k"], "interaction.k");
      s.interaction = mf;
    } else if (type == "hamiltonian") {
      check_keys(ji, {"type", "J", "rho"}, "model.interaction");
      PairwiseHamiltonian h;
      if (ji.contains("J")) h.J = get_number(ji["J"], "interaction.J");
      if (ji.contains("rho")) h.rho = get_number(ji["rho"], "interaction.rho");
      s.interaction = h;
    } else {
      throw ConfigError("unknown interaction type '" + type + "'");
    }
  }
  if (j.contains("mode")) {
    const auto m = j["mode"].get<std::string>();
    if (m == "global") s.mode = DecisionMode::GlobalUtility;
    else if (m == "selfish") s.mode = DecisionMode::SelfishConstantC;
    else throw ConfigError("model.mode must be 'global' or 'selfish'");
  }
  try {
    s.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return s;
}

inline Json model_to_json(const ModelSpec& s) {
  using namespace detail;
  Json j;
  j["goods"] = s.num_goods;
  j["agents"] = s.num_agents;
  j["prices"] = vector_json(s.prices);
  j["preferences"] = vector_json(s.preferences);
  j["budgets"] = vector_json(s.budgets);
  j["beta"] = number_json(s.beta);
  Json ji;
  if (const auto* mf = std::get_if<MeanFieldPreference>(&s.interaction)) {
    ji["type"] = "mean_field";
    ji["c"] = mf->c;
    ji["k"] = mf->k;
  } else if (const auto* h = std::get_if<PairwiseHamiltonian>(&s.interaction)) {
    ji["type"] = "hamiltonian";
    ji["J"] = h->J;
    ji["rho"] = h->rho;
  } else {
    ji["type"] = "none";
  }
  j["interaction"] = ji;
  j["mode"] = s.mode == DecisionMode::GlobalUtility ? "global" : "selfish";
  return j;
}

inline void chain_from_json(const Json& j, ChainConfig& c, Ensemble& ens) {
  using namespace detail;
  check_keys(j, {"seed", "burn_in_sweeps", "measure_sweeps", "thinning", "proposal_sigma", "batch_count",
                 "reference_goods", "record_marginal", "trace_every", "ensemble", "initial_basket"},
             "chain");
  if (j.contains("seed")) c.seed = get_u64(j["seed"], "chain.seed");
  if (j.contains("burn_in_sweeps")) c.burn_in_sweeps = get_long(j["burn_in_sweeps"], "chain.burn_in_sweeps");
  if (j.contains("measure_sweeps")) c.measure_sweeps = get_long(j["measure_sweeps"], "chain.measure_sweeps");
  if (j.contains("thinning")) c.thinning = get_long(j["thinning"], "chain.thinning");
  if (j.contains("proposal_sigma")) {
    c.auto_proposal = j["proposal_sigma"] == "auto";
    if (!c.auto_proposal) c.proposal_sigma = get_number(j["proposal_sigma"], "chain.proposal_sigma");
  }
  if (j.contains("batch_count")) c.batch_count = static_cast<int>(get_long(j["batch_count"], "chain.batch_count"));
  if (j.contains("reference_goods")) {
    c.reference_goods.clear();
    for (double v : get_vector(j["reference_goods"], "chain.reference_goods")) c.reference_goods.push_back(static_cast<int>(v));
  }
  if (j.contains("record_marginal")) c.record_marginal = j["record_marginal"].get<bool>();
  if (j.contains("trace_every")) c.trace_every = get_long(j["trace_every"], "chain.trace_every");
  if (j.contains("initial_basket")) c.initial_basket = get_vector(j["initial_basket"], "chain.initial_basket");
  if (j.contains("ensemble")) {
    const auto e = j["ensemble"].get<std::string>();
    if (e == "canonical") ens = Ensemble::Canonical;
    else if (e == "grand_canonical") ens = Ensemble::GrandCanonical;
    else throw ConfigError("chain.ensemble must be 'canonical' or 'grand_canonical'");
  }
}

inline Json chain_to_json(const ChainConfig& c, Ensemble ens) {
  Json j;
  j["seed"] = c.seed;
  j["burn_in_sweeps"] = c.burn_in();
  j["measure_sweeps"] = c.measure_sweeps;
  j["thinning"] = c.thinning;
  j["proposal_sigma"] = c.auto_proposal ? Json("auto") : Json(c.proposal_sigma);
  j["batch_count"] = c.batch_count;
  j["reference_goods"] = c.reference_goods;
  j["record_marginal"] = c.record_marginal;
  j["trace_every"] = c.trace_every;
  if (!c.initial_basket.empty()) j["initial_basket"] = c.initial_basket;
  j["ensemble"] = ens == Ensemble::Canonical ? "canonical" : "grand_canonical";
  return j;
}

inline WealthMap wealth_map_from_json(const Json& j) {
  using namespace detail;
  check_keys(j, {"type", "q", "w0", "kappa"}, "slutsky.wealth_map");
  const auto type = j.value("type", std::string("proportional"));
  WealthMap m;
  if (type == "proportional") {
    if (j.contains("q") || j.contains("w0") || j.contains("kappa")) {
      throw ConfigError("proportional wealth map takes no parameters");
    }
    m.kind = WealthMap::Kind::Proportional;
  } else if (type == "power") {
    m.kind = WealthMap::Kind::Power;
    if (j.contains("q")) m.q = get_number(j["q"], "wealth_map.q");
    if (j.contains("w0")) m.w0 = get_number(j["w0"], "wealth_map.w0");
    if (j.contains("kappa")) m.kappa = detail::get_vector(j["kappa"], "wealth_map.kappa");
  } else {
    throw ConfigError("wealth_map.type must be 'proportional' or 'power'");
  }
  return m;
}

inline Json wealth_map_to_json(const WealthMap& m) {
  Json j;
  if (m.kind == WealthMap::Kind::Proportional) {
    j["type"] = "proportional";
  } else {
    j["type"] = "power";
    j["q"] = m.q;
    j["w0"] = m.w0;
    j["kappa"] = detail::vector_json(m.kappa);
  }
  return j;
}

inline RunConfig run_config_from_json(const Json& jin) {
  using namespace detail;
  const Json& j = jin.contains("manifest_version") ? jin.at("config") : jin;
  check_keys(j, {"config_version", "command", "figure", "model", "chain", "slutsky", "phase", "sweep", "seed", "scale"},
             "config");
  RunConfig rc;
  if (j.contains("config_version") && get_long(j["config_version"], "config_version") != kConfigVersion) {
    throw ConfigError("unsupported config_version");
  }
  if (j.contains("command")) rc.command = j["command"].get<std::string>();
  if (j.contains("figure")) rc.figure = j["figure"].get<std::string>();
  if (!j.contains("model")) throw ConfigError("config needs a model section");
  rc.model = model_from_json(j["model"]);
  if (j.contains("chain")) chain_from_json(j["chain"], rc.chain, rc.ensemble);
  if (j.contains("slutsky")) {
    const auto& js = j["slutsky"];
    check_keys(js, {"methods", "reference_good", "rel_step", "wealth_map"}, "slutsky");
    if (js.contains("methods")) {
      rc.slutsky.methods.clear();
      for (const auto& m : js["methods"]) {
        const auto s = m.get<std::string>();
        if (s != "fr" && s != "pathwise" && s != "closed_form") throw ConfigError("unknown Slutsky method '" + s + "'");
        rc.slutsky.methods.push_back(s);
      }
    }
    if (js.contains("reference_good")) rc.slutsky.reference_good = static_cast<int>(get_long(js["reference_good"], "slutsky.reference_good"));
    if (js.contains("rel_step")) rc.slutsky.rel_step = get_number(js["rel_step"], "slutsky.rel_step");
    if (js.contains("wealth_map")) rc.slutsky.wealth_map = wealth_map_from_json(js["wealth_map"]);
  }
  if (j.contains("phase")) {
    const auto& jp = j["phase"];
    check_keys(jp, {"c_over_ccrit", "c_values", "betas", "mc", "curve_points"}, "phase");
    if (jp.contains("c_over_ccrit")) rc.phase.c_over_ccrit = get_vector(jp["c_over_ccrit"], "phase.c_over_ccrit");
    if (jp.contains("c_values")) rc.phase.c_values = get_vector(jp["c_values"], "phase.c_values");
    if (jp.contains("betas")) rc.phase.betas = get_vector(jp["betas"], "phase.betas");
    if (jp.contains("mc")) rc.phase.mc = jp["mc"].get<bool>();
    if (jp.contains("curve_points")) rc.phase.curve_points = static_cast<int>(get_long(jp["curve_points"], "phase.curve_points"));
  }
  if (j.contains("sweep")) {
    const auto& jw = j["sweep"];
    check_keys(jw, {"axes", "replicates", "max_points"}, "sweep");
    if (jw.contains("axes")) {
      if (!jw["axes"].is_object()) throw ConfigError("sweep.axes must be an object");
      for (auto it = jw["axes"].begin(); it != jw["axes"].end(); ++it) {
        rc.sweep.axes.emplace_back(it.key(), get_vector(it.value(), "sweep.axes." + it.key()));
      }
    }
    if (jw.contains("replicates")) rc.sweep.replicates = static_cast<int>(get_long(jw["replicates"], "sweep.replicates"));
    if (jw.contains("max_points")) rc.sweep.max_points = get_long(jw["max_points"], "sweep.max_points");
    rc.sweep.validate();
  }
  if (j.contains("seed")) rc.seed = get_u64(j["seed"], "seed");
  if (j.contains("scale")) rc.scale = get_number(j["scale"], "scale");
  if (!(rc.scale > 0.0) || !std::isfinite(rc.scale)) throw ConfigError("scale must be > 0");
  rc.chain.validate(rc.model.num_goods);
  rc.slutsky.wealth_map.validate();
  if (!(rc.slutsky.rel_step > 0.0 && rc.slutsky.rel_step < 0.1)) throw ConfigError("rel_step must lie in (0, 0.1)");
  return rc;
}

inline Json run_config_to_json(const RunConfig& rc) {
  using namespace detail;
  Json j;
  j["config_version"] = kConfigVersion;
  j["command"] = rc.command;
  if (!rc.figure.empty()) j["figure"] = rc.figure;
  j["model"] = model_to_json(rc.model);
  j["chain"] = chain_to_json(rc.chain, rc.ensemble);
  Json js;
  js["methods"] = rc.slutsky.methods;
  js["reference_good"] = rc.slutsky.reference_good;
  js["rel_step"] = rc.slutsky.rel_step;
  js["wealth_map"] = wealth_map_to_json(rc.slutsky.wealth_map);
  j["slutsky"] = js;
  Json jp;
  jp["c_over_ccrit"] = vector_json(rc.phase.c_over_ccrit);
  jp["c_values"] = vector_json(rc.phase.c_values);
  jp["betas"] = vector_json(rc.phase.betas);
  jp["mc"] = rc.phase.mc;
  jp["curve_points"] = rc.phase.curve_points;
  j["phase"] = jp;
  Json jw;
  Json axes = Json::object();
  for (const auto& [k, v] : rc.sweep.axes) axes[k] = vector_json(v);
  jw["axes"] = axes;
  jw["replicates"] = rc.sweep.replicates;
  jw["max_points"] = rc.sweep.max_points;
  j["sweep"] = jw;
  j["seed"] = rc.seed;
  j["scale"] = rc.scale;
  return j;
}

inline Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
}

}  // namespace slutsky
