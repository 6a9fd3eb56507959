#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "slutskylab/config.hpp"
#include "slutskylab/errors.hpp"
#include "slutskylab/harness.hpp"
#include "slutskylab/parallel.hpp"

namespace {

struct Flags {
  std::string config;
  std::string out = "out";
  std::uint64_t seed = 0;
  double scale = 0.0;
  int threads = 0;
};

slutsky::RunConfig resolve(const std::string& command, const std::string& figure, CLI::App& sub, const Flags& f) {
  using namespace slutsky;
  Json in = f.config.empty() ? Json::object() : load_json_file(f.config);
  RunConfig rc;
  if (command == "reproduce") {
    rc = experiment_config(figure, in);
  } else {
    if (f.config.empty()) throw ConfigError("--config is required for '" + command + "'");
    const Json& body = in.contains("manifest_version") ? in.at("config") : in;
    if (body.contains("command") && body["command"].get<std::string>() != command) {
      throw ConfigError("config was recorded for '" + body["command"].get<std::string>() + "'");
    }
    rc = run_config_from_json(in);
    rc.command = command;
  }
  if (sub.count("--seed")) rc.seed = f.seed;
  if (sub.count("--scale")) {
    if (!(f.scale > 0.0)) throw ConfigError("--scale must be > 0");
    rc.scale = f.scale;
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slutskylab: Monte Carlo and analytic Slutsky-matrix laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", slutsky::kToolVersion);
  Flags f;
  std::string figure;
  auto add_flags = [&](CLI::App* s) {
    s->add_option("--config", f.config, "JSON run configuration or a manifest to replay");
    s->add_option("--seed", f.seed, "master seed");
    s->add_option("--out", f.out, "output directory")->capture_default_str();
    s->add_option("--threads", f.threads, "worker threads (default: SLUTSKYLAB_THREADS or all cores)");
    s->add_option("--scale", f.scale, "multiplier on Monte Carlo sweep counts");
  };
  const char* commands[][2] = {
      {"simulate", "run one Monte Carlo chain for the configured model"},
      {"solve", "analytic saddle point, critical couplings and closed-form Slutsky matrix"},
      {"phase-diagram", "Herfindahl index over a (beta, c) grid plus the critical line"},
      {"slutsky", "Slutsky matrices by pathwise, fluctuation-response and closed-form routes"},
      {"ensemble-check", "canonical versus grand-canonical budget fluctuations"},
      {"reproduce", "run a named experiment (fig1..fig5)"},
      {"sweep", "grid sweep over model parameters with replicates"},
  };
  for (auto& c : commands) {
    auto* s = app.add_subcommand(c[0], c[1]);
    add_flags(s);
    if (std::string(c[0]) == "reproduce") {
      s->add_option("figure", figure, "experiment name")->required()->check(
          CLI::IsMember({"fig1", "fig2", "fig3", "fig4", "fig5"}));
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  try {
    const slutsky::RunConfig rc = resolve(command, figure, *sub, f);
    const int threads = f.threads > 0 ? f.threads : slutsky::default_threads();
    const auto res = slutsky::execute(rc, f.out, threads);
    for (const auto& [p, msg] : res.failures) std::fprintf(stderr, "point %ld failed: %s\n", p, msg.c_str());
    if (!res.manifest.value("all_equilibrated", true)) {
      std::fprintf(stderr, "warning: some chains did not pass the equilibration check (see manifest)\n");
    }
    std::printf("wrote %zu files to %s\n", res.files.size() + 1, f.out.c_str());
    return res.exit_code;
  } catch (const slutsky::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
