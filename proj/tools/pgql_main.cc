// pgql: train tabular agents, certify fixed points, plot traces.
//
//   pgql run --env gridworld --agent actor-critic,q-learning,pgql --seeds 0-4 --out runs/grid
//   pgql run-async --workers 4 --seeds 0-4 --out runs/async
//   pgql certify --seeds 0-19 --alpha 1,0.1,0.01 --eta 0,0.25,0.5,0.75 --out cert.csv
//   pgql plot runs/grid/trace_*.csv --out grid.svg

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pgql/errors.h"
#include "pgql/harness.h"

namespace {

// Every config key becomes a string flag of the same name. Values are kept
// raw and handed to ExperimentConfig::set after the config file is loaded,
// so flags win over the file.
const std::map<std::string, std::string> kKeyHelp = {
    {"env", "gridworld | garnet"},
    {"layout-file", "grid layout over . S T #"},
    {"garnet-states", "Garnet state count"},
    {"garnet-actions", "Garnet action count"},
    {"garnet-branching", "successors per (s, a)"},
    {"garnet-seed", "Garnet generator seed"},
    {"agent", "comma list: actor-critic, q-learning, pgql, expected-sarsa"},
    {"alpha", "entropy temperature"},
    {"gamma", "discount"},
    {"eta", "Q-learning weight in [0, 1]"},
    {"lr-actor", "actor step size"},
    {"lr-critic", "critic step size"},
    {"lr-q", "Q-learning step size"},
    {"critic", "expected-sarsa | sarsa | q-learning | monte-carlo"},
    {"actor-form", "q-tilde | explicit-entropy"},
    {"pgql-mode", "practical | blend"},
    {"replay-capacity", "replay ring size"},
    {"batch-size", "replay batch size"},
    {"steps", "environment steps per run"},
    {"eval-every", "steps between exact evaluations"},
    {"max-episode-steps", "episode cap, 0 for none"},
    {"seeds", "agent seeds, e.g. 0-4 or 1,3"},
    {"workers", "actor threads"},
    {"out", "output directory"},
};

struct KeyFlags {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* app, const std::vector<std::string>& keys) {
    app->add_option("--config", config_file, "flat key=value config file");
    for (const std::string& key : keys) {
      auto help = kKeyHelp.find(key);
      options[key] = app->add_option("--" + key, values[key],
                                     help == kKeyHelp.end() ? "" : help->second);
    }
  }

  bool given(const std::string& key) const {
    auto it = options.find(key);
    return it != options.end() && it->second->count() > 0;
  }
};

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  for (std::string part; std::getline(in, part, ',');) {
    if (part.empty()) continue;
    try {
      out.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw pgql::ConfigError(key, "expected a number, got '" + part + "'");
    }
  }
  if (out.empty()) throw pgql::ConfigError(key, "empty list");
  return out;
}

pgql::ExperimentConfig build_config(const KeyFlags& flags) {
  pgql::ExperimentConfig config;
  if (!flags.config_file.empty()) config.load_file(flags.config_file);
  for (const std::string& key : pgql::ExperimentConfig::keys()) {
    if (flags.given(key)) config.set(key, flags.values.at(key));
  }
  config.validate();
  return config;
}

void report(const pgql::ExperimentResult& result) {
  std::printf("J* = %.6f\n", result.j_star);
  std::printf("%-16s %6s %12s %12s\n", "agent", "seed", "final_j", "auc");
  for (const pgql::Trace& t : result.traces) {
    std::printf("%-16s %6llu %12.6f %12.6f\n", pgql::to_string(t.agent).c_str(),
                static_cast<unsigned long long>(t.seed), t.final_j(),
                t.area_under_curve());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tabular policy-gradient / Q-learning lab"};
  app.require_subcommand(1);

  KeyFlags run_flags, async_flags;
  CLI::App* run = app.add_subcommand("run", "synchronous training runs");
  run_flags.attach(run, pgql::ExperimentConfig::keys());
  CLI::App* run_async = app.add_subcommand(
      "run-async", "shared-parameter actors plus a replay learner");
  async_flags.attach(run_async, pgql::ExperimentConfig::keys());

  CLI::App* certify =
      app.add_subcommand("certify", "fixed-point bound certificates on Garnet MDPs");
  std::string cert_config, cert_out = "certificate.csv";
  std::string cert_alpha = "1,0.1,0.01", cert_eta = "0,0.25,0.5,0.75";
  std::string cert_seeds = "0-19";
  pgql::GarnetSpec garnet;
  double tol = 1e-10;
  certify->add_option("--config", cert_config,
                      "key=value file (garnet-*, gamma, seeds)");
  certify->add_option("--alpha", cert_alpha, "comma-separated temperatures");
  certify->add_option("--eta", cert_eta, "comma-separated blend weights");
  certify->add_option("--seeds", cert_seeds, "Garnet seeds, e.g. 0-19");
  certify->add_option("--gamma", garnet.gamma);
  certify->add_option("--garnet-states", garnet.n_states);
  certify->add_option("--garnet-actions", garnet.n_actions);
  certify->add_option("--garnet-branching", garnet.branching);
  certify->add_option("--tol", tol, "fixed-point tolerance");
  certify->add_option("--out", cert_out, "certificate CSV path");

  CLI::App* plot = app.add_subcommand("plot", "render trace CSVs as SVG");
  std::vector<std::string> plot_inputs;
  std::string plot_out = "traces.svg";
  plot->add_option("traces", plot_inputs, "trace CSV files")->required();
  plot->add_option("--out", plot_out, "SVG path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const pgql::ExperimentConfig config = build_config(run_flags);
      if (config.workers != 1) {
        throw pgql::ConfigError("workers", "use run-async for workers > 1");
      }
      report(pgql::run_experiment(config));
    } else if (run_async->parsed()) {
      pgql::ExperimentConfig config = build_config(async_flags);
      report(pgql::run_async(config));
    } else if (certify->parsed()) {
      pgql::CertifyConfig cc;
      pgql::ExperimentConfig base;
      if (!cert_config.empty()) {
        // File values apply only where no flag was given.
        base.load_file(cert_config);
        auto unset = [&](const char* flag) {
          return certify->get_option(flag)->count() == 0;
        };
        if (unset("--garnet-states")) garnet.n_states = base.garnet_states;
        if (unset("--garnet-actions")) garnet.n_actions = base.garnet_actions;
        if (unset("--garnet-branching")) garnet.branching = base.garnet_branching;
        if (unset("--gamma")) garnet.gamma = base.agent.gamma;
        if (unset("--seeds")) cert_seeds.clear();
      }
      if (!cert_seeds.empty()) base.set("seeds", cert_seeds);
      cc.seeds = base.seeds;
      cc.alphas = parse_list("alpha", cert_alpha);
      cc.etas = parse_list("eta", cert_eta);
      cc.garnet = garnet;
      cc.options.tol = tol;
      const std::vector<pgql::CertificateRow> rows = pgql::run_certify(cc);
      pgql::write_certificate_csv(cert_out, rows);
      int failed = 0;
      for (const pgql::CertificateRow& r : rows) failed += !r.report.passed;
      std::printf("%zu certificates, %d failed -> %s\n", rows.size(), failed,
                  cert_out.c_str());
      return failed == 0 ? 0 : 2;
    } else if (plot->parsed()) {
      const std::string svg = pgql::emit_plot(plot_inputs);
      std::ofstream out(plot_out);
      if (!out) throw pgql::Error("cannot open " + plot_out + " for writing");
      out << svg;
      std::printf("wrote %s\n", plot_out.c_str());
    }
  } catch (const pgql::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
