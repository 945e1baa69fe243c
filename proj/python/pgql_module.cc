#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pgql/errors.h"
#include "pgql/harness.h"

namespace py = pybind11;

namespace {

pgql::TabularPolicy make_policy(const Eigen::MatrixXd& logits) {
  pgql::TabularPolicy p;
  p.logits = logits;
  return p;
}

py::dict fixed_point_dict(const pgql::FixedPointResult& r) {
  py::dict d;
  d["logits"] = r.policy.logits;
  d["q_pi"] = r.q_pi.values;
  d["q_tilde"] = r.q_tilde.values;
  d["iterations"] = r.iterations;
  d["residual_history"] = r.residual_history;
  return d;
}

py::dict report_dict(const pgql::BoundReport& r) {
  py::dict d;
  d["alpha"] = r.alpha;
  d["eta"] = r.eta;
  d["residual_min"] = r.residual_min;
  d["residual_max"] = r.residual_max;
  d["bound"] = r.bound;
  d["chain1_lhs"] = r.chain1_lhs;
  d["chain1_rhs"] = r.chain1_rhs;
  d["chain2_lhs"] = r.chain2_lhs;
  d["chain2_rhs"] = r.chain2_rhs;
  d["chain3_lhs"] = r.chain3_lhs;
  d["chain3_rhs"] = r.chain3_rhs;
  d["passed"] = r.passed;
  return d;
}

pgql::FixedPointResult result_from(const pgql::TabularMdp& mdp,
                                   const Eigen::MatrixXd& logits,
                                   const Eigen::MatrixXd& q_tilde) {
  pgql::FixedPointResult r;
  r.policy = make_policy(logits);
  r.q_pi = pgql::evaluate_policy(mdp, r.policy).q;
  r.q_tilde.values = q_tilde;
  return r;
}

pgql::ExperimentConfig config_from(const std::map<std::string, std::string>& kv) {
  pgql::ExperimentConfig config;
  for (const auto& [key, value] : kv) config.set(key, value);
  config.validate();
  return config;
}

py::list traces_list(const pgql::ExperimentResult& result) {
  py::list out;
  for (const pgql::Trace& t : result.traces) {
    py::dict d;
    d["agent"] = pgql::to_string(t.agent);
    d["seed"] = t.seed;
    std::vector<std::int64_t> step;
    std::vector<double> j, residual, entropy;
    for (const pgql::TraceRow& row : t.rows) {
      step.push_back(row.step);
      j.push_back(row.j_true);
      residual.push_back(row.bellman_residual);
      entropy.push_back(row.mean_entropy);
    }
    d["step"] = step;
    d["j_true"] = j;
    d["bellman_residual"] = residual;
    d["mean_entropy"] = entropy;
    d["j_star"] = t.j_star;
    d["auc"] = t.area_under_curve();
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_pgql, m) {
  m.doc() = "Tabular policy-gradient and Q-learning operators";

  auto error = py::register_exception<pgql::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<pgql::ConfigError>(m, "ConfigError", error);
  py::register_exception<pgql::DimensionError>(m, "DimensionError", error);
  py::register_exception<pgql::DomainError>(m, "DomainError", error);
  py::register_exception<pgql::NonEpisodicError>(m, "NonEpisodicError", error);
  py::register_exception<pgql::NotConvergedError>(m, "NotConvergedError", error);
  py::register_exception<pgql::EmptyInputError>(m, "EmptyInputError", error);

  py::class_<pgql::TabularMdp>(m, "TabularMdp")
      .def(py::init([](int n_states, int n_actions, double gamma) {
             return pgql::TabularMdp::zeros(n_states, n_actions, gamma);
           }),
           py::arg("n_states"), py::arg("n_actions"), py::arg("gamma") = 0.9)
      .def_readonly("n_states", &pgql::TabularMdp::n_states)
      .def_readonly("n_actions", &pgql::TabularMdp::n_actions)
      .def_readwrite("transition", &pgql::TabularMdp::transition)
      .def_readwrite("reward", &pgql::TabularMdp::reward)
      .def_readwrite("gamma", &pgql::TabularMdp::gamma)
      .def_readwrite("initial_dist", &pgql::TabularMdp::initial_dist)
      .def_property(
          "terminal",
          [](const pgql::TabularMdp& mdp) {
            return std::vector<bool>(mdp.terminal.begin(), mdp.terminal.end());
          },
          [](pgql::TabularMdp& mdp, const std::vector<bool>& mask) {
            mdp.terminal.assign(mask.begin(), mask.end());
          })
      .def("validate", &pgql::TabularMdp::validate);

  m.def("garnet", [](int n_states, int n_actions, int branching, double gamma,
                     std::uint64_t seed) {
    return pgql::garnet_generate({n_states, n_actions, branching, gamma, seed});
  }, py::arg("n_states") = 10, py::arg("n_actions") = 4,
        py::arg("branching") = 3, py::arg("gamma") = 0.9, py::arg("seed") = 0);
  m.def("gridworld", [](const std::string& layout, double gamma) {
    if (layout.empty()) {
      pgql::GridWorldSpec spec;
      spec.gamma = gamma;
      return pgql::gridworld_to_mdp(spec);
    }
    return pgql::gridworld_to_mdp(pgql::parse_grid_layout(layout, gamma));
  }, py::arg("layout") = "", py::arg("gamma") = 0.95,
        "Grid world MDP; an empty layout gives the default 4x6 grid.");

  m.def("softmax_rows", &pgql::softmax_rows);
  m.def("apply_bellman_star", [](const pgql::TabularMdp& mdp,
                                 const Eigen::MatrixXd& q) {
    return pgql::apply_bellman_star({q}, mdp).values;
  });
  m.def("apply_bellman_pi", [](const pgql::TabularMdp& mdp,
                               const Eigen::MatrixXd& q,
                               const Eigen::MatrixXd& logits) {
    return pgql::apply_bellman_pi({q}, make_policy(logits), mdp).values;
  });
  m.def("solve_q_star", [](const pgql::TabularMdp& mdp, double tol) {
    return pgql::solve_q_star(mdp, tol).values;
  }, py::arg("mdp"), py::arg("tol") = pgql::kDefaultTolerance);
  m.def("evaluate_policy", [](const pgql::TabularMdp& mdp,
                              const Eigen::MatrixXd& logits) {
    const pgql::PolicyEvaluation e =
        pgql::evaluate_policy(mdp, make_policy(logits));
    return py::make_tuple(e.q.values, e.v.values);
  }, "Returns (Q, V) of softmax(logits).");
  m.def("policy_performance", [](const pgql::TabularMdp& mdp,
                                 const Eigen::MatrixXd& logits) {
    return pgql::policy_performance(mdp, make_policy(logits));
  });
  m.def("state_distribution", [](const pgql::TabularMdp& mdp,
                                 const Eigen::MatrixXd& logits,
                                 bool discounted) {
    return pgql::state_distribution(
        mdp, make_policy(logits),
        discounted ? pgql::DistributionMode::kDiscountedUnnormalized
                   : pgql::DistributionMode::kUndiscountedVisit);
  }, py::arg("mdp"), py::arg("logits"), py::arg("discounted") = true);
  m.def("exact_policy_gradient", [](const pgql::TabularMdp& mdp,
                                    const Eigen::MatrixXd& logits, double alpha,
                                    bool discounted) {
    return pgql::exact_policy_gradient(
        mdp, make_policy(logits), alpha,
        discounted ? pgql::DistributionMode::kDiscountedUnnormalized
                   : pgql::DistributionMode::kUndiscountedVisit);
  }, py::arg("mdp"), py::arg("logits"), py::arg("alpha") = 0.0,
        py::arg("discounted") = true);
  m.def("softmax_policy", [](const Eigen::MatrixXd& q, double alpha) {
    return pgql::softmax_policy({q}, alpha).logits;
  }, "Logits of the Boltzmann policy softmax(Q / alpha).");
  m.def("q_tilde_from_policy", [](const Eigen::MatrixXd& logits,
                                  const Eigen::VectorXd& v, double alpha) {
    return pgql::q_tilde_from_policy(make_policy(logits), {v}, alpha).values;
  });

  m.def("solve_regularized_fixed_point",
        [](const pgql::TabularMdp& mdp, double alpha, double tol) {
          pgql::FixedPointOptions options;
          options.tol = tol;
          return fixed_point_dict(
              pgql::solve_regularized_fixed_point(mdp, alpha, options));
        },
        py::arg("mdp"), py::arg("alpha"), py::arg("tol") = pgql::kDefaultTolerance);
  m.def("solve_pgql_fixed_point",
        [](const pgql::TabularMdp& mdp, double alpha, double eta, double tol) {
          pgql::FixedPointOptions options;
          options.tol = tol;
          return fixed_point_dict(
              pgql::solve_pgql_fixed_point(mdp, alpha, eta, options));
        },
        py::arg("mdp"), py::arg("alpha"), py::arg("eta"),
        py::arg("tol") = pgql::kDefaultTolerance);
  m.def("solve_qtilde_modified", [](const pgql::TabularMdp& mdp,
                                    const Eigen::MatrixXd& q_pi, double eta) {
    return pgql::solve_qtilde_modified({q_pi}, eta, mdp).values;
  });
  m.def("verify_appendix_bounds",
        [](const pgql::TabularMdp& mdp, const Eigen::MatrixXd& logits,
           const Eigen::MatrixXd& q_tilde, double alpha, double eta) {
          return report_dict(pgql::verify_appendix_bounds(
              mdp, result_from(mdp, logits, q_tilde), alpha, eta, mdp.gamma));
        });
  m.def("equivalence_check",
        [](std::uint64_t seed, int n_states, int n_actions, int steps,
           bool freeze_mu) {
          pgql::EquivalenceOptions options;
          options.freeze_mu = freeze_mu;
          return pgql::equivalence_check(seed, n_states, n_actions, steps,
                                         options);
        },
        py::arg("seed"), py::arg("n_states") = 5, py::arg("n_actions") = 3,
        py::arg("steps") = 100, py::arg("freeze_mu") = false);

  m.def("run_experiment", [](const std::map<std::string, std::string>& kv) {
    const pgql::ExperimentConfig config = config_from(kv);
    pgql::ExperimentResult result;
    {
      py::gil_scoped_release release;
      result = pgql::run_experiment(config);
    }
    return traces_list(result);
  }, "Runs with config keys as strings, e.g. {'agent': 'pgql', 'steps': '1000'}.");
  m.def("run_async", [](const std::map<std::string, std::string>& kv) {
    const pgql::ExperimentConfig config = config_from(kv);
    pgql::ExperimentResult result;
    {
      py::gil_scoped_release release;
      result = pgql::run_async(config);
    }
    return traces_list(result);
  });
}
