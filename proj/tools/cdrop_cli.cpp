// cdrop command-line tool. Talks to the library exclusively through cdrop.h.
//
// Exit codes: 0 success, 1 runtime failure or failed verification gate,
// 2 invalid flags or configuration, 3 rate solver failure (no solution or
// no convergence), 4 checkpoint incompatible with the configuration.

#include <cdrop/cdrop.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

namespace {

using nlohmann::json;

enum Exit : int { kOk = 0, kRuntime = 1, kUsage = 2, kSolver = 3, kCheckpoint = 4 };

int exit_code(cdrop_status s) {
  switch (s) {
    case CDROP_OK: return kOk;
    case CDROP_ERR_INVALID_ARGUMENT:
    case CDROP_ERR_CONFIG:
    case CDROP_ERR_WRONG_MODE: return kUsage;
    case CDROP_ERR_NO_SOLUTION:
    case CDROP_ERR_NON_CONVERGENCE: return kSolver;
    case CDROP_ERR_CHECKPOINT_MISMATCH: return kCheckpoint;
    default: return kRuntime;
  }
}

int report(cdrop_status s, const char* context) {
  std::cerr << "cdrop: " << context << ": " << cdrop_last_error() << '\n';
  return exit_code(s);
}

struct ExperimentCloser {
  void operator()(cdrop_experiment* e) const { cdrop_experiment_close(e); }
};
using ExperimentPtr = std::unique_ptr<cdrop_experiment, ExperimentCloser>;

// Opening is the configuration step: a missing or unreadable config file is a
// usage error rather than a runtime one.
int open_experiment(const std::string& path, ExperimentPtr& out) {
  cdrop_experiment* raw = nullptr;
  const cdrop_status s = cdrop_experiment_open(path.c_str(), &raw);
  if (s != CDROP_OK) {
    std::cerr << "cdrop: " << path << ": " << cdrop_last_error() << '\n';
    return s == CDROP_ERR_IO ? kUsage : exit_code(s);
  }
  out.reset(raw);
  for (std::size_t i = 0; i < cdrop_experiment_warning_count(raw); ++i) {
    std::cerr << "cdrop: warning: " << cdrop_experiment_warning(raw, i) << '\n';
  }
  return kOk;
}

json rates_json(const cdrop_rates_report& r) {
  return {{"lambda1", r.lambda1}, {"lambda2", r.lambda2}, {"p_residual", r.p_residual},
          {"m_residual", r.m_residual}};
}

json info_json(const cdrop_experiment* exp) {
  cdrop_experiment_info info{};
  cdrop_experiment_info_get(exp, &info);
  json j{{"config_hash", info.config_hash}, {"train_seed", info.train_seed}};
  if (info.has_rates) {
    j["lambda1"] = info.lambda1;
    j["lambda2"] = info.lambda2;
  }
  return j;
}

json metrics_json(const cdrop_metrics& m) {
  return {{"accuracy", m.accuracy}, {"mean_loss", m.mean_loss}, {"count", m.count}};
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

// ---- solve-lambdas ---------------------------------------------------------

struct SolveArgs {
  double p = 0.0, m = 0.0, T = 0.0;
  bool approx = false;
};

int cmd_solve(const SolveArgs& a) {
  cdrop_rates_report exact{}, approx{};
  const cdrop_status se = cdrop_solve_rates(a.p, a.m, a.T, 0, &exact);
  const std::string exact_error = se == CDROP_OK ? "" : cdrop_last_error();
  const cdrop_status sa = cdrop_solve_rates(a.p, a.m, a.T, 1, &approx);
  if (sa != CDROP_OK) return report(sa, "solve-lambdas");  // invalid (p, m, T)
  if (se != CDROP_OK && !a.approx) {
    std::cerr << "cdrop: solve-lambdas: " << exact_error << '\n';
    return exit_code(se);
  }
  json out{{"p", a.p}, {"m", a.m}, {"T", a.T}, {"method", a.approx ? "approx" : "exact"}};
  out["exact"] = se == CDROP_OK ? rates_json(exact) : json{{"error", exact_error}};
  out["approx"] = rates_json(approx);
  const cdrop_rates_report& chosen = a.approx ? approx : exact;
  out["lambda1"] = chosen.lambda1;
  out["lambda2"] = chosen.lambda2;
  print(out);
  return kOk;
}

// ---- verify-renewal --------------------------------------------------------

struct VerifyArgs {
  double p = 0.3, m = 10.0, T = 1.0;
  std::uint64_t samples = 100000;
  std::uint64_t seed = 0;
};

int cmd_verify(const VerifyArgs& a) {
  cdrop_rates_report rates{};
  if (cdrop_status s = cdrop_solve_rates(a.p, a.m, a.T, 0, &rates); s != CDROP_OK) {
    return report(s, "verify-renewal");
  }
  if (a.samples < 2) {
    std::cerr << "cdrop: verify-renewal: --samples must be at least 2\n";
    return kUsage;
  }
  double p_closed = 0.0, m_closed = 0.0;
  cdrop_dropout_rate(rates.lambda1, rates.lambda2, a.T, &p_closed);
  cdrop_expected_renewals(rates.lambda1, rates.lambda2, a.T, &m_closed);
  cdrop_mc_estimate avail{}, renew{};
  if (cdrop_status s = cdrop_mc_availability(rates.lambda1, rates.lambda2, a.T, a.samples, a.seed, &avail);
      s != CDROP_OK) {
    return report(s, "verify-renewal");
  }
  if (cdrop_status s = cdrop_mc_renewals(rates.lambda1, rates.lambda2, a.T, a.samples, a.seed, &renew);
      s != CDROP_OK) {
    return report(s, "verify-renewal");
  }
  const double n = static_cast<double>(a.samples);
  const double p_mc = 1.0 - avail.value;
  const double binomial_se = std::sqrt(p_closed * (1.0 - p_closed) / n);
  const double p_z = std::abs(p_mc - p_closed) / binomial_se;
  const bool p_pass = p_z <= 4.0;
  const double m_rel = std::abs(renew.value - m_closed) / m_closed;
  const bool m_pass = m_rel <= 0.01;

  // A gate is underpowered when a correct sampler would regularly miss it:
  // the 1% band is narrower than two standard errors of the renewal mean,
  // or the 4-SE availability band is wider than 0.05 in absolute terms.
  const bool underpowered = 0.01 * m_closed < 2.0 * renew.std_error || 4.0 * binomial_se > 0.05;
  if (underpowered) {
    std::cerr << "cdrop: warning: " << a.samples
              << " samples leave the verification gates underpowered; use at least 1e5\n";
  }
  print({{"p", a.p}, {"m", a.m}, {"T", a.T}, {"samples", a.samples}, {"seed", a.seed},
         {"lambda1", rates.lambda1}, {"lambda2", rates.lambda2},
         {"dropout_rate", {{"closed_form", p_closed}, {"monte_carlo", p_mc}, {"binomial_se", binomial_se},
                           {"z", p_z}, {"gate", "4 SE"}, {"pass", p_pass}}},
         {"renewals", {{"closed_form", m_closed}, {"monte_carlo", renew.value}, {"std_error", renew.std_error},
                       {"relative_error", m_rel}, {"gate", "1% relative"}, {"pass", m_pass}}},
         {"underpowered", underpowered}, {"pass", p_pass && m_pass}});
  return p_pass && m_pass ? kOk : kRuntime;
}

// ---- experiment commands ---------------------------------------------------

struct ExperimentArgs {
  std::string config;
  std::string checkpoint;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::vector<std::size_t> nmc{1, 3, 5, 10, 20};
  bool quiet = false;
};

void on_epoch(const cdrop_epoch_record* r, void* user) {
  if (*static_cast<bool*>(user)) return;
  std::fprintf(stderr, "epoch %zu  train_loss %.6f  val_loss %.6f  val_acc %.4f\n", r->epoch,
               r->train_loss, r->val_loss, r->val_accuracy);
}

int cmd_train(ExperimentArgs& a) {
  ExperimentPtr exp;
  if (int rc = open_experiment(a.config, exp); rc != kOk) return rc;
  cdrop_metrics test{};
  if (cdrop_status s = cdrop_experiment_train(exp.get(), on_epoch, &a.quiet, &test); s != CDROP_OK) {
    return report(s, "train");
  }
  json out = info_json(exp.get());
  out["test"] = metrics_json(test);
  out["checkpoint"] = cdrop_experiment_output_path(exp.get(), "checkpoint.txt");
  print(out);
  return kOk;
}

int with_checkpoint(const ExperimentArgs& a, ExperimentPtr& exp) {
  if (int rc = open_experiment(a.config, exp); rc != kOk) return rc;
  std::string ckpt = a.checkpoint;
  if (ckpt.empty()) ckpt = cdrop_experiment_output_path(exp.get(), "checkpoint.txt");
  if (cdrop_status s = cdrop_experiment_load_checkpoint(exp.get(), ckpt.c_str()); s != CDROP_OK) {
    std::cerr << "cdrop: " << ckpt << ": " << cdrop_last_error() << '\n';
    return s == CDROP_ERR_IO ? kUsage : exit_code(s);
  }
  return kOk;
}

std::uint64_t eval_seed(const ExperimentArgs& a, const cdrop_experiment* exp) {
  if (a.seed_given) return a.seed;
  cdrop_experiment_info info{};
  cdrop_experiment_info_get(exp, &info);
  return info.train_seed;
}

int cmd_evaluate(const ExperimentArgs& a) {
  ExperimentPtr exp;
  if (int rc = with_checkpoint(a, exp); rc != kOk) return rc;
  cdrop_metrics m{};
  if (cdrop_status s = cdrop_experiment_evaluate(exp.get(), eval_seed(a, exp.get()), &m); s != CDROP_OK) {
    return report(s, "evaluate");
  }
  json out = info_json(exp.get());
  out["test"] = metrics_json(m);
  out["metrics_file"] = cdrop_experiment_output_path(exp.get(), "metrics.json");
  print(out);
  return kOk;
}

int cmd_calibrate(const ExperimentArgs& a) {
  ExperimentPtr exp;
  if (int rc = with_checkpoint(a, exp); rc != kOk) return rc;
  double ece = 0.0;
  cdrop_metrics m{};
  if (cdrop_status s = cdrop_experiment_calibrate(exp.get(), eval_seed(a, exp.get()), &ece, &m); s != CDROP_OK) {
    return report(s, "calibrate");
  }
  json out = info_json(exp.get());
  out["ece"] = ece;
  out["test"] = metrics_json(m);
  out["reliability_file"] = cdrop_experiment_output_path(exp.get(), "reliability.csv");
  print(out);
  return kOk;
}

int cmd_sweep(const ExperimentArgs& a) {
  ExperimentPtr exp;
  if (int rc = with_checkpoint(a, exp); rc != kOk) return rc;
  std::vector<cdrop_sweep_row> rows(a.nmc.size());
  if (cdrop_status s = cdrop_experiment_mc_sweep(exp.get(), a.nmc.data(), a.nmc.size(), rows.data());
      s != CDROP_OK) {
    return report(s, "mc-sweep");
  }
  json out = info_json(exp.get());
  json table = json::array();
  for (const auto& r : rows) {
    table.push_back({{"n_mc", r.n_mc}, {"mean_accuracy", r.mean_accuracy}, {"std_accuracy", r.std_accuracy},
                     {"median_accuracy", r.median_accuracy}});
  }
  out["rows"] = table;
  out["sweep_file"] = cdrop_experiment_output_path(exp.get(), "mc_sweep.csv");
  print(out);
  return kOk;
}

// ---- gen-data ----------------------------------------------------------------

struct GenArgs {
  std::string generator;
  std::string out;
  std::size_t n_per_class = 100;
  double noise_std = 0.1;
  std::size_t n_classes = 2;
  std::size_t d_x = 2;
  double separation = 4.0;
  std::uint64_t seed = 0;
};

int cmd_gen(const GenArgs& a) {
  json spec{{"generator", a.generator}, {"n_per_class", a.n_per_class}, {"noise_std", a.noise_std},
            {"seed", a.seed}};
  if (a.generator == "gaussian_blobs") {
    spec["n_classes"] = a.n_classes;
    spec["d_x"] = a.d_x;
    spec["separation"] = a.separation;
  }
  if (cdrop_status s = cdrop_generate_data(spec.dump().c_str(), a.out.c_str()); s != CDROP_OK) {
    return report(s, "gen-data");
  }
  print({{"written", a.out}, {"generator", spec}});
  return kOk;
}

// ---- compare -------------------------------------------------------------------

struct CompareArgs {
  std::string config;
  std::string options;
};

int cmd_compare(const CompareArgs& a) {
  std::string options = a.options;
  if (!options.empty() && options.front() != '{') {
    std::ifstream f(options);
    if (!f) {
      std::cerr << "cdrop: compare: cannot read options file '" << options << "'\n";
      return kUsage;
    }
    std::stringstream ss;
    ss << f.rdbuf();
    options = ss.str();
  }
  const cdrop_status s = cdrop_compare(a.config.c_str(), options.empty() ? nullptr : options.c_str());
  if (s == CDROP_ERR_IO && std::ifstream(a.config).fail()) {
    std::cerr << "cdrop: " << a.config << ": " << cdrop_last_error() << '\n';
    return kUsage;
  }
  if (s != CDROP_OK) return report(s, "compare");
  ExperimentPtr exp;
  if (int rc = open_experiment(a.config, exp); rc != kOk) return rc;
  const std::string summary = cdrop_experiment_output_path(exp.get(), "comparison_summary.csv");
  std::ifstream f(summary);
  std::cout << f.rdbuf();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuum Dropout for Neural ODEs"};
  app.set_version_flag("--version", std::string(cdrop_version()));
  app.require_subcommand(1);
  int rc = kOk;

  SolveArgs solve;
  auto* s = app.add_subcommand("solve-lambdas", "Solve (lambda1, lambda2) from a dropout rate p and renewal count m");
  s->add_option("--p", solve.p, "Dropout rate in (0, 1)")->required();
  s->add_option("--m", solve.m, "Expected number of renewals by T (> 0)")->required();
  s->add_option("--T", solve.T, "Integration horizon (> 0)")->required();
  s->add_flag("--approx", solve.approx, "Select the large-T asymptotic formulas");
  s->callback([&] { rc = cmd_solve(solve); });

  VerifyArgs verify;
  auto* v = app.add_subcommand("verify-renewal", "Check the closed forms against Monte-Carlo simulation");
  v->add_option("--p", verify.p, "Dropout rate in (0, 1)")->capture_default_str();
  v->add_option("--m", verify.m, "Expected number of renewals")->capture_default_str();
  v->add_option("--T", verify.T, "Horizon")->capture_default_str();
  v->add_option("--samples", verify.samples, "Number of simulated trajectories")->capture_default_str();
  v->add_option("--seed", verify.seed, "Root seed")->capture_default_str();
  v->callback([&] { rc = cmd_verify(verify); });

  ExperimentArgs ex;
  auto add_experiment = [&](const char* name, const char* help, bool needs_checkpoint) {
    auto* c = app.add_subcommand(name, help);
    c->add_option("--config", ex.config, "Experiment JSON document")->required();
    if (needs_checkpoint) {
      c->add_option("--checkpoint", ex.checkpoint,
                    "Checkpoint descriptor (default: checkpoint.txt in the output directory)");
      c->add_option("--seed", ex.seed, "Evaluation seed (default: the training seed)")
          ->each([&](const std::string&) { ex.seed_given = true; });
    }
    return c;
  };
  auto* t = add_experiment("train", "Train a model and write its artifacts", false);
  t->add_flag("--quiet", ex.quiet, "Do not print per-epoch progress");
  t->callback([&] { rc = cmd_train(ex); });
  add_experiment("evaluate", "Evaluate a checkpoint on the test split", true)->callback([&] { rc = cmd_evaluate(ex); });
  add_experiment("calibrate", "Reliability bins and ECE on the test split", true)
      ->callback([&] { rc = cmd_calibrate(ex); });
  auto* w = add_experiment("mc-sweep", "Test accuracy against the number of Monte-Carlo samples", true);
  w->add_option("--nmc", ex.nmc, "Comma-separated sample counts")->delimiter(',')->capture_default_str();
  w->callback([&] { rc = cmd_sweep(ex); });

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Write a synthetic dataset as CSV");
  g->add_option("--generator", gen.generator, "two_spirals or gaussian_blobs")
      ->required()
      ->check(CLI::IsMember({"two_spirals", "gaussian_blobs"}));
  g->add_option("--out", gen.out, "Output CSV path")->required();
  g->add_option("--n-per-class", gen.n_per_class)->capture_default_str();
  g->add_option("--noise", gen.noise_std, "Gaussian feature noise (std)")->capture_default_str();
  g->add_option("--classes", gen.n_classes, "gaussian_blobs only")->capture_default_str();
  g->add_option("--dims", gen.d_x, "gaussian_blobs only")->capture_default_str();
  g->add_option("--separation", gen.separation, "gaussian_blobs only")->capture_default_str();
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->callback([&] { rc = cmd_gen(gen); });

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "None / naive drift dropout / Continuum comparison over seeds");
  c->add_option("--config", cmp.config, "Base experiment JSON document")->required();
  c->add_option("--options", cmp.options, "Comparison options as inline JSON or a file path");
  c->callback([&] { rc = cmd_compare(cmp); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  return rc;
}
