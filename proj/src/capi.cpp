#include "cdrop/cdrop.h"

#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "cdrop/error.hpp"
#include "cdrop/experiment.hpp"
#include "cdrop/renewal.hpp"

struct cdrop_experiment {
  cdrop::Experiment impl;
  std::string scratch;
};

namespace {

thread_local std::string g_last_error;

cdrop_status to_status(cdrop::ErrorCode code) {
  using cdrop::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::InvalidLabel:
    case ErrorCode::OutOfHorizon:
    case ErrorCode::LengthMismatch:
    case ErrorCode::EmptyInput:
    case ErrorCode::InsufficientSamples:
      return CDROP_ERR_INVALID_ARGUMENT;
    case ErrorCode::ConfigError:
    case ErrorCode::ParseError:
    case ErrorCode::MissingColumn:
    case ErrorCode::EmptySplit:
      return CDROP_ERR_CONFIG;
    case ErrorCode::NoSolution:
      return CDROP_ERR_NO_SOLUTION;
    case ErrorCode::NonConvergence:
      return CDROP_ERR_NON_CONVERGENCE;
    case ErrorCode::CheckpointMismatch:
      return CDROP_ERR_CHECKPOINT_MISMATCH;
    case ErrorCode::IoError:
      return CDROP_ERR_IO;
    case ErrorCode::WrongMode:
      return CDROP_ERR_WRONG_MODE;
    default:
      return CDROP_ERR_RUNTIME;
  }
}

template <class Fn>
cdrop_status guarded(Fn&& fn) {
  try {
    fn();
    return CDROP_OK;
  } catch (const cdrop::Error& e) {
    g_last_error = std::string(cdrop::to_string(e.code())) + ": " + e.what();
    return to_status(e.code());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("ConfigError: ") + e.what();
    return CDROP_ERR_CONFIG;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CDROP_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return CDROP_ERR_RUNTIME;
  }
}

void require(bool ok, const char* what) {
  if (!ok) cdrop::fail(cdrop::ErrorCode::InvalidArgument, what);
}

cdrop::RenewalRates rates_of(double l1, double l2) {
  cdrop::RenewalRates r{l1, l2};
  r.validate();
  return r;
}

}  // namespace

extern "C" {

const char* cdrop_version(void) { return "0.1.0"; }

const char* cdrop_last_error(void) { return g_last_error.c_str(); }

const char* cdrop_status_name(cdrop_status status) {
  switch (status) {
    case CDROP_OK: return "ok";
    case CDROP_ERR_INVALID_ARGUMENT: return "invalid argument";
    case CDROP_ERR_CONFIG: return "configuration error";
    case CDROP_ERR_NO_SOLUTION: return "no solution";
    case CDROP_ERR_NON_CONVERGENCE: return "non-convergence";
    case CDROP_ERR_CHECKPOINT_MISMATCH: return "checkpoint mismatch";
    case CDROP_ERR_IO: return "i/o error";
    case CDROP_ERR_WRONG_MODE: return "wrong mode";
    case CDROP_ERR_RUNTIME: return "runtime error";
  }
  return "unknown status";
}

cdrop_status cdrop_solve_rates(double p, double m, double T, int approximate, cdrop_rates_report* out) {
  return guarded([&] {
    require(out != nullptr, "output pointer is null");
    const cdrop::DropoutSpec spec{p, m, T};
    const auto rates = approximate ? cdrop::approx_rates(spec) : cdrop::solve_rates(spec);
    const auto res = cdrop::forward_residuals(rates, spec);
    *out = {rates.lambda1, rates.lambda2, res.p_residual, res.m_residual};
  });
}

cdrop_status cdrop_availability(double lambda1, double lambda2, double t, double* out) {
  return guarded([&] {
    require(out != nullptr && t >= 0.0, "need t >= 0 and an output pointer");
    *out = cdrop::availability(rates_of(lambda1, lambda2), t);
  });
}

cdrop_status cdrop_dropout_rate(double lambda1, double lambda2, double T, double* out) {
  return guarded([&] {
    require(out != nullptr && T > 0.0, "need T > 0 and an output pointer");
    *out = cdrop::dropout_rate(rates_of(lambda1, lambda2), T);
  });
}

cdrop_status cdrop_expected_renewals(double lambda1, double lambda2, double t, double* out) {
  return guarded([&] {
    require(out != nullptr && t >= 0.0, "need t >= 0 and an output pointer");
    *out = cdrop::expected_renewals(rates_of(lambda1, lambda2), t);
  });
}

cdrop_status cdrop_mc_availability(double lambda1, double lambda2, double T, uint64_t n_samples,
                                   uint64_t seed, cdrop_mc_estimate* out) {
  return guarded([&] {
    require(out != nullptr && T > 0.0, "need T > 0 and an output pointer");
    const auto e = cdrop::mc_estimate_availability(rates_of(lambda1, lambda2), T, n_samples, seed);
    *out = {e.value, e.std_error, e.n_samples};
  });
}

cdrop_status cdrop_mc_renewals(double lambda1, double lambda2, double T, uint64_t n_samples,
                               uint64_t seed, cdrop_mc_estimate* out) {
  return guarded([&] {
    require(out != nullptr && T > 0.0, "need T > 0 and an output pointer");
    const auto e = cdrop::mc_estimate_renewals(rates_of(lambda1, lambda2), T, n_samples, seed);
    *out = {e.value, e.std_error, e.n_samples};
  });
}

cdrop_status cdrop_experiment_open(const char* config_path, cdrop_experiment** out) {
  return guarded([&] {
    require(config_path != nullptr && out != nullptr, "null argument");
    *out = new cdrop_experiment{cdrop::Experiment(cdrop::load_experiment(config_path)), {}};
  });
}

cdrop_status cdrop_experiment_open_json(const char* config_json, cdrop_experiment** out) {
  return guarded([&] {
    require(config_json != nullptr && out != nullptr, "null argument");
    *out = new cdrop_experiment{cdrop::Experiment(cdrop::parse_experiment(config_json)), {}};
  });
}

void cdrop_experiment_close(cdrop_experiment* exp) { delete exp; }

cdrop_status cdrop_experiment_info_get(const cdrop_experiment* exp, cdrop_experiment_info* out) {
  return guarded([&] {
    require(exp != nullptr && out != nullptr, "null argument");
    const auto& cfg = exp->impl.config();
    std::memset(out, 0, sizeof(*out));
    out->d_x = cfg.model.d_x;
    out->d_z = cfg.model.d_z;
    out->n_classes = cfg.model.n_classes;
    out->dropout = static_cast<cdrop_dropout_kind>(cfg.model.dropout.kind);
    if (const auto& r = exp->impl.model().rates()) {
      out->has_rates = 1;
      out->lambda1 = r->lambda1;
      out->lambda2 = r->lambda2;
    }
    out->train_seed = cfg.training.seed;
    std::strncpy(out->config_hash, cfg.hash.c_str(), sizeof(out->config_hash) - 1);
  });
}

size_t cdrop_experiment_warning_count(const cdrop_experiment* exp) {
  return exp ? exp->impl.warnings().size() : 0;
}

const char* cdrop_experiment_warning(const cdrop_experiment* exp, size_t index) {
  if (!exp || index >= exp->impl.warnings().size()) return nullptr;
  return exp->impl.warnings()[index].c_str();
}

cdrop_status cdrop_experiment_train(cdrop_experiment* exp, cdrop_epoch_callback on_epoch, void* user,
                                    cdrop_metrics* test_out) {
  return guarded([&] {
    require(exp != nullptr, "null experiment");
    cdrop::EpochCallback cb;
    if (on_epoch) {
      cb = [on_epoch, user](const cdrop::EpochRecord& r) {
        const cdrop_epoch_record rec{r.epoch, r.train_loss, r.val_loss, r.val_accuracy, r.wall_ms};
        on_epoch(&rec, user);
      };
    }
    const auto outcome = exp->impl.train(cb);
    if (test_out) *test_out = {outcome.test.accuracy, outcome.test.mean_loss, outcome.test.count};
  });
}

cdrop_status cdrop_experiment_load_checkpoint(cdrop_experiment* exp, const char* descriptor_path) {
  return guarded([&] {
    require(exp != nullptr && descriptor_path != nullptr, "null argument");
    exp->impl.load_checkpoint(descriptor_path);
  });
}

cdrop_status cdrop_experiment_evaluate(cdrop_experiment* exp, uint64_t seed, cdrop_metrics* out) {
  return guarded([&] {
    require(exp != nullptr, "null experiment");
    const auto m = exp->impl.evaluate(seed);
    if (out) *out = {m.accuracy, m.mean_loss, m.count};
  });
}

cdrop_status cdrop_experiment_calibrate(cdrop_experiment* exp, uint64_t seed, double* ece_out,
                                        cdrop_metrics* test_out) {
  return guarded([&] {
    require(exp != nullptr, "null experiment");
    const auto c = exp->impl.calibrate(seed);
    if (ece_out) *ece_out = c.report.ece;
    if (test_out) *test_out = {c.test.accuracy, c.test.mean_loss, c.test.count};
  });
}

cdrop_status cdrop_experiment_mc_sweep(cdrop_experiment* exp, const size_t* n_mc_values, size_t count,
                                       cdrop_sweep_row* rows_out) {
  return guarded([&] {
    require(exp != nullptr && (count == 0 || (n_mc_values && rows_out)), "null argument");
    std::vector<std::size_t> values(n_mc_values, n_mc_values + count);
    if (values.empty()) values = exp->impl.config().inference.sweep_n_mc;
    const auto rows = exp->impl.mc_sweep(values);
    for (std::size_t i = 0; i < count && i < rows.size(); ++i) {
      rows_out[i] = {rows[i].n_mc, rows[i].mean_accuracy, rows[i].std_accuracy, rows[i].median_accuracy};
    }
  });
}

cdrop_status cdrop_experiment_predict(const cdrop_experiment* exp, const double* x, size_t d_x,
                                      uint64_t seed, double* probs_out, size_t n_classes) {
  return guarded([&] {
    require(exp != nullptr && x != nullptr && probs_out != nullptr, "null argument");
    require(n_classes == exp->impl.config().model.n_classes, "probability buffer has the wrong length");
    const auto p = exp->impl.predict({x, d_x}, seed);
    std::copy(p.begin(), p.end(), probs_out);
  });
}

const char* cdrop_experiment_output_path(cdrop_experiment* exp, const char* name) {
  if (!exp || !name) return nullptr;
  exp->scratch = (exp->impl.config().output_dir / name).string();
  return exp->scratch.c_str();
}

cdrop_status cdrop_compare(const char* config_path, const char* options_json) {
  return guarded([&] {
    require(config_path != nullptr, "null configuration path");
    const auto cfg = cdrop::load_experiment(config_path);
    cdrop::ComparisonOptions opt;
    if (options_json) {
      nlohmann::json o;
      try {
        o = nlohmann::json::parse(options_json);
      } catch (const nlohmann::json::exception& e) {
        cdrop::fail(cdrop::ErrorCode::ConfigError, std::string("comparison options: ") + e.what());
      }
      for (const auto& [k, v] : o.items()) {
        try {
          if (k == "seeds") opt.seeds = v.get<std::vector<std::uint64_t>>();
          else if (k == "selection_seeds") opt.selection_seeds = v.get<std::vector<std::uint64_t>>();
          else if (k == "p_grid") opt.p_grid = v.get<std::vector<double>>();
          else if (k == "m_grid") opt.m_grid = v.get<std::vector<double>>();
          else if (k == "n_mc") opt.n_mc = v.get<std::size_t>();
          else if (k == "include_naive") opt.include_naive = v.get<bool>();
          else cdrop::fail(cdrop::ErrorCode::ConfigError, "unknown comparison option '" + k + "'");
        } catch (const nlohmann::json::exception&) {
          cdrop::fail(cdrop::ErrorCode::ConfigError, "comparison option '" + k + "' has the wrong type");
        }
      }
    }
    cdrop::write_comparison(cfg, cdrop::run_comparison(cfg, opt));
  });
}

cdrop_status cdrop_generate_data(const char* generator_json, const char* out_csv_path) {
  return guarded([&] {
    require(generator_json != nullptr && out_csv_path != nullptr, "null argument");
    const std::string canonical = nlohmann::json::parse(generator_json).dump();
    cdrop::write_csv(cdrop::generate_dataset(generator_json), out_csv_path,
                     "generator=" + canonical + " config_hash=" + cdrop::fnv1a_hex(canonical));
  });
}

}  // extern "C"
