#include "qkfmag/qkfmag.h"

#include <array>
#include <exception>
#include <new>
#include <string>

#include "qkfmag/commands.hpp"
#include "qkfmag/config.hpp"
#include "qkfmag/dynamics.hpp"
#include "qkfmag/estimators.hpp"

struct qkf_config {
  qkfmag::RunConfig cfg;
  mutable std::string resolved;
};

struct qkf_report {
  qkfmag::CommandReport report;
};

struct qkf_trajectory {
  qkfmag::TrajectoryRecord record;
  std::vector<qkfmag::KalmanState> filter;
};

namespace {

thread_local std::string last_error;

qkf_status set_error(qkf_status status, const std::string& message) {
  last_error = message;
  return status;
}

// Runs `body`, mapping exceptions to status codes.
template <class F>
qkf_status guarded(F&& body) {
  try {
    last_error.clear();
    body();
    return QKF_OK;
  } catch (const qkfmag::ConfigError& e) {
    return set_error(QKF_ERR_CONFIG, e.what());
  } catch (const qkfmag::ParamError& e) {
    return set_error(QKF_ERR_PARAM, e.what());
  } catch (const qkfmag::NumericError& e) {
    return set_error(QKF_ERR_NUMERIC, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return set_error(QKF_ERR_IO, e.what());
  } catch (const std::invalid_argument& e) {
    return set_error(QKF_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::bad_alloc&) {
    return set_error(QKF_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(QKF_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(QKF_ERR_INTERNAL, "unknown error");
  }
}

qkf_status null_arg(const char* what) {
  return set_error(QKF_ERR_INVALID_ARGUMENT, std::string(what) + " is null");
}

qkfmag::PhysicalParams to_params(const qkf_physical_params& c) {
  qkfmag::PhysicalParams p;
  p.j_total = c.j_total;
  p.gamma = c.gamma;
  p.b_true = c.b_true;
  p.meas_strength = c.meas_strength;
  p.efficiency = c.efficiency;
  p.prior_b_variance = c.prior_infinite ? qkfmag::PriorVariance::infinite()
                                        : qkfmag::PriorVariance::of(c.prior_b_variance);
  p.t_total = c.t_total;
  return p;
}

template <class F>
qkf_status scalar(const qkf_physical_params* p, double* out, F&& f) {
  if (!p) return null_arg("params");
  if (!out) return null_arg("out");
  return guarded([&] { *out = f(qkfmag::validate_params(to_params(*p))); });
}

}  // namespace

extern "C" {

const char* qkf_version(void) { return QKFMAG_VERSION; }

const char* qkf_status_name(qkf_status status) {
  switch (status) {
    case QKF_OK: return "ok";
    case QKF_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case QKF_ERR_CONFIG: return "config_error";
    case QKF_ERR_PARAM: return "param_error";
    case QKF_ERR_NUMERIC: return "numeric_error";
    case QKF_ERR_IO: return "io_error";
    case QKF_ERR_INTERNAL: return "internal_error";
  }
  return "unknown";
}

const char* qkf_last_error(void) { return last_error.c_str(); }

qkf_status qkf_config_parse(const char* json_text, qkf_config** out) {
  if (!json_text) return null_arg("json_text");
  if (!out) return null_arg("out");
  *out = nullptr;
  return guarded([&] { *out = new qkf_config{qkfmag::parse_config(json_text), {}}; });
}

qkf_status qkf_config_load(const char* path, qkf_config** out) {
  if (!path) return null_arg("path");
  if (!out) return null_arg("out");
  *out = nullptr;
  return guarded([&] { *out = new qkf_config{qkfmag::load_config(path), {}}; });
}

void qkf_config_free(qkf_config* cfg) { delete cfg; }

qkf_status qkf_config_set_seed(qkf_config* cfg, uint64_t seed) {
  if (!cfg) return null_arg("cfg");
  cfg->cfg.seed = seed;
  return QKF_OK;
}

qkf_status qkf_config_set_n_traj(qkf_config* cfg, uint64_t n_traj) {
  if (!cfg) return null_arg("cfg");
  if (n_traj < 2) return set_error(QKF_ERR_INVALID_ARGUMENT, "n_traj: need at least 2 trajectories");
  cfg->cfg.ensemble.n_traj = n_traj;
  cfg->cfg.scaling.n_traj = n_traj;
  return QKF_OK;
}

qkf_status qkf_config_set_gamma_convention(qkf_config* cfg, const char* name) {
  if (!cfg) return null_arg("cfg");
  if (!name) return null_arg("name");
  return guarded([&] {
    try {
      qkfmag::set_gamma_convention(cfg->cfg, qkfmag::parse_gamma_convention(name));
    } catch (const qkfmag::ConfigError& e) {
      throw std::invalid_argument(e.what());
    }
  });
}

qkf_status qkf_config_set_threads(qkf_config* cfg, unsigned threads) {
  if (!cfg) return null_arg("cfg");
  cfg->cfg.threads = threads;
  return QKF_OK;
}

qkf_status qkf_config_params(const qkf_config* cfg, qkf_physical_params* out) {
  if (!cfg) return null_arg("cfg");
  if (!out) return null_arg("out");
  const auto& p = cfg->cfg.params;
  *out = {p.j_total,       p.gamma,
          p.b_true,        p.meas_strength,
          p.efficiency,    p.prior_b_variance.is_infinite() ? 0.0 : p.prior_b_variance.value(),
          p.prior_b_variance.is_infinite() ? 1 : 0, p.t_total};
  return QKF_OK;
}

const char* qkf_config_resolved_json(const qkf_config* cfg) {
  if (!cfg) return "";
  cfg->resolved = qkfmag::resolved_json(cfg->cfg);
  return cfg->resolved.c_str();
}

qkf_status qkf_run(const qkf_config* cfg, const char* command, const char* out_dir,
                   qkf_report** out) {
  if (!cfg) return null_arg("cfg");
  if (!command) return null_arg("command");
  if (!out_dir) return null_arg("out_dir");
  if (!out) return null_arg("out");
  *out = nullptr;
  return guarded([&] { *out = new qkf_report{qkfmag::run_command(command, cfg->cfg, out_dir)}; });
}

int qkf_report_passed(const qkf_report* r) { return r && r->report.passed() ? 1 : 0; }

size_t qkf_report_check_count(const qkf_report* r) { return r ? r->report.checks.size() : 0; }

const char* qkf_report_check_name(const qkf_report* r, size_t i) {
  return r && i < r->report.checks.size() ? r->report.checks[i].name.c_str() : nullptr;
}

int qkf_report_check_passed(const qkf_report* r, size_t i) {
  return r && i < r->report.checks.size() && r->report.checks[i].passed ? 1 : 0;
}

const char* qkf_report_check_detail(const qkf_report* r, size_t i) {
  return r && i < r->report.checks.size() ? r->report.checks[i].detail.c_str() : nullptr;
}

size_t qkf_report_file_count(const qkf_report* r) { return r ? r->report.files.size() : 0; }

const char* qkf_report_file(const qkf_report* r, size_t i) {
  return r && i < r->report.files.size() ? r->report.files[i].c_str() : nullptr;
}

const char* qkf_report_summary_json(const qkf_report* r) {
  return r ? r->report.summary_json.c_str() : "";
}

void qkf_report_free(qkf_report* r) { delete r; }

qkf_status qkf_validate_params(const qkf_physical_params* p) {
  if (!p) return null_arg("params");
  return guarded([&] { qkfmag::validate_params(to_params(*p)); });
}

qkf_status qkf_conditional_variance(const qkf_physical_params* p, double t, double* out) {
  return scalar(p, out, [&](const qkfmag::PhysicalParams& q) {
    return qkfmag::conditional_variance(q, t);
  });
}

qkf_status qkf_riccati_analytic(const qkf_physical_params* p, double t, double* out) {
  return scalar(p, out,
                [&](const qkfmag::PhysicalParams& q) { return qkfmag::riccati_analytic(q, t); });
}

qkf_status qkf_riccati_v22(const qkf_physical_params* p, double t, double* out) {
  return scalar(p, out, [&](const qkfmag::PhysicalParams& q) {
    const std::array<double, 1> times{t};
    return qkfmag::riccati_integrate(q, times).v[0](1, 1);
  });
}

qkf_status qkf_detection_threshold_asymptotic(const qkf_physical_params* p, double t, double* out) {
  return scalar(p, out, [&](const qkfmag::PhysicalParams& q) {
    return qkfmag::detection_threshold_asymptotic(q, t);
  });
}

qkf_status qkf_shotnoise_limit(const qkf_physical_params* p, double t, double* out) {
  return scalar(p, out,
                [&](const qkfmag::PhysicalParams& q) { return qkfmag::shotnoise_limit(q, t); });
}

qkf_status qkf_simulate(const qkf_physical_params* p, double dt_max, uint64_t seed, uint64_t stream,
                        int zero_noise, qkf_trajectory** out) {
  if (!p) return null_arg("params");
  if (!out) return null_arg("out");
  *out = nullptr;
  return guarded([&] {
    const auto params = qkfmag::validate_params(to_params(*p));
    const auto grid = qkfmag::default_grid(params, dt_max > 0.0 ? dt_max : 0.0);
    auto record = qkfmag::simulate_trajectory(
        params, grid, {seed, stream},
        zero_noise ? qkfmag::NoiseMode::zero : qkfmag::NoiseMode::stochastic);
    auto filter = qkfmag::run_filter(record, params);
    *out = new qkf_trajectory{std::move(record), std::move(filter)};
  });
}

size_t qkf_trajectory_size(const qkf_trajectory* traj) {
  return traj ? traj->record.states.size() : 0;
}

qkf_status qkf_trajectory_state(const qkf_trajectory* traj, size_t i, double* t, double* mean_jz,
                                double* var_jz) {
  if (!traj) return null_arg("traj");
  if (i >= traj->record.states.size())
    return set_error(QKF_ERR_INVALID_ARGUMENT, "index out of range");
  const auto& s = traj->record.states[i];
  if (t) *t = s.t;
  if (mean_jz) *mean_jz = s.mean_jz;
  if (var_jz) *var_jz = s.var_jz;
  return QKF_OK;
}

qkf_status qkf_trajectory_record(const qkf_trajectory* traj, size_t i, double* d_xi, double* y) {
  if (!traj) return null_arg("traj");
  if (i >= traj->record.d_xi.size()) return set_error(QKF_ERR_INVALID_ARGUMENT, "index out of range");
  if (d_xi) *d_xi = traj->record.d_xi[i];
  if (y) *y = traj->record.y[i];
  return QKF_OK;
}

qkf_status qkf_trajectory_estimate(const qkf_trajectory* traj, size_t i, double* b_tilde,
                                   double* b_variance) {
  if (!traj) return null_arg("traj");
  if (i >= traj->filter.size()) return set_error(QKF_ERR_INVALID_ARGUMENT, "index out of range");
  if (b_tilde) *b_tilde = traj->filter[i].b_tilde();
  if (b_variance) *b_variance = traj->filter[i].b_variance();
  return QKF_OK;
}

void qkf_trajectory_free(qkf_trajectory* traj) { delete traj; }

}  // extern "C"
