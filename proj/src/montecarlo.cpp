#include "qkfmag/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "qkfmag/random.hpp"

namespace qkfmag {

std::string_view to_string(Estimator e) {
  return e == Estimator::qkf ? "qkf" : "regression";
}

SeedSpec substream(std::uint64_t master_seed, std::uint64_t i) {
  if (i >= (std::uint64_t{1} << 63)) throw ParamError({"stream index must be < 2^63"});
  return {master_seed, i};
}

std::vector<std::size_t> log_checkpoints(const TimeGrid& grid, int per_decade, double t_from,
                                         double t_to, std::span<const double> extra_times) {
  std::vector<std::size_t> idx;
  if (per_decade > 0 && t_from > 0.0 && t_to >= t_from) {
    const double lo = std::floor(std::log10(t_from) * per_decade);
    const double hi = std::ceil(std::log10(t_to) * per_decade);
    for (double i = lo; i <= hi; i += 1.0) {
      const double t = std::pow(10.0, i / per_decade);
      if (t < t_from * (1 - 1e-12) || t > t_to * (1 + 1e-12)) continue;
      idx.push_back(grid.nearest_index(t));
    }
  }
  for (double t : extra_times) idx.push_back(grid.nearest_index(t));
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  idx.erase(std::remove_if(idx.begin(), idx.end(), [](std::size_t k) { return k < 3; }), idx.end());
  return idx;
}

namespace {

struct Prepared {
  std::vector<IntervalCoefficients> steps;
  std::vector<double> sqrt_dt;
  std::vector<double> abscissa;
  std::size_t last = 0;  // highest checkpoint index
  bool want_qkf = false;
  bool want_reg = false;
};

Prepared prepare(const EnsembleSpec& spec) {
  validate_params(spec.params);
  if (spec.n_traj < 2) throw ParamError({"n_traj: need at least 2 trajectories"});
  if (spec.checkpoints.empty()) throw ParamError({"checkpoints: none given"});
  if (!std::is_sorted(spec.checkpoints.begin(), spec.checkpoints.end()) ||
      std::adjacent_find(spec.checkpoints.begin(), spec.checkpoints.end()) != spec.checkpoints.end())
    throw ParamError({"checkpoints: must be strictly increasing"});
  if (spec.checkpoints.back() >= spec.grid.size() || spec.checkpoints.front() == 0)
    throw ParamError({"checkpoints: must lie inside the grid (index >= 1)"});
  if (spec.estimators.empty()) throw ParamError({"estimators: none requested"});

  Prepared prep;
  prep.last = spec.checkpoints.back();
  prep.steps.reserve(prep.last);
  for (std::size_t k = 0; k < prep.last; ++k) {
    prep.steps.push_back(interval_coefficients(spec.params, spec.grid.t(k), spec.grid.dt(k)));
    prep.sqrt_dt.push_back(std::sqrt(spec.grid.dt(k)));
    prep.abscissa.push_back(regression_abscissa(spec.params, spec.grid.t(k), spec.abscissa));
  }
  for (auto e : spec.estimators) {
    if (e == Estimator::qkf) prep.want_qkf = true;
    if (e == Estimator::regression) prep.want_reg = true;
  }
  return prep;
}

// errors[c] for each requested estimator; NaN where undefined.
void run_one(const EnsembleSpec& spec, const Prepared& prep, std::uint64_t i,
             std::vector<double>& qkf_err, std::vector<double>& reg_err) {
  const PhysicalParams& p = spec.params;
  const double b = p.b_true;
  const double inv_gj = 1.0 / (p.gamma * p.j_total);
  GaussianStream rng(substream(spec.master_seed, i));
  KalmanState ks = kalman_init(p);
  RegressionAccumulator acc;
  double mean = 0.0;
  std::size_t next = 0;
  for (std::size_t k = 0; k < prep.last; ++k) {
    const auto& step = prep.steps[k];
    const double dw = prep.sqrt_dt[k] * rng.next();
    const double d_xi = record_increment(mean, step, dw);
    mean = step_mean(mean, step, b, dw);
    if (prep.want_qkf) ks = kalman_step(ks, step, d_xi);
    if (prep.want_reg) acc.add(prep.abscissa[k], step.dt, d_xi / step.dt);
    if (k + 1 == spec.checkpoints[next]) {
      if (prep.want_qkf) qkf_err[next] = ks.b_tilde() - b;
      if (prep.want_reg)
        reg_err[next] = acc.count() >= 3 ? acc.slope() * inv_gj - b : std::nan("");
      ++next;
    }
  }
}

// Running mean / M2 per checkpoint, merged with Chan's pairwise update.
struct Moments {
  std::vector<double> n, mean_sq, m2_sq, mean_e, m2_e;

  explicit Moments(std::size_t c) : n(c, 0), mean_sq(c, 0), m2_sq(c, 0), mean_e(c, 0), m2_e(c, 0) {}

  void add(std::size_t c, double e) {
    if (std::isnan(e)) return;
    n[c] += 1.0;
    const double sq = e * e;
    double d = sq - mean_sq[c];
    mean_sq[c] += d / n[c];
    m2_sq[c] += d * (sq - mean_sq[c]);
    d = e - mean_e[c];
    mean_e[c] += d / n[c];
    m2_e[c] += d * (e - mean_e[c]);
  }

  void merge(const Moments& o) {
    for (std::size_t c = 0; c < n.size(); ++c) {
      if (o.n[c] == 0) continue;
      const double na = n[c], nb = o.n[c], nt = na + nb;
      double d = o.mean_sq[c] - mean_sq[c];
      mean_sq[c] += d * nb / nt;
      m2_sq[c] += o.m2_sq[c] + d * d * na * nb / nt;
      d = o.mean_e[c] - mean_e[c];
      mean_e[c] += d * nb / nt;
      m2_e[c] += o.m2_e[c] + d * d * na * nb / nt;
      n[c] = nt;
    }
  }
};

constexpr std::uint64_t kBlock = 64;

}  // namespace

std::map<Estimator, std::vector<double>> trajectory_errors(const EnsembleSpec& spec, std::uint64_t i) {
  const auto prep = prepare(spec);
  std::vector<double> q(spec.checkpoints.size(), std::nan("")), r(q);
  run_one(spec, prep, i, q, r);
  std::map<Estimator, std::vector<double>> out;
  if (prep.want_qkf) out[Estimator::qkf] = q;
  if (prep.want_reg) out[Estimator::regression] = r;
  return out;
}

EnsembleStats run_ensemble(const EnsembleSpec& spec) {
  const auto prep = prepare(spec);
  const std::size_t nc = spec.checkpoints.size();
  const std::uint64_t n_blocks = (spec.n_traj + kBlock - 1) / kBlock;

  std::vector<Moments> qkf_blocks(n_blocks, Moments(nc));
  std::vector<Moments> reg_blocks(n_blocks, Moments(nc));

  std::atomic<std::uint64_t> next_block{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    std::vector<double> q(nc), r(nc);
    try {
      for (std::uint64_t blk = next_block++; blk < n_blocks; blk = next_block++) {
        const std::uint64_t end = std::min(spec.n_traj, (blk + 1) * kBlock);
        for (std::uint64_t i = blk * kBlock; i < end; ++i) {
          run_one(spec, prep, i, q, r);
          for (std::size_t c = 0; c < nc; ++c) {
            if (prep.want_qkf) qkf_blocks[blk].add(c, q[c]);
            if (prep.want_reg) reg_blocks[blk].add(c, r[c]);
          }
        }
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next_block = n_blocks;
    }
  };

  unsigned threads = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, n_blocks));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<double> times;
  for (auto k : spec.checkpoints) times.push_back(spec.grid.t(k));
  const auto riccati = riccati_integrate(spec.params, times);

  EnsembleStats stats;
  stats.n_traj = spec.n_traj;
  stats.master_seed = spec.master_seed;
  stats.checkpoints = spec.checkpoints;
  auto finish = [&](Estimator e, std::vector<Moments>& blocks) {
    Moments total(nc);
    for (const auto& b : blocks) total.merge(b);
    std::vector<CheckpointStats> rows(nc);
    for (std::size_t c = 0; c < nc; ++c) {
      const double n = total.n[c];
      auto& row = rows[c];
      row.t = times[c];
      row.predicted_v22 = riccati.v[c](1, 1);
      if (n < 2) {
        row.mse = row.stderr_mse = row.mean_b_tilde = row.stderr_mean = std::nan("");
        continue;
      }
      row.mse = total.mean_sq[c];
      row.stderr_mse = std::sqrt(total.m2_sq[c] / (n - 1.0) / n);
      row.mean_b_tilde = spec.params.b_true + total.mean_e[c];
      row.stderr_mean = std::sqrt(total.m2_e[c] / (n - 1.0) / n);
    }
    stats.by_estimator[e] = std::move(rows);
  };
  if (prep.want_qkf) finish(Estimator::qkf, qkf_blocks);
  if (prep.want_reg) finish(Estimator::regression, reg_blocks);
  return stats;
}

double fit_loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ParamError({"fit: need matching series"});
  RegressionAccumulator acc;
  for (std::size_t i = 0; i < x.size(); ++i) acc.add(std::log(x[i]), 1.0, std::log(y[i]));
  return acc.slope();
}

ScalingResult scaling_study(const ScalingSpec& spec) {
  if (spec.j_values.size() < 4) throw ParamError({"j_values: need at least 4 values"});
  const auto [lo, hi] = std::minmax_element(spec.j_values.begin(), spec.j_values.end());
  if (!(*lo > 0.0) || *hi / *lo < 100.0 * (1 - 1e-12))
    throw ParamError({"j_values: must span at least two decades"});
  if (!(spec.t_check > 0.0)) throw ParamError({"t_check: must be positive"});

  ScalingResult out;
  out.t_check = spec.t_check;
  out.j_values = spec.j_values;
  for (double j : spec.j_values) {
    EnsembleSpec es = spec.base;
    es.params.j_total = j;
    es.params.t_total = spec.t_check;
    if (spec.t_check <= 10.0 / (j * es.params.meas_strength))
      throw ParamError({"t_check: must be >> 1/(JM) for every J"});
    es.grid = default_grid(es.params, spec.dt_max, spec.points_per_decade, spec.decades_below);
    es.checkpoints = {es.grid.size() - 1};
    const auto stats = run_ensemble(es);
    for (auto e : es.estimators) out.rms[e].push_back(std::sqrt(stats.at(e).front().mse));
    out.riccati_delta_b.push_back(std::sqrt(stats.by_estimator.begin()->second.front().predicted_v22));
    out.asymptotic_delta_b.push_back(detection_threshold_asymptotic(es.params, spec.t_check));
    out.shotnoise_delta_b.push_back(shotnoise_limit(es.params, spec.t_check));
  }
  for (const auto& [e, rms] : out.rms) out.slopes[e] = fit_loglog_slope(out.j_values, rms);
  out.riccati_slope = fit_loglog_slope(out.j_values, out.riccati_delta_b);
  out.asymptotic_slope = fit_loglog_slope(out.j_values, out.asymptotic_delta_b);
  out.shotnoise_slope = fit_loglog_slope(out.j_values, out.shotnoise_delta_b);
  return out;
}

}  // namespace qkfmag
