// Command-line front end. Links only the C interface.

#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qkfmag/qkfmag.h"

namespace {

struct ConfigDeleter {
  void operator()(qkf_config* c) const { qkf_config_free(c); }
};
struct ReportDeleter {
  void operator()(qkf_report* r) const { qkf_report_free(r); }
};

// Exit codes: 0 all checks passed, 1 some check failed, 2 usage or
// configuration error, 3 runtime error.
int fail_status(qkf_status status) {
  std::fprintf(stderr, "error: %s: %s\n", qkf_status_name(status), qkf_last_error());
  return status == QKF_ERR_CONFIG || status == QKF_ERR_PARAM || status == QKF_ERR_INVALID_ARGUMENT
             ? 2
             : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuous-measurement magnetometry simulator and estimator toolkit"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", std::string(qkf_version()));

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> n_traj;
  std::optional<unsigned> threads;
  std::string out_dir = "out";
  std::string convention;

  for (const char* name : {"simulate", "ensemble", "scaling", "oracle-check"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--n-traj", n_traj, "trajectories per ensemble (overrides the config)")
        ->check(CLI::Range(std::uint64_t{2}, std::uint64_t{1} << 40));
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    sub->add_option("--gamma-convention", convention, "how gamma in kHz/mG is read")
        ->check(CLI::IsMember({"angular", "cycles"}));
    sub->add_option("--threads", threads, "worker threads, 0 for all cores");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;  // --help and --version exit 0
  }
  const std::string command = app.get_subcommands().front()->get_name();

  qkf_config* raw = nullptr;
  if (auto st = qkf_config_load(config_path.c_str(), &raw); st != QKF_OK) return fail_status(st);
  std::unique_ptr<qkf_config, ConfigDeleter> cfg(raw);

  if (seed) qkf_config_set_seed(cfg.get(), *seed);
  if (n_traj) {
    if (auto st = qkf_config_set_n_traj(cfg.get(), *n_traj); st != QKF_OK) return fail_status(st);
  }
  if (!convention.empty()) {
    if (auto st = qkf_config_set_gamma_convention(cfg.get(), convention.c_str()); st != QKF_OK)
      return fail_status(st);
  }
  if (threads) qkf_config_set_threads(cfg.get(), *threads);

  qkf_report* raw_report = nullptr;
  if (auto st = qkf_run(cfg.get(), command.c_str(), out_dir.c_str(), &raw_report); st != QKF_OK)
    return fail_status(st);
  std::unique_ptr<qkf_report, ReportDeleter> report(raw_report);

  for (std::size_t i = 0; i < qkf_report_file_count(report.get()); ++i)
    std::printf("wrote %s\n", qkf_report_file(report.get(), i));
  for (std::size_t i = 0; i < qkf_report_check_count(report.get()); ++i)
    std::printf("%s\t%s\t%s\n", qkf_report_check_passed(report.get(), i) ? "PASS" : "FAIL",
                qkf_report_check_name(report.get(), i), qkf_report_check_detail(report.get(), i));

  if (!qkf_report_passed(report.get())) {
    for (std::size_t i = 0; i < qkf_report_check_count(report.get()); ++i)
      if (!qkf_report_check_passed(report.get(), i))
        std::fprintf(stderr, "failed-check\t%s\t%s\n", qkf_report_check_name(report.get(), i),
                     qkf_report_check_detail(report.get(), i));
    return 1;
  }
  return 0;
}
