// netshaper command-line frontend. Links only the public C API.
//
// Exit codes: 0 ok, 1 usage, 2 I/O, 3 validation / configuration, 4 internal.
// Errors are reported on stderr as one JSON object per line.

#include <netshaper/netshaper.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

namespace {

enum Exit { kOk = 0, kUsage = 1, kIo = 2, kInvalid = 3, kInternal = 4 };

int exit_for(ns_status s) {
  switch (s) {
    case NS_OK: return kOk;
    case NS_ERR_USAGE: return kUsage;
    case NS_ERR_IO: return kIo;
    case NS_ERR_INTERNAL: return kInternal;
    default: return kInvalid;
  }
}

struct Failure {
  int code;
  std::string kind;
  std::string message;
};

[[noreturn]] void raise(int code, std::string kind, std::string message) {
  throw Failure{code, std::move(kind), std::move(message)};
}

void check(ns_status s) {
  if (s != NS_OK) raise(exit_for(s), ns_status_name(s), ns_last_error());
}

void report(const Failure& f) {
  nlohmann::json j{{"error", f.kind}, {"exit", f.code}, {"message", f.message}};
  std::cerr << j.dump() << std::endl;
}

int64_t ms_to_ns(double ms) { return static_cast<int64_t>(std::llround(ms * 1e6)); }

// Owning wrappers over the C handles.
struct StreamDeleter {
  void operator()(ns_stream* s) const { ns_stream_free(s); }
};
using StreamPtr = std::unique_ptr<ns_stream, StreamDeleter>;

struct ResultDeleter {
  void operator()(ns_sim_result* r) const { ns_sim_result_free(r); }
};

std::vector<StreamPtr> load_all(const std::vector<std::string>& paths) {
  std::vector<StreamPtr> out;
  for (const auto& p : paths) {
    ns_stream* s = nullptr;
    check(ns_stream_load(p.c_str(), &s));
    out.emplace_back(s);
  }
  return out;
}

std::vector<const ns_stream*> raw(const std::vector<StreamPtr>& v) {
  std::vector<const ns_stream*> out;
  for (const auto& s : v) out.push_back(s.get());
  return out;
}

std::vector<double> parse_list(const std::string& flag, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      raise(kUsage, "usage", flag + ": bad number '" + item + "'");
    }
  }
  if (out.empty()) raise(kUsage, "usage", flag + ": empty list");
  return out;
}

// "lo:hi:n", n >= 2 points including both ends. Point i is computed as
// lo + (hi - lo) * i / (n - 1) so that refining n to 2n - 1 reproduces the
// coarse points bit for bit.
std::vector<double> parse_range(const std::string& flag, const std::string& text) {
  auto parts = parse_list(flag, [&] {
    std::string t = text;
    std::replace(t.begin(), t.end(), ':', ',');
    return t;
  }());
  if (parts.size() != 3 || parts[2] < 2 || parts[2] != std::floor(parts[2])) {
    raise(kUsage, "usage", flag + ": expected lo:hi:n with n >= 2");
  }
  const auto n = static_cast<int64_t>(parts[2]);
  std::vector<double> out;
  for (int64_t i = 0; i < n; ++i) {
    out.push_back(parts[0] + ((parts[1] - parts[0]) * static_cast<double>(i)) / static_cast<double>(n - 1));
  }
  return out;
}

struct DpFlags {
  double epsilon = 1.0;
  double delta = 1e-6;
  int64_t delta_w = 0;
  double T_ms = 0;
  double W_ms = 0;
  int64_t cutoff = 0;

  void add(CLI::App* app) {
    app->add_option("--epsilon", epsilon, "privacy budget per window")->capture_default_str();
    app->add_option("--delta", delta, "failure probability")->capture_default_str();
    app->add_option("--delta-w", delta_w, "sensitivity over W, bytes")->required();
    app->add_option("--T-ms", T_ms, "shaping interval, ms")->required();
    app->add_option("--W-ms", W_ms, "neighboring window, ms")->required();
    app->add_option("--cutoff", cutoff, "max shaped bytes per interval (0 = unbounded)")->capture_default_str();
  }

  ns_dp_params params() const {
    return {epsilon, delta, delta_w, ms_to_ns(T_ms), ms_to_ns(W_ms), cutoff};
  }
};

struct SimFlags {
  std::vector<std::string> traces;
  DpFlags dp;
  uint64_t seed = 0;
  std::string cutoff_mode = "flow-scaled";
  std::string calibration = "per-window";
  std::string horizon = "ttl";
  std::optional<double> sigma;
  uint32_t flows = 0;

  void add(CLI::App* app) {
    app->add_option("--trace", traces, "trace CSV (repeatable)")->required();
    dp.add(app);
    app->add_option("--seed", seed, "noise seed")->capture_default_str();
    app->add_option("--cutoff-mode", cutoff_mode, "flow-scaled | fixed")
        ->check(CLI::IsMember({"flow-scaled", "fixed"}))->capture_default_str();
    app->add_option("--calibration", calibration, "per-window | per-query")
        ->check(CLI::IsMember({"per-window", "per-query"}))->capture_default_str();
    app->add_option("--horizon", horizon, "ttl | drain")->check(CLI::IsMember({"ttl", "drain"}))->capture_default_str();
    app->add_option("--sigma", sigma, "noise standard deviation override, bytes");
    app->add_option("--flows", flows, "flow count (0 = one per trace)");
  }

  ns_sim_config config() const {
    ns_sim_config c;
    ns_sim_config_init(&c);
    c.params = dp.params();
    c.seed = seed;
    c.flows = flows;
    c.cutoff_mode = cutoff_mode == "fixed" ? NS_CUTOFF_FIXED : NS_CUTOFF_FLOW_SCALED;
    c.calibration = calibration == "per-query" ? NS_CALIBRATE_PER_QUERY : NS_CALIBRATE_PER_WINDOW;
    c.horizon = horizon == "drain" ? NS_HORIZON_DRAIN : NS_HORIZON_TTL;
    if (sigma) {
      if (*sigma < 0) raise(kInvalid, "validation", "sigma must be >= 0");
      c.sigma = *sigma;
      c.has_sigma = 1;
    }
    return c;
  }
};

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream f(path, std::ios::binary);
  f << text;
  f.flush();
  if (!f) raise(kIo, "io", "cannot write '" + path + "'");
}

int cmd_simulate(const SimFlags& fl, const std::string& csv_out, const std::string& summary_out) {
  const ns_sim_config cfg = fl.config();
  check(ns_dp_params_validate(&cfg.params));
  auto streams = load_all(fl.traces);
  auto ptrs = raw(streams);
  ns_sim_result* r = nullptr;
  check(ns_simulate(ptrs.data(), ptrs.size(), &cfg, &r));
  std::unique_ptr<ns_sim_result, ResultDeleter> result(r);
  if (!csv_out.empty()) check(ns_sim_result_write_csv(result.get(), csv_out.c_str()));
  write_text(summary_out, std::string(ns_sim_result_summary_json(result.get())) + "\n");
  return kOk;
}

int cmd_sweep(const SimFlags& fl, const std::string& axis, const std::string& values_text, const std::string& out) {
  ns_sim_config cfg = fl.config();
  check(ns_dp_params_validate(&cfg.params));
  auto values = parse_list("--values", values_text);
  if (axis == "T") {
    for (auto& v : values) v = static_cast<double>(ms_to_ns(v));
  }
  auto streams = load_all(fl.traces);
  auto ptrs = raw(streams);
  const std::string path = out.empty() || out == "-" ? "/dev/stdout" : out;
  check(ns_sweep(ptrs.data(), ptrs.size(), &cfg, axis.c_str(), values.data(), values.size(), path.c_str()));
  return kOk;
}

int cmd_privacy_curve(double delta_w, double delta, const std::string& queries_text, const std::string& sigma_list,
                      const std::string& sigma_range, const std::string& eps_list, const std::string& eps_range,
                      int64_t calib_queries, const std::string& out) {
  const int given = !sigma_list.empty() + !sigma_range.empty() + !eps_list.empty() + !eps_range.empty();
  if (given != 1) raise(kUsage, "usage", "give exactly one of --sigma, --sigma-range, --epsilon, --epsilon-range");
  std::vector<double> queries = parse_list("--queries", queries_text);
  for (double q : queries) {
    if (q < 0 || q != std::floor(q)) raise(kInvalid, "validation", "--queries must be non-negative integers");
  }
  if (calib_queries < 1) raise(kInvalid, "validation", "--calibration-queries must be >= 1");

  std::vector<double> sigmas;
  if (!sigma_list.empty() || !sigma_range.empty()) {
    sigmas = !sigma_list.empty() ? parse_list("--sigma", sigma_list) : parse_range("--sigma-range", sigma_range);
  } else {
    const auto eps = !eps_list.empty() ? parse_list("--epsilon", eps_list) : parse_range("--epsilon-range", eps_range);
    for (double e : eps) {
      double s = 0;
      check(ns_sigma_for_budget(delta_w, e, delta, calib_queries, &s));
      sigmas.push_back(s);
    }
  }

  std::ostringstream csv;
  csv.precision(17);
  csv << "delta_w,sigma,queries,epsilon_total\n";
  for (double s : sigmas) {
    for (double q : queries) {
      ns_privacy_report rep{};
      check(ns_compose_to_dp(delta_w, s, static_cast<int64_t>(q), delta, &rep));
      csv << delta_w << ',' << s << ',' << static_cast<int64_t>(q) << ',' << rep.epsilon_total << '\n';
    }
  }
  write_text(out, csv.str());
  return kOk;
}

int cmd_sigma(double delta_w, double epsilon, double delta, int64_t queries) {
  double sigma = 0;
  check(ns_sigma_for_budget(delta_w, epsilon, delta, queries, &sigma));
  ns_privacy_report rep{};
  check(ns_compose_to_dp(delta_w, sigma, queries, delta, &rep));
  double per_query = 0;
  check(ns_gaussian_sigma(delta_w, epsilon, delta, &per_query));
  nlohmann::json j{{"delta_w", delta_w},      {"epsilon", epsilon},
                   {"delta", delta},          {"queries", queries},
                   {"sigma", sigma},          {"epsilon_total", rep.epsilon_total},
                   {"alpha_star", rep.alpha_star}, {"sigma_per_query_classical", per_query}};
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int cmd_distance(const std::string& dir, std::vector<std::string> traces, double W_ms, double T_ms,
                 const std::string& out) {
  const int64_t W = ms_to_ns(W_ms), T = ms_to_ns(T_ms);
  if (T <= 0 || W <= 0 || W % T != 0) raise(kInvalid, "validation", "W must be a positive multiple of T");
  if (!dir.empty()) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) raise(kIo, "io", "not a directory: '" + dir + "'");
    for (const auto& e : std::filesystem::directory_iterator(dir, ec)) {
      if (e.is_regular_file() && e.path().extension() == ".csv") traces.push_back(e.path().string());
    }
    if (ec) raise(kIo, "io", "cannot list '" + dir + "': " + ec.message());
    std::sort(traces.begin(), traces.end());
  }
  if (traces.size() < 2) raise(kInvalid, "validation", "need at least 2 traces, found " + std::to_string(traces.size()));
  auto streams = load_all(traces);
  auto ptrs = raw(streams);
  ns_distance_table t{};
  check(ns_pairwise_distance(ptrs.data(), ptrs.size(), W, T, &t));
  std::ostringstream csv;
  csv << "pairs,p50,p90,p99,max\n" << t.pairs << ',' << t.p50 << ',' << t.p90 << ',' << t.p99 << ',' << t.max << '\n';
  write_text(out, csv.str());
  return kOk;
}

int cmd_tamaraw(double epsilon, int64_t n) {
  double gamma = 0;
  check(ns_tamaraw_gamma_bound(epsilon, n, &gamma));
  std::printf("%.17g\n", gamma);
  return kOk;
}

std::atomic<ns_endpoint*> g_endpoint{nullptr};

extern "C" void on_signal(int) {
  if (ns_endpoint* ep = g_endpoint.load()) ns_endpoint_stop(ep);
}

extern "C" void print_tick(const ns_tick_log* t, void*) {
  std::printf("%lld,%u,%llu,%llu,%llu\n", static_cast<long long>(t->k), t->dp_len,
              static_cast<unsigned long long>(t->payload), static_cast<unsigned long long>(t->dummy),
              static_cast<unsigned long long>(t->wire_bytes));
  std::fflush(stdout);
}

int cmd_tunnel(ns_role role, const std::string& config_path, bool quiet) {
  ns_tunnel_config* cfg = nullptr;
  check(ns_tunnel_config_load(config_path.c_str(), &cfg));
  std::unique_ptr<ns_tunnel_config, void (*)(ns_tunnel_config*)> cfg_owner(cfg, ns_tunnel_config_free);
  ns_endpoint* ep = nullptr;
  check(ns_endpoint_create(cfg, role, &ep));
  std::unique_ptr<ns_endpoint, void (*)(ns_endpoint*)> ep_owner(ep, ns_endpoint_free);

  uint16_t tunnel_port = 0, app_port = 0;
  check(ns_endpoint_bind(ep, &tunnel_port, &app_port));
  nlohmann::json ready{{"event", "listening"}, {"tunnel_port", tunnel_port}, {"app_port", app_port}};
  std::cerr << ready.dump() << std::endl;

  if (!quiet) {
    std::printf("k,dp_len,payload,dummy,wire_bytes\n");
    std::fflush(stdout);
    check(ns_endpoint_set_tick_callback(ep, print_tick, nullptr));
  }
  g_endpoint = ep;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const ns_status s = ns_endpoint_run(ep);
  g_endpoint = nullptr;
  check(s);

  ns_endpoint_stats st{};
  check(ns_endpoint_stats_get(ep, &st));
  nlohmann::json j{{"event", "stopped"},          {"sessions", st.sessions},
                   {"ticks", st.ticks},           {"prepare_overruns", st.prepare_overruns},
                   {"handoff_overruns", st.handoff_overruns}, {"wire_bytes_tx", st.wire_bytes_tx},
                   {"integrity_failures", st.integrity_failures}, {"dummy_bytes_rx", st.dummy_bytes_rx},
                   {"flows_opened", st.flows_opened}, {"flows_rejected", st.flows_rejected},
                   {"ttl_drop_bytes", st.ttl_drop_bytes}};
  std::cerr << j.dump() << std::endl;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"netshaper: differentially private traffic shaping toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ns_version());

  SimFlags sim;
  std::string sim_csv, sim_summary;
  auto* c_sim = app.add_subcommand("simulate", "replay traces through the shaper");
  sim.add(c_sim);
  c_sim->add_option("--out", sim_csv, "per-interval CSV path");
  c_sim->add_option("--summary", sim_summary, "summary JSON path (default stdout)");

  SimFlags sw;
  std::string sw_axis, sw_values, sw_out;
  auto* c_sweep = app.add_subcommand("sweep", "overhead for each value of one parameter");
  sw.add(c_sweep);
  c_sweep->add_option("--axis", sw_axis, "T | epsilon | sigma | flows | cutoff")
      ->required()->check(CLI::IsMember({"T", "epsilon", "sigma", "flows", "cutoff"}));
  c_sweep->add_option("--values", sw_values, "comma-separated values (T in ms, sizes in bytes)")->required();
  c_sweep->add_option("--out", sw_out, "CSV path (default stdout)");

  double pc_dw = 0, pc_delta = 1e-6;
  int64_t pc_calib = 1;
  std::string pc_q, pc_sigma, pc_sigma_range, pc_eps, pc_eps_range, pc_out;
  auto* c_pc = app.add_subcommand("privacy-curve", "composed privacy loss over sigma and query count");
  c_pc->add_option("--delta-w", pc_dw, "sensitivity, bytes")->required();
  c_pc->add_option("--delta", pc_delta, "target delta")->capture_default_str();
  c_pc->add_option("--queries", pc_q, "comma-separated query counts")->required();
  c_pc->add_option("--sigma", pc_sigma, "comma-separated sigmas, bytes");
  c_pc->add_option("--sigma-range", pc_sigma_range, "lo:hi:n, bytes");
  c_pc->add_option("--epsilon", pc_eps, "comma-separated budgets used to calibrate sigma");
  c_pc->add_option("--epsilon-range", pc_eps_range, "lo:hi:n budgets used to calibrate sigma");
  c_pc->add_option("--calibration-queries", pc_calib, "queries the epsilon budgets cover")->capture_default_str();
  c_pc->add_option("--out", pc_out, "CSV path (default stdout)");

  double sg_dw = 0, sg_eps = 1, sg_delta = 1e-6;
  int64_t sg_n = 1;
  auto* c_sigma = app.add_subcommand("sigma", "calibrate noise for a budget");
  c_sigma->add_option("--delta-w", sg_dw, "sensitivity, bytes")->required();
  c_sigma->add_option("--epsilon", sg_eps, "budget")->capture_default_str();
  c_sigma->add_option("--delta", sg_delta, "target delta")->capture_default_str();
  c_sigma->add_option("--queries", sg_n, "queries covered by the budget")->capture_default_str();

  std::string ds_dir, ds_out;
  std::vector<std::string> ds_traces;
  double ds_W = 0, ds_T = 0;
  auto* c_dist = app.add_subcommand("distance", "pairwise neighboring-distance percentiles");
  auto* ds_dir_opt = c_dist->add_option("--dir", ds_dir, "directory of trace CSVs");
  c_dist->add_option("--trace", ds_traces, "trace CSV (repeatable)")->excludes(ds_dir_opt);
  c_dist->add_option("--W-ms", ds_W, "window, ms")->required();
  c_dist->add_option("--T-ms", ds_T, "interval, ms")->required();
  c_dist->add_option("--out", ds_out, "CSV path (default stdout)");

  double tm_eps = 0;
  int64_t tm_n = 0;
  auto* c_tam = app.add_subcommand("tamaraw", "gamma bound implied by epsilon over n labels");
  c_tam->add_option("--epsilon", tm_eps, "privacy loss")->required();
  c_tam->add_option("--n", tm_n, "number of labels")->required();

  std::string tn_config;
  bool tn_quiet = false;
  auto* c_serve = app.add_subcommand("tunnel-serve", "run the accepting tunnel endpoint");
  auto* c_conn = app.add_subcommand("tunnel-connect", "run the connecting tunnel endpoint");
  for (auto* c : {c_serve, c_conn}) {
    c->add_option("--config", tn_config, "key=value config file")->required();
    c->add_flag("--quiet", tn_quiet, "do not print per-interval lines");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report({kUsage, "usage", e.what()});
    return kUsage;
  }

  try {
    if (*c_sim) return cmd_simulate(sim, sim_csv, sim_summary);
    if (*c_sweep) return cmd_sweep(sw, sw_axis, sw_values, sw_out);
    if (*c_pc) {
      return cmd_privacy_curve(pc_dw, pc_delta, pc_q, pc_sigma, pc_sigma_range, pc_eps, pc_eps_range, pc_calib, pc_out);
    }
    if (*c_sigma) return cmd_sigma(sg_dw, sg_eps, sg_delta, sg_n);
    if (*c_dist) {
      if (ds_dir.empty() && ds_traces.empty()) raise(kUsage, "usage", "give --dir or --trace");
      return cmd_distance(ds_dir, ds_traces, ds_W, ds_T, ds_out);
    }
    if (*c_tam) return cmd_tamaraw(tm_eps, tm_n);
    if (*c_serve) return cmd_tunnel(NS_ROLE_SERVE, tn_config, tn_quiet);
    if (*c_conn) return cmd_tunnel(NS_ROLE_CONNECT, tn_config, tn_quiet);
  } catch (const Failure& f) {
    report(f);
    return f.code;
  }
  return kUsage;
}
