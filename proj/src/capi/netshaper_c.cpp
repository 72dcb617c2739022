#include "netshaper/netshaper.h"

#include <cmath>
#include <fstream>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "common/error.hpp"
#include "dpcore/accountant.hpp"
#include "sim/report.hpp"
#include "sim/simulator.hpp"
#include "traces/csv.hpp"
#include "traces/distance.hpp"
#include "tunnel/config.hpp"
#include "tunnel/endpoint.hpp"

namespace ns = netshaper;

struct ns_stream {
  ns::traces::Stream stream;
};

struct ns_sim_result {
  ns::sim::SimResult result;
  std::string summary;
};

struct ns_tunnel_config {
  ns::tunnel::TunnelConfig cfg;
};

struct ns_endpoint {
  std::unique_ptr<ns::tunnel::Endpoint> ep;
  ns_tick_callback cb = nullptr;
  void* user = nullptr;
};

namespace {

thread_local std::string g_last_error;

ns_status status_for(ns::ErrorKind k) {
  switch (k) {
    case ns::ErrorKind::Usage: return NS_ERR_USAGE;
    case ns::ErrorKind::Io: return NS_ERR_IO;
    case ns::ErrorKind::Validation: return NS_ERR_VALIDATION;
    case ns::ErrorKind::Domain: return NS_ERR_DOMAIN;
    case ns::ErrorKind::Parse: return NS_ERR_PARSE;
    case ns::ErrorKind::Config: return NS_ERR_CONFIG;
    case ns::ErrorKind::Scheduling: return NS_ERR_SCHEDULING;
    case ns::ErrorKind::Session: return NS_ERR_SESSION;
    case ns::ErrorKind::Auth: return NS_ERR_AUTH;
    case ns::ErrorKind::ParameterMismatch: return NS_ERR_PARAM_MISMATCH;
    case ns::ErrorKind::Capacity: return NS_ERR_CAPACITY;
  }
  return NS_ERR_INTERNAL;
}

// Runs f, translating exceptions into a status and the thread's error text.
template <typename F>
ns_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return NS_OK;
  } catch (const ns::Error& e) {
    g_last_error = e.what();
    return status_for(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return NS_ERR_INTERNAL;
}

void require(bool ok, const char* what) {
  if (!ok) ns::fail(ns::ErrorKind::Usage, what);
}

std::uint64_t to_queries(std::int64_t n) {
  if (n < 0) ns::fail(ns::ErrorKind::Domain, "query count must be >= 0");
  return static_cast<std::uint64_t>(n);
}

ns::dpcore::DpParams to_params(const ns_dp_params& p) {
  ns::dpcore::DpParams d;
  d.epsilon = p.epsilon;
  d.delta = p.delta;
  d.delta_w = p.delta_w;
  d.T = p.T;
  d.W = p.W;
  d.cutoff = p.cutoff <= 0 ? ns::kUnbounded : p.cutoff;
  return d;
}

ns::sim::SimConfig to_sim_config(const ns_sim_config& c) {
  ns::sim::SimConfig s;
  s.params = to_params(c.params);
  s.seed = c.seed;
  s.flows = c.flows;
  s.cutoff_mode = c.cutoff_mode == NS_CUTOFF_FIXED ? ns::sim::CutoffMode::Fixed : ns::sim::CutoffMode::FlowScaled;
  s.calibration = c.calibration == NS_CALIBRATE_PER_QUERY ? ns::sim::Calibration::PerQuery
                                                         : ns::sim::Calibration::PerWindow;
  if (c.has_sigma) s.sigma = c.sigma;
  s.horizon = c.horizon == NS_HORIZON_DRAIN ? ns::sim::Horizon::Drain : ns::sim::Horizon::Ttl;
  return s;
}

std::vector<ns::traces::Stream> collect(const ns_stream* const* streams, std::size_t count) {
  require(streams != nullptr || count == 0, "streams is NULL");
  std::vector<ns::traces::Stream> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    require(streams[i] != nullptr, "stream handle is NULL");
    out.push_back(streams[i]->stream);
  }
  return out;
}

}  // namespace

extern "C" {

const char* ns_last_error(void) { return g_last_error.c_str(); }

const char* ns_status_name(ns_status s) {
  switch (s) {
    case NS_OK: return "ok";
    case NS_ERR_USAGE: return "usage";
    case NS_ERR_IO: return "io";
    case NS_ERR_VALIDATION: return "validation";
    case NS_ERR_DOMAIN: return "domain";
    case NS_ERR_PARSE: return "parse";
    case NS_ERR_CONFIG: return "config";
    case NS_ERR_SCHEDULING: return "scheduling";
    case NS_ERR_SESSION: return "session";
    case NS_ERR_AUTH: return "auth";
    case NS_ERR_PARAM_MISMATCH: return "parameter_mismatch";
    case NS_ERR_CAPACITY: return "capacity";
    case NS_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* ns_version(void) { return "0.1.0"; }

ns_status ns_gaussian_sigma(double delta_w, double epsilon, double delta, double* sigma_out) {
  return guarded([&] {
    require(sigma_out, "sigma_out is NULL");
    *sigma_out = ns::dpcore::gaussian_sigma(delta_w, epsilon, delta);
  });
}

ns_status ns_rdp_epsilon_gaussian(double delta_w, double sigma, double alpha, double* eps_out) {
  return guarded([&] {
    require(eps_out, "eps_out is NULL");
    *eps_out = ns::dpcore::rdp_epsilon_gaussian(delta_w, sigma, alpha);
  });
}

ns_status ns_compose_to_dp(double delta_w, double sigma, int64_t queries, double delta, ns_privacy_report* out) {
  return guarded([&] {
    require(out, "out is NULL");
    const auto r = ns::dpcore::compose_to_dp(delta_w, sigma, to_queries(queries), delta);
    *out = {r.sigma, static_cast<int64_t>(r.queries), r.epsilon_total, r.delta_total, r.alpha_star};
  });
}

ns_status ns_sigma_for_budget(double delta_w, double epsilon, double delta, int64_t queries, double* sigma_out) {
  return guarded([&] {
    require(sigma_out, "sigma_out is NULL");
    *sigma_out = ns::dpcore::sigma_for_budget(delta_w, epsilon, delta, to_queries(queries));
  });
}

ns_status ns_group_privacy(double epsilon, double delta, int64_t k, double* eps_out, double* delta_out) {
  return guarded([&] {
    require(eps_out && delta_out, "output pointer is NULL");
    const auto g = ns::dpcore::group_privacy(epsilon, delta, k);
    *eps_out = g.epsilon;
    *delta_out = g.delta;
  });
}

ns_status ns_tamaraw_gamma_bound(double epsilon, int64_t n, double* gamma_out) {
  return guarded([&] {
    require(gamma_out, "gamma_out is NULL");
    if (n < 1) ns::fail(ns::ErrorKind::Domain, "corpus size n must be >= 1");
    *gamma_out = ns::dpcore::tamaraw_gamma_bound(epsilon, static_cast<std::uint64_t>(n));
  });
}

ns_status ns_stream_load(const char* path, ns_stream** out) {
  return guarded([&] {
    require(path && out, "NULL argument");
    *out = new ns_stream{ns::traces::load_trace(path)};
  });
}

ns_status ns_stream_parse(const char* text, size_t len, ns_stream** out) {
  return guarded([&] {
    require((text || len == 0) && out, "NULL argument");
    std::istringstream in(std::string(text ? text : "", len));
    *out = new ns_stream{ns::traces::parse_trace(in)};
  });
}

size_t ns_stream_size(const ns_stream* s) { return s ? s->stream.size() : 0; }
int64_t ns_stream_total_bytes(const ns_stream* s) { return s ? s->stream.total_bytes() : 0; }
void ns_stream_free(ns_stream* s) { delete s; }

ns_status ns_neighboring_distance(const ns_stream* a, const ns_stream* b, int64_t W, int64_t T, int64_t* out) {
  return guarded([&] {
    require(a && b && out, "NULL argument");
    *out = ns::traces::neighboring_distance(a->stream, b->stream, W, T);
  });
}

ns_status ns_pairwise_distance(const ns_stream* const* streams, size_t count, int64_t W, int64_t T,
                               ns_distance_table* out) {
  return guarded([&] {
    require(out, "out is NULL");
    const auto all = collect(streams, count);
    const auto t = ns::traces::pairwise_distance_distribution(all, W, T);
    *out = {t.p50, t.p90, t.p99, t.max, t.distances.size()};
  });
}

ns_status ns_dp_params_validate(const ns_dp_params* p) {
  return guarded([&] {
    require(p, "params is NULL");
    to_params(*p).validate();
  });
}

void ns_sim_config_init(ns_sim_config* cfg) {
  if (!cfg) return;
  *cfg = ns_sim_config{};
  cfg->params.epsilon = 1.0;
  cfg->params.delta = 1e-6;
  cfg->params.cutoff = 0;
  cfg->cutoff_mode = NS_CUTOFF_FLOW_SCALED;
  cfg->calibration = NS_CALIBRATE_PER_WINDOW;
  cfg->horizon = NS_HORIZON_TTL;
}

ns_status ns_simulate(const ns_stream* const* streams, size_t count, const ns_sim_config* cfg, ns_sim_result** out) {
  return guarded([&] {
    require(cfg && out, "NULL argument");
    const auto all = collect(streams, count);
    auto r = std::make_unique<ns_sim_result>();
    r->result = ns::sim::simulate(all, to_sim_config(*cfg));
    r->summary = ns::sim::summary_json(r->result).dump(2);
    *out = r.release();
  });
}

ns_status ns_sim_result_write_csv(const ns_sim_result* r, const char* path) {
  return guarded([&] {
    require(r && path, "NULL argument");
    std::ofstream f(path, std::ios::binary);
    if (!f) ns::fail(ns::ErrorKind::Io, std::string("cannot write '") + path + "'");
    ns::sim::write_interval_csv(f, r->result);
    f.flush();
    if (!f) ns::fail(ns::ErrorKind::Io, std::string("write failed for '") + path + "'");
  });
}

const char* ns_sim_result_summary_json(const ns_sim_result* r) { return r ? r->summary.c_str() : ""; }

ns_status ns_sim_result_overhead(const ns_sim_result* r, double* out) {
  return guarded([&] {
    require(r && out, "NULL argument");
    if (!r->result.bandwidth_overhead) ns::fail(ns::ErrorKind::Domain, "overhead undefined: no payload offered");
    *out = *r->result.bandwidth_overhead;
  });
}

void ns_sim_result_free(ns_sim_result* r) { delete r; }

ns_status ns_sweep(const ns_stream* const* streams, size_t count, const ns_sim_config* cfg, const char* axis,
                   const double* values, size_t nvalues, const char* csv_path) {
  return guarded([&] {
    require(cfg && axis && csv_path && (values || nvalues == 0), "NULL argument");
    const auto all = collect(streams, count);
    const auto ax = ns::sim::parse_axis(axis);
    const auto rows = ns::sim::overhead_sweep(all, to_sim_config(*cfg), ax, std::span(values, nvalues));
    std::ofstream f(csv_path, std::ios::binary);
    if (!f) ns::fail(ns::ErrorKind::Io, std::string("cannot write '") + csv_path + "'");
    ns::sim::write_sweep_csv(f, ax, rows);
    f.flush();
    if (!f) ns::fail(ns::ErrorKind::Io, std::string("write failed for '") + csv_path + "'");
  });
}

ns_status ns_tunnel_config_load(const char* path, ns_tunnel_config** out) {
  return guarded([&] {
    require(path && out, "NULL argument");
    *out = new ns_tunnel_config{ns::tunnel::load_tunnel_config(path)};
  });
}

ns_status ns_tunnel_config_parse(const char* text, size_t len, ns_tunnel_config** out) {
  return guarded([&] {
    require((text || len == 0) && out, "NULL argument");
    std::istringstream in(std::string(text ? text : "", len));
    *out = new ns_tunnel_config{ns::tunnel::parse_tunnel_config(in)};
  });
}

void ns_tunnel_config_free(ns_tunnel_config* cfg) { delete cfg; }

ns_status ns_endpoint_create(const ns_tunnel_config* cfg, ns_role role, ns_endpoint** out) {
  return guarded([&] {
    require(cfg && out, "NULL argument");
    auto ep = std::make_unique<ns_endpoint>();
    ep->ep = std::make_unique<ns::tunnel::Endpoint>(
        cfg->cfg, role == NS_ROLE_SERVE ? ns::tunnel::Role::Serve : ns::tunnel::Role::Connect);
    *out = ep.release();
  });
}

ns_status ns_endpoint_set_tick_callback(ns_endpoint* ep, ns_tick_callback cb, void* user) {
  return guarded([&] {
    require(ep, "endpoint is NULL");
    ep->cb = cb;
    ep->user = user;
    if (!cb) {
      ep->ep->set_tick_callback(nullptr);
      return;
    }
    ep->ep->set_tick_callback([ep](const ns::tunnel::TickLog& t) {
      const ns_tick_log log{t.k, t.dp_len, t.payload, t.dummy, t.wire_bytes, t.handoff_offset};
      ep->cb(&log, ep->user);
    });
  });
}

ns_status ns_endpoint_bind(ns_endpoint* ep, uint16_t* tunnel_port, uint16_t* app_port) {
  return guarded([&] {
    require(ep, "endpoint is NULL");
    ep->ep->bind();
    if (tunnel_port) *tunnel_port = ep->ep->tunnel_port();
    if (app_port) *app_port = ep->ep->app_port();
  });
}

ns_status ns_endpoint_run(ns_endpoint* ep) {
  return guarded([&] {
    require(ep, "endpoint is NULL");
    ep->ep->run();
  });
}

void ns_endpoint_stop(ns_endpoint* ep) {
  if (ep) ep->ep->stop();
}

ns_status ns_endpoint_stats_get(const ns_endpoint* ep, ns_endpoint_stats* out) {
  return guarded([&] {
    require(ep && out, "NULL argument");
    const auto s = ep->ep->stats();
    *out = {s.sessions, s.ticks, s.prepare_overruns, s.handoff_overruns, s.wire_bytes_tx, s.integrity_failures,
            s.dummy_bytes_rx, s.flows_opened, s.flows_rejected, s.ttl_drop_bytes};
  });
}

void ns_endpoint_free(ns_endpoint* ep) { delete ep; }

}  // extern "C"
