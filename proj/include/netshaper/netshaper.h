/* netshaper C API: differentially private traffic shaping.
 *
 * Every call returns an ns_status. On failure a human-readable message for
 * the calling thread is available from ns_last_error(). Handles are opaque
 * and owned by the caller until passed to the matching *_free function.
 * Times are in nanoseconds and sizes in bytes unless a name says otherwise.
 */
#ifndef NETSHAPER_NETSHAPER_H
#define NETSHAPER_NETSHAPER_H

#include <stddef.h>
#include <stdint.h>

#if defined(NETSHAPER_BUILDING_LIBRARY)
#define NS_API __attribute__((visibility("default")))
#else
#define NS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ns_status {
  NS_OK = 0,
  NS_ERR_USAGE = 1,
  NS_ERR_IO = 2,
  NS_ERR_VALIDATION = 3,
  NS_ERR_DOMAIN = 4,
  NS_ERR_PARSE = 5,
  NS_ERR_CONFIG = 6,
  NS_ERR_SCHEDULING = 7,
  NS_ERR_SESSION = 8,
  NS_ERR_AUTH = 9,
  NS_ERR_PARAM_MISMATCH = 10,
  NS_ERR_CAPACITY = 11,
  NS_ERR_INTERNAL = 99
} ns_status;

/* Message for the last failed call on this thread; never NULL. */
NS_API const char* ns_last_error(void);
NS_API const char* ns_status_name(ns_status status);
NS_API const char* ns_version(void);

/* ---- accountant ------------------------------------------------------- */

/* Classical Gaussian-mechanism sigma for one query. */
NS_API ns_status ns_gaussian_sigma(double delta_w, double epsilon, double delta, double* sigma_out);
/* Renyi-DP of one Gaussian query at order alpha > 1. */
NS_API ns_status ns_rdp_epsilon_gaussian(double delta_w, double sigma, double alpha, double* eps_out);

typedef struct ns_privacy_report {
  double sigma;
  int64_t queries;
  double epsilon_total;
  double delta_total;
  double alpha_star;
} ns_privacy_report;

NS_API ns_status ns_compose_to_dp(double delta_w, double sigma, int64_t queries, double delta,
                                  ns_privacy_report* out);
/* Smallest sigma whose `queries`-fold composition stays within (epsilon, delta). */
NS_API ns_status ns_sigma_for_budget(double delta_w, double epsilon, double delta, int64_t queries,
                                     double* sigma_out);
/* (k*epsilon, delta) for streams up to k*delta_w apart. */
NS_API ns_status ns_group_privacy(double epsilon, double delta, int64_t k, double* eps_out, double* delta_out);
/* min(1, e^epsilon / n). */
NS_API ns_status ns_tamaraw_gamma_bound(double epsilon, int64_t n, double* gamma_out);

/* ---- traces ----------------------------------------------------------- */

typedef struct ns_stream ns_stream;

/* CSV with header columns t_ns,len_bytes,flow_id,dir (dir = in | out). */
NS_API ns_status ns_stream_load(const char* path, ns_stream** out);
NS_API ns_status ns_stream_parse(const char* text, size_t len, ns_stream** out);
NS_API size_t ns_stream_size(const ns_stream* s);
NS_API int64_t ns_stream_total_bytes(const ns_stream* s);
NS_API void ns_stream_free(ns_stream* s);

NS_API ns_status ns_neighboring_distance(const ns_stream* a, const ns_stream* b, int64_t W, int64_t T,
                                         int64_t* out);

typedef struct ns_distance_table {
  int64_t p50;
  int64_t p90;
  int64_t p99;
  int64_t max;
  size_t pairs;
} ns_distance_table;

NS_API ns_status ns_pairwise_distance(const ns_stream* const* streams, size_t count, int64_t W, int64_t T,
                                      ns_distance_table* out);

/* ---- simulation ------------------------------------------------------- */

typedef struct ns_dp_params {
  double epsilon;
  double delta;
  int64_t delta_w;
  int64_t T;
  int64_t W;
  int64_t cutoff; /* <= 0 means unbounded */
} ns_dp_params;

/* NS_ERR_VALIDATION on any invalid field, e.g. W not a multiple of T. */
NS_API ns_status ns_dp_params_validate(const ns_dp_params* p);

typedef enum ns_cutoff_mode { NS_CUTOFF_FLOW_SCALED = 0, NS_CUTOFF_FIXED = 1 } ns_cutoff_mode;
typedef enum ns_calibration { NS_CALIBRATE_PER_WINDOW = 0, NS_CALIBRATE_PER_QUERY = 1 } ns_calibration;
typedef enum ns_horizon { NS_HORIZON_TTL = 0, NS_HORIZON_DRAIN = 1 } ns_horizon;

typedef struct ns_sim_config {
  ns_dp_params params;
  uint64_t seed;
  uint32_t flows; /* 0: one flow per stream */
  ns_cutoff_mode cutoff_mode;
  ns_calibration calibration;
  double sigma; /* used when has_sigma != 0 */
  int has_sigma;
  ns_horizon horizon;
} ns_sim_config;

/* Fills defaults: epsilon 1, delta 1e-6, unbounded cutoff, per-window calibration. */
NS_API void ns_sim_config_init(ns_sim_config* cfg);

typedef struct ns_sim_result ns_sim_result;

NS_API ns_status ns_simulate(const ns_stream* const* streams, size_t count, const ns_sim_config* cfg,
                             ns_sim_result** out);
/* Per-interval CSV: k,dp_len,payload,dummy,drops. */
NS_API ns_status ns_sim_result_write_csv(const ns_sim_result* r, const char* path);
/* JSON summary; the string stays valid until the result is freed. */
NS_API const char* ns_sim_result_summary_json(const ns_sim_result* r);
/* Aggregate dummy / payload; NS_ERR_DOMAIN when no payload was offered. */
NS_API ns_status ns_sim_result_overhead(const ns_sim_result* r, double* out);
NS_API void ns_sim_result_free(ns_sim_result* r);

/* Sweeps one axis ("T", "epsilon", "sigma", "flows", "cutoff") over values
 * and writes one CSV row per value. T and cutoff values are in the same
 * units as ns_dp_params. */
NS_API ns_status ns_sweep(const ns_stream* const* streams, size_t count, const ns_sim_config* cfg,
                          const char* axis, const double* values, size_t nvalues, const char* csv_path);

/* ---- tunnel ----------------------------------------------------------- */

typedef struct ns_tunnel_config ns_tunnel_config;
typedef struct ns_endpoint ns_endpoint;

typedef enum ns_role { NS_ROLE_SERVE = 0, NS_ROLE_CONNECT = 1 } ns_role;

NS_API ns_status ns_tunnel_config_load(const char* path, ns_tunnel_config** out);
NS_API ns_status ns_tunnel_config_parse(const char* text, size_t len, ns_tunnel_config** out);
NS_API void ns_tunnel_config_free(ns_tunnel_config* cfg);

typedef struct ns_tick_log {
  int64_t k;
  uint32_t dp_len;
  uint64_t payload;
  uint64_t dummy;
  uint64_t wire_bytes;
  int64_t handoff_offset_ns;
} ns_tick_log;

typedef void (*ns_tick_callback)(const ns_tick_log* tick, void* user);

typedef struct ns_endpoint_stats {
  uint64_t sessions;
  uint64_t ticks;
  uint64_t prepare_overruns;
  uint64_t handoff_overruns;
  uint64_t wire_bytes_tx;
  uint64_t integrity_failures;
  uint64_t dummy_bytes_rx;
  uint64_t flows_opened;
  uint64_t flows_rejected;
  uint64_t ttl_drop_bytes;
} ns_endpoint_stats;

NS_API ns_status ns_endpoint_create(const ns_tunnel_config* cfg, ns_role role, ns_endpoint** out);
/* Called from the transmit worker thread after each interval is written. */
NS_API ns_status ns_endpoint_set_tick_callback(ns_endpoint* ep, ns_tick_callback cb, void* user);
/* Opens listeners so that ports can be queried before ns_endpoint_run. */
NS_API ns_status ns_endpoint_bind(ns_endpoint* ep, uint16_t* tunnel_port, uint16_t* app_port);
/* Blocks until ns_endpoint_stop. */
NS_API ns_status ns_endpoint_run(ns_endpoint* ep);
/* Async-signal-safe. */
NS_API void ns_endpoint_stop(ns_endpoint* ep);
NS_API ns_status ns_endpoint_stats_get(const ns_endpoint* ep, ns_endpoint_stats* out);
NS_API void ns_endpoint_free(ns_endpoint* ep);

#ifdef __cplusplus
}
#endif

#endif /* NETSHAPER_NETSHAPER_H */
