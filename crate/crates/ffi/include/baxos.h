#ifndef BAXOS_H
#define BAXOS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BaxosStatus {
  BAXOS_STATUS_OK = 0,
  BAXOS_STATUS_NULL_POINTER = 1,
  BAXOS_STATUS_INVALID_ARGUMENT = 2,
  BAXOS_STATUS_VALIDATION = 3,
  BAXOS_STATUS_PARSE = 4,
  BAXOS_STATUS_IO = 5,
  BAXOS_STATUS_REPLAY = 6,
  // A safety check failed.
  BAXOS_STATUS_VIOLATION = 7,
  BAXOS_STATUS_PANIC = 8,
} BaxosStatus;

// Requested protocol for [`baxos_scenario_set_protocol`].
typedef enum BaxosProtocol {
  BAXOS_PROTOCOL_BAXOS = 0,
  BAXOS_PROTOCOL_MULTI_PAXOS = 1,
} BaxosProtocol;

// Opaque handle to a finished run.
typedef struct BaxosRun BaxosRun;

// Opaque scenario handle.
typedef struct BaxosScenario BaxosScenario;

// Headline numbers of a run. Latencies are microseconds, negative when no
// request committed; `retries_per_commit` is negative when nothing was
// proposed.
typedef struct BaxosSummary {
  uint64_t submitted;
  uint64_t committed;
  uint64_t failed;
  uint64_t censored;
  double throughput;
  int64_t median_us;
  int64_t p99_us;
  double retries_per_commit;
  double commit_gini;
  double byte_rate_stddev_kbps;
  uint64_t bytes_sent;
  uint64_t bytes_delivered;
} BaxosSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *baxos_last_error(void);

// Library version as a static NUL-terminated string.
const char *baxos_version(void);

// Closed-form termination probability for `proposers` proposers at retry
// level `level`.
//
// # Safety
// `out` must be null or point to writable memory for one `double`.
enum BaxosStatus baxos_termination_probability(uint32_t level, uint32_t proposers, double *out);

// Monte Carlo estimate of the same probability.
//
// # Safety
// `out` must be null or point to writable memory for one `double`.
enum BaxosStatus baxos_termination_monte_carlo(uint32_t level,
                                               uint32_t proposers,
                                               uint64_t trials,
                                               uint64_t seed,
                                               double *out);

// Backoff in microseconds: `k * 2^retries * 2 * rtt_us`, `k` in (0, 1).
//
// # Safety
// `out_us` must be null or point to writable memory for one `uint64_t`.
enum BaxosStatus baxos_backoff_us(uint32_t retries, uint64_t rtt_us, double k, uint64_t *out_us);

// Loads a preset by name or a TOML file by path.
//
// # Safety
// `name` must be a NUL-terminated string; `out` must be null or writable.
enum BaxosStatus baxos_scenario_resolve(const char *name, struct BaxosScenario **out);

// Parses a scenario from TOML text.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` must be null or writable.
enum BaxosStatus baxos_scenario_from_toml(const char *toml, struct BaxosScenario **out);

// # Safety
// `s` must be null or a handle from this library that was not freed.
enum BaxosStatus baxos_scenario_set_seed(struct BaxosScenario *s, uint64_t seed);

// Shortens or extends the run; attack windows and clients are clipped.
//
// # Safety
// `s` must be null or a live handle from this library.
enum BaxosStatus baxos_scenario_set_horizon_us(struct BaxosScenario *s, uint64_t horizon_us);

// # Safety
// `s` must be null or a live handle from this library.
enum BaxosStatus baxos_scenario_set_protocol(struct BaxosScenario *s, enum BaxosProtocol protocol);

// Per-client arrival rate in requests per second.
//
// # Safety
// `s` must be null or a live handle from this library.
enum BaxosStatus baxos_scenario_set_rate(struct BaxosScenario *s, double rate);

// # Safety
// `s` must be null or a handle from this library that was not freed.
void baxos_scenario_free(struct BaxosScenario *s);

// Runs the scenario in memory and checks the decided logs.
//
// # Safety
// `s` must be a live scenario handle; `out` must be null or writable.
enum BaxosStatus baxos_run(const struct BaxosScenario *s, struct BaxosRun **out);

// Runs the scenario and writes its artifact files into `dir`.
//
// # Safety
// `s` must be a live scenario handle and `dir` a NUL-terminated path.
enum BaxosStatus baxos_run_to_dir(const struct BaxosScenario *s, const char *dir);

// # Safety
// `run` must be a live run handle; `out` must be null or writable.
enum BaxosStatus baxos_run_summary(const struct BaxosRun *run, struct BaxosSummary *out);

// `Ok` when every safety check passed, `Violation` otherwise with the
// first counterexample as the last error.
//
// # Safety
// `run` must be null or a live run handle.
enum BaxosStatus baxos_run_safety(const struct BaxosRun *run);

// Copies the hex trace digest (64 characters plus NUL) into `buf`.
//
// # Safety
// `buf` must point to at least `len` writable bytes.
enum BaxosStatus baxos_run_trace_digest(const struct BaxosRun *run, char *buf, size_t len);

// # Safety
// `run` must be null or a handle from this library that was not freed.
void baxos_run_free(struct BaxosRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BAXOS_H */
