/* C interface to the bess-market two-settlement battery/market model. */

#ifndef BESS_MARKET_H
#define BESS_MARKET_H

/* Generated from the bess-market-ffi crate by cbindgen; edit the Rust source instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call in this ABI.
enum BessStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  // Success; all out-parameters are valid.
  BessStatus_Ok = 0,
  // A required pointer argument was null.
  BessStatus_NullPointer = 1,
  // A parameter was outside its domain (see `bess_last_error_message`).
  BessStatus_InvalidParameter = 2,
  // The inputs describe a degenerate instance with no unique answer.
  BessStatus_Degenerate = 3,
  // The quantity exists but has no closed form for this distribution.
  BessStatus_NotClosedForm = 4,
  // Input data could not be read or parsed.
  BessStatus_DataError = 5,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum BessStatus BessStatus;
#else
typedef int32_t BessStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

// A joint distribution of the two daily demands. Opaque.
typedef struct BessDemand BessDemand;

// First and second moments of the two-period demand.
//
// `rho` is the correlation between the periods; `rho_s` is the share of
// second-period standard deviation that the first-period observation
// reveals (equal to |rho| when demand is jointly normal).
typedef struct BessMoments {
  double mu1;
  double mu2;
  double sigma1;
  double sigma2;
  double rho;
  double rho_s;
} BessMoments;

// Conditional mean and variance of second-period demand given the first.
typedef struct BessConditionalMoments {
  double mean;
  double variance;
} BessConditionalMoments;

// Affine marginal-cost curve with a fast-responding fleet share.
typedef struct BessSupplyCurve {
  // Marginal cost at zero output.
  double alpha;
  // Marginal-cost slope.
  double beta;
  // Share of the fleet that can adjust in real time, in (0, 1].
  double k_f;
} BessSupplyCurve;

// How a profit-maximizing battery distorts its dispatch relative to a
// cost-minimizing one. All three values are fractions in [0, 1].
typedef struct BessDistortions {
  // Fraction of the cost-minimizing arbitrage volume withheld.
  double quantity_withholding;
  // Fraction of the strategic volume moved from day-ahead to real time.
  double shift_da_to_rt;
  // Reduction in the response to real-time demand surprises.
  double rt_responsiveness_reduction;
} BessDistortions;

// Expected generation costs under the three operating regimes, the savings
// each battery achieves, and the efficiency loss from strategic operation.
typedef struct BessRegimeReport {
  double cost_no_battery;
  double cost_centralized;
  double cost_decentralized;
  double gap_centralized;
  double gap_decentralized;
  // Ratio of achievable to realized savings; meaningful only when
  // `price_of_anarchy_defined` is true (it is NaN otherwise).
  double price_of_anarchy;
  bool price_of_anarchy_defined;
  struct BessDistortions distortions;
} BessRegimeReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the most recent error message on this thread into `buffer`
// (NUL-terminated, truncated to `capacity`). Returns the full length of
// the message including the terminator, so callers can retry with a larger
// buffer; a null `buffer` or zero `capacity` just queries that length.
//
// # Safety
// Unless null, `buffer` must point to `capacity` writable bytes.
size_t bess_last_error_message(char *buffer, size_t capacity);

// Library version as a static NUL-terminated string.
const char *bess_version(void);

// Creates a jointly normal demand distribution. `rho_s` is implied (|rho|).
//
// # Safety
// Unless null, `out` must be valid for writing one pointer.
BessStatus bess_demand_normal_new(double mu1,
                                  double mu2,
                                  double sigma1,
                                  double sigma2,
                                  double rho,
                                  struct BessDemand **out);

// Creates an empirical demand distribution from paired observations
// `(d1[i], d2[i])`, conditioning on `bin_count` equal-mass bins of d1.
//
// # Safety
// Unless null, `d1` and `d2` must each point to `len` readable
// doubles, and `out` must be valid for writing one pointer.
BessStatus bess_demand_empirical_new(const double *d1,
                                     const double *d2,
                                     size_t len,
                                     size_t bin_count,
                                     struct BessDemand **out);

// Releases a demand handle. Null is ignored.
//
// # Safety
// `demand` must be null or a handle returned by a `bess_demand_*_new`
// call that has not been freed yet; the handle is invalid afterwards.
void bess_demand_free(struct BessDemand *demand);

// Reads the distribution's moments.
//
// # Safety
// `demand` must be null or a live handle from `bess_demand_*_new`, and
// `out` null or valid for writing a `BessMoments`.
BessStatus bess_demand_moments(const struct BessDemand *demand, struct BessMoments *out);

// Conditional moments of second-period demand given `d1`.
//
// # Safety
// `demand` must be null or a live handle from `bess_demand_*_new`, and
// `out` null or valid for writing a `BessConditionalMoments`.
BessStatus bess_demand_conditional_moments(const struct BessDemand *demand,
                                           double d1,
                                           struct BessConditionalMoments *out);

// Expected generation cost with no battery.
//
// # Safety
// Unless null, `out` must be valid for writing one double.
BessStatus bess_cost_no_battery(struct BessSupplyCurve curve,
                                struct BessMoments moments,
                                double *out);

// Expected generation cost with a cost-minimizing (centrally operated)
// battery.
//
// # Safety
// Unless null, `out` must be valid for writing one double.
BessStatus bess_cost_centralized(struct BessSupplyCurve curve,
                                 struct BessMoments moments,
                                 double *out);

// Expected generation cost with a profit-maximizing battery.
//
// # Safety
// Unless null, `out` must be valid for writing one double.
BessStatus bess_cost_decentralized(struct BessSupplyCurve curve,
                                   struct BessMoments moments,
                                   double *out);

// The three dispatch distortions of a profit-maximizing battery at fast
// share `k_f` (they depend on nothing else).
//
// # Safety
// Unless null, `out` must be valid for writing a `BessDistortions`.
BessStatus bess_distortion_metrics(double k_f, struct BessDistortions *out);

// Ratio of centralized to decentralized savings. When the battery has
// nothing to arbitrage the ratio is undefined: `*out_defined` is set to
// false and `*out` to NaN (the call still succeeds).
//
// # Safety
// Unless null, `out` and `out_defined` must be valid for writing one
// double and one bool respectively.
BessStatus bess_price_of_anarchy(struct BessSupplyCurve curve,
                                 struct BessMoments moments,
                                 double *out,
                                 bool *out_defined);

// Costs, savings, distortions, and price of anarchy in one call.
//
// # Safety
// Unless null, `out` must be valid for writing a `BessRegimeReport`.
BessStatus bess_regime_report(struct BessSupplyCurve curve,
                              struct BessMoments moments,
                              struct BessRegimeReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BESS_MARKET_H */
