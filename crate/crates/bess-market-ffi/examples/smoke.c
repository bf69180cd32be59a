/* Minimal C consumer of the bess-market ABI.
 *
 * Build (from the workspace root, after `cargo build -p bess-market-ffi`):
 *   cc -std=c11 -Wall -Wextra -I crates/bess-market-ffi/include \
 *      crates/bess-market-ffi/examples/smoke.c \
 *      target/debug/libbess_market_ffi.a -lm -o smoke && ./smoke
 */
#include <assert.h>
#include <math.h>
#include <stdio.h>
#include <string.h>
#include "bess_market.h"

int main(void) {
    BessSupplyCurve curve = {1.0, 2.0, 0.5};
    BessMoments m = {3.0, 1.0, 1.0, 1.0, 0.0, 0.0};
    BessRegimeReport report;
    assert(bess_regime_report(curve, m, &report) == BessStatus_Ok);
    assert(fabs(report.cost_no_battery - 18.0) < 1e-12);
    assert(fabs(report.cost_centralized - 15.0) < 1e-12);
    assert(report.price_of_anarchy_defined);

    BessDemand *demand = NULL;
    assert(bess_demand_normal_new(3.0, 1.0, 1.0, 2.0, 0.5, &demand) == BessStatus_Ok);
    BessConditionalMoments cm;
    assert(bess_demand_conditional_moments(demand, 4.0, &cm) == BessStatus_Ok);
    assert(fabs(cm.mean - 2.0) < 1e-12);
    bess_demand_free(demand);

    curve.beta = -1.0;
    double cost;
    assert(bess_cost_no_battery(curve, m, &cost) == BessStatus_InvalidParameter);
    char buf[128];
    size_t n = bess_last_error_message(buf, sizeof buf);
    assert(n > 1 && strlen(buf) > 0);
    printf("C smoke test OK: version %s, error=\"%s\"\n", bess_version(), buf);
    return 0;
}
