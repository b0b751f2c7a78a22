#include <math.h>
#include <stdio.h>

#include "apshare.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        ApsStatus s_ = (call);                                             \
        if (s_ != APS_STATUS_OK) {                                         \
            char msg[256];                                                 \
            aps_last_error_message(msg, sizeof msg);                       \
            fprintf(stderr, "%s failed (%d): %s\n", #call, (int)s_, msg);  \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    const double gain[] = {1.0, 2.0, 1.0, 2.0};
    const double noise[] = {1.0, 1.0};
    const double budget[] = {1.0, 1.0};
    ApsInstance *inst = NULL;
    CHECK(aps_instance_new(2, 2, gain, noise, budget, &inst));

    double value = 0.0, gap = 0.0;
    ApsProfile *best = NULL;
    CHECK(aps_solve_max_potential(inst, 1e-12, &value, &gap, &best));

    ApsProfile *eq = NULL;
    CHECK(aps_run_siwf(inst, NULL, 1000, 1e-12, &eq));
    double p_eq = 0.0;
    CHECK(aps_potential(inst, eq, &p_eq));

    double flat[4];
    CHECK(aps_profile_read(eq, flat, 4));

    if (aps_instance_example(NULL) != APS_STATUS_NULL_POINTER) return 2;

    printf("%.12f %.12f %.3f %.3f\n", value, p_eq, flat[0] + flat[1], flat[2] + flat[3]);
    aps_profile_free(best);
    aps_profile_free(eq);
    aps_instance_free(inst);
    return fabs(value - p_eq) < 1e-9 ? 0 : 3;
}
