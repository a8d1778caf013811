/* cc -Icrates/ffi/include crates/ffi/examples/smoke.c target/release/libeitlab_ffi.a -lm -lpthread -ldl */
#include <stdio.h>
#include "eitlab.h"

int main(void) {
    EitlabTwoPhaseKernel *h = NULL;
    if (eitlab_two_phase_new(3.0, &h) != EITLAB_STATUS_OK) {
        fprintf(stderr, "%s\n", eitlab_last_error());
        return 1;
    }
    const double xi[3] = {0.1, 0.2, 0.3}, eta[3] = {-0.2, 0.1, -0.4};
    double v = 0.0, g[3];
    eitlab_two_phase_eval(h, xi, eta, &v);
    eitlab_two_phase_grad(h, xi, eta, EITLAB_SIDE_AUTO, g);
    printf("H = %.12e, grad = (%.6e, %.6e, %.6e)\n", v, g[0], g[1], g[2]);
    if (eitlab_two_phase_eval(h, xi, xi, &v) != EITLAB_STATUS_SINGULARITY) return 1;
    printf("coincident points: %s\n", eitlab_last_error());
    eitlab_two_phase_free(h);

    EitlabBudgetInputs in = {1e-3, 0.05, 2.0, 3, 3, 0};
    EitlabBudgetResult out;
    double delta[4];
    if (eitlab_delta_recursion(&in, &out, delta, 4) != EITLAB_STATUS_OK) return 1;
    printf("branch %d, final bound %.6e, delta_len %zu\n", (int)out.branch, out.final_bound, (size_t)out.delta_len);
    printf("eitlab %s\n", eitlab_version());
    return 0;
}
