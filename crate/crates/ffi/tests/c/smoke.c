#include <math.h>
#include <stdio.h>

#include "fabflow.h"

int main(void) {
    FabScenario *s = fab_scenario_new_default();
    if (fab_scenario_set_t_end(s, 4.0) != FAB_STATUS_OK) return 1;
    FabRun *run = NULL;
    if (fab_run(s, &run) != FAB_STATUS_OK) {
        fprintf(stderr, "%s\n", fab_last_error_message());
        return 2;
    }
    double w = 0.0;
    if (fab_run_w_at(run, 4.0, &w) != FAB_STATUS_OK || !(w > 0.0)) return 3;
    FabEvent e;
    if (fab_run_event(run, 0, &e) != FAB_STATUS_OK || e.reason != FAB_EVENT_REASON_INITIAL) return 4;
    if (fab_run_w_at(run, 9.0, &w) != FAB_STATUS_OUT_OF_HORIZON) return 5;
    printf("events=%zu u0=%.15f\n", fab_run_event_count(run), e.u_i);
    fab_run_free(run);
    fab_scenario_free(s);
    return 0;
}
