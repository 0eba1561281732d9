#include <stdio.h>
#include "bubbly.h"

int main(void) {
    BubblyConfig *cfg = NULL;
    const char *toml = "deltas = [0.1, 0.05, 0.025]\n[times]\nt_end = 4.0\nsample_step = 0.1\n";
    if (bubbly_config_from_toml(toml, &cfg) != BUBBLY_STATUS_OK) {
        fprintf(stderr, "config: %s\n", bubbly_last_error_message());
        return 1;
    }
    BubblyComparison *cmp = NULL;
    if (bubbly_run_comparison(cfg, &cmp) != BUBBLY_STATUS_OK) {
        fprintf(stderr, "comparison: %s\n", bubbly_last_error_message());
        return 1;
    }
    for (size_t k = 0; k < bubbly_comparison_len(cmp); k++) {
        BubblyEntry e;
        bubbly_comparison_entry(cmp, k, &e);
        printf("%g %zu %.6e\n", e.delta, e.m, e.e_max);
    }
    BubblyStatus st = bubbly_config_set_seed(NULL, 1);
    printf("%s\n", bubbly_status_name(st));
    bubbly_comparison_free(cmp);
    bubbly_config_free(cfg);
    return st == BUBBLY_STATUS_NULL_POINTER ? 0 : 1;
}
