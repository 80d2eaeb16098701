#include <stdio.h>
#include "rst.h"

int main(void) {
    double births[] = {0.0, 0.1, 0.5};
    double deaths[] = {1.0, 0.3, 0.6};
    RstDiagram *pd = NULL;
    if (rst_diagram_new(0, births, deaths, 3, &pd) != RST_STATUS_OK) return 1;
    if (rst_diagram_len(pd) != 3) return 2;
    rst_diagram_free(pd);

    double bad[] = {1.0};
    if (rst_diagram_new(0, bad, births, 1, &pd) != RST_STATUS_INVALID) return 3;
    if (rst_last_error() == NULL) return 4;

    double p[] = {0.001, 0.02, 0.04, 0.2, 0.9};
    uint8_t bh[5], bf[5];
    if (rst_bh_fdr(p, 5, 0.05, bh) != RST_STATUS_OK) return 5;
    if (rst_bonferroni(p, 5, 0.05, bf) != RST_STATUS_OK) return 6;
    printf("%d%d%d%d%d %d%d%d%d%d\n", bh[0], bh[1], bh[2], bh[3], bh[4], bf[0], bf[1], bf[2], bf[3], bf[4]);
    return 0;
}
