#!/usr/bin/env python3
"""Walk through one value-added export decomposition by hand.

Builds a miniature two-country, two-industry economy, derives the
technical coefficients and value-added shares, solves the Leontief
system, and checks the accounting identity that makes the decomposition
trustworthy: summed over all origins, value-added exports to a
destination equal that destination's final-demand purchases.

Run with:  python3 demos/01_leontief_decomposition.py
"""

import numpy as np

from vaxho import (
    IOTable,
    accounting_report,
    build_tech_system,
    compute_vax,
)


def main():
    np.set_printoptions(precision=4, suppress=True)

    # Two countries (P, Q), two industries each, so four producing sectors.
    # Rows sell, columns buy; F holds final demand by destination country.
    Z = np.array([
        [4.0, 1.0, 0.5, 0.0],
        [1.0, 3.0, 0.0, 0.5],
        [0.5, 0.0, 5.0, 2.0],
        [0.0, 0.5, 1.0, 4.0],
    ])
    F = np.array([
        [8.0, 1.5],
        [9.0, 1.5],
        [1.0, 9.0],
        [1.5, 8.5],
    ])
    x = Z.sum(axis=1) + F.sum(axis=1)
    table = IOTable(year=2000, countries=("P", "Q"),
                    industries=("C10", "C20"), Z=Z, F=F, x=x)

    print("gross output x:", table.x)
    print("worst row balance residual:",
          float(np.abs(table.row_balance_residuals()).max()))

    system = build_tech_system(table)
    print("\ntechnical coefficients A (column j buys from row i):")
    print(system.A)
    print("value-added shares v:", system.v)

    vx = compute_vax(system, table)
    print("\nvalue-added exports VX (rows: origin sector, cols: destination):")
    print(vx.values)

    # The identity that anchors everything: each destination's column of VX
    # sums to its final demand column, because value added is exhaustive.
    print("\ncolumn sums of VX:  ", vx.values.sum(axis=0))
    print("column sums of F:   ", F.sum(axis=0))

    report = accounting_report(table, vx)
    print("\naccounting report:")
    print(report.format())


if __name__ == "__main__":
    main()
