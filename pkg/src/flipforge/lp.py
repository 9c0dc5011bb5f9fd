"""Exact rational feasibility check for systems A w >= b with free variables.

Phase-1 simplex over ``fractions.Fraction`` with Bland's rule, so every run
terminates and every certificate is exact.  The systems that show up here are
tiny (a few hundred constraints at most), which is exactly the regime where an
exact dense tableau wins on simplicity.
"""

from __future__ import annotations

from fractions import Fraction


def feasible_point(rows, rhs):
    """Return w with rows[i] . w >= rhs[i] for all i, or None if infeasible.

    Free variables are split as w = u - v; a surplus column per constraint and
    an all-artificial starting basis make phase 1 well posed, and the phase-1
    optimum is zero exactly when the system is feasible.
    """
    m = len(rows)
    if m == 0:
        return ()
    n = len(rows[0])
    work = []
    rhs_w = []
    surplus_sign = []
    for row, b in zip(rows, rhs):
        row = [Fraction(v) for v in row]
        b = Fraction(b)
        if b < 0:
            row = [-v for v in row]
            b = -b
            surplus_sign.append(Fraction(1))
        else:
            surplus_sign.append(Fraction(-1))
        work.append(row)
        rhs_w.append(b)

    # columns: u (n) | v (n) | surplus (m) | artificial (m) | rhs
    nstruct = 2 * n + m
    ncols = nstruct + m
    tableau = []
    for i in range(m):
        row = (
            [work[i][j] for j in range(n)]
            + [-work[i][j] for j in range(n)]
            + [Fraction(0)] * (2 * m)
            + [rhs_w[i]]
        )
        row[2 * n + i] = surplus_sign[i]
        row[nstruct + i] = Fraction(1)
        tableau.append(row)
    basis = [nstruct + i for i in range(m)]

    # reduced-cost row for minimizing the artificial sum: artificials are
    # basic, so their reduced costs start at zero and stay maintained by pivots
    cost = [Fraction(0)] * (ncols + 1)
    for i in range(m):
        for j in list(range(nstruct)) + [ncols]:
            cost[j] += tableau[i][j]

    while True:
        entering = None
        for j in range(nstruct):  # artificials never re-enter
            if cost[j] > 0:
                entering = j  # Bland: smallest eligible index
                break
        if entering is None:
            break
        leaving = None
        best = None
        for i in range(m):
            a = tableau[i][entering]
            if a > 0:
                ratio = tableau[i][ncols] / a
                if (
                    best is None
                    or ratio < best
                    or (ratio == best and basis[i] < basis[leaving])
                ):
                    best = ratio
                    leaving = i
        if leaving is None:
            raise AssertionError("phase-1 simplex unbounded")
        _pivot(tableau, cost, basis, leaving, entering, ncols)

    if cost[ncols] != 0:
        return None

    solution = [Fraction(0)] * ncols
    for i, b in enumerate(basis):
        solution[b] = tableau[i][ncols]
    return tuple(solution[j] - solution[n + j] for j in range(n))


def _pivot(tableau, cost, basis, row, col, ncols):
    piv = tableau[row][col]
    tableau[row] = [v / piv for v in tableau[row]]
    pivot_row = tableau[row]
    for i in range(len(tableau)):
        if i != row and tableau[i][col] != 0:
            f = tableau[i][col]
            tableau[i] = [a - f * b for a, b in zip(tableau[i], pivot_row)]
    if cost[col] != 0:
        f = cost[col]
        for j in range(ncols + 1):
            cost[j] -= f * pivot_row[j]
    basis[row] = col
