"""Direct-formula variance estimators written with plain Python loops.

Kept free of the package's helpers so they can serve as an independent
check of the vectorised implementations.
"""

import math


def _expanded(sel, y, pi):
    return [y[k] / pi[k] for k in sel]


def _d2(coords, k, l):
    return sum((a - b) ** 2 for a, b in zip(coords[k], coords[l]))


def _nearest(coords, ids, sel, i, j):
    """Positions (in sel) of the j nearest other sampled units of sel[i]."""
    others = [m for m in range(len(sel)) if m != i]
    others.sort(key=lambda m: (_d2(coords, sel[i], sel[m]), ids[sel[m]]))
    return others[:j]


def v_haj(sel, y, pi):
    n = len(sel)
    z = _expanded(sel, y, pi)
    c = [1 - pi[k] for k in sel]
    centre = sum(ci * zi for ci, zi in zip(c, z)) / sum(c)
    return n / (n - 1) * sum(ci * (zi - centre) ** 2 for ci, zi in zip(c, z))


def v_sb(sel, y, pi, coords, ids):
    z = _expanded(sel, y, pi)
    total = 0.0
    for i in range(len(sel)):
        (m,) = _nearest(coords, ids, sel, i, 1)
        total += (z[i] - z[m]) ** 2
    return total / 2


def v_lm(sel, y, pi, coords, ids, j, sweeps=100, tol=1e-8):
    n = len(sel)
    z = _expanded(sel, y, pi)
    hood = [{i} for i in range(n)]
    for i in range(n):
        for m in _nearest(coords, ids, sel, i, j):
            hood[i].add(m)
            hood[m].add(i)
    w = [[0.0] * n for _ in range(n)]
    for i in range(n):
        tot = sum(1 / pi[sel[m]] for m in hood[i])
        for m in hood[i]:
            w[i][m] = (1 / pi[sel[m]]) / tot
    start = [row[:] for row in w]
    converged = False
    for _ in range(sweeps):
        for m in range(n):
            col = sum(w[i][m] for i in range(n))
            for i in range(n):
                w[i][m] /= col
        for i in range(n):
            row = sum(w[i])
            w[i] = [x / row for x in w[i]]
        if max(abs(sum(w[i][m] for i in range(n)) - 1) for m in range(n)) <= tol:
            converged = True
            break
    if not converged:
        w = start
    total = 0.0
    for i in range(n):
        local = sum(w[i][m] * z[m] for m in range(n))
        total += sum(w[i][l] for l in range(n)) * (z[i] - local) ** 2
    return total


def ci95(ht, v):
    h = 1.96 * math.sqrt(v)
    return ht - h, ht + h
