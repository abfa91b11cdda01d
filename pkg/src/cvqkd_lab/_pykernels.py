"""Pure-Python scalar kernels; the fallback twin of ``_ckernels.pyx``.

Both modules implement the same arithmetic in the same order so their
results agree to the last few ulps. Inputs are assumed validated by the
caller; small negative radicands are clamped silently.
"""
from __future__ import annotations

import math

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI2 = (3.0 - math.sqrt(5.0)) / 2.0
LN2 = math.log(2.0)
TIE_TOL = 1e-9


def g_entropy(x):
    if x <= 0.0:
        return 0.0
    return (math.log1p(x) + x * math.log1p(1.0 / x)) / LN2


def _mode_entropy(lam):
    return g_entropy((lam - 1.0) / 2.0)


def _s_e(a, b, c2):
    delta = a * a + b * b - 2.0 * c2
    D = a * b - c2
    c = math.sqrt(c2)
    rad = (a - b) * (a - b) * (a + b - 2.0 * c) * (a + b + 2.0 * c)
    if rad < 0.0:
        rad = 0.0
    lam2 = math.sqrt((delta + math.sqrt(rad)) / 2.0)
    lam1 = D / lam2
    return _mode_entropy(lam1) + _mode_entropy(lam2), delta, D, lam1, lam2


def rate_homodyne(V, T, eps, beta):
    chi_c = (1.0 - T) / T + eps
    a = V
    b = T * (V + chi_c)
    c2 = T * (V * V - 1.0)
    s_e, delta, D, lam1, lam2 = _s_e(a, b, c2)
    s_eb = _mode_entropy(math.sqrt(a * D / b))
    i_ab = 0.5 * math.log2((V + chi_c) / (1.0 + chi_c))
    return beta * i_ab - (s_e - s_eb)


def rate_heterodyne(V, T, eps, beta):
    chi_c = (1.0 - T) / T + eps
    a = V
    b = T * (V + chi_c)
    c2 = T * (V * V - 1.0)
    s_e, delta, D, lam1, lam2 = _s_e(a, b, c2)
    s_eb = _mode_entropy((D + a) / (b + 1.0))
    i_ab = math.log2((T * (V + chi_c) + 1.0) / (T * (1.0 + chi_c) + 1.0))
    return beta * i_ab - (s_e - s_eb)


def rate_noisy(V, T, eps, chi_d, beta):
    chi_c = (1.0 - T) / T + eps
    a = V
    b = T * (V + chi_c)
    c2 = T * (V * V - 1.0)
    s_e, delta, D, lam1, lam2 = _s_e(a, b, c2)
    # roots of the conditional spectrum shifted to y = lam^2 - 1
    s1 = max((lam1 - 1.0) * (lam1 + 1.0), 0.0)
    s2 = max((lam2 - 1.0) * (lam2 + 1.0), 0.0)
    y_sum = max(b * (a - 1.0) * (a + 1.0) - a * c2 + chi_d * (s1 + s2), 0.0) / (b + chi_d)
    y_prod = chi_d * s1 * s2 / (b + chi_d)
    rad = y_sum * y_sum - 4.0 * y_prod
    if rad < 0.0:
        rad = 0.0
    y_hi = (y_sum + math.sqrt(rad)) / 2.0
    y_lo = y_prod / y_hi if y_hi > 0.0 else 0.0
    hi = math.sqrt(1.0 + y_hi)
    lo = math.sqrt(1.0 + y_lo)
    s_eb = _mode_entropy(lo) + _mode_entropy(hi)
    chi_t = chi_c + chi_d / T
    i_ab = 0.5 * math.log2((V + chi_t) / (1.0 + chi_t))
    return beta * i_ab - (s_e - s_eb)


def best_added_noise(V, T, eps, beta, grid, tol):
    """Maximize the noisy-homodyne rate over the added noise.

    Scans ``grid`` (ascending, starting at 0), then golden-section refines
    between the neighbours of the best grid point. Returns
    ``(chi_star, k_star, k_zero, evaluations)``.
    """
    grid = [float(x) for x in grid]
    n = len(grid)
    best_i = 0
    best_k = rate_noisy(V, T, eps, grid[0], beta)
    k_zero = best_k
    for i in range(1, n):
        k = rate_noisy(V, T, eps, grid[i], beta)
        if k > best_k:
            best_k = k
            best_i = i
    evals = n
    best_x = grid[best_i]
    lo = grid[best_i - 1] if best_i > 0 else grid[0]
    hi = grid[best_i + 1] if best_i < n - 1 else grid[n - 1]

    h = hi - lo
    c = lo + INV_PHI2 * h
    d = lo + INV_PHI * h
    kc = rate_noisy(V, T, eps, c, beta)
    kd = rate_noisy(V, T, eps, d, beta)
    evals += 2
    while h > tol:
        if kc > best_k:
            best_k, best_x = kc, c
        if kd > best_k:
            best_k, best_x = kd, d
        if kc > kd:
            hi = d
            d = c
            kd = kc
            h = INV_PHI * h
            c = lo + INV_PHI2 * h
            kc = rate_noisy(V, T, eps, c, beta)
        else:
            lo = c
            c = d
            kc = kd
            h = INV_PHI * h
            d = lo + INV_PHI * h
            kd = rate_noisy(V, T, eps, d, beta)
        evals += 1
    if kc > best_k:
        best_k, best_x = kc, c
    if kd > best_k:
        best_k, best_x = kd, d

    if best_k - k_zero < TIE_TOL:
        return 0.0, k_zero, k_zero, evals
    return best_x, best_k, k_zero, evals
