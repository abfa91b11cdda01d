# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled scalar kernels. Mirrors ``_pykernels`` operation for operation."""

from libc.math cimport fmax, log1p, log2, sqrt, log

cdef double INV_PHI = (sqrt(5.0) - 1.0) / 2.0
cdef double INV_PHI2 = (3.0 - sqrt(5.0)) / 2.0
cdef double LN2 = log(2.0)
cdef double TIE_TOL = 1e-9


cdef inline double _g(double x) noexcept nogil:
    if x <= 0.0:
        return 0.0
    return (log1p(x) + x * log1p(1.0 / x)) / LN2


cdef inline double _mode_entropy(double lam) noexcept nogil:
    return _g((lam - 1.0) / 2.0)


cdef inline double _s_e(double a, double b, double c2, double* delta, double* D,
                        double* lam1, double* lam2) noexcept nogil:
    cdef double c = sqrt(c2)
    cdef double rad
    delta[0] = a * a + b * b - 2.0 * c2
    D[0] = a * b - c2
    rad = (a - b) * (a - b) * (a + b - 2.0 * c) * (a + b + 2.0 * c)
    if rad < 0.0:
        rad = 0.0
    lam2[0] = sqrt((delta[0] + sqrt(rad)) / 2.0)
    lam1[0] = D[0] / lam2[0]
    return _mode_entropy(lam1[0]) + _mode_entropy(lam2[0])


cdef double _rate_homodyne(double V, double T, double eps, double beta) noexcept nogil:
    cdef double chi_c = (1.0 - T) / T + eps
    cdef double a = V
    cdef double b = T * (V + chi_c)
    cdef double c2 = T * (V * V - 1.0)
    cdef double delta, D, lam1, lam2, s_e, s_eb, i_ab
    s_e = _s_e(a, b, c2, &delta, &D, &lam1, &lam2)
    s_eb = _mode_entropy(sqrt(a * D / b))
    i_ab = 0.5 * log2((V + chi_c) / (1.0 + chi_c))
    return beta * i_ab - (s_e - s_eb)


cdef double _rate_heterodyne(double V, double T, double eps, double beta) noexcept nogil:
    cdef double chi_c = (1.0 - T) / T + eps
    cdef double a = V
    cdef double b = T * (V + chi_c)
    cdef double c2 = T * (V * V - 1.0)
    cdef double delta, D, lam1, lam2, s_e, s_eb, i_ab
    s_e = _s_e(a, b, c2, &delta, &D, &lam1, &lam2)
    s_eb = _mode_entropy((D + a) / (b + 1.0))
    i_ab = log2((T * (V + chi_c) + 1.0) / (T * (1.0 + chi_c) + 1.0))
    return beta * i_ab - (s_e - s_eb)


cdef double _rate_noisy(double V, double T, double eps, double chi_d, double beta) noexcept nogil:
    cdef double chi_c = (1.0 - T) / T + eps
    cdef double a = V
    cdef double b = T * (V + chi_c)
    cdef double c2 = T * (V * V - 1.0)
    cdef double delta, D, lam1, lam2, s_e, s_eb, i_ab, chi_t
    cdef double s1, s2, y_sum, y_prod, rad, y_hi, y_lo, hi, lo
    s_e = _s_e(a, b, c2, &delta, &D, &lam1, &lam2)
    # roots of the conditional spectrum shifted to y = lam^2 - 1
    s1 = fmax((lam1 - 1.0) * (lam1 + 1.0), 0.0)
    s2 = fmax((lam2 - 1.0) * (lam2 + 1.0), 0.0)
    y_sum = fmax(b * (a - 1.0) * (a + 1.0) - a * c2 + chi_d * (s1 + s2), 0.0) / (b + chi_d)
    y_prod = chi_d * s1 * s2 / (b + chi_d)
    rad = y_sum * y_sum - 4.0 * y_prod
    if rad < 0.0:
        rad = 0.0
    y_hi = (y_sum + sqrt(rad)) / 2.0
    y_lo = y_prod / y_hi if y_hi > 0.0 else 0.0
    hi = sqrt(1.0 + y_hi)
    lo = sqrt(1.0 + y_lo)
    s_eb = _mode_entropy(lo) + _mode_entropy(hi)
    chi_t = chi_c + chi_d / T
    i_ab = 0.5 * log2((V + chi_t) / (1.0 + chi_t))
    return beta * i_ab - (s_e - s_eb)


def g_entropy(double x):
    return _g(x)


def rate_homodyne(double V, double T, double eps, double beta):
    return _rate_homodyne(V, T, eps, beta)


def rate_heterodyne(double V, double T, double eps, double beta):
    return _rate_heterodyne(V, T, eps, beta)


def rate_noisy(double V, double T, double eps, double chi_d, double beta):
    return _rate_noisy(V, T, eps, chi_d, beta)


def best_added_noise(double V, double T, double eps, double beta, const double[::1] grid, double tol):
    """Grid scan then golden-section refinement; see ``_pykernels.best_added_noise``."""
    cdef Py_ssize_t n = grid.shape[0]
    cdef Py_ssize_t i, best_i = 0
    cdef double k, best_k, k_zero, best_x, lo, hi, h, c, d, kc, kd
    cdef long evals
    with nogil:
        best_k = _rate_noisy(V, T, eps, grid[0], beta)
        k_zero = best_k
        for i in range(1, n):
            k = _rate_noisy(V, T, eps, grid[i], beta)
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
        kc = _rate_noisy(V, T, eps, c, beta)
        kd = _rate_noisy(V, T, eps, d, beta)
        evals += 2
        while h > tol:
            if kc > best_k:
                best_k = kc
                best_x = c
            if kd > best_k:
                best_k = kd
                best_x = d
            if kc > kd:
                hi = d
                d = c
                kd = kc
                h = INV_PHI * h
                c = lo + INV_PHI2 * h
                kc = _rate_noisy(V, T, eps, c, beta)
            else:
                lo = c
                c = d
                kc = kd
                h = INV_PHI * h
                d = lo + INV_PHI * h
                kd = _rate_noisy(V, T, eps, d, beta)
            evals += 1
        if kc > best_k:
            best_k = kc
            best_x = c
        if kd > best_k:
            best_k = kd
            best_x = d

    if best_k - k_zero < TIE_TOL:
        return 0.0, k_zero, k_zero, evals
    return best_x, best_k, k_zero, evals
