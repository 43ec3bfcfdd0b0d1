# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; mirrors `lineupdx.kernels.pure` function-for-function."""

from libc.math cimport exp, log, log1p, sqrt, fabs, lgamma, erfc

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef double _EPS = 1e-16
cdef double _FPMIN = 1e-300
cdef int _ITMAX = 600


cdef double _gamma_series(double a, double x):
    cdef double total = 1.0 / a
    cdef double term = total
    cdef int n
    for n in range(1, _ITMAX + 1):
        term *= x / (a + n)
        total += term
        if fabs(term) < fabs(total) * _EPS:
            break
    return total * exp(-x + a * log(x) - lgamma(a))


cdef double _gamma_cf(double a, double x):
    cdef double b = x + 1.0 - a
    cdef double c = 1.0 / _FPMIN
    cdef double d = 1.0 / b
    cdef double h = d
    cdef double an, delta
    cdef int i
    for i in range(1, _ITMAX + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if fabs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if fabs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if fabs(delta - 1.0) < _EPS:
            break
    return exp(-x + a * log(x) - lgamma(a)) * h


cpdef double reg_gamma_p(double a, double x) except -1.0:
    if a <= 0.0:
        raise ValueError("a must be positive")
    if x < 0.0:
        raise ValueError("x must be nonnegative")
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        return min(1.0, _gamma_series(a, x))
    return max(0.0, 1.0 - _gamma_cf(a, x))


cpdef double reg_gamma_q(double a, double x) except -1.0:
    if a <= 0.0:
        raise ValueError("a must be positive")
    if x < 0.0:
        raise ValueError("x must be nonnegative")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_series(a, x))
    return min(1.0, _gamma_cf(a, x))


cdef double _beta_cf(double a, double b, double x):
    cdef double qab = a + b
    cdef double qap = a + 1.0
    cdef double qam = a - 1.0
    cdef double c = 1.0
    cdef double d = 1.0 - qab * x / qap
    cdef double h, aa, delta
    cdef int m, m2
    if fabs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _ITMAX + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if fabs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if fabs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if fabs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if fabs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if fabs(delta - 1.0) < _EPS:
            break
    return h


cpdef double reg_beta(double a, double b, double x) except -1.0:
    cdef double ln_bt, bt
    if a <= 0.0 or b <= 0.0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_bt = lgamma(a + b) - lgamma(a) - lgamma(b) + a * log(x) + b * log1p(-x)
    bt = exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return min(1.0, bt * _beta_cf(a, b, x) / a)
    return max(0.0, 1.0 - bt * _beta_cf(b, a, 1.0 - x) / b)


cpdef double normal_sf(double z):
    return 0.5 * erfc(z / sqrt(2.0))


cdef double[8] _A = [
    3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
    1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
    3.3430575583588128105e4, 2.5090809287301226727e3]
cdef double[8] _B = [
    1.0, 4.2313330701600911252e1, 6.8718700749205790830e2,
    5.3941960214247511077e3, 2.1213794301586595867e4, 3.9307895800092710610e4,
    2.8729085735721942674e4, 5.2264952788528545610e3]
cdef double[8] _C = [
    1.42343711074968357734e0, 4.63033784615654529590e0,
    5.76949722146069140550e0, 3.64784832476320460504e0,
    1.27045825245236838258e0, 2.41780725177450611770e-1,
    2.27238449892691845833e-2, 7.74545014278341407640e-4]
cdef double[8] _D = [
    1.0, 2.05319162663775882187e0, 1.67638483018380384940e0,
    6.89767334985100004550e-1, 1.48103976427480074590e-1,
    1.51986665636164571966e-2, 5.47593808499534494600e-4,
    1.05075007164441684324e-9]
cdef double[8] _E = [
    6.65790464350110377720e0, 5.46378491116411436990e0,
    1.78482653991729133580e0, 2.96560571828504891230e-1,
    2.65321895265761230930e-2, 1.24266094738807843860e-3,
    2.71155556874348757815e-5, 2.01033439929228813265e-7]
cdef double[8] _F = [
    1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1,
    1.48753612908506148525e-2, 7.86869131145613259100e-4,
    1.84631831751005468180e-5, 1.42151175831644588870e-7,
    2.04426310338993978564e-15]


cdef double _poly8(double* coeffs, double r):
    cdef double total = 0.0
    cdef int i
    for i in range(7, -1, -1):
        total = total * r + coeffs[i]
    return total


cdef double _ppnd16(double p) except? -1.0:
    cdef double q, r, value
    if p <= 0.0 or p >= 1.0:
        raise ValueError("p must be in (0, 1)")
    q = p - 0.5
    if fabs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _poly8(_A, r) / _poly8(_B, r)
    r = p if q < 0.0 else 1.0 - p
    r = sqrt(-log(r))
    if r <= 5.0:
        r -= 1.6
        value = _poly8(_C, r) / _poly8(_D, r)
    else:
        r -= 5.0
        value = _poly8(_E, r) / _poly8(_F, r)
    return -value if q < 0.0 else value


cpdef double normal_ppf(double p) except? -1.0:
    return _ppnd16(p)


def normal_ppf_vec(p):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] arr = np.ascontiguousarray(
        np.asarray(p, dtype=np.float64).ravel())
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty_like(arr)
    cdef Py_ssize_t i
    for i in range(arr.shape[0]):
        out[i] = _ppnd16(arr[i])
    return out.reshape(np.asarray(p).shape)


def poisson_binomial_tail(probs, int c):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ps = np.ascontiguousarray(
        np.asarray(probs, dtype=np.float64))
    cdef int k = ps.shape[0]
    if c <= 0:
        return 1.0
    if c > k:
        return 0.0
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pmf = np.zeros(k + 1)
    pmf[0] = 1.0
    cdef int size = 1
    cdef int i, j
    cdef double p, q, tail
    for i in range(k):
        p = ps[i]
        q = 1.0 - p
        pmf[size] = pmf[size - 1] * p
        for j in range(size - 1, 0, -1):
            pmf[j] = pmf[j] * q + pmf[j - 1] * p
        pmf[0] *= q
        size += 1
    tail = 0.0
    for j in range(k, c - 1, -1):
        tail += pmf[j]
    return min(1.0, max(0.0, tail))
