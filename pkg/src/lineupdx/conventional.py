"""Conventional residual misspecification tests.

Three tests over a fitted simple regression: a polynomial augmentation
F-test for functional form, a squared-residual auxiliary-regression LM test
for heteroskedasticity (studentized by default, classical behind a flag),
and the W normality test in its standard approximation for 3 <= n <= 5000.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConstantFitted,
    InsufficientData,
    RankDeficient,
    SampleSizeOutOfRange,
    ZeroVariance,
)
from .kernels import normal_ppf_vec, normal_sf
from .numerics import DesignMatrix, OlsFit, ols_fit, tail_probability

_TINY = 1e-19


@dataclass(frozen=True)
class AuxiliaryFit:
    coefficients: np.ndarray
    rss: float
    r_squared: float
    residual_variance: float


@dataclass(frozen=True)
class TestResult:
    test: str  # RESET, BP, or SW
    statistic: float
    df: tuple
    p_value: float
    parameters: dict = field(default_factory=dict)
    auxiliary: AuxiliaryFit | None = None


def _tss(v: np.ndarray) -> float:
    c = v - v.mean()
    return float(c @ c)


def _aux_fit(design: DesignMatrix, y: np.ndarray) -> tuple[OlsFit, AuxiliaryFit]:
    fit = ols_fit(design, y)
    tss = _tss(y)
    r2 = 1.0 - fit.rss / tss if tss > 0 else 0.0
    return fit, AuxiliaryFit(
        coefficients=fit.coefficients,
        rss=fit.rss,
        r_squared=max(0.0, min(1.0, r2)),
        residual_variance=fit.rss / fit.df_resid if fit.df_resid > 0 else math.nan,
    )


def reset_test(fit: OlsFit, power_max: int = 4) -> TestResult:
    """Functional-form F-test on powers 2..power_max of the fitted values.

    The added columns are centered and scaled before augmentation; the F
    statistic is invariant to that rescaling.
    """
    if power_max < 2:
        raise ValueError("power_max must be at least 2")
    n, k = fit.n, fit.k
    q = power_max - 1
    df2 = n - k - q
    if df2 <= 0:
        raise InsufficientData(
            f"need n > k + {q} observations for powers up to {power_max}"
        )
    yhat = fit.fitted
    if np.std(yhat) < _TINY:
        raise ConstantFitted("fitted values are constant")
    cols = []
    for p in range(2, power_max + 1):
        c = yhat**p
        sd = float(np.std(c))
        if sd < _TINY:
            raise ConstantFitted(f"power {p} of fitted values is constant")
        cols.append((c - c.mean()) / sd)
    aug = DesignMatrix(
        values=np.column_stack([fit.design.values] + cols),
        names=fit.design.names
        + tuple(f"yhat^{p}" for p in range(2, power_max + 1)),
    )
    try:
        aug_ols, aux = _aux_fit(aug, fit.y)
    except RankDeficient as exc:
        raise ConstantFitted(f"augmented columns are collinear: {exc}") from exc
    f_stat = max(0.0, (fit.rss - aug_ols.rss) / q / (aug_ols.rss / df2))
    p = tail_probability(f_stat, "f", q, df2)
    return TestResult(
        test="RESET",
        statistic=f_stat,
        df=(q, df2),
        p_value=p,
        parameters={"power_max": power_max},
        auxiliary=aux,
    )


def bp_test(fit: OlsFit, studentized: bool = True) -> TestResult:
    """LM test of constant error variance against the model's predictors.

    Default is the studentized form LM = n * R^2 from regressing squared
    residuals on the design; the classical form (explained sum of squares
    of the variance-scaled regression over 2) sits behind the flag.
    """
    n, k = fit.n, fit.k
    if n <= k + 1:
        raise InsufficientData("need n > k + 1 observations")
    e2 = fit.residuals**2
    tss = _tss(e2)
    if tss < _TINY:
        # Residual magnitudes carry no variation to explain.
        return TestResult(
            test="BP",
            statistic=0.0,
            df=(k - 1,),
            p_value=1.0,
            parameters={"studentized": studentized},
        )
    _, aux = _aux_fit(fit.design, e2)
    if studentized:
        lm = n * aux.r_squared
    else:
        sigma2 = fit.rss / n
        g = e2 / sigma2
        g_ols, _ = _aux_fit(fit.design, g)
        lm = (_tss(g) - g_ols.rss) / 2.0
    p = tail_probability(lm, "chisq", k - 1)
    return TestResult(
        test="BP",
        statistic=float(lm),
        df=(k - 1,),
        p_value=p,
        parameters={"studentized": studentized},
        auxiliary=aux,
    )


# Polynomial coefficient sets for the W approximation (highest power first).
_SW_C1 = (-2.706056, 4.434685, -2.07119, -0.147981, 0.221157, 0.0)
_SW_C2 = (-3.582633, 5.682633, -1.752461, -0.293762, 0.042981, 0.0)
_SW_C3 = (-0.0006714, 0.025054, -0.39978, 0.544)
_SW_C4 = (-0.0020322, 0.062767, -0.77857, 1.3822)
_SW_C5 = (0.0038915, -0.083751, -0.31082, -1.5861)
_SW_C6 = (0.0030302, -0.082676, -0.4803)
_SW_G = (0.459, -2.273)
_PI6 = 1.90985931710274403  # 6 / pi
_STQR = 1.04719755119659775  # pi / 3


def _polyval(coeffs, x: float) -> float:
    acc = 0.0
    for c in coeffs:
        acc = acc * x + c
    return acc


def _sw_coefficients(n: int) -> np.ndarray:
    """Expected-order-statistic weights a_1..a_n (antisymmetric)."""
    if n == 3:
        s = math.sqrt(0.5)
        return np.array([-s, 0.0, s])
    half = n // 2
    i = np.arange(1, half + 1)
    m = normal_ppf_vec((i - 0.375) / (n + 0.25))  # lower half, negative
    summ2 = 2.0 * float(m @ m)
    ssumm2 = math.sqrt(summ2)
    rsn = 1.0 / math.sqrt(n)
    # Corrections are published for the top-end weights; m is the lower
    # half, so the corrected values enter negated.
    a1 = _polyval(_SW_C1, rsn) - m[0] / ssumm2
    if n > 5:
        a2 = _polyval(_SW_C2, rsn) - m[1] / ssumm2
        fac = math.sqrt(
            (summ2 - 2.0 * m[0] ** 2 - 2.0 * m[1] ** 2)
            / (1.0 - 2.0 * a1**2 - 2.0 * a2**2)
        )
        lower = np.concatenate(([-a1, -a2], m[2:] / fac))
    else:
        fac = math.sqrt((summ2 - 2.0 * m[0] ** 2) / (1.0 - 2.0 * a1**2))
        lower = np.concatenate(([-a1], m[1:] / fac))
    # lower holds a_1..a_{n/2} (negative); mirror to the top half.
    if n % 2 == 0:
        return np.concatenate([lower, -lower[::-1]])
    return np.concatenate([lower, [0.0], -lower[::-1]])


def sw_test(residuals: np.ndarray) -> TestResult:
    """W normality test with the standard approximation p-value."""
    x = np.sort(np.asarray(residuals, dtype=float).ravel())
    n = x.shape[0]
    if n < 3 or n > 5000:
        raise SampleSizeOutOfRange("supported sample sizes are 3..5000")
    if x[-1] - x[0] < _TINY:
        raise ZeroVariance("residuals have zero range")
    a = _sw_coefficients(n)
    num = float(a @ x) ** 2
    den = _tss(x)
    w = min(1.0, num / den)
    if n == 3:
        p = _PI6 * (math.asin(math.sqrt(w)) - _STQR)
        p = min(1.0, max(0.0, p))
        return TestResult(test="SW", statistic=w, df=(n,), p_value=p, parameters={})
    w1 = 1.0 - w
    if n <= 11:
        gamma = _polyval(_SW_G, float(n))
        if math.log(w1) >= gamma:
            p = _TINY
        else:
            y = -math.log(gamma - math.log(w1))
            mu = _polyval(_SW_C3, float(n))
            sd = math.exp(_polyval(_SW_C4, float(n)))
            p = normal_sf((y - mu) / sd)
    else:
        ln_n = math.log(float(n))
        y = math.log(w1)
        mu = _polyval(_SW_C5, ln_n)
        sd = math.exp(_polyval(_SW_C6, ln_n))
        p = normal_sf((y - mu) / sd)
    return TestResult(test="SW", statistic=w, df=(n,), p_value=p, parameters={})


def test_battery(
    fit: OlsFit, reset_power: int = 4, studentized: bool = True
) -> list[TestResult]:
    """All three tests in the fixed order RESET, BP, SW."""
    return [
        reset_test(fit, power_max=reset_power),
        bp_test(fit, studentized=studentized),
        sw_test(fit.residuals),
    ]
