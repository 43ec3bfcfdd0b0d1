"""Monte Carlo power and fixed-intercept logistic power curves.

The rejection probability of a test is modeled as a one-parameter
logistic in the effect size with the intercept pinned at
ln(level/(1-level)), so the fitted curve passes through the nominal
level at zero effect exactly.  Records come either from conventional
tests run on fresh simulations (mc_power) or from thresholded visual
p-values; both feed the same curve fit, bootstrap, and agreement
machinery.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .conventional import bp_test, reset_test, sw_test
from .effect_size import effect_size, inputs_from_dataset
from .errors import AllDegenerate, IdMismatch, Separation
from .numerics import RandomStream, ols_fit
from .simulate import ExperimentFactors, generate

DEFAULT_LEVEL = 0.05
CURVE_POINTS = 200
# the curve is sampled evenly in log effect size over this window
LOG_E_RANGE = (-1.0, 6.0)

_TEST_NAMES = ("RESET", "BP", "SW")
_NEWTON_TOL = 1e-9
_MAX_ITER = 200

VISUAL_SOURCE = "visual"


class NegativeSlopeWarning(RuntimeWarning):
    """Fitted slope is negative: power sits below the nominal level."""


@dataclass(frozen=True)
class DecisionRecord:
    """One reject/non-reject decision tagged with its effect size."""

    effect_size: float
    log_e: float
    reject: bool
    source: str  # RESET, BP, SW, or "visual"
    factors: ExperimentFactors
    replicate: int = 0

    def __post_init__(self):
        if not self.effect_size >= 0.0:
            raise ValueError("effect size must be nonnegative")


@dataclass(frozen=True)
class PowerCurve:
    """Fixed-intercept logistic power curve.

    ``curve`` holds (effect size, power) pairs sampled evenly in log
    effect size; ``power_at`` evaluates the fitted model anywhere and
    returns exactly ``level`` at zero effect.
    """

    beta1: float
    level: float
    curve: tuple[tuple[float, float], ...]
    bootstrap_beta1: tuple[float, ...] = ()
    bootstrap_skipped: int = 0

    @property
    def intercept(self) -> float:
        return math.log(self.level / (1.0 - self.level))

    def power_at(self, e):
        return _logistic_power(self.beta1, e, self.level)


def _logistic_power(beta1: float, e, level: float):
    """Rejection probability at effect size e.

    Algebraic form of the logistic with offset logit(level), arranged so
    e = 0 yields ``level`` with no rounding: the denominator collapses
    to exactly 1 there.
    """
    arr = np.asarray(e, dtype=float)
    z = beta1 * arr
    out = np.empty_like(z)
    low = z <= 0
    t = np.exp(z[low])
    out[low] = level * t / (1.0 + level * (t - 1.0))
    u = np.exp(-z[~low])
    out[~low] = level / (level + (1.0 - level) * u)
    if np.isscalar(e) or arr.ndim == 0:
        return float(out)
    return out


def _normalize_test_spec(spec) -> tuple[str, dict]:
    if isinstance(spec, str):
        name, params = spec, {}
    else:
        name, params = spec
        params = dict(params)
    name = name.upper()
    if name not in _TEST_NAMES:
        raise ValueError(f"unknown test: {spec!r}")
    return name, params


def _run_test(name: str, params: dict, fit):
    if name == "RESET":
        return reset_test(fit, **params)
    if name == "BP":
        return bp_test(fit, **params)
    return sw_test(fit.residuals, **params)


def _mc_cell(args) -> list[DecisionRecord]:
    entropy, spawn_key, factors, nsim, specs, level = args
    seq = np.random.SeedSequence(entropy=entropy, spawn_key=tuple(spawn_key))
    cell = RandomStream(None, seq)
    records = []
    for rep in range(nsim):
        ds = generate(factors, cell.child(rep))
        es = effect_size(inputs_from_dataset(ds))
        fit = ols_fit(ds.design(), ds.y)
        for name, params in specs:
            result = _run_test(name, params, fit)
            records.append(DecisionRecord(
                effect_size=es.value, log_e=es.log_value,
                reject=result.p_value <= level, source=name,
                factors=factors, replicate=rep))
    return records


def mc_power(tests, grid, nsim: int, level: float = DEFAULT_LEVEL,
             rng: RandomStream | None = None, jobs: int = 1
             ) -> list[DecisionRecord]:
    """Simulate each grid cell nsim times and record test decisions.

    Replicate r of cell i always runs on the stream rng.child(i, r), so
    decisions do not depend on nsim, the set of other cells, or the
    number of workers.
    """
    if rng is None:
        raise ValueError("rng is required")
    if nsim < 1:
        raise ValueError("nsim must be at least 1")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be inside (0, 1)")
    if jobs < 1:
        raise ValueError("jobs must be at least 1")
    specs = tuple(_normalize_test_spec(t) for t in tests)
    if not specs:
        raise ValueError("at least one test is required")
    key = tuple(rng.seq.spawn_key)
    args = [
        (rng.seq.entropy, key + (ci,), factors, nsim, specs, level)
        for ci, factors in enumerate(grid)
    ]
    if not args:
        raise ValueError("factor grid is empty")
    if jobs == 1:
        chunks = [_mc_cell(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_mc_cell, args))
    return [rec for chunk in chunks for rec in chunk]


def decision_from_visual(result, effect, factors: ExperimentFactors,
                         level: float = DEFAULT_LEVEL,
                         replicate: int = 0) -> DecisionRecord:
    """Threshold a visual test result into a DecisionRecord."""
    return DecisionRecord(
        effect_size=effect.value, log_e=effect.log_value,
        reject=result.p_value <= level, source=VISUAL_SOURCE,
        factors=factors, replicate=replicate)


def _decision_arrays(records) -> tuple[np.ndarray, np.ndarray]:
    if not records:
        raise ValueError("no records to fit")
    e = np.array([r.effect_size for r in records], dtype=float)
    y = np.array([1.0 if r.reject else 0.0 for r in records])
    return e, y


def fit_power_curve(records, level: float = DEFAULT_LEVEL,
                    curve_points: int = CURVE_POINTS) -> PowerCurve:
    """Maximum-likelihood slope of the fixed-intercept logistic.

    Newton iteration from zero with a bracketing fallback; the score is
    strictly decreasing in the slope, so a sign-change bracket always
    pins the unique maximum.  Records at zero effect size carry no
    information about the slope (their rejection probability is pinned
    at the intercept), hence separation is judged on the positive-effect
    records alone.
    """
    e, y = _decision_arrays(records)
    if np.any(e < 0):
        raise ValueError("effect sizes must be nonnegative")
    pos = e > 0
    if not pos.any():
        raise Separation("every record has zero effect size; "
                         "the slope is not identified", sign=0)
    if np.all(y[pos] == 1.0):
        raise Separation("every record with positive effect size rejects; "
                         "the slope diverges to +inf", sign=1)
    if np.all(y[pos] == 0.0):
        raise Separation("no record with positive effect size rejects; "
                         "the slope diverges to -inf", sign=-1)

    c = math.log(level / (1.0 - level))

    def score_hess(beta: float) -> tuple[float, float]:
        p = expit(c + beta * e)
        return float(e @ (y - p)), -float(np.sum(p * (1.0 - p) * e * e))

    beta = 0.0
    s0, _ = score_hess(beta)
    if s0 > 0:
        lo, hi = 0.0, 1.0
        while score_hess(hi)[0] > 0:
            hi *= 2.0
    elif s0 < 0:
        lo, hi = -1.0, 0.0
        while score_hess(lo)[0] < 0:
            lo *= 2.0
    else:
        lo = hi = 0.0

    for _ in range(_MAX_ITER):
        s, h = score_hess(beta)
        if s == 0.0:
            break
        if s > 0:
            lo = beta
        else:
            hi = beta
        cand = beta - s / h if h < 0 else math.nan
        if not math.isfinite(cand) or not lo < cand < hi:
            cand = 0.5 * (lo + hi)
        step = cand - beta
        beta = cand
        if abs(step) < _NEWTON_TOL:
            break

    if beta < 0:
        warnings.warn(
            "fitted slope is negative; estimated power falls below the "
            "nominal level as the effect size grows",
            NegativeSlopeWarning, stacklevel=2)

    grid = np.exp(np.linspace(LOG_E_RANGE[0], LOG_E_RANGE[1], curve_points))
    powers = _logistic_power(beta, grid, level)
    curve = tuple((float(g), float(p)) for g, p in zip(grid, powers))
    return PowerCurve(beta1=float(beta), level=level, curve=curve)


def bootstrap_power(records, b: int, rng: RandomStream,
                    level: float = DEFAULT_LEVEL) -> PowerCurve:
    """Case-resampling bootstrap of the power-curve slope.

    Resample i draws its indices from rng.child(i), so individual
    replicates are reproducible in isolation.  Degenerate resamples
    (separation) are skipped and counted in ``bootstrap_skipped``.
    """
    if b < 1:
        raise ValueError("b must be at least 1")
    base = fit_power_curve(records, level)
    n = len(records)
    betas: list[float] = []
    skipped = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NegativeSlopeWarning)
        for i in range(b):
            idx = rng.child(i).generator.integers(0, n, size=n)
            sample = [records[j] for j in idx]
            try:
                betas.append(fit_power_curve(sample, level).beta1)
            except Separation:
                skipped += 1
    if not betas:
        raise AllDegenerate(
            f"all {b} bootstrap resamples were degenerate")
    return replace(base, bootstrap_beta1=tuple(betas),
                   bootstrap_skipped=skipped)


@dataclass(frozen=True)
class AgreementTable:
    """2x2 reject-decision cross table at one pair of levels.

    ``counts[i][j]`` holds row i = conventional (0 reject, 1 accept) and
    column j = visual (0 reject, 1 accept).  Conditional rates are nan
    when the conditioning row is empty.
    """

    conventional_level: float
    visual_level: float
    counts: tuple[tuple[int, int], tuple[int, int]]
    n: int
    conventional_reject_rate: float
    visual_reject_rate: float
    visual_reject_given_conventional_reject: float
    visual_reject_given_conventional_accept: float
    sweep: tuple["AgreementTable", ...] = field(default=())


def _agreement_table(ids, conv, vis, conv_level: float,
                     vis_level: float) -> AgreementTable:
    counts = [[0, 0], [0, 0]]
    for lid in ids:
        row = 0 if conv[lid] <= conv_level else 1
        col = 0 if vis[lid] <= vis_level else 1
        counts[row][col] += 1
    n = len(ids)
    conv_reject = counts[0][0] + counts[0][1]
    vis_reject = counts[0][0] + counts[1][0]

    def rate(num: int, den: int) -> float:
        return num / den if den else math.nan

    return AgreementTable(
        conventional_level=conv_level,
        visual_level=vis_level,
        counts=(tuple(counts[0]), tuple(counts[1])),
        n=n,
        conventional_reject_rate=rate(conv_reject, n),
        visual_reject_rate=rate(vis_reject, n),
        visual_reject_given_conventional_reject=rate(counts[0][0],
                                                     conv_reject),
        visual_reject_given_conventional_accept=rate(counts[1][0],
                                                     n - conv_reject),
    )


def agreement_report(conv, vis, level: float = DEFAULT_LEVEL,
                     sweep=(0.001, 0.0001)) -> AgreementTable:
    """Cross-tabulate conventional vs visual decisions per lineup.

    Both arguments map lineup id to a p-value.  The main table applies
    ``level`` to both tests; each sweep entry tightens the conventional
    level while the visual threshold stays put.
    """
    conv = dict(conv)
    vis = dict(vis)
    if set(conv) != set(vis):
        only_conv = sorted(set(conv) - set(vis))
        only_vis = sorted(set(vis) - set(conv))
        raise IdMismatch(
            f"lineup id sets differ (conv only: {only_conv[:3]}, "
            f"visual only: {only_vis[:3]})")
    ids = sorted(conv)
    if not ids:
        raise ValueError("no lineups to compare")
    main = _agreement_table(ids, conv, vis, level, level)
    extra = tuple(
        _agreement_table(ids, conv, vis, lv, level) for lv in sweep
    )
    return replace(main, sweep=extra)


# --- reporting artifacts ------------------------------------------------

_FACTOR_COLUMNS = ("departure", "n", "dist", "j", "sigma", "a", "b")


def _num(v) -> str:
    return "%.17g" % float(v)


def records_csv_text(records) -> str:
    lines = ["effect_size,log_e,reject,test,replicate,"
             + ",".join(_FACTOR_COLUMNS)]
    for r in records:
        f = r.factors
        lines.append(",".join([
            _num(r.effect_size), _num(r.log_e),
            "1" if r.reject else "0", r.source, str(r.replicate),
            f.departure, str(f.n), f.dist, str(f.j), _num(f.sigma),
            str(f.a), _num(f.b),
        ]))
    return "\n".join(lines) + "\n"


def curves_csv_text(curves: dict) -> str:
    lines = ["test,effect_size,power"]
    for name, curve in curves.items():
        for e, p in curve.curve:
            lines.append(f"{name},{_num(e)},{_num(p)}")
    return "\n".join(lines) + "\n"


_CHART_COLORS = ("#1b6ca8", "#c05717", "#3d8a41", "#7a4fa3", "#8a8a2a")


def power_chart(curves: dict, records=(), width: int = 640,
                height: int = 420) -> str:
    """SVG chart: one power curve per test plus 0/1 decision dots."""
    ml, mr, mt, mb = 46, 14, 30, 40
    pw, ph = width - ml - mr, height - mt - mb
    x_lo, x_hi = LOG_E_RANGE

    def sx(log_e: float) -> float:
        clamped = min(max(log_e, x_lo), x_hi)
        return ml + (clamped - x_lo) / (x_hi - x_lo) * pw

    def sy(p: float) -> float:
        return mt + (1.0 - p) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" '
        'fill="none" stroke="#999999" stroke-width="1"/>',
    ]
    for tick in range(int(x_lo), int(x_hi) + 1):
        x = sx(float(tick))
        out.append(f'<line x1="{x:.2f}" y1="{mt + ph}" x2="{x:.2f}" '
                   f'y2="{mt + ph + 4}" stroke="#555555"/>')
        out.append(f'<text x="{x:.2f}" y="{mt + ph + 16}" '
                   'font-family="sans-serif" font-size="10" '
                   f'fill="#555555" text-anchor="middle">{tick}</text>')
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = sy(frac)
        out.append(f'<line x1="{ml - 4}" y1="{y:.2f}" x2="{ml}" '
                   f'y2="{y:.2f}" stroke="#555555"/>')
        out.append(f'<text x="{ml - 7}" y="{y + 3:.2f}" '
                   'font-family="sans-serif" font-size="10" '
                   f'fill="#555555" text-anchor="end">{frac:g}</text>')
    out.append(f'<text x="{ml + pw / 2:.2f}" y="{height - 8}" '
               'font-family="sans-serif" font-size="11" fill="#333333" '
               'text-anchor="middle">log effect size</text>')
    out.append(f'<text x="14" y="{mt + ph / 2:.2f}" '
               'font-family="sans-serif" font-size="11" fill="#333333" '
               f'text-anchor="middle" transform="rotate(-90 14 '
               f'{mt + ph / 2:.2f})">power</text>')

    color = {name: _CHART_COLORS[i % len(_CHART_COLORS)]
             for i, name in enumerate(curves)}
    for rec in records:
        c = color.get(rec.source, "#777777")
        y = sy(1.0 if rec.reject else 0.0)
        out.append(f'<circle cx="{sx(rec.log_e):.2f}" cy="{y:.2f}" '
                   f'r="2.5" fill="{c}" fill-opacity="0.35" '
                   f'class="dot-{rec.source}"/>')
    for name, curve in curves.items():
        pts = " ".join(
            f"{sx(math.log(e)):.2f},{sy(p):.2f}" for e, p in curve.curve
        )
        out.append(f'<polyline points="{pts}" fill="none" '
                   f'stroke="{color[name]}" stroke-width="1.5" '
                   f'class="curve-{name}"/>')
    for i, name in enumerate(curves):
        x = ml + 8 + 90 * i
        out.append(f'<rect x="{x}" y="{mt - 18}" width="10" height="10" '
                   f'fill="{color[name]}"/>')
        out.append(f'<text x="{x + 14}" y="{mt - 9}" '
                   'font-family="sans-serif" font-size="11" '
                   f'fill="#333333">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
