"""Dataset generation under controlled model violations.

Two departure families from a simple linear regression are supported:

* ``nonlinear`` — an omitted mean curve built from a probabilists' Hermite
  polynomial of order j, evaluated on a window of the predictor range chosen
  so the curve shows the intended number of turning points ("U", "S", "M",
  "triple-U"), then standardized so sigma alone sets the signal-to-noise.
* ``heteroskedastic`` — error variance v(x) that varies over the predictor
  with a controlled largest-to-smallest variance ratio b and one of three
  silhouettes (left-triangle, butterfly, right-triangle).

Null residuals consistent with the fitted model are produced by projecting
white noise onto the residual space of the design and rescaling to the
observed residual sum of squares.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CorruptManifest,
    DegenerateDraw,
    DegenerateRange,
    IoError,
    OrderTooLarge,
)
from .numerics import DesignMatrix, RandomStream, design_from_predictor, residual_operator

DEPARTURES = ("nonlinear", "heteroskedastic")
PREDICTOR_DISTS = ("uniform", "normal", "skewed", "discrete")

# Half-width of the symmetric window the predictor range is mapped onto
# before evaluating the order-j polynomial.  Chosen so the curve has the
# intended interior turning-point count (see _extrema_target).
SHAPE_WINDOWS = {2: 1.0, 3: 2.0, 6: 2.0, 18: 1.9}

# Turning points the windowed curve must show: single dip, S, M, triple-U.
EXTREMA_TARGETS = {2: 1, 3: 2, 6: 3, 18: 5}

MAX_HERMITE_ORDER = 30
_NULL_RETRY_BOUND = 8

DATASET_MANIFEST = "dataset.json"
DATASET_CSV = "data.csv"


@dataclass(frozen=True)
class ExperimentFactors:
    """Factor combination describing one simulated scenario.

    Fields that do not apply to the chosen departure are ignored.
    """

    departure: str
    n: int
    dist: str = "uniform"
    j: int = 2
    sigma: float = 1.0
    a: int = 0
    b: float = 1.0

    def __post_init__(self):
        if self.departure not in DEPARTURES:
            raise ValueError(f"unknown departure: {self.departure}")
        if self.dist not in PREDICTOR_DISTS:
            raise ValueError(f"unknown predictor distribution: {self.dist}")
        if self.n < 3:
            raise ValueError("n must be at least 3")
        if self.departure == "nonlinear":
            if self.j < 0:
                raise ValueError("polynomial order must be nonnegative")
            if self.sigma <= 0:
                raise ValueError("sigma must be positive")
        else:
            if self.a not in (-1, 0, 1):
                raise ValueError("shape a must be -1, 0, or +1")
            if self.b <= 0:
                raise ValueError("variance ratio b must be positive")

    def to_dict(self) -> dict:
        if self.departure == "nonlinear":
            return {
                "departure": self.departure,
                "n": self.n,
                "dist": self.dist,
                "j": self.j,
                "sigma": self.sigma,
            }
        return {
            "departure": self.departure,
            "n": self.n,
            "dist": self.dist,
            "a": self.a,
            "b": self.b,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentFactors":
        allowed = {"departure", "n", "dist", "j", "sigma", "a", "b"}
        extra = set(d) - allowed
        if extra:
            raise ValueError(f"unknown factor fields: {sorted(extra)}")
        return cls(**d)


@dataclass(frozen=True)
class SimulatedDataset:
    """One simulated sample plus the truth needed for effect sizes."""

    x: np.ndarray
    y: np.ndarray
    z_design: np.ndarray  # n x q omitted terms; q = 0 for heteroskedastic data
    beta_z: np.ndarray
    variances: np.ndarray  # diagonal of the true error covariance
    sigma2: float  # error variance assumed under the null
    factors: ExperimentFactors
    seed: int

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def design(self) -> DesignMatrix:
        return design_from_predictor(self.x)


@dataclass(frozen=True)
class NullResiduals:
    values: np.ndarray
    source_rss: float


def sample_predictor(dist: str, n: int, rng: RandomStream) -> np.ndarray:
    """Draw the predictor from one of the four study distributions."""
    if n < 3:
        raise ValueError("n must be at least 3")
    g = rng.generator
    if dist == "uniform":
        return g.uniform(-1.0, 1.0, n)
    if dist == "normal":
        return g.normal(0.0, 0.3, n)
    if dist == "skewed":
        return g.lognormal(0.0, 0.6, n) / 3.0
    if dist == "discrete":
        return g.choice(np.array([-1.0, 1.0]), size=n)
    raise ValueError(f"unknown predictor distribution: {dist}")


def hermite(j: int, t):
    """Probabilists' Hermite polynomial He_j evaluated at t.

    Uses the recurrence He_{j+1} = t He_j - j He_{j-1}; orders above
    MAX_HERMITE_ORDER are refused because the recurrence loses accuracy.
    """
    if j < 0:
        raise ValueError("order must be nonnegative")
    if j > MAX_HERMITE_ORDER:
        raise OrderTooLarge(f"order {j} exceeds supported maximum {MAX_HERMITE_ORDER}")
    t = np.asarray(t, dtype=float)
    prev = np.ones_like(t)
    if j == 0:
        return prev if prev.ndim else float(prev)
    cur = t.copy()
    for order in range(1, j):
        prev, cur = cur, t * cur - order * prev
    return cur if cur.ndim else float(cur)


def shape_window(j: int) -> float:
    """Window half-width for order j.

    Canonical orders use frozen constants; other orders get a window placed
    between consecutive turning points of He_j so the target count falls
    inside.
    """
    if j in SHAPE_WINDOWS:
        return SHAPE_WINDOWS[j]
    if j < 2:
        return 1.0
    # Turning points of He_j are the roots of He_{j-1}.
    coeffs = np.zeros(j)
    coeffs[-1] = 1.0
    roots = np.sort(np.abs(np.polynomial.hermite_e.hermeroots(coeffs)))
    target = _extrema_target(j)
    if target >= len(roots):
        return float(roots[-1] + 1.0)
    # Distinct |roots|: paired +-r, plus 0 when j is even.  The window must
    # contain exactly `pos` positive magnitudes (each counts twice) so the
    # total lands on target.
    uniq = np.unique(np.round(roots, 12))
    pos = (target - 1) // 2 if j % 2 == 0 else target // 2
    idx = pos if j % 2 == 0 else pos - 1
    lo = uniq[idx]
    hi = uniq[idx + 1] if idx + 1 < len(uniq) else uniq[idx] + 2.0
    return float((lo + hi) / 2.0)


def _extrema_target(j: int) -> int:
    if j in EXTREMA_TARGETS:
        return EXTREMA_TARGETS[j]
    t = min(j - 1, 5)
    if (t - (j - 1)) % 2 != 0:
        t -= 1
    return max(t, 0)


def _map_to_window(x: np.ndarray, w: float) -> np.ndarray:
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi == lo:
        raise DegenerateRange("predictor takes a single value")
    return -w + (x - lo) * (2.0 * w) / (hi - lo)


def nonlinear_curve(x: np.ndarray, j: int) -> np.ndarray:
    """Standardized omitted mean curve g(x) for polynomial order j.

    Zero mean and unit variance over the realized sample; a sample where the
    curve is constant (e.g. a two-point predictor with an even-order,
    symmetric curve) yields the all-zero curve, meaning the violation is not
    identifiable at the observed design points.
    """
    x = np.asarray(x, dtype=float)
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi == lo:
        return np.zeros_like(x)
    t = _map_to_window(x, shape_window(j))
    raw = hermite(j, t)
    sd = float(np.std(raw))
    if sd < 1e-12:
        return np.zeros_like(x)
    return (raw - float(np.mean(raw))) / sd


def variance_profile(x: np.ndarray, a: int, b: float) -> np.ndarray:
    """Per-observation error variances with ratio b over the realized range.

    The silhouette (a = -1 left-triangle, 0 butterfly, +1 right-triangle) is
    normalized to span [0, 1] on the realized sample, so max(v)/min(v) is b
    exactly (1/b when b < 1).  A discrete two-point predictor skips the
    normalization and evaluates the silhouette at the support points.
    """
    x = np.asarray(x, dtype=float)
    values = np.unique(x)
    if set(float(v) for v in values) <= {-1.0, 1.0}:
        # Two-point support: evaluate the silhouette directly.
        g = _silhouette(x, a)
    elif values.size == 1:
        raise DegenerateRange("predictor takes a single value")
    else:
        t = _map_to_window(x, 1.0)
        g = _silhouette(t, a)
        lo, hi = float(np.min(g)), float(np.max(g))
        if hi > lo:
            g = (g - lo) / (hi - lo)
        else:
            g = np.zeros_like(g)
    return 1.0 + (b - 1.0) * g


def _silhouette(t: np.ndarray, a: int) -> np.ndarray:
    if a == -1:
        return (1.0 + t) / 2.0
    if a == 1:
        return (1.0 - t) / 2.0
    return np.abs(t)


def _dataset_seed(rng: RandomStream) -> int:
    return int(rng.generator.integers(0, 2**63 - 1))


def gen_nonlinear(factors: ExperimentFactors, rng: RandomStream) -> SimulatedDataset:
    """y = x + g(x) + eps with iid N(0, sigma^2) errors."""
    if factors.departure != "nonlinear":
        raise ValueError("factors must describe a nonlinear departure")
    seed = _dataset_seed(rng)
    return _gen_nonlinear_seeded(factors, seed)


def _gen_nonlinear_seeded(factors: ExperimentFactors, seed: int) -> SimulatedDataset:
    stream = RandomStream(seed)
    x = sample_predictor(factors.dist, factors.n, stream.child(1))
    g = nonlinear_curve(x, factors.j)
    eps = stream.child(2).normal(factors.n) * factors.sigma
    y = x + g + eps
    sigma2 = factors.sigma**2
    return SimulatedDataset(
        x=x,
        y=y,
        z_design=g.reshape(-1, 1),
        beta_z=np.array([1.0]),
        variances=np.full(factors.n, sigma2),
        sigma2=sigma2,
        factors=factors,
        seed=seed,
    )


def gen_heteroskedastic(factors: ExperimentFactors, rng: RandomStream) -> SimulatedDataset:
    """y = x + eps with independent N(0, v(x_i)) errors."""
    if factors.departure != "heteroskedastic":
        raise ValueError("factors must describe a heteroskedastic departure")
    seed = _dataset_seed(rng)
    return _gen_heteroskedastic_seeded(factors, seed)


def _gen_heteroskedastic_seeded(factors: ExperimentFactors, seed: int) -> SimulatedDataset:
    stream = RandomStream(seed)
    x = sample_predictor(factors.dist, factors.n, stream.child(1))
    v = variance_profile(x, factors.a, factors.b)
    eps = stream.child(2).normal(factors.n) * np.sqrt(v)
    y = x + eps
    return SimulatedDataset(
        x=x,
        y=y,
        z_design=np.empty((factors.n, 0)),
        beta_z=np.empty(0),
        variances=v,
        sigma2=1.0,
        factors=factors,
        seed=seed,
    )


def generate(factors: ExperimentFactors, rng: RandomStream) -> SimulatedDataset:
    if factors.departure == "nonlinear":
        return gen_nonlinear(factors, rng)
    return gen_heteroskedastic(factors, rng)


# Default factor levels of the experiment grid.
GRID_J = (2, 3, 6, 18)
GRID_SIGMA = (0.25, 1.0, 2.0, 4.0)
GRID_A = (-1, 0, 1)
GRID_B = (0.25, 1.0, 4.0, 16.0, 64.0)
GRID_N = (50, 100, 300)


def experiment_grid(
    departure: str, dists=PREDICTOR_DISTS, ns=GRID_N
) -> list[ExperimentFactors]:
    """Full default factor grid for one departure family."""
    if departure not in DEPARTURES:
        raise ValueError(f"unknown departure: {departure}")
    cells = []
    for dist in dists:
        for n in ns:
            if departure == "nonlinear":
                for j in GRID_J:
                    for sigma in GRID_SIGMA:
                        cells.append(ExperimentFactors(
                            departure=departure, n=n, dist=dist,
                            j=j, sigma=sigma))
            else:
                for a in GRID_A:
                    for b in GRID_B:
                        cells.append(ExperimentFactors(
                            departure=departure, n=n, dist=dist, a=a, b=b))
    return cells


def generate_seeded(factors: ExperimentFactors, seed: int) -> SimulatedDataset:
    """Regenerate the exact dataset recorded under (factors, seed)."""
    if factors.departure == "nonlinear":
        return _gen_nonlinear_seeded(factors, int(seed))
    return _gen_heteroskedastic_seeded(factors, int(seed))


def gen_null_residuals(
    X: DesignMatrix, rss_obs: float, rng: RandomStream
) -> NullResiduals:
    """Residuals exchangeable with the observed ones under the null.

    White noise is pushed through the residual projection of X and rescaled
    so the sum of squares matches rss_obs.
    """
    if rss_obs < 0:
        raise ValueError("rss_obs must be nonnegative")
    op = residual_operator(X)
    if rss_obs == 0.0:
        return NullResiduals(values=np.zeros(X.n), source_rss=0.0)
    for _ in range(_NULL_RETRY_BOUND):
        w = rng.normal(X.n)
        e = op.apply(w)
        ss = float(e @ e)
        if ss > 0.0:
            return NullResiduals(
                values=e * np.sqrt(rss_obs / ss), source_rss=float(rss_obs)
            )
    raise DegenerateDraw("projected noise had zero sum of squares repeatedly")


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _variance_digest(v: np.ndarray) -> str:
    payload = "\n".join(_fmt(t) for t in v).encode()
    return hashlib.sha256(payload).hexdigest()


def save_dataset(ds: SimulatedDataset, directory) -> Path:
    """Write data.csv plus a JSON manifest; returns the directory path."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        csv_lines = ["x,y"]
        for xi, yi in zip(ds.x, ds.y):
            csv_lines.append(f"{_fmt(xi)},{_fmt(yi)}")
        csv_text = "\n".join(csv_lines) + "\n"
        manifest = {
            "format": "lineupdx-dataset",
            "version": 1,
            "factors": ds.factors.to_dict(),
            "seed": ds.seed,
            "sigma2": ds.sigma2,
            "beta_z": [float(t) for t in ds.beta_z],
            "variance_digest": _variance_digest(ds.variances),
            "csv_digest": hashlib.sha256(csv_text.encode()).hexdigest(),
        }
        tmp_csv = directory / (DATASET_CSV + ".tmp")
        tmp_csv.write_text(csv_text)
        tmp_csv.rename(directory / DATASET_CSV)
        tmp_json = directory / (DATASET_MANIFEST + ".tmp")
        tmp_json.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        tmp_json.rename(directory / DATASET_MANIFEST)
    except OSError as exc:
        raise IoError(f"cannot write dataset to {directory}: {exc}") from exc
    return directory


def load_dataset(directory) -> SimulatedDataset:
    """Load a saved dataset, verifying digests and regeneration identity."""
    directory = Path(directory)
    try:
        manifest_text = (directory / DATASET_MANIFEST).read_text()
        csv_text = (directory / DATASET_CSV).read_text()
    except OSError as exc:
        raise IoError(f"cannot read dataset from {directory}: {exc}") from exc
    try:
        manifest = json.loads(manifest_text)
    except json.JSONDecodeError as exc:
        raise CorruptManifest(f"manifest is not valid JSON: {exc}") from exc
    if manifest.get("format") != "lineupdx-dataset":
        raise CorruptManifest("not a dataset manifest")
    if hashlib.sha256(csv_text.encode()).hexdigest() != manifest.get("csv_digest"):
        raise CorruptManifest("data.csv does not match its recorded digest")
    try:
        factors = ExperimentFactors.from_dict(manifest["factors"])
        seed = int(manifest["seed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptManifest(f"manifest fields invalid: {exc}") from exc
    ds = generate_seeded(factors, seed)
    lines = csv_text.strip().split("\n")
    if len(lines) - 1 != ds.n:
        raise CorruptManifest("row count does not match factors")
    x = np.empty(ds.n)
    y = np.empty(ds.n)
    try:
        for i, line in enumerate(lines[1:]):
            sx, sy = line.split(",")
            x[i] = float(sx)
            y[i] = float(sy)
    except ValueError as exc:
        raise CorruptManifest(f"malformed CSV row: {exc}") from exc
    if not (np.array_equal(x, ds.x) and np.array_equal(y, ds.y)):
        raise CorruptManifest("stored values do not match regeneration")
    if _variance_digest(ds.variances) != manifest.get("variance_digest"):
        raise CorruptManifest("variance digest mismatch")
    return ds
