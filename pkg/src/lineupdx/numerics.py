"""Linear-model plumbing shared by every other module.

Fits are QR-based with an explicit rank check; the residual operator is kept
in factored form (I - QQ') so large-n paths never materialize an n x n
matrix unless asked to.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidDegreesOfFreedom, RankDeficient
from .kernels import normal_sf, reg_beta, reg_gamma_q


class RandomStream:
    """Seeded random stream with deterministic, order-independent children.

    A child is addressed by an integer path, so `stream.child(2, 5)` is the
    same stream no matter when or how often it is derived.  Children of
    distinct paths are statistically independent.
    """

    def __init__(self, seed: int | None, _seq: np.random.SeedSequence | None = None):
        if _seq is None:
            if seed is None:
                raise ValueError("seed is required for a root stream")
            _seq = np.random.SeedSequence(int(seed))
        self.seq = _seq
        self.generator = np.random.Generator(np.random.PCG64(_seq))

    def child(self, *path: int) -> "RandomStream":
        if not path:
            raise ValueError("child path must be non-empty")
        seq = np.random.SeedSequence(
            entropy=self.seq.entropy, spawn_key=self.seq.spawn_key + tuple(path)
        )
        return RandomStream(None, seq)

    def normal(self, size: int | tuple[int, ...]) -> np.ndarray:
        return self.generator.standard_normal(size)


@dataclass(frozen=True)
class DesignMatrix:
    """Design with an explicit intercept column first."""

    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        v = self.values
        if v.ndim != 2:
            raise DimensionMismatch("design must be 2-dimensional")
        if len(self.names) != v.shape[1]:
            raise DimensionMismatch("one name per column required")
        if not np.all(v[:, 0] == 1.0):
            raise DimensionMismatch("first column must be the intercept")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]


def design_from_predictor(x: np.ndarray) -> DesignMatrix:
    """Intercept plus a single predictor column."""
    x = np.asarray(x, dtype=float).ravel()
    return DesignMatrix(
        values=np.column_stack([np.ones(x.shape[0]), x]), names=("intercept", "x")
    )


def design_with_columns(x: np.ndarray, extra: np.ndarray, extra_names) -> DesignMatrix:
    """Intercept, predictor, then extra columns (for augmented fits)."""
    base = design_from_predictor(x)
    extra = np.atleast_2d(np.asarray(extra, dtype=float))
    if extra.shape[0] != base.n:
        extra = extra.T
    if extra.shape[0] != base.n:
        raise DimensionMismatch("extra columns must have n rows")
    return DesignMatrix(
        values=np.column_stack([base.values, extra]),
        names=base.names + tuple(extra_names),
    )


@dataclass(frozen=True)
class OlsFit:
    """Least-squares fit with the pieces downstream consumers need."""

    design: DesignMatrix
    y: np.ndarray
    coefficients: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    rss: float
    q: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.design.n

    @property
    def k(self) -> int:
        return self.design.k

    @property
    def df_resid(self) -> int:
        return self.n - self.k

    @property
    def sigma2_hat(self) -> float:
        if self.df_resid <= 0:
            raise InvalidDegreesOfFreedom("no residual degrees of freedom")
        return self.rss / self.df_resid

    @property
    def leverage(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.q, self.q)


def ols_fit(design: DesignMatrix, y: np.ndarray) -> OlsFit:
    """QR least squares with a hard rank check."""
    y = np.asarray(y, dtype=float).ravel()
    X = design.values
    n, k = X.shape
    if y.shape[0] != n:
        raise DimensionMismatch("y length must match design rows")
    if n <= k:
        raise InvalidDegreesOfFreedom("need more observations than columns")
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    tol = max(n, k) * np.finfo(float).eps * (diag.max() if diag.size else 0.0)
    if diag.min() <= tol:
        raise RankDeficient("design matrix is rank deficient")
    coef = np.linalg.solve(r, q.T @ y)
    fitted = X @ coef
    resid = y - fitted
    rss = float(resid @ resid)
    return OlsFit(
        design=design,
        y=y,
        coefficients=coef,
        fitted=fitted,
        residuals=resid,
        rss=rss,
        q=q,
    )


@dataclass(frozen=True)
class ResidualOperator:
    """Projection onto the orthogonal complement of the design column space.

    Held in factored form: R v = v - Q (Q' v).
    """

    q: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def rank_deficit(self) -> int:
        return self.q.shape[1]

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.n:
            raise DimensionMismatch("vector length must match operator size")
        return v - self.q @ (self.q.T @ v)

    def diagonal(self) -> np.ndarray:
        return 1.0 - np.einsum("ij,ij->i", self.q, self.q)

    def matrix(self) -> np.ndarray:
        return np.eye(self.n) - self.q @ self.q.T


def residual_operator(design: DesignMatrix) -> ResidualOperator:
    X = design.values
    n, k = X.shape
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    tol = max(n, k) * np.finfo(float).eps * (diag.max() if diag.size else 0.0)
    if diag.size == 0 or diag.min() <= tol:
        raise RankDeficient("design matrix is rank deficient")
    return ResidualOperator(q=q)


def tail_probability(stat: float, dist: str, df1: float = 0.0, df2: float = 0.0) -> float:
    """Upper-tail probability for the reference distributions used here.

    `dist` is one of "f", "chisq", "normal" (one-sided upper) or
    "normal_two_sided".
    """
    stat = float(stat)
    if dist == "f":
        if df1 <= 0 or df2 <= 0:
            raise InvalidDegreesOfFreedom("F needs positive df1 and df2")
        if stat <= 0.0:
            return 1.0
        x = df2 / (df2 + df1 * stat)
        return reg_beta(df2 / 2.0, df1 / 2.0, x)
    if dist == "chisq":
        if df1 <= 0:
            raise InvalidDegreesOfFreedom("chi-square needs positive df")
        if stat <= 0.0:
            return 1.0
        return reg_gamma_q(df1 / 2.0, stat / 2.0)
    if dist == "normal":
        return normal_sf(stat)
    if dist == "normal_two_sided":
        return min(1.0, 2.0 * normal_sf(abs(stat)))
    raise ValueError(f"unknown distribution: {dist}")
