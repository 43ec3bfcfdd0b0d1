"""Kullback-Leibler effect size for residual diagnostics.

Quantifies how far the residual distribution implied by the true
generating process sits from the one assumed by a correctly specified
homoskedastic fit. E = 0 when the fitted model is right; omitted
regression structure or variance heterogeneity push it up. Power
curves are indexed by ln E.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, LeverageOne, SingularQuadraticForm
from .numerics import DesignMatrix, ResidualOperator, residual_operator

_EIG_CUTOFF = 1e-10
_RANGE_TOL = 1e-6
_LEVERAGE_TOL = 1e-12


@dataclass(frozen=True)
class EffectSizeInputs:
    """True-model description against an assumed homoskedastic fit.

    variances is the diagonal of the true error covariance; z holds
    any terms omitted from the fitted design (n x q, q may be 0) and
    beta_z their coefficients.
    """

    design: DesignMatrix
    variances: np.ndarray
    sigma2: float
    z: np.ndarray
    beta_z: np.ndarray

    def __post_init__(self):
        n = self.design.values.shape[0]
        v = np.asarray(self.variances, dtype=float)
        z = np.asarray(self.z, dtype=float)
        b = np.asarray(self.beta_z, dtype=float)
        if v.ndim != 1 or v.shape[0] != n:
            raise DimensionMismatch("variances must be a length-n vector")
        if np.any(v <= 0.0):
            raise ValueError("all true error variances must be positive")
        if not self.sigma2 > 0.0:
            raise ValueError("sigma2 must be positive")
        if z.ndim != 2 or z.shape[0] != n:
            raise DimensionMismatch("z must be an n x q matrix")
        if b.ndim != 1 or b.shape[0] != z.shape[1]:
            raise DimensionMismatch("beta_z length must match z columns")
        object.__setattr__(self, "variances", v)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "beta_z", b)


@dataclass(frozen=True)
class EffectSize:
    value: float
    log_value: float  # -inf when value is not positive


def inputs_from_dataset(ds) -> EffectSizeInputs:
    """Build effect-size inputs from a simulated dataset's truth fields."""
    return EffectSizeInputs(
        design=ds.design(),
        variances=ds.variances,
        sigma2=ds.sigma2,
        z=ds.z_design,
        beta_z=ds.beta_z,
    )


def _residual_covariance_diagonal(op: ResidualOperator, v: np.ndarray) -> np.ndarray:
    # diag(RVR') in O(nk^2): row i of R is e_i - Q q_i', so the i-th
    # diagonal entry is v_i (1 - 2 h_i) + q_i' (Q'VQ) q_i.
    q = op.q
    h = 1.0 - op.diagonal()
    qtvq = q.T @ (v[:, None] * q)
    quad = np.einsum("ij,jk,ik->i", q, qtvq, q)
    return v * (1.0 - 2.0 * h) + quad


def _check_coverage(target: np.ndarray, captured: np.ndarray) -> None:
    scale = float(np.linalg.norm(target))
    miss = float(np.linalg.norm(target - captured))
    if miss > _RANGE_TOL * scale:
        raise SingularQuadraticForm(
            "mean shift has a component outside the range of the "
            "residual covariance"
        )


def _quadratic_form_pinv(mu: np.ndarray, v: np.ndarray, op: ResidualOperator) -> float:
    # Moore-Penrose route: eigendecompose the full n x n matrix RVR',
    # drop eigenvalues below 1e-10 of the largest, and require mu to
    # live in the retained span.
    r = op.matrix()
    m = r @ (v[:, None] * r)
    w, u = np.linalg.eigh(m)
    if w[-1] <= 0.0:
        raise SingularQuadraticForm("residual covariance has no positive spectrum")
    keep = w > _EIG_CUTOFF * w[-1]
    coords = u[:, keep].T @ mu
    _check_coverage(mu, u[:, keep] @ coords)
    return float(np.sum(coords**2 / w[keep]))

def _quadratic_form_subspace(mu: np.ndarray, v: np.ndarray, op: ResidualOperator) -> float:
    # Independent route: an orthonormal basis B for the residual space
    # turns RVR' into B (B'VB) B', so the form reduces to solving with
    # the (n-k) x (n-k) matrix B'VB.
    q = op.q
    u, _, _ = np.linalg.svd(q, full_matrices=True)
    basis = u[:, q.shape[1]:]
    c = basis.T @ mu
    _check_coverage(mu, basis @ c)
    a = basis.T @ (v[:, None] * basis)
    w, vecs = np.linalg.eigh(a)
    if w[-1] <= 0.0:
        raise SingularQuadraticForm("residual covariance has no positive spectrum")
    keep = w > _EIG_CUTOFF * w[-1]
    coords = vecs[:, keep].T @ c
    _check_coverage(c, vecs[:, keep] @ coords)
    return float(np.sum(coords**2 / w[keep]))


_QF_ROUTES = {
    "pinv": _quadratic_form_pinv,
    "subspace": _quadratic_form_subspace,
}


def effect_size(inputs: EffectSizeInputs, qf_method: str = "pinv") -> EffectSize:
    """Evaluate the divergence between true and assumed residual laws.

    E = 1/2 ( sum log(d_i / (sigma2 r_i)) - n + sum(sigma2 r_i / d_i)
              + mu' (RVR')+ mu )
    with d = diag(RVR'), r = diag(R), mu = R z beta_z.

    Raises LeverageOne when some diag(R) entry vanishes (a leverage-one
    observation leaves no residual information) and SingularQuadraticForm
    when the mean shift escapes the range of the residual covariance.
    """
    if qf_method not in _QF_ROUTES:
        raise ValueError(f"unknown qf_method: {qf_method!r}")
    op = residual_operator(inputs.design)
    n = inputs.design.values.shape[0]
    r_diag = op.diagonal()
    if np.any(r_diag <= _LEVERAGE_TOL):
        raise LeverageOne("design contains a leverage-one observation")
    v = inputs.variances
    d = _residual_covariance_diagonal(op, v)
    if np.any(d <= 0.0):
        raise LeverageOne("residual covariance diagonal is not positive")
    assumed = inputs.sigma2 * r_diag

    log_ratio = float(np.sum(np.log(d) - np.log(assumed)))
    trace_term = float(np.sum(assumed / d))

    quad = 0.0
    if inputs.z.shape[1] > 0:
        shift = inputs.z @ inputs.beta_z
        mu = op.apply(shift)
        # a shift collinear with the design projects to numerical dust;
        # treat it as exactly zero rather than feeding noise to the form
        floor = _LEVERAGE_TOL * max(float(np.linalg.norm(shift)), 1.0)
        if float(np.linalg.norm(mu)) > floor:
            quad = _QF_ROUTES[qf_method](mu, v, op)

    value = 0.5 * (log_ratio - float(n) + trace_term + quad)
    log_value = math.log(value) if value > 0.0 else -math.inf
    return EffectSize(value=value, log_value=log_value)
