"""Evaluation records, visual p-values, attractiveness estimation, and
participant filtering.

An evaluation is one person's reading of one lineup: the panels they
picked, why, and how confident they were. A raw submission with no
panels picked means "nothing stands out" and is normalized to selecting
every panel, which is why stored selection sets are never empty.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from .errors import (
    AlphaRequired,
    InsufficientNullData,
    IoError,
    MissingReason,
    NoEvaluations,
    NonConvergent,
    OutOfRangeSelection,
)
from .kernels import poisson_binomial_tail
from .numerics import RandomStream
from .timeutil import utc_timestamp

UNIFORM_NULL = "UniformNull"
ALPHA_ADJUSTED = "AlphaAdjusted"
DEFAULT_REPLICATIONS = 100_000
_ALPHA_LO = 1e-3
_ALPHA_HI = 1e3
_UNIFORM_ALPHA_FLAG = 10.0


@dataclass(frozen=True)
class EvaluationRecord:
    lineup_id: str
    participant_id: str
    selections: frozenset
    reason: str
    rating: int
    submitted_at: str

    def contains(self, position: int) -> bool:
        return position in self.selections


@dataclass(frozen=True)
class VisualTestResult:
    lineup_id: str
    K: int
    c_obs: int
    p_value: float
    mode: str
    alpha: float | None = None
    mc_se: float | None = None


@dataclass(frozen=True)
class AlphaEstimate:
    value: float
    approximately_uniform: bool
    log_likelihood: float
    profile: tuple  # (alpha, log-likelihood) samples along the search grid
    n_lineups: int
    n_evaluations: int


def normalize_evaluation(
    *,
    lineup_id: str,
    participant_id: str,
    selections: Iterable[int],
    reason: str,
    rating: int,
    m: int,
    submitted_at: str | None = None,
) -> EvaluationRecord:
    """Validate a raw submission and apply the zero-selection rule."""
    picked = set()
    for s in selections:
        v = int(s)
        if v != s or not 1 <= v <= m:
            raise OutOfRangeSelection(f"selection {s!r} outside 1..{m}")
        picked.add(v)
    zero_selection = not picked
    if zero_selection:
        picked = set(range(1, m + 1))
    elif not str(reason).strip():
        raise MissingReason("a reason is required when panels are selected")
    rating = int(rating)
    if not 1 <= rating <= 5:
        raise ValueError("rating must be in 1..5")
    return EvaluationRecord(
        lineup_id=str(lineup_id),
        participant_id=str(participant_id),
        selections=frozenset(picked),
        reason=str(reason),
        rating=rating,
        submitted_at=submitted_at if submitted_at is not None else utc_timestamp(),
    )


def _success_count(evals, data_position: int) -> int:
    return sum(1 for e in evals if e.contains(data_position))


def _alpha_adjusted_pvalue(
    evals, data_position: int, m: int, c_obs: int, alpha: float,
    rng: RandomStream, replications: int,
):
    # Attractiveness model: panel weights theta ~ Dirichlet(alpha * 1_m)
    # per replication; an evaluation picking s panels takes the top s of
    # Plackett-Luce scores, realized through Gumbel perturbations.
    # Full selections succeed with probability one and consume no draws,
    # so appending one leaves every other replication draw untouched.
    sizes = [len(e.selections) for e in evals]
    active = [i for i, s in enumerate(sizes) if s < m]
    base = sum(1 for s in sizes if s == m)
    hits = np.zeros(replications, dtype=np.int64) + base
    theta_rng = rng.child(0).generator
    log_theta = np.log(
        theta_rng.dirichlet(np.full(m, float(alpha)), size=replications)
    )
    for i in active:
        g = rng.child(i + 1).generator.gumbel(size=(replications, m))
        scores = log_theta + g
        target = scores[:, data_position - 1]
        rank = np.sum(scores > target[:, None], axis=1)  # 0-based
        hits += rank < sizes[i]
    exceed = int(np.sum(hits >= c_obs))
    p = (exceed + 1.0) / (replications + 1.0)
    se = math.sqrt(p * (1.0 - p) / replications)
    return min(1.0, p), se


def visual_pvalue(
    evals,
    data_position: int,
    m: int,
    mode: str = UNIFORM_NULL,
    alpha: float | None = None,
    rng: RandomStream | None = None,
    replications: int = DEFAULT_REPLICATIONS,
) -> VisualTestResult:
    """Probability of at least c_obs data-plot picks under the null.

    UniformNull treats each evaluation picking s panels as an
    independent success with probability s/m and evaluates the
    Poisson-binomial tail exactly. AlphaAdjusted replaces uniformity
    with a Dirichlet(alpha) attractiveness draw per replication and
    estimates the tail by seeded Monte Carlo.
    """
    evals = list(evals)
    if not evals:
        raise NoEvaluations("visual p-value needs at least one evaluation")
    ids = {e.lineup_id for e in evals}
    if len(ids) > 1:
        raise ValueError(f"evaluations span multiple lineups: {sorted(ids)}")
    if not 1 <= data_position <= m:
        raise ValueError("data_position must lie in 1..m")
    for e in evals:
        if not e.selections:
            raise ValueError("evaluation has an empty selection set")
        if max(e.selections) > m or min(e.selections) < 1:
            raise OutOfRangeSelection("selections outside 1..m")

    k = len(evals)
    c_obs = _success_count(evals, data_position)
    if mode == UNIFORM_NULL:
        probs = [len(e.selections) / m for e in evals]
        p = poisson_binomial_tail(probs, c_obs)
        return VisualTestResult(
            lineup_id=evals[0].lineup_id, K=k, c_obs=c_obs, p_value=p,
            mode=mode,
        )
    if mode == ALPHA_ADJUSTED:
        if alpha is None or not alpha > 0:
            raise AlphaRequired("AlphaAdjusted mode needs a positive alpha")
        if rng is None:
            raise ValueError("AlphaAdjusted mode needs an explicit random stream")
        if replications < DEFAULT_REPLICATIONS:
            raise ValueError(f"at least {DEFAULT_REPLICATIONS} replications required")
        p, se = _alpha_adjusted_pvalue(
            evals, data_position, m, c_obs, float(alpha), rng, replications
        )
        return VisualTestResult(
            lineup_id=evals[0].lineup_id, K=k, c_obs=c_obs, p_value=p,
            mode=mode, alpha=float(alpha), mc_se=se,
        )
    raise ValueError(f"unknown mode: {mode!r}")


def _dm_log_likelihood(alpha: float, counts: np.ndarray, totals: np.ndarray) -> float:
    # symmetric Dirichlet-multinomial, constants in the data dropped
    m = counts.shape[1]
    return float(
        np.sum(gammaln(m * alpha) - gammaln(m * alpha + totals))
        + np.sum(gammaln(alpha + counts) - gammaln(alpha))
    )


def estimate_alpha(evals: Iterable[EvaluationRecord], m: int) -> AlphaEstimate:
    """Maximum-likelihood attractiveness concentration from null lineups.

    Selections are aggregated into per-panel counts per lineup and fit
    with a symmetric Dirichlet-multinomial. A likelihood that keeps
    rising toward large alpha means the counts are indistinguishable
    from uniform; the estimate is then clamped and flagged.
    """
    groups: dict[str, list[EvaluationRecord]] = {}
    for e in evals:
        groups.setdefault(e.lineup_id, []).append(e)
    usable = {k: v for k, v in groups.items() if len(v) >= 2}
    if len(usable) < 2:
        raise InsufficientNullData(
            "need at least 2 null lineups with at least 2 evaluations each"
        )

    counts = np.zeros((len(usable), m))
    for row, (_, evs) in enumerate(sorted(usable.items())):
        for e in evs:
            for s in e.selections:
                if not 1 <= s <= m:
                    raise OutOfRangeSelection(f"selection {s} outside 1..{m}")
                counts[row, s - 1] += 1.0
    totals = counts.sum(axis=1)

    grid = np.exp(np.linspace(math.log(_ALPHA_LO), math.log(_ALPHA_HI), 61))
    lls = np.array([_dm_log_likelihood(a, counts, totals) for a in grid])
    best = int(np.argmax(lls))
    profile = tuple((float(a), float(l)) for a, l in zip(grid, lls))
    n_evals = sum(len(v) for v in usable.values())

    if best == 0:
        raise NonConvergent("likelihood is maximized at the lower search bound")
    if best == len(grid) - 1:
        # monotone toward the multinomial limit: effectively uniform
        return AlphaEstimate(
            value=float(grid[-1]), approximately_uniform=True,
            log_likelihood=float(lls[-1]), profile=profile,
            n_lineups=len(usable), n_evaluations=n_evals,
        )

    lo, hi = math.log(grid[best - 1]), math.log(grid[best + 1])
    res = minimize_scalar(
        lambda t: -_dm_log_likelihood(math.exp(t), counts, totals),
        bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-10},
    )
    if not res.success:
        raise NonConvergent("one-dimensional likelihood search failed")
    value = float(math.exp(res.x))
    return AlphaEstimate(
        value=value,
        approximately_uniform=value >= _UNIFORM_ALPHA_FLAG,
        log_likelihood=float(-res.fun),
        profile=profile,
        n_lineups=len(usable),
        n_evaluations=n_evals,
    )


def filter_participants(records, attention_bundles) -> set:
    """Participants who identified the data plot on some attention check.

    A participant with no attention-check evaluation at all is dropped.
    Zero-selections normalize to the full panel set and therefore pass;
    that consequence is intentional and follows from the normalization
    rule.
    """
    positions: dict[str, int] = {}
    for b in attention_bundles:
        if isinstance(b, tuple):
            positions[str(b[0])] = int(b[1])
        else:
            positions[b.id] = b.data_position
    kept = set()
    for r in records:
        pos = positions.get(r.lineup_id)
        if pos is not None and r.contains(pos):
            kept.add(r.participant_id)
    return kept


def append_evaluation(path, record: EvaluationRecord) -> None:
    """Append one record to a newline-delimited UTF-8 evaluation log."""
    line = json.dumps(
        {
            "lineup_id": record.lineup_id,
            "participant_id": record.participant_id,
            "selections": sorted(record.selections),
            "reason": record.reason,
            "rating": record.rating,
            "timestamp": record.submitted_at,
        },
        ensure_ascii=False,
        sort_keys=True,
    )
    try:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
    except OSError as exc:
        raise IoError(f"could not append to evaluation log {path}") from exc


def read_evaluation_log(path) -> list[EvaluationRecord]:
    """Parse an evaluation log written by append_evaluation."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"could not read evaluation log {path}") from exc
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
            records.append(
                EvaluationRecord(
                    lineup_id=str(raw["lineup_id"]),
                    participant_id=str(raw["participant_id"]),
                    selections=frozenset(int(s) for s in raw["selections"]),
                    reason=str(raw["reason"]),
                    rating=int(raw["rating"]),
                    submitted_at=str(raw["timestamp"]),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise IoError(f"evaluation log line {lineno} is malformed") from exc
        if not records[-1].selections:
            raise IoError(f"evaluation log line {lineno} has no selections")
    return records
