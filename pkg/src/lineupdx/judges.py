"""Deterministic scripted evaluators for headless pipeline runs.

A scripted judge scores every panel of a lineup by refitting the panel's
implied response on the bundle's predictor and taking a misspecification
test statistic as the "suspicion" signal, then selects the panel where
that signal is strongest.  On null lineups the winning panel is
effectively uniform over positions, so downstream visual tests keep
their nominal size; on strong departures the data panel wins.
"""

from __future__ import annotations

import numpy as np

from .conventional import bp_test, reset_test
from .numerics import design_from_predictor, ols_fit
from .visual import EvaluationRecord, normalize_evaluation

JUDGE_STATISTICS = ("reset", "bp")

# dominance ratio of best over second-best signal -> confidence rating
_RATING_STEPS = ((8.0, 5), (4.0, 4), (2.0, 3), (1.25, 2))


def panel_signals(bundle, statistic: str = "reset") -> np.ndarray:
    """Per-panel test statistics, in panel order."""
    if statistic not in JUDGE_STATISTICS:
        raise ValueError(f"unknown judge statistic: {statistic}")
    design = design_from_predictor(bundle.x)
    signals = []
    for panel in bundle.panels:
        fit = ols_fit(design, panel.fitted + panel.residuals)
        result = reset_test(fit) if statistic == "reset" else bp_test(fit)
        signals.append(result.statistic)
    return np.asarray(signals, dtype=float)


def _rating(signals: np.ndarray) -> int:
    top, second = np.sort(signals)[-2:][::-1]
    ratio = top / second if second > 0 else float("inf")
    for cut, rating in _RATING_STEPS:
        if ratio >= cut:
            return rating
    return 1


def judge_bundle(bundle, participant_id: str,
                 statistic: str = "reset") -> EvaluationRecord:
    """Evaluate one lineup: select the panel with the strongest signal."""
    signals = panel_signals(bundle, statistic)
    pick = int(np.argmax(signals)) + 1
    return normalize_evaluation(
        lineup_id=bundle.id,
        participant_id=participant_id,
        selections=[pick],
        reason=f"panel {pick} shows the strongest {statistic} signal",
        rating=_rating(signals),
        m=bundle.m,
    )
