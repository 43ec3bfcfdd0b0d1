"""Scripted judge behavior: sharp on departures, uniform on nulls."""

import pytest

from lineupdx.judges import judge_bundle, panel_signals
from lineupdx.lineup import make_lineup
from lineupdx.numerics import RandomStream
from lineupdx.simulate import ExperimentFactors, generate_seeded
from lineupdx.visual import visual_pvalue


def bundle(factors, ds_seed, rng_seed):
    return make_lineup(generate_seeded(factors, ds_seed), 20,
                       RandomStream(rng_seed))


class TestJudge:
    def test_finds_nonlinear_data_panel(self):
        b = bundle(ExperimentFactors(departure="nonlinear", n=300, j=2,
                                     sigma=0.25), 11, 3)
        ev = judge_bundle(b, "bot1")
        assert ev.selections == frozenset({b.data_position})
        assert ev.rating == 5
        assert ev.reason

    def test_finds_heteroskedastic_data_panel_with_bp(self):
        b = bundle(ExperimentFactors(departure="heteroskedastic", n=300,
                                     a=1, b=64.0), 12, 4)
        ev = judge_bundle(b, "bot1", statistic="bp")
        assert ev.selections == frozenset({b.data_position})

    def test_signals_cover_all_panels(self):
        b = bundle(ExperimentFactors(departure="nonlinear", n=50, j=3,
                                     sigma=1.0), 5, 6)
        signals = panel_signals(b)
        assert signals.shape == (20,)
        assert (signals >= 0).all()

    def test_deterministic_given_bundle(self):
        b = bundle(ExperimentFactors(departure="nonlinear", n=100, j=3,
                                     sigma=1.0), 8, 9)
        a1 = judge_bundle(b, "bot1")
        a2 = judge_bundle(b, "bot1")
        assert (a1.selections, a1.reason, a1.rating) == \
               (a2.selections, a2.reason, a2.rating)

    def test_unknown_statistic(self):
        b = bundle(ExperimentFactors(departure="nonlinear", n=50, j=2,
                                     sigma=1.0), 1, 2)
        with pytest.raises(ValueError):
            judge_bundle(b, "bot1", statistic="anova")

    def test_null_rejection_rate_bounded(self):
        # a judge that always picks something must not inflate the visual
        # test's size on null lineups
        factors = ExperimentFactors(departure="heteroskedastic", n=50,
                                    a=0, b=1.0)
        rejections = 0
        n = 200
        for s in range(n):
            b = bundle(factors, 1000 + s, 5000 + s)
            ev = judge_bundle(b, "bot1")
            result = visual_pvalue([ev], b.data_position, 20)
            rejections += result.p_value <= 0.05
        assert rejections / n <= 0.06
