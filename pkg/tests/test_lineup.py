"""Lineup assembly, rendering, and persistence checks."""

import json
import os
import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from scipy import stats

from lineupdx.conventional import test_battery as run_battery
from lineupdx.effect_size import effect_size, inputs_from_dataset
from lineupdx.errors import CorruptManifest, IoError
from lineupdx.lineup import (
    load_bundle,
    make_attention_bundle,
    make_lineup,
    make_lineup_seeded,
    save_bundle,
)
from lineupdx.numerics import RandomStream, ols_fit
from lineupdx.render import render_lineup
from lineupdx.simulate import ExperimentFactors, generate_seeded

FACTORS = ExperimentFactors(departure="nonlinear", n=100, j=3, sigma=1.5)


@pytest.fixture(scope="module")
def dataset():
    return generate_seeded(FACTORS, 42)


@pytest.fixture(scope="module")
def bundle(dataset):
    return make_lineup(dataset, 20, RandomStream(7))


class TestAssembly:
    def test_shape_and_secret(self, dataset, bundle):
        assert bundle.m == 20
        assert len(bundle.panels) == 20
        assert 1 <= bundle.data_position <= 20
        fit = ols_fit(dataset.design(), dataset.y)
        data_panel = bundle.panels[bundle.data_position - 1]
        assert np.array_equal(data_panel.residuals, fit.residuals)
        # every panel shares the same fitted abscissa
        for p in bundle.panels:
            assert np.array_equal(p.fitted, fit.fitted)

    def test_null_panels_match_data_rss(self, bundle):
        rss = [float(p.residuals @ p.residuals) for p in bundle.panels]
        ref = rss[bundle.data_position - 1]
        for v in rss:
            assert v == pytest.approx(ref, rel=1e-8)

    def test_null_panels_orthogonal_to_design(self, dataset, bundle):
        xmat = dataset.design().values
        for i, p in enumerate(bundle.panels, start=1):
            if i == bundle.data_position:
                continue
            moments = xmat.T @ p.residuals
            scale = float(np.sqrt(p.residuals @ p.residuals))
            assert np.max(np.abs(moments)) < 1e-8 * max(scale, 1.0)

    def test_determinism_from_seeds(self, dataset):
        a = make_lineup_seeded(dataset, 20, 314159)
        b = make_lineup_seeded(dataset, 20, 314159)
        assert a.id == b.id
        assert a.data_position == b.data_position
        for p, q in zip(a.panels, b.panels):
            assert np.array_equal(p.residuals, q.residuals)

    def test_position_uniform_over_seeds(self):
        ds = generate_seeded(
            ExperimentFactors(departure="nonlinear", n=12, j=2, sigma=1.0), 5)
        counts = np.zeros(20, dtype=int)
        for seed in range(2000):
            counts[make_lineup_seeded(ds, 20, seed).data_position - 1] += 1
        assert stats.chisquare(counts).pvalue > 0.001

    def test_null_panel_battery_uniform(self):
        # null panels are exchangeable draws regardless of the data's
        # departure; their battery p-values must look uniform in aggregate
        ds = generate_seeded(
            ExperimentFactors(departure="heteroskedastic", n=100, a=1, b=16.0), 9)
        d = ds.design()
        ps = {"RESET": [], "BP": [], "SW": []}
        for seed in range(120):
            b = make_lineup_seeded(ds, 20, seed)
            k = 1 if b.data_position != 1 else 2
            panel = b.panels[k - 1]
            fit = ols_fit(d, panel.fitted + panel.residuals)
            for r in run_battery(fit):
                ps[r.test].append(r.p_value)
        for test, values in ps.items():
            assert stats.kstest(values, "uniform").pvalue > 0.01, test

    def test_small_m(self, dataset):
        b = make_lineup(dataset, 2, RandomStream(1))
        assert b.m == 2 and len(b.panels) == 2
        with pytest.raises(ValueError):
            make_lineup(dataset, 1, RandomStream(1))

    def test_forced_position_validated(self, dataset):
        with pytest.raises(ValueError):
            make_lineup_seeded(dataset, 20, 1, data_position=21)

    def test_timestamp_honors_source_date_epoch(self, dataset, monkeypatch):
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
        b = make_lineup_seeded(dataset, 20, 1)
        assert b.created_at == "1970-01-01T00:00:00Z"


class TestAttentionChecks:
    @pytest.mark.parametrize("departure", ["nonlinear", "heteroskedastic"])
    def test_amplified_and_flagged(self, departure):
        b = make_attention_bundle(RandomStream(99), departure=departure)
        assert b.attention_check
        ds = generate_seeded(b.factors, b.dataset_seed)
        assert effect_size(inputs_from_dataset(ds)).log_value >= 5.0

    def test_unknown_departure(self):
        with pytest.raises(ValueError):
            make_attention_bundle(RandomStream(1), departure="outliers")


def _panel_groups(svg):
    return re.findall(r'<g class="panel"[^>]*>\n(.*?)\n</g>', svg, re.S)


def _geometry(body):
    # panel content minus its number label
    return "\n".join(l for l in body.split("\n") if not l.startswith("<text"))


class TestRendering:
    def test_well_formed_grid(self, bundle):
        r = render_lineup(bundle)
        ET.fromstring(r.svg)
        assert len(_panel_groups(r.svg)) == 20
        assert len(r.panels) == 20
        for pr in r.panels:
            ET.fromstring(pr.svg)

    def test_reference_line_and_labels_only(self, bundle):
        r = render_lineup(bundle)
        for idx, pr in enumerate(r.panels, start=1):
            assert pr.svg.count('class="zeroline"') == 1
            texts = re.findall(r"<text[^>]*>([^<]*)</text>", pr.svg)
            assert texts == [str(idx)]

    def test_shared_scales(self, bundle):
        # the zero line must land at the same pixel height in every panel
        r = render_lineup(bundle)
        heights = {
            re.search(r'class="zeroline" x1="1" y1="([0-9.]+)"', pr.svg).group(1)
            for pr in r.panels
        }
        assert len(heights) == 1

    def test_no_information_leak(self):
        # a short numeric seed would collide with coordinate digits, so
        # use distinctive values for the substring search
        ds = generate_seeded(FACTORS, 982451653201)
        b = make_lineup_seeded(ds, 20, 739397133917)
        low = render_lineup(b).svg.lower()
        for needle in ("data", "seed", "sigma", "departure", "nonlinear",
                       "heteroskedastic", b.id.lower(), "982451653201",
                       "739397133917"):
            assert needle not in low, needle

    def test_deterministic(self, bundle):
        assert render_lineup(bundle).svg == render_lineup(bundle).svg

    def test_position_change_permutes_panels(self, dataset):
        a = make_lineup_seeded(dataset, 20, 555, data_position=3)
        b = make_lineup_seeded(dataset, 20, 555, data_position=11)
        ga = sorted(_geometry(g) for g in _panel_groups(render_lineup(a).svg))
        gb = sorted(_geometry(g) for g in _panel_groups(render_lineup(b).svg))
        assert ga == gb
        assert render_lineup(a).svg != render_lineup(b).svg


class TestPersistence:
    def test_round_trip(self, bundle, tmp_path):
        save_bundle(bundle, tmp_path)
        names = sorted(p.name for p in tmp_path.iterdir())
        assert "manifest.json" in names and "lineup.svg" in names
        assert "data.csv" in names and "panel_20.svg" in names
        got = load_bundle(tmp_path)
        assert got.id == bundle.id
        assert got.m == bundle.m
        assert got.data_position == bundle.data_position
        assert got.seed == bundle.seed
        assert got.dataset_seed == bundle.dataset_seed
        assert got.factors == bundle.factors
        assert got.attention_check == bundle.attention_check
        assert got.created_at == bundle.created_at
        assert np.array_equal(got.x, bundle.x)
        assert np.array_equal(got.y, bundle.y)
        for p, q in zip(got.panels, bundle.panels):
            assert np.array_equal(p.residuals, q.residuals)

    def test_secret_only_in_manifest(self, bundle, tmp_path):
        save_bundle(bundle, tmp_path)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["data_position"] == bundle.data_position
        for p in tmp_path.iterdir():
            if p.name == "manifest.json":
                continue
            assert "position" not in p.read_text()

    def test_missing_panel_regenerated(self, bundle, tmp_path):
        save_bundle(bundle, tmp_path)
        victim = tmp_path / "panel_07.svg"
        original = victim.read_text()
        os.remove(victim)
        load_bundle(tmp_path)
        assert victim.read_text() == original

    def test_tampered_panel_rejected(self, bundle, tmp_path):
        save_bundle(bundle, tmp_path)
        victim = tmp_path / "panel_03.svg"
        victim.write_text(victim.read_text().replace("0.7", "0.8", 1))
        with pytest.raises(CorruptManifest):
            load_bundle(tmp_path)

    def test_tampered_manifest_rejected(self, bundle, tmp_path):
        save_bundle(bundle, tmp_path)
        path = tmp_path / "manifest.json"
        manifest = json.loads(path.read_text())
        manifest["data_position"] = bundle.data_position % 20 + 1
        path.write_text(json.dumps(manifest))
        with pytest.raises(CorruptManifest):
            load_bundle(tmp_path)

    def test_tampered_checksum_rejected(self, bundle, tmp_path):
        save_bundle(bundle, tmp_path)
        path = tmp_path / "manifest.json"
        manifest = json.loads(path.read_text())
        manifest["checksums"]["lineup.svg"] = "0" * 64
        path.write_text(json.dumps(manifest))
        with pytest.raises(CorruptManifest):
            load_bundle(tmp_path)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(IoError):
            load_bundle(tmp_path)

    def test_garbled_manifest(self, tmp_path):
        (tmp_path / "manifest.json").write_text("{not json")
        with pytest.raises(CorruptManifest):
            load_bundle(tmp_path)

    def test_csv_matches_source_data(self, bundle, tmp_path):
        save_bundle(bundle, tmp_path)
        lines = (tmp_path / "data.csv").read_text().strip().split("\n")
        assert lines[0] == "x,y"
        xs = np.array([float(l.split(",")[0]) for l in lines[1:]])
        ys = np.array([float(l.split(",")[1]) for l in lines[1:]])
        assert np.array_equal(xs, bundle.x)
        assert np.array_equal(ys, bundle.y)
