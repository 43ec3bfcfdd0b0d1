"""Lineup assembly and bundle persistence.

A lineup embeds the observed residual plot among null plots whose
residuals are exchangeable with it under a correct model. The position
of the observed plot is the bundle's secret: it lives only in the
bundle manifest, never in any rendered asset.

Bundles are reproducible from two integers. The dataset seed pins the
simulated data and the bundle seed pins the null draws and placement,
so any asset can be regenerated byte-identically from the manifest.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .effect_size import effect_size, inputs_from_dataset
from .errors import CorruptManifest, IoError
from .numerics import RandomStream, ols_fit
from .render import render_lineup
from .timeutil import utc_timestamp
from .simulate import (
    ExperimentFactors,
    SimulatedDataset,
    gen_null_residuals,
    generate_seeded,
)

DEFAULT_M = 20
BUNDLE_MANIFEST = "manifest.json"
BUNDLE_GRID_SVG = "lineup.svg"
BUNDLE_CSV = "data.csv"
_BUNDLE_FORMAT = "lineup-bundle/1"
_ATTENTION_MIN_LOG_E = 5.0
_ATTENTION_RETRIES = 32

# factor settings loud enough that an honest participant cannot miss them
_ATTENTION_FACTORS = {
    "nonlinear": ExperimentFactors(departure="nonlinear", n=300, j=2, sigma=0.25),
    "heteroskedastic": ExperimentFactors(
        departure="heteroskedastic", n=300, a=1, b=64.0
    ),
}


@dataclass(frozen=True)
class LineupPanel:
    fitted: np.ndarray
    residuals: np.ndarray


@dataclass(frozen=True)
class LineupBundle:
    id: str
    m: int
    panels: tuple  # LineupPanel per position, 1-based display order
    data_position: int  # secret
    seed: int  # bundle seed: null draws and placement
    dataset_seed: int
    factors: ExperimentFactors
    attention_check: bool
    created_at: str
    x: np.ndarray
    y: np.ndarray


def _bundle_id(factors, dataset_seed, bundle_seed, m, data_position) -> str:
    key = json.dumps(
        {
            "factors": factors.to_dict(),
            "dataset_seed": dataset_seed,
            "seed": bundle_seed,
            "m": m,
            "position": data_position,
        },
        sort_keys=True,
    )
    return "lu" + hashlib.sha256(key.encode()).hexdigest()[:12]


def make_lineup_seeded(
    ds: SimulatedDataset,
    m: int,
    bundle_seed: int,
    data_position: int | None = None,
    attention_check: bool = False,
) -> LineupBundle:
    """Deterministic assembly from an explicit bundle seed.

    Null panels are indexed by ordinal, not by display position, so two
    bundles sharing a seed but placed differently show the same panel
    contents in permuted slots.
    """
    if m < 2:
        raise ValueError("a lineup needs at least 2 panels")
    fit = ols_fit(ds.design(), ds.y)
    stream = RandomStream(bundle_seed)
    if data_position is None:
        data_position = int(stream.child(0).generator.integers(1, m + 1))
    if not 1 <= data_position <= m:
        raise ValueError("data_position must lie in 1..m")

    nulls = [
        gen_null_residuals(ds.design(), fit.rss, stream.child(k)).values
        for k in range(1, m)
    ]
    panels = []
    ordinal = 0
    for pos in range(1, m + 1):
        if pos == data_position:
            panels.append(LineupPanel(fitted=fit.fitted, residuals=fit.residuals))
        else:
            panels.append(LineupPanel(fitted=fit.fitted, residuals=nulls[ordinal]))
            ordinal += 1

    return LineupBundle(
        id=_bundle_id(ds.factors, ds.seed, bundle_seed, m, data_position),
        m=m,
        panels=tuple(panels),
        data_position=data_position,
        seed=bundle_seed,
        dataset_seed=ds.seed,
        factors=ds.factors,
        attention_check=attention_check,
        created_at=utc_timestamp(),
        x=ds.x,
        y=ds.y,
    )


def make_lineup(
    ds: SimulatedDataset,
    m: int = DEFAULT_M,
    rng: RandomStream | None = None,
    attention_check: bool = False,
) -> LineupBundle:
    """Fit y ~ x, draw m-1 null panels, place the data panel uniformly."""
    if rng is None:
        raise ValueError("make_lineup requires an explicit random stream")
    bundle_seed = int(rng.generator.integers(0, 2**63 - 1))
    return make_lineup_seeded(ds, m, bundle_seed, attention_check=attention_check)


def make_attention_bundle(
    rng: RandomStream, m: int = DEFAULT_M, departure: str = "nonlinear"
) -> LineupBundle:
    """An ordinary bundle with an amplified signal, flagged for filtering."""
    factors = _ATTENTION_FACTORS.get(departure)
    if factors is None:
        raise ValueError(f"unknown departure: {departure!r}")
    for _ in range(_ATTENTION_RETRIES):
        ds_seed = int(rng.generator.integers(0, 2**63 - 1))
        ds = generate_seeded(factors, ds_seed)
        if effect_size(inputs_from_dataset(ds)).log_value >= _ATTENTION_MIN_LOG_E:
            return make_lineup(ds, m, rng, attention_check=True)
    raise RuntimeError("could not draw an amplified dataset; factor levels too weak")


def _csv_text(x: np.ndarray, y: np.ndarray) -> str:
    lines = ["x,y"]
    for xi, yi in zip(x, y):
        lines.append(f"{format(float(xi), '.17g')},{format(float(yi), '.17g')}")
    return "\n".join(lines) + "\n"


def _panel_name(index: int, m: int) -> str:
    width = max(2, len(str(m)))
    return f"panel_{index:0{width}d}.svg"


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.rename(path)


def _assets(bundle: LineupBundle) -> dict[str, str]:
    rendering = render_lineup(bundle)
    out = {BUNDLE_GRID_SVG: rendering.svg, BUNDLE_CSV: _csv_text(bundle.x, bundle.y)}
    for pr in rendering.panels:
        out[_panel_name(pr.panel_index, bundle.m)] = pr.svg
    return out


def save_bundle(bundle: LineupBundle, directory) -> Path:
    """Write manifest, grid and panel SVGs, and the source data CSV."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        assets = _assets(bundle)
        for name, text in assets.items():
            _atomic_write(directory / name, text)
        manifest = {
            "format": _BUNDLE_FORMAT,
            "id": bundle.id,
            "m": bundle.m,
            "seed": bundle.seed,
            "dataset_seed": bundle.dataset_seed,
            "factors": bundle.factors.to_dict(),
            "data_position": bundle.data_position,
            "attention_check": bundle.attention_check,
            "created_at": bundle.created_at,
            "checksums": {name: _digest(text) for name, text in sorted(assets.items())},
        }
        _atomic_write(directory / BUNDLE_MANIFEST, json.dumps(manifest, indent=1))
    except OSError as exc:
        raise IoError(f"could not write bundle to {directory}") from exc
    return directory


def load_bundle(directory) -> LineupBundle:
    """Rebuild the bundle from its manifest, verifying every asset.

    Assets are regenerated from the manifest seeds and compared against
    the recorded checksums; a missing file is rewritten, a mismatched
    one raises CorruptManifest.
    """
    directory = Path(directory)
    path = directory / BUNDLE_MANIFEST
    if not path.is_file():
        raise IoError(f"no bundle manifest at {path}")
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptManifest("bundle manifest is unreadable") from exc
    try:
        factors = ExperimentFactors.from_dict(manifest["factors"])
        bundle = make_lineup_seeded(
            generate_seeded(factors, int(manifest["dataset_seed"])),
            int(manifest["m"]),
            int(manifest["seed"]),
            data_position=int(manifest["data_position"]),
            attention_check=bool(manifest["attention_check"]),
        )
        recorded = dict(manifest["checksums"])
        created_at = manifest["created_at"]
        stored_id = manifest["id"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptManifest("bundle manifest is missing required fields") from exc
    bundle = replace(bundle, created_at=created_at)
    if bundle.id != stored_id:
        raise CorruptManifest("bundle id does not match its manifest")

    assets = _assets(bundle)
    if set(assets) != set(recorded):
        raise CorruptManifest("manifest checksum listing does not match the layout")
    for name, text in assets.items():
        want = recorded[name]
        if _digest(text) != want:
            raise CorruptManifest(f"regenerated {name} does not match its checksum")
        fpath = directory / name
        if not fpath.is_file():
            _atomic_write(fpath, text)
        elif _digest(fpath.read_text()) != want:
            raise CorruptManifest(f"{name} does not match its recorded checksum")
    return bundle
