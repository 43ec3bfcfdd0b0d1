"""Batch command-line entry point.

Every subcommand that writes an output directory drops a ``run.json``
manifest there: the command, the resolved flags, seed, tool version,
input paths, and a sha256 digest per output file.  The manifest contains
no wall-clock fields, so a rerun with the same flags (and, for artifacts
that embed timestamps, the same SOURCE_DATE_EPOCH) reproduces every byte.

Randomized subcommands require an explicit --seed; there is no implicit
time-based seeding anywhere.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__
from .conventional import bp_test, reset_test, test_battery
from .effect_size import effect_size, inputs_from_dataset
from .errors import LineupdxError, Separation, UsageError
from .lineup import (
    load_bundle,
    make_attention_bundle,
    make_lineup_seeded,
    save_bundle,
)
from .numerics import RandomStream, ols_fit
from .power import (
    DEFAULT_LEVEL,
    agreement_report,
    bootstrap_power,
    curves_csv_text,
    decision_from_visual,
    fit_power_curve,
    mc_power,
    power_chart,
    records_csv_text,
)
from .simulate import (
    GRID_N,
    PREDICTOR_DISTS,
    ExperimentFactors,
    experiment_grid,
    generate,
    generate_seeded,
    load_dataset,
    save_dataset,
)
from .visual import filter_participants, read_evaluation_log, visual_pvalue

OUT_ENV = "LINEUPDX_OUT"
TOKEN_ENV = "LINEUPDX_TOKEN"

RUN_MANIFEST = "run.json"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolve_out(args, required: bool = True) -> Path | None:
    out = args.out or os.environ.get(OUT_ENV)
    if out is None:
        if required:
            raise UsageError(
                f"output directory required: pass -o or set {OUT_ENV}")
        return None
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _json_float(v: float):
    return None if v == float("-inf") else v


def _write_run_manifest(out: Path, command: str, args, inputs=()) -> None:
    # "out" is where the manifest itself lives; recording it would make
    # otherwise-identical runs into different directories diverge.
    flags = {
        k: _jsonable(v)
        for k, v in sorted(vars(args).items())
        if k not in ("func", "command", "out")
    }
    outputs = {
        str(p.relative_to(out)): _sha256(p)
        for p in sorted(out.rglob("*"))
        if p.is_file() and p.name != RUN_MANIFEST
    }
    manifest = {
        "command": command,
        "flags": flags,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "inputs": [str(i) for i in inputs],
        "outputs": outputs,
    }
    text = json.dumps(manifest, indent=1, sort_keys=True) + "\n"
    (out / RUN_MANIFEST).write_text(text, encoding="utf-8")


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _factors_from_args(a) -> ExperimentFactors:
    if a.departure == "nonlinear":
        return ExperimentFactors(departure=a.departure, n=a.n, dist=a.dist,
                                 j=a.j, sigma=a.sigma)
    return ExperimentFactors(departure=a.departure, n=a.n, dist=a.dist,
                             a=a.a, b=a.b)


# --- subcommands --------------------------------------------------------

def _cmd_simulate(a) -> int:
    factors = _factors_from_args(a)
    ds = generate(factors, RandomStream(a.seed))
    out = _resolve_out(a)
    save_dataset(ds, out)
    _write_run_manifest(out, "simulate", a)
    _emit({"out": str(out), "dataset_seed": ds.seed,
           "factors": factors.to_dict()})
    return 0


def _cmd_test(a) -> int:
    ds = load_dataset(a.dataset)
    fit = ols_fit(ds.design(), ds.y)
    results = test_battery(fit, reset_power=a.reset_power,
                           studentized=not a.classical_bp)
    print(f"{'test':<7}{'statistic':>14}{'df':>12}{'p_value':>14}")
    for r in results:
        df = ",".join(str(d) for d in r.df)
        print(f"{r.test:<7}{r.statistic:>14.6g}{'(' + df + ')':>12}"
              f"{r.p_value:>14.6g}")
    out = _resolve_out(a, required=False)
    if out is not None:
        rows = [
            {"test": r.test, "statistic": r.statistic, "df": list(r.df),
             "p_value": r.p_value, "parameters": r.parameters}
            for r in results
        ]
        (out / "tests.json").write_text(
            json.dumps(rows, indent=1, sort_keys=True) + "\n",
            encoding="utf-8")
        _write_run_manifest(out, "test", a, inputs=[a.dataset])
    return 0


def _cmd_effect_size(a) -> int:
    ds = load_dataset(a.dataset)
    es = effect_size(inputs_from_dataset(ds), qf_method=a.method)
    payload = {"effect_size": es.value,
               "log_effect_size": _json_float(es.log_value),
               "method": a.method}
    _emit(payload)
    out = _resolve_out(a, required=False)
    if out is not None:
        (out / "effect_size.json").write_text(
            json.dumps(payload, indent=1, sort_keys=True) + "\n",
            encoding="utf-8")
        _write_run_manifest(out, "effect-size", a, inputs=[a.dataset])
    return 0


def _cmd_lineup(a) -> int:
    rng = RandomStream(a.seed)
    if a.attention:
        if a.dataset:
            raise UsageError("--attention builds its own dataset; "
                             "drop the dataset argument")
        bundle = make_attention_bundle(rng, a.m, a.attention)
        inputs = []
    else:
        if not a.dataset:
            raise UsageError("a dataset directory or --attention is required")
        ds = load_dataset(a.dataset)
        bundle_seed = int(rng.generator.integers(0, 2 ** 63 - 1))
        bundle = make_lineup_seeded(ds, a.m, bundle_seed,
                                    data_position=a.position)
        inputs = [a.dataset]
    out = _resolve_out(a)
    save_bundle(bundle, out)
    _write_run_manifest(out, "lineup", a, inputs=inputs)
    _emit({"id": bundle.id, "m": bundle.m, "out": str(out),
           "attention_check": bundle.attention_check})
    return 0


def _alpha_kwargs(a, rng_path=()) -> dict:
    if a.mode != "AlphaAdjusted":
        return {}
    if a.alpha is None:
        raise UsageError("--alpha is required for AlphaAdjusted")
    if a.seed is None:
        raise UsageError("--seed is required for AlphaAdjusted")
    rng = RandomStream(a.seed)
    if rng_path:
        rng = rng.child(*rng_path)
    return {"alpha": a.alpha, "rng": rng, "replications": a.replications}


def _cmd_pvalue(a) -> int:
    bundle = load_bundle(a.bundle)
    records = [r for r in read_evaluation_log(a.log)
               if r.lineup_id == bundle.id]
    result = visual_pvalue(records, bundle.data_position, bundle.m,
                           mode=a.mode, **_alpha_kwargs(a))
    payload = {
        "lineup_id": result.lineup_id, "K": result.K, "c_obs": result.c_obs,
        "p_value": result.p_value, "mode": result.mode,
        "alpha": result.alpha, "mc_se": result.mc_se,
    }
    _emit(payload)
    out = _resolve_out(a, required=False)
    if out is not None:
        (out / "pvalue.json").write_text(
            json.dumps(payload, indent=1, sort_keys=True) + "\n",
            encoding="utf-8")
        _write_run_manifest(out, "pvalue", a, inputs=[a.bundle, a.log])
    return 0


def _load_bundles(dirs):
    regular, attention = [], []
    for d in dirs:
        bundle = load_bundle(d)
        (attention if bundle.attention_check else regular).append(bundle)
    return regular, attention


def _visual_decisions(a):
    """Evaluation log + bundle dirs -> visual DecisionRecords."""
    log = read_evaluation_log(a.evals)
    regular, attention = _load_bundles(a.bundles)
    if attention:
        allowed = filter_participants(log, attention)
        log = [r for r in log if r.participant_id in allowed]
    by_lineup: dict[str, list] = {}
    for r in log:
        by_lineup.setdefault(r.lineup_id, []).append(r)
    decisions, skipped = [], []
    for i, bundle in enumerate(regular):
        evals = by_lineup.get(bundle.id, [])
        if not evals:
            skipped.append(bundle.id)
            continue
        result = visual_pvalue(evals, bundle.data_position, bundle.m,
                               mode=a.mode,
                               **_alpha_kwargs(a, rng_path=(2, i)))
        ds = generate_seeded(bundle.factors, bundle.dataset_seed)
        es = effect_size(inputs_from_dataset(ds))
        decisions.append(decision_from_visual(result, es, bundle.factors,
                                              level=a.level, replicate=i))
    return decisions, skipped


def _cmd_power(a) -> int:
    records = []
    inputs = []
    skipped: list[str] = []
    if a.nsim is not None:
        if a.seed is None:
            raise UsageError("--seed is required with --nsim")
        if a.departure is None:
            raise UsageError("--departure is required with --nsim")
        grid = experiment_grid(a.departure, dists=a.dist or PREDICTOR_DISTS,
                               ns=a.n or GRID_N)
        specs = []
        for name in a.tests.split(","):
            name = name.strip().lower()
            if name == "reset":
                specs.append(("reset", {"power_max": a.reset_power}))
            else:
                specs.append(name)
        records += mc_power(specs, grid, a.nsim, level=a.level,
                            rng=RandomStream(a.seed).child(0), jobs=a.jobs)
    if a.evals is not None:
        if not a.bundles:
            raise UsageError("--evals requires --bundles")
        decisions, skipped = _visual_decisions(a)
        records += decisions
        inputs += [a.evals, *a.bundles]
    if not records:
        raise UsageError("nothing to fit: pass --nsim and/or --evals "
                         "with evaluated bundles")
    if a.bootstrap and a.seed is None:
        raise UsageError("--seed is required with --bootstrap")

    out = _resolve_out(a)
    (out / "records.csv").write_text(records_csv_text(records),
                                     encoding="utf-8")
    sources = list(dict.fromkeys(r.source for r in records))
    curves, summary = {}, {}
    for k, source in enumerate(sources):
        group = [r for r in records if r.source == source]
        entry: dict = {"n_records": len(group),
                       "n_reject": sum(r.reject for r in group)}
        try:
            if a.bootstrap:
                curve = bootstrap_power(group, a.bootstrap,
                                        RandomStream(a.seed).child(1, k),
                                        level=a.level)
                entry["bootstrap_skipped"] = curve.bootstrap_skipped
                entry["bootstrap_beta1"] = list(curve.bootstrap_beta1)
            else:
                curve = fit_power_curve(group, level=a.level)
            curves[source] = curve
            entry["beta1"] = curve.beta1
        except Separation as err:
            entry["separation_sign"] = err.sign
        summary[source] = entry
    payload = {"level": a.level, "sources": summary,
               "skipped_lineups": skipped}
    (out / "results.json").write_text(
        json.dumps(payload, indent=1, sort_keys=True) + "\n",
        encoding="utf-8")
    if curves:
        (out / "curves.csv").write_text(curves_csv_text(curves),
                                        encoding="utf-8")
        (out / "power.svg").write_text(power_chart(curves, records),
                                       encoding="utf-8")
    _write_run_manifest(out, "power", a, inputs=inputs)
    _emit({"out": str(out), "records": len(records),
           "sources": {s: summary[s].get("beta1") for s in summary}})
    return 0


def _agreement_payload(table) -> dict:
    payload = {
        "conventional_level": table.conventional_level,
        "visual_level": table.visual_level,
        "counts": [list(row) for row in table.counts],
        "n": table.n,
        "conventional_reject_rate": table.conventional_reject_rate,
        "visual_reject_rate": table.visual_reject_rate,
        "visual_reject_given_conventional_reject":
            table.visual_reject_given_conventional_reject,
        "visual_reject_given_conventional_accept":
            table.visual_reject_given_conventional_accept,
    }
    if table.sweep:
        payload["sweep"] = [_agreement_payload(s) for s in table.sweep]
    return payload


def _cmd_report(a) -> int:
    log = read_evaluation_log(a.evals)
    regular, attention = _load_bundles(a.bundles)
    if attention:
        allowed = filter_participants(log, attention)
        log = [r for r in log if r.participant_id in allowed]
    by_lineup: dict[str, list] = {}
    for r in log:
        by_lineup.setdefault(r.lineup_id, []).append(r)
    conv, vis, skipped = {}, {}, []
    for bundle in regular:
        evals = by_lineup.get(bundle.id, [])
        if not evals:
            skipped.append(bundle.id)
            continue
        ds = generate_seeded(bundle.factors, bundle.dataset_seed)
        fit = ols_fit(ds.design(), ds.y)
        if bundle.factors.departure == "nonlinear":
            conv[bundle.id] = reset_test(fit,
                                         power_max=a.reset_power).p_value
        else:
            conv[bundle.id] = bp_test(fit).p_value
        vis[bundle.id] = visual_pvalue(evals, bundle.data_position,
                                       bundle.m).p_value
    if not conv:
        raise UsageError("no evaluated lineups to report on")
    table = agreement_report(conv, vis, level=a.level)
    payload = _agreement_payload(table)
    payload["skipped_lineups"] = skipped
    print(f"lineups: {table.n}   conventional reject rate: "
          f"{table.conventional_reject_rate:.3f}   visual reject rate: "
          f"{table.visual_reject_rate:.3f}")
    print(f"{'':<14}{'visual reject':>15}{'visual accept':>15}")
    print(f"{'conv reject':<14}{table.counts[0][0]:>15}"
          f"{table.counts[0][1]:>15}")
    print(f"{'conv accept':<14}{table.counts[1][0]:>15}"
          f"{table.counts[1][1]:>15}")
    for s in table.sweep:
        print(f"conventional level {s.conventional_level:g}: counts "
              f"{s.counts}")
    out = _resolve_out(a, required=False)
    if out is not None:
        (out / "agreement.json").write_text(
            json.dumps(payload, indent=1, sort_keys=True) + "\n",
            encoding="utf-8")
        _write_run_manifest(out, "report", a,
                            inputs=[a.evals, *a.bundles])
    return 0


def _cmd_serve(a) -> int:
    import uvicorn

    from .server import ServerConfig, build_app, load_config_file

    # precedence: explicit flag > config file > environment > default
    file_cfg = load_config_file(a.config) if a.config else {}
    host = a.host or file_cfg.get("host") or "127.0.0.1"
    port = a.port if a.port is not None else int(file_cfg.get("port", 8000))
    data_dir = a.data_dir or file_cfg.get("data_dir") or "studies"
    bundle_root = a.bundle_root or file_cfg.get("bundle_root")
    token = (a.token or file_cfg.get("token")
             or os.environ.get(TOKEN_ENV))
    webui = a.webui or file_cfg.get("webui")
    config = ServerConfig(
        data_dir=Path(data_dir),
        bundle_root=Path(bundle_root) if bundle_root else None,
        admin_token=token,
        webui_dir=Path(webui) if webui else None,
    )
    app = build_app(config)
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


# --- parser -------------------------------------------------------------

def _add_out(p, required=False):
    p.add_argument("-o", "--out", default=None,
                   help=f"output directory (default: ${OUT_ENV})"
                        + (" [required]" if required else ""))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lineupdx",
        description="Lineup-protocol residual diagnostics workbench")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="subcommand")

    p = sub.add_parser("simulate", help="simulate a dataset under a "
                                        "controlled model violation")
    p.add_argument("--departure", required=True,
                   choices=("nonlinear", "heteroskedastic"))
    p.add_argument("--n", type=int, required=True, help="sample size")
    p.add_argument("--dist", default="uniform", choices=PREDICTOR_DISTS,
                   help="predictor distribution (default uniform)")
    p.add_argument("--j", type=int, default=2,
                   help="polynomial order (nonlinear; default 2)")
    p.add_argument("--sigma", type=float, default=1.0,
                   help="error SD (nonlinear; default 1.0)")
    p.add_argument("--a", type=int, default=0, choices=(-1, 0, 1),
                   help="variance shape (heteroskedastic; default 0)")
    p.add_argument("--b", type=float, default=1.0,
                   help="variance ratio (heteroskedastic; default 1.0)")
    p.add_argument("--seed", type=int, required=True)
    _add_out(p, required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("test", help="run the conventional test battery "
                                    "on a dataset directory")
    p.add_argument("dataset", help="dataset directory")
    p.add_argument("--reset-power", type=int, default=4,
                   help="highest fitted-value power in the RESET "
                        "regression (default 4; 6 often has more power)")
    p.add_argument("--classical-bp", action="store_true",
                   help="use the classical ESS/2 BP variant instead of "
                        "the studentized default")
    _add_out(p)
    p.set_defaults(func=_cmd_test)

    p = sub.add_parser("effect-size",
                       help="compute the model-violation effect size of "
                            "a dataset")
    p.add_argument("dataset", help="dataset directory")
    p.add_argument("--method", default="pinv",
                   choices=("pinv", "subspace"),
                   help="quadratic-form route (default pinv)")
    _add_out(p)
    p.set_defaults(func=_cmd_effect_size)

    p = sub.add_parser("lineup", help="build a lineup bundle from a "
                                      "dataset (or an attention check)")
    p.add_argument("dataset", nargs="?", default=None,
                   help="dataset directory (omit with --attention)")
    p.add_argument("--attention", default=None,
                   choices=("nonlinear", "heteroskedastic"),
                   help="build an amplified attention-check bundle")
    p.add_argument("--m", type=int, default=20,
                   help="panels per lineup (default 20)")
    p.add_argument("--position", type=int, default=None,
                   help="force the data panel position (testing only)")
    p.add_argument("--seed", type=int, required=True)
    _add_out(p, required=True)
    p.set_defaults(func=_cmd_lineup)

    p = sub.add_parser("pvalue", help="visual p-value of one lineup from "
                                      "an evaluation log")
    p.add_argument("--bundle", required=True, help="lineup bundle directory")
    p.add_argument("--log", required=True, help="evaluation log (JSONL)")
    p.add_argument("--mode", default="UniformNull",
                   choices=("UniformNull", "AlphaAdjusted"))
    p.add_argument("--alpha", type=float, default=None,
                   help="attractiveness concentration (AlphaAdjusted)")
    p.add_argument("--replications", type=int, default=100000,
                   help="Monte Carlo replications (AlphaAdjusted; "
                        "default 100000)")
    p.add_argument("--seed", type=int, default=None,
                   help="rng seed (required for AlphaAdjusted)")
    _add_out(p)
    p.set_defaults(func=_cmd_pvalue)

    p = sub.add_parser("power", help="Monte Carlo power records and "
                                     "logistic power curves")
    p.add_argument("--departure", default=None,
                   choices=("nonlinear", "heteroskedastic"),
                   help="factor grid family (with --nsim)")
    p.add_argument("--dist", action="append", choices=PREDICTOR_DISTS,
                   default=None,
                   help="restrict the grid to these predictor "
                        "distributions (repeatable; default all)")
    p.add_argument("--n", action="append", type=int, default=None,
                   help="restrict the grid to these sample sizes "
                        "(repeatable; default 50 100 300)")
    p.add_argument("--tests", default="reset,bp,sw",
                   help="comma-separated conventional tests "
                        "(default reset,bp,sw)")
    p.add_argument("--reset-power", type=int, default=4,
                   help="RESET power parameter (default 4)")
    p.add_argument("--nsim", type=int, default=None,
                   help="simulations per grid cell (enables the "
                        "conventional branch)")
    p.add_argument("--evals", default=None,
                   help="evaluation log; adds visual decisions "
                        "(requires --bundles)")
    p.add_argument("--bundles", nargs="+", default=None,
                   help="lineup bundle directories for --evals")
    p.add_argument("--mode", default="UniformNull",
                   choices=("UniformNull", "AlphaAdjusted"),
                   help="visual p-value mode for --evals")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--replications", type=int, default=100000)
    p.add_argument("--level", type=float, default=DEFAULT_LEVEL,
                   help="rejection level (default 0.05)")
    p.add_argument("--bootstrap", type=int, default=0,
                   help="bootstrap resamples for the slope (default off)")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel workers for the simulation grid")
    p.add_argument("--seed", type=int, default=None,
                   help="rng seed (required for --nsim/--bootstrap)")
    _add_out(p, required=True)
    p.set_defaults(func=_cmd_power)

    p = sub.add_parser("report", help="conventional vs visual decision "
                                      "agreement for evaluated lineups")
    p.add_argument("--evals", required=True, help="evaluation log (JSONL)")
    p.add_argument("--bundles", nargs="+", required=True,
                   help="lineup bundle directories")
    p.add_argument("--level", type=float, default=DEFAULT_LEVEL)
    p.add_argument("--reset-power", type=int, default=4)
    _add_out(p)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("serve", help="run the local evaluation service")
    p.add_argument("--config", default=None,
                   help="JSON config file (flags override its values)")
    p.add_argument("--host", default=None, help="default 127.0.0.1")
    p.add_argument("--port", type=int, default=None, help="default 8000")
    p.add_argument("--data-dir", default=None,
                   help="directory for study state and logs "
                        "(default ./studies)")
    p.add_argument("--bundle-root", default=None,
                   help="directory whose subdirectories are lineup "
                        "bundles available to studies")
    p.add_argument("--token", default=None,
                   help=f"admin bearer token (default ${TOKEN_ENV})")
    p.add_argument("--webui", default=None,
                   help="static directory served at / (optional)")
    p.set_defaults(func=_cmd_serve)
    return parser


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as ex:
        return int(ex.code or 0)
    try:
        return args.func(args)
    except UsageError as err:
        print(json.dumps({"code": err.code, "message": str(err)}),
              file=sys.stderr)
        return 2
    except LineupdxError as err:
        print(json.dumps({"code": err.code, "message": str(err)}),
              file=sys.stderr)
        return 1
    except ValueError as err:
        print(json.dumps({"code": "invalid_value", "message": str(err)}),
              file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))
