"""Local HTTP service for human lineup-evaluation studies.

The service never tells a participant where the data panel sits: payloads
carry panel SVGs and panel numbers only, and result endpoints withhold
the position until a lineup reaches its target evaluation count or an
admin asks.  All state lives in plain files under one directory per
study: a JSON snapshot plus two append-only JSONL logs (assignments and
evaluations), replayed on startup.  Appends are fsynced before the
response is sent, so an acknowledged submission survives a crash.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import os
import secrets
import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from fastapi.staticfiles import StaticFiles

from .errors import (
    AlreadyAnswered,
    IoError,
    LineupdxError,
    MissingBundle,
    NotAssigned,
    StudyClosed,
    UnknownLineup,
    UnknownStudy,
)
from .lineup import load_bundle
from .numerics import RandomStream
from .render import render_lineup
from .visual import (
    filter_participants,
    normalize_evaluation,
    read_evaluation_log,
    visual_pvalue,
)

DEFAULT_BLOCK_SIZE = 20
ATTENTION_PER_BLOCK = 2
DEFAULT_TARGET = 1

_STATUS = {
    "missing_bundle": 404,
    "unknown_study": 404,
    "unknown_lineup": 404,
    "study_closed": 409,
    "not_assigned": 409,
    "already_answered": 409,
    "no_evaluations": 409,
    "io_error": 500,
}


@dataclass(frozen=True)
class ServerConfig:
    data_dir: Path
    bundle_root: Path | None = None
    admin_token: str | None = None
    webui_dir: Path | None = None


def load_config_file(path) -> dict:
    """Read a JSON config file for the serve subcommand."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"could not read config file {path}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"config file {path} is not valid JSON") from exc
    allowed = {"host", "port", "data_dir", "bundle_root", "token", "webui"}
    extra = set(raw) - allowed
    if extra:
        raise ValueError(f"unknown config keys: {sorted(extra)}")
    return raw


@dataclass
class _StudyBundle:
    bundle: object
    path: Path
    target: int
    attention: bool
    panel_svgs: tuple


@dataclass
class _Assignment:
    lineup_id: str
    token: str
    answered: bool = False


@dataclass
class _Study:
    id: str
    dir: Path
    block_size: int
    mode: str
    alpha: float | None
    replications: int
    seed: int | None
    bundles: dict = field(default_factory=dict)  # lineup id -> _StudyBundle
    order: list = field(default_factory=list)  # lineup ids, config order
    state: str = "Open"
    ledger: dict = field(default_factory=dict)  # pid -> [_Assignment]
    evaluations: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def regular_ids(self):
        return [i for i in self.order if not self.bundles[i].attention]

    @property
    def attention_ids(self):
        return [i for i in self.order if self.bundles[i].attention]

    def block_for(self, participant_id: str) -> list:
        """Deterministic per-participant schedule.

        Attention checks sit at evenly spaced interior slots; the regular
        sequence is the config order rotated by a participant hash, so
        coverage balances across participants without mutable state.
        """
        regular, attention = self.regular_ids, self.attention_ids
        k_att = min(ATTENTION_PER_BLOCK, len(attention))
        k_reg = min(self.block_size - k_att, len(regular))
        length = k_reg + k_att
        digest = hashlib.sha256(
            f"{self.id}:{participant_id}".encode()).digest()
        rot = int.from_bytes(digest[:8], "big")
        reg_seq = [regular[(rot + i) % len(regular)] for i in range(k_reg)]
        att_seq = [attention[(rot + i) % len(attention)]
                   for i in range(k_att)]
        att_slots = {(i + 1) * length // (k_att + 1): att_seq[i]
                     for i in range(k_att)}
        block, r = [], iter(reg_seq)
        for slot in range(length):
            block.append(att_slots.get(slot) or next(r))
        return block

    def completed(self, participant_id: str) -> int:
        return sum(a.answered for a in self.ledger.get(participant_id, []))

    def manifest(self) -> dict:
        return {
            "id": self.id,
            "state": self.state,
            "block_size": self.block_size,
            "mode": self.mode,
            "alpha": self.alpha,
            "replications": self.replications,
            "seed": self.seed,
            "bundles": [
                {"id": i, "path": str(self.bundles[i].path),
                 "target": self.bundles[i].target,
                 "attention": self.bundles[i].attention}
                for i in self.order
            ],
        }

    def public_manifest(self) -> dict:
        m = self.manifest()
        del m["seed"]
        for b in m["bundles"]:
            del b["path"]
        return m


def _append_jsonl(path: Path, obj: dict) -> None:
    line = json.dumps(obj, ensure_ascii=False, sort_keys=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def _snapshot(study: _Study) -> None:
    tmp = study.dir / "study.json.tmp"
    tmp.write_text(json.dumps(study.manifest(), indent=1, sort_keys=True)
                   + "\n", encoding="utf-8")
    os.replace(tmp, study.dir / "study.json")


def _record_dict(record) -> dict:
    return {
        "lineup_id": record.lineup_id,
        "participant_id": record.participant_id,
        "selections": sorted(record.selections),
        "reason": record.reason,
        "rating": record.rating,
        "timestamp": record.submitted_at,
    }


def _load_study_bundle(path, target: int, attention: bool) -> _StudyBundle:
    try:
        bundle = load_bundle(path)
    except LineupdxError as exc:
        raise MissingBundle(f"bundle at {path} failed to load: {exc}") from exc
    svgs = tuple(p.svg for p in render_lineup(bundle).panels)
    return _StudyBundle(bundle=bundle, path=Path(path), target=target,
                        attention=attention, panel_svgs=svgs)


class StudyStore:
    """All studies under one data directory; replays state on startup."""

    def __init__(self, config: ServerConfig):
        self.config = config
        self.data_dir = Path(config.data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.lock = threading.Lock()
        self.studies: dict[str, _Study] = {}
        for snap in sorted(self.data_dir.glob("*/study.json")):
            study = self._replay(snap)
            self.studies[study.id] = study

    # -- persistence -----------------------------------------------------

    def _replay(self, snapshot_path: Path) -> _Study:
        manifest = json.loads(snapshot_path.read_text(encoding="utf-8"))
        study = _Study(
            id=manifest["id"], dir=snapshot_path.parent,
            block_size=manifest["block_size"], mode=manifest["mode"],
            alpha=manifest["alpha"], replications=manifest["replications"],
            seed=manifest["seed"], state=manifest["state"])
        for entry in manifest["bundles"]:
            sb = _load_study_bundle(entry["path"], entry["target"],
                                    entry["attention"])
            study.bundles[entry["id"]] = sb
            study.order.append(entry["id"])
        apath = study.dir / "assignments.jsonl"
        if apath.exists():
            for line in apath.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                raw = json.loads(line)
                study.ledger.setdefault(raw["participant"], []).append(
                    _Assignment(lineup_id=raw["lineup_id"],
                                token=raw["token"]))
        epath = study.dir / "evaluations.jsonl"
        if epath.exists():
            study.evaluations = list(read_evaluation_log(epath))
            answered = {(r.participant_id, r.lineup_id)
                        for r in study.evaluations}
            for pid, assignments in study.ledger.items():
                for a in assignments:
                    a.answered = (pid, a.lineup_id) in answered
        return study

    def _resolve_bundle_path(self, entry: dict) -> Path:
        if "path" in entry:
            return Path(entry["path"])
        if "id" in entry:
            root = self.config.bundle_root
            if root is None:
                raise MissingBundle(
                    "bundle referenced by id but no bundle root configured")
            for manifest in sorted(Path(root).glob("*/manifest.json")):
                try:
                    data = json.loads(manifest.read_text(encoding="utf-8"))
                except (OSError, json.JSONDecodeError):
                    continue
                if data.get("id") == entry["id"]:
                    return manifest.parent
            raise MissingBundle(f"no bundle named {entry['id']!r} under "
                                f"{root}")
        raise ValueError("bundle entry needs a 'path' or an 'id'")

    # -- operations --------------------------------------------------------

    def create_study(self, config: dict) -> _Study:
        if not isinstance(config, dict):
            raise ValueError("study config must be an object")
        entries = config.get("bundles") or []
        if not entries:
            raise ValueError("a study needs at least one regular bundle")
        mode = config.get("mode", "UniformNull")
        alpha = config.get("alpha")
        seed = config.get("seed")
        if mode == "AlphaAdjusted" and (alpha is None or seed is None):
            raise ValueError("AlphaAdjusted studies need alpha and seed")
        block_size = int(config.get("block_size", DEFAULT_BLOCK_SIZE))
        if block_size < 1:
            raise ValueError("block_size must be positive")

        loaded: list[tuple[str, _StudyBundle]] = []
        for attention, group in ((False, entries),
                                 (True, config.get("attention") or [])):
            for entry in group:
                if isinstance(entry, str):
                    entry = {"path": entry}
                path = self._resolve_bundle_path(entry)
                target = int(entry.get("target", DEFAULT_TARGET))
                if target < 1:
                    raise ValueError("target must be positive")
                sb = _load_study_bundle(path, target, attention)
                loaded.append((sb.bundle.id, sb))
        ids = [i for i, _ in loaded]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate bundle ids in study config")

        study_id = str(config.get("id") or
                       "st" + hashlib.sha256(
                           ",".join(ids).encode()).hexdigest()[:12])
        with self.lock:
            if study_id in self.studies:
                raise ValueError(f"study {study_id!r} already exists")
            study = _Study(
                id=study_id, dir=self.data_dir / study_id,
                block_size=block_size, mode=mode,
                alpha=None if alpha is None else float(alpha),
                replications=int(config.get("replications", 100000)),
                seed=None if seed is None else int(seed))
            for lineup_id, sb in loaded:
                study.bundles[lineup_id] = sb
                study.order.append(lineup_id)
            study.dir.mkdir(parents=True, exist_ok=True)
            _snapshot(study)
            self.studies[study_id] = study
        return study

    def get(self, study_id: str) -> _Study:
        study = self.studies.get(study_id)
        if study is None:
            raise UnknownStudy(f"no study {study_id!r}")
        return study

    def next_lineup(self, study_id: str, participant_id: str) -> dict:
        study = self.get(study_id)
        with study.lock:
            if study.state != "Open":
                raise StudyClosed(f"study {study_id!r} is closed")
            block = study.block_for(participant_id)
            assignments = study.ledger.setdefault(participant_id, [])
            done = sum(a.answered for a in assignments)
            for a in assignments:
                if not a.answered:
                    return self._payload(study, a, done, len(block))
            if len(assignments) >= len(block):
                return {"done": True, "completed": done,
                        "total": len(block)}
            lineup_id = block[len(assignments)]
            assignment = _Assignment(lineup_id=lineup_id,
                                     token=secrets.token_hex(8))
            _append_jsonl(study.dir / "assignments.jsonl",
                          {"participant": participant_id,
                           "lineup_id": lineup_id,
                           "token": assignment.token,
                           "n": len(assignments)})
            assignments.append(assignment)
            return self._payload(study, assignment, done, len(block))

    @staticmethod
    def _payload(study: _Study, assignment: _Assignment, completed: int,
                 total: int) -> dict:
        sb = study.bundles[assignment.lineup_id]
        return {
            "done": False,
            "lineup_id": assignment.lineup_id,
            "m": sb.bundle.m,
            "token": assignment.token,
            "panels": [{"position": i + 1, "svg": svg}
                       for i, svg in enumerate(sb.panel_svgs)],
            "progress": {"completed": completed, "total": total},
        }

    def submit_evaluation(self, study_id: str, body: dict) -> dict:
        study = self.get(study_id)
        if not isinstance(body, dict):
            raise ValueError("submission must be an object")
        for key in ("participant", "lineup_id", "token"):
            if not body.get(key):
                raise ValueError(f"submission is missing {key!r}")
        pid = str(body["participant"])
        lineup_id = str(body["lineup_id"])
        with study.lock:
            assignment = next(
                (a for a in study.ledger.get(pid, ())
                 if a.lineup_id == lineup_id), None)
            if assignment is None:
                raise NotAssigned(f"lineup {lineup_id!r} is not assigned "
                                  f"to participant {pid!r}")
            if not hmac.compare_digest(assignment.token,
                                       str(body["token"])):
                raise NotAssigned("token does not match the assignment")
            sb = study.bundles[lineup_id]
            record = normalize_evaluation(
                lineup_id=lineup_id, participant_id=pid,
                selections=body.get("selections") or (),
                reason=str(body.get("reason", "")),
                rating=body.get("rating", 0), m=sb.bundle.m)
            if assignment.answered:
                stored = next(
                    r for r in study.evaluations
                    if r.participant_id == pid and r.lineup_id == lineup_id)
                same = (stored.selections == record.selections
                        and stored.reason == record.reason
                        and stored.rating == record.rating)
                if not same:
                    raise AlreadyAnswered(
                        f"assignment for lineup {lineup_id!r} already has "
                        f"a different stored evaluation")
                record, replayed = stored, True
            else:
                _append_jsonl(study.dir / "evaluations.jsonl",
                              _record_dict(record))
                study.evaluations.append(record)
                assignment.answered = True
                replayed = False
            return {
                "stored": _record_dict(record),
                "replayed": replayed,
                "progress": {"completed": study.completed(pid),
                             "total": len(study.block_for(pid))},
            }

    def _kept_participants(self, study: _Study):
        """None when the study has no attention checks (keep everyone)."""
        checks = [study.bundles[i].bundle for i in study.attention_ids]
        if not checks:
            return None
        return filter_participants(study.evaluations, checks)

    def lineup_result(self, study_id: str, lineup_id: str, reveal: bool,
                      admin: bool, include_panels: bool = False) -> dict:
        study = self.get(study_id)
        with study.lock:
            sb = study.bundles.get(lineup_id)
            if sb is None:
                raise UnknownLineup(f"no lineup {lineup_id!r} in study "
                                    f"{study_id!r}")
            collected = [r for r in study.evaluations
                         if r.lineup_id == lineup_id]
            kept = self._kept_participants(study)
            evals = collected if kept is None else [
                r for r in collected if r.participant_id in kept]
            kwargs = {}
            if study.mode == "AlphaAdjusted":
                idx = study.order.index(lineup_id)
                kwargs = {"alpha": study.alpha,
                          "replications": study.replications,
                          "rng": RandomStream(study.seed).child(idx)}
            result = visual_pvalue(evals, sb.bundle.data_position,
                                   sb.bundle.m, mode=study.mode, **kwargs)
            revealed = bool(reveal) and (admin
                                         or len(collected) >= sb.target)
            body = {
                "lineup_id": lineup_id,
                "mode": result.mode,
                "alpha": result.alpha,
                "mc_se": result.mc_se,
                "K": result.K,
                "c_obs": result.c_obs,
                "p_value": result.p_value,
                "collected": len(collected),
                "filtered_out": len(collected) - len(evals),
                "target": sb.target,
                "attention_check": sb.attention,
                "revealed": revealed,
            }
            # key absent entirely when unrevealed so a byte scan for the
            # field name doubles as the secrecy check
            if revealed:
                body["data_position"] = sb.bundle.data_position
            if include_panels:
                # the stimulus itself is what participants already see;
                # position secrecy is carried by the key above alone
                body["panels"] = [{"position": i + 1, "svg": svg}
                                  for i, svg in enumerate(sb.panel_svgs)]
            return body

    def export(self, study_id: str) -> dict:
        study = self.get(study_id)
        with study.lock:
            kept = self._kept_participants(study)
            attention_ids = set(study.attention_ids)
            participants = []
            for pid in sorted({r.participant_id
                               for r in study.evaluations}):
                answered = [r for r in study.evaluations
                            if r.participant_id == pid
                            and r.lineup_id in attention_ids]
                participants.append({
                    "participant": pid,
                    "attention_answered": len(answered),
                    "kept": True if kept is None else pid in kept,
                })
            return {
                "study": study.public_manifest(),
                "evaluations": [_record_dict(r)
                                for r in study.evaluations],
                "participants": participants,
            }

    def export_jsonl(self, study_id: str) -> str:
        study = self.get(study_id)
        with study.lock:
            lines = [json.dumps(_record_dict(r), ensure_ascii=False,
                                sort_keys=True)
                     for r in study.evaluations]
        return "".join(line + "\n" for line in lines)

    def close_study(self, study_id: str) -> dict:
        study = self.get(study_id)
        with study.lock:
            study.state = "Closed"
            _snapshot(study)
            return study.public_manifest()


def build_app(config: ServerConfig) -> FastAPI:
    store = StudyStore(config)
    app = FastAPI(title="lineupdx evaluation service", docs_url=None,
                  redoc_url=None, openapi_url=None)
    app.state.store = store

    def _is_admin(request: Request) -> bool:
        token = config.admin_token
        if not token:
            return False
        header = request.headers.get("authorization", "")
        return header.startswith("Bearer ") and hmac.compare_digest(
            header[len("Bearer "):], token)

    @app.exception_handler(LineupdxError)
    async def _domain_error(request: Request, exc: LineupdxError):
        status = _STATUS.get(exc.code, 400)
        return JSONResponse(status_code=status,
                            content={"code": exc.code,
                                     "message": str(exc)})

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return JSONResponse(status_code=400,
                            content={"code": "invalid_value",
                                     "message": str(exc)})

    @app.exception_handler(RequestValidationError)
    async def _body_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400,
                            content={"code": "invalid_body",
                                     "message": str(exc)})

    @app.post("/api/studies", status_code=201)
    def create_study(body: dict):
        return store.create_study(body).public_manifest()

    @app.get("/api/studies/{study_id}/next")
    def next_lineup(study_id: str, participant: str = ""):
        if not participant:
            raise ValueError("participant query parameter is required")
        return store.next_lineup(study_id, participant)

    @app.post("/api/studies/{study_id}/evaluations", status_code=201)
    def submit_evaluation(study_id: str, body: dict):
        return store.submit_evaluation(study_id, body)

    @app.get("/api/studies/{study_id}/lineups/{lineup_id}/result")
    def lineup_result(study_id: str, lineup_id: str, request: Request,
                      reveal: bool = False, include: str = ""):
        return store.lineup_result(study_id, lineup_id, reveal,
                                   _is_admin(request),
                                   include_panels=include == "panels")

    @app.get("/api/studies/{study_id}/export")
    def export(study_id: str, format: str = "json"):
        if format == "jsonl":
            return PlainTextResponse(store.export_jsonl(study_id),
                                     media_type="application/x-ndjson")
        payload = store.export(study_id)
        text = json.dumps(payload, ensure_ascii=False, sort_keys=True,
                          separators=(",", ":"))
        return Response(content=text, media_type="application/json")

    @app.post("/api/studies/{study_id}/close")
    def close_study(study_id: str, request: Request):
        if not _is_admin(request):
            return JSONResponse(status_code=401,
                                content={"code": "unauthorized",
                                         "message": "admin token required"})
        return store.close_study(study_id)

    if config.webui_dir is not None:
        app.mount("/", StaticFiles(directory=config.webui_dir, html=True),
                  name="webui")
    else:
        @app.get("/")
        def index():
            return {"service": "lineupdx evaluation service",
                    "api": "/api/studies"}

    return app
