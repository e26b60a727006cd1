"""HTTP API over a loaded study bundle.

Read endpoints are pure views of bundle state (rankings are computed once at
startup from the immutable artifacts); the only mutations are case creation,
on-demand roll-outs, and annotations, which are serialized per case and
written durably to the bundle before the response is acknowledged.
"""

from __future__ import annotations

import threading
from collections import defaultdict
from dataclasses import asdict
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import bundle as bundle_io
from .discretize import action_bins
from .inspection import (
    KIND_OUTCOME,
    KIND_TREATMENT,
    VERDICTS,
    InspectionError,
    annotate,
    build_case,
    case_id_for,
    earliest_anchor,
    extend_case,
    surprising_outcomes,
    surprising_treatments,
)

CODE_NOT_FOUND = "not_found"
CODE_INVALID = "invalid_input"
CODE_CONFLICT = "conflict"
CODE_INTERNAL = "internal"

_STATUS = {CODE_NOT_FOUND: 404, CODE_INVALID: 400, CODE_CONFLICT: 409, CODE_INTERNAL: 500}


class ApiException(Exception):
    def __init__(self, code: str, message: str):
        self.code = code
        self.message = message
        super().__init__(message)


class AnchorBody(BaseModel):
    trajectory_id: str
    step_index: int = 0


class CreateCaseBody(BaseModel):
    kind: str
    anchor: AnchorBody
    n_rollouts: int | None = Field(default=None, ge=1)
    seed: int = 0


class RolloutBody(BaseModel):
    n: int = Field(ge=1)
    seed: int


class AnnotationBody(BaseModel):
    author: str
    text: str
    verdict: str


def _sim_dict(sim) -> dict:
    return bundle_io.sim_to_dict(sim)


def create_app(bundle_dir: str | Path) -> FastAPI:
    """Build the API app over a validated bundle directory."""
    root = Path(bundle_dir)
    study = bundle_io.load(root)
    manifest = bundle_io.read_manifest(root)
    for missing, stage in (
        (study.model, "estimate"),
        (study.target, "solve"),
        (study.discrete_train, "discretize"),
    ):
        if missing is None:
            raise bundle_io.BundleError(
                f"bundle at {root} lacks an artifact; run `{stage}` first"
            )

    app = FastAPI(title="trajscope study service")
    app.state.study = study
    app.state.bundle_dir = root

    config = study.config
    seeds = study.seeds
    trajectories = {}
    for traj_list, cohort in (
        (study.discrete_train, study.train_cohort),
        (study.discrete_test, study.test_cohort),
    ):
        if traj_list is None:
            continue
        raw_by_id = {t.id: t for t in cohort.trajectories} if cohort else {}
        for t in traj_list:
            trajectories[t.id] = (t, raw_by_id.get(t.id))

    treatment_ranking = surprising_treatments(
        study.behavior, study.target, study.grid, config.freq_threshold
    )
    treatment_anchors = _treatment_anchors(study.discrete_train, treatment_ranking)
    outcome_ranking = surprising_outcomes(
        study.discrete_test or [],
        study.model,
        study.target,
        n_rollouts=config.n_rollouts,
        seed=seeds.get("inspect", 0),
    )
    outcome_anchors = _outcome_anchors(study.discrete_test or [])
    state_medians = _state_medians(study)

    case_locks: defaultdict[str, threading.Lock] = defaultdict(threading.Lock)
    manifest_lock = threading.Lock()

    def persist_case(case) -> None:
        with manifest_lock:
            bundle_io.write_case(root, case)
            study.cases[case.case_id] = case

    @app.exception_handler(ApiException)
    async def api_exception_handler(request: Request, exc: ApiException):
        return JSONResponse(
            status_code=_STATUS[exc.code],
            content={"error": {"code": exc.code, "message": exc.message}},
        )

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"error": {"code": CODE_INVALID, "message": str(exc.errors()[:1])}},
        )

    @app.exception_handler(Exception)
    async def fallback_handler(request: Request, exc: Exception):
        return JSONResponse(
            status_code=500,
            content={"error": {"code": CODE_INTERNAL, "message": type(exc).__name__}},
        )

    @app.get("/api/study")
    def get_study():
        return bundle_io.manifest_to_dict(manifest)

    @app.get("/api/heuristics/treatment")
    def get_treatment(limit: int = 50, offset: int = 0):
        limit, offset = _clamp_page(limit, offset)
        entries = []
        for ts in treatment_ranking[offset : offset + limit]:
            entry = asdict(ts)
            entry["fluid_bin"], entry["vaso_bin"] = action_bins(ts.rl_action)
            entry["common_fluid_bin"], entry["common_vaso_bin"] = action_bins(
                ts.common_action
            )
            entry["anchor"] = treatment_anchors.get(ts.state)
            entries.append(entry)
        return {
            "entries": entries,
            "total": len(treatment_ranking),
            "limit": limit,
            "offset": offset,
        }

    @app.get("/api/heuristics/outcome")
    def get_outcome(limit: int = 50, offset: int = 0):
        limit, offset = _clamp_page(limit, offset)
        entries = []
        for os_ in outcome_ranking.entries[offset : offset + limit]:
            entry = asdict(os_)
            entry["anchor"] = outcome_anchors.get(os_.initial_state)
            entries.append(entry)
        return {
            "entries": entries,
            "total": len(outcome_ranking.entries),
            "skipped_trajectories": outcome_ranking.skipped_trajectories,
            "limit": limit,
            "offset": offset,
        }

    @app.get("/api/trajectories/{traj_id}")
    def get_trajectory(traj_id: str):
        if traj_id not in trajectories:
            raise ApiException(CODE_NOT_FOUND, f"unknown trajectory {traj_id!r}")
        discrete, raw = trajectories[traj_id]
        steps = []
        for i, (state, action) in enumerate(discrete.steps):
            fluid_bin, vaso_bin = action_bins(action)
            step = {
                "state": state,
                "action": action,
                "fluid_bin": fluid_bin,
                "vaso_bin": vaso_bin,
            }
            if raw is not None:
                raw_step = raw.steps[i]
                step.update(
                    t_hours=raw_step.time_offset_hours,
                    features=list(raw_step.features),
                    fluid_dose=raw_step.fluid_dose,
                    vaso_dose=raw_step.vaso_dose,
                )
            steps.append(step)
        return {
            "id": discrete.id,
            "terminal": discrete.terminal,
            "censored": discrete.censored,
            "reward": discrete.reward,
            "record_text": raw.record_text if raw is not None else None,
            "steps": steps,
        }

    @app.get("/api/states/{state}")
    def get_state(state: int):
        if not 0 <= state < study.clustering.k:
            raise ApiException(CODE_NOT_FOUND, f"state {state} outside [0, {study.clustering.k})")
        medians = state_medians.get(state)
        return {
            "state": state,
            "median_features": medians,
            "feature_names": list(study.train_cohort.feature_names)
            if study.train_cohort
            else [],
        }

    @app.get("/api/cases")
    def list_cases():
        return {
            "cases": [bundle_io.case_to_dict(c) for _, c in sorted(study.cases.items())]
        }

    @app.get("/api/cases/{case_id}")
    def get_case(case_id: str):
        case = study.cases.get(case_id)
        if case is None:
            raise ApiException(CODE_NOT_FOUND, f"unknown case {case_id!r}")
        return bundle_io.case_to_dict(case)

    @app.post("/api/cases", status_code=201)
    def create_case(body: CreateCaseBody):
        if body.kind not in (KIND_TREATMENT, KIND_OUTCOME):
            raise ApiException(CODE_INVALID, f"unknown case kind {body.kind!r}")
        entry = trajectories.get(body.anchor.trajectory_id)
        if entry is None:
            raise ApiException(
                CODE_NOT_FOUND, f"unknown trajectory {body.anchor.trajectory_id!r}"
            )
        discrete, _ = entry
        case_id = case_id_for(body.kind, discrete.id, body.anchor.step_index)
        lock = case_locks[case_id]
        with lock:
            if case_id in study.cases:
                raise ApiException(CODE_CONFLICT, f"case {case_id} already exists")
            try:
                case = build_case(
                    body.kind,
                    discrete,
                    body.anchor.step_index,
                    study.model,
                    study.target,
                    n_rollouts=body.n_rollouts or config.n_rollouts,
                    seed=body.seed,
                )
            except InspectionError as exc:
                raise ApiException(CODE_INVALID, str(exc)) from exc
            persist_case(case)
        return bundle_io.case_to_dict(case)

    @app.post("/api/cases/{case_id}/rollouts", status_code=201)
    def add_rollouts(case_id: str, body: RolloutBody):
        lock = case_locks[case_id]
        with lock:
            case = study.cases.get(case_id)
            if case is None:
                raise ApiException(CODE_NOT_FOUND, f"unknown case {case_id!r}")
            updated = extend_case(case, study.model, study.target, body.n, body.seed)
            persist_case(updated)
            new = updated.rollouts[len(case.rollouts):]
        return {"case_id": case_id, "rollouts": [_sim_dict(r) for r in new],
                "total_rollouts": len(updated.rollouts)}

    @app.post("/api/cases/{case_id}/annotations", status_code=201)
    def add_annotation(case_id: str, body: AnnotationBody):
        if body.verdict not in VERDICTS:
            raise ApiException(
                CODE_INVALID, f"verdict must be one of {list(VERDICTS)}"
            )
        if not body.author.strip() or not body.text.strip():
            raise ApiException(CODE_INVALID, "author and text must be non-empty")
        lock = case_locks[case_id]
        with lock:
            case = study.cases.get(case_id)
            if case is None:
                raise ApiException(CODE_NOT_FOUND, f"unknown case {case_id!r}")
            updated = annotate(case, body.author, body.text, body.verdict)
            persist_case(updated)
        return asdict(updated.annotations[-1])

    @app.get("/api/reports/{name}")
    def get_report(name: str):
        if name not in bundle_io.REPORT_NAMES:
            raise ApiException(
                CODE_INVALID, f"unknown report {name!r}; expected one of {list(bundle_io.REPORT_NAMES)}"
            )
        report = study.reports.get(name)
        if report is None:
            raise ApiException(
                CODE_NOT_FOUND, f"report {name!r} not in bundle; run `report {name}`"
            )
        return report

    app_dir = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"
    if app_dir.is_dir():
        app.mount("/app", StaticFiles(directory=app_dir, html=True), name="workbench")

    return app


def _clamp_page(limit: int, offset: int) -> tuple[int, int]:
    if limit < 1 or offset < 0:
        raise ApiException(CODE_INVALID, "limit must be >= 1 and offset >= 0")
    return min(limit, 500), offset


def _treatment_anchors(discrete_train, ranking) -> dict[int, dict]:
    """Earliest training occurrence of each flagged state."""
    wanted = {ts.state for ts in ranking}
    anchors: dict[int, dict] = {}
    for traj in discrete_train or []:
        remaining = wanted - anchors.keys()
        if not remaining:
            break
        for state in remaining:
            try:
                idx = earliest_anchor(traj, state)
            except InspectionError:
                continue
            anchors[state] = {"trajectory_id": traj.id, "step_index": idx}
    return anchors


def _outcome_anchors(discrete_test) -> dict[int, dict]:
    anchors: dict[int, dict] = {}
    for traj in discrete_test:
        anchors.setdefault(
            traj.initial_state, {"trajectory_id": traj.id, "step_index": 0}
        )
    return anchors


def _state_medians(study) -> dict[int, list[float]]:
    """Per-cluster median feature values on the raw scale."""
    if study.train_cohort is None or study.discrete_train is None:
        return {}
    features: defaultdict[int, list] = defaultdict(list)
    discrete_by_id = {t.id: t for t in study.discrete_train}
    for raw in study.train_cohort.trajectories:
        discrete = discrete_by_id.get(raw.id)
        if discrete is None:
            continue
        for step, (state, _) in zip(raw.steps, discrete.steps):
            features[state].append(step.features)
    return {
        state: np.median(np.asarray(rows), axis=0).tolist()
        for state, rows in features.items()
    }


def serve(bundle_dir: str | Path, bind: str = "127.0.0.1:8000") -> None:
    """Run the service until interrupted."""
    import uvicorn

    host, _, port = bind.partition(":")
    uvicorn.run(create_app(bundle_dir), host=host or "127.0.0.1", port=int(port or 8000))
