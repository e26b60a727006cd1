"""Self-contained on-disk study bundles.

One study = one directory holding every artifact plus a manifest with
per-file content hashes. The manifest is written last so a partially
written bundle fails hash validation instead of loading silently. All
files are deterministic byte-for-byte given the same study contents; only
the manifest's ``created_at`` field varies between saves.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .cohort import Cohort, ingest, write_cohort
from .discretize import (
    CENSOR_MODE_TERMINAL_REWARD,
    ActionGrid,
    DiscreteTrajectory,
    StateClustering,
)
from .inspection import Annotation, InspectionCase
from .mdp import BehaviorPolicy, RewardModel, TransitionModel
from .planner import TargetPolicy
from .rollout import SimTrajectory

FORMAT_VERSION = 1

MANIFEST_FILE = "manifest.json"

REPORT_NAMES = ("length", "termination", "rare_action", "discharge")


class BundleError(ValueError):
    """Invalid bundle contents or layout."""


class CorruptionError(BundleError):
    """An artifact file does not match its manifest hash."""


@dataclass(frozen=True)
class StudyConfig:
    """Pipeline configuration; defaults follow the replicated study design."""

    k: int = 750
    min_count: int = 5
    gamma: float = 0.99
    tol: float = 1e-6
    max_sweeps: int = 10_000
    freq_threshold: float = 0.01
    n_rollouts: int = 5
    censor_mode: str = CENSOR_MODE_TERMINAL_REWARD
    max_steps: int = 20


@dataclass(frozen=True)
class StudyManifest:
    study_id: str
    created_at: str
    seeds: dict[str, int]
    config: StudyConfig
    hashes: dict[str, str]
    format_version: int = FORMAT_VERSION


@dataclass
class Study:
    """In-memory view of a bundle; optional fields fill in as stages run."""

    study_id: str
    config: StudyConfig = field(default_factory=StudyConfig)
    seeds: dict[str, int] = field(default_factory=dict)
    full_cohort: Cohort | None = None
    train_cohort: Cohort | None = None
    test_cohort: Cohort | None = None
    clustering: StateClustering | None = None
    grid: ActionGrid | None = None
    discrete_train: list[DiscreteTrajectory] | None = None
    discrete_test: list[DiscreteTrajectory] | None = None
    model: TransitionModel | None = None
    behavior: BehaviorPolicy | None = None
    rewards: RewardModel | None = None
    target: TargetPolicy | None = None
    rollouts: list[SimTrajectory] | None = None
    cases: dict[str, InspectionCase] = field(default_factory=dict)
    reports: dict[str, dict] = field(default_factory=dict)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(obj, path: Path, indent: int | None = None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(obj, sort_keys=True, indent=indent, ensure_ascii=False)
    _atomic_write(path, (text + "\n").encode("utf-8"))


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def _load_json(path: Path):
    with path.open(encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# Per-artifact serialization


def _write_clustering(sc: StateClustering, path: Path) -> None:
    _dump_json(
        {
            "k": sc.k,
            "centroids": sc.centroids.tolist(),
            "feature_means": sc.feature_means.tolist(),
            "feature_scales": sc.feature_scales.tolist(),
        },
        path,
    )


def _read_clustering(path: Path) -> StateClustering:
    obj = _load_json(path)
    return StateClustering(
        k=obj["k"],
        centroids=np.array(obj["centroids"], dtype=float),
        feature_means=np.array(obj["feature_means"], dtype=float),
        feature_scales=np.array(obj["feature_scales"], dtype=float),
    )


def _write_grid(grid: ActionGrid, path: Path) -> None:
    _dump_json(
        {
            "fluid_edges": list(grid.fluid_edges),
            "vaso_edges": list(grid.vaso_edges),
            "fluid_large_threshold": grid.fluid_large_threshold,
            "vaso_large_threshold": grid.vaso_large_threshold,
        },
        path,
    )


def _read_grid(path: Path) -> ActionGrid:
    obj = _load_json(path)
    return ActionGrid(
        fluid_edges=tuple(obj["fluid_edges"]),
        vaso_edges=tuple(obj["vaso_edges"]),
        fluid_large_threshold=obj["fluid_large_threshold"],
        vaso_large_threshold=obj["vaso_large_threshold"],
    )


def _write_discrete(trajs: list[DiscreteTrajectory], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for t in trajs:
        lines.append(
            json.dumps(
                {
                    "id": t.id,
                    "steps": [[s, a] for s, a in t.steps],
                    "terminal": t.terminal,
                    "censored": t.censored,
                    "reward": t.reward,
                },
                sort_keys=True,
            )
        )
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8") if lines else b"")


def _read_discrete(path: Path) -> list[DiscreteTrajectory]:
    out = []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out.append(
                DiscreteTrajectory(
                    id=obj["id"],
                    steps=tuple((int(s), int(a)) for s, a in obj["steps"]),
                    terminal=obj["terminal"],
                    censored=obj["censored"],
                    reward=obj["reward"],
                )
            )
    return out


def _write_model(m: TransitionModel, bp: BehaviorPolicy, r: RewardModel, dir_: Path) -> None:
    dir_.mkdir(parents=True, exist_ok=True)
    triplets = sorted(
        (s, a, nxt, c) for (s, a), row in m.counts.items() for nxt, c in row.items()
    )
    arr = np.array(triplets, dtype="<u4").reshape(-1, 4)
    _atomic_write(dir_ / "transitions.bin", arr.tobytes())
    _dump_json(
        {
            "format_version": FORMAT_VERSION,
            "n_states": m.n_states,
            "min_count": m.min_count,
            "surv_code": m.surv_state,
            "death_code": m.death_state,
            "n_triplets": len(triplets),
            "survival_reward": r.survival_reward,
            "mortality_reward": r.mortality_reward,
            "step_reward": r.step_reward,
        },
        dir_ / "header.json",
    )
    _dump_json(
        {str(s): {str(a): c for a, c in sorted(acts.items())} for s, acts in bp.support_counts.items()},
        dir_ / "behavior.json",
    )


def _read_model(dir_: Path) -> tuple[TransitionModel, BehaviorPolicy, RewardModel]:
    header = _load_json(dir_ / "header.json")
    if header["format_version"] != FORMAT_VERSION:
        raise BundleError(f"unsupported model format_version {header['format_version']}")
    raw = (dir_ / "transitions.bin").read_bytes()
    arr = np.frombuffer(raw, dtype="<u4").reshape(-1, 4)
    if len(arr) != header["n_triplets"]:
        raise CorruptionError(f"{dir_ / 'transitions.bin'} has {len(arr)} triplets, "
                              f"expected {header['n_triplets']}")
    counts: dict[tuple[int, int], dict[int, int]] = {}
    for s, a, nxt, c in arr:
        counts.setdefault((int(s), int(a)), {})[int(nxt)] = int(c)
    probs = {
        key: {nxt: c / total for nxt, c in sorted(row.items())}
        for key, row in counts.items()
        for total in (sum(row.values()),)
    }
    min_count = header["min_count"]
    valid_lists: dict[int, list[int]] = {}
    for (s, a), row in counts.items():
        if sum(row.values()) >= min_count:
            valid_lists.setdefault(s, []).append(a)
    model = TransitionModel(
        n_states=header["n_states"],
        counts=counts,
        probs=probs,
        valid_actions={s: tuple(sorted(v)) for s, v in valid_lists.items()},
        min_count=min_count,
    )
    support = {
        int(s): {int(a): int(c) for a, c in acts.items()}
        for s, acts in _load_json(dir_ / "behavior.json").items()
    }
    behavior_probs = {
        s: {a: c / total for a, c in sorted(acts.items())}
        for s, acts in support.items()
        for total in (sum(acts.values()),)
    }
    rewards = RewardModel(
        survival_reward=header["survival_reward"],
        mortality_reward=header["mortality_reward"],
        step_reward=header["step_reward"],
    )
    return model, BehaviorPolicy(probs=behavior_probs, support_counts=support), rewards


def _write_policy(tp: TargetPolicy, path: Path) -> None:
    _dump_json(
        {
            "gamma": tp.gamma,
            "tol": tp.tol,
            "sweeps_used": tp.sweeps_used,
            "entries": [
                {"action": int(a), "value": float(v), "fallback": bool(f)}
                for a, v, f in zip(tp.actions, tp.values, tp.fallback)
            ],
        },
        path,
    )


def _read_policy(path: Path) -> TargetPolicy:
    obj = _load_json(path)
    entries = obj["entries"]
    return TargetPolicy(
        actions=np.array([e["action"] for e in entries], dtype=np.int64),
        values=np.array([e["value"] for e in entries], dtype=float),
        fallback=np.array([e["fallback"] for e in entries], dtype=bool),
        gamma=obj["gamma"],
        tol=obj["tol"],
        sweeps_used=obj["sweeps_used"],
    )


def sim_to_dict(sim: SimTrajectory) -> dict:
    return {
        "start_state": sim.start_state,
        "seed": sim.seed,
        "policy_tag": sim.policy_tag,
        "steps": [[s, a] for s, a in sim.steps],
        "terminal": sim.terminal,
        "reward": sim.reward,
    }


def sim_from_dict(obj: dict) -> SimTrajectory:
    return SimTrajectory(
        start_state=int(obj["start_state"]),
        steps=tuple((int(s), int(a)) for s, a in obj["steps"]),
        terminal=obj["terminal"],
        reward=obj["reward"],
        seed=int(obj["seed"]),
        policy_tag=obj["policy_tag"],
    )


def _write_rollouts(rollouts: list[SimTrajectory], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(sim_to_dict(r), sort_keys=True) for r in rollouts]
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8") if lines else b"")


def _read_rollouts(path: Path) -> list[SimTrajectory]:
    out = []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(sim_from_dict(json.loads(line)))
    return out


def case_to_dict(case: InspectionCase) -> dict:
    return {
        "case_id": case.case_id,
        "kind": case.kind,
        "trajectory_id": case.trajectory_id,
        "step_index": case.step_index,
        "anchor_state": case.anchor_state,
        "seed": case.seed,
        "rollouts": [sim_to_dict(r) for r in case.rollouts],
        "annotations": [asdict(a) for a in case.annotations],
    }


def case_from_dict(obj: dict) -> InspectionCase:
    return InspectionCase(
        case_id=obj["case_id"],
        kind=obj["kind"],
        trajectory_id=obj["trajectory_id"],
        step_index=int(obj["step_index"]),
        anchor_state=int(obj["anchor_state"]),
        seed=int(obj["seed"]),
        rollouts=tuple(sim_from_dict(r) for r in obj["rollouts"]),
        annotations=tuple(Annotation(**a) for a in obj["annotations"]),
    )


# ---------------------------------------------------------------------------
# Bundle save / load


def _artifact_files(study: Study) -> dict[str, object]:
    """Relative path -> writer closure, for every artifact present."""
    files: dict[str, object] = {}
    if study.full_cohort is not None:
        files["cohort/full.jsonl"] = lambda p, c=study.full_cohort: write_cohort(c, p, "jsonl")
    if study.train_cohort is not None:
        files["cohort/train.jsonl"] = lambda p, c=study.train_cohort: write_cohort(c, p, "jsonl")
    if study.test_cohort is not None:
        files["cohort/test.jsonl"] = lambda p, c=study.test_cohort: write_cohort(c, p, "jsonl")
    if study.clustering is not None:
        files["discretization/clustering.json"] = lambda p: _write_clustering(study.clustering, p)
    if study.grid is not None:
        files["discretization/action_grid.json"] = lambda p: _write_grid(study.grid, p)
    if study.discrete_train is not None:
        files["discretization/train.jsonl"] = lambda p: _write_discrete(study.discrete_train, p)
    if study.discrete_test is not None:
        files["discretization/test.jsonl"] = lambda p: _write_discrete(study.discrete_test, p)
    if study.model is not None:
        files["model/"] = lambda p: _write_model(study.model, study.behavior, study.rewards, p)
    if study.target is not None:
        files["policy/target.json"] = lambda p: _write_policy(study.target, p)
    if study.rollouts is not None:
        files["rollouts/rollouts.jsonl"] = lambda p: _write_rollouts(study.rollouts, p)
    for case_id in sorted(study.cases):
        files[f"cases/{case_id}.json"] = (
            lambda p, c=study.cases[case_id]: _dump_json(case_to_dict(c), p)
        )
    for name in sorted(study.reports):
        files[f"reports/{name}.json"] = lambda p, o=study.reports[name]: _dump_json(o, p)
    return files


_MODEL_FILES = ("model/header.json", "model/transitions.bin", "model/behavior.json")


def save(dir_: str | Path, study: Study) -> StudyManifest:
    """Write all artifacts, then the hashed manifest last."""
    if study.model is not None and (study.behavior is None or study.rewards is None):
        raise BundleError("model, behavior policy, and reward model are saved together")
    root = Path(dir_)
    root.mkdir(parents=True, exist_ok=True)
    hashes: dict[str, str] = {}
    for rel, writer in _artifact_files(study).items():
        if rel == "model/":
            writer(root / "model")
            for mf in _MODEL_FILES:
                hashes[mf] = _sha256(root / mf)
        else:
            target = root / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            writer(target)
            hashes[rel] = _sha256(target)
    manifest = StudyManifest(
        study_id=study.study_id,
        created_at=datetime.now(timezone.utc).isoformat(),
        seeds=dict(sorted(study.seeds.items())),
        config=study.config,
        hashes=dict(sorted(hashes.items())),
    )
    _dump_json(manifest_to_dict(manifest), root / MANIFEST_FILE, indent=2)
    return manifest


def manifest_to_dict(man: StudyManifest) -> dict:
    return {
        "format_version": man.format_version,
        "study_id": man.study_id,
        "created_at": man.created_at,
        "seeds": man.seeds,
        "config": asdict(man.config),
        "hashes": man.hashes,
    }


def read_manifest(dir_: str | Path) -> StudyManifest:
    path = Path(dir_) / MANIFEST_FILE
    if not path.exists():
        raise BundleError(f"no manifest at {path}; not a study bundle")
    obj = _load_json(path)
    version = obj.get("format_version")
    if version != FORMAT_VERSION:
        raise BundleError(f"unsupported bundle format_version {version!r}")
    return StudyManifest(
        study_id=obj["study_id"],
        created_at=obj["created_at"],
        seeds={k: int(v) for k, v in obj["seeds"].items()},
        config=StudyConfig(**obj["config"]),
        hashes=obj["hashes"],
        format_version=version,
    )


def verify(dir_: str | Path, manifest: StudyManifest) -> None:
    root = Path(dir_)
    for rel, expected in manifest.hashes.items():
        path = root / rel
        if not path.exists():
            raise CorruptionError(f"missing artifact file {rel}")
        actual = _sha256(path)
        if actual != expected:
            raise CorruptionError(f"hash mismatch for {rel}")


def load(dir_: str | Path) -> Study:
    """Load a bundle, verifying every artifact hash first."""
    root = Path(dir_)
    manifest = read_manifest(root)
    verify(root, manifest)
    study = Study(study_id=manifest.study_id, config=manifest.config, seeds=dict(manifest.seeds))
    h = manifest.hashes
    if "cohort/full.jsonl" in h:
        study.full_cohort = ingest(root / "cohort/full.jsonl", "jsonl",
                                   max_steps=manifest.config.max_steps).cohort
    if "cohort/train.jsonl" in h:
        study.train_cohort = ingest(root / "cohort/train.jsonl", "jsonl",
                                    max_steps=manifest.config.max_steps).cohort
    if "cohort/test.jsonl" in h:
        study.test_cohort = ingest(root / "cohort/test.jsonl", "jsonl",
                                   max_steps=manifest.config.max_steps).cohort
    if "discretization/clustering.json" in h:
        study.clustering = _read_clustering(root / "discretization/clustering.json")
    if "discretization/action_grid.json" in h:
        study.grid = _read_grid(root / "discretization/action_grid.json")
    if "discretization/train.jsonl" in h:
        study.discrete_train = _read_discrete(root / "discretization/train.jsonl")
    if "discretization/test.jsonl" in h:
        study.discrete_test = _read_discrete(root / "discretization/test.jsonl")
    if "model/header.json" in h:
        study.model, study.behavior, study.rewards = _read_model(root / "model")
    if "policy/target.json" in h:
        study.target = _read_policy(root / "policy/target.json")
    if "rollouts/rollouts.jsonl" in h:
        study.rollouts = _read_rollouts(root / "rollouts/rollouts.jsonl")
    for rel in h:
        if rel.startswith("cases/"):
            case = case_from_dict(_load_json(root / rel))
            study.cases[case.case_id] = case
        elif rel.startswith("reports/"):
            name = rel[len("reports/"):-len(".json")]
            study.reports[name] = _load_json(root / rel)
    return study


def write_case(dir_: str | Path, case: InspectionCase) -> None:
    """Persist one case and refresh its manifest hash durably.

    The case file is written first, then the manifest is atomically
    replaced, so a crash between the two leaves a bundle that fails
    validation rather than one that silently lost an annotation.
    """
    root = Path(dir_)
    manifest = read_manifest(root)
    rel = f"cases/{case.case_id}.json"
    path = root / rel
    _dump_json(case_to_dict(case), path)
    hashes = dict(manifest.hashes)
    hashes[rel] = _sha256(path)
    updated = replace(manifest, hashes=dict(sorted(hashes.items())))
    _dump_json(manifest_to_dict(updated), root / MANIFEST_FILE, indent=2)
