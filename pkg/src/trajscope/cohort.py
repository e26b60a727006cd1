"""Cohort ingestion, serialization, and synthetic generation.

A cohort is a set of per-stay trajectories of timestamped feature vectors and
continuous drug doses, each carrying a 90-day outcome label. ``outcome`` holds
the label when follow-up resolved it ("survival"/"mortality") and "censored"
when it did not. Whether a trajectory was cut off by the observation window is
structural: it is censored exactly when it spans the full step cap (or carries
the "censored" outcome), so the file formats need no extra flag.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .seeding import rng_for

OUTCOME_SURVIVAL = "survival"
OUTCOME_MORTALITY = "mortality"
OUTCOME_CENSORED = "censored"
OUTCOMES = (OUTCOME_SURVIVAL, OUTCOME_MORTALITY, OUTCOME_CENSORED)

#: Hard cap on steps per trajectory: 20 four-hour intervals.
MAX_STEPS = 20

#: Steps simulated past the censor horizon to resolve a 90-day label
#: (90 days of 4-hour intervals). Chains still unabsorbed then count as
#: survival, matching the meaning of a 90-day mortality label.
LABEL_HORIZON = 540

HOURS_PER_STEP = 4.0


class CohortError(ValueError):
    """Invalid cohort contents or malformed input data."""


@dataclass(frozen=True)
class RawStep:
    """One 4-hour interval: observed features plus the doses given."""

    time_offset_hours: float
    features: tuple[float, ...]
    fluid_dose: float
    vaso_dose: float

    def __post_init__(self) -> None:
        for name in ("time_offset_hours", "fluid_dose", "vaso_dose"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise CohortError(f"{name} must be finite and >= 0, got {value!r}")


@dataclass(frozen=True)
class RawTrajectory:
    """One patient stay: ordered steps and the 90-day outcome label."""

    id: str
    steps: tuple[RawStep, ...]
    outcome: str
    record_text: str | None = None

    def __post_init__(self) -> None:
        if not self.steps:
            raise CohortError(f"trajectory {self.id!r} has no steps")
        if self.outcome not in OUTCOMES:
            raise CohortError(f"trajectory {self.id!r} has unknown outcome {self.outcome!r}")
        offsets = [s.time_offset_hours for s in self.steps]
        if any(b <= a for a, b in zip(offsets, offsets[1:])):
            raise CohortError(f"trajectory {self.id!r} time offsets not strictly increasing")

    def is_censored(self, max_steps: int = MAX_STEPS) -> bool:
        """True when the observation window cut this trajectory off.

        Trajectories spanning the full window (``max_steps`` steps) never
        resolved in-window; an explicit "censored" outcome means follow-up
        is missing entirely.
        """
        return len(self.steps) >= max_steps or self.outcome == OUTCOME_CENSORED


@dataclass(frozen=True)
class Cohort:
    trajectories: tuple[RawTrajectory, ...]
    feature_dim: int
    feature_names: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.feature_names) != self.feature_dim:
            raise CohortError("feature_names length must equal feature_dim")
        seen: set[str] = set()
        for traj in self.trajectories:
            if traj.id in seen:
                raise CohortError(f"duplicate trajectory id {traj.id!r}")
            seen.add(traj.id)
            for step in traj.steps:
                if len(step.features) != self.feature_dim:
                    raise CohortError(
                        f"trajectory {traj.id!r} has a step with {len(step.features)} "
                        f"features, expected {self.feature_dim}"
                    )

    def __len__(self) -> int:
        return len(self.trajectories)

    def by_id(self, traj_id: str) -> RawTrajectory:
        for traj in self.trajectories:
            if traj.id == traj_id:
                return traj
        raise KeyError(traj_id)


def default_feature_names(dim: int) -> tuple[str, ...]:
    return tuple(f"f_{i}" for i in range(dim))


@dataclass(frozen=True)
class IngestResult:
    """Parsed cohort plus the count of trajectories dropped for missing data."""

    cohort: Cohort
    dropped: int


@dataclass(frozen=True)
class GroundTruthMDP:
    """A known tabular MDP used to generate synthetic cohorts.

    Action ids are interpreted on the 5x5 dose grid (``fluid_bin * 5 +
    vaso_bin``); the generator emits the bin index itself as the dose for
    each drug. ``transition_probs`` has shape (n_states, n_actions,
    n_states + 2) with columns n_states / n_states + 1 for the survival and
    mortality absorbing states.
    """

    n_states: int
    n_actions: int
    transition_probs: np.ndarray
    behavior_probs: np.ndarray
    emission_centers: np.ndarray
    emission_scale: float
    censor_horizon: int
    initial_weights: np.ndarray | None = None
    label_horizon: int = LABEL_HORIZON

    def __post_init__(self) -> None:
        if self.n_states < 1 or self.n_actions < 1 or self.n_actions > 25:
            raise CohortError("n_states must be >= 1 and n_actions in [1, 25]")
        if self.emission_scale <= 0:
            raise CohortError("emission_scale must be > 0")
        if self.censor_horizon < 1:
            raise CohortError("censor_horizon must be >= 1")
        t = np.asarray(self.transition_probs, dtype=float)
        b = np.asarray(self.behavior_probs, dtype=float)
        e = np.atleast_2d(np.asarray(self.emission_centers, dtype=float))
        if t.shape != (self.n_states, self.n_actions, self.n_states + 2):
            raise CohortError(f"transition_probs has shape {t.shape}")
        if b.shape != (self.n_states, self.n_actions):
            raise CohortError(f"behavior_probs has shape {b.shape}")
        if e.shape[0] != self.n_states:
            raise CohortError(f"emission_centers has shape {e.shape}")
        if np.abs(t.sum(axis=2) - 1.0).max() > 1e-9:
            raise CohortError("transition_probs rows must sum to 1 within 1e-9")
        if np.abs(b.sum(axis=1) - 1.0).max() > 1e-9:
            raise CohortError("behavior_probs rows must sum to 1 within 1e-9")
        if (t < 0).any() or (b < 0).any():
            raise CohortError("probabilities must be non-negative")
        w = self.initial_weights
        if w is not None:
            w = np.asarray(w, dtype=float)
            if w.shape != (self.n_states,) or (w < 0).any() or w.sum() <= 0:
                raise CohortError("initial_weights must be non-negative with positive sum")
        for name, arr in (("transition_probs", t), ("behavior_probs", b),
                          ("emission_centers", e), ("initial_weights", w)):
            if arr is not None:
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)

    @property
    def feature_dim(self) -> int:
        return self.emission_centers.shape[1]


@dataclass(frozen=True)
class PathSample:
    """A simulated state/action path with its resolved outcome."""

    states: tuple[int, ...]
    actions: tuple[int, ...]
    outcome: str
    censored: bool


def sample_paths(gt: GroundTruthMDP, n_trajectories: int, seed: int) -> list[PathSample]:
    """Simulate state/action paths from a ground-truth MDP.

    Paths absorb in-window (uncensored) or are cut at ``censor_horizon``
    steps; cut paths keep simulating without recording up to
    ``label_horizon`` total steps to resolve the 90-day label.
    Deterministic given ``seed``; each trajectory uses its own substream so
    results do not depend on generation order.
    """
    if n_trajectories < 1:
        raise CohortError("n_trajectories must be >= 1")
    weights = gt.initial_weights
    if weights is None:
        start_probs = np.full(gt.n_states, 1.0 / gt.n_states)
    else:
        start_probs = weights / weights.sum()

    behavior_cum = np.cumsum(gt.behavior_probs, axis=1)
    trans_cum = np.cumsum(gt.transition_probs, axis=2)
    start_cum = np.cumsum(start_probs)
    surv, death = gt.n_states, gt.n_states + 1

    def draw(cum: np.ndarray, rng: np.random.Generator) -> int:
        # Clamp covers cumulative sums a hair below 1 in floating point.
        return min(int(np.searchsorted(cum, rng.random(), side="right")), len(cum) - 1)

    paths: list[PathSample] = []
    for i in range(n_trajectories):
        rng = rng_for(seed, i)
        state = draw(start_cum, rng)
        states: list[int] = []
        actions: list[int] = []
        outcome = OUTCOME_SURVIVAL
        censored = True
        t = 0
        while t < gt.label_horizon:
            action = draw(behavior_cum[state], rng)
            if t < gt.censor_horizon:
                states.append(state)
                actions.append(action)
            nxt = draw(trans_cum[state, action], rng)
            t += 1
            if nxt == surv or nxt == death:
                outcome = OUTCOME_SURVIVAL if nxt == surv else OUTCOME_MORTALITY
                # Absorption exactly at the window edge is indistinguishable
                # from a cut-off, so it counts as censored too.
                censored = t >= gt.censor_horizon
                break
            state = nxt
        paths.append(PathSample(tuple(states), tuple(actions), outcome, censored))
    return paths


def _dose_for_bin(dose_bin: int) -> float:
    # Bin index doubles as the emitted dose; bin 0 is exactly zero dose.
    return float(dose_bin)


def generate_synthetic(gt: GroundTruthMDP, n_trajectories: int, seed: int) -> Cohort:
    """Generate a raw cohort from a ground-truth MDP.

    Features are the state's emission center plus isotropic Gaussian noise of
    scale ``emission_scale``; doses encode the action's grid bins. Bit
    reproducible for a fixed seed.
    """
    paths = sample_paths(gt, n_trajectories, seed)
    dim = gt.feature_dim
    trajectories = []
    for i, path in enumerate(paths):
        rng = rng_for(seed, i, 1)  # feature noise stream, separate from the path stream
        steps = []
        for t, (state, action) in enumerate(zip(path.states, path.actions)):
            features = gt.emission_centers[state] + gt.emission_scale * rng.standard_normal(dim)
            steps.append(
                RawStep(
                    time_offset_hours=t * HOURS_PER_STEP,
                    features=tuple(float(x) for x in features),
                    fluid_dose=_dose_for_bin(action // 5),
                    vaso_dose=_dose_for_bin(action % 5),
                )
            )
        trajectories.append(RawTrajectory(id=f"synth-{i:06d}", steps=tuple(steps), outcome=path.outcome))
    return Cohort(
        trajectories=tuple(trajectories),
        feature_dim=dim,
        feature_names=default_feature_names(dim),
    )


def ground_truth_from_dict(obj: dict) -> GroundTruthMDP:
    """Build a GroundTruthMDP from its JSON form (see README for the schema)."""
    try:
        weights = obj.get("initial_weights")
        return GroundTruthMDP(
            n_states=int(obj["n_states"]),
            n_actions=int(obj["n_actions"]),
            transition_probs=np.asarray(obj["transition_probs"], dtype=float),
            behavior_probs=np.asarray(obj["behavior_probs"], dtype=float),
            emission_centers=np.asarray(obj["emission_centers"], dtype=float),
            emission_scale=float(obj["emission_scale"]),
            censor_horizon=int(obj["censor_horizon"]),
            initial_weights=None if weights is None else np.asarray(weights, dtype=float),
            label_horizon=int(obj.get("label_horizon", LABEL_HORIZON)),
        )
    except KeyError as exc:
        raise CohortError(f"ground-truth JSON missing key {exc}") from None


def split(cohort: Cohort, train_fraction: float, seed: int) -> tuple[Cohort, Cohort]:
    """Partition a cohort into train/test by trajectory id.

    Train gets ``floor(n * train_fraction)`` trajectories; the remainder
    goes to test. Deterministic given the seed.
    """
    n = len(cohort.trajectories)
    if n == 0:
        raise CohortError("cannot split an empty cohort")
    if not 0 < train_fraction < 1:
        raise CohortError("train_fraction must be in (0, 1)")
    n_train = math.floor(n * train_fraction)
    if n_train == 0 or n_train == n:
        raise CohortError(
            f"train_fraction {train_fraction} gives an empty side for {n} trajectories"
        )
    order = sorted(cohort.trajectories, key=lambda t: t.id)
    perm = rng_for(seed).permutation(n)
    train_set = {order[i].id for i in perm[:n_train]}
    train = tuple(t for t in cohort.trajectories if t.id in train_set)
    test = tuple(t for t in cohort.trajectories if t.id not in train_set)
    make = lambda trajs: Cohort(trajs, cohort.feature_dim, cohort.feature_names)
    return make(train), make(test)


# ---------------------------------------------------------------------------
# File formats: CSV (one row per step) and JSONL (one trajectory per line).

CSV_FIXED_COLUMNS = ["traj_id", "t_hours", "outcome", "fluid_dose", "vaso_dose"]


def _truncate(traj: RawTrajectory, max_steps: int) -> RawTrajectory:
    # Keep the earliest max_steps steps; the full-window length itself marks
    # the trajectory censored while the outcome label is retained.
    if len(traj.steps) <= max_steps:
        return traj
    return RawTrajectory(
        id=traj.id,
        steps=traj.steps[:max_steps],
        outcome=traj.outcome,
        record_text=traj.record_text,
    )


def ingest(path: str | Path, format: str, max_steps: int = MAX_STEPS) -> IngestResult:
    """Parse a cohort file.

    Trajectories missing any dose or outcome value are dropped and counted;
    structurally malformed rows raise ``CohortError`` naming the line.
    Trajectories longer than ``max_steps`` are truncated to their earliest
    ``max_steps`` steps.
    """
    path = Path(path)
    if format == "csv":
        kept, dropped, dim = _ingest_csv(path)
        names = default_feature_names(dim)
    elif format == "jsonl":
        kept, dropped, dim = _ingest_jsonl(path)
        names = default_feature_names(dim)
    else:
        raise CohortError(f"unknown format {format!r}")
    kept = [_truncate(t, max_steps) for t in kept]
    return IngestResult(Cohort(tuple(kept), dim, names), dropped)


def _parse_nonneg(value: str, what: str, line_no: int) -> float:
    try:
        parsed = float(value)
    except ValueError:
        raise CohortError(f"line {line_no}: {what} is not a number: {value!r}") from None
    if not math.isfinite(parsed) or parsed < 0:
        raise CohortError(f"line {line_no}: {what} must be finite and >= 0: {value!r}")
    return parsed


def _ingest_csv(path: Path) -> tuple[list[RawTrajectory], int, int]:
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CohortError("empty file") from None
        if header[: len(CSV_FIXED_COLUMNS)] != CSV_FIXED_COLUMNS:
            raise CohortError(f"unexpected header {header[:5]!r}")
        dim = len(header) - len(CSV_FIXED_COLUMNS)
        expected = [f"f_{i}" for i in range(dim)]
        if header[len(CSV_FIXED_COLUMNS):] != expected:
            raise CohortError("feature columns must be f_0..f_{D-1} in order")

        # Rows grouped by trajectory id; a trajectory is dropped (not an
        # error) when any of its dose/outcome cells is empty.
        order: list[str] = []
        rows: dict[str, list[tuple[int, list[str]]]] = {}
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CohortError(f"line {line_no}: expected {len(header)} cells, got {len(row)}")
            tid = row[0]
            if not tid:
                raise CohortError(f"line {line_no}: empty traj_id")
            if tid not in rows:
                rows[tid] = []
                order.append(tid)
            rows[tid].append((line_no, row))

    kept: list[RawTrajectory] = []
    dropped = 0
    for tid in order:
        incomplete = any(
            row[2] == "" or row[3] == "" or row[4] == "" for _, row in rows[tid]
        )
        if incomplete:
            dropped += 1
            continue
        steps = []
        outcome = None
        for line_no, row in rows[tid]:
            if row[2] not in OUTCOMES:
                raise CohortError(f"line {line_no}: unknown outcome {row[2]!r}")
            if outcome is None:
                outcome = row[2]
            elif row[2] != outcome:
                raise CohortError(f"line {line_no}: outcome differs within trajectory {tid!r}")
            features = tuple(
                _parse_float_cell(cell, f"f_{i}", line_no)
                for i, cell in enumerate(row[5:])
            )
            steps.append(
                RawStep(
                    time_offset_hours=_parse_nonneg(row[1], "t_hours", line_no),
                    features=features,
                    fluid_dose=_parse_nonneg(row[3], "fluid_dose", line_no),
                    vaso_dose=_parse_nonneg(row[4], "vaso_dose", line_no),
                )
            )
        assert outcome is not None
        kept.append(RawTrajectory(id=tid, steps=tuple(steps), outcome=outcome))
    return kept, dropped, dim


def _parse_float_cell(cell: str, what: str, line_no: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise CohortError(f"line {line_no}: {what} is not a number: {cell!r}") from None
    if not math.isfinite(value):
        raise CohortError(f"line {line_no}: {what} must be finite: {cell!r}")
    return value


def _ingest_jsonl(path: Path) -> tuple[list[RawTrajectory], int, int]:
    kept: list[RawTrajectory] = []
    dropped = 0
    dim: int | None = None
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CohortError(f"line {line_no}: invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict) or "id" not in obj or "steps" not in obj:
                raise CohortError(f"line {line_no}: trajectory object needs 'id' and 'steps'")
            outcome = obj.get("outcome")
            steps_raw = obj["steps"]
            if not isinstance(steps_raw, list) or not steps_raw:
                raise CohortError(f"line {line_no}: 'steps' must be a non-empty array")
            if outcome is None or any(
                s.get("fluid_dose") is None or s.get("vaso_dose") is None for s in steps_raw
            ):
                dropped += 1
                continue
            if outcome not in OUTCOMES:
                raise CohortError(f"line {line_no}: unknown outcome {outcome!r}")
            steps = []
            for s in steps_raw:
                features = s.get("features")
                if not isinstance(features, list):
                    raise CohortError(f"line {line_no}: step missing 'features' array")
                if dim is None:
                    dim = len(features)
                elif len(features) != dim:
                    raise CohortError(
                        f"line {line_no}: feature dimension {len(features)} != {dim}"
                    )
                steps.append(
                    RawStep(
                        time_offset_hours=float(s["t_hours"]),
                        features=tuple(float(x) for x in features),
                        fluid_dose=float(s["fluid_dose"]),
                        vaso_dose=float(s["vaso_dose"]),
                    )
                )
            kept.append(
                RawTrajectory(
                    id=str(obj["id"]),
                    steps=tuple(steps),
                    outcome=outcome,
                    record_text=obj.get("record_text"),
                )
            )
    return kept, dropped, dim or 0


def write_cohort(cohort: Cohort, path: str | Path, format: str) -> None:
    """Write a cohort in one of the ingest formats (UTF-8, LF endings)."""
    path = Path(path)
    if format == "csv":
        with path.open("w", newline="\n", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            # The CSV format mandates positional feature column names.
            writer.writerow(CSV_FIXED_COLUMNS + [f"f_{i}" for i in range(cohort.feature_dim)])
            for traj in cohort.trajectories:
                for step in traj.steps:
                    writer.writerow(
                        [
                            traj.id,
                            repr(step.time_offset_hours),
                            traj.outcome,
                            repr(step.fluid_dose),
                            repr(step.vaso_dose),
                        ]
                        + [repr(x) for x in step.features]
                    )
    elif format == "jsonl":
        with path.open("w", newline="\n", encoding="utf-8") as fh:
            for traj in cohort.trajectories:
                obj: dict = {
                    "id": traj.id,
                    "outcome": traj.outcome,
                    "steps": [
                        {
                            "t_hours": step.time_offset_hours,
                            "fluid_dose": step.fluid_dose,
                            "vaso_dose": step.vaso_dose,
                            "features": list(step.features),
                        }
                        for step in traj.steps
                    ],
                }
                if traj.record_text is not None:
                    obj["record_text"] = traj.record_text
                fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
    else:
        raise CohortError(f"unknown format {format!r}")
