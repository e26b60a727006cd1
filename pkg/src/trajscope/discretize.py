"""Discretization: k-means state clustering and quartile dose binning.

States come from k-means over z-scored step features (750 clusters by
default). Actions live on a 5x5 grid per drug: bin 0 is exactly zero dose,
bins 1-4 are the quartiles of the nonzero training doses. Discrete
trajectories end with a transition into one of two absorbing states carrying
the +/-100 reward.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .cohort import (
    MAX_STEPS,
    OUTCOME_CENSORED,
    OUTCOME_SURVIVAL,
    Cohort,
    PathSample,
)

SURV = "SURV"
DEATH = "DEATH"

SURVIVAL_REWARD = 100.0
MORTALITY_REWARD = -100.0

#: 5 fluid bins x 5 vasopressor bins.
N_ACTIONS = 25

CENSOR_MODE_TERMINAL_REWARD = "terminal_reward"
CENSOR_MODE_CENSORED = "censored"
CENSOR_MODES = (CENSOR_MODE_TERMINAL_REWARD, CENSOR_MODE_CENSORED)


class DiscretizeError(ValueError):
    """Invalid discretization inputs."""


@dataclass(frozen=True)
class StateClustering:
    """Fitted k-means state space with its standardization parameters."""

    k: int
    centroids: np.ndarray
    feature_means: np.ndarray
    feature_scales: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.centroids, dtype=float)
        m = np.asarray(self.feature_means, dtype=float)
        s = np.asarray(self.feature_scales, dtype=float)
        if self.k < 1 or c.shape != (self.k, m.shape[0]):
            raise DiscretizeError(f"centroids shape {c.shape} inconsistent with k={self.k}")
        if (s <= 0).any():
            raise DiscretizeError("feature_scales must be strictly positive")
        if len(np.unique(c, axis=0)) != self.k:
            raise DiscretizeError("centroids must be pairwise distinct")
        for name, arr in (("centroids", c), ("feature_means", m), ("feature_scales", s)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def feature_dim(self) -> int:
        return self.feature_means.shape[0]


@dataclass(frozen=True)
class ActionGrid:
    """Quartile edges of the nonzero training doses, per drug."""

    fluid_edges: tuple[float, float, float]
    vaso_edges: tuple[float, float, float]
    fluid_large_threshold: float
    vaso_large_threshold: float

    def __post_init__(self) -> None:
        for name, edges in (("fluid_edges", self.fluid_edges), ("vaso_edges", self.vaso_edges)):
            if list(edges) != sorted(edges):
                raise DiscretizeError(f"{name} must be non-decreasing")
        if self.fluid_large_threshold != self.fluid_edges[1]:
            raise DiscretizeError("fluid_large_threshold must equal the fluid q50 edge")
        if self.vaso_large_threshold != self.vaso_edges[1]:
            raise DiscretizeError("vaso_large_threshold must equal the vaso q50 edge")


@dataclass(frozen=True)
class DiscreteTrajectory:
    """A trajectory mapped to (state, action) ids.

    ``terminal`` and ``reward`` are present when the 90-day label is usable:
    always for uncensored trajectories, and for censored ones only under the
    terminal-reward heuristic. ``None`` means the trajectory contributes no
    absorbing transition.
    """

    id: str
    steps: tuple[tuple[int, int], ...]
    terminal: str | None
    censored: bool
    reward: float | None

    def __post_init__(self) -> None:
        if not self.steps:
            raise DiscretizeError(f"trajectory {self.id!r} has no steps")
        if (self.terminal is None) != (self.reward is None):
            raise DiscretizeError("terminal and reward must be present together")
        if self.terminal is not None:
            if self.terminal not in (SURV, DEATH):
                raise DiscretizeError(f"unknown terminal {self.terminal!r}")
            expected = SURVIVAL_REWARD if self.terminal == SURV else MORTALITY_REWARD
            if self.reward != expected:
                raise DiscretizeError(f"reward {self.reward} inconsistent with {self.terminal}")

    @property
    def initial_state(self) -> int:
        return self.steps[0][0]


# ---------------------------------------------------------------------------
# State clustering


def _kmeans(points: np.ndarray, k: int, seed: int, max_iters: int) -> np.ndarray:
    """Lloyd's algorithm with distance-proportional spreading initialization.

    Centers are seeded one at a time with probability proportional to the
    squared distance from the nearest already-chosen center; assignment ties
    go to the lowest center index. Deterministic for a fixed seed.
    """
    n = points.shape[0]
    rng = np.random.default_rng(seed)

    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            raise DiscretizeError(
                f"fewer than k={k} distinct points available for initialization"
            )
        idx = int(np.searchsorted(np.cumsum(d2 / total), rng.random(), side="right"))
        idx = min(idx, n - 1)
        centers[j] = points[idx]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))

    assignments = _nearest(points, centers)
    for _ in range(max_iters):
        for j in range(k):
            members = points[assignments == j]
            if len(members):
                centers[j] = members.mean(axis=0)
            # Empty clusters keep their previous center.
        new_assignments = _nearest(points, centers)
        if np.array_equal(new_assignments, assignments):
            break
        assignments = new_assignments
    return centers


def _nearest(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # Chunked to bound the (n x k) distance matrix; argmin takes the lowest
    # index on ties.
    out = np.empty(points.shape[0], dtype=np.int64)
    chunk = max(1, int(2_000_000 // max(1, centers.shape[0])))
    c2 = (centers**2).sum(axis=1)
    for lo in range(0, points.shape[0], chunk):
        block = points[lo : lo + chunk]
        d = c2[None, :] - 2.0 * block @ centers.T
        out[lo : lo + chunk] = np.argmin(d, axis=1)
    return out


def _step_matrix(cohort: Cohort) -> np.ndarray:
    rows = [step.features for traj in cohort.trajectories for step in traj.steps]
    return np.asarray(rows, dtype=float)


def fit_states(
    train: Cohort, k: int = 750, seed: int = 0, max_iters: int = 100
) -> StateClustering:
    """Cluster z-scored step features into ``k`` states."""
    points = _step_matrix(train)
    if points.shape[0] < k:
        raise DiscretizeError(f"need at least k={k} step rows, got {points.shape[0]}")
    means = points.mean(axis=0)
    scales = points.std(axis=0)
    flat = scales == 0
    if flat.any():
        warnings.warn(
            f"{int(flat.sum())} zero-variance feature(s); scale set to 1", stacklevel=2
        )
        scales = np.where(flat, 1.0, scales)
    z = (points - means) / scales
    centroids = _kmeans(z, k, seed, max_iters)
    order = np.lexsort(centroids.T[::-1])  # stable state ids independent of init order
    return StateClustering(
        k=k, centroids=centroids[order], feature_means=means, feature_scales=scales
    )


def assign_states(clustering: StateClustering, features: np.ndarray) -> np.ndarray:
    """Vectorized nearest-centroid assignment for a (n, D) feature matrix."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[1] != clustering.feature_dim:
        raise DiscretizeError(
            f"expected (n, {clustering.feature_dim}) features, got {features.shape}"
        )
    if not np.isfinite(features).all():
        raise DiscretizeError("features must be finite")
    z = (features - clustering.feature_means) / clustering.feature_scales
    return _nearest(z, clustering.centroids)


def assign_state(clustering: StateClustering, features) -> int:
    """Nearest centroid in z-scored Euclidean distance; ties take the lowest id."""
    arr = np.asarray(features, dtype=float)
    if arr.shape != (clustering.feature_dim,):
        raise DiscretizeError(
            f"expected a {clustering.feature_dim}-vector, got shape {arr.shape}"
        )
    return int(assign_states(clustering, arr[None, :])[0])


def kmeans_objective(clustering: StateClustering, features: np.ndarray) -> float:
    """Sum of squared z-scored distances to assigned centroids."""
    features = np.asarray(features, dtype=float)
    z = (features - clustering.feature_means) / clustering.feature_scales
    labels = _nearest(z, clustering.centroids)
    return float(((z - clustering.centroids[labels]) ** 2).sum())


# ---------------------------------------------------------------------------
# Action grid


def fit_actions(train: Cohort) -> ActionGrid:
    """Quartile edges (linear interpolation) of the nonzero doses per drug."""
    fluids = np.array(
        [s.fluid_dose for t in train.trajectories for s in t.steps if s.fluid_dose > 0]
    )
    vasos = np.array(
        [s.vaso_dose for t in train.trajectories for s in t.steps if s.vaso_dose > 0]
    )
    if fluids.size == 0:
        raise DiscretizeError("no nonzero fluid doses in training cohort")
    if vasos.size == 0:
        raise DiscretizeError("no nonzero vasopressor doses in training cohort")
    f_edges = tuple(float(q) for q in np.percentile(fluids, [25, 50, 75]))
    v_edges = tuple(float(q) for q in np.percentile(vasos, [25, 50, 75]))
    return ActionGrid(
        fluid_edges=f_edges,
        vaso_edges=v_edges,
        fluid_large_threshold=f_edges[1],
        vaso_large_threshold=v_edges[1],
    )


def _dose_bin(edges: tuple[float, float, float], dose: float) -> int:
    if dose == 0:
        return 0
    # Doses exactly on an edge fall in the lower bin.
    return min(4, 1 + sum(1 for e in edges if e < dose))


def encode_action(grid: ActionGrid, fluid: float, vaso: float) -> int:
    """Map a dose pair to its grid action id (``fluid_bin * 5 + vaso_bin``)."""
    for name, dose in (("fluid", fluid), ("vaso", vaso)):
        if not math.isfinite(dose) or dose < 0:
            raise DiscretizeError(f"{name} dose must be finite and >= 0, got {dose!r}")
    return _dose_bin(grid.fluid_edges, fluid) * 5 + _dose_bin(grid.vaso_edges, vaso)


def action_bins(action: int) -> tuple[int, int]:
    """Decompose a grid action id into (fluid_bin, vaso_bin)."""
    if not 0 <= action < N_ACTIONS:
        raise DiscretizeError(f"action id {action} outside [0, {N_ACTIONS})")
    return action // 5, action % 5


def is_large_vaso(action: int) -> bool:
    """Vaso dose above the median of nonzero training doses (bins 3-4)."""
    return action_bins(action)[1] >= 3


# ---------------------------------------------------------------------------
# Trajectory discretization


def discretize_cohort(
    cohort: Cohort,
    clustering: StateClustering,
    grid: ActionGrid,
    censor_mode: str = CENSOR_MODE_TERMINAL_REWARD,
    max_steps: int = MAX_STEPS,
) -> list[DiscreteTrajectory]:
    """Map every trajectory through state assignment and action encoding.

    Censored trajectories get the same absorbing pseudo-transition as
    uncensored ones under ``terminal_reward`` (the replicated heuristic);
    under ``censored`` they carry no terminal transition at all.
    """
    if censor_mode not in CENSOR_MODES:
        raise DiscretizeError(f"unknown censor_mode {censor_mode!r}")
    features = _step_matrix(cohort)
    all_states = assign_states(clustering, features)

    out: list[DiscreteTrajectory] = []
    offset = 0
    for traj in cohort.trajectories:
        n = len(traj.steps)
        states = all_states[offset : offset + n]
        offset += n
        steps = tuple(
            (int(s), encode_action(grid, step.fluid_dose, step.vaso_dose))
            for s, step in zip(states, traj.steps)
        )
        censored = traj.is_censored(max_steps)
        terminal: str | None
        if traj.outcome == OUTCOME_CENSORED:
            if censor_mode == CENSOR_MODE_TERMINAL_REWARD:
                raise DiscretizeError(
                    f"trajectory {traj.id!r} is censored without a 90-day label; "
                    "terminal_reward mode needs the label to build the pseudo-transition"
                )
            terminal = None
        elif censored and censor_mode == CENSOR_MODE_CENSORED:
            terminal = None
        else:
            terminal = SURV if traj.outcome == OUTCOME_SURVIVAL else DEATH
        reward = None if terminal is None else (
            SURVIVAL_REWARD if terminal == SURV else MORTALITY_REWARD
        )
        out.append(
            DiscreteTrajectory(
                id=traj.id, steps=steps, terminal=terminal, censored=censored, reward=reward
            )
        )
    return out


def paths_to_discrete(
    paths: list[PathSample], censor_mode: str = CENSOR_MODE_TERMINAL_REWARD
) -> list[DiscreteTrajectory]:
    """Exact discrete trajectories from ground-truth path samples.

    Bypasses clustering and dose binning entirely, so estimators downstream
    can be checked against the generating MDP.
    """
    if censor_mode not in CENSOR_MODES:
        raise DiscretizeError(f"unknown censor_mode {censor_mode!r}")
    out = []
    for i, path in enumerate(paths):
        drop_terminal = path.censored and censor_mode == CENSOR_MODE_CENSORED
        terminal = None if drop_terminal else (
            SURV if path.outcome == OUTCOME_SURVIVAL else DEATH
        )
        reward = None if terminal is None else (
            SURVIVAL_REWARD if terminal == SURV else MORTALITY_REWARD
        )
        out.append(
            DiscreteTrajectory(
                id=f"synth-{i:06d}",
                steps=tuple(zip(path.states, path.actions)),
                terminal=terminal,
                censored=path.censored,
                reward=reward,
            )
        )
    return out
