"""Command-line pipeline driver.

Each command reads and writes one study bundle directory. A one-line JSON
summary goes to stdout for scripting; human-readable detail goes to stderr.
Exit codes: 0 success, 1 validation error (bad input or missing stage),
2 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import bundle as bundle_io
from .bundle import BundleError, Study, StudyConfig
from .cohort import (
    CohortError,
    generate_synthetic,
    ground_truth_from_dict,
    ingest,
    split,
)
from .diagnostics import (
    discharge_treatment_report,
    length_report,
    rare_action_report,
    report_dict,
    termination_bias,
)
from .discretize import DiscretizeError, discretize_cohort, fit_actions, fit_states
from .inspection import InspectionError, surprising_outcomes, surprising_treatments
from .mdp import MdpError, estimate
from .planner import PlannerError, solve
from .rollout import RolloutError, batch

USAGE_ERRORS = (
    CohortError,
    DiscretizeError,
    MdpError,
    PlannerError,
    RolloutError,
    InspectionError,
    BundleError,
    ValueError,
)

# Artifact attribute -> pipeline stage that produces it.
STAGE_FOR = {
    "full_cohort": "synth (or ingest)",
    "train_cohort": "split",
    "test_cohort": "split",
    "clustering": "discretize",
    "grid": "discretize",
    "discrete_train": "discretize",
    "discrete_test": "discretize",
    "model": "estimate",
    "behavior": "estimate",
    "target": "solve",
    "rollouts": "rollout",
}


class MissingStageError(ValueError):
    pass


def _require(study: Study, *attrs: str) -> None:
    for attr in attrs:
        if getattr(study, attr) is None:
            raise MissingStageError(
                f"bundle has no {attr.replace('_', ' ')}; run `{STAGE_FOR[attr]}` first"
            )


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True))


def _note(text: str) -> None:
    print(text, file=sys.stderr)


def _load(bundle_dir: str) -> Study:
    return bundle_io.load(bundle_dir)


def _save(bundle_dir: str, study: Study) -> None:
    bundle_io.save(bundle_dir, study)


def cmd_synth(args) -> dict:
    gt = ground_truth_from_dict(json.loads(Path(args.gt_file).read_text()))
    cohort = generate_synthetic(gt, args.n, seed=args.seed)
    study = Study(study_id=args.study_id, config=StudyConfig(max_steps=args.max_steps))
    study.full_cohort = cohort
    study.seeds["synth"] = args.seed
    _save(args.bundle, study)
    return {
        "command": "synth",
        "trajectories": len(cohort),
        "feature_dim": cohort.feature_dim,
        "bundle": args.bundle,
    }


def cmd_ingest(args) -> dict:
    result = ingest(args.input, args.format, max_steps=args.max_steps)
    study = Study(study_id=args.study_id, config=StudyConfig(max_steps=args.max_steps))
    study.full_cohort = result.cohort
    _save(args.bundle, study)
    _note(f"ingested {len(result.cohort)} trajectories, dropped {result.dropped}")
    return {
        "command": "ingest",
        "trajectories": len(result.cohort),
        "dropped": result.dropped,
        "feature_dim": result.cohort.feature_dim,
        "bundle": args.bundle,
    }


def cmd_split(args) -> dict:
    study = _load(args.bundle)
    _require(study, "full_cohort")
    train, test = split(study.full_cohort, args.train_fraction, seed=args.seed)
    study.train_cohort, study.test_cohort = train, test
    study.seeds["split"] = args.seed
    _save(args.bundle, study)
    return {"command": "split", "train": len(train), "test": len(test)}


def cmd_discretize(args) -> dict:
    study = _load(args.bundle)
    _require(study, "train_cohort", "test_cohort")
    config = replace(
        study.config,
        k=args.k,
        censor_mode=args.censor_mode,
        max_steps=args.max_steps,
    )
    clustering = fit_states(study.train_cohort, k=config.k, seed=args.seed,
                            max_iters=args.max_iters)
    grid = fit_actions(study.train_cohort)
    study.clustering, study.grid = clustering, grid
    study.discrete_train = discretize_cohort(
        study.train_cohort, clustering, grid, config.censor_mode, config.max_steps
    )
    study.discrete_test = discretize_cohort(
        study.test_cohort, clustering, grid, config.censor_mode, config.max_steps
    )
    study.config = config
    study.seeds["clustering"] = args.seed
    # Refitting invalidates everything built on the previous discretization.
    study.model = study.behavior = study.rewards = study.target = None
    study.rollouts = None
    _save(args.bundle, study)
    return {
        "command": "discretize",
        "k": config.k,
        "censor_mode": config.censor_mode,
        "fluid_edges": list(grid.fluid_edges),
        "vaso_edges": list(grid.vaso_edges),
    }


def cmd_estimate(args) -> dict:
    study = _load(args.bundle)
    _require(study, "discrete_train", "clustering")
    config = replace(study.config, min_count=args.min_count)
    model, behavior, rewards = estimate(
        study.discrete_train, min_count=config.min_count, n_states=study.clustering.k
    )
    study.model, study.behavior, study.rewards = model, behavior, rewards
    study.config = config
    study.target = None
    _save(args.bundle, study)
    return {
        "command": "estimate",
        "transitions": model.total_transitions(),
        "visited_states": len(behavior.support_counts),
        "min_count": config.min_count,
    }


def cmd_solve(args) -> dict:
    study = _load(args.bundle)
    _require(study, "model")
    config = replace(study.config, gamma=args.gamma, tol=args.tol,
                     max_sweeps=args.max_sweeps)
    target = solve(study.model, study.rewards, gamma=config.gamma, tol=config.tol,
                   max_sweeps=config.max_sweeps)
    study.target = target
    study.config = config
    _save(args.bundle, study)
    return {
        "command": "solve",
        "sweeps": target.sweeps_used,
        "fallback_states": int(target.fallback.sum()),
        "gamma": config.gamma,
    }


def cmd_rollout(args) -> dict:
    study = _load(args.bundle)
    _require(study, "model", "discrete_train", "discrete_test")
    config = replace(study.config, n_rollouts=args.n_rollouts)
    if args.policy == "target":
        _require(study, "target")
        policy = study.target
    else:
        policy = study.behavior
    source = study.discrete_test if args.source == "test" else study.discrete_train
    starts = [(t.initial_state, config.n_rollouts) for t in source]
    study.rollouts = batch(study.model, policy, starts, max_steps=config.max_steps,
                           seed=args.seed, policy_tag=args.policy)
    study.config = config
    study.seeds["rollout"] = args.seed
    _save(args.bundle, study)
    terminals: dict[str, int] = {}
    for sim in study.rollouts:
        terminals[sim.terminal] = terminals.get(sim.terminal, 0) + 1
    return {
        "command": "rollout",
        "n_rollouts": len(study.rollouts),
        "policy": args.policy,
        "source": args.source,
        "terminals": terminals,
    }


def cmd_inspect_treatment(args) -> dict:
    study = _load(args.bundle)
    _require(study, "behavior", "target", "grid")
    config = replace(study.config, freq_threshold=args.freq_threshold)
    ranking = surprising_treatments(study.behavior, study.target, study.grid,
                                    config.freq_threshold)
    study.config = config
    _save(args.bundle, study)
    for ts in ranking[: args.limit]:
        _note(
            f"state {ts.state}: policy action {ts.rl_action} seen "
            f"{ts.rl_action_count}/{ts.state_visits} ({ts.rl_action_freq:.4f}), "
            f"common action {ts.common_action} seen {ts.common_action_count}"
        )
    return {
        "command": "inspect-treatment",
        "flagged_states": len(ranking),
        "freq_threshold": config.freq_threshold,
        "top_states": [ts.state for ts in ranking[: args.limit]],
    }


def cmd_inspect_outcome(args) -> dict:
    study = _load(args.bundle)
    _require(study, "discrete_test", "model", "target")
    config = replace(study.config, n_rollouts=args.n_rollouts)
    ranking = surprising_outcomes(study.discrete_test, study.model, study.target,
                                  n_rollouts=config.n_rollouts, seed=args.seed)
    study.config = config
    study.seeds["inspect"] = args.seed
    _save(args.bundle, study)
    for entry in ranking.entries[: args.limit]:
        _note(
            f"initial state {entry.initial_state}: gap {entry.gap:+.1f} over "
            f"{entry.n_trajectories} trajectories"
        )
    return {
        "command": "inspect-outcome",
        "ranked_states": len(ranking.entries),
        "skipped_trajectories": ranking.skipped_trajectories,
        "top_gaps": [entry.gap for entry in ranking.entries[: args.limit]],
    }


def cmd_report(args) -> dict:
    study = _load(args.bundle)
    name = args.name
    if name == "length":
        _require(study, "discrete_train", "model", "behavior")
        report = length_report(study.discrete_train, study.model, study.behavior,
                               n_rollouts_per_start=args.n_rollouts, seed=args.seed,
                               max_steps=study.config.max_steps)
    elif name == "termination":
        _require(study, "discrete_train", "model")
        report = termination_bias(study.model, study.discrete_train,
                                  n_bootstrap=args.n_bootstrap, seed=args.seed,
                                  max_steps=study.config.max_steps)
        study.seeds["bootstrap"] = args.seed
    elif name == "rare_action":
        _require(study, "behavior", "target", "grid")
        report = rare_action_report(study.behavior, study.target, study.grid,
                                    top_n=args.top_n)
    elif name == "discharge":
        _require(study, "discrete_train", "rollouts", "grid")
        report = discharge_treatment_report(study.discrete_train, study.rollouts,
                                            study.grid)
    else:
        raise ValueError(f"unknown report {name!r}")
    payload = report_dict(report)
    study.reports[name] = payload
    _save(args.bundle, study)
    if args.svg:
        _emit_svg(name, payload, args.svg)
    summary = {"command": f"report {name}", "bundle": args.bundle}
    if name == "length":
        summary["total_variation_distance"] = payload["total_variation_distance"]
    elif name == "termination":
        summary["prefinal_actual"] = payload["overall_prefinal"]["actual"]
        summary["prefinal_predicted"] = payload["overall_prefinal"]["predicted"]
    elif name == "rare_action":
        summary["avg_rl_action_freq"] = payload["avg_rl_action_freq"]
        summary["transition_mass_fraction"] = payload["transition_mass_fraction"]
    elif name == "discharge":
        summary["rollout_survivors"] = payload["rollout_survivors"]
    return summary


def _emit_svg(name: str, payload: dict, path: str) -> None:
    if name == "length":
        _length_chart(payload, path)
    elif name == "termination":
        _termination_chart(payload, path)
    else:
        raise ValueError(f"--svg supports the length and termination reports, not {name!r}")


def _length_chart(payload: dict, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps = range(1, payload["max_steps"] + 1)
    fig, (left, right) = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    left.bar(steps, payload["train_histogram"], color="tab:blue")
    left.set_title("Training trajectories")
    right.bar(steps, payload["rollout_histogram"], color="tab:orange")
    right.set_title("Model-based roll-outs (behavior policy)")
    for ax in (left, right):
        ax.set_xlabel("Trajectory length (steps)")
    left.set_ylabel("Count")
    fig.suptitle(
        f"Trajectory lengths (TV distance {payload['total_variation_distance']:.3f})"
    )
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def _termination_chart(payload: dict, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps = [s["step"] for s in payload["steps"]]
    fig, ax = plt.subplots(figsize=(7, 4))
    for key, color, label in (
        ("actual", "tab:blue", "actual termination proportion"),
        ("predicted", "tab:orange", "predicted termination probability"),
    ):
        points = [s[key] for s in payload["steps"]]
        lo = [s[f"{key}_lo"] for s in payload["steps"]]
        hi = [s[f"{key}_hi"] for s in payload["steps"]]
        xs = [x for x, p in zip(steps, points) if p is not None]
        ax.plot(xs, [p for p in points if p is not None], color=color, label=label)
        band = [
            (x, a, b)
            for x, a, b in zip(steps, lo, hi)
            if a is not None and b is not None
        ]
        if band:
            ax.fill_between(
                [b[0] for b in band],
                [b[1] for b in band],
                [b[2] for b in band],
                color=color,
                alpha=0.25,
                linewidth=0,
            )
    ax.set_xlabel("Time step")
    ax.set_ylabel("Probability of immediate termination")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def cmd_serve(args) -> dict:
    from .service import serve

    _note(f"serving bundle {args.bundle} on {args.bind}")
    serve(args.bundle, args.bind)
    return {"command": "serve", "bundle": args.bundle}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajscope",
        description="Model-based RL study pipeline and inspection service",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--bundle", required=True, help="study bundle directory")
        p.set_defaults(fn=fn)
        return p

    p = add("synth", cmd_synth, help="generate a synthetic cohort from a ground-truth MDP")
    p.add_argument("--gt-file", required=True, help="ground-truth MDP JSON")
    p.add_argument("--n", type=int, default=1000, help="number of trajectories")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=20)
    p.add_argument("--study-id", default="study")

    p = add("ingest", cmd_ingest, help="ingest a cohort file")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["csv", "jsonl"], required=True)
    p.add_argument("--max-steps", type=int, default=20)
    p.add_argument("--study-id", default="study")

    p = add("split", cmd_split, help="train/test split by trajectory id")
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)

    p = add("discretize", cmd_discretize, help="fit state clustering and dose grid")
    p.add_argument("--k", type=int, default=750)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--censor-mode", choices=["terminal_reward", "censored"],
                   default="terminal_reward")
    p.add_argument("--max-steps", type=int, default=20)

    p = add("estimate", cmd_estimate, help="estimate transition model and behavior policy")
    p.add_argument("--min-count", type=int, default=5)

    p = add("solve", cmd_solve, help="value-iterate the target policy")
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-sweeps", type=int, default=10_000)

    p = add("rollout", cmd_rollout, help="materialize model-based roll-outs")
    p.add_argument("--n-rollouts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--policy", choices=["target", "behavior"], default="target")
    p.add_argument("--source", choices=["test", "train"], default="test")

    p = add("inspect-treatment", cmd_inspect_treatment,
            help="rank states with surprisingly aggressive recommended treatments")
    p.add_argument("--freq-threshold", type=float, default=0.01)
    p.add_argument("--limit", type=int, default=10)

    p = add("inspect-outcome", cmd_inspect_outcome,
            help="rank initial states with surprisingly positive predicted outcomes")
    p.add_argument("--n-rollouts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit", type=int, default=10)

    p = add("report", cmd_report, help="compute a diagnostic report")
    p.add_argument("name", choices=list(bundle_io.REPORT_NAMES))
    p.add_argument("--n-rollouts", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-bootstrap", type=int, default=1000)
    p.add_argument("--top-n", type=int, default=100)
    p.add_argument("--svg", help="also write an SVG chart (length/termination)")

    p = add("serve", cmd_serve, help="serve the bundle over HTTP")
    p.add_argument("--bind", default="127.0.0.1:8000")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        summary = args.fn(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    _emit(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
