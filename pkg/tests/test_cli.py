from __future__ import annotations

import json

from trajscope.cli import main

from conftest import make_gt


def gt_json(tmp_path, **kwargs):
    gt = make_gt(**kwargs)
    path = tmp_path / "gt.json"
    path.write_text(
        json.dumps(
            {
                "n_states": gt.n_states,
                "n_actions": gt.n_actions,
                "transition_probs": gt.transition_probs.tolist(),
                "behavior_probs": gt.behavior_probs.tolist(),
                "emission_centers": gt.emission_centers.tolist(),
                "emission_scale": gt.emission_scale,
                "censor_horizon": gt.censor_horizon,
            }
        )
    )
    return path


def run(capsys, *argv) -> tuple[int, dict | None]:
    code = main(list(argv))
    out = capsys.readouterr().out.strip()
    return code, (json.loads(out.splitlines()[-1]) if out else None)


def run_pipeline(tmp_path, capsys, bundle: str, seed: int = 7) -> None:
    gt_path = gt_json(tmp_path, n_states=3, absorb=0.3, seed=3,
                      action_ids=[0, 6, 12, 18])
    steps = [
        ("synth", "--gt-file", str(gt_path), "--n", "120", "--seed", str(seed)),
        ("split", "--train-fraction", "0.8", "--seed", str(seed)),
        ("discretize", "--k", "3", "--seed", str(seed)),
        ("estimate", "--min-count", "2"),
        ("solve",),
        ("rollout", "--n-rollouts", "3", "--seed", str(seed)),
        ("inspect-treatment",),
        ("inspect-outcome", "--seed", str(seed)),
        ("report", "length", "--seed", str(seed)),
        ("report", "termination", "--n-bootstrap", "50", "--seed", str(seed)),
        ("report", "rare_action",),
        ("report", "discharge",),
    ]
    for step in steps:
        code, summary = run(capsys, step[0], *step[1:], "--bundle", bundle)
        assert code == 0, f"{step[0]} failed"
        assert summary is not None


class TestPipeline:
    def test_full_pipeline_and_summaries(self, tmp_path, capsys):
        bundle = str(tmp_path / "b")
        run_pipeline(tmp_path, capsys, bundle)
        manifest = json.loads((tmp_path / "b" / "manifest.json").read_text())
        assert manifest["config"]["k"] == 3
        assert manifest["seeds"]["synth"] == 7
        for rel in ("reports/length.json", "reports/termination.json",
                    "reports/rare_action.json", "reports/discharge.json",
                    "policy/target.json", "rollouts/rollouts.jsonl"):
            assert rel in manifest["hashes"]

    def test_deterministic_bundles(self, tmp_path, capsys):
        run_pipeline(tmp_path, capsys, str(tmp_path / "one"), seed=11)
        run_pipeline(tmp_path, capsys, str(tmp_path / "two"), seed=11)
        one = {
            p.relative_to(tmp_path / "one").as_posix(): p.read_bytes()
            for p in (tmp_path / "one").rglob("*")
            if p.is_file()
        }
        two = {
            p.relative_to(tmp_path / "two").as_posix(): p.read_bytes()
            for p in (tmp_path / "two").rglob("*")
            if p.is_file()
        }
        assert one.keys() == two.keys()
        for rel in one:
            if rel == "manifest.json":
                a = json.loads(one[rel])
                b = json.loads(two[rel])
                a.pop("created_at")
                b.pop("created_at")
                assert a == b
            else:
                assert one[rel] == two[rel], rel

    def test_svg_emission(self, tmp_path, capsys):
        bundle = str(tmp_path / "b")
        run_pipeline(tmp_path, capsys, bundle)
        svg = tmp_path / "length.svg"
        code, _ = run(capsys, "report", "length", "--bundle", bundle,
                      "--svg", str(svg))
        assert code == 0
        assert svg.read_text().lstrip().startswith("<?xml")
        svg2 = tmp_path / "termination.svg"
        code, _ = run(capsys, "report", "termination", "--n-bootstrap", "20",
                      "--bundle", bundle, "--svg", str(svg2))
        assert code == 0
        assert "<svg" in svg2.read_text()[:500]


class TestDefaults:
    def test_flag_defaults_follow_study_design(self):
        # Defaults recorded into manifests match the replicated design:
        # k=750, min_count=5, max_steps=20, n_rollouts=5, threshold 1%.
        from trajscope.cli import build_parser

        parser = build_parser()
        defaults = {
            ("discretize", "k"): 750,
            ("discretize", "max_steps"): 20,
            ("estimate", "min_count"): 5,
            ("rollout", "n_rollouts"): 5,
            ("inspect-treatment", "freq_threshold"): 0.01,
            ("inspect-outcome", "n_rollouts"): 5,
            ("report", "n_bootstrap"): 1000,
            ("report", "top_n"): 100,
        }
        sub_actions = next(
            a for a in parser._actions if isinstance(a, type(parser._actions[-1]))
            and hasattr(a, "choices") and a.choices and "discretize" in a.choices
        )
        for (command, dest), expected in defaults.items():
            sub = sub_actions.choices[command]
            actual = next(a.default for a in sub._actions if a.dest == dest)
            assert actual == expected, (command, dest)

    def test_rewards_are_plus_minus_100(self):
        from trajscope.mdp import RewardModel

        r = RewardModel()
        assert (r.survival_reward, r.mortality_reward, r.step_reward) == (100.0, -100.0, 0.0)


class TestErrors:
    def test_solve_before_estimate_names_stage(self, tmp_path, capsys):
        gt_path = gt_json(tmp_path, n_states=2, absorb=0.4, seed=1,
                          action_ids=[0, 6])
        bundle = str(tmp_path / "b")
        assert run(capsys, "synth", "--gt-file", str(gt_path), "--n", "30",
                   "--bundle", bundle)[0] == 0
        code = main(["solve", "--bundle", bundle])
        err = capsys.readouterr().err
        assert code == 1
        assert "estimate" in err

    def test_split_before_synth(self, tmp_path, capsys):
        bundle = str(tmp_path / "missing")
        code = main(["split", "--bundle", bundle])
        assert code == 1
        assert "manifest" in capsys.readouterr().err

    def test_bad_fraction_is_validation_error(self, tmp_path, capsys):
        gt_path = gt_json(tmp_path, n_states=2, absorb=0.4, seed=1,
                          action_ids=[0, 6])
        bundle = str(tmp_path / "b")
        run(capsys, "synth", "--gt-file", str(gt_path), "--n", "10", "--bundle", bundle)
        code = main(["split", "--train-fraction", "0.01", "--bundle", bundle])
        assert code == 1

    def test_svg_unsupported_report(self, tmp_path, capsys):
        bundle = str(tmp_path / "b")
        run_pipeline(tmp_path, capsys, bundle)
        code = main(["report", "discharge", "--bundle", bundle,
                     "--svg", str(tmp_path / "x.svg")])
        assert code == 1
