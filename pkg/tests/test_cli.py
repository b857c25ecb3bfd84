import csv
import hashlib
import json
from importlib import resources

import numpy as np
import pytest

from ltlexplore.cli import (
    CSV_COLUMNS,
    ConfigError,
    EXIT_OK,
    EXIT_PROPERTY,
    EXIT_USAGE,
    EXIT_VALIDATION,
    ExperimentConfig,
    load_policy,
    main,
    save_policy,
)
from ltlexplore.evaluator import build_explicit_pmdp, satisfaction_probability
from ltlexplore.gridworld import load_explicit_file
from ltlexplore.product import ProductSpace

CORRIDOR = {
    "env": {"explicit": "bundled:corridor_i"},
    "automaton": "bundled:reach_exit.json",
    "policies": [
        {"kind": "eps-delta", "schedule": "Biased1", "name": "Biased1"},
        {"kind": "eps-greedy", "schedule": "Random", "name": "Random"},
    ],
    "tau": 30,
    "num_episodes": 1000,
    "eval_every": 100,
    "seeds": [0, 1],
}


def write_config(tmp_path, **overrides):
    doc = dict(CORRIDOR, output_dir=str(tmp_path / "out"), **overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("train")
    cfg = write_config(tmp)
    assert main(["train", "--config", str(cfg)]) == EXIT_OK
    return tmp


class TestTrain:
    def test_one_row_per_snapshot(self, run):
        with open(run / "out" / "results.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == CSV_COLUMNS
        assert len(rows) == 2 * 2 * 10
        assert [(r["policy"], r["seed"]) for r in rows[::10]] == [
            ("Biased1", "0"), ("Biased1", "1"), ("Random", "0"), ("Random", "1")
        ]
        assert all(0.0 <= float(r["avg_sat_prob"]) <= 1.0 for r in rows)
        assert {r["episode"] for r in rows} == {str(100 * k) for k in range(1, 11)}

    def test_side_outputs(self, run):
        out = run / "out"
        schema = json.loads((out / "results.schema.json").read_text())
        assert schema["columns"] == CSV_COLUMNS and schema["schema_version"] == 1
        with open(out / "timing.csv") as fh:
            assert len(list(csv.DictReader(fh))) == 40
        assert sorted(p.name for p in (out / "policies").iterdir()) == [
            "Biased1_seed0.json", "Biased1_seed1.json", "Random_seed0.json", "Random_seed1.json"
        ]

    def test_rerun_is_identical(self, run, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["train", "--config", str(cfg), "--workers", "2"]) == EXIT_OK
        assert (run / "out" / "results.csv").read_bytes() == (tmp_path / "out" / "results.csv").read_bytes()
        a = json.loads((run / "out" / "config.resolved.json").read_text())
        b = json.loads((tmp_path / "out" / "config.resolved.json").read_text())
        assert b.pop("workers") == 2 and a.pop("workers") == 1
        assert a.pop("output_dir") != b.pop("output_dir") and a == b
        for p in (run / "out" / "policies").iterdir():
            assert sha(p) == sha(tmp_path / "out" / "policies" / p.name)

    def test_saved_policy_evaluates(self, run, tmp_path):
        pol = run / "out" / "policies" / "Biased1_seed0.json"
        report = tmp_path / "report.json"
        code = main(["evaluate", "--policy", str(pol), "--env", "bundled:corridor_i",
                     "--automaton", "bundled:reach_exit.json", "--out", str(report)])
        assert code == EXIT_OK
        with open(run / "out" / "results.csv") as fh:
            last = [r for r in csv.DictReader(fh) if r["policy"] == "Biased1" and r["seed"] == "0"][-1]
        assert json.loads(report.read_text())["avg"] == pytest.approx(float(last["avg_sat_prob"]), abs=1e-12)


class TestEvaluate:
    def test_optimal_and_uniform(self, tmp_path, corridor_i, reach_aut):
        opt_pol = tmp_path / "opt.json"
        opt_rep = tmp_path / "opt_report.json"
        args = ["--env", "bundled:corridor_i", "--automaton", "bundled:reach_exit.json"]
        assert main(["model-based", *args, "--policy-out", str(opt_pol), "--out", str(opt_rep)]) == EXIT_OK
        assert json.loads(opt_rep.read_text())["avg"] == pytest.approx(1.0, abs=1e-9)

        pm = build_explicit_pmdp(ProductSpace(corridor_i, reach_aut))
        uniform = pm.avail / pm.avail.sum(axis=1, keepdims=True)
        uni_pol = tmp_path / "uniform.json"
        save_policy(uni_pol, uniform)
        rep = tmp_path / "uniform_report.json"
        assert main(["evaluate", "--policy", str(uni_pol), *args, "--out", str(rep)]) == EXIT_OK
        uni = json.loads(rep.read_text())
        assert uni["avg"] <= 1.0 + 1e-9
        assert uni["avg"] == pytest.approx(satisfaction_probability(pm, uniform).avg, abs=1e-12)

    def test_report_round_trip(self, tmp_path, capsys):
        pol = tmp_path / "opt.json"
        args = ["--env", "bundled:corridor_ii", "--automaton", "bundled:reach_exit.json"]
        assert main(["model-based", *args, "--policy-out", str(pol)]) == EXIT_OK
        first = json.loads(capsys.readouterr().out)
        assert main(["evaluate", "--policy", str(pol), *args]) == EXIT_OK
        second = json.loads(capsys.readouterr().out)
        assert first.pop("method") == "model-based-optimal" and second.pop("method") == "bscc-reachability"
        assert second == first
        assert json.loads(json.dumps(second)) == second

    def test_policy_file_checks(self, tmp_path):
        avail = np.ones((3, 2), dtype=bool)
        pi = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])
        path = tmp_path / "p.json"
        save_policy(path, pi)
        assert np.array_equal(load_policy(path, 3, 2, avail), pi)
        with pytest.raises(ConfigError, match="states"):
            load_policy(path, 4, 2, avail)
        avail[0, 0] = False
        with pytest.raises(ConfigError, match="unavailable"):
            load_policy(path, 3, 2, avail)


class TestGenEnv:
    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            assert main(["gen-env", "--grid", "10", "10", "--seed", "7", "--out-dir", str(d)]) == EXIT_OK
        env = a / "grid_10x10_s7.json"
        assert sha(env) == sha(b / "grid_10x10_s7.json")
        assert sha(env) == "7feb5dfb48c9be4b2be0faedba0007aa638f61239bd826ac99d186f9d498013d"

    def test_large_grid(self, tmp_path):
        assert main(["gen-env", "--grid", "50", "50", "--name", "big", "--out-dir", str(tmp_path)]) == EXIT_OK
        assert load_explicit_file(tmp_path / "big.json").num_states == 2500
        assert (tmp_path / "big.labels.json").exists()

    @pytest.mark.parametrize("which", ["i", "ii"])
    def test_corridor_copied_verbatim(self, tmp_path, which):
        assert main(["gen-env", "--corridor", which, "--out-dir", str(tmp_path)]) == EXIT_OK
        src = resources.files("ltlexplore") / "data" / "envs" / f"corridor_{which}.json"
        assert (tmp_path / f"corridor_{which}.json").read_bytes() == src.read_bytes()


class TestVerifyProps:
    def test_table(self, tmp_path, capsys):
        out = tmp_path / "props.json"
        assert main(["verify-props", "--instances", "4", "--seed", "1", "--out", str(out)]) == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0].split() == ["prop", "instances", "hyp_met", "concl_held", "failures"]
        assert len(lines) == 7
        rows = json.loads(out.read_text())
        assert [r["prop"] for r in rows] == [1, 2, 3, 4, 5, 6]
        assert all(r["failures"] == 0 and r["instances"] == 4 for r in rows)

    def test_failure_exit_code(self, monkeypatch):
        import ltlexplore.cli as cli

        def fake(instances, seed, which):
            return [{"prop": 2, "instances": 1, "hypothesis_met": 1, "conclusion_held": 0, "failures": 1}]

        monkeypatch.setattr(cli, "verify_propositions", fake)
        assert main(["verify-props", "--instances", "1"]) == EXIT_PROPERTY


class TestErrors:
    def test_usage(self, capsys):
        assert main([]) == EXIT_USAGE
        assert main(["train"]) == EXIT_USAGE
        assert main(["gen-env"]) == EXIT_USAGE
        assert main(["evaluate", "--policy", "x", "--automaton", "bundled:reach_exit.json"]) == EXIT_USAGE

    def test_validation(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "missing.json")]) == EXIT_VALIDATION
        bad = write_config(tmp_path, eval_every=5000)
        assert main(["train", "--config", str(bad)]) == EXIT_VALIDATION
        assert main(["train", "--config", str(write_config(tmp_path, seeds=[]))]) == EXIT_VALIDATION
        (tmp_path / "junk.json").write_text("{not json")
        assert main(["train", "--config", str(tmp_path / "junk.json")]) == EXIT_VALIDATION
        assert main(["model-based", "--env", "bundled:corridor_i", "--automaton", "bundled:nope"]) == EXIT_VALIDATION

    def test_cap(self):
        args = ["--grid", "10", "10", "--labeling", "bundled:coverage_10x10_labels",
                "--automaton", "bundled:coverage.json", "--state-cap", "100"]
        assert main(["model-based", *args]) == EXIT_VALIDATION

    @pytest.mark.parametrize("bad", [
        {"seeds": []},
        {"eval_every": 2000},
        {"policies": [{"kind": "eps-greedy", "name": "x"}, {"kind": "ucb1", "name": "x"}]},
        {"reward": {"gamma": 1.5}},
        {"env": {"grid": [3, 3], "explicit": "bundled:corridor_i"}},
        {"colour": "blue"},
    ])
    def test_config_invariants(self, bad):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(dict(CORRIDOR, **bad))

    def test_bundled_configs_parse(self):
        root = resources.files("ltlexplore") / "data" / "configs"
        for p in root.iterdir():
            ExperimentConfig.from_dict(json.loads(p.read_text()))
