"""Command-line experiment driver.

Subcommands: ``gen-env``, ``train``, ``evaluate``, ``verify-props`` and
``model-based``.  Exit codes: 0 ok, 1 usage, 2 validation, 3 a proposition
check whose hypothesis held but whose conclusion failed.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import shutil
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from ._jit import backend_name
from .automaton import AutomatonError, load_automaton
from .evaluator import (
    DEFAULT_STATE_CAP,
    ProductTooLargeError,
    build_explicit_pmdp,
    model_based_optimal,
    satisfaction_probability,
    verify_propositions,
)
from .gridworld import (
    LabelingSpec,
    MdpError,
    bundled_env,
    bundled_labeling,
    generate,
    load_explicit_file,
    save_explicit,
)
from .learner import PolicyKind, Schedule, ScheduleError, TrainingError, preset, train
from .product import ProductSpace, RewardParams

log = logging.getLogger("ltlexplore")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_PROPERTY = 0, 1, 2, 3

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = ["policy", "seed", "episode", "avg_sat_prob", "epsilon", "delta_b", "delta_e"]
TIMING_COLUMNS = ["policy", "seed", "episode", "elapsed_s"]
POLICY_FORMAT = "ltlexplore-policy"


class ConfigError(ValueError):
    pass


class UsageError(Exception):
    pass


# -- configuration -------------------------------------------------------------
CONFIG_SCHEMA = {
    "type": "object",
    "required": ["env", "automaton", "policies", "tau", "num_episodes", "seeds"],
    "properties": {
        "env": {
            "type": "object",
            "properties": {
                "grid": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
                "labeling": {"type": ["string", "object"]},
                "seed": {"type": "integer"},
                "explicit": {"type": "string"},
            },
        },
        "automaton": {
            "type": ["object", "string"],
            "properties": {"file": {"type": "string"}, "format": {"enum": ["auto", "hoa", "json"]}},
        },
        "task_name": {"type": "string"},
        "policies": {"type": "array", "minItems": 1, "items": {"type": "object", "required": ["kind"]}},
        "schedule_environment": {"enum": ["small", "large"]},
        "reward": {"type": "object"},
        "tau": {"type": "integer", "minimum": 1},
        "num_episodes": {"type": "integer", "minimum": 1},
        "eval_every": {"type": "integer", "minimum": 0},
        "seeds": {"type": "array", "minItems": 1, "items": {"type": "integer"}},
        "model_freeze_episode": {"type": ["integer", "null"], "minimum": 1},
        "output_dir": {"type": "string"},
        "workers": {"type": "integer", "minimum": 1},
        "state_cap": {"type": "integer", "minimum": 1},
        "label_source": {"type": "boolean"},
        "random_start": {"type": "boolean"},
    },
}


@dataclass
class ExperimentConfig:
    env: dict
    automaton: dict
    policies: list
    tau: int
    num_episodes: int
    seeds: list
    task_name: str = ""
    schedule_environment: str = "small"
    reward: dict = field(default_factory=dict)
    eval_every: int = 0
    model_freeze_episode: int | None = None
    output_dir: str = "results"
    workers: int = 1
    state_cap: int = DEFAULT_STATE_CAP
    label_source: bool = False
    random_start: bool = True

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(doc, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config {where}: {exc.message}") from None
        doc = dict(doc)
        if isinstance(doc["automaton"], str):
            doc["automaton"] = {"file": doc["automaton"]}
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        cfg = cls(**doc)
        cfg.check()
        return cfg

    def check(self) -> None:
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if self.eval_every > self.num_episodes:
            raise ConfigError("eval_every must not exceed num_episodes")
        if self.model_freeze_episode is not None and self.model_freeze_episode < 1:
            raise ConfigError("model_freeze_episode must be positive")
        env = self.env
        if ("grid" in env) == ("explicit" in env):
            raise ConfigError("env needs exactly one of 'grid' or 'explicit'")
        names = [policy_from_config(p, self.schedule_environment).label for p in self.policies]
        if len(set(names)) != len(names):
            raise ConfigError(f"policy names must be unique, got {names}")
        self.reward_params()

    def reward_params(self) -> RewardParams:
        try:
            return RewardParams(**self.reward)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"reward: {exc}") from None

    def to_dict(self) -> dict:
        return {k: copy.deepcopy(getattr(self, k)) for k in self.__dataclass_fields__}


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return ExperimentConfig.from_dict(doc)


def schedule_from_config(spec, environment="small") -> Schedule:
    if isinstance(spec, str):
        return preset(spec, environment)
    spec = dict(spec)
    if "preset" in spec:
        return preset(spec["preset"], spec.get("environment", environment))
    if "table" in spec:
        spec["table"] = tuple(tuple(row) for row in spec["table"])
    return Schedule(**spec)


def policy_from_config(spec: dict, environment="small") -> PolicyKind:
    try:
        sched = spec.get("schedule")
        return PolicyKind(
            kind=spec["kind"],
            schedule=schedule_from_config(sched, environment) if sched is not None else None,
            temperature=float(spec.get("temperature", 1.0)),
            ucb_c=float(spec.get("ucb_c", 1.0)),
            name=spec.get("name", ""),
        )
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"policy {spec!r}: {exc}") from None


def _labeling(spec) -> LabelingSpec:
    if isinstance(spec, dict):
        return LabelingSpec.from_json(spec)
    if spec.startswith("bundled:"):
        return bundled_labeling(spec.split(":", 1)[1])
    return LabelingSpec.from_json(Path(spec).read_text())


def load_env(env: dict):
    if "explicit" in env:
        spec = env["explicit"]
        if spec.startswith("bundled:"):
            return bundled_env(spec.split(":", 1)[1])
        return load_explicit_file(spec)
    w, h = env["grid"]
    labeling = _labeling(env["labeling"]) if env.get("labeling") else LabelingSpec({})
    return generate(int(w), int(h), labeling, seed=int(env.get("seed", 0)))


def build_space(cfg: ExperimentConfig) -> ProductSpace:
    mdp = load_env(cfg.env)
    aut = load_automaton(cfg.automaton["file"])
    return ProductSpace(mdp, aut, label_source=cfg.label_source)


# -- training --------------------------------------------------------------------
def _run_job(args):
    cfg_doc, index, seed = args
    cfg = ExperimentConfig.from_dict(cfg_doc)
    spec = cfg.policies[index]
    policy = policy_from_config(spec, cfg.schedule_environment)
    space = build_space(cfg)
    rp = cfg.reward_params()
    try:
        pmdp = build_explicit_pmdp(space, cfg.state_cap) if cfg.eval_every else None
    except ProductTooLargeError as exc:
        log.warning("evaluation disabled: %s", exc)
        pmdp = None

    def evaluate(pi):
        return satisfaction_probability(pmdp, pi).avg if pmdp is not None else float("nan")

    freeze = spec.get("model_freeze_episode", cfg.model_freeze_episode)
    result = train(
        space, policy, rp, tau=cfg.tau, num_episodes=cfg.num_episodes, seed=seed, eval_every=cfg.eval_every,
        evaluate=evaluate, random_start=cfg.random_start, model_freeze_episode=freeze,
    )
    greedy = np.argmax(result.policy, axis=1)
    return policy.label, seed, result.rows, greedy.tolist(), space.num_states, space.num_actions


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> list:
    """Train every (policy, seed) pair; results come back sorted by (policy, seed)."""
    jobs = [(cfg.to_dict(), i, s) for i in range(len(cfg.policies)) for s in cfg.seeds]
    workers = workers or cfg.workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    return sorted(results, key=lambda r: (r[0], r[1]))


def write_results(cfg: ExperimentConfig, results, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "results.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for name, seed, rows, *_ in results:
            for e, _, p, eps, db, de in rows:
                w.writerow([name, seed, e, repr(float(p)), repr(float(eps)), repr(float(db)), repr(float(de))])
    with open(out_dir / "timing.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMING_COLUMNS)
        for name, seed, rows, *_ in results:
            for e, elapsed, *_ in rows:
                w.writerow([name, seed, e, f"{elapsed:.6f}"])
    schema = {"schema_version": CSV_SCHEMA_VERSION, "columns": CSV_COLUMNS, "timing_columns": TIMING_COLUMNS}
    (out_dir / "results.schema.json").write_text(json.dumps(schema, indent=2) + "\n")
    (out_dir / "config.resolved.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    pol_dir = out_dir / "policies"
    pol_dir.mkdir(exist_ok=True)
    for name, seed, _, greedy, S, A in results:
        doc = {"format": POLICY_FORMAT, "version": 1, "policy": name, "seed": seed,
               "num_states": S, "num_actions": A, "actions": greedy}
        (pol_dir / f"{_slug(name)}_seed{seed}.json").write_text(json.dumps(doc) + "\n")
    return csv_path


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in name)


# -- policies on disk --------------------------------------------------------------
def load_policy(path, num_states: int, num_actions: int, avail: np.ndarray) -> np.ndarray:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != POLICY_FORMAT:
        raise ConfigError(f"{path}: not a policy file")
    if doc["num_states"] != num_states or doc["num_actions"] != num_actions:
        raise ConfigError(
            f"{path}: policy is for {doc['num_states']} states x {doc['num_actions']} actions, "
            f"instance has {num_states} x {num_actions}"
        )
    if "probabilities" in doc:
        pi = np.asarray(doc["probabilities"], dtype=float)
    else:
        acts = np.asarray(doc["actions"], dtype=np.int64)
        pi = np.zeros((num_states, num_actions))
        pi[np.arange(num_states), acts] = 1.0
    if pi.shape != (num_states, num_actions) or np.any(pi < 0):
        raise ConfigError(f"{path}: malformed policy")
    if np.any((pi > 0) & ~avail):
        raise ConfigError(f"{path}: policy uses unavailable actions")
    if not np.allclose(pi.sum(axis=1), 1.0, atol=1e-9):
        raise ConfigError(f"{path}: policy rows must sum to 1")
    return pi


def save_policy(path, pi: np.ndarray, name: str = "") -> None:
    doc = {"format": POLICY_FORMAT, "version": 1, "policy": name,
           "num_states": pi.shape[0], "num_actions": pi.shape[1]}
    if np.all((pi == 0) | (pi == 1)):
        doc["actions"] = np.argmax(pi, axis=1).tolist()
    else:
        doc["probabilities"] = pi.tolist()
    Path(path).write_text(json.dumps(doc) + "\n")


# -- subcommands ---------------------------------------------------------------------
def _instance_from_args(args) -> ProductSpace:
    if args.env:
        env = {"explicit": args.env}
    elif args.grid:
        env = {"grid": args.grid, "labeling": args.labeling, "seed": args.env_seed}
    else:
        raise UsageError("give --env or --grid")
    return ProductSpace(load_env(env), load_automaton(args.automaton), label_source=args.label_source)


def _emit(doc: dict, out) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_gen_env(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.corridor:
        from importlib import resources

        src = resources.files("ltlexplore").joinpath("data").joinpath("envs").joinpath(f"corridor_{args.corridor}.json")
        dest = out / f"corridor_{args.corridor}.json"
        with resources.as_file(src) as p:
            shutil.copyfile(p, dest)
        print(dest)
        return EXIT_OK
    if not args.grid:
        raise UsageError("gen-env needs --grid W H or --corridor")
    labeling = _labeling(args.labeling) if args.labeling else LabelingSpec({})
    w, h = args.grid
    mdp = generate(w, h, labeling, seed=args.seed)
    env_path = out / f"{args.name or f'grid_{w}x{h}_s{args.seed}'}.json"
    save_explicit(mdp, env_path)
    lab_path = env_path.with_suffix(".labels.json")
    lab_path.write_text(json.dumps(labeling.to_json(), indent=2) + "\n")
    print(env_path)
    print(lab_path)
    return EXIT_OK


def cmd_train(args) -> int:
    doc = json.loads(Path(args.config).read_text()) if args.config else {}
    for key, value in (("num_episodes", args.episodes), ("tau", args.tau), ("eval_every", args.eval_every),
                       ("seeds", args.seeds), ("output_dir", args.output_dir), ("workers", args.workers)):
        if value is not None:
            doc[key] = value
    cfg = ExperimentConfig.from_dict(doc)
    t0 = time.perf_counter()
    results = run_experiment(cfg)
    path = write_results(cfg, results, Path(cfg.output_dir))
    log.info("trained %d runs in %.1fs (%s backend)", len(results), time.perf_counter() - t0, backend_name())
    print(path)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    space = _instance_from_args(args)
    pmdp = build_explicit_pmdp(space, args.state_cap)
    pi = load_policy(args.policy, pmdp.num_states, pmdp.num_actions, pmdp.avail)
    report = satisfaction_probability(pmdp, pi)
    _emit(report.to_json(), args.out)
    return EXIT_OK


def cmd_model_based(args) -> int:
    space = _instance_from_args(args)
    pmdp = build_explicit_pmdp(space, args.state_cap)
    pi, report = model_based_optimal(pmdp)
    if args.policy_out:
        save_policy(args.policy_out, pi, "model-based")
    _emit(report.to_json(), args.out)
    return EXIT_OK


def cmd_verify_props(args) -> int:
    rows = verify_propositions(args.instances, args.seed, tuple(args.props))
    header = f"{'prop':>4} {'instances':>9} {'hyp_met':>8} {'concl_held':>10} {'failures':>8}"
    print(header)
    for r in rows:
        print(f"{r['prop']:>4} {r['instances']:>9} {r['hypothesis_met']:>8} {r['conclusion_held']:>10} {r['failures']:>8}")
    if args.out:
        Path(args.out).write_text(json.dumps(rows, indent=2) + "\n")
    return EXIT_PROPERTY if any(r["failures"] for r in rows) else EXIT_OK


# -- parser ------------------------------------------------------------------------
class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _instance_args(p) -> None:
    p.add_argument("--env", help="explicit MDP JSON (path or bundled:NAME)")
    p.add_argument("--grid", type=int, nargs=2, metavar=("W", "H"), help="generate a grid instead")
    p.add_argument("--labeling", help="labeling JSON for --grid (path or bundled:NAME)")
    p.add_argument("--env-seed", type=int, default=0)
    p.add_argument("--automaton", required=True, help="automaton file (.json, .hoa or bundled:NAME)")
    p.add_argument("--label-source", action="store_true", help="step the automaton on the source state's label")
    p.add_argument("--state-cap", type=int, default=DEFAULT_STATE_CAP)
    p.add_argument("--out", help="write the report here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ltlexplore", description="Biased-exploration Q-learning for temporal-logic tasks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-env", help="write a random grid MDP (or a corridor fixture) as explicit JSON")
    p.add_argument("--grid", type=int, nargs=2, metavar=("W", "H"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--labeling")
    p.add_argument("--corridor", choices=["i", "ii"])
    p.add_argument("--name")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_gen_env)

    p = sub.add_parser("train", help="train every (policy, seed) pair of a config")
    p.add_argument("--config", required=True)
    p.add_argument("--episodes", type=int)
    p.add_argument("--tau", type=int)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--seeds", type=_int_list)
    p.add_argument("--output-dir")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="exact satisfaction probability of a saved policy")
    p.add_argument("--policy", required=True)
    _instance_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("model-based", help="optimal policy of the explicit product")
    _instance_args(p)
    p.add_argument("--policy-out")
    p.set_defaults(func=cmd_model_based)

    p = sub.add_parser("verify-props", help="randomized exact checks of the exploration guarantees")
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--props", type=_int_list, default=[1, 2, 3, 4, 5, 6])
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify_props)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ltlexplore: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, AutomatonError, MdpError, ScheduleError, ProductTooLargeError, TrainingError,
            jsonschema.ValidationError, OSError, json.JSONDecodeError) as exc:
        print(f"ltlexplore: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
