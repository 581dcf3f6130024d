"""Command-line front end.

Subcommands::

    moqlab oracle ENV [--threshold T ...] [--csv PATH]
    moqlab run (CONFIG.yaml | preset:NAME) [overrides...]
    moqlab list
    moqlab emit-env ENV [--out PATH]

Exit status is 0 on success, 2 for usage or configuration errors and 1
for runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
import time

import yaml

from .agents import ALGORITHMS
from .core import InvalidConfiguration, InvalidInput
from .envs import ENVIRONMENTS, dump_model
from .harness import ExperimentSpec, build_model, run_experiment
from .oracle import evaluate_all, ser_optimal

__all__ = ["PRESETS", "load_run_config", "dump_run_config", "resolve_config", "main"]

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

_SPEC_FIELDS = {f.name for f in dataclasses.fields(ExperimentSpec)}

# One entry per learning experiment of chapters 4 to 9; unspecified
# fields keep the ExperimentSpec defaults (20 trials x 20,000 episodes).
PRESETS = {
    "ch4-basic": {"algorithm": "basic", "environment": "original"},
    "ch4-baseline": {"algorithm": "baseline-expected", "environment": "original"},
    "ch5-reward-design": {"algorithm": "baseline-expected", "environment": "reward-design"},
    "ch5-extra-state": {"algorithm": "baseline-expected", "environment": "extra-state"},
    "ch6-moss": {"algorithm": "moss", "environment": "original"},
    "ch6-moss-swapped": {"algorithm": "moss", "environment": "swapped"},
    "ch7-moss-two-phase": {"algorithm": "moss-two-phase", "environment": "original"},
    "ch7-moss-two-phase-swapped": {"algorithm": "moss-two-phase", "environment": "swapped"},
    "ch8-options": {"algorithm": "options", "environment": "original"},
    "ch8-options-swapped": {"algorithm": "options", "environment": "swapped"},
    "ch9-baseline-decayed": {"algorithm": "baseline-expected", "environment": "original", "decay": True},
    "ch9-moss-decayed": {"algorithm": "moss", "environment": "original", "decay": True},
    "ch9-moss-two-phase-decayed": {"algorithm": "moss-two-phase", "environment": "original", "decay": True},
    "ch9-options-decayed": {"algorithm": "options", "environment": "original", "decay": True},
}


def load_run_config(text: str) -> ExperimentSpec:
    """Parse a YAML run config; keys are the ExperimentSpec field names."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InvalidConfiguration(f"config is not valid YAML: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise InvalidConfiguration("config must be a key/value mapping")
    return _spec_from_dict(doc)


def dump_run_config(spec: ExperimentSpec) -> str:
    return yaml.safe_dump(spec.to_dict(), sort_keys=False)


def _spec_from_dict(doc: dict) -> ExperimentSpec:
    unknown = set(doc) - _SPEC_FIELDS
    if unknown:
        raise InvalidConfiguration(f"unknown config keys: {sorted(unknown)}")
    try:
        return ExperimentSpec(**doc)
    except TypeError as exc:
        raise InvalidConfiguration(str(exc)) from exc


def resolve_config(source: str) -> ExperimentSpec:
    """``preset:NAME`` or a path to a YAML config file."""
    if source.startswith("preset:"):
        name = source[len("preset:"):]
        if name not in PRESETS:
            raise InvalidConfiguration(f"unknown preset {name!r}; see `moqlab list`")
        return _spec_from_dict(dict(PRESETS[name]))
    try:
        with open(source) as fh:
            return load_run_config(fh.read())
    except FileNotFoundError:
        raise InvalidConfiguration(f"config file {source!r} not found") from None


# subcommands ---------------------------------------------------------------


def cmd_oracle(args) -> int:
    env = _check_env(args.env)
    spec = ExperimentSpec(environment=env, threshold=args.threshold)
    model = build_model(spec)
    best = ser_optimal(model)
    rows = []
    print(f"environment {model.name}, thresholds {[str(t) for t in model.thresholds]}")
    print(f"{'policy':<8}{'obj1':>12}{'obj2':>12}  exact")
    for e in evaluate_all(model):
        mark = "*" if e.label == best else " "
        f1, f2 = e.as_floats()[:2]
        exact_txt = ", ".join(str(x) for x in e.mean_return)
        print(f"{mark} {e.label:<6}{f1:>12.6g}{f2:>12.6g}  ({exact_txt})")
        rows.append([e.label, *(str(x) for x in e.mean_return), *e.as_floats(), e.label == best])
    print(f"SER-optimal under TLO: {best}")
    if args.csv:
        n = model.n_objectives
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["label"]
                + [f"exact_obj{i + 1}" for i in range(n)]
                + [f"obj{i + 1}" for i in range(n)]
                + ["ser_optimal"]
            )
            w.writerows(rows)
    return EXIT_OK


def cmd_run(args) -> int:
    spec = resolve_config(args.config)
    overrides = {
        "seed": args.seed,
        "trials": args.trials,
        "episodes": args.episodes,
        "alpha": args.alpha,
        "alpha_final": args.alpha_final,
        "epsilon": args.epsilon,
        "dd": args.dd,
        "dl": args.dl,
        "jobs": args.jobs,
        "out": args.out,
        "environment": args.env,
        "algorithm": args.algorithm,
        "threshold": args.threshold,
    }
    if args.decay:
        overrides["decay"] = True
    d = spec.to_dict()
    d.update({k: v for k, v in overrides.items() if v is not None})
    if d["out"] is None:
        d["out"] = "results"
    spec = _spec_from_dict(d)
    t0 = time.perf_counter()
    summary, _ = run_experiment(spec)
    dt = time.perf_counter() - t0
    print(f"{spec.algorithm} on {spec.environment}: {spec.trials} trials x {spec.episodes} episodes")
    for lab, c in sorted(summary.counts.items(), key=lambda kv: (-kv[1], kv[0])):
        print(f"  {lab:<6}{c:>4}")
    print(f"oracle optimum {summary.oracle_label}, match fraction {summary.match_fraction:.2f}")
    print(f"artifacts in {spec.out} ({dt:.1f} s)")
    return EXIT_OK


def cmd_list(args) -> int:
    print("environments:")
    for name in ENVIRONMENTS:
        print(f"  {name}")
    print("algorithms:")
    for name in ALGORITHMS:
        print(f"  {name}")
    print("presets:")
    for name, d in PRESETS.items():
        extra = ", decayed alpha" if d.get("decay") else ""
        print(f"  preset:{name:<28}{d['algorithm']} on {d['environment']}{extra}")
    return EXIT_OK


def cmd_emit_env(args) -> int:
    model = build_model(ExperimentSpec(environment=_check_env(args.env)))
    text = dump_model(model)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _check_env(env: str) -> str:
    if env not in ENVIRONMENTS:
        raise InvalidConfiguration(
            f"unknown environment {env!r}; choose from {sorted(ENVIRONMENTS)}"
        )
    return env


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="moqlab", description="Multi-objective Q(lambda) experiments on Space Traders."
    )
    sub = p.add_subparsers(dest="command", required=True)

    o = sub.add_parser("oracle", help="exact mean return of every deterministic policy")
    o.add_argument("env")
    o.add_argument("--threshold", type=float, nargs="+", help="replace the thresholds")
    o.add_argument("--csv", help="also write the table to this CSV file")
    o.set_defaults(func=cmd_oracle)

    r = sub.add_parser("run", help="run a multi-trial experiment")
    r.add_argument("config", help="YAML config path or preset:NAME")
    r.add_argument("--seed", type=int)
    r.add_argument("--trials", type=int)
    r.add_argument("--episodes", type=int)
    r.add_argument("--alpha", type=float)
    r.add_argument("--alpha-final", type=float)
    r.add_argument("--decay", action="store_true", help="decay alpha linearly to --alpha-final")
    r.add_argument("--epsilon", type=float)
    r.add_argument("--dd", type=int, help="data-gathering episodes per two-phase cycle")
    r.add_argument("--dl", type=int, help="learning episodes per two-phase cycle")
    r.add_argument("--jobs", type=int)
    r.add_argument("--out", help="output directory (default: results)")
    r.add_argument("--env")
    r.add_argument("--algorithm")
    r.add_argument("--threshold", type=float, nargs="+")
    r.set_defaults(func=cmd_run)

    ls = sub.add_parser("list", help="list environments, algorithms and presets")
    ls.set_defaults(func=cmd_list)

    e = sub.add_parser("emit-env", help="write a built-in model as YAML")
    e.add_argument("env")
    e.add_argument("--out")
    e.set_defaults(func=cmd_emit_env)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except (InvalidConfiguration, InvalidInput) as exc:
        print(f"moqlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"moqlab: I/O failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"moqlab: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
