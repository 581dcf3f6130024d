"""Seeded multi-trial experiments with CSV persistence.

Trial ``k`` of an experiment with master seed ``m`` draws all of its
randomness from ``numpy.random.default_rng(SeedSequence([m, k]))``. The
mix is pure integer hashing inside numpy, so any single trial can be
re-run on any platform with :func:`run_trial`.
"""

from __future__ import annotations

import csv
import dataclasses
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import yaml

from .agents import ALGORITHMS, AgentConfig
from .core import InvalidConfiguration, InvalidInput, Schedule
from .envs import ENVIRONMENTS, MomdpModel, make_environment
from .oracle import above_threshold_labels, enumerate_policies, ser_optimal

__all__ = [
    "ExperimentSpec",
    "TrialResult",
    "ExperimentSummary",
    "build_model",
    "trial_rng",
    "run_trial",
    "run_experiment",
    "summarize",
    "emit_policy_chart",
    "write_trial_log",
]


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce one table of final-policy counts.

    ``threshold`` optionally replaces the environment's thresholds.
    With ``decay`` set, the learning rate falls linearly from ``alpha``
    to ``alpha_final`` over the episode budget.
    """

    environment: str = "original"
    algorithm: str = "baseline-expected"
    trials: int = 20
    episodes: int = 20_000
    seed: int = 0
    alpha: float = 0.01
    alpha_final: float = 0.0001
    decay: bool = False
    lam: float = 0.95
    gamma: float = 1.0
    epsilon: float = 0.05
    dd: int = 500
    dl: int = 1500
    threshold: tuple | None = None
    out: str | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.threshold is not None:
            object.__setattr__(self, "threshold", tuple(self.threshold))
        if self.environment not in ENVIRONMENTS:
            raise InvalidConfiguration(
                f"unknown environment {self.environment!r}; choose from {sorted(ENVIRONMENTS)}"
            )
        if self.algorithm not in ALGORITHMS:
            raise InvalidConfiguration(
                f"unknown algorithm {self.algorithm!r}; choose from {sorted(ALGORITHMS)}"
            )
        if self.trials < 1:
            raise InvalidConfiguration("need at least one trial")
        if self.jobs < 1:
            raise InvalidConfiguration("jobs must be at least 1")
        if self.seed < 0:
            raise InvalidConfiguration("master seed must be non-negative")
        if not self.alpha > 0:
            raise InvalidConfiguration("alpha must be positive")
        # surfaces bad agent parameters at construction time
        self.agent_config()

    def agent_config(self) -> AgentConfig:
        if self.decay:
            alpha = Schedule.linear(self.alpha, self.alpha_final, self.episodes)
        else:
            alpha = Schedule.constant(self.alpha)
        return AgentConfig(
            alpha=alpha,
            gamma=self.gamma,
            lam=self.lam,
            episodes=self.episodes,
            epsilon=self.epsilon,
            dd=self.dd,
            dl=self.dl,
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if self.threshold is not None:
            d["threshold"] = list(self.threshold)
        return d


@dataclass
class TrialResult:
    trial: int
    seed: tuple  # (master seed, trial index)
    final_label: str
    log: list = field(repr=False)
    option_counts: tuple | None = None  # episodes per option, options agents only


@dataclass
class ExperimentSummary:
    algorithm: str
    environment: str
    oracle_label: str
    counts: dict
    matched: list

    @property
    def trials(self) -> int:
        return len(self.matched)

    @property
    def match_fraction(self) -> float:
        return sum(self.matched) / len(self.matched)

    @property
    def modal_label(self) -> str:
        # ties resolved alphabetically so the answer is order independent
        return min(self.counts, key=lambda lab: (-self.counts[lab], lab))

    def count(self, label: str) -> int:
        return self.counts.get(label, 0)


def build_model(spec: ExperimentSpec) -> MomdpModel:
    model = make_environment(spec.environment)
    if spec.threshold is not None:
        th = tuple(Fraction(str(t)) for t in spec.threshold)
        model = dataclasses.replace(model, thresholds=th)
    return model


def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, trial]))


def run_trial(spec: ExperimentSpec, trial: int, model: MomdpModel | None = None) -> TrialResult:
    """Run trial ``trial`` of ``spec`` in isolation (no files written)."""
    if trial < 0:
        raise InvalidInput(f"trial index must be non-negative, got {trial}")
    model = model or build_model(spec)
    agent = ALGORITHMS[spec.algorithm](model, spec.agent_config(), trial_rng(spec.seed, trial))
    result = agent.train()
    counts = getattr(agent, "option_counts", None)
    return TrialResult(
        trial, (spec.seed, trial), result.final_label, result.log,
        tuple(counts) if counts is not None else None,
    )


def summarize(results: list, oracle_label: str, algorithm: str = "", environment: str = "") -> ExperimentSummary:
    if not results:
        raise InvalidInput("cannot summarize an empty result list")
    ordered = sorted(results, key=lambda r: r.trial)
    counts = Counter(r.final_label for r in ordered)
    return ExperimentSummary(
        algorithm,
        environment,
        oracle_label,
        dict(sorted(counts.items())),
        [r.final_label == oracle_label for r in ordered],
    )


def _log_header(log: list, labels: list) -> list:
    head = ["episode", "greedy_label", "return_obj1", "return_obj2", "alpha", "temperature"]
    if log and log[0].option_q is not None:
        for lab in labels:
            head += [f"q_{lab}_obj1", f"q_{lab}_obj2"]
    return head


def write_trial_log(path: str, result: TrialResult, labels: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_log_header(result.log, labels))
        for rec in result.log:
            row = [rec.episode, rec.label, *_fmt(rec.ret), _fmt1(rec.alpha), _fmt1(rec.temperature)]
            if rec.option_q is not None:
                for q in rec.option_q:
                    row += _fmt(q)
            w.writerow(row)


def emit_policy_chart(result: TrialResult, above: set, labels: list, path: str | None = None) -> list:
    """Per-episode chart rows ``(episode, label, ordinal, above_threshold)``.

    ``labels`` fixes the ordinal of every policy; ``above`` holds the labels
    whose exact mean return meets the thresholds. Rows are also written to
    ``path`` as CSV when given.
    """
    order = {lab: i for i, lab in enumerate(labels)}
    rows = [
        (rec.episode, rec.label, order.get(rec.label, -1), rec.label in above)
        for rec in result.log
    ]
    if path is not None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["episode", "label", "ordinal", "above_threshold"])
            for ep, lab, o, flag in rows:
                w.writerow([ep, lab, o, int(flag)])
    return rows


def _fmt(v) -> list:
    return [_fmt1(x) for x in v]


def _fmt1(x) -> str:
    return repr(float(x))


def _trial_job(args):
    spec, k, out = args
    model = build_model(spec)
    res = run_trial(spec, k, model)
    if out is not None:
        _persist_trial(out, res, model)
    return res


def _persist_trial(out: str, res: TrialResult, model: MomdpModel) -> None:
    labels = enumerate_policies(model)
    write_trial_log(os.path.join(out, f"trial_{res.trial}_log.csv"), res, labels)
    emit_policy_chart(
        res, above_threshold_labels(model), labels, os.path.join(out, f"chart_{res.trial}.csv")
    )


def _write_summary(out: str, s: ExperimentSummary) -> None:
    with open(os.path.join(out, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "environment", "label", "count", "oracle_optimal", "match_fraction"])
        for lab, c in s.counts.items():
            w.writerow([s.algorithm, s.environment, lab, c, s.oracle_label, repr(s.match_fraction)])


def _write_manifest(out: str, spec: ExperimentSpec, status: str, **extra) -> None:
    doc = {"spec": spec.to_dict(), "master_seed": spec.seed, "seed_mix": "SeedSequence([master_seed, trial])", "status": status}
    doc.update(extra)
    with open(os.path.join(out, "manifest.yaml"), "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def run_experiment(spec: ExperimentSpec) -> tuple[ExperimentSummary, list]:
    """Run every trial of ``spec``; returns the summary and the trial results.

    With ``spec.out`` set, per-trial logs and charts, ``summary.csv`` and
    ``manifest.yaml`` are written there. An I/O failure part-way leaves
    the files written so far plus a manifest with a failure note, then
    re-raises.
    """
    model = build_model(spec)
    oracle_label = ser_optimal(model)
    out = spec.out
    if out is not None:
        os.makedirs(out, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise PermissionError(f"output directory {out!r} is not writable")
    jobs = [(spec, k, out) for k in range(spec.trials)]
    try:
        if spec.jobs == 1:
            results = [_trial_job(j) for j in jobs]
        else:
            with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
                results = list(pool.map(_trial_job, jobs))
        summary = summarize(results, oracle_label, spec.algorithm, spec.environment)
        if out is not None:
            _write_summary(out, summary)
            _write_manifest(
                out, spec, "complete", oracle_label=oracle_label, counts=summary.counts
            )
    except OSError as exc:
        if out is not None:
            try:
                _write_manifest(out, spec, "failed", failure=str(exc))
            except OSError:
                pass
        raise
    return summary, results
