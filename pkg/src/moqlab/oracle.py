"""Exact evaluation of every deterministic policy of an acyclic MOMDP.

Returns are expanded trajectory by trajectory in rational arithmetic, so
the reported means carry no rounding error.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from .core import InvalidInput, RewardVector, TloUtility, tlo_argmax
from .envs import MomdpModel

__all__ = [
    "PolicyEvaluation",
    "enumerate_policies",
    "policy_from_label",
    "label_from_policy",
    "evaluate_policy",
    "evaluate_all",
    "ser_optimal",
    "above_threshold_labels",
]

GOAL = "goal"


@dataclass(frozen=True)
class PolicyEvaluation:
    label: str
    mean_return: RewardVector
    success_probability: Fraction
    trajectories: tuple  # (probability, cumulative return, terminal state)

    def as_floats(self) -> tuple:
        return tuple(float(x) for x in self.mean_return)


def enumerate_policies(model: MomdpModel) -> list[str]:
    """All deterministic policy labels.

    Letters follow ``model.decision_states``; within a state, actions are
    taken in declaration order, so the original model yields
    II, ID, IT, DI, DD, DT, TI, TD, TT.
    """
    choices = [[a[0] for a in model.actions[s]] for s in model.decision_states]
    return ["".join(p) for p in itertools.product(*choices)]


def policy_from_label(model: MomdpModel, label: str) -> dict:
    """Map a label to ``{state: action}`` over every non-terminal state."""
    decision = model.decision_states
    if len(label) != len(decision):
        raise InvalidInput(f"label {label!r} needs {len(decision)} letters")
    policy = {s: model.actions[s][0] for s in model.states}
    for s, letter in zip(decision, label):
        match = [a for a in model.actions[s] if a[0] == letter]
        if not match:
            raise InvalidInput(f"no action starting with {letter!r} in state {s!r}")
        policy[s] = match[0]
    return policy


def label_from_policy(model: MomdpModel, policy: dict) -> str:
    return "".join(policy[s][0] for s in model.decision_states)


def evaluate_policy(model: MomdpModel, label: str) -> PolicyEvaluation:
    policy = policy_from_label(model, label)
    n = model.n_objectives
    zero = RewardVector.zeros(n, Fraction(0))
    finished = []
    frontier = [(Fraction(1), zero, Fraction(1), model.initial)]
    while frontier:
        prob, ret, disc, s = frontier.pop()
        for o in model.outcomes[(s, policy[s])]:
            if o.probability == 0:
                continue
            p = prob * o.probability
            r = ret + o.reward * disc
            if o.next_state in model.terminals:
                finished.append((p, r, o.next_state))
            else:
                frontier.append((p, r, disc * model.gamma, o.next_state))
    mean = zero
    success = Fraction(0)
    for p, r, end in finished:
        mean = mean + r * p
        if end == GOAL:
            success += p
    return PolicyEvaluation(label, mean, success, tuple(finished))


def evaluate_all(model: MomdpModel) -> list[PolicyEvaluation]:
    return [evaluate_policy(model, lab) for lab in enumerate_policies(model)]


def ser_optimal(model: MomdpModel, u: TloUtility | None = None) -> str:
    """Label of the TLO-best mean return; ties go to the alphabetically first label."""
    u = u or model.utility
    evals = evaluate_all(model)
    return min(evals[i].label for i in tlo_argmax([e.mean_return for e in evals], u))


def above_threshold_labels(model: MomdpModel, u: TloUtility | None = None) -> set[str]:
    """Labels whose mean return meets every threshold."""
    u = u or model.utility
    out = set()
    for e in evaluate_all(model):
        if all(e.mean_return[i] >= t for i, t in enumerate(u.thresholds)):
            out.add(e.label)
    return out
