"""Finite acyclic MOMDPs and the Space Traders family.

Models hold exact ``Fraction`` probabilities and rewards. Simulation runs
on a float copy compiled once per model (``model.fast``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
import yaml

from .core import InvalidConfiguration, InvalidInput, RewardVector, TloUtility

__all__ = [
    "Outcome",
    "MomdpModel",
    "EpisodeStep",
    "Leg",
    "ChainSpec",
    "DEFAULT_CHAIN",
    "space_traders_original",
    "space_traders_reward_design",
    "space_traders_swapped",
    "space_traders_extra_state",
    "forced_deterministic",
    "reset",
    "step",
    "mean_reward",
    "sample_rewards",
    "dump_model",
    "load_model",
    "ENVIRONMENTS",
    "make_environment",
]


def exact(x) -> Fraction:
    """Exact rational from an int, decimal string or float literal."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


def vec(*xs) -> RewardVector:
    return RewardVector(exact(x) for x in xs)


@dataclass(frozen=True)
class Outcome:
    probability: Fraction
    next_state: str
    reward: RewardVector


@dataclass(frozen=True)
class EpisodeStep:
    state: str
    action: str
    next_state: str
    reward: tuple
    done: bool


@dataclass(frozen=True)
class MomdpModel:
    """Declarative finite-horizon MOMDP.

    ``states`` lists the non-terminal states in a fixed order (which also
    fixes the letter order of policy labels); ``terminals`` lists absorbing
    states. ``outcomes`` maps ``(state, action)`` to its outcome list.
    """

    name: str
    states: tuple
    terminals: tuple
    initial: str
    actions: Mapping[str, tuple]
    outcomes: Mapping[tuple, tuple]
    n_objectives: int = 2
    gamma: Fraction = Fraction(1)
    thresholds: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "terminals", tuple(self.terminals))
        object.__setattr__(self, "actions", {s: tuple(a) for s, a in self.actions.items()})
        object.__setattr__(
            self, "outcomes", {k: tuple(v) for k, v in self.outcomes.items()}
        )
        object.__setattr__(self, "gamma", exact(self.gamma))
        object.__setattr__(self, "thresholds", tuple(exact(t) for t in self.thresholds))
        self._validate()

    def _validate(self):
        known = set(self.states) | set(self.terminals)
        if len(known) != len(self.states) + len(self.terminals):
            raise InvalidConfiguration("state names must be unique")
        if self.initial not in self.states:
            raise InvalidConfiguration(f"initial state {self.initial!r} is not a non-terminal state")
        if not 0 <= self.gamma <= 1:
            raise InvalidConfiguration("discount must lie in [0, 1]")
        if len(self.thresholds) != self.n_objectives - 1:
            raise InvalidConfiguration(
                f"{self.n_objectives} objectives need {self.n_objectives - 1} thresholds"
            )
        for s in self.states:
            acts = self.actions.get(s, ())
            if not acts:
                raise InvalidConfiguration(f"state {s!r} has no actions")
            letters = [a[0] for a in acts]
            if len(acts) > 1 and len(set(letters)) != len(letters):
                raise InvalidConfiguration(f"actions of {s!r} must start with distinct letters")
            for a in acts:
                outs = self.outcomes.get((s, a))
                if not outs:
                    raise InvalidConfiguration(f"({s!r}, {a!r}) has no outcomes")
                total = Fraction(0)
                for o in outs:
                    if o.probability < 0:
                        raise InvalidConfiguration(f"negative probability in ({s!r}, {a!r})")
                    if o.next_state not in known:
                        raise InvalidConfiguration(f"unknown next state {o.next_state!r}")
                    if len(o.reward) != self.n_objectives:
                        raise InvalidConfiguration(f"reward length mismatch in ({s!r}, {a!r})")
                    total += o.probability
                if total != 1:
                    raise InvalidConfiguration(f"probabilities of ({s!r}, {a!r}) sum to {total}")
        if set(self.actions) - set(self.states):
            raise InvalidConfiguration("actions declared for an unknown or terminal state")
        # acyclicity: depth-first search over the transition graph
        colour = {}

        def visit(s):
            colour[s] = 1
            for a in self.actions[s]:
                for o in self.outcomes[(s, a)]:
                    t = o.next_state
                    if t in self.terminals:
                        continue
                    if colour.get(t) == 1:
                        raise InvalidConfiguration(f"cycle through {t!r}")
                    if t not in colour:
                        visit(t)
            colour[s] = 2

        for s in self.states:
            if s not in colour:
                visit(s)

    # derived views -------------------------------------------------------

    @property
    def utility(self) -> TloUtility:
        return TloUtility(self.thresholds)

    @property
    def decision_states(self) -> tuple:
        """Non-terminal states with a real choice, in label order."""
        return tuple(s for s in self.states if len(self.actions[s]) > 1)

    def is_terminal(self, s: str) -> bool:
        return s in self.terminals

    @cached_property
    def fast(self) -> dict:
        """Float transition table: ``(s, a) -> [(cum_p, next, reward, done), ...]``."""
        table = {}
        for (s, a), outs in self.outcomes.items():
            acc = Fraction(0)
            rows = []
            for o in outs:
                acc += o.probability
                rows.append(
                    (
                        float(acc),
                        o.next_state,
                        tuple(float(r) for r in o.reward),
                        o.next_state in self.terminals,
                    )
                )
            table[(s, a)] = rows
        return table

    def structure(self) -> dict:
        """Plain-data description used for equality checks and serialization."""
        return _model_to_dict(self)


@dataclass(frozen=True)
class Leg:
    """One hop of the Direct chain between A and B."""

    action: str
    success_probability: Fraction
    success_reward: RewardVector
    failure_reward: RewardVector = field(default_factory=lambda: vec(0, 0))
    terminal_penalty: bool = True

    def __post_init__(self):
        object.__setattr__(self, "success_probability", exact(self.success_probability))
        object.__setattr__(self, "success_reward", vec(*self.success_reward))
        object.__setattr__(self, "failure_reward", vec(*self.failure_reward))


@dataclass(frozen=True)
class ChainSpec:
    """Replacement for A's Direct action: a chain of legs ending at B.

    Leg ``i`` leaves the ``i``-th chain state (A for the first leg, then
    C, C2, ...). With ``terminal_penalty`` set, a failed leg also costs -1
    on the first objective.
    """

    legs: tuple

    def __post_init__(self):
        object.__setattr__(self, "legs", tuple(self.legs))
        if not self.legs:
            raise InvalidConfiguration("chain needs at least one leg")
        for leg in self.legs:
            if not 0 < leg.success_probability <= 1:
                raise InvalidConfiguration(
                    f"leg probability must lie in (0, 1], got {leg.success_probability}"
                )
            if len(leg.success_reward) != 2 or len(leg.failure_reward) != 2:
                raise InvalidConfiguration("leg rewards must have two objectives")
        if self.legs[0].action[0] != "D":
            raise InvalidConfiguration("first leg replaces the Direct action and must start with 'D'")

    def chain_states(self) -> list[str]:
        return ["C" if i == 0 else f"C{i + 1}" for i in range(len(self.legs) - 1)]


DEFAULT_CHAIN = ChainSpec(
    (
        Leg("Direct", 1, (0, -1)),
        Leg("Continue", "0.9", (0, -5), (0, -1), terminal_penalty=False),
    )
)


_ACTIONS = ("Indirect", "Direct", "Teleport")


def _two_state(name, table, threshold, fail_penalty) -> MomdpModel:
    """Build an A/B Space Traders model from per-action success/failure data.

    ``table[state][action] = (p, success_reward, failure_reward)``; B's
    success outcome leads to ``goal``.
    """
    outcomes = {}
    for s, nxt in (("A", "B"), ("B", "goal")):
        for a in _ACTIONS:
            p, succ, fail = table[s][a]
            p = exact(p)
            outs = [Outcome(p, nxt, vec(*succ))]
            if p < 1:
                f = vec(*fail)
                if fail_penalty:
                    f = RewardVector((exact(-1), f[1]))
                outs.append(Outcome(1 - p, "fail", f))
            outcomes[(s, a)] = outs
    return MomdpModel(
        name=name,
        states=("A", "B"),
        terminals=("goal", "fail"),
        initial="A",
        actions={"A": _ACTIONS, "B": _ACTIONS},
        outcomes=outcomes,
        thresholds=(exact(threshold),),
    )


_ORIGINAL = {
    "A": {
        "Indirect": (1, (0, -12), None),
        "Direct": ("0.9", (0, -6), (0, -1)),
        "Teleport": ("0.85", (0, 0), (0, 0)),
    },
    "B": {
        "Indirect": (1, (1, -10), None),
        "Direct": ("0.9", (1, -8), (0, -7)),
        "Teleport": ("0.85", (1, 0), (0, 0)),
    },
}

_SWAPPED = {
    "A": {
        "Indirect": (1, (0, -10), None),
        "Direct": ("0.9", (0, -8), (0, -7)),
        "Teleport": ("0.85", (0, 0), (0, 0)),
    },
    "B": {
        "Indirect": (1, (1, -12), None),
        "Direct": ("0.9", (1, -6), (0, -1)),
        "Teleport": ("0.85", (1, 0), (0, 0)),
    },
}


def space_traders_original() -> MomdpModel:
    return _two_state("original", _ORIGINAL, "0.88", fail_penalty=False)


def space_traders_reward_design() -> MomdpModel:
    """Failures cost -1 on the success objective; threshold rescaled to 0.76."""
    return _two_state("reward-design", _ORIGINAL, "0.76", fail_penalty=True)


def space_traders_swapped() -> MomdpModel:
    return _two_state("swapped", _SWAPPED, "0.88", fail_penalty=False)


def space_traders_extra_state(spec: ChainSpec = DEFAULT_CHAIN) -> MomdpModel:
    """Reward-design model whose Direct route from A runs through a chain."""
    if not isinstance(spec, ChainSpec):
        raise InvalidConfiguration("extra-state variant needs a ChainSpec")
    base = space_traders_reward_design()
    chain = spec.chain_states()
    hops = ["A"] + chain + ["B"]
    outcomes = {k: v for k, v in base.outcomes.items() if k != ("A", "Direct")}
    actions = dict(base.actions)
    actions["A"] = tuple(spec.legs[0].action if a == "Direct" else a for a in actions["A"])
    for i, leg in enumerate(spec.legs):
        src, dst = hops[i], hops[i + 1]
        outs = [Outcome(leg.success_probability, dst, leg.success_reward)]
        if leg.success_probability < 1:
            f = leg.failure_reward
            if leg.terminal_penalty:
                f = RewardVector((f[0] - 1, f[1]))
            outs.append(Outcome(1 - leg.success_probability, "fail", f))
        outcomes[(src, leg.action)] = outs
        if i > 0:
            actions[src] = (leg.action,)
    return MomdpModel(
        name="extra-state",
        states=("A",) + tuple(chain) + ("B",),
        terminals=base.terminals,
        initial="A",
        actions=actions,
        outcomes=outcomes,
        thresholds=base.thresholds,
    )


def forced_deterministic(model: MomdpModel) -> MomdpModel:
    """Copy of ``model`` where every action succeeds with certainty.

    The surviving outcome of each action is its most probable one.
    """
    outcomes = {}
    for k, outs in model.outcomes.items():
        best = max(outs, key=lambda o: o.probability)
        outcomes[k] = (Outcome(Fraction(1), best.next_state, best.reward),)
    return MomdpModel(
        name=model.name + "-deterministic",
        states=model.states,
        terminals=model.terminals,
        initial=model.initial,
        actions=model.actions,
        outcomes=outcomes,
        n_objectives=model.n_objectives,
        gamma=model.gamma,
        thresholds=model.thresholds,
    )


def reset(model: MomdpModel) -> str:
    return model.initial


def step(model: MomdpModel, s: str, a: str, rng) -> EpisodeStep:
    """Sample one transition; consumes exactly one uniform draw from ``rng``."""
    if s not in model.actions:
        raise InvalidInput(f"cannot act in terminal or unknown state {s!r}")
    rows = model.fast.get((s, a))
    if rows is None:
        raise InvalidInput(f"action {a!r} is not available in state {s!r}")
    x = rng.random()
    for cum, nxt, r, done in rows:
        if x < cum:
            break
    return EpisodeStep(s, a, nxt, r, done)


def sample_rewards(model: MomdpModel, s: str, a: str, rng, size: int) -> np.ndarray:
    """``size`` immediate rewards of ``(s, a)`` as a ``(size, n)`` array.

    Uses the same cumulative table and uniform stream as :func:`step`, so
    it returns exactly the rewards of ``size`` successive ``step`` calls.
    """
    rows = model.fast.get((s, a))
    if rows is None:
        raise InvalidInput(f"action {a!r} is not available in state {s!r}")
    cum = np.array([r[0] for r in rows])
    rewards = np.array([r[2] for r in rows])
    idx = np.searchsorted(cum, rng.random(size), side="right")
    return rewards[np.minimum(idx, len(rows) - 1)]


def mean_reward(model: MomdpModel, s: str, a: str) -> RewardVector:
    """Exact expected immediate reward of ``(s, a)``."""
    total = RewardVector.zeros(model.n_objectives, Fraction(0))
    for o in model.outcomes[(s, a)]:
        total = total + o.reward * o.probability
    return total


# serialization -----------------------------------------------------------


def _num(x: Fraction):
    if x.denominator == 1:
        return int(x)
    return float(x)


def _model_to_dict(model: MomdpModel) -> dict:
    return {
        "name": model.name,
        "objectives": model.n_objectives,
        "gamma": _num(model.gamma),
        "thresholds": [_num(t) for t in model.thresholds],
        "initial": model.initial,
        "states": list(model.states),
        "terminals": list(model.terminals),
        "actions": {s: list(model.actions[s]) for s in model.states},
        "outcomes": {
            s: {
                a: [
                    {
                        "p": _num(o.probability),
                        "next": o.next_state,
                        "reward": [_num(r) for r in o.reward],
                    }
                    for o in model.outcomes[(s, a)]
                ]
                for a in model.actions[s]
            }
            for s in model.states
        },
    }


_MODEL_KEYS = {
    "name", "objectives", "gamma", "thresholds", "initial",
    "states", "terminals", "actions", "outcomes",
}


def _model_from_dict(d: dict) -> MomdpModel:
    unknown = set(d) - _MODEL_KEYS
    if unknown:
        raise InvalidConfiguration(f"unknown model keys: {sorted(unknown)}")
    try:
        outcomes = {}
        for s, per_action in d["outcomes"].items():
            for a, outs in per_action.items():
                outcomes[(s, a)] = [
                    Outcome(exact(o["p"]), o["next"], vec(*o["reward"])) for o in outs
                ]
        return MomdpModel(
            name=d.get("name", "custom"),
            states=d["states"],
            terminals=d["terminals"],
            initial=d["initial"],
            actions=d["actions"],
            outcomes=outcomes,
            n_objectives=d.get("objectives", 2),
            gamma=d.get("gamma", 1),
            thresholds=d["thresholds"],
        )
    except (KeyError, TypeError) as exc:
        raise InvalidConfiguration(f"malformed model document: {exc}") from exc


def dump_model(model: MomdpModel) -> str:
    """Serialize to the YAML model format."""
    return yaml.safe_dump(_model_to_dict(model), sort_keys=False)


def load_model(text: str) -> MomdpModel:
    return _model_from_dict(yaml.safe_load(text))


ENVIRONMENTS = {
    "original": space_traders_original,
    "reward-design": space_traders_reward_design,
    "extra-state": space_traders_extra_state,
    "swapped": space_traders_swapped,
}


def make_environment(env_id: str) -> MomdpModel:
    try:
        return ENVIRONMENTS[env_id]()
    except KeyError:
        raise InvalidConfiguration(
            f"unknown environment {env_id!r}; choose from {sorted(ENVIRONMENTS)}"
        ) from None
