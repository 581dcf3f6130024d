"""Tabular multi-objective Q(lambda) agents.

Five learners share one skeleton: vector-valued Q tables keyed on
augmented states, Watkins-style eligibility traces, TLO greedy selection
and rank-softmax exploration.

* :class:`BasicMOQL` -- augmentation by the actual reward accumulated so far.
* :class:`BaselineExpectedMOQL` -- augmentation by accumulated *expected*
  immediate rewards, learned in a sibling table ``I``.
* :class:`MossAgent` -- single-phase stochastic-state agent; action values
  blend local Q values with global visit statistics.
* :class:`TwoPhaseMossAgent` -- alternates greedy data-gathering phases
  (statistics only) with exploratory learning phases (Q only).
* :class:`OptionsAgent` -- one fixed deterministic policy ("option") per
  episode, followed to termination.

Vectors inside the agents are plain lists of floats; this keeps the inner
loop cheap enough for 20 x 20,000-episode experiments in pure Python.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .core import (
    InvalidConfiguration,
    InvalidInput,
    Schedule,
    rank_by_tlo,
    tlo_argmax,
    tlo_greedy,
)
from .envs import MomdpModel
from .oracle import enumerate_policies, policy_from_label

__all__ = [
    "AgentConfig",
    "EpisodeRecord",
    "QTable",
    "GlobalStats",
    "PolicyOption",
    "TrainingResult",
    "holistic_values",
    "update_statistics",
    "BasicMOQL",
    "BaselineExpectedMOQL",
    "MossAgent",
    "TwoPhaseMossAgent",
    "OptionsAgent",
    "make_options",
    "run_basic_moql",
    "run_baseline_expected",
    "run_moss_single",
    "run_moss_two_phase",
    "run_options",
    "greedy_policy_label",
    "ALGORITHMS",
]


@dataclass(frozen=True)
class AgentConfig:
    """Hyperparameters shared by all agents.

    ``temperature`` defaults to a linear anneal from 10 to 2 over the
    episode budget. ``stats_warm_start`` makes every MOSS statistic use
    step size ``max(alpha, 1/n)`` where ``n`` counts its samples, so a
    freshly initialised statistic starts from its first observation
    instead of crawling up from zero.

    Augmented-state keys quantize the accumulation of the thresholded
    objectives only; the last objective shifts every action's utility by
    the same amount and cannot change a TLO decision. ``key_final``
    includes it anyway.
    """

    alpha: Schedule = Schedule.constant(0.01)
    gamma: float = 1.0
    lam: float = 0.95
    temperature: Schedule | None = None
    episodes: int = 20_000
    epsilon: float = 0.05
    dd: int = 500
    dl: int = 1500
    grid: float = 0.1
    q_init: float = 0.0
    stats_warm_start: bool = True
    key_final: bool = False

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise InvalidConfiguration(f"gamma must lie in [0, 1], got {self.gamma}")
        if not 0 <= self.lam <= 1:
            raise InvalidConfiguration(f"lambda must lie in [0, 1], got {self.lam}")
        if not 0 < self.epsilon < 1:
            raise InvalidConfiguration(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.dd < 1 or self.dl < 1:
            raise InvalidConfiguration("phase durations must be at least 1 episode")
        if self.episodes < 1:
            raise InvalidConfiguration("episode budget must be positive")
        if not self.grid > 0:
            raise InvalidConfiguration("quantization grid must be positive")

    @property
    def temperature_schedule(self) -> Schedule:
        if self.temperature is not None:
            return self.temperature
        return Schedule.linear(10.0, 2.0, self.episodes)

    @classmethod
    def decayed(cls, initial=0.01, final=0.0001, episodes=20_000, **kw) -> "AgentConfig":
        return cls(alpha=Schedule.linear(initial, final, episodes), episodes=episodes, **kw)


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    label: str
    ret: tuple
    alpha: float
    temperature: float
    option_q: tuple | None = None


class QTable:
    """Vector Q estimates keyed by (augmented) state, one row per action.

    Rows materialise with ``q_init`` on first touch. Augmented keys are
    ``(state, quantized accumulation)``; quantization rounds the first
    ``key_dims`` components to the nearest multiple of ``grid``.
    """

    def __init__(
        self,
        n_objectives: int,
        q_init: float = 0.0,
        grid: float = 0.1,
        key_dims: int | None = None,
    ):
        self.n = n_objectives
        self.q_init = q_init
        self.grid = grid
        self.key_dims = n_objectives if key_dims is None else key_dims
        self.table: dict = {}

    def key(self, state: str, acc: Sequence[float]) -> tuple:
        g = self.grid
        return (state, tuple(round(acc[i] / g) for i in range(self.key_dims)))

    def row(self, key, n_actions: int) -> list:
        r = self.table.get(key)
        if r is None:
            r = [[self.q_init] * self.n for _ in range(n_actions)]
            self.table[key] = r
        return r

    def peek(self, key, n_actions: int) -> list:
        """Like :meth:`row` but never inserts."""
        r = self.table.get(key)
        if r is None:
            return [[self.q_init] * self.n for _ in range(n_actions)]
        return r

    def __len__(self):
        return len(self.table)


@dataclass
class GlobalStats:
    """Episode-level statistics behind the MOSS holistic action values."""

    n: int
    E_pi: list = None
    v_pi: int = 0
    E: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    b: set = field(default_factory=set)
    P: dict = field(default_factory=dict)
    p_count: dict = field(default_factory=dict)
    e_count: dict = field(default_factory=dict)  # lifetime samples behind E(s)

    def __post_init__(self):
        if self.E_pi is None:
            self.E_pi = [0.0] * self.n

    def begin_episode(self):
        self.v_pi += 1
        self.b.clear()

    def visit_probability(self, s) -> float:
        if self.v_pi == 0:
            raise InvalidInput("statistics hold no episodes yet")
        return self.v.get(s, 0) / self.v_pi

    def end_episode(self, ret: Sequence[float], alpha: float, warm: bool):
        rate = max(alpha, 1.0 / self.v_pi) if warm else alpha
        _ema(self.E_pi, ret, rate)
        for s in self.b:
            e = self.E.setdefault(s, [0.0] * self.n)
            c = self.e_count[s] = self.e_count.get(s, 0) + 1
            _ema(e, ret, max(alpha, 1.0 / c) if warm else alpha)

    def not_visited_return(self, s) -> list:
        """Estimated mean return of episodes that never reach ``s``."""
        p = self.visit_probability(s)
        e = self.E.get(s, [0.0] * self.n)
        return [(ep - p * es) / (1 - p) for ep, es in zip(self.E_pi, e)]


def _ema(target: list, sample: Sequence[float], rate: float):
    for i in range(len(target)):
        target[i] += rate * (sample[i] - target[i])


def holistic_values(
    p: float,
    P_s: Sequence[float],
    q_rows: Sequence[Sequence[float]],
    E_pi: Sequence[float],
    E_s: Sequence[float],
    epsilon: float | None = None,
) -> list[list[float]]:
    """Per-action estimate of the mean return over *all* episodes.

    A state reached in every episode (``p == 1``) is valued by its local
    accumulation plus Q. Otherwise the local value is weighted by the
    visit probability (floored at ``epsilon`` when given) and the rest
    of the mass goes to the return of episodes that miss the state.
    """
    if p == 1:
        return [[a + b for a, b in zip(P_s, q)] for q in q_rows]
    e_not = [(ep - p * es) / (1 - p) for ep, es in zip(E_pi, E_s)]
    w = p if epsilon is None else max(p, epsilon)
    return [
        [w * (a + b) + (1 - w) * c for a, b, c in zip(P_s, q, e_not)] for q in q_rows
    ]


def update_statistics(
    stats: GlobalStats,
    q: QTable,
    s: str,
    P: Sequence[float],
    alpha: float,
    epsilon: float | None,
    n_actions: int,
    warm: bool = True,
):
    """Record an arrival at ``s`` and return ``(augmented key, U rows)``."""
    if stats.v_pi == 0:
        raise InvalidInput("update_statistics before any episode started")
    if s not in stats.b:
        stats.v[s] = stats.v.get(s, 0) + 1
        stats.b.add(s)
    cnt = stats.p_count.get(s, 0) + 1
    stats.p_count[s] = cnt
    ps = stats.P.get(s)
    if ps is None:
        ps = stats.P[s] = [0.0] * stats.n
    _ema(ps, P, max(alpha, 1.0 / cnt) if warm else alpha)
    return _frozen_values(stats, q, s, epsilon, n_actions, insert=True)


def _frozen_values(stats, q, s, epsilon, n_actions, insert):
    ps = stats.P.get(s) or [0.0] * stats.n
    key = q.key(s, ps)
    rows = q.row(key, n_actions) if insert else q.peek(key, n_actions)
    p = stats.v.get(s, 0) / stats.v_pi if stats.v_pi else 0.0
    e_s = stats.E.get(s) or [0.0] * stats.n
    return key, holistic_values(p, ps, rows, stats.E_pi, e_s, epsilon)


@dataclass(frozen=True)
class PolicyOption:
    """Deterministic policy used as an option from the initial state."""

    label: str
    policy: dict

    def action(self, s: str) -> str:
        try:
            return self.policy[s]
        except KeyError:
            raise InvalidConfiguration(f"option {self.label} is undefined at {s!r}") from None


def make_options(model: MomdpModel) -> list[PolicyOption]:
    return [
        PolicyOption(lab, policy_from_label(model, lab)) for lab in enumerate_policies(model)
    ]


@dataclass
class TrainingResult:
    agent: "_Agent"
    log: list

    @property
    def final_label(self) -> str:
        return self.log[-1].label if self.log else self.agent.greedy_label()

    @property
    def q(self) -> QTable:
        return self.agent.q


class _Agent:
    algorithm = ""

    def __init__(self, model: MomdpModel, config: AgentConfig, rng):
        self.model = model
        self.config = config
        self.rng = rng
        self.n = model.n_objectives
        self.th = tuple(float(t) for t in model.thresholds)
        self.gamma = float(config.gamma)
        self.gl = self.gamma * config.lam
        self.acts = model.actions
        self.fast = model.fast
        self.terminals = set(model.terminals)
        self.q = QTable(
            self.n, config.q_init, config.grid, None if config.key_final else self.n - 1
        )
        self.log: list[EpisodeRecord] = []
        self.episode = 0
        self.step_hook: Callable | None = None
        self.max_trace = 0.0

    # shared machinery -----------------------------------------------------

    def _sample(self, s, a):
        x = self.rng.random()
        for cum, nxt, r, done in self.fast[(s, a)]:
            if x < cum:
                return nxt, r, done
        return nxt, r, done

    def _explore(self, values, temperature) -> int:
        ranks = rank_by_tlo(values, self.th)
        weights = [math.exp(-r / temperature) for r in ranks]
        x = self.rng.random() * sum(weights)
        acc = 0.0
        for i, w in enumerate(weights):
            acc += w
            if x < acc:
                return i
        return len(weights) - 1

    def _backup(self, traces, pair, delta, alpha, cut, explored=None):
        traces[pair] = 1.0
        table = self.q.table
        n = self.n
        for (k, b), e in traces.items():
            row = table[k][b]
            ae = alpha * e
            for i in range(n):
                row[i] += ae * delta[i]
        if cut:
            traces.clear()
        else:
            gl = self.gl
            for k in traces:
                traces[k] *= gl
        if self.step_hook is not None:
            self.step_hook(self, {"explored": explored, "traces": dict(traces), "pair": pair})
        for e in traces.values():
            if e > self.max_trace:
                self.max_trace = e

    def _success_step(self, s, a):
        """Most probable non-terminal successor of ``(s, a)`` with its reward."""
        best = None
        for o in self.model.outcomes[(s, a)]:
            if o.next_state in self.terminals:
                continue
            if best is None or o.probability > best.probability:
                best = o
        if best is None:
            return None, None
        return best.next_state, [float(r) for r in best.reward]

    def _label_from_choices(self, choices: dict) -> str:
        return "".join(
            choices.get(s, self.acts[s][0])[0] for s in self.model.decision_states
        )

    # training loop -----------------------------------------------------------

    def train(self, episodes: int | None = None) -> TrainingResult:
        budget = self.config.episodes if episodes is None else episodes
        alpha_s = self.config.alpha
        temp_s = self.config.temperature_schedule
        end = self.episode + budget
        while self.episode < end:
            self._run_block(end, alpha_s, temp_s)
        return TrainingResult(self, self.log)

    def _run_block(self, end, alpha_s, temp_s):
        ep = self.episode
        alpha, temp = alpha_s(ep), temp_s(ep)
        ret = self.run_episode(alpha, temp)
        self._record(ep, ret, alpha, temp)
        self.episode = ep + 1

    def _record(self, ep, ret, alpha, temp):
        self.log.append(EpisodeRecord(ep, self.greedy_label(), tuple(ret), alpha, temp))

    def run_episode(self, alpha, temperature) -> list:
        raise NotImplementedError

    def greedy_label(self) -> str:
        raise NotImplementedError


class _AugmentedAgent(_Agent):
    """Algorithms keyed on the accumulation ``P`` carried along an episode."""

    def _increment(self, s, a, r) -> Sequence[float]:
        """Amount added to ``P`` after taking ``a`` in ``s`` and observing ``r``."""
        raise NotImplementedError

    def _label_increment(self, s, a, r) -> Sequence[float]:
        raise NotImplementedError

    def run_episode(self, alpha, temperature):
        q = self.q
        n = self.n
        acts = self.acts
        gamma = self.gamma
        th = self.th
        s = self.model.initial
        P = [0.0] * n
        ret = [0.0] * n
        key = q.key(s, P)
        qrow = q.row(key, len(acts[s]))
        U = [[x + y for x, y in zip(qv, P)] for qv in qrow]
        a = self._explore(U, temperature)
        traces = {}
        while True:
            s2, r, done = self._sample(s, acts[s][a])
            for i in range(n):
                ret[i] += r[i]
            inc = self._increment(s, acts[s][a], r)
            for i in range(n):
                P[i] += inc[i]
            cur = qrow[a]
            if done:
                delta = [r[i] - cur[i] for i in range(n)]
                self._backup(traces, (key, a), delta, alpha, True)
                break
            key2 = q.key(s2, P)
            qrow2 = q.row(key2, len(acts[s2]))
            U2 = [[x + y for x, y in zip(qv, P)] for qv in qrow2]
            a_star = tlo_greedy(U2, th)
            a_next = self._explore(U2, temperature)
            nxt = qrow2[a_star]
            delta = [r[i] + gamma * nxt[i] - cur[i] for i in range(n)]
            explored = a_next != a_star
            self._backup(traces, (key, a), delta, alpha, explored, explored)
            s, key, qrow, a = s2, key2, qrow2, a_next
        return ret

    def greedy_label(self) -> str:
        q = self.q
        th = self.th
        s = self.model.initial
        P = [0.0] * self.n
        choices = {}
        while s is not None and s not in choices:
            k = len(self.acts[s])
            rows = q.peek(q.key(s, P), k)
            U = [[x + y for x, y in zip(qv, P)] for qv in rows]
            a = self.acts[s][tlo_greedy(U, th)]
            choices[s] = a
            s2, r = self._success_step(s, a)
            if s2 is None:
                break
            inc = self._label_increment(s, a, r)
            P = [x + y for x, y in zip(P, inc)]
            s = s2
        return self._label_from_choices(choices)


class BasicMOQL(_AugmentedAgent):
    """Augmentation by the actual rewards received so far."""

    algorithm = "basic"

    def _increment(self, s, a, r):
        return r

    _label_increment = _increment


class BaselineExpectedMOQL(_AugmentedAgent):
    """Augmentation by accumulated expected immediate rewards.

    ``I[(s, a)]`` is the exact running sample mean of the rewards observed
    for ``(s, a)``; ``I_count`` holds the matching visit counts.
    """

    algorithm = "baseline-expected"

    def __init__(self, model, config, rng):
        super().__init__(model, config, rng)
        self.I: dict = {}
        self.I_count: dict = {}

    def _increment(self, s, a, r):
        k = (s, a)
        c = self.I_count.get(k, 0) + 1
        self.I_count[k] = c
        est = self.I.get(k)
        if est is None:
            est = self.I[k] = [0.0] * self.n
        for i in range(self.n):
            est[i] += (r[i] - est[i]) / c
        return est

    def _label_increment(self, s, a, r):
        return self.I.get((s, a), [0.0] * self.n)


class MossAgent(_Agent):
    """Single-phase agent valuing actions against global episode statistics."""

    algorithm = "moss"
    use_epsilon = False

    def __init__(self, model, config, rng):
        super().__init__(model, config, rng)
        self.stats = GlobalStats(self.n)

    @property
    def _eps(self):
        return self.config.epsilon if self.use_epsilon else None

    def run_episode(self, alpha, temperature):
        return self._learning_episode(alpha, temperature, live_stats=True)

    def _arrive(self, s, P, alpha, live_stats):
        k = len(self.acts[s])
        if live_stats:
            return update_statistics(
                self.stats, self.q, s, P, alpha, self._eps, k, self.config.stats_warm_start
            )
        return _frozen_values(self.stats, self.q, s, self._eps, k, insert=True)

    def _learning_episode(self, alpha, temperature, live_stats):
        q = self.q
        n = self.n
        acts = self.acts
        gamma = self.gamma
        th = self.th
        stats = self.stats
        if live_stats:
            stats.begin_episode()
        s = self.model.initial
        P = [0.0] * n
        key, U = self._arrive(s, P, alpha, live_stats)
        qrow = q.table[key]
        a = self._explore(U, temperature)
        traces = {}
        while True:
            s2, r, done = self._sample(s, acts[s][a])
            for i in range(n):
                P[i] += r[i]
            cur = qrow[a]
            if done:
                delta = [r[i] - cur[i] for i in range(n)]
                self._backup(traces, (key, a), delta, alpha, True)
                break
            key2, U2 = self._arrive(s2, P, alpha, live_stats)
            qrow2 = q.table[key2]
            a_star = tlo_greedy(U2, th)
            a_next = self._explore(U2, temperature)
            nxt = qrow2[a_star]
            delta = [r[i] + gamma * nxt[i] - cur[i] for i in range(n)]
            explored = a_next != a_star
            self._backup(traces, (key, a), delta, alpha, explored, explored)
            s, key, qrow, a = s2, key2, qrow2, a_next
        if live_stats:
            stats.end_episode(P, alpha, self.config.stats_warm_start)
        return P

    def greedy_label(self) -> str:
        if self.stats.v_pi == 0:
            return self._label_from_choices({})
        s = self.model.initial
        choices = {}
        while s is not None and s not in choices:
            _, U = _frozen_values(self.stats, self.q, s, self._eps, len(self.acts[s]), False)
            a = self.acts[s][tlo_greedy(U, self.th)]
            choices[s] = a
            s, _ = self._success_step(s, a)
        return self._label_from_choices(choices)


class TwoPhaseMossAgent(MossAgent):
    """Alternating greedy data-gathering and exploratory learning phases.

    Each cycle resets the visit counts, ``P(s)`` and ``E_pi``, gathers
    statistics over ``dd`` greedy episodes without touching Q, then
    learns Q for ``dl`` episodes against the frozen statistics. The
    per-state returns ``E(s)`` are never reset and keep averaging across
    cycles. Visit weights are floored at ``epsilon`` in both phases.

    Data-gathering episodes break ties among greedy actions uniformly at
    random (one extra draw, only when a tie exists); otherwise the very
    first phase, run on an all-zero Q table, would always execute the
    lowest-index action and fix the statistics to that one policy.
    """

    algorithm = "moss-two-phase"
    use_epsilon = True

    def __init__(self, model, config, rng):
        super().__init__(model, config, rng)
        self.phase = "data"
        self.phase_left = config.dd

    def _run_block(self, end, alpha_s, temp_s):
        cfg = self.config
        if self.phase_left == 0:
            if self.phase == "data":
                self.phase, self.phase_left = "learn", cfg.dl
            else:
                self.phase, self.phase_left = "data", cfg.dd
        if self.phase == "data" and self.phase_left == cfg.dd:
            # a new cycle resets P(s), v(s), E_pi and v_pi; E(s) carries over
            old = self.stats
            self.stats = GlobalStats(self.n, E=old.E, e_count=old.e_count)
        ep = self.episode
        alpha, temp = alpha_s(ep), temp_s(ep)
        if self.phase == "data":
            ret = self._data_episode(alpha)
        else:
            ret = self._learning_episode(alpha, temp, live_stats=False)
        self.phase_left -= 1
        self._record(ep, ret, alpha, temp)
        self.episode = ep + 1

    def run_episode(self, alpha, temperature):
        raise NotImplementedError("two-phase agents advance through train()")

    def _data_episode(self, alpha):
        n = self.n
        acts = self.acts
        th = self.th
        stats = self.stats
        stats.begin_episode()
        s = self.model.initial
        P = [0.0] * n
        while True:
            _, U = self._arrive(s, P, alpha, True)
            best = sorted(tlo_argmax(U, self.model.utility))
            a = best[0] if len(best) == 1 else best[int(self.rng.random() * len(best))]
            s2, r, done = self._sample(s, acts[s][a])
            for i in range(n):
                P[i] += r[i]
            if done:
                break
            s = s2
        stats.end_episode(P, alpha, self.config.stats_warm_start)
        return P


class OptionsAgent(_Agent):
    """Learns the value of each whole deterministic policy at every state."""

    algorithm = "options"

    def __init__(self, model, config, rng, options: Sequence[PolicyOption] | None = None):
        super().__init__(model, config, rng)
        self.options = list(options) if options is not None else make_options(model)
        if not self.options:
            raise InvalidConfiguration("options agent needs at least one option")
        self.labels = [o.label for o in self.options]
        self.option_counts = [0] * len(self.options)

    def _row(self, s):
        return self.q.row(s, len(self.options))

    def run_episode(self, alpha, temperature):
        n = self.n
        gamma = self.gamma
        gl = self.gl
        s = self.model.initial
        p = self._explore(self._row(s), temperature)
        opt = self.options[p]
        self.option_counts[p] += 1
        ret = [0.0] * n
        traces = {}
        while True:
            a = opt.action(s)
            if a not in self.acts[s]:
                raise InvalidConfiguration(f"option {opt.label} picks unknown action {a!r}")
            s2, r, done = self._sample(s, a)
            for i in range(n):
                ret[i] += r[i]
            cur = self._row(s)[p]
            nxt = None if done else self._row(s2)[p]
            if done:
                delta = [r[i] - cur[i] for i in range(n)]
            else:
                delta = [r[i] + gamma * nxt[i] - cur[i] for i in range(n)]
            traces[s] = 1.0
            table = self.q.table
            for st, e in traces.items():
                row = table[st][p]
                for i in range(n):
                    row[i] += alpha * delta[i] * e
            for st in traces:
                traces[st] *= gl
            if self.step_hook is not None:
                self.step_hook(self, {"explored": None, "traces": dict(traces), "pair": (s, p)})
            for e in traces.values():
                if e > self.max_trace:
                    self.max_trace = e
            if done:
                break
            s = s2
        return ret

    def option_values(self, s=None) -> list:
        s = s or self.model.initial
        return [list(v) for v in self.q.peek(s, len(self.options))]

    def greedy_label(self) -> str:
        rows = self.q.peek(self.model.initial, len(self.options))
        return self.labels[tlo_greedy(rows, self.th)]

    def _record(self, ep, ret, alpha, temp):
        qa = tuple(tuple(v) for v in self.q.peek(self.model.initial, len(self.options)))
        self.log.append(EpisodeRecord(ep, self.greedy_label(), tuple(ret), alpha, temp, qa))


ALGORITHMS = {
    "basic": BasicMOQL,
    "baseline-expected": BaselineExpectedMOQL,
    "moss": MossAgent,
    "moss-two-phase": TwoPhaseMossAgent,
    "options": OptionsAgent,
}


def run_basic_moql(model, config, rng) -> TrainingResult:
    return BasicMOQL(model, config, rng).train()


def run_baseline_expected(model, config, rng) -> TrainingResult:
    return BaselineExpectedMOQL(model, config, rng).train()


def run_moss_single(model, config, rng) -> TrainingResult:
    return MossAgent(model, config, rng).train()


def run_moss_two_phase(model, config, rng) -> TrainingResult:
    return TwoPhaseMossAgent(model, config, rng).train()


def run_options(model, options, config, rng) -> TrainingResult:
    return OptionsAgent(model, config, rng, options).train()


def greedy_policy_label(agent: _Agent) -> str:
    return agent.greedy_label()
