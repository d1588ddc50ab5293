"""Gillespie direct-method simulation of compiled rule sets.

Rates are per embedding: a binary rate is a stochastic constant with the
volume already folded in, a unary rate is in s^-1. A two-component rule
with a unary rate ``@ b (u)`` fires embeddings whose components already
lie in one connected complex at ``u`` and all others at ``b``; without a
unary rate every embedding fires at ``b``.

Random numbers come from numpy's PCG64 seeded through ``SeedSequence``.
Replicate ``i`` of a run seeded with ``s`` uses ``SeedSequence(s,
spawn_key=(i,))``, which is what ``SeedSequence(s).spawn(n)[i]`` yields.
"""

from __future__ import annotations

import io
import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .compiler import ResolvedModel, resolve_model
from .diagnostics import ModelError, error
from .sitegraph import CompiledPattern, Mixture, RuleActions, apply, embeddings, init_mixture
from .syntax import ModelAST, Param, Pattern, Rule, parse_model

UNARY = "unary"
BINARY = "binary"


@dataclass(frozen=True)
class Activity:
    rule: str
    binary_count: int
    unary_count: int
    binary_rate: float
    unary_rate: float | None = None

    @property
    def propensity(self) -> float:
        u = self.binary_rate if self.unary_rate is None else self.unary_rate
        return self.binary_rate * self.binary_count + u * self.unary_count


def resolve_rate(rate: float | str | None, params: Mapping[str, float], what: str, line: int = 0) -> float:
    if rate is None:
        return 1.0
    if isinstance(rate, str):
        if rate not in params:
            raise ModelError([error(f"{what}: unbound rate parameter {rate!r}", line, 1)])
        rate = params[rate]
    if not rate >= 0 or math.isinf(rate):
        raise ModelError([error(f"{what}: rate must be finite and nonnegative, got {rate}", line, 1)])
    return float(rate)


def _split_counts(cp: CompiledPattern, m: Mixture) -> tuple[int, int]:
    """(embeddings spanning several complexes, embeddings inside one complex)."""
    binary = unary = 0
    for emb in embeddings(cp, m):
        roots = {m.component(emb[comp[0]]) for comp in cp.components}
        if len(roots) == 1 and len(cp.components) > 1:
            unary += 1
        else:
            binary += 1
    return binary, unary


def activities(m: Mixture, rules: Sequence[Rule], params: Mapping[str, float] | None = None) -> list[Activity]:
    """Per-rule embedding counts and rates computed from scratch."""
    params = params or {}
    out = []
    for r in rules:
        b = resolve_rate(r.rate, params, f"rule {r.name!r}", r.line)
        u = None if r.unary_rate is None else resolve_rate(r.unary_rate, params, f"rule {r.name!r}", r.line)
        binary, unary = _split_counts(CompiledPattern(r.lhs), m)
        out.append(Activity(r.name, binary, unary, b, u))
    return out


def count_pattern(patterns: Iterable[Pattern], m: Mixture) -> int:
    return sum(len(embeddings(p, m)) for p in patterns)


# ---------------------------------------------------------------------------
# incremental bookkeeping


class _IndexedSet:
    """Set with O(1) add, remove and uniform pick by position."""

    __slots__ = ("items", "pos")

    def __init__(self):
        self.items: list = []
        self.pos: dict = {}

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, x) -> bool:
        return x in self.pos

    def add(self, x) -> None:
        self.pos[x] = len(self.items)
        self.items.append(x)

    def remove(self, x) -> None:
        i = self.pos.pop(x)
        last = self.items.pop()
        if i < len(self.items):
            self.items[i] = last
            self.pos[last] = i


class _Tracker:
    """Current matches of one pattern component, with counts per complex."""

    def __init__(self, cp: CompiledPattern, comp: int):
        self.cp = cp
        self.comp = comp
        self.occs = cp.components[comp]
        self.names = tuple(cp.occs[o][0] for o in self.occs)
        self.matches = _IndexedSet()
        self.by_label: dict[int, int] = {}
        self.counted: list[int] = []  # indices of counted entries using this tracker

    def find(self, m: Mixture, position: int, agent: int):
        return self.cp.match_component(m, self.comp, self.occs[position], agent)


def _component_key(cp: CompiledPattern, comp: int):
    occs = cp.components[comp]
    local = {o: k for k, o in enumerate(occs)}
    return tuple(
        (cp.occs[o][0], tuple((s, st, kind, local.get(po, -1), ps) for s, st, kind, po, ps in cp.occs[o][1]))
        for o in occs
    )


class _Counted:
    """A rule or observable whose embeddings are counted incrementally."""

    def __init__(self, name: str, cp: CompiledPattern, trackers: list[int]):
        self.name = name
        self.cp = cp
        self.trackers = trackers
        self.same = 0  # ordered pairs of component matches inside one complex
        self.overlap = 0  # of those, pairs sharing an agent


class Simulator:
    """One event loop over a mixture it owns."""

    def __init__(
        self,
        mixture: Mixture,
        rules: Sequence[Rule],
        params: Mapping[str, float] | None = None,
        seed: int | np.random.SeedSequence = 0,
        observables: Mapping[str, Sequence[Pattern]] | None = None,
    ):
        params = dict(params or {})
        self.m = mixture
        self.rules = list(rules)
        self.time = 0.0
        self.events = 0
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self._rng = np.random.Generator(np.random.PCG64(seq))
        self._buf = self._rng.random(1024)
        self._k = 0
        self._b = [resolve_rate(r.rate, params, f"rule {r.name!r}", r.line) for r in self.rules]
        self._u = [None if r.unary_rate is None else resolve_rate(r.unary_rate, params, f"rule {r.name!r}", r.line)
                   for r in self.rules]
        self._actions = [RuleActions(r) for r in self.rules]

        self._trackers: list[_Tracker] = []
        self._tracker_ids: dict = {}
        self._by_name: dict[str, list[tuple[int, int]]] = {}
        self._counted: list[_Counted] = []
        for r in self.rules:
            self._register(r.name, r.lhs)
        self._obs_names = list(observables or {})
        self._obs: list[list[int]] = []
        for name, patterns in (observables or {}).items():
            self._obs.append([self._register(name, p) for p in patterns])

        self._agent_matches: list[dict[int, set]] = [dict() for _ in range(len(mixture))]
        for t, tr in enumerate(self._trackers):
            for mt in tr.cp.component_matches(mixture, tr.comp):
                self._add_match(t, mt)
        mixture.on_relabel = self._relabel
        self._prop = [self._propensity(i) for i in range(len(self.rules))]

    # -- setup ---------------------------------------------------------------

    def _register(self, name: str, pattern: Pattern) -> int:
        cp = CompiledPattern(pattern)
        ids = []
        for c in range(len(cp.components)):
            key = _component_key(cp, c)
            t = self._tracker_ids.get(key)
            if t is None:
                t = len(self._trackers)
                self._tracker_ids[key] = t
                tr = _Tracker(cp, c)
                self._trackers.append(tr)
                for p, n in enumerate(tr.names):
                    self._by_name.setdefault(n, []).append((t, p))
            ids.append(t)
        idx = len(self._counted)
        self._counted.append(_Counted(name, cp, ids))
        if len(ids) == 2:
            for t in set(ids):
                self._trackers[t].counted.append(idx)
        return idx

    # -- match bookkeeping --------------------------------------------------

    def _shared(self, mt, t: int) -> set:
        am = self._agent_matches
        out = set()
        for a in mt:
            s = am[a].get(t)
            if s:
                out |= s
        return out

    def _overlap_delta(self, t: int, mt) -> list[tuple[_Counted, int]]:
        out = []
        for ci in self._trackers[t].counted:
            c = self._counted[ci]
            t0, t1 = c.trackers
            if t0 == t1:
                k = len(self._shared(mt, t) - {mt})
                out.append((c, 2 * k + 1))
            else:
                out.append((c, len(self._shared(mt, t1 if t == t0 else t0))))
        return out

    def _bump(self, t: int, label: int, delta: int) -> None:
        tr = self._trackers[t]
        pairs = [self._counted[ci] for ci in tr.counted]
        for c in pairs:
            t0, t1 = c.trackers
            c.same -= self._trackers[t0].by_label.get(label, 0) * self._trackers[t1].by_label.get(label, 0)
        n = tr.by_label.get(label, 0) + delta
        if n:
            tr.by_label[label] = n
        else:
            del tr.by_label[label]
        for c in pairs:
            t0, t1 = c.trackers
            c.same += self._trackers[t0].by_label.get(label, 0) * self._trackers[t1].by_label.get(label, 0)

    def _add_match(self, t: int, mt) -> None:
        tr = self._trackers[t]
        for c, d in self._overlap_delta(t, mt):
            c.overlap += d
        tr.matches.add(mt)
        for a in set(mt):
            self._agent_matches[a].setdefault(t, set()).add(mt)
        self._bump(t, self.m.component(mt[0]), 1)

    def _remove_match(self, t: int, mt) -> None:
        tr = self._trackers[t]
        for c, d in self._overlap_delta(t, mt):
            c.overlap -= d
        tr.matches.remove(mt)
        for a in set(mt):
            self._agent_matches[a][t].discard(mt)
        self._bump(t, self.m.component(mt[0]), -1)

    def _relabel(self, agents: Iterable[int], old: int, new: int) -> None:
        am = self._agent_matches
        for a in agents:
            for t, ms in am[a].items():
                for mt in ms:
                    if mt[0] == a:
                        self._bump(t, old, -1)
                        self._bump(t, new, 1)

    # -- counts ---------------------------------------------------------------

    def _counts(self, ci: int) -> tuple[int, int]:
        c = self._counted[ci]
        ts = [self._trackers[t] for t in c.trackers]
        if len(ts) == 1:
            return len(ts[0].matches), 0
        if len(ts) == 2:
            total = len(ts[0].matches) * len(ts[1].matches)
            return total - c.same, c.same - c.overlap
        binary = unary = 0
        for parts in itertools.product(*(tr.matches.items for tr in ts)):
            if c.cp.assemble(parts) is None:
                continue
            if len({self.m.component(p[0]) for p in parts}) == 1:
                unary += 1
            else:
                binary += 1
        return binary, unary

    def _propensity(self, i: int) -> float:
        binary, unary = self._counts(i)
        b, u = self._b[i], self._u[i]
        return b * binary + (b if u is None else u) * unary

    def activities(self) -> list[Activity]:
        """The incrementally maintained counterpart of :func:`activities`."""
        out = []
        for i, r in enumerate(self.rules):
            binary, unary = self._counts(i)
            out.append(Activity(r.name, binary, unary, self._b[i], self._u[i]))
        return out

    def observe(self) -> list[int]:
        return [sum(sum(self._counts(ci)) for ci in group) for group in self._obs]

    @property
    def observable_names(self) -> list[str]:
        return self._obs_names

    @property
    def total_propensity(self) -> float:
        return math.fsum(self._prop)

    # -- random numbers -----------------------------------------------------

    def _uniform(self) -> float:
        if self._k == len(self._buf):
            self._buf = self._rng.random(1024)
            self._k = 0
        x = self._buf[self._k]
        self._k += 1
        return float(x)

    def _index(self, n: int) -> int:
        return min(int(self._uniform() * n), n - 1)

    # -- events ---------------------------------------------------------------

    def _pick_embedding(self, i: int):
        c = self._counted[i]
        ts = [self._trackers[t] for t in c.trackers]
        if len(ts) == 1:
            mt = ts[0].matches.items[self._index(len(ts[0].matches))]
            return c.cp.assemble([mt]), None
        binary, unary = self._counts(i)
        b = self._b[i]
        u = b if self._u[i] is None else self._u[i]
        if len(ts) == 2 and self._u[i] is not None:
            want = BINARY if self._uniform() * (b * binary + u * unary) < b * binary else UNARY
        else:
            want = None
        comp = self.m.component

        def ok(parts):
            emb = c.cp.assemble(parts)
            if emb is None:
                return None
            if want is not None and (len({comp(p[0]) for p in parts}) == 1) != (want == UNARY):
                return None
            return emb

        if want == UNARY:
            # weight each first-component match by the partners sharing its complex
            m0 = ts[0].matches.items
            weights = [ts[1].by_label.get(comp(mt[0]), 0) for mt in m0]
            for _ in range(64):
                x = self._uniform() * sum(weights)
                k = 0
                while k < len(weights) - 1 and x >= weights[k]:
                    x -= weights[k]
                    k += 1
                label = comp(m0[k][0])
                mates = [mt for mt in ts[1].matches.items if comp(mt[0]) == label]
                emb = ok((m0[k], mates[self._index(len(mates))]))
                if emb is not None:
                    return emb, UNARY
        else:
            for _ in range(64):
                parts = [tr.matches.items[self._index(len(tr.matches))] for tr in ts]
                emb = ok(parts)
                if emb is not None:
                    return emb, want
        # rejection kept failing: enumerate the class and pick uniformly
        pool = [e for parts in itertools.product(*(tr.matches.items for tr in ts)) if (e := ok(parts)) is not None]
        return pool[self._index(len(pool))], want

    def step(self):
        """Draw the next event without applying it.

        Returns ``(waiting time, rule index, embedding)`` or None when no rule
        can fire.
        """
        total = self.total_propensity
        if total <= 0:
            return None
        tau = -math.log(1.0 - self._uniform()) / total
        x = self._uniform() * total
        acc = 0.0
        chosen = None
        for i, p in enumerate(self._prop):
            if p > 0:
                chosen = i
                acc += p
                if x < acc:
                    break
        i = chosen
        emb, _ = self._pick_embedding(i)
        return tau, i, emb

    def fire(self, i: int, emb) -> str:
        """Apply rule ``i`` at ``emb``; returns the molecularity tag."""
        cp = self._counted[i].cp
        assert all(cp.match_component(self.m, c, comp[0], emb[comp[0]]) is not None
                   for c, comp in enumerate(cp.components)), "fired embedding is not valid"
        m = self.m
        roots = {m.component(emb[comp[0]]) for comp in cp.components}
        tag = UNARY if len(roots) == 1 else BINARY
        act = self._actions[i]
        touched = {emb[o] for o in act.modified}
        am = self._agent_matches
        dirty = set()
        for a in touched:
            for t, ms in list(am[a].items()):
                for mt in list(ms):
                    if mt in self._trackers[t].matches:
                        self._remove_match(t, mt)
                        dirty.add(t)
        apply(m, act, emb)
        for a in touched:
            for t, p in self._by_name.get(m.names[a], ()):
                mt = self._trackers[t].find(m, p, a)
                if mt is not None and mt not in self._trackers[t].matches:
                    self._add_match(t, mt)
                    dirty.add(t)
        self._refresh(dirty, bonds_changed=act.changes_bonds)
        self.events += 1
        return tag

    def _refresh(self, dirty: set[int], bonds_changed: bool) -> None:
        for i, c in enumerate(self._counted[: len(self.rules)]):
            if bonds_changed and len(c.trackers) > 1 or any(t in dirty for t in c.trackers):
                self._prop[i] = self._propensity(i)


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    observables: list[str]
    times: list[float] = field(default_factory=list)
    counts: list[list[int]] = field(default_factory=list)
    events: list[tuple[float, str, str]] = field(default_factory=list)

    def record(self, t: float, values: list[int]) -> None:
        if self.times and t <= self.times[-1]:
            return
        self.times.append(t)
        self.counts.append(list(values))

    def column(self, name: str) -> list[int]:
        k = self.observables.index(name)
        return [row[k] for row in self.counts]

    def final(self) -> dict[str, int]:
        return dict(zip(self.observables, self.counts[-1]))

    def mean(self) -> dict[str, float]:
        return {name: sum(self.column(name)) / len(self.counts) for name in self.observables}

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(",".join(["time", *self.observables]) + "\n")
        for t, row in zip(self.times, self.counts):
            out.write(",".join([repr(t), *map(str, row)]) + "\n")
        return out.getvalue()

    def events_csv(self) -> str:
        out = io.StringIO()
        out.write("time,rule,molecularity\n")
        for t, rule, tag in self.events:
            out.write(f"{t!r},{rule},{tag}\n")
        return out.getvalue()


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    end_time: float | None = None
    max_events: int | None = None
    sample_interval: float | None = None
    record_events: bool = False


def with_params(ast: ModelAST, overrides: Mapping[str, float]) -> ModelAST:
    """A copy of ``ast`` with some ``%param:`` values replaced."""
    known = {p.name for p in ast.params}
    missing = sorted(set(overrides) - known)
    if missing:
        raise ModelError([error(f"no %param named {missing[0]!r} to override")])
    params = tuple(Param(p.name, float(overrides.get(p.name, p.value)), p.line) for p in ast.params)
    return replace(ast, params=params)


def run(model: ResolvedModel, config: SimConfig, seed: int | np.random.SeedSequence | None = None) -> Trajectory:
    """Simulate a resolved model; ``seed`` overrides ``config.seed``."""
    if config.end_time is None and config.max_events is None:
        raise ModelError([error("a simulation needs an end time or an event limit")])
    if config.end_time is not None and not config.end_time >= 0:
        raise ModelError([error(f"end time must be nonnegative, got {config.end_time}")])
    if config.sample_interval is not None and not config.sample_interval > 0:
        raise ModelError([error(f"sample interval must be positive, got {config.sample_interval}")])
    mixture = init_mixture(model.ast.inits, model.hierarchy, model.fringe, model.params)
    sim = Simulator(mixture, model.rules, model.params, config.seed if seed is None else seed, model.observables)
    traj = Trajectory(sim.observable_names)
    end = math.inf if config.end_time is None else config.end_time
    limit = math.inf if config.max_events is None else config.max_events
    dt = config.sample_interval
    traj.record(0.0, sim.observe())
    k = 1  # next sampling grid index
    while True:
        ev = sim.step() if sim.events < limit else None
        if ev is None:
            # exhausted: the state holds until the end; event limit: stop here
            horizon = end if sim.events < limit and math.isfinite(end) else sim.time
        else:
            horizon = min(sim.time + ev[0], end)
        if dt is not None:
            while k * dt <= horizon:
                traj.record(k * dt, sim.observe())
                k += 1
        if ev is None or sim.time + ev[0] > end:
            break
        _, i, emb = ev
        sim.time += ev[0]
        tag = sim.fire(i, emb)
        if config.record_events:
            traj.events.append((sim.time, model.rules[i].name, tag))
        if dt is None:
            traj.record(sim.time, sim.observe())
    traj.record(horizon, sim.observe())
    return traj


def simulate(model: ResolvedModel | ModelAST | str, config: SimConfig, fringe: Iterable[str] | None = None) -> Trajectory:
    """Resolve ``model`` (text, AST or resolved) and run one simulation."""
    if isinstance(model, str):
        model = parse_model(model)
    if isinstance(model, ModelAST):
        model = resolve_model(model, fringe)
    return run(model, config)


def _sweep_job(args) -> tuple[float, Trajectory]:
    ast, fringe, name, value, config = args
    model = resolve_model(with_params(ast, {name: value}), fringe)
    return value, run(model, config)


def available_cpus() -> int:
    if hasattr(os, "sched_getaffinity"):
        return max(1, len(os.sched_getaffinity(0)))
    return os.cpu_count() or 1


def sweep(
    ast: ModelAST,
    name: str,
    values: Sequence[float],
    config: SimConfig,
    fringe: Iterable[str] | None = None,
    jobs: int | None = None,
) -> list[tuple[float, Trajectory]]:
    """One simulation per parameter value, all with the same seed.

    Sharing the seed keeps curves over the swept value smooth (common random
    numbers). Runs go to a process pool of ``jobs`` workers, defaulting to
    the available CPUs; results come back in input order.
    """
    with_params(ast, {name: values[0]} if values else {})  # fail early on an unknown name
    fringe = None if fringe is None else tuple(fringe)
    tasks = [(ast, fringe, name, float(v), config) for v in values]
    if jobs is None:
        jobs = available_cpus()
    if jobs <= 1 or len(tasks) <= 1:
        return [_sweep_job(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(_sweep_job, tasks))


def summary_csv(name: str, results: Sequence[tuple[float, Trajectory]]) -> str:
    """Final and mean value of every observable per swept value."""
    if not results:
        return name + "\n"
    obs = results[0][1].observables
    out = io.StringIO()
    out.write(",".join([name, *(f"final_{o}" for o in obs), *(f"mean_{o}" for o in obs)]) + "\n")
    for value, traj in results:
        fin, mean = traj.final(), traj.mean()
        out.write(",".join([repr(value), *(str(fin[o]) for o in obs), *(repr(mean[o]) for o in obs)]) + "\n")
    return out.getvalue()
