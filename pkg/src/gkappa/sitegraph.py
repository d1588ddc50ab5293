"""Concrete mixtures (site graphs), pattern embeddings and rule application."""

from __future__ import annotations

import itertools
from collections import deque
from typing import Iterable, Mapping, Sequence

from .diagnostics import ModelError, error
from .hierarchy import Hierarchy
from .syntax import ANY, BOUND, InitDecl, Pattern, Rule, SiteSignature

FREE, BOUND_ANY, UNSPECIFIED, LABELLED = 0, 1, 2, 3

Embedding = tuple[int, ...]


class Mixture:
    """Agents, their site states and bonds, plus connected components.

    Components are kept up to date on every bond change: a new bond merges
    the smaller component into the larger one; removing a bond runs two
    interleaved searches from its endpoints and relabels whichever side
    finishes first if they turn out to be disconnected. Agent indices are
    never reused or compacted.
    """

    def __init__(self, signatures: Mapping[str, Sequence[SiteSignature]]):
        self.signatures = {k: tuple(v) for k, v in signatures.items()}
        self.names: list[str] = []
        self.states: list[dict[str, str | None]] = []
        self.links: list[dict[str, tuple[int, str]]] = []
        self._label: list[int] = []
        self._members: dict[int, set[int]] = {}
        self._next_label = 0
        self._by_name: dict[str, list[int]] = {}
        # called as on_relabel(agents, old_label, new_label) when agents change component label
        self.on_relabel = None

    def __len__(self) -> int:
        return len(self.names)

    def add_agent(self, name: str, states: Mapping[str, str] | None = None) -> int:
        sig = self.signatures.get(name)
        if sig is None:
            raise KeyError(f"no signature for agent {name!r}")
        st = {s.name: s.default_state for s in sig}
        for site, value in (states or {}).items():
            if site not in st:
                raise KeyError(f"agent {name!r} has no site {site!r}")
            st[site] = value
        idx = len(self.names)
        self.names.append(name)
        self.states.append(st)
        self.links.append({})
        self._label.append(self._next_label)
        self._members[self._next_label] = {idx}
        self._next_label += 1
        self._by_name.setdefault(name, []).append(idx)
        return idx

    def agents_named(self, name: str) -> list[int]:
        return self._by_name.get(name, [])

    def partner(self, i: int, site: str) -> tuple[int, str] | None:
        return self.links[i].get(site)

    def set_state(self, i: int, site: str, state: str) -> None:
        if site not in self.states[i]:
            raise KeyError(f"agent {i} ({self.names[i]}) has no site {site!r}")
        self.states[i][site] = state

    def bind(self, i: int, s: str, j: int, t: str) -> None:
        assert s not in self.links[i], f"site {s} of agent {i} is already bound"
        assert t not in self.links[j], f"site {t} of agent {j} is already bound"
        assert (i, s) != (j, t), "a site cannot bind itself"
        self.links[i][s] = (j, t)
        self.links[j][t] = (i, s)
        li, lj = self._label[i], self._label[j]
        if li != lj:
            big, small = (li, lj) if len(self._members[li]) >= len(self._members[lj]) else (lj, li)
            moved = self._members.pop(small)
            for a in moved:
                self._label[a] = big
            self._members[big] |= moved
            if self.on_relabel is not None:
                self.on_relabel(moved, small, big)

    def unbind(self, i: int, s: str) -> tuple[int, str]:
        j, t = self.links[i].pop(s)
        del self.links[j][t]
        if i != j:
            self._split(i, j)
        return j, t

    def _split(self, a: int, b: int) -> None:
        links = self.links
        seen = ({a}, {b})
        frontier = (deque([a]), deque([b]))
        while frontier[0] and frontier[1]:
            for side in (0, 1):
                node = frontier[side].popleft()
                for nb, _ in links[node].values():
                    if nb in seen[1 - side]:
                        return
                    if nb not in seen[side]:
                        seen[side].add(nb)
                        frontier[side].append(nb)
                if not frontier[side]:
                    break
        side = 0 if not frontier[0] else 1
        part = seen[side]
        old = self._label[a]
        self._members[old] -= part
        new = self._next_label
        self._next_label += 1
        self._members[new] = part
        for x in part:
            self._label[x] = new
        if self.on_relabel is not None:
            self.on_relabel(part, old, new)

    def component(self, i: int) -> int:
        return self._label[i]

    def same_component(self, i: int, j: int) -> bool:
        return self._label[i] == self._label[j]

    @property
    def component_count(self) -> int:
        return len(self._members)

    def components(self) -> list[frozenset[int]]:
        return sorted((frozenset(m) for m in self._members.values()), key=min)

    def copy(self) -> "Mixture":
        other = Mixture(self.signatures)
        other.names = list(self.names)
        other.states = [dict(s) for s in self.states]
        other.links = [dict(l) for l in self.links]
        other._label = list(self._label)
        other._members = {k: set(v) for k, v in self._members.items()}
        other._next_label = self._next_label
        other._by_name = {k: list(v) for k, v in self._by_name.items()}
        return other

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mixture):
            return NotImplemented
        return (self.names, self.states, self.links) == (other.names, other.states, other.links)

    def snapshot(self) -> str:
        """One line per connected component, agents in index order."""
        lines = []
        for comp in self.components():
            labels: dict[frozenset, int] = {}
            parts = []
            for a in sorted(comp):
                sites = []
                for sig in self.signatures[self.names[a]]:
                    text = sig.name
                    st = self.states[a][sig.name]
                    if st is not None:
                        text += f"~{st}"
                    p = self.links[a].get(sig.name)
                    if p is not None:
                        key = frozenset({(a, sig.name), p})
                        text += f"!{labels.setdefault(key, len(labels))}"
                    sites.append(text)
                parts.append(f"{self.names[a]}({','.join(sites)})")
            lines.append(", ".join(parts))
        return "".join(line + "\n" for line in lines)


# ---------------------------------------------------------------------------
# patterns


class CompiledPattern:
    """A concrete pattern prepared for matching.

    Split into bond-connected components; each component is matched by a
    walk along its bonds from one anchored occurrence, which is
    deterministic because a site carries at most one bond.
    """

    def __init__(self, pattern: Pattern):
        self.pattern = tuple(pattern)
        ends: dict[int, list[tuple[int, str]]] = {}
        for o, ap in enumerate(self.pattern):
            for sc in ap.sites:
                if isinstance(sc.bond, int):
                    ends.setdefault(sc.bond, []).append((o, sc.site))
        partner = {}
        for (o1, s1), (o2, s2) in ends.values():
            partner[(o1, s1)] = (o2, s2)
            partner[(o2, s2)] = (o1, s1)
        self.occs = []
        for o, ap in enumerate(self.pattern):
            checks = []
            for sc in ap.sites:
                if sc.bond is None:
                    kind, po, ps = FREE, -1, ""
                elif sc.bond == BOUND:
                    kind, po, ps = BOUND_ANY, -1, ""
                elif sc.bond == ANY:
                    kind, po, ps = UNSPECIFIED, -1, ""
                else:
                    kind = LABELLED
                    po, ps = partner[(o, sc.site)]
                checks.append((sc.site, sc.state, kind, po, ps))
            self.occs.append((ap.agent, tuple(checks)))
        # connected components over bond labels
        parent = list(range(len(self.pattern)))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for (o1, _), (o2, _) in ends.values():
            parent[find(o1)] = find(o2)
        groups: dict[int, list[int]] = {}
        for o in range(len(self.pattern)):
            groups.setdefault(find(o), []).append(o)
        self.components: list[tuple[int, ...]] = sorted((tuple(g) for g in groups.values()), key=lambda g: g[0])
        self.component_of = {o: c for c, g in enumerate(self.components) for o in g}

    def __len__(self) -> int:
        return len(self.pattern)

    def match_component(self, m: Mixture, comp: int, anchor: int, agent: int) -> tuple[int, ...] | None:
        """Agents matched by component ``comp`` with occurrence ``anchor`` on ``agent``."""
        names, states, links, occs = m.names, m.states, m.links, self.occs
        assign = {anchor: agent}
        used = {agent}
        stack = [anchor]
        while stack:
            o = stack.pop()
            a = assign[o]
            name, checks = occs[o]
            if names[a] != name:
                return None
            st = states[a]
            lk = links[a]
            for site, state, kind, po, ps in checks:
                if state is not None and st[site] != state:
                    return None
                if kind == UNSPECIFIED:
                    continue
                link = lk.get(site)
                if kind == FREE:
                    if link is not None:
                        return None
                elif kind == BOUND_ANY:
                    if link is None:
                        return None
                else:
                    if link is None or link[1] != ps:
                        return None
                    b = link[0]
                    prev = assign.get(po)
                    if prev is None:
                        if b in used:
                            return None
                        assign[po] = b
                        used.add(b)
                        stack.append(po)
                    elif prev != b:
                        return None
        return tuple(assign[o] for o in self.components[comp])

    def component_matches(self, m: Mixture, comp: int) -> list[tuple[int, ...]]:
        root = self.components[comp][0]
        out = []
        for a in m.agents_named(self.occs[root][0]):
            mt = self.match_component(m, comp, root, a)
            if mt is not None:
                out.append(mt)
        return out

    def assemble(self, parts: Sequence[tuple[int, ...]]) -> Embedding | None:
        """Join per-component matches into one embedding, or None if not injective."""
        emb = [0] * len(self.pattern)
        seen = set()
        for comp, mt in zip(self.components, parts):
            for o, a in zip(comp, mt):
                if a in seen:
                    return None
                seen.add(a)
                emb[o] = a
        return tuple(emb)


def embeddings(pattern: Pattern | CompiledPattern, m: Mixture) -> list[Embedding]:
    """All injective, condition-preserving maps from ``pattern`` into ``m``.

    Each embedding lists the mixture agent of every pattern occurrence in
    order. No quotient by pattern automorphisms is taken.
    """
    cp = pattern if isinstance(pattern, CompiledPattern) else CompiledPattern(pattern)
    per_comp = [cp.component_matches(m, c) for c in range(len(cp.components))]
    out = []
    for parts in itertools.product(*per_comp):
        emb = cp.assemble(parts)
        if emb is not None:
            out.append(emb)
    return out


def is_embedding(pattern: Pattern | CompiledPattern, m: Mixture, emb: Embedding) -> bool:
    cp = pattern if isinstance(pattern, CompiledPattern) else CompiledPattern(pattern)
    if len(set(emb)) != len(emb) or len(emb) != len(cp):
        return False
    for c, comp in enumerate(cp.components):
        if cp.match_component(m, c, comp[0], emb[comp[0]]) != tuple(emb[o] for o in comp):
            return False
    return True


# ---------------------------------------------------------------------------
# rule application


class RuleActions:
    """The diff between the two sides of a rule, in terms of lhs occurrences."""

    def __init__(self, rule: Rule):
        self.rule = rule

        def bonds(pattern):
            ends: dict[int, list[tuple[int, str]]] = {}
            for o, ap in enumerate(pattern):
                for sc in ap.sites:
                    if isinstance(sc.bond, int):
                        ends.setdefault(sc.bond, []).append((o, sc.site))
            return {frozenset(map(tuple, e)) for e in ends.values()}

        lb, rb = bonds(rule.lhs), bonds(rule.rhs)
        self.removals = [tuple(sorted(b)) for b in sorted(lb - rb, key=sorted)]
        self.additions = [tuple(sorted(b)) for b in sorted(rb - lb, key=sorted)]
        self.states = []
        for o, (la, ra) in enumerate(zip(rule.lhs, rule.rhs)):
            for rs in ra.sites:
                ls = la.site(rs.site)
                if rs.state is not None and rs.state != ls.state:
                    self.states.append((o, rs.site, rs.state))
        # a removal whose endpoint is free on the rhs, or a rebinding, both touch both ends
        touched = {o for b in self.removals + self.additions for o, _ in b}
        touched |= {o for o, _, _ in self.states}
        self.modified = tuple(sorted(touched))
        self.changes_bonds = bool(self.removals or self.additions)


def apply(m: Mixture, rule: Rule | RuleActions, emb: Embedding) -> Mixture:
    """Apply ``rule`` at ``emb`` in place and return ``m``."""
    act = rule if isinstance(rule, RuleActions) else RuleActions(rule)
    for (o1, s1), (o2, s2) in act.removals:
        j = m.unbind(emb[o1], s1)
        assert j == (emb[o2], s2), "embedding does not match the bond being removed"
    for (o1, s1), (o2, s2) in act.additions:
        m.bind(emb[o1], s1, emb[o2], s2)
    for o, site, state in act.states:
        m.set_state(emb[o], site, state)
    return m


# ---------------------------------------------------------------------------
# initial mixtures


def resolve_count(count: int | str, params: Mapping[str, float], line: int = 0) -> int:
    if isinstance(count, int):
        return count
    if count not in params:
        raise ModelError([error(f"unbound parameter {count!r}", line, 1)])
    value = params[count]
    if value < 0 or value != int(value):
        raise ModelError([error(f"copy count {count} = {value} is not a nonnegative integer", line, 1)])
    return int(value)


def init_mixture(
    inits: Iterable[InitDecl],
    h: Hierarchy,
    fringe: Iterable[str] | None = None,
    params: Mapping[str, float] | None = None,
) -> Mixture:
    """Build the initial mixture; unmentioned sites take their default state and are free."""
    fringe = frozenset(fringe) if fringe is not None else h.leaves
    params = params or {}
    m = Mixture({a: h.interface(a) for a in sorted(fringe)})
    diags = []
    decls = list(inits)
    for d in decls:
        for ap in d.pattern:
            if ap.agent not in h:
                diags.append(error(f"%init: unknown agent {ap.agent!r}", d.line, 1))
                continue
            if ap.agent not in fringe:
                diags.append(error(f"%init: {ap.agent!r} is not a concrete agent", d.line, 1))
                continue
            for sc in ap.sites:
                sig = h.site(ap.agent, sc.site)
                if sig is None:
                    diags.append(error(f"%init: agent {ap.agent!r} has no site {sc.site!r}", d.line, 1))
                elif sc.state is not None and sc.state not in sig.states:
                    diags.append(error(f"%init: {sc.state!r} is not a state of {ap.agent}.{sc.site}", d.line, 1))
    if diags:
        raise ModelError(diags)
    for d in decls:
        n = resolve_count(d.count, params, d.line)
        for _ in range(n):
            idx = [
                m.add_agent(ap.agent, {sc.site: sc.state for sc in ap.sites if sc.state is not None})
                for ap in d.pattern
            ]
            ends: dict[int, list[tuple[int, str]]] = {}
            for k, ap in enumerate(d.pattern):
                for sc in ap.sites:
                    if isinstance(sc.bond, int):
                        ends.setdefault(sc.bond, []).append((idx[k], sc.site))
            for (a, s), (b, t) in ends.values():
                m.bind(a, s, b, t)
    return m
