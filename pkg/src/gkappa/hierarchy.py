"""Agent hierarchies: a DAG of agents derived from one another by site transforms."""

from __future__ import annotations

import graphlib
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

from scipy.cluster.hierarchy import DisjointSet

from .diagnostics import Diagnostic, ModelError, error, warning
from .syntax import (
    Add, AgentSignature, DefaultOverride, Delete, Duplicate, ModelAST, Rename,
    SiteSignature, SiteTransform, VariantDecl, format_site_signature,
)


@dataclass(frozen=True)
class SiteMap:
    """Where each site of ``source`` ended up in ``target``."""

    source: str
    target: str
    mapping: Mapping[str, tuple[str, ...]]

    def __getitem__(self, site: str) -> tuple[str, ...]:
        return self.mapping[site]

    def image(self, site: str) -> tuple[str, ...]:
        return self.mapping.get(site, ())


class _Site(NamedTuple):
    name: str
    states: tuple[str, ...]
    default: str | None


def _apply_transforms(
    parent: Iterable[_Site], transforms: Iterable[SiteTransform], where: str
) -> tuple[list[_Site], dict[str, tuple[str, ...]], list[tuple[str, str]], list[str]]:
    """Child sites, parent-site -> child-sites map, default overrides and errors for one edge."""
    parent = list(parent)
    by_name = {s.name: s for s in parent}
    touched = {t.source: t for t in transforms if t.source is not None}
    problems = [f"{where}: unknown site {n!r}" for n in touched if n not in by_name]
    sites: list[_Site] = []
    mapping: dict[str, tuple[str, ...]] = {}
    overrides = []
    for s in parent:
        t = touched.get(s.name)
        if t is None:
            sites.append(s)
            mapping[s.name] = (s.name,)
        elif isinstance(t, Delete):
            mapping[s.name] = ()
        elif isinstance(t, Rename):
            sites.append(s._replace(name=t.new_name))
            mapping[s.name] = (t.new_name,)
        elif isinstance(t, Duplicate):
            sites.extend(s._replace(name=n) for n in t.new_names)
            mapping[s.name] = tuple(t.new_names)
        elif isinstance(t, DefaultOverride):
            if not s.states:
                problems.append(f"{where}: site {s.name!r} carries no internal state to default")
            sites.append(s._replace(default=t.state))
            mapping[s.name] = (s.name,)
            overrides.append((s.name, t.state))
    for t in transforms:
        if isinstance(t, Add):
            sites.append(_Site(t.site.name, t.site.states, t.site.default_state))
    names = [s.name for s in sites]
    for n in sorted(set(names)):
        if names.count(n) > 1:
            problems.append(f"{where}: site name {n!r} clashes after transforms")
    return sites, mapping, overrides, problems


class Hierarchy:
    """A validated agent hierarchy.

    Immutable after construction. ``interface(agent)`` is the effective
    interface; ``site_map(ancestor, descendant)`` relates two interfaces.
    """

    def __init__(self, order, roots, parents, interfaces, edge_maps):
        self.order: tuple[str, ...] = tuple(order)
        self.roots = frozenset(roots)
        self.parents: dict[str, tuple[str, ...]] = parents
        self.children: dict[str, tuple[str, ...]] = {n: () for n in self.order}
        for child in self.order:
            for p in parents.get(child, ()):
                self.children[p] += (child,)
        self._interfaces: dict[str, tuple[SiteSignature, ...]] = interfaces
        self._edge_maps = edge_maps
        self._descendants: dict[str, frozenset[str]] = {}
        for node in reversed(self.order):
            below = set()
            for c in self.children[node]:
                below.add(c)
                below |= self._descendants[c]
            self._descendants[node] = frozenset(below)
        self._maps: dict[tuple[str, str], SiteMap] = {}

    @property
    def nodes(self) -> frozenset[str]:
        return frozenset(self.order)

    @property
    def leaves(self) -> frozenset[str]:
        return frozenset(n for n in self.order if not self.children[n])

    @property
    def aliases(self) -> tuple[str, ...]:
        return tuple(n for n in self.order if len(self.parents.get(n, ())) > 1)

    def __contains__(self, agent: str) -> bool:
        return agent in self._interfaces

    def interface(self, agent: str) -> tuple[SiteSignature, ...]:
        return self._interfaces[agent]

    def site(self, agent: str, site: str) -> SiteSignature | None:
        for s in self._interfaces[agent]:
            if s.name == site:
                return s
        return None

    def descendants(self, agent: str) -> frozenset[str]:
        """Strict descendants."""
        return self._descendants[agent]

    def reaches(self, ancestor: str, descendant: str) -> bool:
        return descendant in self._descendants[ancestor]

    def ancestors(self, agent: str) -> frozenset[str]:
        return frozenset(n for n in self.order if agent in self._descendants[n])

    def site_map(self, ancestor: str, descendant: str) -> SiteMap:
        key = (ancestor, descendant)
        if key not in self._maps:
            self._maps[key] = self._compute_map(ancestor, descendant)
        return self._maps[key]

    def _compute_map(self, ancestor: str, descendant: str) -> SiteMap:
        if ancestor == descendant:
            return SiteMap(ancestor, descendant, {s.name: (s.name,) for s in self._interfaces[ancestor]})
        if ancestor not in self._descendants or not self.reaches(ancestor, descendant):
            raise ModelError([error(f"{ancestor!r} is not an ancestor of {descendant!r}")], kind="not-an-ancestor")
        merged: dict[str, tuple[str, ...]] | None = None
        for p in self.parents[descendant]:
            if p != ancestor and not self.reaches(ancestor, p):
                continue
            upper = self.site_map(ancestor, p)
            edge = self._edge_maps[(p, descendant)]
            composed = {
                s: tuple(t for mid in img for t in edge.get(mid, ()))
                for s, img in upper.mapping.items()
            }
            if merged is None:
                merged = composed
                continue
            for s, img in composed.items():
                if set(img) != set(merged[s]):
                    raise ModelError(
                        [error(
                            f"incoherent derivations of {descendant!r} from {ancestor!r}: site "
                            f"{s!r} maps to {{{' '.join(merged[s])}}} on one path and "
                            f"{{{' '.join(img)}}} on another"
                        )],
                        kind="incoherent-map",
                    )
        return SiteMap(ancestor, descendant, merged)

    def report(self) -> str:
        """Human readable summary: topological order, interfaces, aliases."""
        lines = ["# agent hierarchy (topological order)"]
        for n in self.order:
            sig = ",".join(format_site_signature(s) for s in self._interfaces[n])
            ps = self.parents.get(n, ())
            origin = "root" if n in self.roots else "from " + ", ".join(ps)
            kids = self.children[n]
            tail = f"; children: {', '.join(kids)}" if kids else ""
            lines.append(f"{n}({sig})  # {origin}{tail}")
        aliases = self.aliases
        lines.append("# aliases: " + (", ".join(aliases) if aliases else "none"))
        lines.append("# leaves: " + ", ".join(n for n in self.order if n in self.leaves))
        return "\n".join(lines) + "\n"


def mentioned_states(ast: ModelAST) -> list[tuple[str, str, str, int]]:
    """(agent, site, state, line) for every internal state a rule mentions.

    Only rules widen alphabets; a state that appears solely in ``%init:`` or
    ``%obs:`` is reported as unknown.
    """
    out = []
    for rule in ast.rules:
        for ap in rule.lhs + rule.rhs:
            line = rule.line
            for sc in ap.sites:
                if sc.state is not None:
                    out.append((ap.agent, sc.site, sc.state, line))
    return out


def build_hierarchy(
    signatures: Iterable[AgentSignature],
    variants: Iterable[VariantDecl],
    mentions: Iterable[tuple[str, str, str, int]] = (),
) -> Hierarchy:
    """Validate the DAG and compute effective interfaces top-down.

    State alphabets are shared along site lineages and extended by the
    states ``mentions`` uses, so ``cat~n`` in a signature together with a
    rule testing ``cat~y`` gives the alphabet {n, y}.
    """
    signatures = list(signatures)
    variants = list(variants)
    diags: list[Diagnostic] = []
    roots = {s.name: s for s in signatures}
    parents: dict[str, list[VariantDecl]] = {}
    for v in variants:
        parents.setdefault(v.child, []).append(v)
    graph = {s.name: () for s in signatures}
    for child, vs in parents.items():
        graph[child] = tuple(v.parent for v in vs)
    for child, ps in graph.items():
        for p in ps:
            if p not in graph:
                line = next(v.line for v in parents[child] if v.parent == p)
                diags.append(error(f"variant {child!r} derives from undeclared agent {p!r}", line, 1))
    if diags:
        raise ModelError(diags)
    try:
        order = tuple(graphlib.TopologicalSorter(graph).static_order())
    except graphlib.CycleError as exc:
        cycle = exc.args[1]
        line = min((v.line for n in cycle for v in parents.get(n, ())), default=0)
        raise ModelError([error("cycle in agent hierarchy: " + " -> ".join(reversed(cycle)), line, 1)], kind="cycle")
    # stable order: a node comes after its parents, ties broken by declaration
    decl_pos = {s.name: i for i, s in enumerate(signatures)}
    for v in variants:
        decl_pos.setdefault(v.child, len(decl_pos))
    order = _stable_topo(graph, decl_pos)

    interfaces: dict[str, tuple[_Site, ...]] = {}
    edge_maps: dict[tuple[str, str], dict[str, tuple[str, ...]]] = {}
    overrides: list[tuple[str, str, str, int]] = []
    for node in order:
        if node in roots:
            interfaces[node] = tuple(_Site(s.name, s.states, s.default_state) for s in roots[node].sites)
            continue
        merged: dict[str, tuple[_Site, str]] = {}
        for v in parents[node]:
            sites, mapping, ovr, problems = _apply_transforms(
                interfaces.get(v.parent, ()), v.transforms, f"{node} = {v.parent}"
            )
            diags.extend(error(p, v.line, 1) for p in problems)
            edge_maps[(v.parent, node)] = mapping
            overrides.extend((node, site, state, v.line) for site, state in ovr)
            for s in sites:
                if s.name not in merged:
                    merged[s.name] = (s, v.parent)
                    continue
                prior, prior_parent = merged[s.name]
                if (frozenset(prior.states), prior.default) != (frozenset(s.states), s.default):
                    diags.append(error(
                        f"alias {node!r}: site {s.name!r} differs between parents "
                        f"{prior_parent!r} ({_describe(prior)}) and {v.parent!r} ({_describe(s)})",
                        v.line, 1,
                    ))
        interfaces[node] = tuple(s for s, _ in merged.values())
    if diags:
        raise ModelError(diags)

    # alphabets: one equivalence class per site lineage
    lineage = DisjointSet()
    for node in order:
        for s in interfaces[node]:
            lineage.add((node, s.name))
    for (parent, child), mapping in edge_maps.items():
        for src, imgs in mapping.items():
            for t in imgs:
                lineage.merge((parent, src), (child, t))
    alphabet: dict[tuple[str, str], list[str]] = {}
    for node in order:
        for s in interfaces[node]:
            states = alphabet.setdefault(lineage[(node, s.name)], [])
            states.extend(x for x in s.states if x not in states)
    for agent, site, state, line in mentions:
        if agent not in interfaces or not any(s.name == site for s in interfaces[agent]):
            continue  # unknown agents/sites are reported where they are used
        states = alphabet[lineage[(agent, site)]]
        if not states:
            diags.append(error(f"site {agent}.{site} carries no internal state but '~{state}' is used", line, 1))
        elif state not in states:
            states.append(state)
    for node, site, state, line in overrides:
        states = alphabet[lineage[(node, site)]]
        if states and state not in states:
            diags.append(error(
                f"{node}: default state {state!r} is not a state of site {site!r} "
                f"(states: {', '.join(states)})", line, 1,
            ))
    if diags:
        raise ModelError(diags)
    final = {
        node: tuple(
            SiteSignature(s.name, tuple(alphabet[lineage[(node, s.name)]]), s.default)
            for s in interfaces[node]
        )
        for node in order
    }

    h = Hierarchy(
        order, set(roots), {n: tuple(v.parent for v in vs) for n, vs in parents.items()},
        final, edge_maps,
    )
    # multi-path coherence is checked eagerly so lint reports it
    for node in h.aliases:
        for anc in sorted(h.ancestors(node)):
            h.site_map(anc, node)
    return h


def _describe(s: _Site) -> str:
    if not s.states:
        return "no internal state"
    return f"states {{{', '.join(s.states)}}}, default {s.default}"


def _stable_topo(graph: Mapping[str, tuple[str, ...]], pos: Mapping[str, int]) -> tuple[str, ...]:
    """Kahn's algorithm, always releasing the earliest-declared ready node."""
    import heapq

    pending = {n: len(set(ps)) for n, ps in graph.items()}
    kids: dict[str, list[str]] = {n: [] for n in graph}
    for n, ps in graph.items():
        for p in set(ps):
            kids[p].append(n)
    ready = [(pos[n], n) for n, k in pending.items() if k == 0]
    heapq.heapify(ready)
    out = []
    while ready:
        _, n = heapq.heappop(ready)
        out.append(n)
        for c in kids[n]:
            pending[c] -= 1
            if pending[c] == 0:
                heapq.heappush(ready, (pos[c], c))
    return tuple(out)


def hierarchy_from_model(ast: ModelAST) -> Hierarchy:
    return build_hierarchy(ast.signatures, ast.variants, mentioned_states(ast))


# ---------------------------------------------------------------------------
# Fringes


def fringe_descendants(h: Hierarchy, agent: str, fringe: Iterable[str]) -> frozenset[str]:
    return frozenset(f for f in fringe if f == agent or h.reaches(agent, f))


def default_fringe(h: Hierarchy) -> frozenset[str]:
    return h.leaves


def effective_fringe(h: Hierarchy, fringe: Iterable[str] | None) -> frozenset[str]:
    """The chosen agents plus every leaf not below one of them.

    Families the user did not mention keep the default (their leaves).
    """
    if fringe is None:
        return default_fringe(h)
    chosen = frozenset(fringe)
    extra = {
        leaf for leaf in h.leaves
        if leaf not in chosen and not any(h.reaches(f, leaf) for f in chosen if f in h)
    }
    return chosen | extra


def validate_fringe(h: Hierarchy, fringe: Iterable[str] | None, line: int = 0) -> list[Diagnostic]:
    if fringe is None:
        return []
    fringe = list(fringe)
    if not fringe:
        return [error("concrete fringe is empty", line, 1)]
    diags = [error(f"unknown agent {f!r} in concrete fringe", line, 1) for f in fringe if f not in h]
    known = [f for f in fringe if f in h]
    for a in known:
        for b in known:
            if a != b and h.reaches(a, b):
                diags.append(warning(f"concrete fringe is not an antichain: {b!r} lies below {a!r}", line, 1))
    return diags
