"""Independent reference implementations used as test oracles.

Nothing here reuses the matching, connectivity or compilation code under
test; each oracle is the simplest correct thing (exhaustive enumeration,
plain BFS, dense linear algebra).
"""

from __future__ import annotations

import itertools
import random
from collections import deque

import numpy as np

from gkappa.syntax import (
    ANY, BOUND, Add, AgentPattern, Delete, DefaultOverride, Duplicate, Rename, Rule, SiteCondition,
)


# ---------------------------------------------------------------------------
# continuous-time Markov chains


def stationary(Q: np.ndarray) -> np.ndarray:
    """Stationary law of an irreducible generator by a dense least-squares solve."""
    n = Q.shape[0]
    A = np.vstack([Q.T, np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi = np.linalg.lstsq(A, b, rcond=None)[0]
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def explore(initial, transitions):
    """Breadth-first state space of a CTMC given ``transitions(state) -> [(next, rate)]``.

    Returns (states, generator matrix).
    """
    index = {initial: 0}
    states = [initial]
    edges = []
    queue = deque([initial])
    while queue:
        s = queue.popleft()
        for nxt, rate in transitions(s):
            if rate <= 0:
                continue
            if nxt not in index:
                index[nxt] = len(states)
                states.append(nxt)
                queue.append(nxt)
            edges.append((index[s], index[nxt], rate))
    Q = np.zeros((len(states), len(states)))
    for i, j, r in edges:
        Q[i, j] += r
    np.fill_diagonal(Q, Q.diagonal() - Q.sum(axis=1))
    return states, Q


def binding_chain(n_a: int, n_b: int, kon: float, koff: float) -> np.ndarray:
    """Stationary law of the bound count for A + B <-> AB with per-pair rates."""
    _, Q = explore(0, lambda k: [(k + 1, kon * (n_a - k) * (n_b - k)), (k - 1, koff * k)])
    # states were discovered in order 0, 1, 2, ...
    return stationary(Q)


def ring_chain(n: int, b: float, u: float, koff: float):
    """Exact law for ``n`` A-C-B trimers whose A.t and B.t sites bind.

    A state is a frozenset of (i, j) bonds between A_i and B_j. A new bond
    fires at ``u`` when A_i and B_j are already connected and at ``b``
    otherwise. Returns {state: probability}.
    """

    def connected(bonds, i, j):
        # trimer k joins A_k and B_k; bond (p, q) joins A_p and B_q
        parent = list(range(n))

        def find(x):
            while parent[x] != x:
                x = parent[x]
            return x

        for p, q in bonds:
            parent[find(p)] = find(q)
        return find(i) == find(j)

    def transitions(bonds):
        out = []
        used_a = {p for p, _ in bonds}
        used_b = {q for _, q in bonds}
        for i in range(n):
            for j in range(n):
                if i not in used_a and j not in used_b:
                    rate = u if connected(bonds, i, j) else b
                    out.append((bonds | {(i, j)}, rate))
        for bond in bonds:
            out.append((bonds - {bond}, koff))
        return out

    states, Q = explore(frozenset(), transitions)
    return dict(zip(states, stationary(Q)))


# ---------------------------------------------------------------------------
# site graphs


def brute_embeddings(pattern, m) -> list[tuple[int, ...]]:
    """Every injective map from pattern occurrences to agents satisfying all conditions."""
    out = []
    for emb in itertools.permutations(range(len(m.names)), len(pattern)):
        if satisfies(pattern, m, emb):
            out.append(emb)
    return sorted(out)


def satisfies(pattern, m, emb) -> bool:
    ends = {}
    for o, ap in enumerate(pattern):
        if m.names[emb[o]] != ap.agent:
            return False
        for sc in ap.sites:
            if sc.site not in m.states[emb[o]]:
                return False
            if sc.state is not None and m.states[emb[o]][sc.site] != sc.state:
                return False
            link = m.links[emb[o]].get(sc.site)
            if sc.bond is None and link is not None:
                return False
            if sc.bond == BOUND and link is None:
                return False
            if isinstance(sc.bond, int):
                ends.setdefault(sc.bond, []).append((emb[o], sc.site))
                if link is None:
                    return False
    for (a, s), (b, t) in ends.values():
        if m.links[a].get(s) != (b, t):
            return False
    return True


def bfs_components(m) -> list[frozenset[int]]:
    seen = set()
    comps = []
    for start in range(len(m.names)):
        if start in seen:
            continue
        comp = {start}
        queue = deque([start])
        while queue:
            a = queue.popleft()
            for b, _ in m.links[a].values():
                if b not in comp:
                    comp.add(b)
                    queue.append(b)
        seen |= comp
        comps.append(frozenset(comp))
    return sorted(comps, key=min)


# ---------------------------------------------------------------------------
# compilation


def naive_images(variants, ancestor: str, descendant: str, site: str) -> set[str]:
    """Images of ``ancestor.site`` in ``descendant`` by walking every path of variant edges."""
    if ancestor == descendant:
        return {site}
    out = set()
    for v in variants:
        if v.parent != ancestor:
            continue
        step = {site}
        for t in v.transforms:
            if isinstance(t, (Add, DefaultOverride)) or t.site != site:
                continue
            if isinstance(t, Delete):
                step = set()
            elif isinstance(t, Rename):
                step = {t.new_name}
            elif isinstance(t, Duplicate):
                step = set(t.new_names)
        for s in step:
            out |= naive_images(variants, v.child, descendant, s)
    return out


def naive_descendants(variants, agent: str) -> set[str]:
    out = {agent}
    for v in variants:
        if v.parent == agent:
            out |= naive_descendants(variants, v.child)
    return out


def naive_compile(rule: Rule, ast, fringe) -> list[Rule]:
    """Every concrete instance of ``rule``: fringe targets times site images, no dedup."""
    per_occ = []
    for ap in rule.lhs:
        options = []
        for target in sorted(naive_descendants(ast.variants, ap.agent) & set(fringe)):
            images = [sorted(naive_images(ast.variants, ap.agent, target, sc.site)) for sc in ap.sites]
            for combo in itertools.product(*images):
                options.append((target, dict(zip(ap.site_names, combo))))
        per_occ.append(options)
    out = []
    for choice in itertools.product(*per_occ):
        def side(pattern):
            return tuple(
                AgentPattern(t, tuple(SiteCondition(ren[sc.site], sc.state, sc.bond) for sc in ap.sites))
                for ap, (t, ren) in zip(pattern, choice)
            )
        out.append(Rule(rule.name, side(rule.lhs), side(rule.rhs), rule.rate, rule.unary_rate))
    return out


# ---------------------------------------------------------------------------
# random models


def random_model_text(rng: random.Random) -> tuple[str, str]:
    """A small random hierarchy with one generic rule, as ``.gka`` text.

    Returns (text, name of the rule). The rule mentions a non-leaf agent so
    compilation has something to do.
    """
    counter = itertools.count()
    lines = []
    iface: dict[str, dict[str, tuple[str, ...]]] = {}
    children: dict[str, list[str]] = {}
    for r in range(rng.randint(1, 2)):
        name = f"R{r}"
        sites = {}
        for _ in range(rng.randint(1, 3)):
            s = f"s{next(counter)}"
            sites[s] = tuple(rng.sample(["a", "b", "c"], rng.choice([0, 0, 2])))
        iface[name] = sites
        children[name] = []
        lines.append(f"{name}(" + ",".join(s + "".join(f"~{x}" for x in st) for s, st in sites.items()) + ")")
    for k in range(rng.randint(1, 5)):
        parent = rng.choice(sorted(iface))
        child = f"V{k}"
        sites = dict(iface[parent])
        parts = []
        for s in list(sites):
            roll = rng.random()
            if roll < 0.15:
                parts.append(f"-{s}")
                del sites[s]
            elif roll < 0.35:
                t = f"s{next(counter)}"
                parts.append(f"{s}\\{{{t}}}")
                sites[t] = sites.pop(s)
            elif roll < 0.55:
                new = [f"s{next(counter)}" for _ in range(rng.randint(2, 3))]
                parts.append(f"{s}\\{{{' '.join(new)}}}")
                st = sites.pop(s)
                sites.update({t: st for t in new})
        if rng.random() < 0.3:
            t = f"s{next(counter)}"
            parts.append(f"+{t}")
            sites[t] = ()
        lines.append(f"{child} = {parent}" + (f"[{' '.join(parts)}]" if parts else ""))
        iface[child] = sites
        children[child] = []
        children[parent].append(child)
        if rng.random() < 0.25:
            # two plain copies of one node merged again by an alias
            a, b, x = f"{child}a", f"{child}b", f"{child}x"
            z = f"s{next(counter)}"
            lines += [f"{a} = {child}[+{z}]", f"{b} = {child}[+{z}]", f"{x} = {a}", f"{x} = {b}"]
            for n in (a, b):
                iface[n] = {**sites, z: ()}
                children[n] = [x]
            iface[x] = {**sites, z: ()}
            children[x] = []
            children[child] += [a, b]

    inner = [n for n in iface if children[n] and iface[n]]
    if not inner:
        return random_model_text(rng)
    occs = [rng.choice(inner)]
    if rng.random() < 0.6:
        occs.append(rng.choice([n for n in iface if iface[n]]))
    lhs, rhs = [], []
    bond_sites = []
    for k, agent in enumerate(occs):
        names = rng.sample(sorted(iface[agent]), rng.randint(1, min(2, len(iface[agent]))))
        l, r = [], []
        for s in names:
            st = iface[agent][s]
            if st and rng.random() < 0.6:
                a, b = rng.choice(st), rng.choice(st)
                l.append(f"{s}~{a}")
                r.append(f"{s}~{b}")
            else:
                l.append(s)
                r.append(s)
                bond_sites.append((k, len(l) - 1))
        lhs.append([agent, l])
        rhs.append([agent, r])
    if len(occs) == 2:
        free = [(k, i) for k, i in bond_sites]
        if any(k == 0 for k, _ in free) and any(k == 1 for k, _ in free) and rng.random() < 0.7:
            k0 = next(i for k, i in free if k == 0)
            k1 = next(i for k, i in free if k == 1)
            rhs[0][1][k0] += "!1"
            rhs[1][1][k1] += "!1"
    fmt = lambda side: ", ".join(f"{a}({','.join(s)})" for a, s in side)
    lines.append(f"'r' {fmt(lhs)} -> {fmt(rhs)}")
    return "\n".join(lines) + "\n", "r"


def random_mixture_spec(rng: random.Random, n_agents: int):
    """Agents of types A(x,y~u~p) and B(x,z); random states and a random partial bonding."""
    agents = []
    for _ in range(n_agents):
        if rng.random() < 0.5:
            agents.append(("A", {"y": rng.choice(["u", "p"])}))
        else:
            agents.append(("B", {}))
    ends = [(i, s) for i, (name, _) in enumerate(agents) for s in (("x", "y") if name == "A" else ("x", "z"))]
    rng.shuffle(ends)
    bonds = []
    while len(ends) >= 2 and rng.random() < 0.7:
        a, b = ends.pop(), ends.pop()
        bonds.append((a, b))
    return agents, bonds


def random_pattern(rng: random.Random, n_occ: int):
    sites = {"A": ("x", "y"), "B": ("x", "z")}
    occs = []
    for _ in range(n_occ):
        agent = rng.choice("AB")
        conds = {}
        for s in sites[agent]:
            if rng.random() < 0.6:
                state = rng.choice(["u", "p"]) if s == "y" and rng.random() < 0.5 else None
                bond = rng.choice([None, BOUND, ANY])
                conds[s] = [state, bond]
        occs.append((agent, conds))
    # link a few pairs of mentioned sites with labels
    label = 0
    mentioned = [(o, s) for o, (_, c) in enumerate(occs) for s in c]
    rng.shuffle(mentioned)
    while len(mentioned) >= 2 and rng.random() < 0.6:
        (o1, s1), (o2, s2) = mentioned.pop(), mentioned.pop()
        occs[o1][1][s1][1] = label
        occs[o2][1][s2][1] = label
        label += 1
    return tuple(
        AgentPattern(agent, tuple(SiteCondition(s, st, bd) for s, (st, bd) in conds.items()))
        for agent, conds in occs
    )
