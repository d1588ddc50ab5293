"""Compilation of generic rules down to a concrete fringe.

Two knobs: the fringe (which agents count as concrete) sets agent
resolution, and ``%instantiate:`` directives set rule resolution by
replacing a generic rule with chosen partial compilations of it.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

from .diagnostics import Diagnostic, ModelError, error, has_errors, warning
from .hierarchy import (
    Hierarchy, effective_fringe, fringe_descendants, hierarchy_from_model, validate_fringe,
)
from .syntax import (
    AgentPattern, InstantiateDecl, ModelAST, Pattern, Rule, SiteCondition,
    format_pattern, format_rate, format_rule, format_signature, AgentSignature,
)

_MAX_PERMUTED = 6


@dataclass(frozen=True)
class OccurrenceChoice:
    index: int
    agent: str
    target: str
    sites: tuple[tuple[str, str], ...] = ()

    @property
    def is_identity(self) -> bool:
        return self.agent == self.target and all(a == b for a, b in self.sites)

    def __str__(self) -> str:
        text = f"{self.agent}@{self.index}->{self.target}"
        moved = [(a, b) for a, b in self.sites if a != b]
        if moved:
            text += "[" + ", ".join(f"{a}->{b}" for a, b in moved) + "]"
        return text


@dataclass(frozen=True)
class Substitution:
    choices: tuple[OccurrenceChoice, ...] = ()

    @property
    def is_identity(self) -> bool:
        return all(c.is_identity for c in self.choices)

    def __str__(self) -> str:
        moved = [str(c) for c in self.choices if not c.is_identity]
        return ", ".join(moved) if moved else "identity"


@dataclass(frozen=True)
class Provenance:
    """How a compiled rule was obtained: (rule name, substitution) steps, oldest first."""

    steps: tuple[tuple[str, Substitution], ...]

    @property
    def source(self) -> str:
        return self.steps[0][0]

    def __str__(self) -> str:
        return "; then ".join(f"{name} via {sub}" for name, sub in self.steps)


@dataclass
class CompiledRuleSet:
    rules: list[Rule] = field(default_factory=list)
    provenance: list[Provenance] = field(default_factory=list)
    warnings: list[Diagnostic] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rules)


def _fail(message: str, kind: str, line: int = 0):
    raise ModelError([error(message, line, 1)], kind=kind)


def instantiate_rule(rule: Rule, h: Hierarchy, sub: Substitution, name: str | None = None) -> Rule:
    """Replace substituted occurrences by descendants, renaming mentioned sites.

    Sites with a single image need no explicit choice. Raises
    :class:`ModelError` (``kind`` is ``deleted-site``, ``not-a-descendant``,
    ``bad-site-choice`` or ``unknown-site``).
    """
    lhs, rhs = list(rule.lhs), list(rule.rhs)
    for ch in sub.choices:
        occ = rule.lhs[ch.index]
        if ch.agent != occ.agent:
            _fail(f"rule {rule.name!r}: occurrence {ch.index} is {occ.agent!r}, not {ch.agent!r}", "bad-substitution", rule.line)
        if ch.target != occ.agent and not h.reaches(occ.agent, ch.target):
            _fail(f"rule {rule.name!r}: {ch.target!r} is not a descendant of {occ.agent!r}", "not-a-descendant", rule.line)
        m = h.site_map(occ.agent, ch.target)
        chosen = dict(ch.sites)
        rename = {}
        for s in occ.site_names:
            if s not in m.mapping:
                _fail(f"rule {rule.name!r}: agent {occ.agent!r} has no site {s!r}", "unknown-site", rule.line)
            img = m[s]
            if not img:
                _fail(f"rule {rule.name!r}: site {s!r} of {occ.agent!r} is deleted in {ch.target!r}", "deleted-site", rule.line)
            pick = chosen.get(s)
            if pick is None:
                if len(img) > 1:
                    _fail(f"rule {rule.name!r}: site {s!r} has several images in {ch.target!r} ({', '.join(img)}); choose one",
                          "bad-site-choice", rule.line)
                pick = img[0]
            elif pick not in img:
                _fail(f"rule {rule.name!r}: {pick!r} is not an image of {occ.agent}.{s} in {ch.target!r}", "bad-site-choice", rule.line)
            rename[s] = pick
        lhs[ch.index] = _retarget(rule.lhs[ch.index], ch.target, rename)
        rhs[ch.index] = _retarget(rule.rhs[ch.index], ch.target, rename)
    return Rule(name or rule.name, tuple(lhs), tuple(rhs), rule.rate, rule.unary_rate, line=rule.line)


def _retarget(ap: AgentPattern, target: str, rename: dict[str, str]) -> AgentPattern:
    return AgentPattern(target, tuple(SiteCondition(rename[sc.site], sc.state, sc.bond) for sc in ap.sites))


def occurrence_choices(
    occ: AgentPattern, index: int, h: Hierarchy, targets: Iterable[str],
    fixed: dict[str, str] | None = None,
) -> list[OccurrenceChoice]:
    """Every (target, site choice) for one occurrence, skipping targets where a mentioned site was deleted."""
    out = []
    fixed = fixed or {}
    for t in sorted(targets):
        m = h.site_map(occ.agent, t)
        images = []
        for s in occ.site_names:
            img = m.image(s)
            if s in fixed:
                img = tuple(x for x in img if x == fixed[s]) or img[:0]
            images.append(sorted(img))
        if any(not img for img in images):
            continue
        for combo in itertools.product(*images):
            out.append(OccurrenceChoice(index, occ.agent, t, tuple(zip(occ.site_names, combo))))
    return out


def enumerate_substitutions(
    rule: Rule, h: Hierarchy, targets: Callable[[int, AgentPattern], Iterable[str]]
) -> Iterator[Substitution]:
    """Cross product over occurrences of their admissible choices, in lexicographic order."""
    options = [occurrence_choices(occ, i, h, targets(i, occ)) for i, occ in enumerate(rule.lhs)]
    for combo in itertools.product(*options):
        yield Substitution(tuple(combo))


# ---------------------------------------------------------------------------
# canonical forms


def _canon_side(pattern: Pattern, perm: Sequence[int]) -> str:
    reordered = tuple(
        AgentPattern(pattern[k].agent, tuple(sorted(pattern[k].sites, key=lambda s: s.site)))
        for k in perm
    )
    return format_pattern(reordered)


def canonical_structure(lhs: Pattern, rhs: Pattern) -> str:
    """Text of the rule under the agent ordering that sorts first.

    Site order within agents and bond labels are normalized; for more than
    a handful of agents only the written order is used.
    """
    n = len(lhs)
    perms = itertools.permutations(range(n)) if n <= _MAX_PERMUTED else [tuple(range(n))]
    return min(f"{_canon_side(lhs, p)} -> {_canon_side(rhs, p)}" for p in perms)


def canonical_rule(rule: Rule) -> tuple[str, str, str]:
    """Structure plus rates; the dedup key for compiled rules."""
    rate = "" if rule.rate is None else format_rate(rule.rate)
    unary = "" if rule.unary_rate is None else format_rate(rule.unary_rate)
    return canonical_structure(rule.lhs, rule.rhs), rate, unary


def canonical_pattern(pattern: Pattern) -> str:
    return canonical_structure(pattern, pattern).split(" -> ")[0]


# ---------------------------------------------------------------------------
# compilation


def check_sites(rule_like: Iterable[tuple[str, Pattern, int]], h: Hierarchy) -> list[Diagnostic]:
    diags = []
    for what, pattern, line in rule_like:
        for ap in pattern:
            if ap.agent not in h:
                diags.append(error(f"{what}: unknown agent {ap.agent!r}", line, 1))
                continue
            names = {s.name for s in h.interface(ap.agent)}
            for sc in ap.sites:
                if sc.site not in names:
                    diags.append(error(f"{what}: agent {ap.agent!r} has no site {sc.site!r}", line, 1))
                elif sc.state is not None and sc.state not in h.site(ap.agent, sc.site).states:
                    diags.append(error(f"{what}: {sc.state!r} is not a state of {ap.agent}.{sc.site}", line, 1))
    return diags


def compile_rules(
    rules: Iterable[Rule],
    h: Hierarchy,
    fringe: Iterable[str] | None = None,
    drop_below_fringe: bool = False,
    history: dict[str, Provenance] | None = None,
) -> CompiledRuleSet:
    """Expand every rule over the fringe descendants of its agents.

    ``history`` maps rule names produced by earlier instantiation to their
    provenance so compiled provenance records the whole chain.
    """
    rules = list(rules)
    fringe = effective_fringe(h, fringe)
    history = history or {}
    diags = check_sites([(f"rule {r.name!r}", r.lhs, r.line) for r in rules], h)
    if diags:
        raise ModelError(diags, kind="unknown-site")
    out = CompiledRuleSet()
    seen: dict[tuple, int] = {}
    by_structure: dict[str, tuple] = {}
    for rule in rules:
        below = [(ap.agent, f) for ap in rule.lhs for f in sorted(fringe)
                 if ap.agent not in fringe and h.reaches(f, ap.agent)]
        if below:
            agent, f = below[0]
            msg = f"rule {rule.name!r} mentions {agent!r}, which lies below the concrete agent {f!r}"
            if not drop_below_fringe:
                raise ModelError([error(msg, rule.line, 1)], kind="below-fringe")
            out.warnings.append(warning(msg + "; rule dropped", rule.line, 1))
            continue

        def targets(i, occ):
            if occ.agent in fringe:
                return [occ.agent]
            return fringe_descendants(h, occ.agent, fringe)

        produced = []
        for sub in enumerate_substitutions(rule, h, targets):
            inst = instantiate_rule(rule, h, sub)
            key = canonical_rule(inst)
            if key in seen:
                continue
            if key[0] in by_structure and by_structure[key[0]] != key[1:]:
                out.warnings.append(warning(
                    f"rule {rule.name!r} yields {key[0]} which another rule also yields with different rates",
                    rule.line, 1,
                ))
            seen[key] = len(out.rules)
            by_structure.setdefault(key[0], key[1:])
            produced.append((inst, sub))
        if not produced:
            out.warnings.append(warning(f"rule {rule.name!r} has no concrete instance for this fringe", rule.line, 1))
        for k, (inst, sub) in enumerate(produced, start=1):
            keep = len(produced) == 1 and sub.is_identity
            name = rule.name if keep else f"{rule.name}#{k}"
            out.rules.append(Rule(name, inst.lhs, inst.rhs, inst.rate, inst.unary_rate, line=rule.line))
            prior = history.get(rule.name)
            steps = (prior.steps if prior else ()) + ((rule.name, sub),)
            out.provenance.append(Provenance(steps))
    return out


def compile_pattern(pattern: Pattern, h: Hierarchy, fringe: Iterable[str] | None = None) -> list[Pattern]:
    """Concrete patterns whose embeddings together make up those of ``pattern``."""
    ruleset = compile_rules([Rule("obs", pattern, pattern)], h, fringe)
    return [r.lhs for r in ruleset.rules]


def apply_instantiations(
    rules: Sequence[Rule], decls: Sequence[InstantiateDecl], h: Hierarchy
) -> tuple[list[Rule], dict[str, Provenance]]:
    """Replace each rule named by a ``%instantiate:`` directive by its instantiations."""
    per_rule: dict[str, list[Rule]] = {}
    history: dict[str, Provenance] = {}
    names = {r.name for r in rules}
    for decl in decls:
        targets = [r for r in rules if r.name == decl.rule or r.name in (f"{decl.rule}.fwd", f"{decl.rule}.rev")]
        if not targets:
            raise ModelError([error(f"%instantiate: no rule named {decl.rule!r}", decl.line, 1)], kind="unresolved")
        for rule in targets:
            options = []
            used = set()
            for i, occ in enumerate(rule.lhs):
                subs = [s for s in decl.substitutions if s.agent == occ.agent and s.index in (None, i)]
                if len(subs) > 1:
                    raise ModelError([error(f"%instantiate: occurrence {i} of {rule.name!r} matched twice", decl.line, 1)])
                if not subs:
                    options.append([OccurrenceChoice(i, occ.agent, occ.agent, tuple((s, s) for s in occ.site_names))])
                    continue
                s = subs[0]
                used.add(s)
                if s.target != occ.agent and not h.reaches(occ.agent, s.target):
                    raise ModelError([error(f"%instantiate: {s.target!r} is not a descendant of {occ.agent!r}", decl.line, 1)],
                                     kind="not-a-descendant")
                fixed = dict(s.sites)
                unknown = [a for a in fixed if a not in occ.site_names]
                if unknown:
                    raise ModelError([error(f"%instantiate: rule {rule.name!r} does not mention site {unknown[0]!r} of {occ.agent!r}",
                                            decl.line, 1)])
                opts = occurrence_choices(occ, i, h, [s.target], fixed)
                if not opts:
                    raise ModelError([error(f"%instantiate: no valid instance of {rule.name!r} with {occ.agent}->{s.target}"
                                            " (a mentioned site is deleted or the site choice is not an image)", decl.line, 1)],
                                     kind="deleted-site")
                options.append(opts)
            for s in decl.substitutions:
                if s not in used:
                    raise ModelError([error(f"%instantiate: {s.agent!r} matches no occurrence in rule {rule.name!r}", decl.line, 1)])
            bucket = per_rule.setdefault(rule.name, [])
            for combo in itertools.product(*options):
                sub = Substitution(tuple(combo))
                new_name = f"{rule.name}/{len(bucket) + 1}"
                while new_name in names:
                    new_name += "'"
                bucket.append(instantiate_rule(rule, h, sub, name=new_name))
                history[new_name] = Provenance(((rule.name, sub),))
    out = []
    for r in rules:
        out.extend(per_rule.get(r.name, [r]))
    return out, history


@dataclass
class ResolvedModel:
    """A model compiled at a chosen agent and rule resolution."""

    ast: ModelAST
    hierarchy: Hierarchy
    fringe: frozenset[str]
    ruleset: CompiledRuleSet
    observables: dict[str, list[Pattern]]
    warnings: list[Diagnostic]

    @property
    def rules(self) -> list[Rule]:
        return self.ruleset.rules

    @property
    def params(self) -> dict[str, float]:
        return {p.name: p.value for p in self.ast.params}


def resolve_model(
    ast: ModelAST, fringe: Iterable[str] | None = None, drop_below_fringe: bool = False
) -> ResolvedModel:
    """Instantiate, then compile against the fringe (``fringe`` overrides ``%concrete:``)."""
    h = hierarchy_from_model(ast)
    diags = check_sites(
        [(f"rule {r.name!r}", r.lhs, r.line) for r in ast.rules]
        + [("%init", i.pattern, i.line) for i in ast.inits]
        + [(f"%obs {o.name!r}", o.pattern, o.line) for o in ast.observables],
        h,
    )
    chosen = list(fringe) if fringe is not None else ast.fringe
    diags += validate_fringe(h, chosen, 0 if fringe is not None else ast.fringe_line)
    if has_errors(diags):
        raise ModelError(diags)
    eff = effective_fringe(h, chosen)
    rules, history = apply_instantiations(ast.rules, ast.instantiations, h)
    ruleset = compile_rules(rules, h, eff, drop_below_fringe, history)
    observables = {}
    for o in ast.observables:
        try:
            observables[o.name] = compile_pattern(o.pattern, h, eff)
        except ModelError as exc:
            raise ModelError([error(f"%obs {o.name!r}: {d.message}", o.line, 1) for d in exc.diagnostics]) from None
    return ResolvedModel(ast, h, eff, ruleset, observables, diags + ruleset.warnings)


# ---------------------------------------------------------------------------
# output


def emit_text(model: ResolvedModel) -> str:
    """Compiled model as ``.gka`` text using only concrete constructs."""
    h = model.hierarchy
    lines = ["# concrete fringe: " + ", ".join(n for n in h.order if n in model.fringe)]
    lines += [format_signature(AgentSignature(n, h.interface(n))) for n in h.order if n in model.fringe]
    lines += [f"%param: {p.name} {p.value!r}" for p in model.ast.params]
    for rule, prov in zip(model.ruleset.rules, model.ruleset.provenance):
        lines.append(f"# from {prov}")
        lines.append(format_rule(rule))
    for i in model.ast.inits:
        text = f"%init: {i.count} {format_pattern(i.pattern)}"
        if all(ap.agent in model.fringe for ap in i.pattern):
            lines.append(text)
        else:
            lines.append("# not concrete at this fringe: " + text)
    for name, patterns in model.observables.items():
        for k, p in enumerate(patterns, start=1):
            label = name if len(patterns) == 1 else f"{name}#{k}"
            lines.append(f"%obs: '{label}' {format_pattern(p)}")
    return "\n".join(lines) + "\n"


def emit_json(model: ResolvedModel) -> str:
    rules = []
    for rule, prov in zip(model.ruleset.rules, model.ruleset.provenance):
        rules.append({
            "name": rule.name,
            "text": format_rule(rule, label=False),
            "rate": rule.rate,
            "unary_rate": rule.unary_rate,
            "source": prov.source,
            "provenance": [
                {"rule": name, "substitution": [
                    {"occurrence": c.index, "agent": c.agent, "target": c.target, "sites": dict(c.sites)}
                    for c in sub.choices
                ]}
                for name, sub in prov.steps
            ],
        })
    doc = {
        "fringe": sorted(model.fringe),
        "rules": rules,
        "observables": {k: [format_pattern(p) for p in v] for k, v in model.observables.items()},
    }
    return json.dumps(doc, indent=2) + "\n"
