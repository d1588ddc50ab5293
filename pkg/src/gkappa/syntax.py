"""Lexer, parser and canonical printer for generic Kappa (``.gka``) files.

The format is line oriented. Each non-blank line holds one of:

* an agent signature, ``Shc(PTB,YXNX~u,SH2)``;
* a variant declaration, ``p52 = Shc[YXNX\\{Y239 Y317}]``;
* a rule, ``'bind' C(r),C(l) -> C(r!0),C(l!0) @ k (u)``;
* a directive: ``%param:``, ``%concrete:``, ``%init:``, ``%obs:``,
  ``%instantiate:``.

``#`` starts a comment. A site written without a bond marker is free;
``!n`` names a bond, ``!_`` means bound to anything and ``?`` leaves the
binding state unspecified.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

from .diagnostics import Diagnostic, ModelError, error

Rate = Union[float, str]
Count = Union[int, str]

# bond markers besides integer labels
BOUND = "_"
ANY = "?"


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class SiteSignature:
    name: str
    states: tuple[str, ...] = ()
    default_state: str | None = None

    def __post_init__(self):
        if self.default_state is None and self.states:
            object.__setattr__(self, "default_state", self.states[0])
        if self.default_state is not None and self.default_state not in self.states:
            raise ValueError(f"default state {self.default_state!r} not among {self.states}")


@dataclass(frozen=True)
class AgentSignature:
    name: str
    sites: tuple[SiteSignature, ...] = ()
    line: int = field(default=0, compare=False, repr=False)

    def site(self, name: str) -> SiteSignature | None:
        for s in self.sites:
            if s.name == name:
                return s
        return None


@dataclass(frozen=True)
class Delete:
    site: str

    @property
    def source(self) -> str:
        return self.site


@dataclass(frozen=True)
class Rename:
    site: str
    new_name: str

    @property
    def source(self) -> str:
        return self.site


@dataclass(frozen=True)
class Duplicate:
    site: str
    new_names: tuple[str, ...]

    @property
    def source(self) -> str:
        return self.site


@dataclass(frozen=True)
class Add:
    site: SiteSignature

    @property
    def source(self) -> None:
        return None


@dataclass(frozen=True)
class DefaultOverride:
    site: str
    state: str

    @property
    def source(self) -> str:
        return self.site


SiteTransform = Union[Delete, Rename, Duplicate, Add, DefaultOverride]


@dataclass(frozen=True)
class VariantDecl:
    child: str
    parent: str
    transforms: tuple[SiteTransform, ...] = ()
    line: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class SiteCondition:
    """One site of an agent pattern.

    ``bond`` is ``None`` (free), an int label, ``"_"`` (bound to
    something) or ``"?"`` (unspecified).
    """

    site: str
    state: str | None = None
    bond: int | str | None = None


@dataclass(frozen=True)
class AgentPattern:
    agent: str
    sites: tuple[SiteCondition, ...] = ()

    def site(self, name: str) -> SiteCondition | None:
        for s in self.sites:
            if s.site == name:
                return s
        return None

    @property
    def site_names(self) -> tuple[str, ...]:
        return tuple(s.site for s in self.sites)


Pattern = tuple[AgentPattern, ...]


@dataclass(frozen=True)
class Rule:
    name: str
    lhs: Pattern
    rhs: Pattern
    rate: Rate | None = None
    unary_rate: Rate | None = None
    line: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class Param:
    name: str
    value: float
    line: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class InitDecl:
    count: Count
    pattern: Pattern
    line: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class ObsDecl:
    name: str
    pattern: Pattern
    line: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class AgentSubst:
    """``agent[@index] -> target[site->site, ...]`` inside ``%instantiate:``."""

    agent: str
    target: str
    index: int | None = None
    sites: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class InstantiateDecl:
    rule: str
    substitutions: tuple[AgentSubst, ...]
    line: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class ModelAST:
    signatures: tuple[AgentSignature, ...] = ()
    variants: tuple[VariantDecl, ...] = ()
    params: tuple[Param, ...] = ()
    fringe: tuple[str, ...] | None = None
    rules: tuple[Rule, ...] = ()
    instantiations: tuple[InstantiateDecl, ...] = ()
    inits: tuple[InitDecl, ...] = ()
    observables: tuple[ObsDecl, ...] = ()
    fringe_line: int = field(default=0, compare=False, repr=False)

    @property
    def agents(self) -> set[str]:
        return {s.name for s in self.signatures} | {v.child for v in self.variants}

    def patterns(self) -> Iterable[tuple[Pattern, int]]:
        """Every pattern in the model with the line it came from."""
        for r in self.rules:
            yield r.lhs, r.line
            yield r.rhs, r.line
        for i in self.inits:
            yield i.pattern, i.line
        for o in self.observables:
            yield o.pattern, o.line


# ---------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#.*)
  | (?P<directive>%[A-Za-z_]+:)
  | (?P<label>'[^'\n]*')
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><->|->|[(),~!?\[\]{}\\+\-=@])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    col: int


class _SyntaxError(Exception):
    def __init__(self, col: int, message: str):
        self.col = col
        self.message = message


def tokenize_line(line: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(line):
        m = _TOKEN_RE.match(line, pos)
        if m is None:
            raise _SyntaxError(pos + 1, f"unexpected character {line[pos]!r}")
        kind = m.lastgroup
        if kind == "comment":
            break
        if kind != "ws":
            tokens.append(Token(kind, m.group(), pos + 1))
        pos = m.end()
    return tokens


# ---------------------------------------------------------------------------
# Parser


class _LineParser:
    def __init__(self, tokens: list[Token], lineno: int, width: int):
        self.toks = tokens
        self.i = 0
        self.lineno = lineno
        self.width = width
        self.refs: list[tuple[str, str, int]] = []  # (kind, name, col)

    def peek(self, offset: int = 0) -> Token | None:
        j = self.i + offset
        return self.toks[j] if j < len(self.toks) else None

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind in ("op", "directive") and tok.text == text

    def col(self) -> int:
        tok = self.peek()
        return tok.col if tok else self.width + 1

    def fail(self, message: str):
        tok = self.peek()
        found = f"{tok.text!r}" if tok else "end of line"
        raise _SyntaxError(self.col(), f"{message}, found {found}")

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(f"expected {text!r}")
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def ident(self, what: str = "identifier") -> str:
        tok = self.peek()
        if tok is None or tok.kind != "ident":
            self.fail(f"expected {what}")
        self.i += 1
        return tok.text

    def state(self) -> str:
        tok = self.peek()
        if tok is None or tok.kind not in ("ident", "number") or (
            tok.kind == "number" and not tok.text.isdigit()
        ):
            self.fail("expected internal state")
        self.i += 1
        return tok.text

    def done(self):
        if self.peek() is not None:
            self.fail("expected end of line")

    def agent_ref(self) -> str:
        col = self.col()
        name = self.ident("agent name")
        self.refs.append(("agent", name, col))
        return name

    # -- patterns ----------------------------------------------------------

    def site_condition(self) -> SiteCondition:
        name = self.ident("site name")
        state = None
        bond: int | str | None = None
        seen_state = seen_bond = False
        while True:
            if self.at("~") and not seen_state:
                self.i += 1
                state = self.state()
                seen_state = True
            elif self.at("!") and not seen_bond:
                self.i += 1
                tok = self.peek()
                if tok is not None and tok.kind == "number" and tok.text.isdigit():
                    bond = int(tok.text)
                elif tok is not None and tok.kind == "ident" and tok.text == BOUND:
                    bond = BOUND
                else:
                    self.fail("expected bond label or '_'")
                self.i += 1
                seen_bond = True
            elif self.at("?") and not seen_bond:
                self.i += 1
                bond = ANY
                seen_bond = True
            else:
                break
        return SiteCondition(name, state, bond)

    def agent_pattern(self) -> AgentPattern:
        col = self.col()
        name = self.agent_ref()
        self.expect("(")
        sites = []
        if not self.at(")"):
            sites.append(self.site_condition())
            while self.accept(","):
                sites.append(self.site_condition())
        self.expect(")")
        names = [s.site for s in sites]
        for n in set(names):
            if names.count(n) > 1:
                raise _SyntaxError(col, f"site {n!r} appears twice in agent {name!r}")
        return AgentPattern(name, tuple(sites))

    def pattern(self) -> Pattern:
        agents = [self.agent_pattern()]
        while self.accept(","):
            agents.append(self.agent_pattern())
        return tuple(agents)

    # -- declarations ------------------------------------------------------

    def site_signature(self) -> SiteSignature:
        name = self.ident("site name")
        states = []
        while self.accept("~"):
            states.append(self.state())
        if len(set(states)) != len(states):
            raise _SyntaxError(self.col(), f"repeated internal state on site {name!r}")
        return SiteSignature(name, tuple(states))

    def signature(self) -> AgentSignature:
        col = self.col()
        name = self.ident("agent name")
        self.expect("(")
        sites = []
        if not self.at(")"):
            sites.append(self.site_signature())
            while self.accept(","):
                sites.append(self.site_signature())
        self.expect(")")
        self.done()
        names = [s.name for s in sites]
        for n in set(names):
            if names.count(n) > 1:
                raise _SyntaxError(col, f"site {n!r} declared twice in agent {name!r}")
        return AgentSignature(name, tuple(sites), line=self.lineno)

    def transform(self) -> SiteTransform:
        if self.accept("+"):
            return Add(self.site_signature())
        if self.accept("-"):
            return Delete(self.ident("site name"))
        site = self.ident("site name")
        if self.accept("~"):
            return DefaultOverride(site, self.state())
        if self.accept("\\"):
            self.expect("{")
            names = []
            while not self.at("}"):
                names.append(self.ident("site name"))
                self.accept(",")
            self.expect("}")
            if not names:
                return Delete(site)
            if len(set(names)) != len(names):
                raise _SyntaxError(self.col(), f"duplicate names in copies of site {site!r}")
            if len(names) == 1:
                return Rename(site, names[0])
            return Duplicate(site, tuple(names))
        self.fail("expected '~', '\\\\{...}' after site name")

    def variant(self) -> VariantDecl:
        child = self.ident("agent name")
        self.expect("=")
        parent = self.agent_ref()
        transforms = []
        if self.accept("["):
            while not self.at("]"):
                transforms.append(self.transform())
                self.accept(",")
            self.expect("]")
        self.done()
        sources = [t.source for t in transforms if t.source is not None]
        for s in set(sources):
            if sources.count(s) > 1:
                raise _SyntaxError(1, f"site {s!r} of {parent!r} is transformed more than once")
        return VariantDecl(child, parent, tuple(transforms), line=self.lineno)

    def rate(self) -> Rate:
        tok = self.peek()
        if tok is None or tok.kind not in ("number", "ident"):
            self.fail("expected rate (number or parameter name)")
        self.i += 1
        if tok.kind == "number":
            return float(tok.text)
        self.refs.append(("param", tok.text, tok.col))
        return tok.text

    def rule(self) -> list[Rule]:
        name = None
        tok = self.peek()
        if tok is not None and tok.kind == "label":
            name = tok.text[1:-1]
            if not name:
                self.fail("empty rule label")
            self.i += 1
        if name is None:
            name = f"r{self.lineno}"
        lhs_col = self.col()
        lhs = self.pattern()
        if self.accept("->"):
            reversible = False
        elif self.accept("<->"):
            reversible = True
        else:
            self.fail("expected '->' or '<->'")
        rhs = self.pattern()
        rate = unary = reverse = None
        if self.accept("@"):
            rate = self.rate()
            if self.accept("("):
                unary = self.rate()
                self.expect(")")
            if reversible and self.accept(","):
                reverse = self.rate()
        self.done()
        lhs, rhs = _check_rule_sides(lhs, rhs, lhs_col)
        if not reversible:
            return [Rule(name, lhs, rhs, rate, unary, line=self.lineno)]
        lhs2, rhs2 = _check_rule_sides(rhs, lhs, lhs_col)
        return [
            Rule(f"{name}.fwd", lhs, rhs, rate, unary, line=self.lineno),
            Rule(f"{name}.rev", lhs2, rhs2, reverse, None, line=self.lineno),
        ]

    def substitution(self) -> AgentSubst:
        agent = self.agent_ref()
        index = None
        if self.accept("@"):
            tok = self.peek()
            if tok is None or tok.kind != "number" or not tok.text.isdigit():
                self.fail("expected occurrence index")
            index = int(tok.text)
            self.i += 1
        self.expect("->")
        target = self.agent_ref()
        sites = []
        if self.accept("["):
            while not self.at("]"):
                src = self.ident("site name")
                self.expect("->")
                sites.append((src, self.ident("site name")))
                self.accept(",")
            self.expect("]")
        return AgentSubst(agent, target, index, tuple(sites))


def _bond_endpoints(pattern: Pattern, col: int) -> dict[int, list[tuple[int, str]]]:
    ends: dict[int, list[tuple[int, str]]] = {}
    for k, ap in enumerate(pattern):
        for sc in ap.sites:
            if isinstance(sc.bond, int):
                ends.setdefault(sc.bond, []).append((k, sc.site))
    for label, e in ends.items():
        if len(e) != 2:
            raise _SyntaxError(col, f"bond label !{label} must occur exactly twice, found {len(e)}")
    return ends


def renumber(pattern: Pattern) -> Pattern:
    """Relabel bonds 0..n-1 in order of first occurrence."""
    mapping: dict[int, int] = {}
    out = []
    for ap in pattern:
        sites = []
        for sc in ap.sites:
            if isinstance(sc.bond, int):
                sc = SiteCondition(sc.site, sc.state, mapping.setdefault(sc.bond, len(mapping)))
            sites.append(sc)
        out.append(AgentPattern(ap.agent, tuple(sites)))
    return tuple(out)


def _check_pattern(pattern: Pattern, col: int) -> Pattern:
    _bond_endpoints(pattern, col)
    return renumber(pattern)


def _check_rule_sides(lhs: Pattern, rhs: Pattern, col: int) -> tuple[Pattern, Pattern]:
    lhs, rhs = _check_pattern(lhs, col), _check_pattern(rhs, col)
    if len(lhs) != len(rhs):
        raise _SyntaxError(col, "rules may not create or delete agents: sides differ in agent count")
    for k, (a, b) in enumerate(zip(lhs, rhs)):
        if a.agent != b.agent:
            raise _SyntaxError(
                col, f"agent {k} is {a.agent!r} on the left but {b.agent!r} on the right"
            )
        if set(a.site_names) != set(b.site_names):
            raise _SyntaxError(col, f"agent {k} ({a.agent}) mentions different sites on each side")
        for sa in a.sites:
            sb = b.site(sa.site)
            if sa.state is not None and sb.state is None:
                raise _SyntaxError(col, f"state of {a.agent}.{sa.site} dropped on the right-hand side")
            if sa.bond in (BOUND, ANY) or sb.bond in (BOUND, ANY):
                if sa.bond != sb.bond:
                    raise _SyntaxError(
                        col, f"{a.agent}.{sa.site}: '!_' and '?' must be identical on both sides"
                    )
    return lhs, rhs


_DIRECTIVES = ("%param:", "%concrete:", "%init:", "%obs:", "%instantiate:")


def _parse_line(p: _LineParser, ast: dict) -> None:
    first = p.peek()
    if first.kind == "directive":
        p.i += 1
        kind = first.text
        if kind == "%param:":
            name = p.ident("parameter name")
            tok = p.peek()
            if tok is None or tok.kind != "number":
                p.fail("expected numeric value")
            p.i += 1
            p.done()
            ast["params"].append(Param(name, float(tok.text), line=p.lineno))
        elif kind == "%concrete:":
            names = [p.agent_ref()]
            while p.peek() is not None:
                p.accept(",")
                names.append(p.agent_ref())
            if ast["fringe"] is not None:
                raise _SyntaxError(1, "duplicate %concrete: directive")
            ast["fringe"] = tuple(names)
            ast["fringe_line"] = p.lineno
        elif kind == "%init:":
            tok = p.peek()
            if tok is not None and tok.kind == "number" and tok.text.isdigit():
                count: Count = int(tok.text)
            elif tok is not None and tok.kind == "ident":
                count = tok.text
                p.refs.append(("param", tok.text, tok.col))
            else:
                p.fail("expected copy count")
            p.i += 1
            col = p.col()
            pattern = _check_pattern(p.pattern(), col)
            p.done()
            for ap in pattern:
                for sc in ap.sites:
                    if sc.bond in (BOUND, ANY):
                        raise _SyntaxError(col, "initial mixtures must be fully specified ('!_'/'?' not allowed)")
            ast["inits"].append(InitDecl(count, pattern, line=p.lineno))
        elif kind == "%obs:":
            tok = p.peek()
            if tok is not None and tok.kind == "label":
                name = tok.text[1:-1]
                p.i += 1
            else:
                name = p.ident("observable name")
            col = p.col()
            pattern = _check_pattern(p.pattern(), col)
            p.done()
            ast["observables"].append(ObsDecl(name, pattern, line=p.lineno))
        elif kind == "%instantiate:":
            tok = p.peek()
            if tok is None or tok.kind != "label":
                p.fail("expected quoted rule name")
            p.i += 1
            p.refs.append(("rule", tok.text[1:-1], tok.col))
            subs = [p.substitution()]
            while p.accept(","):
                subs.append(p.substitution())
            p.done()
            ast["instantiations"].append(InstantiateDecl(tok.text[1:-1], tuple(subs), line=p.lineno))
        else:
            raise _SyntaxError(first.col, f"unknown directive {kind!r} (expected one of {', '.join(_DIRECTIVES)})")
        return
    arrows = any(t.kind == "op" and t.text in ("->", "<->") for t in p.toks)
    if arrows:
        ast["rules"].extend(p.rule())
    elif first.kind == "ident" and p.peek(1) is not None and p.peek(1).text == "=":
        ast["variants"].append(p.variant())
    elif first.kind == "ident":
        ast["signatures"].append(p.signature())
    else:
        p.fail("expected a signature, variant, rule or directive")


def parse_model(text: str, filename: str | None = None) -> ModelAST:
    """Parse a ``.gka`` document.

    Raises :class:`ModelError` with every diagnostic found; never raises
    anything else for string input.
    """
    diags: list[Diagnostic] = []
    ast: dict = {
        "signatures": [], "variants": [], "params": [], "fringe": None, "fringe_line": 0,
        "rules": [], "instantiations": [], "inits": [], "observables": [],
    }
    refs: list[tuple[str, str, int, int]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        try:
            tokens = tokenize_line(line)
            if not tokens:
                continue
            p = _LineParser(tokens, lineno, len(line))
            _parse_line(p, ast)
            refs.extend((k, n, lineno, c) for k, n, c in p.refs)
        except _SyntaxError as exc:
            diags.append(error(exc.message, lineno, exc.col))
    result = ModelAST(
        signatures=tuple(ast["signatures"]),
        variants=tuple(ast["variants"]),
        params=tuple(ast["params"]),
        fringe=ast["fringe"],
        rules=tuple(ast["rules"]),
        instantiations=tuple(ast["instantiations"]),
        inits=tuple(ast["inits"]),
        observables=tuple(ast["observables"]),
        fringe_line=ast["fringe_line"],
    )
    diags.extend(_resolve(result, refs))
    if diags:
        raise ModelError([d.located(filename) for d in sorted(diags, key=lambda d: (d.line, d.col))])
    return result


def _resolve(ast: ModelAST, refs) -> list[Diagnostic]:
    diags = []

    def dupes(items, what):
        seen = {}
        for name, line in items:
            if name in seen:
                diags.append(error(f"duplicate {what} {name!r} (first declared on line {seen[name]})", line, 1))
            else:
                seen[name] = line

    dupes([(s.name, s.line) for s in ast.signatures], "agent signature")
    dupes([((v.child, v.parent), v.line) for v in ast.variants], "variant declaration")
    dupes([(r.name, r.line) for r in ast.rules], "rule name")
    dupes([(p.name, p.line) for p in ast.params], "parameter")
    dupes([(o.name, o.line) for o in ast.observables], "observable")
    roots = {s.name for s in ast.signatures}
    for v in ast.variants:
        if v.child in roots:
            diags.append(error(f"agent {v.child!r} is declared both ab initio and as a variant", v.line, 1))
    agents = ast.agents
    rule_names = {r.name for r in ast.rules}
    for kind, name, line, col in refs:
        if kind == "agent" and name not in agents:
            diags.append(error(f"unresolved agent {name!r}", line, col))
        elif kind == "rule" and name not in rule_names and not (
            f"{name}.fwd" in rule_names or f"{name}.rev" in rule_names
        ):
            diags.append(error(f"unresolved rule {name!r}", line, col))
    return diags


# ---------------------------------------------------------------------------
# Printer


def _fmt_number(x: float) -> str:
    return repr(float(x))


def format_rate(rate: Rate) -> str:
    return rate if isinstance(rate, str) else _fmt_number(rate)


def format_site_signature(s: SiteSignature) -> str:
    states = list(s.states)
    if s.default_state is not None:
        states.remove(s.default_state)
        states.insert(0, s.default_state)
    return s.name + "".join(f"~{x}" for x in states)


def format_signature(sig: AgentSignature) -> str:
    return f"{sig.name}({','.join(format_site_signature(s) for s in sig.sites)})"


def format_site(sc: SiteCondition) -> str:
    text = sc.site
    if sc.state is not None:
        text += f"~{sc.state}"
    if sc.bond is None:
        return text
    if sc.bond == ANY:
        return text + "?"
    return text + f"!{sc.bond}"


def format_pattern(pattern: Sequence[AgentPattern]) -> str:
    return ", ".join(f"{ap.agent}({','.join(format_site(s) for s in ap.sites)})" for ap in renumber(tuple(pattern)))


def format_rule(rule: Rule, label: bool = True) -> str:
    text = f"{format_pattern(rule.lhs)} -> {format_pattern(rule.rhs)}"
    if rule.rate is not None or rule.unary_rate is not None:
        text += f" @ {format_rate(rule.rate if rule.rate is not None else 1.0)}"
        if rule.unary_rate is not None:
            text += f" ({format_rate(rule.unary_rate)})"
    if label:
        text = f"'{rule.name}' {text}"
    return text


def format_transform(t: SiteTransform) -> str:
    if isinstance(t, Delete):
        return f"-{t.site}"
    if isinstance(t, Rename):
        return f"{t.site}\\{{{t.new_name}}}"
    if isinstance(t, Duplicate):
        return f"{t.site}\\{{{' '.join(t.new_names)}}}"
    if isinstance(t, Add):
        return f"+{format_site_signature(t.site)}"
    return f"{t.site}~{t.state}"


def format_variant(v: VariantDecl) -> str:
    if not v.transforms:
        return f"{v.child} = {v.parent}"
    return f"{v.child} = {v.parent}[{' '.join(format_transform(t) for t in v.transforms)}]"


def format_substitution(s: AgentSubst) -> str:
    text = s.agent if s.index is None else f"{s.agent}@{s.index}"
    text += f"->{s.target}"
    if s.sites:
        text += "[" + ", ".join(f"{a}->{b}" for a, b in s.sites) + "]"
    return text


def unparse(ast: ModelAST) -> str:
    """Canonical text for ``ast``; ``parse_model(unparse(ast)) == ast``."""
    lines = [format_signature(s) for s in ast.signatures]
    lines += [format_variant(v) for v in ast.variants]
    lines += [f"%param: {p.name} {_fmt_number(p.value)}" for p in ast.params]
    if ast.fringe is not None:
        lines.append("%concrete: " + ", ".join(ast.fringe))
    lines += [format_rule(r) for r in ast.rules]
    lines += [
        f"%instantiate: '{d.rule}' " + ", ".join(format_substitution(s) for s in d.substitutions)
        for d in ast.instantiations
    ]
    lines += [f"%init: {i.count} {format_pattern(i.pattern)}" for i in ast.inits]
    lines += [f"%obs: '{o.name}' {format_pattern(o.pattern)}" for o in ast.observables]
    return "".join(line + "\n" for line in lines)
