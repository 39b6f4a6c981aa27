"""Parser and canonical serializer for the .hbg modeling language.

Grammar (one-token lookahead, line comments start with '#'):

    model    := "bondgraph" name "{" item* "}"
    item     := element | junction | bond | signal | decision | probe
    element  := "element" kind name "{" "value" "=" expr "}"
    junction := "junction" ("0"|"1") name
                ["switched" "{" "on_guard" "=" guard ";"
                               "off_guard" "=" guard ";"
                               "init" "=" ("on"|"off") "}"]
    bond     := "bond" name "from" node "to" node
    signal   := "signal" name "=" "piecewise" "(" (t ":" v),+ ")"
    decision := "decision" name "=" guard
    probe    := "probe" [name "="] var-ref

Numbers are decimal literals with optional exponent. Errors are collected
with precise source spans; parsing recovers at the next item keyword.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .model import (
    And,
    Arith,
    Bond,
    BondGraph,
    Cmp,
    ControlSpec,
    DecisionDef,
    DecisionRef,
    EffortRef,
    Element,
    FlowRef,
    HbgError,
    Junction,
    Not,
    Num,
    Or,
    Probe,
    SignalDef,
    SignalRef,
    SignalTruth,
    TimeRef,
    validate_graph,
)


@dataclass(frozen=True)
class SourceSpan:
    line: int  # 1-based
    column: int  # 1-based
    length: int


@dataclass(frozen=True)
class ParseError:
    span: SourceSpan
    kind: str  # syntax, unknown-keyword, duplicate-name, type-mismatch, unresolved-reference, invalid-value
    message: str


class HbgParseError(HbgError):
    """Raised by parse_model; carries the full list of ParseErrors."""

    def __init__(self, errors):
        self.errors = list(errors)
        first = self.errors[0]
        extra = f" (+{len(self.errors) - 1} more)" if len(self.errors) > 1 else ""
        super().__init__(f"{first.span.line}:{first.span.column}: {first.message}{extra}")


ITEM_KEYWORDS = ("element", "junction", "bond", "signal", "decision", "probe")
KEYWORDS = ITEM_KEYWORDS + (
    "bondgraph", "switched", "from", "to", "piecewise", "value",
    "on_guard", "off_guard", "init", "on", "off",
    "and", "or", "not", "time", "effort", "flow",
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|==|[{}()=;:,<>+\-*])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # "num", "name", "op", "eof"
    text: str
    line: int
    col: int

    @property
    def span(self) -> SourceSpan:
        return SourceSpan(self.line, self.col, max(len(self.text), 1))


def _tokenize(text: str):
    tokens = []
    errors = []
    line, col, pos = 1, 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            errors.append(ParseError(SourceSpan(line, col, 1), "syntax",
                                     f"unexpected character {text[pos]!r}"))
            pos += 1
            col += 1
            continue
        kind = m.lastgroup
        tok = m.group()
        if kind == "nl":
            line += 1
            col = 1
        elif kind in ("ws", "comment"):
            col += len(tok)
        else:
            tokens.append(Token(kind, tok, line, col))
            col += len(tok)
        pos = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens, errors


def _walk_real(expr):
    yield expr
    if isinstance(expr, Arith):
        yield from _walk_real(expr.left)
        yield from _walk_real(expr.right)


class _SyntaxError(Exception):
    def __init__(self, error: ParseError):
        self.error = error


class _Parser:
    def __init__(self, tokens, errors):
        self.tokens = tokens
        self.errors = errors
        self.i = 0
        # raw items collected in source order; resolved in a second pass
        self.elements = []
        self.junctions = []
        self.bonds = []
        self.signals = []
        self.decisions = []
        self.probes = []
        self.ref_sites = []  # (kind, name, token) to resolve after all names are known
        self.name_sites = {}  # declared name -> first token (duplicate detection)

    # ---- token plumbing ----

    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        t = self.tokens[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def fail(self, tok: Token, message: str, kind: str = "syntax"):
        raise _SyntaxError(ParseError(tok.span, kind, message))

    def expect_op(self, text: str) -> Token:
        t = self.peek()
        if t.kind == "op" and t.text == text:
            return self.next()
        self.fail(t, f"expected '{text}', found {t.text!r}" if t.text else f"expected '{text}', found end of input")

    def expect_name(self, what: str, allow_keyword: bool = False) -> Token:
        t = self.peek()
        if t.kind == "name" and (allow_keyword or t.text not in KEYWORDS):
            return self.next()
        if t.kind == "name":
            self.fail(t, f"keyword '{t.text}' cannot be used as {what}", kind="unknown-keyword")
        self.fail(t, f"expected {what}, found {t.text!r}" if t.text else f"expected {what} before end of input")

    def expect_keyword(self, word: str) -> Token:
        t = self.peek()
        if t.kind == "name" and t.text == word:
            return self.next()
        self.fail(t, f"expected '{word}', found {t.text!r}" if t.text else f"expected '{word}' before end of input")

    def expect_number(self) -> float:
        sign = 1.0
        t = self.peek()
        if t.kind == "op" and t.text == "-":
            self.next()
            sign = -1.0
            t = self.peek()
        if t.kind != "num":
            self.fail(t, f"expected a number, found {t.text!r}")
        self.next()
        return sign * float(t.text)

    def declare(self, tok: Token, what: str, namespace: str = "node"):
        key = (namespace, tok.text)
        if key in self.name_sites:
            self.errors.append(ParseError(tok.span, "duplicate-name",
                                          f"{what} '{tok.text}' already declared"))
        else:
            self.name_sites[key] = tok

    # ---- items ----

    def parse_model(self) -> tuple:
        self.expect_keyword("bondgraph")
        name = self.expect_name("a model name").text
        self.expect_op("{")
        while True:
            t = self.peek()
            if t.kind == "eof":
                self.fail(t, "unexpected end of input, expected '}'")
            if t.kind == "op" and t.text == "}":
                self.next()
                break
            try:
                self.parse_item()
            except _SyntaxError as exc:
                self.errors.append(exc.error)
                self.recover()
        t = self.peek()
        if t.kind != "eof":
            self.errors.append(ParseError(t.span, "syntax", f"trailing input after model: {t.text!r}"))
        return name

    def recover(self):
        """Skip to the next item keyword (at nesting depth 0) or closing brace."""
        depth = 0
        while True:
            t = self.peek()
            if t.kind == "eof":
                return
            if t.kind == "name" and t.text in ITEM_KEYWORDS and depth == 0:
                return
            if t.kind == "op":
                if t.text == "{":
                    depth += 1
                elif t.text == "}":
                    if depth == 0:
                        return
                    depth -= 1
            self.next()

    def parse_item(self):
        t = self.peek()
        if t.kind != "name" or t.text not in ITEM_KEYWORDS:
            self.fail(t, f"expected an item keyword {ITEM_KEYWORDS}, found {t.text!r}",
                      kind="unknown-keyword" if t.kind == "name" else "syntax")
        getattr(self, "parse_" + t.text)()

    def parse_element(self):
        self.next()
        kind_tok = self.expect_name("an element kind", allow_keyword=True)
        if kind_tok.text not in ("C", "R", "I", "Sf", "MSf", "Se"):
            self.fail(kind_tok, f"unknown element kind '{kind_tok.text}'", kind="unknown-keyword")
        name_tok = self.expect_name("an element name")
        self.declare(name_tok, "element")
        self.expect_op("{")
        self.expect_keyword("value")
        self.expect_op("=")
        value = self.parse_real_expr()
        self.expect_op("}")
        self.elements.append((Element(name_tok.text, kind_tok.text, value), name_tok))

    def parse_junction(self):
        self.next()
        t = self.peek()
        if t.kind != "num" or t.text not in ("0", "1"):
            self.fail(t, f"expected junction kind 0 or 1, found {t.text!r}")
        self.next()
        kind = int(t.text)
        name_tok = self.expect_name("a junction name")
        self.declare(name_tok, "junction")
        cspec = None
        if self.peek().kind == "name" and self.peek().text == "switched":
            self.next()
            self.expect_op("{")
            self.expect_keyword("on_guard")
            self.expect_op("=")
            on_guard = self.parse_guard()
            self.expect_op(";")
            self.expect_keyword("off_guard")
            self.expect_op("=")
            off_guard = self.parse_guard()
            self.expect_op(";")
            self.expect_keyword("init")
            self.expect_op("=")
            st = self.peek()
            if st.kind != "name" or st.text not in ("on", "off"):
                self.fail(st, f"expected 'on' or 'off', found {st.text!r}")
            self.next()
            self.expect_op("}")
            cspec = ControlSpec(on_guard, off_guard, st.text == "on")
        self.junctions.append((Junction(name_tok.text, kind, cspec is not None, cspec), name_tok))

    def parse_bond(self):
        self.next()
        name_tok = self.expect_name("a bond name")
        self.declare(name_tok, "bond", namespace="bond")
        self.expect_keyword("from")
        tail = self.expect_name("a node name")
        self.expect_keyword("to")
        head = self.expect_name("a node name")
        self.ref_sites.append(("node", tail.text, tail))
        self.ref_sites.append(("node", head.text, head))
        self.bonds.append((Bond(name_tok.text, tail.text, head.text), name_tok))

    def parse_signal(self):
        self.next()
        name_tok = self.expect_name("a signal name")
        self.declare(name_tok, "signal", namespace="signal")
        self.expect_op("=")
        self.expect_keyword("piecewise")
        self.expect_op("(")
        points = []
        while True:
            t_tok = self.peek()
            t = self.expect_number()
            self.expect_op(":")
            v = self.expect_number()
            if points and t <= points[-1][0]:
                self.errors.append(ParseError(t_tok.span, "invalid-value",
                                              f"breakpoint times of '{name_tok.text}' must increase strictly"))
            points.append((t, v))
            nxt = self.peek()
            if nxt.kind == "op" and nxt.text == ",":
                self.next()
                continue
            break
        self.expect_op(")")
        self.signals.append((SignalDef(name_tok.text, tuple(points)), name_tok))

    def parse_decision(self):
        self.next()
        name_tok = self.expect_name("a decision name")
        self.declare(name_tok, "decision", namespace="decision")
        self.expect_op("=")
        expr = self.parse_guard()
        self.decisions.append((DecisionDef(name_tok.text, expr), name_tok))

    def parse_probe(self):
        self.next()
        first = self.peek()
        name = None
        if first.kind == "name" and first.text not in KEYWORDS:
            # alias form: probe h1 = effort(C1)
            self.next()
            self.expect_op("=")
            name = first.text
            self.declare(first, "probe", namespace="probe")
        target_tok = self.peek()
        target = self.parse_real_atom()
        if not isinstance(target, (EffortRef, FlowRef, SignalRef)):
            self.fail(target_tok, "probe must reference effort(...), flow(...) or signal(...)",
                      kind="type-mismatch")
        if name is None:
            name = _format_real(target)
        self.probes.append((Probe(name, target), target_tok))

    # ---- expressions ----
    # guard   := or_expr
    # or_expr := and_expr ("or" and_expr)*
    # and_expr:= unary ("and" unary)*
    # unary   := "not" unary | bool_atom
    # bool_atom := real_expr [cmpop real_expr]   (bare real must be a signal
    #              reference or decision name, meaning "nonzero"/its value)

    def parse_guard(self):
        start = self.peek()
        expr = self._parse_or()
        self._check_guard_types(expr, start)
        return expr

    def _check_guard_types(self, expr, tok):
        """Boolean atoms may not leak into real positions: the backtracking
        around parenthesised groups can otherwise let a decision name slip
        inside a comparison."""
        if isinstance(expr, (And, Or)):
            self._check_guard_types(expr.left, tok)
            self._check_guard_types(expr.right, tok)
        elif isinstance(expr, Not):
            self._check_guard_types(expr.operand, tok)
        elif isinstance(expr, Cmp):
            for side in (expr.left, expr.right):
                if any(isinstance(n, DecisionRef) for n in _walk_real(side)):
                    self.errors.append(ParseError(
                        tok.span, "type-mismatch",
                        "decision names are boolean and cannot be compared"))

    def _parse_or(self):
        expr = self.parse_and()
        while self.peek().kind == "name" and self.peek().text == "or":
            self.next()
            expr = Or(expr, self.parse_and())
        return expr

    def parse_and(self):
        expr = self.parse_unary()
        while self.peek().kind == "name" and self.peek().text == "and":
            self.next()
            expr = And(expr, self.parse_unary())
        return expr

    def parse_unary(self):
        t = self.peek()
        if t.kind == "name" and t.text == "not":
            self.next()
            return Not(self.parse_unary())
        return self.parse_bool_atom()

    def parse_bool_atom(self):
        # A parenthesised group may enclose either a boolean or a real
        # subexpression; try boolean first and fall back.
        t = self.peek()
        if t.kind == "op" and t.text == "(":
            mark = self.i
            self.next()
            try:
                inner = self._parse_or()
                self.expect_op(")")
            except _SyntaxError:
                self.i = mark
            else:
                nxt = self.peek()
                if nxt.kind == "op" and nxt.text in ("<", "<=", ">", ">=", "==", "+", "-", "*"):
                    self.i = mark  # it was a real group after all
                else:
                    return inner
        start = self.peek()
        left = self.parse_real_expr()
        nxt = self.peek()
        if nxt.kind == "op" and nxt.text in ("<", "<=", ">", ">=", "=="):
            self.next()
            right = self.parse_real_expr()
            return Cmp(nxt.text, left, right)
        if isinstance(left, SignalRef):
            return SignalTruth(left.name)
        if isinstance(left, DecisionRef):
            return left
        self.fail(start, "expected a comparison, signal or decision name in boolean position",
                  kind="type-mismatch")

    def parse_real_expr(self):
        expr = self.parse_term()
        while self.peek().kind == "op" and self.peek().text in ("+", "-"):
            op = self.next().text
            expr = Arith(op, expr, self.parse_term())
        return expr

    def parse_term(self):
        expr = self.parse_factor()
        while self.peek().kind == "op" and self.peek().text == "*":
            self.next()
            expr = Arith("*", expr, self.parse_factor())
        return expr

    def parse_factor(self):
        t = self.peek()
        if t.kind == "op" and t.text == "-":
            self.next()
            inner = self.parse_factor()
            if isinstance(inner, Num):
                return Num(-inner.value)
            return Arith("*", Num(-1.0), inner)
        if t.kind == "op" and t.text == "(":
            self.next()
            expr = self.parse_real_expr()
            self.expect_op(")")
            return expr
        return self.parse_real_atom()

    def parse_real_atom(self):
        t = self.peek()
        if t.kind == "num":
            self.next()
            return Num(float(t.text))
        if t.kind == "name":
            if t.text == "time":
                self.next()
                return TimeRef()
            if t.text in ("effort", "flow", "signal"):
                self.next()
                self.expect_op("(")
                ref = self.expect_name(f"a name inside {t.text}(...)")
                self.expect_op(")")
                if t.text == "effort":
                    self.ref_sites.append(("node", ref.text, ref))
                    return EffortRef(ref.text)
                if t.text == "flow":
                    self.ref_sites.append(("bond", ref.text, ref))
                    return FlowRef(ref.text)
                self.ref_sites.append(("signal", ref.text, ref))
                return SignalRef(ref.text)
            if t.text not in KEYWORDS:
                # bare identifier: decision reference (boolean contexts only)
                self.next()
                self.ref_sites.append(("decision", t.text, t))
                return DecisionRef(t.text)
        self.fail(t, f"expected an expression, found {t.text!r}" if t.text else "expected an expression before end of input")

    # ---- reference resolution ----

    def resolve(self):
        nodes = {tok.text for (ns, _), tok in self.name_sites.items() if ns == "node"}
        bonds = {tok.text for (ns, _), tok in self.name_sites.items() if ns == "bond"}
        signals = {tok.text for (ns, _), tok in self.name_sites.items() if ns == "signal"}
        decisions = {tok.text for (ns, _), tok in self.name_sites.items() if ns == "decision"}
        universe = {"node": nodes, "bond": bonds, "signal": signals, "decision": decisions}
        for kind, name, tok in self.ref_sites:
            if name not in universe[kind]:
                self.errors.append(ParseError(tok.span, "unresolved-reference",
                                              f"unknown {kind} '{name}'"))


def parse_model(text: str) -> BondGraph:
    """Parse model source into a validated BondGraph.

    Raises HbgParseError carrying every error found (parsing recovers past the
    first error); never crashes on malformed input. On success, the returned
    graph passes validate_graph with no diagnostics and switched junctions
    keep their source declaration order.
    """
    tokens, errors = _tokenize(text)
    p = _Parser(tokens, errors)
    try:
        name = p.parse_model()
    except _SyntaxError as exc:
        p.errors.append(exc.error)
        raise HbgParseError(p.errors)
    p.resolve()
    if p.errors:
        raise HbgParseError(p.errors)
    g = BondGraph(
        name=name,
        elements=tuple(e for e, _ in p.elements),
        junctions=tuple(j for j, _ in p.junctions),
        bonds=tuple(b for b, _ in p.bonds),
        signals=tuple(s for s, _ in p.signals),
        decisions=tuple(d for d, _ in p.decisions),
        probes=tuple(pr for pr, _ in p.probes),
    )
    # spans for semantic diagnostics that only full validation can see
    site = {}
    for lst, ns in ((p.elements, "node"), (p.junctions, "node"), (p.bonds, "bond"),
                    (p.signals, "signal"), (p.decisions, "decision"), (p.probes, "probe")):
        for item, tok in lst:
            site.setdefault((ns, item.name), tok)
    sem = []
    for d in validate_graph(g):
        tok = (site.get(("node", d.subject)) or site.get(("bond", d.subject))
               or site.get(("signal", d.subject)) or site.get(("decision", d.subject))
               or site.get(("probe", d.subject)))
        span = tok.span if tok else SourceSpan(1, 1, 1)
        kind = {"DuplicateName": "duplicate-name", "UnresolvedReference": "unresolved-reference",
                "TypeMismatch": "type-mismatch"}.get(d.kind, "invalid-value")
        sem.append(ParseError(span, kind, d.message))
    if sem:
        raise HbgParseError(sem)
    return g


def parse_file(path) -> BondGraph:
    with open(path, "r", encoding="utf-8") as f:
        return parse_model(f.read())


# --------------------------------------------------------------------------
# Canonical serialization: one item per line, two-space indentation, guards
# fully parenthesised. parse_model(serialize_model(g)) == g structurally.
# --------------------------------------------------------------------------


def _format_num(v: float) -> str:
    return repr(float(v))


def _format_real(expr) -> str:
    if isinstance(expr, Num):
        return _format_num(expr.value)
    if isinstance(expr, TimeRef):
        return "time"
    if isinstance(expr, EffortRef):
        return f"effort({expr.node})"
    if isinstance(expr, FlowRef):
        return f"flow({expr.bond})"
    if isinstance(expr, SignalRef):
        return f"signal({expr.name})"
    if isinstance(expr, Arith):
        return f"({_format_real(expr.left)} {expr.op} {_format_real(expr.right)})"
    raise TypeError(f"cannot serialize {expr!r}")


def _format_guard(expr) -> str:
    if isinstance(expr, Cmp):
        return f"({_format_real(expr.left)} {expr.op} {_format_real(expr.right)})"
    if isinstance(expr, SignalTruth):
        return f"signal({expr.name})"
    if isinstance(expr, DecisionRef):
        return expr.name
    if isinstance(expr, And):
        return f"({_format_guard(expr.left)} and {_format_guard(expr.right)})"
    if isinstance(expr, Or):
        return f"({_format_guard(expr.left)} or {_format_guard(expr.right)})"
    if isinstance(expr, Not):
        return f"(not {_format_guard(expr.operand)})"
    raise TypeError(f"cannot serialize {expr!r}")


def serialize_model(g: BondGraph) -> str:
    lines = [f"bondgraph {g.name} {{"]
    for s in g.signals:
        pts = ", ".join(f"{_format_num(t)}: {_format_num(v)}" for t, v in s.breakpoints)
        lines.append(f"  signal {s.name} = piecewise({pts})")
    for d in g.decisions:
        lines.append(f"  decision {d.name} = {_format_guard(d.expr)}")
    for e in g.elements:
        lines.append(f"  element {e.kind} {e.name} {{ value = {_format_real(e.value)} }}")
    for j in g.junctions:
        head = f"  junction {j.kind} {j.name}"
        if j.cspec is not None:
            c = j.cspec
            head += (f" switched {{ on_guard = {_format_guard(c.on_guard)};"
                     f" off_guard = {_format_guard(c.off_guard)};"
                     f" init = {'on' if c.initial_on else 'off'} }}")
        lines.append(head)
    for b in g.bonds:
        lines.append(f"  bond {b.name} from {b.tail} to {b.head}")
    for pr in g.probes:
        target = _format_real(pr.target)
        lines.append(f"  probe {target}" if pr.name == target else f"  probe {pr.name} = {target}")
    lines.append("}")
    return "\n".join(lines) + "\n"
