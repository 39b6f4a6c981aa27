"""Hybrid bond graph data model: elements, junctions, switching automata and guards.

A graph couples a conventional bond graph with one two-state automaton per
switched junction. The joint on/off assignment over all switched junctions
(in declaration order) is the system mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Union

ELEMENT_KINDS = ("C", "R", "I", "Sf", "MSf", "Se")
STORAGE_KINDS = ("C", "I")
SOURCE_KINDS = ("Sf", "MSf", "Se")

Mode = tuple  # tuple[bool, ...], one entry per switched junction


class HbgError(Exception):
    """Base class for all hbgsim errors."""


class UnboundVariable(HbgError):
    """A guard or expression referenced a variable missing from its environment."""


# --------------------------------------------------------------------------
# Expression AST (shared by guards, decision functions and source modulation).
# Nodes are frozen and span-free so structural equality works across
# parse/serialize round trips.
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class TimeRef:
    pass


@dataclass(frozen=True)
class EffortRef:
    node: str  # element or 0-junction name


@dataclass(frozen=True)
class FlowRef:
    bond: str


@dataclass(frozen=True)
class SignalRef:
    name: str


@dataclass(frozen=True)
class Arith:
    op: str  # one of + - *
    left: "RealExpr"
    right: "RealExpr"


RealExpr = Union[Num, TimeRef, EffortRef, FlowRef, SignalRef, Arith]


@dataclass(frozen=True)
class Cmp:
    op: str  # one of < <= > >= ==
    left: RealExpr
    right: RealExpr


@dataclass(frozen=True)
class SignalTruth:
    """A piecewise signal used as a boolean: true iff its value is nonzero."""

    name: str


@dataclass(frozen=True)
class DecisionRef:
    name: str


@dataclass(frozen=True)
class And:
    left: "GuardExpr"
    right: "GuardExpr"


@dataclass(frozen=True)
class Or:
    left: "GuardExpr"
    right: "GuardExpr"


@dataclass(frozen=True)
class Not:
    operand: "GuardExpr"


GuardExpr = Union[Cmp, SignalTruth, DecisionRef, And, Or, Not]


# --------------------------------------------------------------------------
# Graph node types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Element:
    """One-port element. `value` is the constitutive constant (Num) except for
    Sf, which may read a signal, and MSf, whose value is a modulation
    expression over effort/flow/signal variables of the graph."""

    name: str
    kind: str
    value: RealExpr


@dataclass(frozen=True)
class ControlSpec:
    """Two-state automaton of a switched junction. The on-guard fires the
    off->on transition, the off-guard the on->off transition."""

    on_guard: GuardExpr
    off_guard: GuardExpr
    initial_on: bool


@dataclass(frozen=True)
class Junction:
    name: str
    kind: int  # 0: common effort, 1: common flow
    switched: bool = False
    cspec: Optional[ControlSpec] = None


@dataclass(frozen=True)
class Bond:
    """Directed power bond. `from A to B` fixes the positive reference:
    effort*flow > 0 means power flows tail -> head."""

    name: str
    tail: str
    head: str


@dataclass(frozen=True)
class SignalDef:
    """Piecewise-constant function of time. Value is 0 before the first
    breakpoint, then the value of the latest breakpoint with t_start <= t."""

    name: str
    breakpoints: tuple  # tuple[tuple[float, float], ...], (t_start, value)


@dataclass(frozen=True)
class DecisionDef:
    """Named boolean guard expression, shareable by several control specs."""

    name: str
    expr: GuardExpr


@dataclass(frozen=True)
class Probe:
    name: str
    target: RealExpr  # EffortRef, FlowRef or SignalRef


@dataclass(frozen=True)
class BondGraph:
    name: str
    elements: tuple = ()
    junctions: tuple = ()
    bonds: tuple = ()
    signals: tuple = ()
    decisions: tuple = ()
    probes: tuple = ()

    def element(self, name: str) -> Element:
        for e in self.elements:
            if e.name == name:
                return e
        raise KeyError(name)

    def junction(self, name: str) -> Junction:
        for j in self.junctions:
            if j.name == name:
                return j
        raise KeyError(name)

    def bond(self, name: str) -> Bond:
        for b in self.bonds:
            if b.name == name:
                return b
        raise KeyError(name)

    @property
    def switched_junctions(self) -> tuple:
        return tuple(j for j in self.junctions if j.switched)

    @property
    def decision_map(self) -> dict:
        return {d.name: d.expr for d in self.decisions}

    def bonds_of(self, node: str) -> list:
        return [b for b in self.bonds if node in (b.tail, b.head)]


@dataclass(frozen=True)
class Diagnostic:
    kind: str  # e.g. UnresolvedReference, MissingControlSpec, ...
    subject: str  # offending node/bond/signal name
    message: str


# --------------------------------------------------------------------------
# Signal evaluation
# --------------------------------------------------------------------------


def signal_value(sig: SignalDef, t: float) -> float:
    v = 0.0
    for t_start, val in sig.breakpoints:
        if t >= t_start:
            v = val
        else:
            break
    return v


# --------------------------------------------------------------------------
# Guard evaluation
# --------------------------------------------------------------------------


@dataclass
class GuardEnv:
    """Variable valuation for guard/expression evaluation."""

    time: float = 0.0
    efforts: Mapping = None
    flows: Mapping = None
    signals: Mapping = None

    def __post_init__(self):
        if self.efforts is None:
            self.efforts = {}
        if self.flows is None:
            self.flows = {}
        if self.signals is None:
            self.signals = {}


def _lookup(table: Mapping, key: str, what: str) -> float:
    try:
        return table[key]
    except KeyError:
        raise UnboundVariable(f"{what} '{key}' is not bound in the environment") from None


def eval_real(expr: RealExpr, env: GuardEnv) -> float:
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, TimeRef):
        return env.time
    if isinstance(expr, EffortRef):
        return _lookup(env.efforts, expr.node, "effort")
    if isinstance(expr, FlowRef):
        return _lookup(env.flows, expr.bond, "flow")
    if isinstance(expr, SignalRef):
        return _lookup(env.signals, expr.name, "signal")
    if isinstance(expr, Arith):
        a = eval_real(expr.left, env)
        b = eval_real(expr.right, env)
        if expr.op == "+":
            return a + b
        if expr.op == "-":
            return a - b
        return a * b
    raise TypeError(f"not a real-valued expression: {expr!r}")


_CMP = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
}


def eval_guard(expr: GuardExpr, env: GuardEnv, decisions: Mapping = None) -> bool:
    """Evaluate a boolean guard against `env`.

    Threshold semantics follow the closed-lower-bound convention: a value
    exactly at the threshold satisfies `>=` and not `<`.
    """
    if isinstance(expr, Cmp):
        return _CMP[expr.op](eval_real(expr.left, env), eval_real(expr.right, env))
    if isinstance(expr, SignalTruth):
        return _lookup(env.signals, expr.name, "signal") != 0.0
    if isinstance(expr, DecisionRef):
        if not decisions or expr.name not in decisions:
            raise UnboundVariable(f"decision '{expr.name}' is not defined")
        return eval_guard(decisions[expr.name], env, decisions)
    if isinstance(expr, And):
        return eval_guard(expr.left, env, decisions) and eval_guard(expr.right, env, decisions)
    if isinstance(expr, Or):
        return eval_guard(expr.left, env, decisions) or eval_guard(expr.right, env, decisions)
    if isinstance(expr, Not):
        return not eval_guard(expr.operand, env, decisions)
    raise TypeError(f"not a boolean expression: {expr!r}")


def step_automaton(cspec: ControlSpec, on: bool, env: GuardEnv, decisions: Mapping = None) -> bool:
    """Advance a two-state automaton once. Only the guard leaving the current
    state is evaluated, so at most one transition happens per call."""
    if on:
        if eval_guard(cspec.off_guard, env, decisions):
            return False
        return True
    if eval_guard(cspec.on_guard, env, decisions):
        return True
    return False


def initial_mode(g: BondGraph) -> Mode:
    """Initial mode vector (one bool per switched junction, declaration order)."""
    return tuple(j.cspec.initial_on for j in g.switched_junctions)


def mode_string(mode: Mode) -> str:
    """Bit string, first-declared junction leftmost (most significant)."""
    return "".join("1" if b else "0" for b in mode)


# --------------------------------------------------------------------------
# Expression introspection helpers
# --------------------------------------------------------------------------


def iter_refs(expr):
    """Yield (kind, name) for every variable reference inside an expression."""
    if isinstance(expr, EffortRef):
        yield ("effort", expr.node)
    elif isinstance(expr, FlowRef):
        yield ("flow", expr.bond)
    elif isinstance(expr, (SignalRef, SignalTruth)):
        yield ("signal", expr.name)
    elif isinstance(expr, DecisionRef):
        yield ("decision", expr.name)
    elif isinstance(expr, (Arith, Cmp, And, Or)):
        yield from iter_refs(expr.left)
        yield from iter_refs(expr.right)
    elif isinstance(expr, Not):
        yield from iter_refs(expr.operand)


def _is_linear(expr: RealExpr) -> bool:
    """True when the expression can be realised with sum/gain blocks only:
    every multiplication has at least one constant factor."""
    if isinstance(expr, Arith):
        if expr.op == "*" and not (isinstance(expr.left, Num) or isinstance(expr.right, Num)):
            return False
        return _is_linear(expr.left) and _is_linear(expr.right)
    return True


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


def validate_graph(g: BondGraph) -> list:
    """Structural validation. Returns an empty list iff all invariants hold;
    each diagnostic names the offending node/bond and the violation kind."""
    diags = []

    def bad(kind, subject, message):
        diags.append(Diagnostic(kind, subject, message))

    node_names = {}
    for e in g.elements:
        if e.name in node_names:
            bad("DuplicateName", e.name, f"node name '{e.name}' declared twice")
        node_names[e.name] = e
    for j in g.junctions:
        if j.name in node_names:
            bad("DuplicateName", j.name, f"node name '{j.name}' declared twice")
        node_names[j.name] = j

    bond_names = {}
    for b in g.bonds:
        if b.name in bond_names:
            bad("DuplicateName", b.name, f"bond name '{b.name}' declared twice")
        bond_names[b.name] = b
    signal_names = set()
    for s in g.signals:
        if s.name in signal_names:
            bad("DuplicateName", s.name, f"signal '{s.name}' declared twice")
        signal_names.add(s.name)
        ts = [t for t, _ in s.breakpoints]
        if any(t1 >= t2 for t1, t2 in zip(ts, ts[1:])):
            bad("SignalBreakpointOrder", s.name, f"breakpoints of '{s.name}' must increase strictly")
    decision_names = set()
    for d in g.decisions:
        if d.name in decision_names:
            bad("DuplicateName", d.name, f"decision '{d.name}' declared twice")
        decision_names.add(d.name)

    elements = {e.name for e in g.elements}
    junctions = {j.name for j in g.junctions}

    def check_refs(expr, owner, allow_decisions=True):
        for kind, name in iter_refs(expr):
            if kind == "effort":
                if name not in node_names:
                    bad("UnresolvedReference", owner, f"effort('{name}') does not name a node")
                elif name in junctions and node_names[name].kind != 0:
                    bad("TypeMismatch", owner, f"effort('{name}') needs an element or 0-junction")
            elif kind == "flow" and name not in bond_names:
                bad("UnresolvedReference", owner, f"flow('{name}') does not name a bond")
            elif kind == "signal" and name not in signal_names:
                bad("UnresolvedReference", owner, f"signal('{name}') is not declared")
            elif kind == "decision":
                if not allow_decisions:
                    bad("TypeMismatch", owner, f"decision '{name}' not allowed here")
                elif name not in decision_names:
                    bad("UnresolvedReference", owner, f"decision '{name}' is not declared")

    # bonds: two distinct endpoints, element<->junction or junction<->junction
    attach_count = {e.name: 0 for e in g.elements}
    for b in g.bonds:
        for end in (b.tail, b.head):
            if end not in node_names:
                bad("UnresolvedReference", b.name, f"bond '{b.name}' references unknown node '{end}'")
        if b.tail == b.head:
            bad("BadBond", b.name, f"bond '{b.name}' connects '{b.tail}' to itself")
        if b.tail in elements and b.head in elements:
            bad("BadBond", b.name, f"bond '{b.name}' connects two elements")
        for end in (b.tail, b.head):
            if end in attach_count:
                attach_count[end] += 1

    for e in g.elements:
        if e.kind not in ELEMENT_KINDS:
            bad("UnknownKind", e.name, f"element '{e.name}' has unknown kind '{e.kind}'")
            continue
        n = attach_count.get(e.name, 0)
        if n != 1:
            bad("ElementBondCount", e.name, f"element '{e.name}' attaches via {n} bonds, expected 1")
        if e.kind in ("C", "R", "I"):
            if not isinstance(e.value, Num):
                bad("TypeMismatch", e.name, f"{e.kind} '{e.name}' needs a numeric constant value")
            elif e.value.value <= 0.0:
                bad("NonPositiveParameter", e.name, f"{e.kind} '{e.name}' must be > 0")
        elif e.kind == "Se":
            if not isinstance(e.value, Num):
                bad("TypeMismatch", e.name, f"Se '{e.name}' needs a numeric constant value")
        elif e.kind == "Sf":
            if not isinstance(e.value, (Num, SignalRef)):
                bad("TypeMismatch", e.name, f"Sf '{e.name}' needs a number or a signal reference")
            else:
                check_refs(e.value, e.name, allow_decisions=False)
        else:  # MSf
            check_refs(e.value, e.name, allow_decisions=False)
            if not _is_linear(e.value):
                bad("TypeMismatch", e.name, f"MSf '{e.name}' modulation must be linear in its variables")

    bonded = {end for b in g.bonds for end in (b.tail, b.head)}
    for j in g.junctions:
        if j.kind not in (0, 1):
            bad("UnknownKind", j.name, f"junction '{j.name}' must be kind 0 or 1")
        if j.name not in bonded:
            bad("IsolatedJunction", j.name, f"junction '{j.name}' has no bonds")
        if j.switched and j.cspec is None:
            bad("MissingControlSpec", j.name, f"switched junction '{j.name}' has no control spec")
        if not j.switched and j.cspec is not None:
            bad("UnexpectedControlSpec", j.name, f"junction '{j.name}' is not switched but has a control spec")
        if j.cspec is not None:
            check_refs(j.cspec.on_guard, j.name)
            check_refs(j.cspec.off_guard, j.name)

    # decision bodies resolve and are acyclic
    for d in g.decisions:
        check_refs(d.expr, d.name)
    _check_decision_cycles(g, bad)

    probe_names = set()
    for p in g.probes:
        if p.name in probe_names:
            bad("DuplicateName", p.name, f"probe '{p.name}' declared twice")
        probe_names.add(p.name)
        if not isinstance(p.target, (EffortRef, FlowRef, SignalRef)):
            bad("TypeMismatch", p.name, f"probe '{p.name}' must reference an effort, flow or signal")
        else:
            check_refs(p.target, p.name, allow_decisions=False)

    return diags


def _check_decision_cycles(g: BondGraph, bad):
    table = g.decision_map
    state = {}  # name -> 1 visiting, 2 done

    def visit(name, origin):
        if state.get(name) == 2:
            return
        if state.get(name) == 1:
            bad("RecursiveDecision", origin, f"decision '{origin}' refers to itself through '{name}'")
            return
        state[name] = 1
        for kind, ref in iter_refs(table[name]):
            if kind == "decision" and ref in table:
                visit(ref, origin)
        state[name] = 2

    for d in g.decisions:
        state.clear()
        visit(d.name, d.name)
