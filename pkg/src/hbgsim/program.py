"""Flat numeric program derived from a BlockDiagram.

The kernels (compiled or pure) interpret these arrays; nothing here touches
the object graph inside the hot loop. Guard expressions compile to a small
stack bytecode evaluated once per step against the post-step pass values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as M
from .ibd import CONSTANT, GAIN, PROBE, SIGNAL, SUM, SWITCH, BlockDiagram

# schedule opcodes
OP_GAIN = 0
OP_SUM = 1
OP_CONST = 2
OP_SIGNAL = 3
OP_SWITCH = 4
OP_COPY = 5

# guard opcodes
G_CONST = 0
G_WIRE = 1
G_TIME = 2
G_SIG = 3
G_LT = 10
G_LE = 11
G_GT = 12
G_GE = 13
G_EQ = 14
G_AND = 20
G_OR = 21
G_NOT = 22
G_NE0 = 23
G_ADD = 30
G_SUB = 31
G_MUL = 32


@dataclass
class Program:
    n_blocks: int
    # schedule, one row per scheduled block
    op: np.ndarray
    arg_a: np.ndarray
    arg_b: np.ndarray
    arg_c: np.ndarray
    out: np.ndarray
    kval: np.ndarray
    sum_slots: np.ndarray
    sum_coefs: np.ndarray
    # integrators
    state_slots: np.ndarray
    deriv_slots: np.ndarray
    state_gains: np.ndarray
    # piecewise signals
    sig_offsets: np.ndarray
    sig_times: np.ndarray
    sig_vals: np.ndarray
    # probes
    probe_slots: np.ndarray
    # guards: per switched junction an (on, off) pair of bytecode ranges
    g_op: np.ndarray
    g_arg: np.ndarray
    g_farg: np.ndarray
    g_bounds: np.ndarray  # length 2*n_switched + 1
    g_stack: int
    # junction residual groups
    res_kind: np.ndarray
    res_offsets: np.ndarray
    res_slots: np.ndarray
    res_coefs: np.ndarray
    cache: dict


def build_program(ibd: BlockDiagram, g: M.BondGraph = None) -> Program:
    """Flatten the diagram (and, when a graph is supplied, its control specs)
    into kernel arrays. Cached on the diagram."""
    key = "program" if g is None else ("program", id(g))
    if key in ibd._cache:
        return ibd._cache[key]

    sig_names = list(ibd.signals)
    sig_index = {name: i for i, name in enumerate(sig_names)}

    n_sched = len(ibd.schedule)
    op = np.zeros(n_sched, dtype=np.int32)
    arg_a = np.zeros(n_sched, dtype=np.int32)
    arg_b = np.zeros(n_sched, dtype=np.int32)
    arg_c = np.zeros(n_sched, dtype=np.int32)
    out = np.zeros(n_sched, dtype=np.int32)
    kval = np.zeros(n_sched)
    sum_slots, sum_coefs = [], []

    for row, idx in enumerate(ibd.schedule):
        blk = ibd.blocks[idx]
        out[row] = idx
        if blk.kind == GAIN:
            op[row] = OP_GAIN
            arg_a[row] = blk.inputs[0]
            kval[row] = blk.gain
        elif blk.kind == SUM:
            op[row] = OP_SUM
            arg_b[row] = len(sum_slots)
            sum_slots.extend(blk.inputs)
            sum_coefs.extend(blk.coefs)
            arg_c[row] = len(sum_slots)
        elif blk.kind == CONSTANT:
            op[row] = OP_CONST
            kval[row] = blk.gain
        elif blk.kind == SIGNAL:
            op[row] = OP_SIGNAL
            arg_a[row] = sig_index[blk.signal]
        elif blk.kind == SWITCH:
            op[row] = OP_SWITCH
            arg_a[row] = blk.inputs[0]
            arg_b[row] = blk.bit
        elif blk.kind == PROBE:
            op[row] = OP_COPY
            arg_a[row] = blk.inputs[0]
        else:
            raise AssertionError(f"{blk.kind} block in schedule")

    sig_offsets = np.zeros(len(sig_names) + 1, dtype=np.int32)
    sig_times, sig_vals = [], []
    for i, name in enumerate(sig_names):
        for t, v in ibd.signals[name]:
            sig_times.append(t)
            sig_vals.append(v)
        sig_offsets[i + 1] = len(sig_times)

    g_code, g_bounds, g_stack = _compile_guards(ibd, g, sig_index)

    res_kind, res_offsets, res_slots, res_coefs = [], [0], [], []
    for _, kind, group in ibd.residual_groups:
        res_kind.append(kind)
        for w, sign in group:
            res_slots.append(w)
            res_coefs.append(sign)
        res_offsets.append(len(res_slots))

    prog = Program(
        n_blocks=len(ibd.blocks),
        op=op, arg_a=arg_a, arg_b=arg_b, arg_c=arg_c, out=out, kval=kval,
        sum_slots=np.array(sum_slots, dtype=np.int32),
        sum_coefs=np.array(sum_coefs, dtype=float),
        state_slots=np.array(ibd.state_blocks, dtype=np.int32),
        deriv_slots=np.array([ibd.blocks[i].inputs[0] for i in ibd.state_blocks],
                             dtype=np.int32),
        state_gains=np.array([ibd.blocks[i].gain for i in ibd.state_blocks], dtype=float),
        sig_offsets=sig_offsets,
        sig_times=np.array(sig_times, dtype=float),
        sig_vals=np.array(sig_vals, dtype=float),
        probe_slots=np.array(ibd.probe_blocks, dtype=np.int32),
        g_op=np.array([c[0] for c in g_code], dtype=np.int32),
        g_arg=np.array([c[1] for c in g_code], dtype=np.int32),
        g_farg=np.array([c[2] for c in g_code], dtype=float),
        g_bounds=np.array(g_bounds, dtype=np.int32),
        g_stack=g_stack,
        res_kind=np.array(res_kind, dtype=np.uint8),
        res_offsets=np.array(res_offsets, dtype=np.int32),
        res_slots=np.array(res_slots, dtype=np.int32),
        res_coefs=np.array(res_coefs, dtype=float),
        cache={},
    )
    ibd._cache[key] = prog
    return prog


def _compile_guards(ibd: BlockDiagram, g, sig_index):
    code = []
    bounds = [0]
    if g is None:
        return code, bounds, 4

    elements = {e.name: e for e in g.elements}
    bond_of_element = {}
    for b in g.bonds:
        for end in (b.tail, b.head):
            if end in elements:
                bond_of_element.setdefault(end, b.name)
    decisions = g.decision_map

    def emit_real(expr):
        if isinstance(expr, M.Num):
            code.append((G_CONST, 0, expr.value))
        elif isinstance(expr, M.TimeRef):
            code.append((G_TIME, 0, 0.0))
        elif isinstance(expr, M.SignalRef):
            code.append((G_SIG, sig_index[expr.name], 0.0))
        elif isinstance(expr, M.FlowRef):
            code.append((G_WIRE, ibd.bond_wires[(expr.bond, "f")], 0.0))
        elif isinstance(expr, M.EffortRef):
            if expr.node in elements:
                code.append((G_WIRE, ibd.bond_wires[(bond_of_element[expr.node], "e")], 0.0))
            else:
                code.append((G_WIRE, ibd.effort_wires[expr.node], 0.0))
        elif isinstance(expr, M.Arith):
            emit_real(expr.left)
            emit_real(expr.right)
            code.append(({"+": G_ADD, "-": G_SUB, "*": G_MUL}[expr.op], 0, 0.0))
        else:
            raise TypeError(f"bad real expression {expr!r}")

    cmp_ops = {"<": G_LT, "<=": G_LE, ">": G_GT, ">=": G_GE, "==": G_EQ}

    def emit(expr):
        if isinstance(expr, M.Cmp):
            emit_real(expr.left)
            emit_real(expr.right)
            code.append((cmp_ops[expr.op], 0, 0.0))
        elif isinstance(expr, M.SignalTruth):
            code.append((G_SIG, sig_index[expr.name], 0.0))
            code.append((G_NE0, 0, 0.0))
        elif isinstance(expr, M.DecisionRef):
            emit(decisions[expr.name])
        elif isinstance(expr, M.And):
            emit(expr.left)
            emit(expr.right)
            code.append((G_AND, 0, 0.0))
        elif isinstance(expr, M.Or):
            emit(expr.left)
            emit(expr.right)
            code.append((G_OR, 0, 0.0))
        elif isinstance(expr, M.Not):
            emit(expr.operand)
            code.append((G_NOT, 0, 0.0))
        else:
            raise TypeError(f"bad guard expression {expr!r}")

    for j in g.switched_junctions:
        emit(j.cspec.on_guard)
        bounds.append(len(code))
        emit(j.cspec.off_guard)
        bounds.append(len(code))

    stack = 2 + max((b2 - b1 for b1, b2 in zip(bounds, bounds[1:])), default=2)
    return code, bounds, stack
