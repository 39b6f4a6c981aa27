"""Pure Python fallback kernel.

Mirrors _speedups.pyx operation for operation: both kernels must produce
bit-identical trajectories, so evaluation order, accumulation order and stage
formulas are kept textually parallel with the Cython source. The schedule is
compiled to closures once per program to keep the interpreter overhead down.
"""

from __future__ import annotations

import math

import numpy as np

from ..program import (
    G_ADD, G_AND, G_CONST, G_EQ, G_GE, G_GT, G_LE, G_LT, G_NE0, G_NOT,
    G_OR, G_SIG, G_SUB, G_TIME, G_WIRE,
    OP_CONST, OP_COPY, OP_GAIN, OP_SIGNAL, OP_SUM, OP_SWITCH,
    Program,
)

EULER = 0
RK4 = 1


def _signal_closure(times, vals):
    def value(t):
        v = 0.0
        for j in range(len(times)):
            if t >= times[j]:
                v = vals[j]
            else:
                break
        return v

    return value


def _compiled(prog: Program):
    if "pure_ops" in prog.cache:
        return prog.cache["pure_ops"]

    signals = []
    offs = prog.sig_offsets.tolist()
    s_times = prog.sig_times.tolist()
    s_vals = prog.sig_vals.tolist()
    for i in range(len(offs) - 1):
        signals.append(_signal_closure(s_times[offs[i]:offs[i + 1]],
                                       s_vals[offs[i]:offs[i + 1]]))

    ops = []
    sum_slots = prog.sum_slots.tolist()
    sum_coefs = prog.sum_coefs.tolist()
    for row in range(len(prog.op)):
        o = int(prog.op[row])
        out = int(prog.out[row])
        a = int(prog.arg_a[row])
        k = float(prog.kval[row])
        if o == OP_GAIN:
            def f(v, t, mode, a=a, out=out, k=k):
                v[out] = k * v[a]
        elif o == OP_SUM:
            b, c = int(prog.arg_b[row]), int(prog.arg_c[row])
            slots = sum_slots[b:c]
            coefs = sum_coefs[b:c]
            if len(slots) == 2:
                s0, s1 = slots
                c0, c1 = coefs
                def f(v, t, mode, s0=s0, s1=s1, c0=c0, c1=c1, out=out):
                    v[out] = 0.0 + c0 * v[s0] + c1 * v[s1]
            else:
                def f(v, t, mode, slots=slots, coefs=coefs, out=out):
                    acc = 0.0
                    for j in range(len(slots)):
                        acc += coefs[j] * v[slots[j]]
                    v[out] = acc
        elif o == OP_CONST:
            def f(v, t, mode, out=out, k=k):
                v[out] = k
        elif o == OP_SIGNAL:
            sig = signals[a]
            def f(v, t, mode, sig=sig, out=out):
                v[out] = sig(t)
        elif o == OP_SWITCH:
            bit = int(prog.arg_b[row])
            def f(v, t, mode, a=a, bit=bit, out=out):
                v[out] = v[a] if mode[bit] else 0.0
        elif o == OP_COPY:
            def f(v, t, mode, a=a, out=out):
                v[out] = v[a]
        else:
            raise AssertionError(f"opcode {o}")
        ops.append(f)

    compiled = {
        "ops": ops,
        "signals": signals,
        "state_slots": prog.state_slots.tolist(),
        "deriv_slots": prog.deriv_slots.tolist(),
        "state_gains": prog.state_gains.tolist(),
        "g_op": prog.g_op.tolist(),
        "g_arg": prog.g_arg.tolist(),
        "g_farg": prog.g_farg.tolist(),
        "g_bounds": prog.g_bounds.tolist(),
        "res_kind": prog.res_kind.tolist(),
        "res_offsets": prog.res_offsets.tolist(),
        "res_slots": prog.res_slots.tolist(),
        "res_coefs": prog.res_coefs.tolist(),
        "probe_slots": prog.probe_slots.tolist(),
    }
    prog.cache["pure_ops"] = compiled
    return compiled


def _pass(compiled, v, state, t, mode):
    slots = compiled["state_slots"]
    for i in range(len(slots)):
        v[slots[i]] = state[i]
    for f in compiled["ops"]:
        f(v, t, mode)


def _derivs(compiled, v, out):
    dslots = compiled["deriv_slots"]
    gains = compiled["state_gains"]
    for i in range(len(dslots)):
        out[i] = gains[i] * v[dslots[i]]


def eval_pass(prog: Program, values, state, t: float, mode) -> None:
    c = _compiled(prog)
    _pass(c, values, state, t, mode)


def derivatives(prog: Program, values, out) -> None:
    _derivs(_compiled(prog), values, out)


def _eval_guard(compiled, lo, hi, v, t) -> bool:
    ops = compiled["g_op"]
    args = compiled["g_arg"]
    fargs = compiled["g_farg"]
    signals = compiled["signals"]
    stack = []
    for i in range(lo, hi):
        o = ops[i]
        if o == G_CONST:
            stack.append(fargs[i])
        elif o == G_WIRE:
            stack.append(v[args[i]])
        elif o == G_TIME:
            stack.append(t)
        elif o == G_SIG:
            stack.append(signals[args[i]](t))
        elif o == G_NE0:
            stack[-1] = 1.0 if stack[-1] != 0.0 else 0.0
        elif o == G_NOT:
            stack[-1] = 0.0 if stack[-1] != 0.0 else 1.0
        else:
            b = stack.pop()
            a = stack[-1]
            if o == G_LT:
                r = 1.0 if a < b else 0.0
            elif o == G_LE:
                r = 1.0 if a <= b else 0.0
            elif o == G_GT:
                r = 1.0 if a > b else 0.0
            elif o == G_GE:
                r = 1.0 if a >= b else 0.0
            elif o == G_EQ:
                r = 1.0 if a == b else 0.0
            elif o == G_AND:
                r = 1.0 if (a != 0.0 and b != 0.0) else 0.0
            elif o == G_OR:
                r = 1.0 if (a != 0.0 or b != 0.0) else 0.0
            elif o == G_ADD:
                r = a + b
            elif o == G_SUB:
                r = a - b
            else:
                r = a * b
            stack[-1] = r
    return stack[-1] != 0.0


def _residuals(compiled, v, maxres):
    kinds = compiled["res_kind"]
    offs = compiled["res_offsets"]
    slots = compiled["res_slots"]
    coefs = compiled["res_coefs"]
    for gi in range(len(kinds)):
        acc = 0.0
        for j in range(offs[gi], offs[gi + 1]):
            acc += coefs[j] * v[slots[j]]
        acc = abs(acc)
        if acc > maxres[kinds[gi]]:
            maxres[kinds[gi]] = acc


def _step_into(compiled, v, y, t, mode, dt, method, ynew, d1, d2, d3, d4, ytmp):
    """One integration step under a fixed mode. The formulas here (stage
    times, mid-state updates, final combination) are the reference arithmetic
    that the compiled kernel reproduces verbatim."""
    n = len(y)
    if method == EULER:
        _pass(compiled, v, y, t, mode)
        _derivs(compiled, v, d1)
        for i in range(n):
            ynew[i] = y[i] + dt * d1[i]
        return
    hd = 0.5 * dt
    h6 = dt / 6.0
    _pass(compiled, v, y, t, mode)
    _derivs(compiled, v, d1)
    for i in range(n):
        ytmp[i] = y[i] + hd * d1[i]
    _pass(compiled, v, ytmp, t + hd, mode)
    _derivs(compiled, v, d2)
    for i in range(n):
        ytmp[i] = y[i] + hd * d2[i]
    _pass(compiled, v, ytmp, t + hd, mode)
    _derivs(compiled, v, d3)
    for i in range(n):
        ytmp[i] = y[i] + dt * d3[i]
    _pass(compiled, v, ytmp, t + dt, mode)
    _derivs(compiled, v, d4)
    for i in range(n):
        ynew[i] = y[i] + h6 * (d1[i] + 2.0 * d2[i] + 2.0 * d3[i] + d4[i])


def step(prog: Program, state, t: float, mode, dt: float, method: int):
    """Single integration step; returns the new state as a numpy array."""
    c = _compiled(prog)
    v = [0.0] * prog.n_blocks
    y = [float(x) for x in state]
    m = len(y)
    ynew = [0.0] * m
    d1, d2, d3, d4, ytmp = ([0.0] * m for _ in range(5))
    _step_into(c, v, y, t, mode, dt, method, ynew, d1, d2, d3, d4, ytmp)
    return np.array(ynew)


def run(prog: Program, state0, mode0, dt: float, n_steps: int, method: int,
        record_every: int, blowup_limit: float, check_residuals: bool) -> dict:
    """Fixed-step hybrid run. Guards are evaluated synchronously on the
    post-step pass under the pre-flip mode; all junction flips latch together
    at the step boundary. Returns raw arrays plus the event list."""
    c = _compiled(prog)
    n = prog.n_blocks
    nst = len(c["state_slots"])
    n_sw = (len(c["g_bounds"]) - 1) // 2
    bounds = c["g_bounds"]
    v = [0.0] * n
    y = [float(x) for x in state0]
    mode = [1 if b else 0 for b in mode0]
    ynew = [0.0] * nst
    d1, d2, d3, d4, ytmp = ([0.0] * nst for _ in range(5))

    n_rec = n_steps // record_every + 1
    times = np.zeros(n_rec)
    probes = np.zeros((n_rec, len(c["probe_slots"])))
    modes = np.zeros((n_rec, n_sw), dtype=np.uint8)
    events = []
    maxres = [0.0, 0.0]
    probe_slots = c["probe_slots"]

    def record(row, t):
        times[row] = t
        for pi in range(len(probe_slots)):
            probes[row, pi] = v[probe_slots[pi]]
        for si in range(n_sw):
            modes[row, si] = mode[si]

    _pass(c, v, y, 0.0, mode)
    if check_residuals:
        _residuals(c, v, maxres)
    record(0, 0.0)
    have_pass = True
    row = 1
    status, blow_time, blow_var = 0, 0.0, -1

    for k in range(n_steps):
        t0 = k * dt
        t1 = (k + 1) * dt
        if method == EULER:
            if not have_pass:
                _pass(c, v, y, t0, mode)
                if check_residuals:
                    _residuals(c, v, maxres)
            _derivs(c, v, d1)
            for i in range(nst):
                ynew[i] = y[i] + dt * d1[i]
        else:
            hd = 0.5 * dt
            h6 = dt / 6.0
            if not have_pass:
                _pass(c, v, y, t0, mode)
                if check_residuals:
                    _residuals(c, v, maxres)
            _derivs(c, v, d1)
            for i in range(nst):
                ytmp[i] = y[i] + hd * d1[i]
            _pass(c, v, ytmp, t0 + hd, mode)
            if check_residuals:
                _residuals(c, v, maxres)
            _derivs(c, v, d2)
            for i in range(nst):
                ytmp[i] = y[i] + hd * d2[i]
            _pass(c, v, ytmp, t0 + hd, mode)
            if check_residuals:
                _residuals(c, v, maxres)
            _derivs(c, v, d3)
            for i in range(nst):
                ytmp[i] = y[i] + dt * d3[i]
            _pass(c, v, ytmp, t0 + dt, mode)
            if check_residuals:
                _residuals(c, v, maxres)
            _derivs(c, v, d4)
            for i in range(nst):
                ynew[i] = y[i] + h6 * (d1[i] + 2.0 * d2[i] + 2.0 * d3[i] + d4[i])

        for i in range(nst):
            x = ynew[i]
            if not math.isfinite(x) or (x if x >= 0.0 else -x) > blowup_limit:
                status, blow_time, blow_var = 1, t1, i
                break
        if status:
            break
        y, ynew = ynew, y

        # post-step snapshot under the pre-flip mode
        _pass(c, v, y, t1, mode)
        if check_residuals:
            _residuals(c, v, maxres)

        # synchronous mode update: every guard reads the same snapshot (v, t1)
        flipped = False
        for si in range(n_sw):
            if mode[si]:
                if _eval_guard(c, bounds[2 * si + 1], bounds[2 * si + 2], v, t1):
                    events.append((t1, si, 0))
                    mode[si] = 0
                    flipped = True
            else:
                if _eval_guard(c, bounds[2 * si], bounds[2 * si + 1], v, t1):
                    events.append((t1, si, 1))
                    mode[si] = 1
                    flipped = True
        have_pass = not flipped

        if (k + 1) % record_every == 0:
            record(row, t1)
            row += 1

    return {
        "times": times[:row],
        "probes": probes[:row],
        "modes": modes[:row],
        "events": events,
        "max_res_flow": maxres[0],
        "max_res_effort": maxres[1],
        "status": status,
        "blow_time": blow_time,
        "blow_var": blow_var,
    }
