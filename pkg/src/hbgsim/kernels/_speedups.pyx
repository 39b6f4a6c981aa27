# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel.

Operation-for-operation mirror of _pure.py: same evaluation order, same
accumulation order, same stage formulas, so the two backends produce
bit-identical trajectories (the build uses no fast-math or reassociation).
"""

import numpy as np

from libc.math cimport isfinite

cdef enum:
    OP_GAIN = 0
    OP_SUM = 1
    OP_CONST = 2
    OP_SIGNAL = 3
    OP_SWITCH = 4
    OP_COPY = 5

cdef enum:
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

cdef enum:
    EULER = 0


cdef double _signal_at(double[:] times, double[:] vals, int lo, int hi, double t) noexcept nogil:
    cdef double v = 0.0
    cdef int j
    for j in range(lo, hi):
        if t >= times[j]:
            v = vals[j]
        else:
            break
    return v


cdef void _pass_c(int[:] op, int[:] arg_a, int[:] arg_b, int[:] arg_c, int[:] out,
                  double[:] kval, int[:] sum_slots, double[:] sum_coefs,
                  int[:] sig_offsets, double[:] sig_times, double[:] sig_vals,
                  int[:] state_slots,
                  double[:] v, double[:] state, double t, unsigned char[:] mode) noexcept nogil:
    cdef int i, row, j, o
    cdef double acc
    for i in range(state_slots.shape[0]):
        v[state_slots[i]] = state[i]
    for row in range(op.shape[0]):
        o = op[row]
        if o == OP_GAIN:
            v[out[row]] = kval[row] * v[arg_a[row]]
        elif o == OP_SUM:
            acc = 0.0
            for j in range(arg_b[row], arg_c[row]):
                acc += sum_coefs[j] * v[sum_slots[j]]
            v[out[row]] = acc
        elif o == OP_CONST:
            v[out[row]] = kval[row]
        elif o == OP_SIGNAL:
            v[out[row]] = _signal_at(sig_times, sig_vals,
                                     sig_offsets[arg_a[row]], sig_offsets[arg_a[row] + 1], t)
        elif o == OP_SWITCH:
            v[out[row]] = v[arg_a[row]] if mode[arg_b[row]] else 0.0
        else:  # OP_COPY
            v[out[row]] = v[arg_a[row]]


cdef void _derivs_c(int[:] deriv_slots, double[:] state_gains,
                    double[:] v, double[:] out) noexcept nogil:
    cdef int i
    for i in range(deriv_slots.shape[0]):
        out[i] = state_gains[i] * v[deriv_slots[i]]


cdef bint _eval_guard_c(int[:] g_op, int[:] g_arg, double[:] g_farg,
                        int lo, int hi,
                        int[:] sig_offsets, double[:] sig_times, double[:] sig_vals,
                        double[:] v, double t, double[:] stack) noexcept nogil:
    cdef int i, o, sp = 0
    cdef double a, b, r
    for i in range(lo, hi):
        o = g_op[i]
        if o == G_CONST:
            stack[sp] = g_farg[i]
            sp += 1
        elif o == G_WIRE:
            stack[sp] = v[g_arg[i]]
            sp += 1
        elif o == G_TIME:
            stack[sp] = t
            sp += 1
        elif o == G_SIG:
            stack[sp] = _signal_at(sig_times, sig_vals,
                                   sig_offsets[g_arg[i]], sig_offsets[g_arg[i] + 1], t)
            sp += 1
        elif o == G_NE0:
            stack[sp - 1] = 1.0 if stack[sp - 1] != 0.0 else 0.0
        elif o == G_NOT:
            stack[sp - 1] = 0.0 if stack[sp - 1] != 0.0 else 1.0
        else:
            sp -= 1
            b = stack[sp]
            a = stack[sp - 1]
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
            stack[sp - 1] = r
    return stack[sp - 1] != 0.0


cdef void _residuals_c(unsigned char[:] res_kind, int[:] res_offsets,
                       int[:] res_slots, double[:] res_coefs,
                       double[:] v, double[:] maxres) noexcept nogil:
    cdef int gi, j
    cdef double acc
    for gi in range(res_kind.shape[0]):
        acc = 0.0
        for j in range(res_offsets[gi], res_offsets[gi + 1]):
            acc += res_coefs[j] * v[res_slots[j]]
        if acc < 0.0:
            acc = -acc
        if acc > maxres[res_kind[gi]]:
            maxres[res_kind[gi]] = acc


def eval_pass(prog, double[:] values, double[:] state, double t, unsigned char[:] mode):
    _pass_c(prog.op, prog.arg_a, prog.arg_b, prog.arg_c, prog.out, prog.kval,
            prog.sum_slots, prog.sum_coefs,
            prog.sig_offsets, prog.sig_times, prog.sig_vals,
            prog.state_slots, values, state, t, mode)


def derivatives(prog, double[:] values, double[:] out):
    _derivs_c(prog.deriv_slots, prog.state_gains, values, out)


def step(prog, state, double t, mode, double dt, int method):
    cdef double[:] y = np.asarray(state, dtype=float).copy()
    cdef unsigned char[:] m = np.ascontiguousarray(mode, dtype=np.uint8)
    cdef int nst = y.shape[0]
    out = np.zeros(nst)
    cdef double[:] ynew = out
    v_arr = np.zeros(prog.n_blocks)
    cdef double[:] v = v_arr
    scratch = np.zeros((5, nst))
    cdef double[:] d1 = scratch[0]
    cdef double[:] d2 = scratch[1]
    cdef double[:] d3 = scratch[2]
    cdef double[:] d4 = scratch[3]
    cdef double[:] ytmp = scratch[4]
    cdef int i
    cdef double hd, h6

    cdef int[:] op = prog.op
    cdef int[:] arg_a = prog.arg_a
    cdef int[:] arg_b = prog.arg_b
    cdef int[:] arg_c = prog.arg_c
    cdef int[:] oout = prog.out
    cdef double[:] kval = prog.kval
    cdef int[:] sum_slots = prog.sum_slots
    cdef double[:] sum_coefs = prog.sum_coefs
    cdef int[:] sig_offsets = prog.sig_offsets
    cdef double[:] sig_times = prog.sig_times
    cdef double[:] sig_vals = prog.sig_vals
    cdef int[:] state_slots = prog.state_slots
    cdef int[:] deriv_slots = prog.deriv_slots
    cdef double[:] state_gains = prog.state_gains

    if method == EULER:
        _pass_c(op, arg_a, arg_b, arg_c, oout, kval, sum_slots, sum_coefs,
                sig_offsets, sig_times, sig_vals, state_slots, v, y, t, m)
        _derivs_c(deriv_slots, state_gains, v, d1)
        for i in range(nst):
            ynew[i] = y[i] + dt * d1[i]
        return out
    hd = 0.5 * dt
    h6 = dt / 6.0
    _pass_c(op, arg_a, arg_b, arg_c, oout, kval, sum_slots, sum_coefs,
            sig_offsets, sig_times, sig_vals, state_slots, v, y, t, m)
    _derivs_c(deriv_slots, state_gains, v, d1)
    for i in range(nst):
        ytmp[i] = y[i] + hd * d1[i]
    _pass_c(op, arg_a, arg_b, arg_c, oout, kval, sum_slots, sum_coefs,
            sig_offsets, sig_times, sig_vals, state_slots, v, ytmp, t + hd, m)
    _derivs_c(deriv_slots, state_gains, v, d2)
    for i in range(nst):
        ytmp[i] = y[i] + hd * d2[i]
    _pass_c(op, arg_a, arg_b, arg_c, oout, kval, sum_slots, sum_coefs,
            sig_offsets, sig_times, sig_vals, state_slots, v, ytmp, t + hd, m)
    _derivs_c(deriv_slots, state_gains, v, d3)
    for i in range(nst):
        ytmp[i] = y[i] + dt * d3[i]
    _pass_c(op, arg_a, arg_b, arg_c, oout, kval, sum_slots, sum_coefs,
            sig_offsets, sig_times, sig_vals, state_slots, v, ytmp, t + dt, m)
    _derivs_c(deriv_slots, state_gains, v, d4)
    for i in range(nst):
        ynew[i] = y[i] + h6 * (d1[i] + 2.0 * d2[i] + 2.0 * d3[i] + d4[i])
    return out


def run(prog, state0, mode0, double dt, int n_steps, int method,
        int record_every, double blowup_limit, bint check_residuals):
    cdef int[:] op = prog.op
    cdef int[:] arg_a = prog.arg_a
    cdef int[:] arg_b = prog.arg_b
    cdef int[:] arg_c = prog.arg_c
    cdef int[:] oout = prog.out
    cdef double[:] kval = prog.kval
    cdef int[:] sum_slots = prog.sum_slots
    cdef double[:] sum_coefs = prog.sum_coefs
    cdef int[:] sig_offsets = prog.sig_offsets
    cdef double[:] sig_times = prog.sig_times
    cdef double[:] sig_vals = prog.sig_vals
    cdef int[:] state_slots = prog.state_slots
    cdef int[:] deriv_slots = prog.deriv_slots
    cdef double[:] state_gains = prog.state_gains
    cdef int[:] g_op = prog.g_op
    cdef int[:] g_arg = prog.g_arg
    cdef double[:] g_farg = prog.g_farg
    cdef int[:] g_bounds = prog.g_bounds
    cdef unsigned char[:] res_kind = prog.res_kind
    cdef int[:] res_offsets = prog.res_offsets
    cdef int[:] res_slots = prog.res_slots
    cdef double[:] res_coefs = prog.res_coefs
    cdef int[:] probe_slots = prog.probe_slots

    cdef int nst = state_slots.shape[0]
    cdef int n_sw = (g_bounds.shape[0] - 1) // 2
    cdef int n_probes = probe_slots.shape[0]

    v_arr = np.zeros(prog.n_blocks)
    cdef double[:] v = v_arr
    y_arr = np.asarray(state0, dtype=float).copy()
    cdef double[:] y = y_arr
    mode_arr = np.ascontiguousarray(
        np.array([1 if b else 0 for b in mode0], dtype=np.uint8))
    cdef unsigned char[:] mode = mode_arr
    scratch = np.zeros((5, nst))
    cdef double[:] ynew = scratch[0]
    cdef double[:] d1 = scratch[1]
    cdef double[:] d2 = scratch[2]
    cdef double[:] d3 = scratch[3]
    cdef double[:] d4 = scratch[4]
    ytmp_arr = np.zeros(nst)
    cdef double[:] ytmp = ytmp_arr
    stack_arr = np.zeros(prog.g_stack)
    cdef double[:] gstack = stack_arr

    cdef int n_rec = n_steps // record_every + 1
    times = np.zeros(n_rec)
    probes = np.zeros((n_rec, n_probes))
    modes = np.zeros((n_rec, n_sw), dtype=np.uint8)
    cdef double[:] times_v = times
    cdef double[:, :] probes_v = probes
    cdef unsigned char[:, :] modes_v = modes
    events = []
    maxres_arr = np.zeros(2)
    cdef double[:] maxres = maxres_arr

    cdef int k, i, si, row
    cdef int status = 0, blow_var = -1
    cdef double t0, t1, hd, h6, x, blow_time = 0.0
    cdef bint have_pass, flipped

    _pass_c(op, arg_a, arg_b, arg_c, oout, kval, sum_slots, sum_coefs,
            sig_offsets, sig_times, sig_vals, state_slots, v, y, 0.0, mode)
    if check_residuals:
        _residuals_c(res_kind, res_offsets, res_slots, res_coefs, v, maxres)
    times_v[0] = 0.0
    for i in range(n_probes):
        probes_v[0, i] = v[probe_slots[i]]
    for si in range(n_sw):
        modes_v[0, si] = mode[si]
    have_pass = True
    row = 1

    for k in range(n_steps):
        t0 = k * dt
        t1 = (k + 1) * dt
        if method == EULER:
            if not have_pass:
                _pass_c(op, arg_a, arg_b, arg_c, oout, kval, sum_slots, sum_coefs,
                        sig_offsets, sig_times, sig_vals, state_slots, v, y, t0, mode)
                if check_residuals:
                    _residuals_c(res_kind, res_offsets, res_slots, res_coefs, v, maxres)
            _derivs_c(deriv_slots, state_gains, v, d1)
            for i in range(nst):
                ynew[i] = y[i] + dt * d1[i]
        else:
            hd = 0.5 * dt
            h6 = dt / 6.0
            if not have_pass:
                _pass_c(op, arg_a, arg_b, arg_c, oout, kval, sum_slots, sum_coefs,
                        sig_offsets, sig_times, sig_vals, state_slots, v, y, t0, mode)
                if check_residuals:
                    _residuals_c(res_kind, res_offsets, res_slots, res_coefs, v, maxres)
            _derivs_c(deriv_slots, state_gains, v, d1)
            for i in range(nst):
                ytmp[i] = y[i] + hd * d1[i]
            _pass_c(op, arg_a, arg_b, arg_c, oout, kval, sum_slots, sum_coefs,
                    sig_offsets, sig_times, sig_vals, state_slots, v, ytmp, t0 + hd, mode)
            if check_residuals:
                _residuals_c(res_kind, res_offsets, res_slots, res_coefs, v, maxres)
            _derivs_c(deriv_slots, state_gains, v, d2)
            for i in range(nst):
                ytmp[i] = y[i] + hd * d2[i]
            _pass_c(op, arg_a, arg_b, arg_c, oout, kval, sum_slots, sum_coefs,
                    sig_offsets, sig_times, sig_vals, state_slots, v, ytmp, t0 + hd, mode)
            if check_residuals:
                _residuals_c(res_kind, res_offsets, res_slots, res_coefs, v, maxres)
            _derivs_c(deriv_slots, state_gains, v, d3)
            for i in range(nst):
                ytmp[i] = y[i] + dt * d3[i]
            _pass_c(op, arg_a, arg_b, arg_c, oout, kval, sum_slots, sum_coefs,
                    sig_offsets, sig_times, sig_vals, state_slots, v, ytmp, t0 + dt, mode)
            if check_residuals:
                _residuals_c(res_kind, res_offsets, res_slots, res_coefs, v, maxres)
            _derivs_c(deriv_slots, state_gains, v, d4)
            for i in range(nst):
                ynew[i] = y[i] + h6 * (d1[i] + 2.0 * d2[i] + 2.0 * d3[i] + d4[i])

        for i in range(nst):
            x = ynew[i]
            if not isfinite(x) or (x if x >= 0.0 else -x) > blowup_limit:
                status = 1
                blow_time = t1
                blow_var = i
                break
        if status:
            break
        for i in range(nst):
            x = y[i]
            y[i] = ynew[i]
            ynew[i] = x

        # post-step snapshot under the pre-flip mode
        _pass_c(op, arg_a, arg_b, arg_c, oout, kval, sum_slots, sum_coefs,
                sig_offsets, sig_times, sig_vals, state_slots, v, y, t1, mode)
        if check_residuals:
            _residuals_c(res_kind, res_offsets, res_slots, res_coefs, v, maxres)

        # synchronous mode update: every guard reads the same snapshot (v, t1)
        flipped = False
        for si in range(n_sw):
            if mode[si]:
                if _eval_guard_c(g_op, g_arg, g_farg,
                                 g_bounds[2 * si + 1], g_bounds[2 * si + 2],
                                 sig_offsets, sig_times, sig_vals, v, t1, gstack):
                    events.append((t1, si, 0))
                    mode[si] = 0
                    flipped = True
            else:
                if _eval_guard_c(g_op, g_arg, g_farg,
                                 g_bounds[2 * si], g_bounds[2 * si + 1],
                                 sig_offsets, sig_times, sig_vals, v, t1, gstack):
                    events.append((t1, si, 1))
                    mode[si] = 1
                    flipped = True
        have_pass = not flipped

        if (k + 1) % record_every == 0:
            times_v[row] = t1
            for i in range(n_probes):
                probes_v[row, i] = v[probe_slots[i]]
            for si in range(n_sw):
                modes_v[row, si] = mode[si]
            row += 1

    return {
        "times": times[:row],
        "probes": probes[:row],
        "modes": modes[:row],
        "events": events,
        "max_res_flow": maxres_arr[0],
        "max_res_effort": maxres_arr[1],
        "status": status,
        "blow_time": blow_time,
        "blow_var": blow_var,
    }
