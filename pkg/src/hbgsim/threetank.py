"""Three-tank benchmark: model builder, piecewise-ODE oracle and closed forms.

Two pumps fill the outer tanks, each tank drains through the left/right drain
valves, and the tanks connect through raised pipes (heights 0.5 and 0.7).
Each pipe is realised with two autonomous switched 1-junctions whose guards
fire when the adjacent tank level reaches the pipe height: the junction, when
on, contributes (level - height) to the effort seen by the pipe resistance,
so the four pipe configurations emerge from the two junction states. The
tanks exchange exactly the pipe flow in every configuration; modulated flow
sources carry the one-sided spill when only one junction conducts.

The oracle integrates the same piecewise dynamics directly from the level
balance equations, with the identical fixed-step, switch-at-step-boundary
convention, and serves as the independent reference for the whole pipeline.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .engine import BLOWUP_LIMIT, NumericalBlowup, SimConfig, SimEvent, SimTrace
from .model import (
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
    Probe,
    SignalDef,
    SignalRef,
    SignalTruth,
)


class UnknownProbe(HbgError):
    pass


class NoEquilibrium(HbgError):
    pass


@dataclass(frozen=True)
class TankParams:
    """Benchmark constants; the defaults give the standard scenario (unit
    resistances and capacitances, pipes at 0.5 and 0.7, pumps opening at
    1 s and 3 s with flows 1 and 0.5)."""

    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    r1: float = 1.0
    r12: float = 1.0
    r23: float = 1.0
    r2: float = 1.0
    h12: float = 0.5
    h23: float = 0.7
    qp1: float = 1.0
    qp2: float = 0.5
    t10: float = 1.0
    t20: float = 3.0


class PipeConfig(enum.Enum):
    BOTH_BELOW = "i"
    LEFT_ABOVE = "ii"
    RIGHT_ABOVE = "iii"
    BOTH_ABOVE = "iv"


def classify(h_left: float, h_right: float, height: float) -> PipeConfig:
    """Exactly one configuration holds for any levels: 'above' is >= height,
    'below' is < height."""
    left = h_left >= height
    right = h_right >= height
    if left and right:
        return PipeConfig.BOTH_ABOVE
    if left:
        return PipeConfig.LEFT_ABOVE
    if right:
        return PipeConfig.RIGHT_ABOVE
    return PipeConfig.BOTH_BELOW


def pipe_flow(h_left: float, h_right: float, height: float, resistance: float) -> float:
    """Flow through a raised connecting pipe, positive left -> right.

    Below the pipe on both sides there is no flow; one side above drives a
    one-sided spill; both sides above give the plain linear pressure-flow
    relation.
    """
    cfg = classify(h_left, h_right, height)
    if cfg is PipeConfig.BOTH_BELOW:
        return 0.0
    if cfg is PipeConfig.LEFT_ABOVE:
        return (h_left - height) / resistance
    if cfg is PipeConfig.RIGHT_ABOVE:
        return -(h_right - height) / resistance
    return (h_left - h_right) / resistance


# --------------------------------------------------------------------------
# Model builder
# --------------------------------------------------------------------------


def _gate(signal: str) -> ControlSpec:
    return ControlSpec(SignalTruth(signal), Not(SignalTruth(signal)), initial_on=False)


def _pipe_guard(decision: str) -> ControlSpec:
    return ControlSpec(DecisionRef(decision), Not(DecisionRef(decision)), initial_on=False)


def _step_signal(name: str, t_on: float) -> SignalDef:
    if t_on <= 0.0:
        return SignalDef(name, ((0.0, 1.0),))
    return SignalDef(name, ((0.0, 0.0), (t_on, 1.0)))


def build_three_tank(p: TankParams = TankParams()) -> BondGraph:
    """The benchmark HBG: 3 tank capacitors on 0-junctions, gated pumps and
    drains, and two switched-pipe assemblies. 8 switched junctions in all
    (pumps, drains, and a left/right junction per pipe), so 2^8 modes."""

    def pipe(tag, left_tank, right_tank, left_c, right_c, height, resistance):
        """Switched-pipe assembly between two tank junctions.

        Junction chain left-tank -> J_left -> J_mid -> J_right -> right-tank
        with height offsets on the switched outer junctions and the
        resistance on the middle one; the resistance then always sees
        (h_left - H) gated by the left state minus (h_right - H) gated by the
        right state, which is the pipe flow law in all four configurations.
        The modulated sources top up whichever tank the chain cannot reach
        (its junction is off) with the remainder of the pipe flow.
        """
        jl, jm, jr = f"pipe{tag}_left", f"pipe{tag}_mid", f"pipe{tag}_right"
        elements = [
            Element(f"R{tag}", "R", Num(resistance)),
            Element(f"Se{tag}_L", "Se", Num(height)),
            Element(f"Se{tag}_R", "Se", Num(height)),
            Element(f"MSf{tag}_L", "MSf",
                    Arith("-", FlowRef(f"b{tag}_res"), FlowRef(f"b{tag}_lm"))),
            Element(f"MSf{tag}_R", "MSf",
                    Arith("-", FlowRef(f"b{tag}_res"), FlowRef(f"b{tag}_mr"))),
        ]
        junctions = [
            Junction(jl, 1, True, _pipe_guard(f"AboveLeft_R{tag}")),
            Junction(jm, 1),
            Junction(jr, 1, True, _pipe_guard(f"AboveRight_R{tag}")),
        ]
        bonds = [
            Bond(f"b{tag}_l", left_tank, jl),
            Bond(f"b{tag}_sl", jl, f"Se{tag}_L"),
            Bond(f"b{tag}_lm", jl, jm),
            Bond(f"b{tag}_res", jm, f"R{tag}"),
            Bond(f"b{tag}_mr", jm, jr),
            Bond(f"b{tag}_sr", f"Se{tag}_R", jr),
            Bond(f"b{tag}_rt", jr, right_tank),
            Bond(f"b{tag}_msl", left_tank, f"MSf{tag}_L"),
            Bond(f"b{tag}_msr", f"MSf{tag}_R", right_tank),
        ]
        decisions = [
            DecisionDef(f"AboveLeft_R{tag}", Cmp(">=", EffortRef(left_c), Num(height))),
            DecisionDef(f"AboveRight_R{tag}", Cmp(">=", EffortRef(right_c), Num(height))),
        ]
        return elements, junctions, bonds, decisions

    p12 = pipe("12", "t1", "t2", "C1", "C2", p.h12, p.r12)
    p23 = pipe("23", "t2", "t3", "C2", "C3", p.h23, p.r23)

    elements = [
        Element("C1", "C", Num(p.c1)),
        Element("C2", "C", Num(p.c2)),
        Element("C3", "C", Num(p.c3)),
        Element("Sf1", "Sf", SignalRef("Pump_u1")),
        Element("Sf2", "Sf", SignalRef("Pump_u2")),
        Element("R1", "R", Num(p.r1)),
        Element("R2", "R", Num(p.r2)),
    ] + p12[0] + p23[0]

    junctions = [
        Junction("t1", 0),
        Junction("t2", 0),
        Junction("t3", 0),
        Junction("pump1_jn", 1, True, _gate("Pump_Sw1")),
        Junction("pump2_jn", 1, True, _gate("Pump_Sw2")),
        Junction("drain1_jn", 1, True,
                 ControlSpec(SignalTruth("Drain_Sw"), Not(SignalTruth("Drain_Sw")), True)),
        Junction("drain2_jn", 1, True,
                 ControlSpec(SignalTruth("Drain_Sw"), Not(SignalTruth("Drain_Sw")), True)),
    ] + p12[1] + p23[1]

    bonds = [
        Bond("bc1", "t1", "C1"),
        Bond("bc2", "t2", "C2"),
        Bond("bc3", "t3", "C3"),
        Bond("bp1a", "Sf1", "pump1_jn"),
        Bond("bp1b", "pump1_jn", "t1"),
        Bond("bd1a", "t1", "drain1_jn"),
        Bond("bd1b", "drain1_jn", "R1"),
        Bond("bp2a", "Sf2", "pump2_jn"),
        Bond("bp2b", "pump2_jn", "t3"),
        Bond("bd2a", "t3", "drain2_jn"),
        Bond("bd2b", "drain2_jn", "R2"),
    ] + p12[2] + p23[2]

    signals = [
        SignalDef("Pump_u1", ((0.0, p.qp1),)),
        SignalDef("Pump_u2", ((0.0, p.qp2),)),
        _step_signal("Pump_Sw1", p.t10),
        _step_signal("Pump_Sw2", p.t20),
        SignalDef("Drain_Sw", ((0.0, 1.0),)),
    ]

    probes = [
        Probe("h1", EffortRef("C1")),
        Probe("h2", EffortRef("C2")),
        Probe("h3", EffortRef("C3")),
    ]

    return BondGraph(
        name="three_tank",
        elements=tuple(elements),
        junctions=tuple(junctions),
        bonds=tuple(bonds),
        signals=tuple(signals),
        decisions=tuple(p12[3] + p23[3]),
        probes=tuple(probes),
    )


SWITCH_ORDER = ("pump1_jn", "pump2_jn", "drain1_jn", "drain2_jn",
                "pipe12_left", "pipe12_right", "pipe23_left", "pipe23_right")
INITIAL_BITS = (False, False, True, True, False, False, False, False)


# --------------------------------------------------------------------------
# Oracle
# --------------------------------------------------------------------------


def oracle_rhs(h, t: float, p: TankParams) -> tuple:
    """Level balance with the configuration read off the instantaneous
    levels: pump inflow (0 before its opening time), drain outflow, and the
    connecting pipe flows."""
    h1, h2, h3 = h
    q12 = pipe_flow(h1, h2, p.h12, p.r12)
    q23 = pipe_flow(h2, h3, p.h23, p.r23)
    qp1 = p.qp1 if t >= p.t10 else 0.0
    qp2 = p.qp2 if t >= p.t20 else 0.0
    return (
        (qp1 - h1 / p.r1 - q12) / p.c1,
        (q12 - q23) / p.c2,
        (qp2 + q23 - h3 / p.r2) / p.c3,
    )


def _frozen_rhs(h, t, p, bits, inv):
    """Balance with the discrete state held fixed, mirroring the compiled
    block diagram term for term (gated height offsets, then the shared pipe
    flow applied to both tanks)."""
    p1, p2, d1, d2, l12, r12, l23, r23 = bits
    inv_c1, inv_c2, inv_c3, inv_r1, inv_r2, inv_r12, inv_r23 = inv
    h1, h2, h3 = h
    q12 = inv_r12 * ((h1 - p.h12 if l12 else 0.0) - (h2 - p.h12 if r12 else 0.0))
    q23 = inv_r23 * ((h2 - p.h23 if l23 else 0.0) - (h3 - p.h23 if r23 else 0.0))
    n1 = (p.qp1 if p1 else 0.0) - (inv_r1 * h1 if d1 else 0.0)
    n1 = n1 - q12
    n2 = q12 - q23
    n3 = (p.qp2 if p2 else 0.0) - (inv_r2 * h3 if d2 else 0.0)
    n3 = n3 + q23
    return [inv_c1 * n1, inv_c2 * n2, inv_c3 * n3]


def _update_bits(bits, h, t, p):
    new = (t >= p.t10, t >= p.t20, bits[2], bits[3],
           h[0] >= p.h12, h[1] >= p.h12, h[1] >= p.h23, h[2] >= p.h23)
    events = [(t, i, int(new[i])) for i in range(8) if new[i] != bits[i]]
    return new, events


def oracle_simulate(p: TankParams, cfg: SimConfig) -> SimTrace:
    """Integrate the level balance directly, with the engine's conventions:
    fixed step, discrete state frozen within a step, all switches latching
    together on the post-step levels. Probes h1, h2, h3; the mode vector uses
    the same junction order as the built model."""
    cfg.validate(3)
    inv = (1.0 / p.c1, 1.0 / p.c2, 1.0 / p.c3,
           1.0 / p.r1, 1.0 / p.r2, 1.0 / p.r12, 1.0 / p.r23)
    dt = cfg.dt
    n_steps = int(round(cfg.t_end / dt))
    y = [0.0, 0.0, 0.0] if cfg.initial_state is None else [float(x) for x in cfg.initial_state]
    bits = INITIAL_BITS
    n_rec = n_steps // cfg.record_every + 1
    times = np.zeros(n_rec)
    probes = np.zeros((n_rec, 3))
    modes = np.zeros((n_rec, 8), dtype=np.uint8)
    events = []

    probes[0] = y
    modes[0] = [int(b) for b in bits]
    row = 1
    method = cfg.integrator
    for k in range(n_steps):
        t0 = k * dt
        t1 = (k + 1) * dt
        if method == "euler":
            d1 = _frozen_rhs(y, t0, p, bits, inv)
            y = [y[i] + dt * d1[i] for i in range(3)]
        else:
            hd = 0.5 * dt
            h6 = dt / 6.0
            d1 = _frozen_rhs(y, t0, p, bits, inv)
            ytmp = [y[i] + hd * d1[i] for i in range(3)]
            d2 = _frozen_rhs(ytmp, t0 + hd, p, bits, inv)
            ytmp = [y[i] + hd * d2[i] for i in range(3)]
            d3 = _frozen_rhs(ytmp, t0 + hd, p, bits, inv)
            ytmp = [y[i] + dt * d3[i] for i in range(3)]
            d4 = _frozen_rhs(ytmp, t0 + dt, p, bits, inv)
            y = [y[i] + h6 * (d1[i] + 2.0 * d2[i] + 2.0 * d3[i] + d4[i]) for i in range(3)]
        for i, x in enumerate(y):
            if not math.isfinite(x) or abs(x) > BLOWUP_LIMIT:
                raise NumericalBlowup(t1, f"h{i + 1}")
        bits, new_events = _update_bits(bits, y, t1, p)
        events.extend(new_events)
        if (k + 1) % cfg.record_every == 0:
            times[row] = t1
            probes[row] = y
            modes[row] = [int(b) for b in bits]
            row += 1

    return SimTrace(
        times=times,
        probe_names=("h1", "h2", "h3"),
        probe_values=probes,
        switched_names=SWITCH_ORDER,
        modes=modes,
        events=[SimEvent(t, SWITCH_ORDER[j], bool(on)) for t, j, on in events],
    )


# --------------------------------------------------------------------------
# Closed forms and trace utilities
# --------------------------------------------------------------------------


def analytic_h1_mode_i(t: float, p: TankParams = TankParams()) -> float:
    """Tank 1 level while both pipe sides stay below the first pipe: first
    order step response 1 - exp(-(t - t10)). Assumes unit parameters."""
    if t < p.t10:
        raise ValueError(f"t={t} is before the pump opening time {p.t10}")
    return 1.0 - math.exp(-(t - p.t10))


def analytic_h2_mode_ii(tau: float) -> float:
    """Tank 2 level tau seconds after the first pipe starts conducting, while
    tank 2 stays below the pipe: tau/4 - 1/8 + exp(-2 tau)/8. Assumes unit
    parameters and entry levels (0.5, 0)."""
    if tau < 0.0:
        raise ValueError(f"tau={tau} is negative")
    return tau / 4.0 - 0.125 + math.exp(-2.0 * tau) / 8.0


def crossing_time(trace: SimTrace, probe: str, level: float):
    """First time the probe reaches the level, linearly interpolated between
    the bracketing samples; None when it never does."""
    try:
        values = trace.probe(probe)
    except KeyError:
        raise UnknownProbe(f"trace has no probe '{probe}'") from None
    times = trace.times
    for k in range(len(values)):
        if values[k] >= level:
            if k == 0:
                return float(times[0])
            v0, v1 = values[k - 1], values[k]
            return float(times[k - 1] + (level - v0) * (times[k] - times[k - 1]) / (v1 - v0))
    return None


def steady_state(p: TankParams = TankParams()) -> tuple:
    """Equilibrium levels with the pumps delivering their nominal flows.

    Solves the flow balance configuration by configuration (each pipe
    contributes a linear term per configuration) and keeps the solution whose
    levels reproduce the assumed configuration.
    """
    configs = [PipeConfig.BOTH_BELOW, PipeConfig.LEFT_ABOVE,
               PipeConfig.RIGHT_ABOVE, PipeConfig.BOTH_ABOVE]

    def coeffs(cfg, height, resistance):
        # pipe flow = a*h_left + b*h_right + k
        g = 1.0 / resistance
        if cfg is PipeConfig.BOTH_BELOW:
            return 0.0, 0.0, 0.0
        if cfg is PipeConfig.LEFT_ABOVE:
            return g, 0.0, -g * height
        if cfg is PipeConfig.RIGHT_ABOVE:
            return 0.0, -g, g * height
        return g, -g, 0.0

    for c12 in configs:
        for c23 in configs:
            a12, b12, k12 = coeffs(c12, p.h12, p.r12)
            a23, b23, k23 = coeffs(c23, p.h23, p.r23)
            A = np.array([
                [-1.0 / p.r1 - a12, -b12, 0.0],
                [a12, b12 - a23, -b23],
                [0.0, a23, b23 - 1.0 / p.r2],
            ])
            b = np.array([k12 - p.qp1, k23 - k12, -p.qp2 - k23])
            if c12 is PipeConfig.BOTH_BELOW and c23 is PipeConfig.BOTH_BELOW:
                # tank 2 is isolated: its level is free, the rest state is empty
                h = np.array([p.qp1 * p.r1, 0.0, p.qp2 * p.r2])
            else:
                try:
                    h = np.linalg.solve(A, b)
                except np.linalg.LinAlgError:
                    continue
            if classify(h[0], h[1], p.h12) is c12 and classify(h[1], h[2], p.h23) is c23:
                return (float(h[0]), float(h[1]), float(h[2]))
    raise NoEquilibrium("no configuration yields a self-consistent equilibrium")
