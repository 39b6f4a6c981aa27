"""Fixed-step hybrid engine: integrators, mode updates, traces."""

import math

import numpy as np
import pytest

from hbgsim.engine import (
    NumericalBlowup,
    SimConfig,
    guard_env_from_pass,
    integrate_step,
    simulate,
    update_mode,
)
from hbgsim.ibd import compile_graph, evaluate_pass
from hbgsim.model import GuardEnv, initial_mode
from hbgsim.parser import parse_file, parse_model
from hbgsim.threetank import TankParams, build_three_tank

from conftest import MODELS

# one rk4 step of dx/dt = -x from 1 with dt = 0.01, stages expanded by hand:
# k1=-1, k2=-0.995, k3=-0.995025, k4=-0.99004975 -> 0.99004983375
RK4_DECAY_STEP = 0.99004983375


class TestIntegrateStep:
    def test_euler_decay_step(self, decay):
        ibd = compile_graph(decay)
        out = integrate_step(ibd, [1.0], 0.0, (), 0.01, "euler")
        assert out[0] == pytest.approx(0.99, abs=1e-15)

    def test_rk4_decay_step_matches_hand_expansion(self, decay):
        ibd = compile_graph(decay)
        out = integrate_step(ibd, [1.0], 0.0, (), 0.01, "rk4")
        assert out[0] == pytest.approx(RK4_DECAY_STEP, abs=1e-12)
        # fourth-order: agrees with exp(-dt) to ~dt^5
        assert abs(out[0] - math.exp(-0.01)) < 1e-11

    def test_zero_dynamics_state_unchanged(self, decay):
        ibd = compile_graph(decay)
        for method in ("euler", "rk4"):
            out = integrate_step(ibd, [0.0], 0.0, (), 0.01, method)
            assert out[0] == 0.0

    def test_dt_must_be_positive(self, decay):
        ibd = compile_graph(decay)
        with pytest.raises(ValueError):
            integrate_step(ibd, [1.0], 0.0, (), -0.1, "euler")


class TestUpdateMode:
    def test_no_guard_satisfied_no_events(self, three_tank):
        mode = initial_mode(three_tank)
        env = GuardEnv(time=0.5,
                       efforts={e.name: 0.0 for e in three_tank.elements},
                       flows={b.name: 0.0 for b in three_tank.bonds},
                       signals={"Pump_u1": 1.0, "Pump_u2": 0.5, "Pump_Sw1": 0.0,
                                "Pump_Sw2": 0.0, "Drain_Sw": 1.0})
        new, events = update_mode(three_tank, mode, env)
        assert new == mode
        assert events == []

    def test_single_flip_when_h1_crosses(self, three_tank):
        mode = initial_mode(three_tank)
        env = GuardEnv(time=1.7,
                       efforts={"C1": 0.51, "C2": 0.0, "C3": 0.0},
                       flows={},
                       signals={"Pump_u1": 1.0, "Pump_u2": 0.5, "Pump_Sw1": 1.0,
                                "Pump_Sw2": 0.0, "Drain_Sw": 1.0})
        # pump1 already on so only the pipe junction flips
        mode = tuple(b or (j.name == "pump1_jn")
                     for b, j in zip(mode, three_tank.switched_junctions))
        new, events = update_mode(three_tank, mode, env)
        assert events == [("pipe12_left", True)]
        assert sum(a != b for a, b in zip(new, mode)) == 1

    def test_synchronous_parallel_composition(self, three_tank):
        # both pump signals step together: both junctions flip in one call
        mode = initial_mode(three_tank)
        env = GuardEnv(time=3.0,
                       efforts={"C1": 0.0, "C2": 0.0, "C3": 0.0},
                       flows={},
                       signals={"Pump_u1": 1.0, "Pump_u2": 0.5, "Pump_Sw1": 1.0,
                                "Pump_Sw2": 1.0, "Drain_Sw": 1.0})
        new, events = update_mode(three_tank, mode, env)
        assert sorted(name for name, _ in events) == ["pump1_jn", "pump2_jn"]


class TestSimulate:
    def test_zero_input_zero_trace(self):
        p = TankParams(t10=100.0, t20=100.0)  # pumps never open within the run
        g = build_three_tank(p)
        ibd = compile_graph(g)
        trace = simulate(ibd, g, SimConfig(dt=0.01, t_end=2.0))
        assert np.all(trace.probe_values == 0.0)

    def test_one_tank_step_response(self):
        # inflow steps to 1 at t=1; the level then follows 1 - exp(-(t-1))
        from conftest import ONE_TANK
        g = parse_model(ONE_TANK[:ONE_TANK.rfind("}")] + "  probe h = effort(C1)\n}\n")
        ibd = compile_graph(g)
        trace = simulate(ibd, g, SimConfig(dt=0.01, t_end=5.0))
        ts = trace.times
        h = trace.probe("h")
        sel = ts >= 1.0
        worst = max(abs(h[k] - (1.0 - math.exp(-(ts[k] - 1.0))))
                    for k in np.nonzero(sel)[0])
        # the signal steps mid-stage inside one rk4 step, which smears the
        # onset by at most one step of inflow
        assert worst < 5e-3
        assert float(h[int(1.0 / 0.01)]) < 2e-3

    def test_inertance_current_ramp(self):
        # series Se-I-R loop: flow approaches V/R with time constant I/R
        g = parse_model("""
        bondgraph rl {
          element Se V { value = 1.0 }
          element I L1 { value = 1.0 }
          element R R1 { value = 0.5 }
          junction 1 loop
          bond b1 from V to loop
          bond b2 from loop to L1
          bond b3 from loop to R1
          probe f = flow(b2)
        }
        """)
        ibd = compile_graph(g)
        trace = simulate(ibd, g, SimConfig(dt=0.01, t_end=8.0))
        ts = trace.times
        f = trace.probe("f")
        worst = max(abs(f[k] - 2.0 * (1.0 - math.exp(-0.5 * ts[k])))
                    for k in range(len(ts)))
        assert worst < 1e-9

    def test_trace_shape_and_spacing(self, three_tank, three_tank_ibd):
        trace = simulate(three_tank_ibd, three_tank, SimConfig(dt=0.01, t_end=10.0,
                                                               record_every=5))
        assert len(trace) == 201
        gaps = np.diff(trace.times)
        assert np.allclose(gaps, 0.05, atol=1e-12)
        assert trace.probe_values.shape == (201, 3)
        assert trace.modes.shape == (201, 8)

    def test_periodic_two_mode_switching(self):
        g = parse_file(MODELS / "periodic.hbg")
        ibd = compile_graph(g)
        trace = simulate(ibd, g, SimConfig(dt=0.01, t_end=10.0))
        flips = [(e.time, e.to_on) for e in trace.events]
        assert len(flips) == 9
        for i, (t, to_on) in enumerate(flips):
            assert abs(t - (i + 1.0)) <= 0.01 + 1e-9
            assert to_on == (i % 2 == 0)  # alternating directions
        # state stays continuous: no recorded jump exceeds dt * max|rate|
        h = trace.probe("h")
        assert float(np.abs(np.diff(h)).max()) <= 0.01 * 1.0 + 1e-12

    def test_chattering_is_permitted_and_visible(self):
        # both guards always true: the junction flips at every step boundary
        # and the event log exposes it (no suppression)
        g = parse_model("""
        bondgraph chatter {
          element Sf Sf1 { value = 1.0 }
          element C C1 { value = 1.0 }
          element R R1 { value = 1.0 }
          junction 1 sw switched { on_guard = (time >= 0.0); off_guard = (time >= 0.0); init = off }
          junction 0 j
          bond b1 from Sf1 to sw
          bond b2 from sw to j
          bond b3 from j to C1
          bond b4 from j to R1
        }
        """)
        ibd = compile_graph(g)
        trace = simulate(ibd, g, SimConfig(dt=0.01, t_end=1.0))
        assert len(trace.events) == 100
        assert [e.to_on for e in trace.events[:4]] == [True, False, True, False]

    def test_switched_0junction_freezes_state(self):
        # while the tank junction is off every incident bond reads zero and
        # the stored level holds; dynamics resume from the held value
        g = parse_model("""
        bondgraph gated_tank {
          signal Gate = piecewise(0.0: 1.0, 2.0: 0.0, 4.0: 1.0)
          element Sf Sf1 { value = 1.0 }
          element C C1 { value = 1.0 }
          element R R1 { value = 1.0 }
          junction 0 j switched { on_guard = signal(Gate); off_guard = (not signal(Gate)); init = on }
          bond b1 from Sf1 to j
          bond b2 from j to C1
          bond b3 from j to R1
          probe h = effort(C1)
        }
        """)
        ibd = compile_graph(g)
        trace = simulate(ibd, g, SimConfig(dt=0.01, t_end=6.0))
        h = trace.probe("h")
        held = h[200]
        assert held == pytest.approx(1.0 - math.exp(-2.0), abs=1e-6)
        assert np.all(h[201:400] == 0.0)  # inactive bond reads zero
        resumed = 1.0 - (1.0 - held) * math.exp(-2.0)
        assert h[600] == pytest.approx(resumed, abs=1e-6)

    def test_event_log_three_tank(self, three_tank, three_tank_ibd):
        trace = simulate(three_tank_ibd, three_tank, SimConfig(dt=0.01, t_end=10.0))
        by_name = {}
        for e in trace.events:
            by_name.setdefault(e.junction, []).append(e)
        assert abs(by_name["pump1_jn"][0].time - 1.0) < 1e-9
        assert abs(by_name["pump2_jn"][0].time - 3.0) < 1e-9
        assert 1.69 <= by_name["pipe12_left"][0].time <= 1.71
        assert by_name["pipe12_left"][0].to_on
        assert 4.14 <= by_name["pipe12_right"][0].time <= 4.25
        assert "pipe23_right" not in by_name  # tank 3 never reaches 0.7

    def test_mode_column_tracks_events(self, three_tank, three_tank_ibd):
        trace = simulate(three_tank_ibd, three_tank, SimConfig(dt=0.01, t_end=2.0))
        assert trace.mode_string(0) == "00110000"
        k = int(round(1.0 / 0.01))
        assert trace.mode_string(k) == "10110000"  # pump1 flips at its own sample

    def test_determinism_bitwise(self, three_tank, three_tank_ibd):
        cfg = SimConfig(dt=0.01, t_end=10.0)
        a = simulate(three_tank_ibd, three_tank, cfg)
        b = simulate(three_tank_ibd, three_tank, cfg)
        assert np.array_equal(a.probe_values, b.probe_values)
        assert np.array_equal(a.times, b.times)
        assert a.events == b.events

    def test_numerical_blowup_reported(self):
        g = parse_model("""
        bondgraph unstable {
          element C C1 { value = 1.0 }
          element MSf M1 { value = (10.0 * effort(C1)) }
          junction 0 j
          bond b1 from j to C1
          bond bm from M1 to j
        }
        """)
        ibd = compile_graph(g)
        with pytest.raises(NumericalBlowup) as exc:
            simulate(ibd, g, SimConfig(dt=0.01, t_end=5.0, initial_state=(1.0,)))
        assert exc.value.variable == "C1"
        assert 0.0 < exc.value.time <= 5.0

    def test_state_continuity_across_mode_changes(self, three_tank, three_tank_ibd):
        trace = simulate(three_tank_ibd, three_tank, SimConfig(dt=0.01, t_end=10.0))
        # |rate| stays below 3 for this scenario, so steps are bounded by 3*dt
        for name in ("h1", "h2", "h3"):
            assert float(np.abs(np.diff(trace.probe(name))).max()) <= 3.0 * 0.01

    def test_bad_config_rejected(self, three_tank, three_tank_ibd):
        with pytest.raises(ValueError):
            simulate(three_tank_ibd, three_tank, SimConfig(dt=0.0))
        with pytest.raises(ValueError):
            simulate(three_tank_ibd, three_tank, SimConfig(integrator="midpoint"))
        with pytest.raises(ValueError):
            simulate(three_tank_ibd, three_tank, SimConfig(initial_state=(1.0,)))

    def test_unknown_probe_keyerror(self, three_tank, three_tank_ibd):
        trace = simulate(three_tank_ibd, three_tank, SimConfig(t_end=0.1))
        with pytest.raises(KeyError):
            trace.probe("h9")


class TestEngineModelAgreement:
    def test_kernel_guards_match_model_semantics(self, three_tank, three_tank_ibd):
        """Drive the step loop through the public single-step ops and compare
        the mode sequence with the engine's own trace."""
        cfg = SimConfig(dt=0.01, t_end=3.0)
        trace = simulate(three_tank_ibd, three_tank, cfg)
        mode = initial_mode(three_tank)
        state = np.zeros(3)
        for k in range(300):
            t1 = (k + 1) * 0.01
            state = integrate_step(three_tank_ibd, state, k * 0.01, mode, 0.01, "rk4")
            r = evaluate_pass(three_tank_ibd, state, t1, mode)
            env = guard_env_from_pass(three_tank, r, t1)
            mode, _ = update_mode(three_tank, mode, env)
            assert trace.mode_string(k + 1) == "".join("1" if b else "0" for b in mode)
            assert np.array_equal(trace.probe_values[k + 1],
                                  np.array([r.probe("h1"), r.probe("h2"), r.probe("h3")]))
