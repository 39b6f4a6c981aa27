"""Causality assignment and all-mode checking."""

import pytest

from hbgsim.causality import (
    CausalConflict,
    DerivativeCausality,
    TooManyModes,
    assign_causality,
    check_all_modes,
)
from hbgsim.model import (
    Bond,
    BondGraph,
    ControlSpec,
    Element,
    Junction,
    Num,
    SignalDef,
    SignalTruth,
)
from hbgsim.parser import parse_model


class TestAssign:
    def test_one_tank_textbook_assignment(self, one_tank):
        asg = assign_causality(one_tank, ())
        # C imposes effort on the junction, R receives effort and computes flow
        assert asg.effort_setter["b2"] == "C1"
        assert asg.effort_setter["b3"] == "j"
        assert asg.classification["C1"] == "integral-storage"
        assert asg.classification["R1"] == "resistive"
        assert asg.strong_bond["j"] == "b2"

    def test_two_capacitors_on_one_junction(self):
        g = BondGraph(
            "dep",
            elements=(Element("C1", "C", Num(1.0)), Element("C2", "C", Num(1.0))),
            junctions=(Junction("j", 0),),
            bonds=(Bond("b1", "j", "C1"), Bond("b2", "j", "C2")),
        )
        with pytest.raises(DerivativeCausality):
            assign_causality(g, ())

    def test_two_flow_sources_on_one_1junction(self):
        g = BondGraph(
            "conflict",
            elements=(Element("Sf1", "Sf", Num(1.0)), Element("Sf2", "Sf", Num(2.0))),
            junctions=(Junction("j", 1),),
            bonds=(Bond("b1", "Sf1", "j"), Bond("b2", "Sf2", "j")),
        )
        with pytest.raises(CausalConflict):
            assign_causality(g, ())

    def test_resistance_causality_with_inertance(self):
        g = parse_model("""
        bondgraph rl {
          element Se V { value = 1.0 }
          element I L1 { value = 1.0 }
          element R R1 { value = 0.5 }
          junction 1 loop
          bond b1 from V to loop
          bond b2 from loop to L1
          bond b3 from loop to R1
        }
        """)
        asg = assign_causality(g, ())
        assert asg.classification["L1"] == "integral-storage"
        assert asg.classification["R1"] == "resistive-resistance"
        assert asg.strong_bond["loop"] == "b2"

    def test_three_tank_all_on_all_integral(self, three_tank):
        asg = assign_causality(three_tank, (True,) * 8)
        for name in ("C1", "C2", "C3"):
            assert asg.classification[name] == "integral-storage"
        # the pipe resistance receives effort from the middle junction
        assert asg.effort_setter["b12_res"] == "pipe12_mid"
        assert asg.strong_bond["t1"] == "bc1"

    def test_determinism(self, three_tank):
        a = assign_causality(three_tank, (True,) * 8)
        b = assign_causality(three_tank, (True,) * 8)
        assert a == b

    def test_junction_constraint_on_result(self, three_tank):
        """Each active 0-junction has exactly one inward effort imposer, each
        active 1-junction exactly one bond whose effort it computes."""
        mode = (True, False, True, False, True, True, False, True)
        asg = assign_causality(three_tank, mode)
        junctions = {j.name: j for j in three_tank.junctions}
        for jname, sb in asg.strong_bond.items():
            j = junctions[jname]
            count = 0
            for b in three_tank.bonds_of(jname):
                if b.name not in asg.active_bonds:
                    continue
                setter = asg.effort_setter[b.name]
                if (setter != jname) == (j.kind == 0):
                    count += 1
                    assert b.name == sb
            assert count == 1, jname


class TestAllModes:
    def test_no_switched_junctions_single_mode(self, one_tank):
        report = check_all_modes(one_tank)
        assert len(report.entries) == 1
        assert report.mode_invariant

    def test_three_tank_256_modes(self, three_tank):
        report = check_all_modes(three_tank, mode_cap=1024)
        assert len(report.entries) == 256
        assert report.mode_invariant
        assert all(e.ok for e in report.entries)

    def test_too_many_modes(self):
        cspec = ControlSpec(SignalTruth("s"), SignalTruth("s"), False)
        g = BondGraph(
            "eleven",
            junctions=tuple(Junction(f"j{i}", 1, True, cspec) for i in range(11)),
            signals=(SignalDef("s", ((0.0, 1.0),)),),
        )
        with pytest.raises(TooManyModes):
            check_all_modes(g, mode_cap=1024)

    def test_report_text_has_summary(self, three_tank):
        text = check_all_modes(three_tank).to_text()
        assert "256 modes checked" in text
        assert "mode-invariant integral causality" in text

    def test_mode_variant_graph_flagged(self):
        g = parse_model("""
        bondgraph variant {
          element Se V { value = 1.0 }
          element R R1 { value = 1.0 }
          junction 1 sw switched { on_guard = (time >= 1.0); off_guard = (time < 1.0); init = on }
          junction 0 j
          bond b1 from V to sw
          bond b2 from sw to j
          bond b3 from j to R1
        }
        """)
        report = check_all_modes(g)
        assert all(e.ok for e in report.entries)
        assert not report.mode_invariant
