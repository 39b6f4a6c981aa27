"""Sequential causality assignment over a bond graph in a given mode.

Sources are assigned first, then storage elements in integral causality
(C imposes effort, I imposes flow), then junction constraints are propagated
to a fixpoint. Bonds incident to an off junction are inactive and excluded.
Derivative causality is an error here, not a fallback: the explicit
fixed-step runtime cannot honor it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import BondGraph, HbgError, Mode, mode_string


class CausalityError(HbgError):
    def __init__(self, node: str, message: str):
        self.node = node
        super().__init__(message)


class CausalConflict(CausalityError):
    pass


class DerivativeCausality(CausalityError):
    pass


class TooManyModes(HbgError):
    pass


@dataclass(frozen=True)
class CausalAssignment:
    """Result of assignment: for every active bond, the node that imposes the
    bond's effort (the other end imposes flow)."""

    mode: Mode
    active_bonds: frozenset
    effort_setter: dict  # bond name -> node name
    classification: dict  # element name -> integral-storage | resistive | source
    strong_bond: dict  # junction name -> bond determining its free variable


def _switch_bits(g: BondGraph, mode: Mode) -> dict:
    names = [j.name for j in g.switched_junctions]
    if len(mode) != len(names):
        raise ValueError(f"mode length {len(mode)} != switched junction count {len(names)}")
    return dict(zip(names, mode))


def junction_active(g: BondGraph, mode: Mode) -> dict:
    bits = _switch_bits(g, mode)
    return {j.name: bits.get(j.name, True) for j in g.junctions}


def assign_causality(g: BondGraph, mode: Mode) -> CausalAssignment:
    """Assign causality for one mode.

    Raises CausalConflict when a junction constraint is unsatisfiable and
    DerivativeCausality when a storage element cannot keep integral
    causality; both name the offending node.
    """
    elements = {e.name: e for e in g.elements}
    junctions = {j.name: j for j in g.junctions}
    active_j = junction_active(g, mode)

    def bond_active(b) -> bool:
        for end in (b.tail, b.head):
            if end in active_j and not active_j[end]:
                return False
        return True

    active = [b for b in g.bonds if bond_active(b)]
    incident = {j.name: [] for j in g.junctions}
    for b in active:
        for end in (b.tail, b.head):
            if end in incident:
                incident[end].append(b)

    setter = {}  # bond name -> imposing node
    storages = []

    def impose(b, node, element=None):
        prev = setter.get(b.name)
        if prev is None:
            setter[b.name] = node
            return True
        if prev == node:
            return False
        # an already-fixed orientation is being contradicted
        for end in (b.tail, b.head):
            e = elements.get(end)
            if e is not None and e.kind in ("C", "I"):
                raise DerivativeCausality(
                    end, f"storage '{end}' loses integral causality on bond '{b.name}'")
        raise CausalConflict(
            element or b.tail,
            f"conflicting causality on bond '{b.name}' between '{prev}' and '{node}'")

    classification = {}
    for b in active:
        for end in (b.tail, b.head):
            e = elements.get(end)
            if e is None:
                continue
            other = b.head if end == b.tail else b.tail
            if e.kind == "Se":
                impose(b, e.name)
                classification[e.name] = "source"
            elif e.kind in ("Sf", "MSf"):
                impose(b, other)  # source fixes flow, junction returns effort
                classification[e.name] = "source"
            elif e.kind == "C":
                impose(b, e.name)  # integral: effort from integrated flow
                classification[e.name] = "integral-storage"
                storages.append(e.name)
            elif e.kind == "I":
                impose(b, other)  # integral: flow from integrated effort
                classification[e.name] = "integral-storage"
                storages.append(e.name)
            else:  # R is indifferent, resolved by propagation or tie-break
                classification.setdefault(e.name, "resistive")

    def junction_state(jname):
        """Count bonds whose effort is imposed toward/away from the junction.

        For a 0-junction the strong bond is the single one whose effort comes
        from the far side; for a 1-junction the single one the junction itself
        computes (the far side imposes the common flow through it).
        """
        j = junctions[jname]
        strong, weak, free = [], [], []
        for b in incident[jname]:
            s = setter.get(b.name)
            if s is None:
                free.append(b)
            elif (s != jname) == (j.kind == 0):
                strong.append(b)
            else:
                weak.append(b)
        return j, strong, weak, free

    def propagate():
        changed = True
        while changed:
            changed = False
            for jname in (j.name for j in g.junctions if active_j[j.name]):
                j, strong, weak, free = junction_state(jname)
                if len(strong) > 1:
                    for b in strong:
                        for end in (b.tail, b.head):
                            e = elements.get(end)
                            if e is not None and e.kind in ("C", "I"):
                                raise DerivativeCausality(
                                    end, f"storage '{end}' forced out of integral causality "
                                         f"at junction '{jname}'")
                    raise CausalConflict(
                        jname, f"junction '{jname}' has {len(strong)} competing "
                               f"{'effort' if j.kind == 0 else 'flow'} imposers")
                if len(strong) == 1 and free:
                    # remaining bonds are determined by the junction
                    for b in free:
                        if j.kind == 0:
                            impose(b, jname)
                        else:
                            other = b.head if b.tail == jname else b.tail
                            impose(b, other)
                    changed = True
                elif not strong and len(free) == 1 and incident[jname]:
                    b = free[0]
                    if j.kind == 0:
                        other = b.head if b.tail == jname else b.tail
                        impose(b, other)
                    else:
                        impose(b, jname)
                    changed = True

    propagate()

    # tie-break remaining free R elements: prefer conductance (effort in),
    # declaration order for reproducibility
    for e in g.elements:
        if e.kind != "R":
            continue
        eb = [b for b in active if e.name in (b.tail, b.head)]
        if eb and eb[0].name not in setter:
            b = eb[0]
            other = b.head if b.tail == e.name else b.tail
            impose(b, other)
            propagate()

    unresolved = [b.name for b in active if b.name not in setter]
    if unresolved:
        raise CausalConflict(unresolved[0],
                             f"underdetermined causality on bonds {unresolved}")

    strong_bond = {}
    for jname in (j.name for j in g.junctions if active_j[j.name]):
        j, strong, weak, free = junction_state(jname)
        if not incident[jname]:
            continue
        if len(strong) != 1:
            raise CausalConflict(jname, f"junction '{jname}' ended with {len(strong)} strong bonds")
        strong_bond[jname] = strong[0].name

    # R classification refinement: resistance causality when the R imposes effort
    for e in g.elements:
        if e.kind == "R":
            eb = [b for b in active if e.name in (b.tail, b.head)]
            if eb:
                classification[e.name] = (
                    "resistive-resistance" if setter[eb[0].name] == e.name else "resistive")

    return CausalAssignment(
        mode=tuple(mode),
        active_bonds=frozenset(b.name for b in active),
        effort_setter=setter,
        classification=classification,
        strong_bond=strong_bond,
    )


@dataclass(frozen=True)
class ModeEntry:
    mode: Mode
    ok: bool
    error_kind: str = ""
    node: str = ""
    message: str = ""
    consistent: bool = True  # assignment agrees with the all-on one on active bonds


@dataclass
class ModeCausalityReport:
    junction_names: tuple
    entries: list = field(default_factory=list)

    @property
    def mode_invariant(self) -> bool:
        """True iff every mode assigns successfully, with all storages in
        integral causality and the same orientation as the all-on mode."""
        return all(e.ok and e.consistent for e in self.entries)

    def to_text(self) -> str:
        lines = [f"junctions: {' '.join(self.junction_names) or '(none)'}"]
        for e in self.entries:
            if e.ok:
                status = "ok" if e.consistent else "ok (orientation differs)"
                lines.append(f"{mode_string(e.mode) or '-'}  {status}")
            else:
                lines.append(f"{mode_string(e.mode) or '-'}  {e.error_kind}: {e.node}")
        verdict = "mode-invariant integral causality" if self.mode_invariant else "NOT mode-invariant"
        lines.append(f"{len(self.entries)} modes checked: {verdict}")
        return "\n".join(lines)


def check_all_modes(g: BondGraph, mode_cap: int = 1024) -> ModeCausalityReport:
    """Assign causality in every one of the 2^n modes (n switched junctions).

    Entries are ordered by mode index, first-declared junction most
    significant. Raises TooManyModes when 2^n exceeds mode_cap.
    """
    names = tuple(j.name for j in g.switched_junctions)
    n = len(names)
    if 2 ** n > mode_cap:
        raise TooManyModes(f"2^{n} modes exceed cap {mode_cap}")
    report = ModeCausalityReport(junction_names=names)
    nominal = None
    try:
        nominal = assign_causality(g, (True,) * n)
    except CausalityError:
        pass
    for idx in range(2 ** n):
        mode = tuple(bool((idx >> (n - 1 - k)) & 1) for k in range(n))
        try:
            asg = assign_causality(g, mode)
        except CausalityError as err:
            report.entries.append(ModeEntry(mode, False, type(err).__name__, err.node, str(err)))
            continue
        consistent = nominal is not None and all(
            asg.effort_setter[b] == nominal.effort_setter.get(b) for b in asg.active_bonds)
        report.entries.append(ModeEntry(mode, True, consistent=consistent))
    return report
