"""HBG to intermediate block diagram translation.

One diagram serves every mode: switch blocks zero the signals of bonds whose
junction is off, so no per-mode recompilation is needed. Precondition is that
causality is invariant across all modes (checked up front); a mode that would
re-orient any bond is rejected rather than guessed at.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import model as M
from .causality import assign_causality, check_all_modes
from .model import BondGraph, HbgError, Mode, validate_graph

INTEGRATOR = "Integrator"
GAIN = "Gain"
SUM = "Sum"
CONSTANT = "Constant"
SIGNAL = "SignalSource"
SWITCH = "Switch"
PROBE = "Probe"


class CompileError(HbgError):
    pass


class AlgebraicLoop(CompileError):
    def __init__(self, parts):
        self.parts = list(parts)
        super().__init__("algebraic loop involving: " + ", ".join(self.parts))


class CausalityNotInvariant(CompileError):
    def __init__(self, mode, detail):
        self.mode = mode
        super().__init__(f"causality is not invariant across modes "
                         f"(mode {M.mode_string(mode) or '-'}: {detail})")


@dataclass(frozen=True)
class Block:
    """Single-output computation node; the block index doubles as its wire id.

    kind-specific fields: Integrator/Gain/Constant use `gain` (1/C or 1/I for
    integrators, the multiplier for gains, the value for constants),
    SignalSource uses `signal`, Switch uses `bit` (index into the mode
    vector), Sum pairs `inputs` with +-1 `coefs`.
    """

    index: int
    kind: str
    name: str
    inputs: tuple = ()
    coefs: tuple = ()
    gain: float = 0.0
    signal: str = ""
    bit: int = -1


@dataclass
class BlockDiagram:
    blocks: list
    schedule: list  # block indices, topological order of non-integrators
    state_blocks: list  # integrator block indices, storage declaration order
    state_names: list  # storage element names, same order
    probe_names: list
    probe_blocks: list
    switched_names: tuple  # junction names defining mode bit positions
    signals: dict  # signal name -> breakpoint tuple
    bond_wires: dict  # (bond, 'e'|'f') -> wire (post-switch)
    effort_wires: dict  # 0-junction name -> common effort wire (post-switch)
    residual_groups: list  # (junction name, junction kind, [(wire, sign)])
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def block(self, name: str) -> Block:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    @property
    def wires(self) -> list:
        """Directed edges (source block, sink block) derived from inputs."""
        return [(src, b.index) for b in self.blocks for src in b.inputs]


@dataclass
class PassResult:
    diagram: BlockDiagram
    values: np.ndarray  # one value per block
    derivatives: np.ndarray  # one per integrator, state order

    def flow(self, bond: str) -> float:
        return float(self.values[self.diagram.bond_wires[(bond, "f")]])

    def effort(self, bond_or_node: str) -> float:
        key = (bond_or_node, "e")
        if key in self.diagram.bond_wires:
            return float(self.values[self.diagram.bond_wires[key]])
        return float(self.values[self.diagram.effort_wires[bond_or_node]])

    def probe(self, name: str) -> float:
        i = self.diagram.probe_names.index(name)
        return float(self.values[self.diagram.probe_blocks[i]])


def compile_graph(g: BondGraph, mode_cap: int = 1024) -> BlockDiagram:
    """Translate a validated, causally consistent bond graph into a block
    diagram with a deterministic evaluation schedule.

    Raises CausalityNotInvariant when some mode fails assignment or assigns
    differently from the all-on mode, and AlgebraicLoop when the instantaneous
    part of the diagram is cyclic.
    """
    diags = validate_graph(g)
    if diags:
        raise CompileError(f"graph is invalid: {diags[0].message}")

    n_sw = len(g.switched_junctions)
    report = check_all_modes(g, mode_cap=mode_cap)
    for entry in report.entries:
        if not entry.ok:
            raise CausalityNotInvariant(entry.mode, entry.message)
        if not entry.consistent:
            raise CausalityNotInvariant(entry.mode, "assignment differs from the all-on mode")
    asg = assign_causality(g, (True,) * n_sw)

    elements = {e.name: e for e in g.elements}
    bit_of = {j.name: i for i, j in enumerate(g.switched_junctions)}
    bonds_of = {}
    for b in g.bonds:
        for end in (b.tail, b.head):
            bonds_of.setdefault(end, []).append(b)

    blocks = []
    raw = {}  # (bond, 'e'|'f') -> wire id of the producing block (pre-switch)
    switched = {}
    sig_blocks = {}

    def add(kind, name, inputs=(), coefs=(), gain=0.0, signal="", bit=-1) -> int:
        idx = len(blocks)
        blocks.append(Block(idx, kind, name, tuple(inputs), tuple(coefs), gain, signal, bit))
        return idx

    def wire(bond: M.Bond, var: str) -> int:
        """Post-switch wire for a bond signal. A bond is inactive, and both its
        signals zero, whenever any incident switched junction is off."""
        key = (bond.name, var)
        if key in switched:
            return switched[key]
        idx = raw[key]
        for end in (bond.tail, bond.head):
            if end in bit_of:
                idx = add(SWITCH, f"sw:{bond.name}.{var}@{end}", inputs=(idx,), bit=bit_of[end])
        switched[key] = idx
        return idx

    def signal_block(name: str) -> int:
        if name not in sig_blocks:
            sig_blocks[name] = add(SIGNAL, f"sig:{name}", signal=name)
        return sig_blocks[name]

    def sign_at(bond: M.Bond, jname: str) -> float:
        return 1.0 if bond.head == jname else -1.0

    def modulation_ready(expr) -> bool:
        for kind, name in M.iter_refs(expr):
            if kind == "flow" and (name, "f") not in raw:
                return False
            if kind == "effort":
                if name in elements:
                    if (bonds_of[name][0].name, "e") not in raw:
                        return False
                else:
                    sb = asg.strong_bond.get(name)
                    if sb is None or (sb, "e") not in raw:
                        return False
        return True

    def compile_real(expr, owner: str) -> int:
        if isinstance(expr, M.Num):
            return add(CONSTANT, f"const:{owner}={expr.value!r}", gain=expr.value)
        if isinstance(expr, M.SignalRef):
            return signal_block(expr.name)
        if isinstance(expr, M.FlowRef):
            return wire(g.bond(expr.bond), "f")
        if isinstance(expr, M.EffortRef):
            node = expr.node
            if node in elements:
                return wire(bonds_of[node][0], "e")
            return junction_effort(node)
        if isinstance(expr, M.Arith):
            if expr.op in ("+", "-"):
                left = compile_real(expr.left, owner)
                right = compile_real(expr.right, owner)
                return add(SUM, f"sum:{owner}", inputs=(left, right),
                           coefs=(1.0, -1.0 if expr.op == "-" else 1.0))
            if isinstance(expr.left, M.Num):
                k, sub = expr.left.value, expr.right
            else:
                k, sub = expr.right.value, expr.left
            return add(GAIN, f"gain:{owner}", inputs=(compile_real(sub, owner),), gain=k)
        raise CompileError(f"unsupported expression in {owner}: {expr!r}")

    def junction_effort(jname: str) -> int:
        """Common-effort wire of a 0-junction, zeroed when the junction is off."""
        sb = asg.strong_bond[jname]
        idx = raw[(sb, "e")]
        if jname in bit_of:
            key = ("__jn__" + jname, "e")
            if key not in switched:
                switched[key] = add(SWITCH, f"sw:effort.{jname}", inputs=(idx,), bit=bit_of[jname])
            return switched[key]
        return idx

    # Phase 1: input-free element blocks.
    state_blocks, state_names = [], []
    for e in g.elements:
        bond = bonds_of[e.name][0]
        if e.kind in ("C", "I"):
            var = "e" if e.kind == "C" else "f"
            idx = add(INTEGRATOR, f"int:{e.name}", gain=1.0 / e.value.value)
            raw[(bond.name, var)] = idx
            state_blocks.append(idx)
            state_names.append(e.name)
        elif e.kind == "Se":
            raw[(bond.name, "e")] = add(CONSTANT, f"const:{e.name}", gain=e.value.value)
        elif e.kind == "Sf":
            if isinstance(e.value, M.Num):
                raw[(bond.name, "f")] = add(CONSTANT, f"const:{e.name}", gain=e.value.value)
            else:
                raw[(bond.name, "f")] = signal_block(e.value.name)

    # Phase 2: worklist fixpoint. Each producer is emitted once all of its
    # input signals exist; a stall means the instantaneous graph is cyclic.
    done_r = set()
    done_msf = set()
    done_dist = set()  # (junction, weak bond) aliases applied
    done_sum = set()

    progress = True
    while progress:
        progress = False

        for j in g.junctions:
            sb_name = asg.strong_bond.get(j.name)
            if sb_name is None:
                continue
            common = "e" if j.kind == 0 else "f"
            if (sb_name, common) in raw:
                for bond in bonds_of[j.name]:
                    if bond.name != sb_name and (j.name, bond.name) not in done_dist:
                        raw.setdefault((bond.name, common), raw[(sb_name, common)])
                        done_dist.add((j.name, bond.name))
                        progress = True

        for e in g.elements:
            if e.kind != "R" or e.name in done_r:
                continue
            bond = bonds_of[e.name][0]
            if asg.effort_setter.get(bond.name) == e.name:
                in_var, out_var, k = "f", "e", e.value.value  # resistance causality
            else:
                in_var, out_var, k = "e", "f", 1.0 / e.value.value
            if (bond.name, in_var) in raw:
                raw[(bond.name, out_var)] = add(GAIN, f"gain:{e.name}",
                                                inputs=(wire(bond, in_var),), gain=k)
                done_r.add(e.name)
                progress = True

        for e in g.elements:
            if e.kind != "MSf" or e.name in done_msf:
                continue
            if modulation_ready(e.value):
                bond = bonds_of[e.name][0]
                raw[(bond.name, "f")] = compile_real(e.value, e.name)
                done_msf.add(e.name)
                progress = True

        for j in g.junctions:
            sb_name = asg.strong_bond.get(j.name)
            if sb_name is None or j.name in done_sum:
                continue
            balance = "f" if j.kind == 0 else "e"
            others = [bond for bond in bonds_of[j.name] if bond.name != sb_name]
            if all((bond.name, balance) in raw for bond in others):
                sb = g.bond(sb_name)
                s_sigma = sign_at(sb, j.name)
                if others:
                    idx = add(SUM, f"sum:{j.name}.{balance}",
                              inputs=tuple(wire(bond, balance) for bond in others),
                              coefs=tuple(-s_sigma * sign_at(bond, j.name) for bond in others))
                else:
                    idx = add(CONSTANT, f"const:{j.name}.{balance}", gain=0.0)
                raw[(sb_name, balance)] = idx
                done_sum.add(j.name)
                progress = True

    missing = [f"{var} of bond '{bn}'" for bn in (b.name for b in g.bonds)
               for var in ("e", "f") if (bn, var) not in raw]
    if missing:
        stuck = sorted(set(e.name for e in g.elements if e.kind == "MSf") - done_msf)
        raise AlgebraicLoop(stuck + missing)

    # Materialise every switched wire now so scheduling sees the full diagram.
    for bond in g.bonds:
        wire(bond, "e")
        wire(bond, "f")

    # Integrator derivative inputs: flow of the C bond / effort of the I bond.
    deriv_inputs = []
    for name in state_names:
        bond = bonds_of[name][0]
        deriv_inputs.append(wire(bond, "f" if elements[name].kind == "C" else "e"))

    probe_names, probe_blocks = [], []
    for p in g.probes:
        if isinstance(p.target, M.EffortRef):
            node = p.target.node
            src = wire(bonds_of[node][0], "e") if node in elements else junction_effort(node)
        elif isinstance(p.target, M.FlowRef):
            src = wire(g.bond(p.target.bond), "f")
        else:
            src = signal_block(p.target.name)
        probe_names.append(p.name)
        probe_blocks.append(add(PROBE, f"probe:{p.name}", inputs=(src,)))

    effort_wires = {j.name: junction_effort(j.name)
                    for j in g.junctions if j.kind == 0 and j.name in asg.strong_bond}

    residual_groups = []
    for j in g.junctions:
        if j.name not in asg.strong_bond:
            continue
        var = "f" if j.kind == 0 else "e"
        group = [(wire(bond, var), sign_at(bond, j.name)) for bond in bonds_of[j.name]]
        residual_groups.append((j.name, j.kind, group))

    # Attach derivative inputs to the integrator blocks (introspection only;
    # integrators are schedule roots, not scheduled).
    for i, idx in enumerate(state_blocks):
        old = blocks[idx]
        blocks[idx] = Block(idx, INTEGRATOR, old.name, (deriv_inputs[i],), (), old.gain)

    schedule = _toposort(blocks, set(state_blocks))

    return BlockDiagram(
        blocks=blocks,
        schedule=schedule,
        state_blocks=state_blocks,
        state_names=state_names,
        probe_names=probe_names,
        probe_blocks=probe_blocks,
        switched_names=tuple(j.name for j in g.switched_junctions),
        signals={s.name: s.breakpoints for s in g.signals},
        bond_wires={(b.name, var): switched[(b.name, var)]
                    for b in g.bonds for var in ("e", "f")},
        effort_wires=effort_wires,
        residual_groups=residual_groups,
    )


def _toposort(blocks, state_set) -> list:
    """Kahn's algorithm over non-integrator blocks; integrator outputs are
    schedule roots. Deterministic: ready blocks are processed in index order."""
    n = len(blocks)
    indeg = [0] * n
    dependents = [[] for _ in range(n)]
    for blk in blocks:
        if blk.index in state_set:
            continue
        for src in blk.inputs:
            if src not in state_set:
                indeg[blk.index] += 1
                dependents[src].append(blk.index)
    ready = [i for i in range(n) if i not in state_set and indeg[i] == 0]
    order = []
    qi = 0
    while qi < len(ready):
        i = ready[qi]
        qi += 1
        order.append(i)
        for d in dependents[i]:
            indeg[d] -= 1
            if indeg[d] == 0:
                ready.append(d)
    if len(order) != n - len(state_set):
        cycle = _find_cycle(blocks, state_set, set(order))
        raise AlgebraicLoop([blocks[i].name for i in cycle])
    return order


def _find_cycle(blocks, state_set, scheduled) -> list:
    remaining = [b.index for b in blocks if b.index not in state_set and b.index not in scheduled]
    rem = set(remaining)
    path, seen = [], {}
    node = remaining[0]
    while node not in seen:
        seen[node] = len(path)
        path.append(node)
        node = next(s for s in blocks[node].inputs if s in rem)
    return path[seen[node]:]


# --------------------------------------------------------------------------
# Evaluation (delegates the arithmetic to the selected kernel)
# --------------------------------------------------------------------------


def evaluate_pass(ibd: BlockDiagram, state, t: float, mode: Mode) -> PassResult:
    """Execute the schedule once: returns every block output plus the state
    derivative vector. Switch blocks read the supplied mode bits."""
    from . import kernels
    from .program import build_program

    if len(state) != len(ibd.state_blocks):
        raise ValueError(f"state length {len(state)} != integrator count {len(ibd.state_blocks)}")
    prog = build_program(ibd)
    values = np.zeros(len(ibd.blocks))
    derivs = np.zeros(len(ibd.state_blocks))
    kernels.eval_pass(prog, values, np.asarray(state, dtype=float), float(t),
                      np.asarray(mode, dtype=np.uint8))
    kernels.derivatives(prog, values, derivs)
    return PassResult(ibd, values, derivs)


def junction_residuals(result: PassResult) -> dict:
    """Signed balance per junction: flows at 0-junctions, efforts at
    1-junctions. All are ~0 in every mode (off junctions sum zeros)."""
    out = {}
    for jname, kind, group in result.diagram.residual_groups:
        out[jname] = sum(sign * result.values[w] for w, sign in group)
    return out


# --------------------------------------------------------------------------
# GraphViz emission
# --------------------------------------------------------------------------


def emit_dot(obj) -> str:
    """DOT text for either a BondGraph (nodes + bonds) or a BlockDiagram
    (blocks + wires). Node ordering follows declaration order."""
    lines = ["digraph {"]
    if isinstance(obj, BondGraph):
        for e in obj.elements:
            lines.append(f'  "{e.name}" [shape=box, label="{e.kind} {e.name}"];')
        for j in obj.junctions:
            sw = " (switched)" if j.switched else ""
            lines.append(f'  "{j.name}" [shape=circle, label="{j.kind}{sw}\\n{j.name}"];')
        for bnd in obj.bonds:
            lines.append(f'  "{bnd.tail}" -> "{bnd.head}" [label="{bnd.name}"];')
    elif isinstance(obj, BlockDiagram):
        for blk in obj.blocks:
            lines.append(f'  b{blk.index} [shape=box, label="{blk.kind}\\n{blk.name}"];')
        for blk in obj.blocks:
            for src in blk.inputs:
                lines.append(f"  b{src} -> b{blk.index};")
    else:
        raise TypeError(f"cannot emit dot for {type(obj).__name__}")
    lines.append("}")
    return "\n".join(lines) + "\n"
