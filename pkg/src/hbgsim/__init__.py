"""hbgsim: hybrid bond graph modeling, compilation and fixed-step simulation.

A textual modeling language for bond graphs with switched junctions governed
by two-state control automata, a compiler into an intermediate block diagram,
and a hybrid fixed-step runtime, validated against a three-tank benchmark.
"""

from .causality import (
    CausalAssignment,
    CausalConflict,
    DerivativeCausality,
    ModeCausalityReport,
    TooManyModes,
    assign_causality,
    check_all_modes,
)
from .engine import (
    NumericalBlowup,
    SimConfig,
    SimEvent,
    SimTrace,
    integrate_step,
    simulate,
    update_mode,
)
from .ibd import (
    AlgebraicLoop,
    Block,
    BlockDiagram,
    CausalityNotInvariant,
    CompileError,
    compile_graph,
    emit_dot,
    evaluate_pass,
    junction_residuals,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .model import (
    Bond,
    BondGraph,
    ControlSpec,
    DecisionDef,
    Diagnostic,
    Element,
    GuardEnv,
    HbgError,
    Junction,
    Probe,
    SignalDef,
    UnboundVariable,
    eval_guard,
    initial_mode,
    mode_string,
    step_automaton,
    validate_graph,
)
from .parser import HbgParseError, ParseError, SourceSpan, parse_file, parse_model, serialize_model
from .threetank import (
    NoEquilibrium,
    PipeConfig,
    TankParams,
    UnknownProbe,
    analytic_h1_mode_i,
    analytic_h2_mode_ii,
    build_three_tank,
    crossing_time,
    oracle_rhs,
    oracle_simulate,
    pipe_flow,
    steady_state,
)

__version__ = "0.1.0"
