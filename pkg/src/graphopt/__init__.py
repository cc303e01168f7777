"""graphopt: graph-structured optimization modeling with a built-in LP/MIP
solver, a remote-worker protocol for distributed model building, and a
graph-based Benders decomposition driver."""

from .expr import (
    CONTINUOUS,
    EQ,
    GE,
    INTEGER,
    LE,
    AffineExpr,
    Constraint,
    ModelError,
    VariableBounds,
    VariableId,
    as_expr,
    canonical_name,
    split_canonical_name,
)
from .graph import (
    ConstraintRef,
    OptiEdge,
    OptiGraph,
    OptiNode,
    StandardFormProblem,
    canonical_problem_text,
    dump_graph,
    flatten,
)
from .solve import (
    SolveResult,
    SolverConfig,
    duality_residual,
    fix_variables,
    solve_lp,
    solve_mip,
    solve_problem,
    write_problem,
)
from .benders import (
    BendersConfig,
    BendersState,
    Cut,
    cut_validity_check,
    map_linking_variables,
    run_benders,
    validate_structure,
)
from .models import (
    CemData,
    CemParams,
    StorageParams,
    build_storage_local,
    build_storage_remote,
    build_toy_cem_local,
    build_toy_cem_remote,
    generate_cem_data,
)

__version__ = "0.1.0"

__all__ = [
    "AffineExpr",
    "Constraint",
    "ConstraintRef",
    "ModelError",
    "OptiEdge",
    "OptiGraph",
    "OptiNode",
    "StandardFormProblem",
    "VariableBounds",
    "VariableId",
    "CONTINUOUS",
    "INTEGER",
    "LE",
    "EQ",
    "GE",
    "as_expr",
    "canonical_name",
    "split_canonical_name",
    "canonical_problem_text",
    "dump_graph",
    "flatten",
    "SolverConfig",
    "SolveResult",
    "solve_lp",
    "solve_mip",
    "solve_problem",
    "fix_variables",
    "duality_residual",
    "write_problem",
    "BendersConfig",
    "BendersState",
    "Cut",
    "run_benders",
    "validate_structure",
    "map_linking_variables",
    "cut_validity_check",
    "StorageParams",
    "build_storage_local",
    "build_storage_remote",
    "CemParams",
    "CemData",
    "generate_cem_data",
    "build_toy_cem_local",
    "build_toy_cem_remote",
    "__version__",
]
