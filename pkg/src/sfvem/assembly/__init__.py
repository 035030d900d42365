"""Material law, element matrices, global assembly and solve."""

from .element import (
    RankDeficiencyError,
    count_small_eigenvalues,
    edge_traction,
    element_body_force,
    element_force,
    element_stiffness,
    element_stiffness_stabilized,
    element_with_policy,
)
from .material import MaterialModel, material_matrix
from .system import (
    BoundaryConditionError,
    ConstrainedSystem,
    Dirichlet,
    GlobalSystem,
    ProblemDefinition,
    Solution,
    SolverError,
    apply_dirichlet,
    assemble_global,
    dirichlet_values,
    local_to_global,
    read_solution,
    solve,
    solve_linear,
    write_reactions,
    write_solution,
)

__all__ = [
    "BoundaryConditionError",
    "ConstrainedSystem",
    "Dirichlet",
    "GlobalSystem",
    "MaterialModel",
    "ProblemDefinition",
    "RankDeficiencyError",
    "Solution",
    "SolverError",
    "apply_dirichlet",
    "assemble_global",
    "count_small_eigenvalues",
    "dirichlet_values",
    "edge_traction",
    "element_body_force",
    "element_force",
    "element_stiffness",
    "element_stiffness_stabilized",
    "element_with_policy",
    "local_to_global",
    "material_matrix",
    "read_solution",
    "solve",
    "solve_linear",
    "write_reactions",
    "write_solution",
]
