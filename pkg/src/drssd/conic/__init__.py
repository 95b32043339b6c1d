"""Self-contained LP/SOCP solver with a backend adapter seam.

`solve` runs the embedded homogeneous self-dual interior-point method;
`adapter_solve` dispatches to registered backends under the same contract.
"""

from .backends import (
    DEFAULT_TOLS,
    SolverError,
    adapter_solve,
    register_backend,
    solve_embedded,
    solve_scipy_linprog,
)
from .program import ConicProgram, SocRow, SolveResult, canonicalize


def solve(program: ConicProgram, tols: dict | None = None) -> SolveResult:
    return solve_embedded(program, tols)


__all__ = [
    "ConicProgram",
    "SocRow",
    "SolveResult",
    "SolverError",
    "DEFAULT_TOLS",
    "canonicalize",
    "solve",
    "adapter_solve",
    "register_backend",
    "solve_embedded",
    "solve_scipy_linprog",
]
