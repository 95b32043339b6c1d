"""Canonical conic programs: linear objective, linear equalities/inequalities,
and second-order-cone rows of the form ||F x + g||_2 <= a'x + b.

Internally everything is lowered to the standard embedding

    min c'x  s.t.  A x = b,  G x + s = h,  s in K,

where K is a product of a nonnegative orthant (one slack per inequality row,
including variable bounds) and second-order cones (one block per SOC row,
first coordinate a'x + b, remainder F x + g).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp


def _as_matrix(m, ncols: int, name: str):
    """Validate a constraint matrix; sparse inputs stay sparse (CSR)."""
    if sp.issparse(m):
        a = m.tocsr().astype(float)
        if a.shape[1] != ncols:
            raise ValueError(f"{name}: expected {ncols} columns, got {a.shape[1]}")
        if a.nnz and not np.all(np.isfinite(a.data)):
            raise ValueError(f"{name}: nonfinite coefficients")
        return a
    a = np.atleast_2d(np.asarray(m, dtype=float))
    if a.size == 0:
        return np.zeros((0, ncols))
    if a.shape[1] != ncols:
        raise ValueError(f"{name}: expected {ncols} columns, got {a.shape[1]}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name}: nonfinite coefficients")
    return a


def _as_vector(v, nrows: int, name: str) -> np.ndarray:
    a = np.atleast_1d(np.asarray(v, dtype=float))
    if a.size == 0:
        return np.zeros(0)
    if a.shape != (nrows,):
        raise ValueError(f"{name}: expected length {nrows}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name}: nonfinite coefficients")
    return a


@dataclass(frozen=True, eq=False)
class SocRow:
    """One second-order-cone constraint ||F x + g||_2 <= a'x + b."""

    F: np.ndarray
    g: np.ndarray
    a: np.ndarray
    b: float = 0.0


@dataclass(frozen=True, eq=False)
class ConicProgram:
    c: np.ndarray
    a_eq: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    b_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    a_in: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    b_in: np.ndarray = field(default_factory=lambda: np.zeros(0))
    socs: tuple = ()
    lb: Optional[np.ndarray] = None  # per-variable lower bounds, -inf allowed
    ub: Optional[np.ndarray] = None  # per-variable upper bounds, +inf allowed

    def __post_init__(self):
        n = len(np.atleast_1d(self.c))
        object.__setattr__(self, "c", _as_vector(self.c, n, "c"))
        a_eq = _as_matrix(self.a_eq, n, "a_eq")
        object.__setattr__(self, "a_eq", a_eq)
        object.__setattr__(self, "b_eq", _as_vector(self.b_eq, a_eq.shape[0], "b_eq"))
        a_in = _as_matrix(self.a_in, n, "a_in")
        object.__setattr__(self, "a_in", a_in)
        object.__setattr__(self, "b_in", _as_vector(self.b_in, a_in.shape[0], "b_in"))
        socs = []
        for idx, soc in enumerate(self.socs):
            F = _as_matrix(soc.F, n, f"socs[{idx}].F")
            g = _as_vector(soc.g, F.shape[0], f"socs[{idx}].g")
            a = _as_vector(soc.a, n, f"socs[{idx}].a")
            b = float(soc.b)
            if not np.isfinite(b):
                raise ValueError(f"socs[{idx}].b: nonfinite")
            socs.append(SocRow(F=F, g=g, a=a, b=b))
        object.__setattr__(self, "socs", tuple(socs))
        for attr in ("lb", "ub"):
            bound = getattr(self, attr)
            if bound is not None:
                bound = np.asarray(bound, dtype=float)
                if bound.shape != (n,):
                    raise ValueError(f"{attr}: expected length {n}")
                object.__setattr__(self, attr, bound)

    @property
    def nvar(self) -> int:
        return self.c.shape[0]

    @property
    def is_lp(self) -> bool:
        return all(soc.F.shape[0] == 0 for soc in self.socs)


@dataclass
class SolveResult:
    status: str  # optimal | infeasible | unbounded | inaccurate | iteration_limit
    x: Optional[np.ndarray]
    obj: Optional[float]
    y_eq: Optional[np.ndarray] = None       # multipliers of A_eq x = b_eq
    z_in: Optional[np.ndarray] = None       # multipliers of A_in x <= b_in, >= 0
    z_soc: Optional[list] = None            # one vector per SOC row
    residuals: dict = field(default_factory=dict)
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass
class StandardForm:
    """Lowered data plus the index maps needed to split duals back out."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    G: np.ndarray
    h: np.ndarray
    dims_l: int                 # leading orthant rows of G
    dims_q: list                # SOC block sizes following the orthant
    n_in: int                   # how many leading orthant rows came from a_in
    bound_rows: int             # orthant rows appended for variable bounds
    soc_linear: list = field(default_factory=list)  # SOC indices lowered to linear rows


def canonicalize(p: ConicProgram) -> StandardForm:
    n = p.nvar
    use_sparse = sp.issparse(p.a_in) or sp.issparse(p.a_eq) or any(
        sp.issparse(soc.F) for soc in p.socs
    )
    g_rows = [p.a_in]
    h_parts = [p.b_in]
    n_in = p.a_in.shape[0]

    # finite variable bounds become one orthant block (+-e_j rows)
    bnd_cols, bnd_signs, bnd_rhs = [], [], []
    if p.lb is not None:
        for j, lo in enumerate(p.lb):
            if np.isfinite(lo):
                bnd_cols.append(j)
                bnd_signs.append(-1.0)
                bnd_rhs.append(-lo)
    if p.ub is not None:
        for j, hi in enumerate(p.ub):
            if np.isfinite(hi):
                bnd_cols.append(j)
                bnd_signs.append(1.0)
                bnd_rhs.append(hi)
    bound_rows = len(bnd_cols)
    if bound_rows:
        if use_sparse:
            block = sp.coo_matrix(
                (bnd_signs, (np.arange(bound_rows), bnd_cols)), shape=(bound_rows, n)
            )
        else:
            block = np.zeros((bound_rows, n))
            block[np.arange(bound_rows), bnd_cols] = bnd_signs
        g_rows.append(block)
        h_parts.append(np.asarray(bnd_rhs))

    # SOC rows with an empty F degrade to the linear row -a'x <= b.
    soc_linear = []
    real_socs = []
    for idx, soc in enumerate(p.socs):
        if soc.F.shape[0] == 0:
            g_rows.append(-np.asarray(soc.a)[None, :])
            h_parts.append(np.array([soc.b]))
            soc_linear.append(idx)
            bound_rows += 1
        else:
            real_socs.append(soc)

    dims_q = []
    for soc in real_socs:
        a_row = -np.asarray(soc.a)[None, :]
        if sp.issparse(soc.F):
            block = sp.vstack([sp.csr_matrix(a_row), -soc.F])
        else:
            block = np.vstack([a_row, -soc.F])
        g_rows.append(block)
        h_parts.append(np.concatenate([[soc.b], soc.g]))
        dims_q.append(soc.F.shape[0] + 1)

    if g_rows:
        if use_sparse:
            G = sp.vstack([sp.csr_matrix(m) for m in g_rows], format="csr")
        else:
            G = np.vstack(g_rows)
    else:
        G = np.zeros((0, n))
    h = np.concatenate(h_parts) if h_parts else np.zeros(0)
    dims_l = n_in + bound_rows

    return StandardForm(
        c=p.c.copy(),
        A=p.a_eq.copy(),
        b=p.b_eq.copy(),
        G=G,
        h=h,
        dims_l=dims_l,
        dims_q=dims_q,
        n_in=n_in,
        bound_rows=bound_rows,
        soc_linear=soc_linear,
    )
