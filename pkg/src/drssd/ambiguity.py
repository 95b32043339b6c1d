"""Kantorovich (1-Wasserstein, Euclidean ground cost) machinery on finite
supports: the transport-metric LP between discrete distributions and the
dual worst-case expectation over a ball around the empirical distribution,

    sup { E_P[psi] : d_K(P, P_hat_N) <= eps, P supported on {xi_bar_j} }
      = min_{lambda >= 0} lambda eps
        + (1/N) sum_i max_j [ psi_j - lambda ||xi_bar_j - xi_hat_i|| ].

The inner maxima are upper envelopes of lines in lambda, so the outer
function is piecewise linear convex; it is minimized exactly by evaluating
at the envelope breakpoints (plus lambda = 0) rather than by line search.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conic import ConicProgram, solve
from .model import WassersteinBall

ATOM_MATCH_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    atoms: np.ndarray    # (M, n)
    weights: np.ndarray  # (M,), nonnegative, sums to 1

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if atoms.shape[0] != weights.shape[0]:
            raise ValueError("atoms and weights length differ")
        if np.any(weights < -1e-15):
            raise ValueError("negative weight")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 within 1e-12")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", np.maximum(weights, 0.0))


def kantorovich_discrete(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    """Optimal value of min sum_ij pi_ij ||a_i - b_j|| with marginals p, q."""
    if p.atoms.shape[1] != q.atoms.shape[1]:
        raise ValueError("distributions live in different dimensions")
    mp, mq = p.atoms.shape[0], q.atoms.shape[0]
    cost = np.linalg.norm(p.atoms[:, None, :] - q.atoms[None, :, :], axis=2)
    nvar = mp * mq
    a_eq = np.zeros((mp + mq - 1, nvar))
    b_eq = np.zeros(mp + mq - 1)
    for i in range(mp):
        a_eq[i, i * mq : (i + 1) * mq] = 1.0
        b_eq[i] = p.weights[i]
    # last column-sum row is implied by the others (both marginals sum to 1)
    for j in range(mq - 1):
        a_eq[mp + j, j::mq] = 1.0
        b_eq[mp + j] = q.weights[j]
    prog = ConicProgram(c=cost.ravel(), a_eq=a_eq, b_eq=b_eq, lb=np.zeros(nvar))
    res = solve(prog)
    if not res.optimal:
        raise RuntimeError(f"transport LP solve failed: {res.status}")
    return max(0.0, float(res.obj))


def match_samples_to_support(
    samples: np.ndarray, support: np.ndarray, indices=None
) -> np.ndarray:
    """Index of each ball sample inside the support list; exact indices when
    supplied by the caller, else nearest atom within 1e-12."""
    if indices is not None:
        idx = np.asarray(indices, dtype=int)
        if idx.shape[0] != samples.shape[0]:
            raise ValueError("sample index list has wrong length")
        err = np.linalg.norm(samples - support[idx], axis=1)
        if np.any(err > ATOM_MATCH_TOL):
            raise ValueError("provided sample indices do not match the support")
        return idx
    d = np.linalg.norm(samples[:, None, :] - support[None, :, :], axis=2)
    idx = np.argmin(d, axis=1)
    if np.any(d[np.arange(len(idx)), idx] > ATOM_MATCH_TOL):
        raise ValueError("ball sample missing from the support list")
    return idx


def _envelope_breakpoints(psi: np.ndarray, dists: np.ndarray) -> np.ndarray:
    """Breakpoints (lambda values) of lambda -> max_j (psi_j - lambda d_j).

    Lines are points (slope, intercept) = (-d_j, psi_j); the active set over
    increasing lambda walks the upper convex hull from the max-intercept
    vertex to the max-slope vertex.
    """
    slopes = -dists
    order = np.lexsort((psi, slopes))
    m = slopes[order]
    c = psi[order]
    # dedupe equal slopes, keeping the largest intercept (sorted ascending)
    keep_m, keep_c = [], []
    for mi, ci in zip(m, c):
        if keep_m and mi - keep_m[-1] <= 0.0:
            keep_c[-1] = max(keep_c[-1], ci)
        else:
            keep_m.append(mi)
            keep_c.append(ci)
    m = np.asarray(keep_m)
    c = np.asarray(keep_c)
    hull = []  # indices into (m, c) forming the upper hull
    for i in range(len(m)):
        while len(hull) >= 2:
            i1, i2 = hull[-2], hull[-1]
            # drop i2 if it lies on/below the segment i1 -> i
            cross = (m[i2] - m[i1]) * (c[i] - c[i1]) - (m[i] - m[i1]) * (c[i2] - c[i1])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    bps = []
    for a, b in zip(hull[:-1], hull[1:]):
        lam = (c[a] - c[b]) / (m[b] - m[a])
        if lam > 0:
            bps.append(lam)
    return np.asarray(bps)


def worst_case_expectation_discrete(
    psi_values: np.ndarray,
    support: np.ndarray,
    ball: WassersteinBall,
    sample_indices=None,
) -> tuple[float, float]:
    """Exact worst-case expectation over the ball and the minimizing lambda."""
    psi = np.atleast_1d(np.asarray(psi_values, dtype=float))
    support = np.atleast_2d(np.asarray(support, dtype=float))
    if psi.shape[0] != support.shape[0]:
        raise ValueError("psi_values and support length differ")
    match_samples_to_support(ball.samples, support, sample_indices)
    eps = ball.radius
    n_samp = ball.n_samples
    dists = np.linalg.norm(support[None, :, :] - ball.samples[:, None, :], axis=2)

    cands = [np.zeros(1)]
    for i in range(n_samp):
        cands.append(_envelope_breakpoints(psi, dists[i]))
    lam = np.unique(np.concatenate(cands))
    lam = lam[lam >= 0.0]

    # f(lambda) on all candidates, chunked to bound memory
    vals = np.empty(lam.shape[0])
    chunk = max(1, int(2e6 / max(1, n_samp * support.shape[0])))
    for lo in range(0, lam.shape[0], chunk):
        ls = lam[lo : lo + chunk]
        inner = psi[None, None, :] - ls[:, None, None] * dists[None, :, :]
        vals[lo : lo + chunk] = ls * eps + inner.max(axis=2).mean(axis=1)
    best = int(np.argmin(vals))
    return float(vals[best]), float(lam[best])
