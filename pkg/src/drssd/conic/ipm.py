"""Homogeneous self-dual primal-dual interior-point method for

    min c'x  s.t.  A x = b,  G x + s = h,  s in K,

with K = R_+^l x Q^{d_1} x ... x Q^{d_q} (orthant followed by second-order
cones).  Nesterov-Todd scaling, Mehrotra predictor-corrector with
sigma = (1 - alpha_aff)^3, Ruiz equilibration (5 sweeps), sparse LDL-style
factorization of the quasi-definite KKT system via SuperLU with static
regularization and iterative refinement.

The embedding tracks (x, y, z, s, tau, kappa); tau -> 0 with kappa > 0
yields infeasibility/unboundedness certificates instead of a silent failure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

STEP_DAMP = 0.99
RUIZ_SWEEPS = 5
KKT_REG = 1e-10
REFINE_ROUNDS = 2


class Cone:
    """Product cone R_+^l x Q^{d_1} x ... x Q^{d_q} acting on flat vectors."""

    def __init__(self, dims_l: int, dims_q: list):
        self.l = dims_l
        self.q = list(dims_q)
        self.dim = dims_l + sum(dims_q)
        self.deg = dims_l + len(dims_q)
        offs = dims_l
        self.q_slices = []
        for d in dims_q:
            self.q_slices.append(slice(offs, offs + d))
            offs += d

    def identity(self) -> np.ndarray:
        e = np.zeros(self.dim)
        e[: self.l] = 1.0
        for s in self.q_slices:
            e[s.start] = 1.0
        return e

    def min_eig(self, u: np.ndarray) -> float:
        vals = []
        if self.l:
            vals.append(np.min(u[: self.l]))
        for s in self.q_slices:
            blk = u[s]
            vals.append(blk[0] - np.linalg.norm(blk[1:]))
        return min(vals) if vals else np.inf

    def inside(self, u: np.ndarray, margin: float = 0.0) -> bool:
        return self.min_eig(u) > margin

    def jprod(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.empty(self.dim)
        out[: self.l] = u[: self.l] * v[: self.l]
        for s in self.q_slices:
            ub, vb = u[s], v[s]
            out[s.start] = ub @ vb
            out[s.start + 1 : s.stop] = ub[0] * vb[1:] + vb[0] * ub[1:]
        return out

    def jdiv(self, lmbda: np.ndarray, m: np.ndarray) -> np.ndarray:
        """Solve lmbda o u = m for u (arrow-matrix inverse per block)."""
        out = np.empty(self.dim)
        out[: self.l] = m[: self.l] / lmbda[: self.l]
        for s in self.q_slices:
            lb, mb = lmbda[s], m[s]
            l0, l1 = lb[0], lb[1:]
            det = l0 * l0 - l1 @ l1
            u0 = (l0 * mb[0] - l1 @ mb[1:]) / det
            out[s.start] = u0
            out[s.start + 1 : s.stop] = (mb[1:] - u0 * l1) / l0
        return out

    def step_to_boundary(self, u: np.ndarray, du: np.ndarray) -> float:
        """sup { t >= 0 : u + t' du in K for all t' in [0, t] }, u interior."""
        t = np.inf
        if self.l:
            neg = du[: self.l] < 0
            if np.any(neg):
                t = min(t, np.min(-u[: self.l][neg] / du[: self.l][neg]))
        for s in self.q_slices:
            ub, db = u[s], du[s]
            # exit where (u0+t d0)^2 - ||u1+t d1||^2 hits 0 with u0+t d0 >= 0
            a = db[0] ** 2 - db[1:] @ db[1:]
            b = 2.0 * (ub[0] * db[0] - ub[1:] @ db[1:])
            c = ub[0] ** 2 - ub[1:] @ ub[1:]
            cands = []
            if abs(a) > 1e-300:
                disc = b * b - 4.0 * a * c
                if disc >= 0.0:
                    r = np.sqrt(disc)
                    cands.extend([(-b - r) / (2.0 * a), (-b + r) / (2.0 * a)])
            elif abs(b) > 1e-300:
                cands.append(-c / b)
            if db[0] < 0.0:
                cands.append(-ub[0] / db[0])
            pos = [r for r in cands if r > 1e-14 and ub[0] + r * db[0] >= -1e-12]
            if pos:
                t = min(t, min(pos))
        return t


@dataclass
class Scaling:
    w_lin: np.ndarray           # orthant: w = sqrt(s/z)
    soc_wbar: list              # per SOC block: unit-hyperbolic point
    soc_eta: list               # per SOC block: scalar multiplier
    lmbda: np.ndarray           # scaled variable W z = W^{-1} s


def _soc_apply_h(wbar: np.ndarray, v: np.ndarray, flip: bool) -> np.ndarray:
    """Apply H(wbar) (flip=False) or H(J wbar) = H(wbar)^{-1} (flip=True)."""
    w0, w1 = wbar[0], (-wbar[1:] if flip else wbar[1:])
    out = np.empty_like(v)
    out[0] = w0 * v[0] + w1 @ v[1:]
    out[1:] = v[0] * w1 + v[1:] + (w1 @ v[1:]) / (1.0 + w0) * w1
    return out


def compute_scaling(cone: Cone, s: np.ndarray, z: np.ndarray) -> Scaling:
    w_lin = np.sqrt(s[: cone.l] / z[: cone.l]) if cone.l else np.zeros(0)
    wbars, etas = [], []
    lmbda = np.empty(cone.dim)
    lmbda[: cone.l] = np.sqrt(s[: cone.l] * z[: cone.l])
    for sl in cone.q_slices:
        sb, zb = s[sl], z[sl]
        ns = np.sqrt(sb[0] ** 2 - sb[1:] @ sb[1:])
        nz = np.sqrt(zb[0] ** 2 - zb[1:] @ zb[1:])
        sbar, zbar = sb / ns, zb / nz
        gamma = np.sqrt((1.0 + sbar @ zbar) / 2.0)
        jz = np.concatenate([[zbar[0]], -zbar[1:]])
        wbar = (sbar + jz) / (2.0 * gamma)
        eta = np.sqrt(ns / nz)
        wbars.append(wbar)
        etas.append(eta)
        zscaled = eta * _soc_apply_h(wbar, zb, flip=False)
        lmbda[sl] = zscaled
    return Scaling(w_lin=w_lin, soc_wbar=wbars, soc_eta=etas, lmbda=lmbda)


def apply_w(cone: Cone, sc: Scaling, v: np.ndarray, inverse: bool = False) -> np.ndarray:
    out = np.empty(cone.dim)
    if cone.l:
        out[: cone.l] = v[: cone.l] / sc.w_lin if inverse else v[: cone.l] * sc.w_lin
    for i, sl in enumerate(cone.q_slices):
        if inverse:
            out[sl] = _soc_apply_h(sc.soc_wbar[i], v[sl], flip=True) / sc.soc_eta[i]
        else:
            out[sl] = sc.soc_eta[i] * _soc_apply_h(sc.soc_wbar[i], v[sl], flip=False)
    return out


def w_squared_matrix(cone: Cone, sc: Scaling) -> sp.spmatrix:
    blocks = []
    if cone.l:
        blocks.append(sp.diags(sc.w_lin**2))
    for i, sl in enumerate(cone.q_slices):
        wbar, eta = sc.soc_wbar[i], sc.soc_eta[i]
        d = sl.stop - sl.start
        j = np.diag(np.concatenate([[1.0], -np.ones(d - 1)]))
        blocks.append(sp.csc_matrix(eta**2 * (2.0 * np.outer(wbar, wbar) - j)))
    if not blocks:
        return sp.csc_matrix((0, 0))
    return sp.block_diag(blocks, format="csc")


def _ruiz_equilibrate(A, b, G, h, c, cone: Cone):
    """Symmetric Ruiz scaling of [A; G] columns/rows; SOC row blocks share one
    factor so cone membership is preserved."""
    m, n = A.shape
    q = G.shape[0]
    dr_a = np.ones(m)
    dr_g = np.ones(q)
    dc = np.ones(n)
    A = sp.csr_matrix(A, copy=True)
    G = sp.csr_matrix(G, copy=True)
    for _ in range(RUIZ_SWEEPS):
        ra = _row_inf_norms(A)
        rg = _row_inf_norms(G)
        for sl in cone.q_slices:
            rg[sl] = rg[sl].max()
        ra[ra == 0] = 1.0
        rg[rg == 0] = 1.0
        sa, sg = 1.0 / np.sqrt(ra), 1.0 / np.sqrt(rg)
        A = sp.diags(sa) @ A
        G = sp.diags(sg) @ G
        dr_a *= sa
        dr_g *= sg
        cnorm = np.maximum(_col_inf_norms(A, n), _col_inf_norms(G, n))
        cnorm[cnorm == 0] = 1.0
        scn = 1.0 / np.sqrt(cnorm)
        A = A @ sp.diags(scn)
        G = G @ sp.diags(scn)
        dc *= scn
    return (
        A.tocsr(),
        b * dr_a,
        G.tocsr(),
        h * dr_g,
        c * dc,
        dr_a,
        dr_g,
        dc,
    )


def _row_inf_norms(M: sp.spmatrix) -> np.ndarray:
    out = np.zeros(M.shape[0])
    Mc = M.tocsr()
    if Mc.nnz:
        nzrows = np.flatnonzero(np.diff(Mc.indptr))
        out[nzrows] = np.maximum.reduceat(np.abs(Mc.data), Mc.indptr[nzrows])
    return out


def _col_inf_norms(M: sp.spmatrix, n: int) -> np.ndarray:
    if M.shape[0] == 0:
        return np.zeros(n)
    return _row_inf_norms(M.T.tocsr())


@dataclass
class HsdResult:
    status: str
    x: Optional[np.ndarray]
    y: Optional[np.ndarray]
    z: Optional[np.ndarray]
    s: Optional[np.ndarray]
    obj: Optional[float]
    residuals: dict
    iterations: int


class _KKT:
    """Regularized KKT solves with the orthant block eliminated first.

    The scaling for orthant rows is diagonal, so those z-rows reduce to
    z_l = D^{-1}(G_l x - r_l) and only an (n + m + soc)-sized system gets
    factored; this sidesteps the fill-in that direct LU on the full
    augmented system suffers when many rows share a column.  Refinement
    iterates against the full unregularized system, applied matrix-free.
    """

    def __init__(self, A: sp.spmatrix, G: sp.spmatrix, cone: Cone):
        self.A = sp.csc_matrix(A)
        G = sp.csr_matrix(G)
        self.G = sp.csc_matrix(G)
        self.Gl = sp.csc_matrix(G[: cone.l])
        self.GlT = sp.csc_matrix(self.Gl.T)
        self.Gq = sp.csc_matrix(G[cone.l :])
        self.n = A.shape[1]
        self.m = A.shape[0]
        self.q = G.shape[0]
        self.cone = cone

    def factor(self, sc: Optional[Scaling]):
        """Factor with NT scaling sc; None means W = I (initialization)."""
        n, m, l = self.n, self.m, self.cone.l
        qq = self.q - l
        self.sc = sc
        w_lin2 = np.ones(l) if sc is None else sc.w_lin**2
        self.dinv = 1.0 / (w_lin2 + KKT_REG)
        xx = KKT_REG * sp.identity(n, format="csc")
        if l:
            xx = (xx + self.GlT @ sp.diags(self.dinv) @ self.Gl).tocsc()
        blocks = [[xx]]
        if m:
            blocks[0].append(self.A.T)
        if qq:
            blocks[0].append(self.Gq.T)
        if m:
            row = [self.A, -KKT_REG * sp.identity(m)]
            if qq:
                row.append(None)
            blocks.append(row)
        if qq:
            wq_blocks = []
            for i, d in enumerate(self.cone.q):
                if sc is None:
                    wq_blocks.append(np.eye(d))
                else:
                    wbar, eta = sc.soc_wbar[i], sc.soc_eta[i]
                    j = np.diag(np.concatenate([[1.0], -np.ones(d - 1)]))
                    wq_blocks.append(eta**2 * (2.0 * np.outer(wbar, wbar) - j))
            wq = sp.block_diag(wq_blocks, format="csc") + KKT_REG * sp.identity(qq)
            row = [self.Gq]
            if m:
                row.append(None)
            row.append(-wq)
            blocks.append(row)
        K = sp.bmat(blocks, format="csc") if (len(blocks) > 1 or len(blocks[0]) > 1) else xx
        # quasi-definite: symmetric ordering with near-static pivoting keeps
        # the factor sparse; iterative refinement recovers the lost digits,
        # and solve() falls back to partial pivoting when it cannot
        self._K = K
        try:
            self.lu = spla.splu(
                K,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.1,
                options={"SymmetricMode": True},
            )
            self._robust = False
        except RuntimeError:
            try:
                self.lu = spla.splu(K)
            except RuntimeError:
                # exactly singular even with partial pivoting: escalate the
                # static regularization, signed to keep quasi-definiteness
                sgn = np.concatenate([np.ones(n), -np.ones(K.shape[0] - n)])
                self._K = (K + sp.diags(1e-6 * sgn)).tocsc()
                self.lu = spla.splu(self._K)
            self._robust = True

    def _w2_apply(self, z: np.ndarray) -> np.ndarray:
        if self.sc is None:
            return z.copy()
        return apply_w(self.cone, self.sc, apply_w(self.cone, self.sc, z))

    def _residual(self, rhs: np.ndarray, u: np.ndarray) -> np.ndarray:
        n, m = self.n, self.m
        x, y, z = u[:n], u[n : n + m], u[n + m :]
        r1 = rhs[:n] - (self.A.T @ y + self.G.T @ z)
        r2 = rhs[n : n + m] - self.A @ x
        r3 = rhs[n + m :] - (self.G @ x - self._w2_apply(z))
        return np.concatenate([r1, r2, r3])

    def _reduced_solve(self, rhs: np.ndarray) -> np.ndarray:
        n, m, l = self.n, self.m, self.cone.l
        rx = rhs[:n]
        ry = rhs[n : n + m]
        rl = rhs[n + m : n + m + l]
        rq = rhs[n + m + l :]
        top = rx + self.GlT @ (self.dinv * rl) if l else rx
        sol = self.lu.solve(np.concatenate([top, ry, rq]))
        x = sol[:n]
        y = sol[n : n + m]
        zq = sol[n + m :]
        zl = self.dinv * (self.Gl @ x - rl) if l else np.zeros(0)
        return np.concatenate([x, y, zl, zq])

    def _refine(self, rhs: np.ndarray, tol: float):
        x = self._reduced_solve(rhs)
        for _ in range(REFINE_ROUNDS):
            r = self._residual(rhs, x)
            if np.max(np.abs(r)) <= tol:
                return x, np.max(np.abs(r))
            x = x + self._reduced_solve(r)
        return x, np.max(np.abs(self._residual(rhs, x)))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        scale = max(1.0, np.max(np.abs(rhs)))
        x, res = self._refine(rhs, 1e-11 * scale)
        if res > 1e-8 * scale and not self._robust:
            # the cheap factor produced a direction too wrong to refine;
            # redo this iteration's factorization with partial pivoting
            try:
                self.lu = spla.splu(self._K)
            except RuntimeError:
                return x
            self._robust = True
            x2, res2 = self._refine(rhs, 1e-11 * scale)
            if res2 < res:
                x = x2
        return x


def solve_hsd(
    c: np.ndarray,
    A: sp.spmatrix,
    b: np.ndarray,
    G: sp.spmatrix,
    h: np.ndarray,
    dims_l: int,
    dims_q: list,
    feastol: float = 1e-8,
    gaptol: float = 1e-8,
    maxiter: int = 200,
) -> HsdResult:
    cone = Cone(dims_l, dims_q)
    n = c.shape[0]
    m = A.shape[0]
    q = G.shape[0]

    if q == 0:
        # no cone: plain equality-constrained LP; treat as degenerate
        raise ValueError("program has no inequality or cone rows; add bounds")

    A, b, G, h, c, dr_a, dr_g, dc = _ruiz_equilibrate(
        sp.csr_matrix(A), b, sp.csr_matrix(G), h, c, cone
    )

    resx0 = max(1.0, np.linalg.norm(c))
    resy0 = max(1.0, np.linalg.norm(b))
    resz0 = max(1.0, np.linalg.norm(h))

    kkt = _KKT(A, G, cone)
    e = cone.identity()

    def unscale(x, y, z, s):
        return (
            dc * x,
            dr_a * y,
            dr_g * z,
            s / dr_g,
        )

    # cold start from two least-squares-style solves with W = I
    try:
        kkt.factor(None)
        sol = kkt.solve(np.concatenate([np.zeros(n), b, h]))
        x = sol[:n]
        shat = -sol[n + m :]
        alpha = cone.min_eig(shat)
        s = shat if alpha > 0 else shat + (1.0 - alpha) * e
        sol = kkt.solve(np.concatenate([-c, np.zeros(m), np.zeros(q)]))
        y = sol[n : n + m]
        zhat = sol[n + m :]
        alpha = cone.min_eig(zhat)
        z = zhat if alpha > 0 else zhat + (1.0 - alpha) * e
    except RuntimeError:
        return HsdResult("inaccurate", None, None, None, None, None,
                         {"error": "initialization factorization failed"}, 0)
    tau, kappa = 1.0, 1.0

    best = None
    best_score = np.inf
    status = "iteration_limit"
    iters = 0

    for iteration in range(maxiter):
        iters = iteration
        rx = A.T @ y + G.T @ z + c * tau
        ry = A @ x - b * tau
        rz = G @ x + s - h * tau
        rtau = c @ x + b @ y + h @ z + kappa

        pcost = (c @ x) / tau
        dcost = -(b @ y + h @ z) / tau
        pres = max(
            np.linalg.norm(ry) / resy0,
            np.linalg.norm(rz) / resz0,
        ) / tau
        dres = np.linalg.norm(rx) / resx0 / tau
        gap = (s @ z) / tau**2
        relgap = abs(gap) / max(1.0, abs(pcost), abs(dcost))

        score = max(pres, dres, relgap)
        if score < best_score:
            best_score = score
            best = (x.copy(), y.copy(), z.copy(), s.copy(), tau, kappa,
                    pres, dres, relgap, pcost, dcost)

        if pres <= feastol and dres <= feastol and relgap <= gaptol:
            status = "optimal"
            break

        by_hz = b @ y + h @ z
        if by_hz < 0.0:
            pinfres = np.linalg.norm(A.T @ y + G.T @ z) / resx0 / (-by_hz)
            if pinfres <= feastol:
                status = "infeasible"
                break
        cx = c @ x
        if cx < 0.0:
            dinfres = max(
                np.linalg.norm(A @ x) / resy0,
                np.linalg.norm(G @ x + s) / resz0,
            ) / (-cx)
            if dinfres <= feastol:
                status = "unbounded"
                break

        try:
            sc = compute_scaling(cone, s, z)
        except (FloatingPointError, ValueError):
            status = "inaccurate"
            break
        lmbda = sc.lmbda
        mu = (s @ z + tau * kappa) / (cone.deg + 1)

        try:
            kkt.factor(sc)
        except RuntimeError:
            status = "inaccurate"
            break

        v = kkt.solve(np.concatenate([-c, b, h]))
        vx, vy, vz = v[:n], v[n : n + m], v[n + m :]
        denom = c @ vx + b @ vy + h @ vz - kappa / tau
        if not np.isfinite(denom) or abs(denom) < 1e-300:
            status = "inaccurate"
            break

        def direction(r_fac, m_s, m_kappa):
            sigma_s = cone.jdiv(lmbda, m_s)
            rhs = np.concatenate(
                [-r_fac * rx, -r_fac * ry, -r_fac * rz - apply_w(cone, sc, sigma_s)]
            )
            u = kkt.solve(rhs)
            ux, uy, uz = u[:n], u[n : n + m], u[n + m :]
            dtau = (
                -r_fac * rtau - m_kappa / tau - (c @ ux + b @ uy + h @ uz)
            ) / denom
            dx = ux + dtau * vx
            dy = uy + dtau * vy
            dz = uz + dtau * vz
            ds = apply_w(cone, sc, sigma_s) - apply_w(
                cone, sc, apply_w(cone, sc, dz)
            )
            dkappa = (m_kappa - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        # predictor
        m_s = -cone.jprod(lmbda, lmbda)
        dxa, dya, dza, dsa, dtaua, dkappaa = direction(1.0, m_s, -tau * kappa)
        t = min(
            cone.step_to_boundary(s, dsa),
            cone.step_to_boundary(z, dza),
            (-tau / dtaua) if dtaua < 0 else np.inf,
            (-kappa / dkappaa) if dkappaa < 0 else np.inf,
        )
        alpha_aff = min(1.0, t)
        sigma = (1.0 - alpha_aff) ** 3
        sigma = min(1.0, max(0.0, sigma))

        # corrector
        wdz = apply_w(cone, sc, dza)
        widsa = apply_w(cone, sc, dsa, inverse=True)
        m_s = -cone.jprod(lmbda, lmbda) - cone.jprod(wdz, widsa) + sigma * mu * e
        m_kappa = -tau * kappa - dtaua * dkappaa + sigma * mu
        dx, dy, dz, ds, dtau, dkappa = direction(1.0 - sigma, m_s, m_kappa)

        t = min(
            cone.step_to_boundary(s, ds),
            cone.step_to_boundary(z, dz),
            (-tau / dtau) if dtau < 0 else np.inf,
            (-kappa / dkappa) if dkappa < 0 else np.inf,
        )
        alpha = min(1.0, STEP_DAMP * t)
        if alpha <= 1e-13 or not np.isfinite(alpha):
            status = "inaccurate"
            break

        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau += alpha * dtau
        kappa += alpha * dkappa
        if tau <= 0 or kappa < 0 or not cone.inside(s) or not cone.inside(z):
            status = "inaccurate"
            iters = iteration + 1
            break
    else:
        iters = maxiter

    if status == "optimal":
        xs, ys, zs, ss = unscale(x / tau, y / tau, z / tau, s / tau)
        # objective is invariant under the diagonal scaling
        return HsdResult(
            "optimal", xs, ys, zs, ss, float(c @ (x / tau)),
            {"primal": pres, "dual": dres, "gap": relgap}, iteration,
        )
    if status == "infeasible":
        scale = -(b @ y + h @ z)
        xs, ys, zs, ss = unscale(np.zeros(n), y / scale, z / scale, np.zeros(q))
        return HsdResult(
            "infeasible", None, ys, zs, None, None,
            {"certificate": "b'y + h'z = -1, A'y + G'z ~ 0"}, iteration,
        )
    if status == "unbounded":
        scale = -(c @ x)
        xs, ys, zs, ss = unscale(x / scale, np.zeros(m), np.zeros(q), s / scale)
        return HsdResult(
            "unbounded", xs, None, None, ss,
            None, {"certificate": "c'x = -1, Ax ~ 0, Gx + s ~ 0"}, iteration,
        )

    # iteration limit or numerical breakdown: report the best iterate seen
    if best is not None:
        x, y, z, s, tau, kappa, pres, dres, relgap, pcost, dcost = best
        xs, ys, zs, ss = unscale(x / tau, y / tau, z / tau, s / tau)
        return HsdResult(
            status, xs, ys, zs, ss, pcost,
            {"primal": pres, "dual": dres, "gap": relgap}, iters,
        )
    return HsdResult(status, None, None, None, None, None, {}, iters)
