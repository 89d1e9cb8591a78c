"""Conformal submanifold engine: canonical lift, moving frame, invariants.

For an umbilic-free chart f the canonical lift is Y = rho (1, f) with
rho^2 = |traceless II|^2 / 4, which makes the induced (Moebius) metric
g = <dY, dY> = rho^2 df.df conformally invariant.  Along g-orthonormal
frames {E_i} the moving frame {Y, N, Y_i, xi_r} obeys structure equations
whose coefficients are the Blaschke tensor A, the conformal second
fundamental form B, the Moebius form C and the connection forms omega,
theta.  Everything pointwise here is computed in exact jet arithmetic; the
frame vector N has the closed form

    N = -(1/rho) [ (1+s)/2 (1, f) + (0, grad log rho + H - f) ],
    s = |grad log rho|^2 + |H|^2,

(gradient with respect to the induced metric), equivalent to the usual
Laplacian-based normalisation; the test-suite cross-checks the two routes.

Derivative-level quantities come in two flavours: exact jet fields where the
order budget allows (B and C covariant derivatives, curvature tensors), and
parallel-transport-corrected stencils for the integrability residuals, which
converge at O(h^2) by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ddvv import CanonicalFit, fit_shape_operators
from .errors import NotWintgenError, SingularInvariantError, UmbilicError
from .jets import Chart, Jet, JetSpace, jv_dot, jv_values
from .surface import UMBILIC_TOL, fundamental_forms

L_TOL = 1e-7


def _unit_alpha(m, a):
    return tuple(1 if k == a else 0 for k in range(m))


def _lorentz_dot_values(a, b):
    return float(np.dot(a, b) - 2.0 * a[0] * b[0])


def _jv_lorentz(u, v):
    """Lorentz pairing of jet vectors (index 0 timelike)."""
    acc = -(u[0] * v[0])
    for a, b in zip(u[1:], v[1:]):
        acc = acc + a * b
    return acc


class FrameContext:
    """All jet-level fields of the moving frame at one chart point.

    The deterministic gauge: tangent frame by Gram-Schmidt on the coordinate
    vectors in their natural order, normals by largest-residual pivoting
    (pivots can be frozen across stencil points via ``pivot_order``).
    """

    def __init__(self, chart: Chart, u, order: int = 4, pivot_order=None):
        self.chart = chart
        self.u = np.asarray(u, dtype=float)
        m = chart.dim_m
        amb = chart.ambient_dim
        self.m, self.p, self.amb = m, chart.codim_p, amb
        self.n_lorentz = amb + 1

        fj = chart.jet(u, order)
        space = fj[0].space
        one = Jet.constant(space, 1.0)
        self.fj = fj

        # metric of the chart
        dfj = [[c.derivative(a) for c in fj] for a in range(m)]
        self.dfj = dfj
        I = [[jv_dot(dfj[a], dfj[b]) for b in range(m)] for a in range(m)]
        self.I = I
        self.Iinv = _jet_matrix_inverse(I)

        # orthonormal tangent frame in coordinate components
        coeff = []
        for i in range(m):
            v = [Jet.constant(space, 1.0 if a == i else 0.0) for a in range(m)]
            for c in coeff:
                pr = _metric_pair(v, c, I)
                v = [va - pr * ca for va, ca in zip(v, c)]
            nrm = _metric_pair(v, v, I).sqrt()
            inv = nrm.reciprocal()
            coeff.append([va * inv for va in v])
        self.tangent_coeff = coeff                       # e_i = sum coeff[i][a] d_a
        self.e_frame = [_contract(coeff[i], dfj) for i in range(m)]

        # deterministic normal completion
        f_vals = jv_values(fj)
        e_vals = [jv_values(e) for e in self.e_frame]
        span_jets = [fj, *self.e_frame]
        span_vals = [f_vals, *e_vals]
        self.normal_pivots = []
        normals = []
        if pivot_order is None:
            pivot_order = _choose_pivots(span_vals, amb, self.p)
        self.normal_pivots = list(pivot_order)
        basis = list(span_jets)
        for idx in pivot_order:
            v = [Jet.constant(space, 1.0 if c == idx else 0.0)
                 for c in range(amb)]
            for _ in range(2):
                for b in basis:
                    pr = jv_dot(b, v)
                    v = [va - pr * ba for va, ba in zip(v, b)]
            nrm = jv_dot(v, v).sqrt()
            inv = nrm.reciprocal()
            v = [va * inv for va in v]
            basis.append(v)
            normals.append(v)
        self.n_frame = normals

        # second derivatives and their sphere-normal projections
        d2 = [[[dfj[a][c].derivative(b) for c in range(amb)]
               for b in range(m)] for a in range(m)]
        w = [[None] * m for _ in range(m)]
        for a in range(m):
            for b in range(m):
                vec = d2[a][b]
                pr_f = jv_dot(fj, vec)
                vec = [vc - pr_f * fc for vc, fc in zip(vec, fj)]
                for e in self.e_frame:
                    pr = jv_dot(e, vec)
                    vec = [vc - pr * ec for vc, ec in zip(vec, e)]
                w[a][b] = vec
        self.IIvec = w

        # conformal factor
        II_sq = None
        H_vec = None
        for a in range(m):
            for b in range(m):
                for c in range(m):
                    for d in range(m):
                        t = self.Iinv[a][c] * self.Iinv[b][d] * jv_dot(w[a][b], w[c][d])
                        II_sq = t if II_sq is None else II_sq + t
        for a in range(m):
            for b in range(m):
                t = [self.Iinv[a][b] * comp for comp in w[a][b]]
                H_vec = t if H_vec is None else [x + y for x, y in zip(H_vec, t)]
        H_vec = [comp * (1.0 / m) for comp in H_vec]
        self.H_vec = H_vec
        H_sq = jv_dot(H_vec, H_vec)
        self.rho_sq = (II_sq - m * H_sq) * 0.25
        if self.rho_sq.value < UMBILIC_TOL:
            raise UmbilicError(
                f"umbilic point: rho^2 = {self.rho_sq.value:.3e}",
                rho_sq=float(self.rho_sq.value))
        self.rho = self.rho_sq.sqrt()

        # canonical lift and the Moebius metric
        self.Y = [self.rho * one] + [self.rho * c for c in fj]
        self.g = [[self.rho_sq * I[a][b] for b in range(m)] for a in range(m)]
        self.ginv = _jet_matrix_inverse(self.g)

        # closed form frame vector N
        drho = [self.rho.derivative(a) for a in range(m)]
        inv_rho = self.rho.reciprocal()
        sigma = [dr * inv_rho for dr in drho]     # d_a log rho
        grad = None
        for a in range(m):
            for b in range(m):
                t = [self.Iinv[a][b] * sigma[b] * c for c in dfj[a]]
                grad = t if grad is None else [x + y for x, y in zip(grad, t)]
        self.grad_sigma = grad
        s = jv_dot(grad, grad) + H_sq
        half = (s + 1.0) * 0.5
        N0 = -(inv_rho * half)
        Nrest = [-(inv_rho * (half * fc + gc + hc - fc))
                 for fc, gc, hc in zip(fj, grad, H_vec)]
        self.N = [N0] + Nrest

        # Moebius-orthonormal tangent frame and its Lorentz lift
        self.E_coeff = [[ci * inv_rho for ci in coeff[i]] for i in range(m)]
        dY = [[c.derivative(a) for c in self.Y] for a in range(m)]
        self.dY = dY
        self.Y_tan = [_contract(self.E_coeff[i], dY) for i in range(m)]

        # normal sphere frame xi_r = (H^r, n_r + H^r f)
        self.xi = []
        for nr in normals:
            Hr = jv_dot(H_vec, nr)
            self.xi.append([Hr] + [nc + Hr * fc for nc, fc in zip(nr, fj)])

        self._tensors()

    # -- pointwise tensors --------------------------------------------------
    def _tensors(self):
        m, p = self.m, self.p
        dN = [[c.derivative(a) for c in self.N] for a in range(m)]
        EN = [_values(_contract_values(self.E_coeff, dN, i)) for i in range(m)]
        Yt_vals = [jv_values(y) for y in self.Y_tan]
        xi_vals = [jv_values(x) for x in self.xi]
        self.Y_vals = jv_values(self.Y)
        self.N_vals = jv_values(self.N)
        self.Yt_vals = Yt_vals
        self.xi_vals = xi_vals

        self.A = np.array([[_lorentz_dot_values(EN[i], Yt_vals[j])
                            for j in range(m)] for i in range(m)])
        self.C = np.array([[_lorentz_dot_values(EN[i], xi_vals[r])
                            for i in range(m)] for r in range(p)])

        dYt = [[[c.derivative(a) for c in self.Y_tan[i]] for a in range(m)]
               for i in range(m)]
        EYt = [[_values(_contract_values(self.E_coeff, dYt[i], j))
                for j in range(m)] for i in range(m)]
        self.B_pairing = np.array(
            [[[_lorentz_dot_values(EYt[i][j], xi_vals[r]) for j in range(m)]
              for i in range(m)] for r in range(p)])
        self.omega = np.array(
            [[[_lorentz_dot_values(EYt[i][k], Yt_vals[j]) for k in range(m)]
              for j in range(m)] for i in range(m)])

        # theta kept as jet fields: they are one order deeper than omega
        dxi = [[[c.derivative(a) for c in self.xi[r]] for a in range(m)]
               for r in range(p)]
        self.theta_field = [[None] * p for _ in range(p)]
        for r in range(p):
            for s in range(p):
                row = []
                for i in range(m):
                    Exi = _contract(self.E_coeff[i],
                                    [dxi[r][a] for a in range(m)])
                    row.append(_jv_lorentz(Exi, self.xi[s]))
                self.theta_field[r][s] = row
        self.theta = np.array(
            [[[self.theta_field[r][s][i].value for i in range(m)]
              for s in range(p)] for r in range(p)])

        # algebraic B field (traceless second form over rho), exact to order 2
        h_frame = [[[None] * m for _ in range(m)] for _ in range(p)]
        for r in range(p):
            for i in range(m):
                for j in range(m):
                    acc = None
                    for a in range(self.m):
                        for b in range(self.m):
                            t = (self.tangent_coeff[i][a]
                                 * self.tangent_coeff[j][b]
                                 * jv_dot(self.IIvec[a][b], self.n_frame[r]))
                            acc = t if acc is None else acc + t
                    h_frame[r][i][j] = acc
        inv_rho = self.rho.reciprocal()
        Hr = [jv_dot(self.H_vec, self.n_frame[r]) for r in range(p)]
        self.B_field = [[[None] * m for _ in range(m)] for _ in range(p)]
        for r in range(p):
            for i in range(m):
                for j in range(m):
                    t = h_frame[r][i][j]
                    if i == j:
                        t = t - Hr[r]
                    self.B_field[r][i][j] = t * inv_rho
        self.B = np.array([[[self.B_field[r][i][j].value for j in range(m)]
                            for i in range(m)] for r in range(p)])

        # C field, one derivative spare: C^r_i = -<E_i xi_r, N>
        self.C_field = [[None] * m for _ in range(p)]
        for r in range(p):
            for i in range(m):
                Exi = _contract(self.E_coeff[i], [dxi[r][a] for a in range(m)])
                self.C_field[r][i] = -_jv_lorentz(Exi, self.N)

        # frame coefficient fields for brackets and exact derivatives
        self.Ec_vals = np.array([[c.value for c in row] for row in self.E_coeff])
        self.Ec_inv = np.linalg.inv(self.Ec_vals)

    # -- exact covariant derivatives -----------------------------------------
    def directional(self, jet_field, i):
        """E_i derivative of a scalar jet field (exact value)."""
        return float(np.real_if_close(sum(
            self.Ec_vals[i][a] * jet_field.derivative(a).value
            for a in range(self.m))))

    def covariant_B(self) -> np.ndarray:
        """Exact B^r_{ij,k} from the algebraic jet field."""
        m, p = self.m, self.p
        out = np.zeros((p, m, m, m))
        for r in range(p):
            for i in range(m):
                for j in range(m):
                    for k in range(m):
                        val = self.directional(self.B_field[r][i][j], k)
                        val -= sum(self.omega[i][l][k] * self.B[r][l][j]
                                   for l in range(m))
                        val -= sum(self.omega[j][l][k] * self.B[r][i][l]
                                   for l in range(m))
                        val += sum(self.theta[s][r][k] * self.B[s][i][j]
                                   for s in range(p))
                        out[r, i, j, k] = val
        return out

    def covariant_C(self) -> np.ndarray:
        """Exact C^r_{i,j}."""
        m, p = self.m, self.p
        out = np.zeros((p, m, m))
        for r in range(p):
            for i in range(m):
                for j in range(m):
                    val = self.directional(self.C_field[r][i], j)
                    val -= sum(self.omega[i][l][j] * self.C[r][l]
                               for l in range(m))
                    val += sum(self.theta[s][r][j] * self.C[s][i]
                               for s in range(p))
                    out[r, i, j] = val
        return out

    def riemann(self) -> np.ndarray:
        """Frame components R_{ijkl} = <R(E_k, E_l) E_j, E_i> of the Moebius
        metric, from exact coordinate Christoffel jets."""
        m = self.m
        dg = [[[self.g[a][b].derivative(c) for b in range(m)] for a in range(m)]
              for c in range(m)]
        Gam = [[[None] * m for _ in range(m)] for _ in range(m)]
        for c in range(m):
            for a in range(m):
                for b in range(m):
                    acc = None
                    for d in range(m):
                        t = self.ginv[c][d] * (dg[a][d][b] + dg[b][d][a]
                                               - dg[d][a][b])
                        acc = t if acc is None else acc + t
                    Gam[c][a][b] = acc * 0.5
        g_vals = np.array([[self.g[a][b].value for b in range(m)]
                           for a in range(m)])
        Gv = np.array([[[Gam[c][a][b].value for b in range(m)]
                        for a in range(m)] for c in range(m)])
        dG = np.array([[[[Gam[d][b][c].derivative(a).value for c in range(m)]
                         for b in range(m)] for a in range(m)]
                       for d in range(m)])
        # R^d_{c ab} = d_a Gam^d_{bc} - d_b Gam^d_{ac} + Gam Gam - Gam Gam
        Rup = (np.einsum("dabc->dcab", dG) - np.einsum("dbac->dcab", dG)
               + np.einsum("dae,ebc->dcab", Gv, Gv)
               - np.einsum("dbe,eac->dcab", Gv, Gv))
        Rdown = np.einsum("ed,dcab->ecab", g_vals, Rup)
        E = self.Ec_vals
        return np.einsum("ie,jc,ka,lb,ecab->ijkl", E, E, E, E, Rdown)

    def normal_curvature(self) -> np.ndarray:
        """R^perp_{rs ij} from exact derivatives of the theta field."""
        m, p = self.m, self.p
        # Lie brackets of the frame fields, in frame components
        beta = np.zeros((m, m, m))
        for k in range(m):
            for l in range(m):
                coord = np.array([
                    sum(self.Ec_vals[k][b]
                        * self.E_coeff[l][a].derivative(b).value
                        - self.Ec_vals[l][b]
                        * self.E_coeff[k][a].derivative(b).value
                        for b in range(m)) for a in range(m)])
                beta[k][l] = coord @ self.Ec_inv
        out = np.zeros((p, p, m, m))
        for r in range(p):
            for s in range(p):
                for i in range(m):
                    for j in range(m):
                        d = (self.directional(self.theta_field[r][s][j], i)
                             - self.directional(self.theta_field[r][s][i], j)
                             - sum(beta[i][j][c] * self.theta[r][s][c]
                                   for c in range(m)))
                        wedge = sum(self.theta[r][t][i] * self.theta[t][s][j]
                                    - self.theta[r][t][j] * self.theta[t][s][i]
                                    for t in range(p))
                        out[r, s, i, j] = -(d - wedge)
        return out


def _metric_pair(v, w, I):
    acc = None
    for a in range(len(v)):
        for b in range(len(w)):
            t = v[a] * I[a][b] * w[b]
            acc = t if acc is None else acc + t
    return acc


def _contract(coeffs, rows):
    """sum_a coeffs[a] * rows[a] for jet vectors rows[a]."""
    out = None
    for c, row in zip(coeffs, rows):
        t = [c * x for x in row]
        out = t if out is None else [x + y for x, y in zip(out, t)]
    return out


def _contract_values(E_coeff, rows, i):
    ncomp = len(rows[0])
    out = np.zeros(ncomp)
    for a, row in enumerate(rows):
        out = out + E_coeff[i][a].value * np.array([x.value for x in row])
    return out


def _values(arr):
    return np.asarray(arr, dtype=float)


def _jet_matrix_inverse(M):
    n = len(M)
    space = M[0][0].space
    A = [[M[i][j] for j in range(n)] for i in range(n)]
    E = [[Jet.constant(space, 1.0 if i == j else 0.0) for j in range(n)]
         for i in range(n)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(A[r][col].value))
        A[col], A[piv] = A[piv], A[col]
        E[col], E[piv] = E[piv], E[col]
        inv = A[col][col].reciprocal()
        A[col] = [x * inv for x in A[col]]
        E[col] = [x * inv for x in E[col]]
        for r in range(n):
            if r == col:
                continue
            fac = A[r][col]
            A[r] = [x - fac * y for x, y in zip(A[r], A[col])]
            E[r] = [x - fac * y for x, y in zip(E[r], E[col])]
    return E


def _choose_pivots(span_vals, amb, p):
    basis = [v / np.linalg.norm(v) for v in span_vals]
    pivots = []
    for _ in range(p):
        best, bidx, bvec = -1.0, None, None
        for idx in range(amb):
            if idx in pivots:
                continue
            v = np.zeros(amb)
            v[idx] = 1.0
            for b in basis:
                v = v - np.dot(b, v) * b
            nv = np.linalg.norm(v)
            if nv > best + 1e-15:
                best, bidx, bvec = nv, idx, v
        pivots.append(bidx)
        basis.append(bvec / np.linalg.norm(bvec))
    return pivots


# ---------------------------------------------------------------------------
# public data types and operations

@dataclass
class MoebiusFrame:
    u: np.ndarray
    rho: float
    Y: np.ndarray
    N: np.ndarray
    Y_tangent: np.ndarray        # m x (m+p+2)
    xi: np.ndarray               # p x (m+p+2)
    A: np.ndarray                # Blaschke tensor, m x m
    B: np.ndarray                # p x m x m
    C: np.ndarray                # Moebius form, p x m
    omega: np.ndarray            # omega[i][j][k] = omega_ij(E_k)
    theta: np.ndarray            # theta[r][s][i] = theta_rs(E_i)
    context: FrameContext = field(repr=False, default=None)

    @property
    def Phi(self) -> np.ndarray:
        return self.C

    @property
    def B_sq(self) -> float:
        return float(np.sum(self.B ** 2))

    @property
    def Phi_sq(self) -> float:
        return float(np.sum(self.C ** 2))

    @property
    def trace_A(self) -> float:
        return float(np.trace(self.A))

    def full_frame_gram(self) -> np.ndarray:
        rows = np.vstack([self.Y[None, :], self.N[None, :],
                          self.Y_tangent, self.xi])
        sgn = np.ones(rows.shape[1])
        sgn[0] = -1.0
        return (rows * sgn) @ rows.T


def canonical_lift(pg, jet=None):
    """(Y, rho) of the canonical lift from classical point data."""
    if pg.umbilic:
        raise UmbilicError(f"umbilic point: rho^2 = {pg.rho_sq:.3e}",
                           rho_sq=pg.rho_sq)
    rho = float(np.sqrt(pg.rho_sq))
    f = pg.f if jet is None else jet.value
    return rho * np.concatenate(([1.0], f)), rho


def build_frame(chart: Chart, u, pivot_order=None) -> MoebiusFrame:
    """Moving frame and tensors at ``u`` (deterministic gauge)."""
    ctx = FrameContext(chart, u, order=4, pivot_order=pivot_order)
    return MoebiusFrame(
        u=ctx.u, rho=float(ctx.rho.value), Y=ctx.Y_vals, N=ctx.N_vals,
        Y_tangent=np.array(ctx.Yt_vals), xi=np.array(ctx.xi_vals),
        A=ctx.A, B=ctx.B, C=ctx.C, omega=ctx.omega, theta=ctx.theta,
        context=ctx)


def laplacian_lift(ctx: FrameContext) -> np.ndarray:
    """Delta_g Y at the point, from coordinate Christoffels of g (used to
    cross-check the closed form of N)."""
    m = ctx.m
    dg = [[[ctx.g[a][b].derivative(c) for b in range(m)] for a in range(m)]
          for c in range(m)]
    lap = np.zeros(ctx.n_lorentz)
    for a in range(m):
        for b in range(m):
            gin = ctx.ginv[a][b].value
            for comp in range(ctx.n_lorentz):
                lap[comp] += gin * ctx.dY[a][comp].derivative(b).value
            for c in range(m):
                Gam = 0.5 * sum(
                    ctx.ginv[c][d].value * (dg[a][d][b].value + dg[b][d][a].value
                                            - dg[d][a][b].value)
                    for d in range(m))
                for comp in range(ctx.n_lorentz):
                    lap[comp] -= gin * Gam * ctx.dY[c][comp].value
    return lap


# ---------------------------------------------------------------------------
# integrability residuals (stencil realisation, O(h^2))

def integrability_residuals(chart: Chart, u, h: float = 1e-3) -> dict:
    """Residuals of the five integrability conditions of the structure
    equations, with all tensor derivatives taken by parallel-transport
    corrected central stencils of step ``h``."""
    u = np.asarray(u, dtype=float)
    center = FrameContext(chart, u, order=4)
    m, p = center.m, center.p
    pivots = center.normal_pivots

    plus, minus = [], []
    for a in range(m):
        du = np.zeros(m)
        du[a] = h
        plus.append(FrameContext(chart, u + du, order=4, pivot_order=pivots))
        minus.append(FrameContext(chart, u - du, order=4, pivot_order=pivots))

    def coord_diff(attr):
        return [(getattr(plus[a], attr) - getattr(minus[a], attr)) / (2 * h)
                for a in range(m)]

    E = center.Ec_vals

    def frame_diff(darr):
        return np.einsum("ka,a...->k...", E, np.array(darr))

    dA = frame_diff(coord_diff("A"))          # dA[k][i][j] = E_k(A_ij)
    dB = frame_diff(coord_diff("B"))
    dC = frame_diff(coord_diff("C"))
    dOm = frame_diff(coord_diff("omega"))     # E_k(omega_ij(E_l))
    dTh = frame_diff(coord_diff("theta"))

    A, B, C = center.A, center.B, center.C
    om, th = center.omega, center.theta

    A_cov = np.zeros((m, m, m))
    for i in range(m):
        for j in range(m):
            for k in range(m):
                A_cov[i, j, k] = (dA[k][i, j]
                                  - sum(om[i][l][k] * A[l, j] for l in range(m))
                                  - sum(om[j][l][k] * A[i, l] for l in range(m)))
    B_cov = np.zeros((p, m, m, m))
    for r in range(p):
        for i in range(m):
            for j in range(m):
                for k in range(m):
                    B_cov[r, i, j, k] = (
                        dB[k][r, i, j]
                        - sum(om[i][l][k] * B[r, l, j] for l in range(m))
                        - sum(om[j][l][k] * B[r, i, l] for l in range(m))
                        + sum(th[s][r][k] * B[s, i, j] for s in range(p)))
    C_cov = np.zeros((p, m, m))
    for r in range(p):
        for i in range(m):
            for j in range(m):
                C_cov[r, i, j] = (dC[j][r, i]
                                  - sum(om[i][l][j] * C[r, l] for l in range(m))
                                  + sum(th[s][r][j] * C[s, i] for s in range(p)))

    # brackets in frame components (exact from the frame coefficient jets)
    beta = np.zeros((m, m, m))
    for k in range(m):
        for l in range(m):
            coord = np.array([
                sum(E[k][b] * center.E_coeff[l][a].derivative(b).value
                    - E[l][b] * center.E_coeff[k][a].derivative(b).value
                    for b in range(m)) for a in range(m)])
            beta[k][l] = coord @ center.Ec_inv

    R = np.zeros((m, m, m, m))
    for i in range(m):
        for j in range(m):
            for k in range(m):
                for l in range(m):
                    d = (dOm[k][i, j, l] - dOm[l][i, j, k]
                         - sum(beta[k][l][c] * om[i][j][c] for c in range(m)))
                    wedge = sum(om[i][t][k] * om[t][j][l]
                                - om[i][t][l] * om[t][j][k] for t in range(m))
                    R[i, j, k, l] = -(d - wedge)
    Rp = np.zeros((p, p, m, m))
    for r in range(p):
        for s in range(p):
            for i in range(m):
                for j in range(m):
                    d = (dTh[i][r, s, j] - dTh[j][r, s, i]
                         - sum(beta[i][j][c] * th[r][s][c] for c in range(m)))
                    wedge = sum(th[r][t][i] * th[t][s][j]
                                - th[r][t][j] * th[t][s][i] for t in range(p))
                    Rp[r, s, i, j] = -(d - wedge)

    return equation_residuals(A, B, C, A_cov, B_cov, C_cov, R, Rp) | {"h": h}


def equation_residuals(A, B, C, A_cov, B_cov, C_cov, R, Rp) -> dict:
    """Max-abs residual of each integrability condition from assembled data."""
    p, m, _ = B.shape
    delta = np.eye(m)
    r1 = A_cov - np.transpose(A_cov, (0, 2, 1)) - (
        np.einsum("rik,rj->ijk", B, C) - np.einsum("rij,rk->ijk", B, C))
    r2 = C_cov - np.transpose(C_cov, (0, 2, 1)) - (
        np.einsum("rik,kj->rij", B, A) - np.einsum("rjk,ki->rij", B, A))
    r3 = B_cov - np.transpose(B_cov, (0, 1, 3, 2)) - (
        np.einsum("ij,rk->rijk", delta, C) - np.einsum("ik,rj->rijk", delta, C))
    r4 = R - (np.einsum("rik,rjl->ijkl", B, B) - np.einsum("ril,rjk->ijkl", B, B)
              + np.einsum("ik,jl->ijkl", delta, A)
              + np.einsum("jl,ik->ijkl", delta, A)
              - np.einsum("il,jk->ijkl", delta, A)
              - np.einsum("jk,il->ijkl", delta, A))
    r5 = Rp - (np.einsum("rik,skj->rsij", B, B) - np.einsum("sik,rkj->rsij", B, B))
    return {"equa1": float(np.abs(r1).max()),
            "equa2": float(np.abs(r2).max()),
            "equa3": float(np.abs(r3).max()),
            "equa4": float(np.abs(r4).max()),
            "equa5": float(np.abs(r5).max())}


# ---------------------------------------------------------------------------
# canonical gauge and the Wintgen invariants

@dataclass
class WintgenInvariants:
    """Invariants of a Wintgen ideal point in the canonical gauge.

    ``L_a``/``S_alpha``/``T_alpha`` are empty for m = 2 / p = 2; ``eta3``,
    ``Ytilde``, ``F`` and ``G`` need L != 0 and stay None otherwise.
    ``residuals`` reports the connection-form identities measured by the
    aligned canonical stencil (O(h^2)) and the exact C-relations.
    """

    u: np.ndarray
    U: float
    V: float
    L_a: np.ndarray
    L: Optional[float]
    S_alpha: np.ndarray
    T_alpha: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    eta3: Optional[np.ndarray]
    Ytilde: Optional[np.ndarray]
    F: Optional[float]
    G: Optional[float]
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    B_cov: np.ndarray
    C_cov: np.ndarray
    omega: np.ndarray
    theta: np.ndarray
    residuals: dict
    fit: CanonicalFit = field(repr=False, default=None)
    frame: MoebiusFrame = field(repr=False, default=None)


def _pair_rotation(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, s], [-s, c]])


def _align_canonical(RT, RN, Yt, xi, Yt0, xi0, m, p):
    """Resolve the residual gauge so the rotated frames sit closest to the
    center frames.

    The residual group is O(2) acting as the coupled pair rotation (tangent
    angle t, sphere-pair angle -2t) together with its reflections, so the
    optimum over the tangent pair is an ordinary 2x2 orthogonal Procrustes;
    using the closed form keeps the aligned field continuous in the stencil
    point (a discrete class search would tie-break erratically at small h).
    """
    pair = (RT @ Yt)[:2]
    pair0 = Yt0[:2]
    M = pair0 @ pair.T
    U, _, Vt = np.linalg.svd(M)
    Om = U @ Vt
    t = np.arctan2(Om[0, 1], Om[0, 0])
    GT = np.eye(m)
    GN = np.eye(p)
    if np.linalg.det(Om) >= 0:
        GT[:2, :2] = _pair_rotation(t)
        GN[:2, :2] = _pair_rotation(-2.0 * t)
    else:
        # reflection branch: tangent e_2 flip composed with the rotation,
        # the sphere pair flips its first member
        GT[:2, :2] = Om
        GN[0, 0] = -1.0
        GN[:2, :2] = GN[:2, :2] @ _pair_rotation(-2.0 * t)
    cand_T = GT @ RT
    cand_N = GN @ RN
    # residual orthogonal blocks: Procrustes onto the center frames
    if m > 2:
        cand_T = _procrustes_block(cand_T, Yt, Yt0, 2)
    if p > 2:
        cand_N = _procrustes_block(cand_N, xi, xi0, 2)
    return cand_T, cand_N


def _metric_signs(n):
    s = np.ones(n)
    s[0] = -1.0
    return s


def _procrustes_block(R, rows, rows0, k):
    """Replace the trailing block of R by the orthogonal matrix matching the
    rotated rows to the center rows in least squares."""
    cur = (R @ rows)[k:]
    ref = rows0[k:]
    M = ref @ cur.T
    U, _, Vt = np.linalg.svd(M)
    Om = U @ Vt
    out = R.copy()
    out[k:] = Om @ R[k:]
    return out


def canonical_gauge_rotations(frame: MoebiusFrame):
    """Rotations from the deterministic gauge to the canonical gauge of the
    conformal second form (pattern of the Wintgen equality case)."""
    fit = fit_shape_operators(frame.B)
    return fit


def wintgen_invariants(chart: Chart, u, h: float = 1e-3,
                       extended: str = "auto",
                       wintgen_tol: float = 1e-6) -> WintgenInvariants:
    """Canonical-gauge invariants and identity residuals at a Wintgen point.

    ``extended=True`` insists on the eta_3 / Ytilde block and raises when L
    vanishes; ``"auto"`` fills it in whenever L is usable.
    """
    from .ddvv import evaluate_point, is_wintgen_ideal

    u = np.asarray(u, dtype=float)
    rep = evaluate_point(chart, u)
    if not is_wintgen_ideal(rep, wintgen_tol):
        raise NotWintgenError(
            f"invariants need a Wintgen ideal point; deficit {rep.deficit:.3e}")

    frame = build_frame(chart, u)
    ctx = frame.context
    m, p = ctx.m, ctx.p
    fit = fit_shape_operators(frame.B)
    RT, RN = fit.tangent_rotation, fit.normal_rotation

    B_cov_det = ctx.covariant_B()
    C_cov_det = ctx.covariant_C()

    def rotate_all(RT, RN):
        A_c = RT @ frame.A @ RT.T
        B_c = np.einsum("rs,ia,jb,sab->rij", RN, RT, RT, frame.B)
        C_c = np.einsum("rs,ia,sa->ri", RN, RT, frame.C)
        B_cov = np.einsum("rs,ia,jb,kc,sabc->rijk", RN, RT, RT, RT, B_cov_det)
        C_cov = np.einsum("rs,ia,jb,sab->rij", RN, RT, RT, C_cov_det)
        return A_c, B_c, C_c, B_cov, C_cov

    A_c, B_c, C_c, B_cov, C_cov = rotate_all(RT, RN)

    # rotate the partner frame directions so only L_3 survives (m >= 4)
    if m >= 4:
        Lvec = -B_cov[0, 0, 0, 2:]
        nrm = np.linalg.norm(Lvec)
        if nrm > L_TOL:
            G = np.eye(m)
            G[2:, 2:] = _rotation_onto_first_axis(Lvec)
            RT = G @ RT
            A_c, B_c, C_c, B_cov, C_cov = rotate_all(RT, RN)

    U = float(C_c[1, 1])
    V = float(C_c[0, 1])
    L_a = -B_cov[0, 0, 0, 2:]
    L = float(L_a[0]) if m >= 3 else None
    S_alpha = B_cov[2:, 0, 0, 1].copy()
    T_alpha = B_cov[2:, 0, 0, 0].copy()

    Yt_c = RT @ frame.Y_tangent
    xi_c = RN @ frame.xi
    eta1 = Yt_c[0] + V * frame.Y
    eta2 = Yt_c[1] - U * frame.Y

    eta3 = Ytilde = None
    Fv = Gv = None
    want_eta3 = extended is True or (extended == "auto" and m >= 3)
    if want_eta3:
        if L is None or abs(L) <= L_TOL:
            if extended is True:
                raise SingularInvariantError(
                    f"eta_3 / Ytilde need L != 0; got L = {L}")
        else:
            Gv = float(A_c[0, 1] - C_cov[0, 1, 1])
            Fv = float(A_c[0, 0] - C_cov[0, 1, 0]
                       + 0.5 * (U * U + V * V - (Gv / L) ** 2))
            GL = Gv / L
            eta3 = Yt_c[2] - GL * frame.Y
            Ytilde = (frame.N - V * Yt_c[0] + U * Yt_c[1] + GL * Yt_c[2]
                      - 0.5 * (U * U + V * V + GL * GL) * frame.Y)

    omega_st, theta_st = _aligned_connection_stencil(
        chart, u, h, ctx, RT, RN, Yt_c, xi_c)

    residuals = _prop_connection_residuals(
        m, p, omega_st, theta_st, U, V, L_a, S_alpha, T_alpha, C_c)

    return WintgenInvariants(
        u=u, U=U, V=V, L_a=np.asarray(L_a, dtype=float), L=L,
        S_alpha=np.asarray(S_alpha, dtype=float),
        T_alpha=np.asarray(T_alpha, dtype=float),
        eta1=eta1, eta2=eta2, eta3=eta3, Ytilde=Ytilde, F=Fv, G=Gv,
        A=A_c, B=B_c, C=C_c, B_cov=B_cov, C_cov=C_cov,
        omega=omega_st, theta=theta_st, residuals=residuals,
        fit=fit, frame=frame)


def _rotation_onto_first_axis(v):
    k = len(v)
    nrm = np.linalg.norm(v)
    out = np.eye(k)
    if nrm == 0:
        return out
    e = np.zeros(k)
    e[0] = 1.0
    w = v / nrm - e
    if np.linalg.norm(w) < 1e-14:
        return out
    w = w / np.linalg.norm(w)
    H = np.eye(k) - 2.0 * np.outer(w, w)   # Householder sends v -> |v| e_1
    return H


def canonical_frames_at(chart: Chart, q, pivots, Yt0, xi0):
    """Canonical-gauge frame at a stencil point, aligned to center frames."""
    fr = build_frame(chart, q, pivot_order=pivots)
    fit = fit_shape_operators(fr.B)
    RT, RN = _align_canonical(fit.tangent_rotation, fit.normal_rotation,
                              fr.Y_tangent, fr.xi, Yt0, xi0,
                              fr.A.shape[0], fr.B.shape[0])
    return RT @ fr.Y_tangent, RN @ fr.xi


def _aligned_connection_stencil(chart, u, h, ctx, RT, RN, Yt0, xi0):
    """omega_ij(E_k), theta_rs(E_i) in the canonical gauge, by differencing
    the aligned canonical frame field."""
    m, p = ctx.m, ctx.p
    dYt, dxi = [], []
    for a in range(m):
        du = np.zeros(m)
        du[a] = h
        Ytp, xip = canonical_frames_at(chart, u + du, ctx.normal_pivots,
                                       Yt0, xi0)
        Ytm, xim = canonical_frames_at(chart, u - du, ctx.normal_pivots,
                                       Yt0, xi0)
        dYt.append((Ytp - Ytm) / (2 * h))
        dxi.append((xip - xim) / (2 * h))
    Ec = RT @ ctx.Ec_vals          # canonical frame coefficients
    sgn = _metric_signs(Yt0.shape[1])
    omega = np.zeros((m, m, m))
    theta = np.zeros((p, p, m))
    for k in range(m):
        DYt = sum(Ec[k][a] * dYt[a] for a in range(m))
        Dxi = sum(Ec[k][a] * dxi[a] for a in range(m))
        omega[:, :, k] = (DYt * sgn) @ Yt0.T
        theta[:, :, k] = (Dxi * sgn) @ xi0.T
    return omega, theta


def _prop_connection_residuals(m, p, omega, theta, U, V, L_a, S_alpha,
                               T_alpha, C_c) -> dict:
    """Residuals of the canonical-gauge connection identities."""
    res = {}
    vals = []
    for ai, a in enumerate(range(2, m)):
        for k in range(m):
            t1 = L_a[ai] * (1.0 if k == 1 else 0.0) - V * (1.0 if k == a else 0.0)
            vals.append(abs(omega[0, a, k] - t1))
            t2 = -L_a[ai] * (1.0 if k == 0 else 0.0) + U * (1.0 if k == a else 0.0)
            vals.append(abs(omega[1, a, k] - t2))
    res["omega_pair_partner"] = max(vals) if vals else 0.0
    comb = []
    for k in range(m):
        target = -U * (1.0 if k == 0 else 0.0) - V * (1.0 if k == 1 else 0.0)
        if m >= 3 and k == 2:
            target += L_a[0]
        comb.append(abs(2.0 * omega[0, 1, k] + theta[0, 1, k] - target))
    res["gauge_combination"] = max(comb)
    tvals = []
    for bi, b in enumerate(range(2, p)):
        for k in range(m):
            t1 = S_alpha[bi] * (1.0 if k == 0 else 0.0) \
                - T_alpha[bi] * (1.0 if k == 1 else 0.0)
            tvals.append(abs(theta[0, b, k] - t1))
            t2 = T_alpha[bi] * (1.0 if k == 0 else 0.0) \
                + S_alpha[bi] * (1.0 if k == 1 else 0.0)
            tvals.append(abs(theta[1, b, k] - t2))
    res["theta_pair_partner"] = max(tvals) if tvals else 0.0
    cvals = [abs(C_c[1, 1] + C_c[0, 0])]          # U = C^2_2 = -C^1_1
    cvals.append(abs(C_c[0, 1] - C_c[1, 0]))      # V = C^1_2 = C^2_1
    for a in range(2, m):
        cvals.extend([abs(C_c[0, a]), abs(C_c[1, a])])
    for b in range(2, p):
        cvals.extend(abs(C_c[b, i]) for i in range(m))
    res["moebius_form_relations"] = max(cvals)
    return res


def second_gauss_map_residual(chart: Chart, u, h: float = 1e-3) -> float:
    """Residual of the derivative identity of the complex line [xi_1 - i xi_2]
    against the eta-frame expansion, measured in the aligned canonical gauge.
    """
    u = np.asarray(u, dtype=float)
    inv = wintgen_invariants(chart, u, h=h, extended="auto")
    frame = inv.frame
    ctx = frame.context
    m, p = ctx.m, ctx.p
    RT, RN = inv.fit.tangent_rotation, inv.fit.normal_rotation
    Yt0 = RT @ frame.Y_tangent
    xi0 = RN @ frame.xi

    dxi = []
    for a in range(m):
        du = np.zeros(m)
        du[a] = h
        _, xip = canonical_frames_at(chart, u + du, ctx.normal_pivots, Yt0, xi0)
        _, xim = canonical_frames_at(chart, u - du, ctx.normal_pivots, Yt0, xi0)
        dxi.append((xip - xim) / (2 * h))
    Ec = RT @ ctx.Ec_vals
    eta_c = inv.eta1 + 1j * inv.eta2
    xi_c = xi0[0] - 1j * xi0[1]
    worst = 0.0
    for k in range(2):
        Dxi = sum(Ec[k][a] * dxi[a] for a in range(m))
        lhs = Dxi[0] - 1j * Dxi[1]
        om1, om2 = (1.0, 0.0) if k == 0 else (0.0, 1.0)
        rhs = 1j * (om1 + 1j * om2) * eta_c + 1j * inv.theta[0, 1, k] * xi_c
        for bi, b in enumerate(range(2, p)):
            rhs = rhs + (om1 - 1j * om2) * (
                (inv.S_alpha[bi] - 1j * inv.T_alpha[bi]) * xi0[b])
        worst = max(worst, float(np.linalg.norm(lhs - rhs)))
    return worst


def exact_integrability_residuals(chart: Chart, u) -> dict:
    """equa2..equa5 with every derivative taken from exact jet fields; used
    as the independent oracle for the stencil route (equa1 needs derivatives
    of the Blaschke tensor, one order beyond the jet budget)."""
    ctx = FrameContext(chart, u, order=4)
    B_cov = ctx.covariant_B()
    C_cov = ctx.covariant_C()
    R = ctx.riemann()
    Rp = ctx.normal_curvature()
    res = equation_residuals(ctx.A, ctx.B, ctx.C,
                             np.zeros((ctx.m, ctx.m, ctx.m)),
                             B_cov, C_cov, R, Rp)
    res.pop("equa1")
    return res
