"""DDVV deficit, Wintgen ideal test, and the canonical frame fit.

At a Wintgen ideal point the traceless shape operators span a 2-plane W in
the symmetric matrices; in suitable orthonormal frames {e_i}, {n_r} they
reduce to

    A_1 = lambda_1 I + mu0 (E12 + E21),
    A_2 = lambda_2 I + mu0 (E11 - E22),
    A_3 = lambda_3 I,   A_sigma = 0  (sigma >= 4),

unique up to the coupled rotation gauge (tangent angle t, normal angle 2t)
and a few discrete flips.  ``fit_shape_operators`` recovers such frames by a
singular value decomposition of the coefficient map r -> traceless A_r.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateWintgenError, FitFailureError, NotWintgenError
from .jets import Chart
from .surface import (
    PointGeometry,
    UMBILIC_TOL,
    fundamental_forms,
    normal_curvature_from_shape,
    scalar_curvature_from_shape,
)

TOL_DDVV = 1e-7
_W_RANK_TOL = 1e-7
_TIE_TOL = 1e-12


def ddvv_deficit(pg: PointGeometry, c: float = 1.0) -> float:
    """c + ||H||^2 - K_N - K; nonnegative for any immersion."""
    K = scalar_curvature_from_shape(pg.II, c)
    K_N = normal_curvature_from_shape(pg.II)
    return float(c + pg.H_sq - K_N - K)


@dataclass
class CanonicalFit:
    """Frames realising the canonical shape-operator pattern.

    ``tangent_rotation`` rows are the new e_i in the coordinates of the input
    tangent frame, ``normal_rotation`` likewise for the normals; the ambient
    versions are precomposed with the input frames when available.
    """

    tangent_rotation: np.ndarray
    normal_rotation: np.ndarray
    lambdas: np.ndarray         # lambda_1..lambda_3 (padded with zeros)
    mu0: float
    residual: float
    tangent_frame: Optional[np.ndarray] = None   # ambient vectors (rows)
    normal_frame: Optional[np.ndarray] = None

    @property
    def canonical_distribution(self) -> np.ndarray:
        """Rows spanning D2 = span{e_1, e_2} (input tangent-frame coords)."""
        return self.tangent_rotation[:2]


@dataclass
class DdvvReport:
    u: np.ndarray
    K: float
    H_sq: float
    K_N: float
    c: float
    deficit: float
    rho_sq: float
    umbilic: bool
    canonical_fit: Optional[CanonicalFit] = None

    @property
    def umbilic_flag(self) -> bool:
        return self.umbilic


def evaluate_point(chart: Chart, u, c: float = 1.0, fit: bool = False,
                   tol: float = TOL_DDVV) -> DdvvReport:
    """Full DDVV report of a chart point."""
    pg = fundamental_forms(chart, u)
    return report_from_geometry(pg, c=c, fit=fit, tol=tol)


def report_from_geometry(pg: PointGeometry, c: float = 1.0, fit: bool = False,
                         tol: float = TOL_DDVV) -> DdvvReport:
    K = scalar_curvature_from_shape(pg.II, c)
    K_N = normal_curvature_from_shape(pg.II)
    deficit = float(c + pg.H_sq - K_N - K)
    rep = DdvvReport(u=pg.u, K=K, H_sq=pg.H_sq, K_N=K_N, c=c, deficit=deficit,
                     rho_sq=pg.rho_sq, umbilic=pg.umbilic)
    if fit and is_wintgen_ideal(rep, tol):
        rep.canonical_fit = fit_canonical_frames(pg, tol=tol)
    return rep


def is_wintgen_ideal(report: DdvvReport, tol: float = TOL_DDVV) -> bool:
    """Equality case of the inequality at an umbilic-free point."""
    return bool(report.deficit <= tol and not report.umbilic)


# ---------------------------------------------------------------------------
# canonical frame fit

def _sym_vec(S):
    """Isometric flattening of a symmetric matrix (off-diagonals x sqrt2)."""
    m = S.shape[0]
    iu = np.triu_indices(m, k=1)
    return np.concatenate([np.diag(S), np.sqrt(2.0) * S[iu]])


def _sym_unvec(v, m):
    S = np.diag(v[:m]).astype(float)
    iu = np.triu_indices(m, k=1)
    S[iu] = v[m:] / np.sqrt(2.0)
    S.T[iu] = S[iu]
    return S


def fit_canonical_frames(pg: PointGeometry, tol: float = 1e-8) -> CanonicalFit:
    """Canonical frames of a Wintgen ideal chart point (ambient included)."""
    rep = report_from_geometry(pg)
    if not is_wintgen_ideal(rep, max(tol, TOL_DDVV)):
        raise NotWintgenError(
            f"point is not Wintgen ideal (deficit {rep.deficit:.3e}, "
            f"umbilic={rep.umbilic})")
    fit = fit_shape_operators(pg.II, tol=tol)
    fit.tangent_frame = fit.tangent_rotation @ pg.tangent_frame
    fit.normal_frame = fit.normal_rotation @ pg.normal_frame
    return fit


def fit_shape_operators(A: np.ndarray, tol: float = 1e-8) -> CanonicalFit:
    """Fit the canonical pattern to shape operators given in orthonormal
    frames.  Deterministic gauge: mu0 > 0, the diagonal pattern has positive
    (1,1) entry, the off-diagonal pattern positive (1,2) entry, lambda_1 and
    lambda_2 nonnegative via the discrete flips, and a sign rule on e_1
    resolves the remaining simultaneous flip of the pair.
    """
    A = np.asarray(A, dtype=float)
    p, m, _ = A.shape
    if p < 2:
        raise DegenerateWintgenError(
            "one normal direction cannot span a 2-dimensional operator plane")
    traces = np.einsum("rii->r", A) / m
    A0 = A - traces[:, None, None] * np.eye(m)

    M = np.array([_sym_vec(A0[r]) for r in range(p)])
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s[0] < _TIE_TOL or (len(s) > 1 and s[1] < _W_RANK_TOL * s[0]):
        raise DegenerateWintgenError(
            "traceless shape-operator span degenerates below dimension 2")
    if len(s) > 2 and s[2] > _W_RANK_TOL * max(s[0], 1.0):
        raise DegenerateWintgenError(
            f"traceless shape-operator span exceeds dimension 2 "
            f"(s3/s1 = {s[2]/s[0]:.2e})")

    Q1 = _sym_unvec(Vt[0], m)
    Q2 = _sym_unvec(Vt[1], m)
    w = U[:, :2].T.copy()          # rows: normal coefficient directions

    # canonical distribution D2 from the common column space
    S2 = Q1 @ Q1 + Q2 @ Q2
    evals, evecs = np.linalg.eigh(S2)
    order = np.argsort(evals)[::-1]
    V2 = evecs[:, order[:2]]
    rest = evecs[:, order[2:]]

    def pattern_vec(Q):
        R = V2.T @ Q @ V2
        return complex(R[0, 0], R[0, 1])

    z1, z2 = pattern_vec(Q1), pattern_vec(Q2)
    # orient the pair so z2 = -i z1, flipping the second normal direction
    if np.imag(z1 * np.conj(z2)) < 0:
        Q2, w[1] = -Q2, -w[1]
        z2 = -z2
    # rotate the (Q, w) pair so the first pattern is purely off-diagonal
    phi = np.angle(z1) - np.pi / 2.0
    cph, sph = np.cos(phi), np.sin(phi)
    rot = np.array([[cph, sph], [-sph, cph]])
    w = rot @ w

    tangent = np.vstack([V2.T, rest.T])
    normal = np.vstack([w, _normal_completion(w, traces, p)])
    lam = normal @ traces

    # discrete flips make lambda_1, lambda_2 canonical without moving mu0
    if p >= 1 and lam[0] < -_TIE_TOL:
        tangent[1] = -tangent[1]
        normal[0] = -normal[0]
        lam[0] = -lam[0]
    if p >= 2 and lam[1] < -_TIE_TOL:
        tangent[[0, 1]] = tangent[[1, 0]]
        normal[1] = -normal[1]
        lam[1] = -lam[1]
    # pair sign rule: largest-magnitude entry of e_1 positive
    k = int(np.argmax(np.abs(tangent[0])))
    if tangent[0, k] < 0:
        tangent[0] = -tangent[0]
        tangent[1] = -tangent[1]

    Anew = np.einsum("rs,ia,jb,sab->rij", normal, tangent, tangent, A)
    mu0 = (Anew[0, 0, 1] + Anew[0, 1, 0] + Anew[1, 0, 0] - Anew[1, 1, 1]) / 4.0
    lam = np.einsum("rii->r", Anew) / m
    target = np.zeros_like(Anew)
    for r in range(min(p, 3)):
        target[r] = lam[r] * np.eye(m)
    target[0, 0, 1] += mu0
    target[0, 1, 0] += mu0
    if p >= 2:
        target[1, 0, 0] += mu0
        target[1, 1, 1] -= mu0
    residual = float(np.abs(Anew - target).max())
    if residual > tol:
        raise FitFailureError(
            f"canonical form residual {residual:.3e} exceeds {tol:.1e}",
            residual=residual)
    lam3 = np.zeros(3)
    lam3[:min(p, 3)] = lam[:min(p, 3)]
    return CanonicalFit(tangent_rotation=tangent, normal_rotation=normal,
                        lambdas=lam3, mu0=float(mu0), residual=residual)


def _normal_completion(w, traces, p):
    """Complement of the fitted normal pair; the third direction follows the
    trace functional (lambda_3 >= 0), the rest spans its kernel."""
    if p <= 2:
        return np.zeros((0, p))
    basis = []
    for i in range(p):
        v = np.zeros(p)
        v[i] = 1.0
        for b in [*w, *basis]:
            v = v - np.dot(b, v) * b
        if np.linalg.norm(v) > 1e-8:
            basis.append(v / np.linalg.norm(v))
    basis = np.array(basis[: p - 2])
    tau = basis @ traces
    nrm = float(np.linalg.norm(tau))
    if nrm < _TIE_TOL:
        return basis
    first = (tau / nrm) @ basis
    rows = [first]
    for b in basis:
        v = b - np.dot(first, b) * first
        for r in rows[1:]:
            v = v - np.dot(r, v) * r
        if np.linalg.norm(v) > 1e-8:
            rows.append(v / np.linalg.norm(v))
    return np.array(rows[: p - 2])


def canonical_pattern(m, p, lambdas, mu0) -> np.ndarray:
    """Shape operators of the canonical form (testing and synthesis)."""
    A = np.zeros((p, m, m))
    lam = np.zeros(3)
    lam[: len(lambdas)] = lambdas[: 3]
    for r in range(min(p, 3)):
        A[r] = lam[r] * np.eye(m)
    A[0, 0, 1] += mu0
    A[0, 1, 0] += mu0
    if p >= 2:
        A[1, 0, 0] += mu0
        A[1, 1, 1] -= mu0
    return A


def moebius_invariant_classification(chart: Chart, u, T, c: float = 1.0,
                                     tol: float = TOL_DDVV) -> tuple[bool, bool]:
    """(wintgen before, wintgen after) for the Moebius transform T."""
    from .jets import MoebiusTransformedChart

    before = evaluate_point(chart, u, c=c, tol=tol)
    after = evaluate_point(MoebiusTransformedChart(chart, T), u, c=c, tol=tol)
    return is_wintgen_ideal(before, tol), is_wintgen_ideal(after, tol)
