"""Classical pointwise invariants of an immersion into a round sphere.

Everything here works on exact chart jets of order two: induced metric,
orthonormal tangent/normal frames, second fundamental form, mean curvature,
normalized scalar curvature and normal scalar curvature.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRankError
from .jets import Chart, jv_values

RANK_TOL = 1e-10
UMBILIC_TOL = 1e-10


def _unit(m, a):
    return tuple(1 if k == a else 0 for k in range(m))


def _pair(m, a, b):
    e = [0] * m
    e[a] += 1
    e[b] += 1
    return tuple(e)


@dataclass
class PointGeometry:
    """First/second order data of a chart at one parameter point.

    ``II`` holds h^r_{ij} and ``H`` the components H^r, both expressed in the
    orthonormal frames, so H^r = tr(II[r]) / m by construction.
    """

    u: np.ndarray
    f: np.ndarray
    I: np.ndarray              # m x m induced metric (coordinate basis)
    df: np.ndarray             # m x ambient coordinate derivatives (rows)
    tangent_frame: np.ndarray  # m x ambient, orthonormal e_i
    tangent_coeffs: np.ndarray  # m x m, e_i = sum_a tangent_coeffs[i,a] d_a f
    normal_frame: np.ndarray   # p x ambient, orthonormal n_r
    II: np.ndarray             # p x m x m, h^r_{ij} in the orthonormal frames
    H: np.ndarray              # p mean curvature components
    K: float                   # normalized scalar curvature at c = 1
    K_N: float                 # normal scalar curvature
    normal_pivots: list = None  # coordinate axes used to complete the normals

    @property
    def m(self) -> int:
        return self.I.shape[0]

    @property
    def p(self) -> int:
        return self.normal_frame.shape[0]

    @property
    def H_sq(self) -> float:
        return float(np.dot(self.H, self.H))

    @property
    def shape_operators(self) -> np.ndarray:
        return self.II

    @property
    def traceless_II(self) -> np.ndarray:
        m = self.m
        return self.II - self.H[:, None, None] * np.eye(m)

    @property
    def rho_sq(self) -> float:
        """Quarter of the squared norm of the traceless second form."""
        return float(np.sum(self.traceless_II ** 2)) / 4.0

    @property
    def umbilic(self) -> bool:
        return self.rho_sq < UMBILIC_TOL


def tangent_orthonormal_frame(df, I):
    """Gram-Schmidt of the coordinate vectors; returns (frame, coeffs)."""
    m = df.shape[0]
    coeffs = np.zeros((m, m))
    frame = np.zeros_like(df)
    for i in range(m):
        c = np.zeros(m)
        c[i] = 1.0
        v = df[i].copy()
        for j in range(i):
            proj = float(np.dot(frame[j], v))
            v = v - proj * frame[j]
            c = c - proj * coeffs[j]
        nrm = float(np.linalg.norm(v))
        if nrm < RANK_TOL:
            raise DegenerateRankError("tangent vectors rank deficient")
        frame[i] = v / nrm
        coeffs[i] = c / nrm
    return frame, coeffs


def complete_normal_frame(span_rows, ambient, pivot_order=None):
    """Orthonormal completion of span_rows^perp by column-pivoted selection
    of coordinate vectors.  Deterministic: the largest residual (lowest index
    on ties) is taken next; pass ``pivot_order`` to freeze a previous choice,
    which keeps the frame smooth across stencil points."""
    rows = [r / np.linalg.norm(r) for r in span_rows]
    base = list(rows)
    chosen = []
    picked = []
    need = ambient - len(rows)

    def residual(idx):
        v = np.zeros(ambient)
        v[idx] = 1.0
        for b in base:
            v = v - np.dot(b, v) * b
        return v

    order = list(pivot_order) if pivot_order is not None else None
    for k in range(need):
        if order is not None:
            idx = order[k]
            v = residual(idx)
        else:
            cands = [(np.linalg.norm(residual(i)), -i) for i in range(ambient)
                     if i not in picked]
            best = max(cands)
            idx = -best[1]
            v = residual(idx)
        nrm = float(np.linalg.norm(v))
        if nrm < 1e-8:
            raise DegenerateRankError("normal completion degenerate")
        v = v / nrm
        # second pass keeps orthogonality at rounding level
        for b in base:
            v = v - np.dot(b, v) * b
        v = v / np.linalg.norm(v)
        base.append(v)
        chosen.append(v)
        picked.append(idx)
    return np.array(chosen), picked


def fundamental_forms(chart: Chart, u, pivot_order=None) -> PointGeometry:
    """Metric, frames, second fundamental form and curvatures at ``u``."""
    m = chart.dim_m
    jets = chart.jet(u, 2)
    f = jv_values(jets)
    df = np.array([[j.partial(_unit(m, a)) for j in jets] for a in range(m)])
    I = df @ df.T

    sv = np.linalg.svd(df, compute_uv=False)
    if sv[-1] < RANK_TOL * max(sv[0], 1.0):
        raise DegenerateRankError(f"df rank deficient at {np.asarray(u).tolist()}")

    frame, coeffs = tangent_orthonormal_frame(df, I)
    normals, picked = complete_normal_frame([f, *frame], chart.ambient_dim,
                                            pivot_order=pivot_order)

    d2 = np.array([[[j.partial(_pair(m, a, b)) for j in jets]
                    for b in range(m)] for a in range(m)])
    # h^r_{ab} in coordinates: n_r is orthogonal to f and to the tangents,
    # so pairing with raw second derivatives already projects correctly
    h_coord = np.einsum("rc,abc->rab", normals, d2)
    h = np.einsum("ia,jb,rab->rij", coeffs, coeffs, h_coord)
    h = 0.5 * (h + np.transpose(h, (0, 2, 1)))

    H = np.einsum("rii->r", h) / m
    K = scalar_curvature_from_shape(h, c=1.0)
    K_N = normal_curvature_from_shape(h)
    return PointGeometry(u=np.asarray(u, dtype=float), f=f, I=I, df=df,
                         tangent_frame=frame, tangent_coeffs=coeffs,
                         normal_frame=normals, II=h, H=H, K=K, K_N=K_N,
                         normal_pivots=picked)


def scalar_curvature_from_shape(h: np.ndarray, c: float) -> float:
    """Normalized scalar curvature via the Gauss equation.

    K = c + (2 / m(m-1)) * sum_{i<j} sum_r (h^r_ii h^r_jj - (h^r_ij)^2).
    """
    p, m, _ = h.shape
    total = 0.0
    for r in range(p):
        tr = np.trace(h[r])
        total += 0.5 * (tr * tr - np.sum(h[r] * h[r]))
    return float(c + 2.0 * total / (m * (m - 1)))


def normal_curvature_from_shape(h: np.ndarray) -> float:
    """Normal scalar curvature K_N = (2/m(m-1)) ||R_perp||.

    ||R_perp|| is the root sum of squares of <R_perp(e_i,e_j) n_r, n_s> over
    ordered pairs i<j, r<s, with R_perp from the Ricci equation (shape
    operator commutators).  This normalisation makes the DDVV bound an exact
    equality on canonical-form shape operators.
    """
    p, m, _ = h.shape
    total = 0.0
    for r in range(p):
        for s in range(r + 1, p):
            comm = h[r] @ h[s] - h[s] @ h[r]
            iu = np.triu_indices(m, k=1)
            total += float(np.sum(comm[iu] ** 2))
    return float(2.0 * np.sqrt(total) / (m * (m - 1)))


def scalar_curvatures(pg: PointGeometry, c: float) -> tuple[float, float]:
    """(K, K_N) of the point for ambient curvature ``c``."""
    return scalar_curvature_from_shape(pg.II, c), normal_curvature_from_shape(pg.II)


def traceless_second_form_norm_sq(chart: Chart, u) -> float:
    """|II - (1/m) tr(II) I|^2 at ``u`` (squared norm of the traceless part)."""
    pg = fundamental_forms(chart, u)
    return float(np.sum(pg.traceless_II ** 2))
