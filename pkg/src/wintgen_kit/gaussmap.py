"""Certificates for the conformal Gauss map into Gr(p, R^{m+p+2}_1).

The map sends a chart point to the spacelike p-plane spanned by the sphere
frame xi_r = (H^r, n_r + H^r f), the light-cone representation of the mean
curvature sphere.  On Wintgen ideal inputs the image degenerates to a
surface: the differential has exactly two nonzero singular values (both
sqrt(2) against the conformal metric), the trace of the second fundamental
form of the image surface vanishes (harmonicity), and its curvature ellipse
is a circle (super-conformality).  All three statements are certified here
by finite differencing with exact pointwise evaluations, so every residual
decays at O(h^2).

Points of the Grassmannian are handled in two pictures: Lorentz-orthogonal
projectors (gauge free, used for tangent maps and equality tests) and wedge
coordinates (used for the second-derivative certificates, where radial,
surface-tangent and Grassmann-normal parts must be split).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .ddvv import fit_shape_operators, report_from_geometry, is_wintgen_ideal
from .errors import NotWintgenError, SignatureError
from .jets import Chart
from .surface import PointGeometry, fundamental_forms

RANK_EIG_TOL = 1e-9


@dataclass
class GrassmannPoint:
    """Spacelike p-plane given by an orthonormal frame (rows)."""

    frame: np.ndarray

    @property
    def p(self) -> int:
        return self.frame.shape[0]

    @property
    def n(self) -> int:
        return self.frame.shape[1]

    def projector(self) -> np.ndarray:
        """Lorentz-orthogonal projector onto the plane (basis independent)."""
        sgn = _signs(self.n)
        return self.frame.T @ (self.frame * sgn)

    def principal_angles_to(self, other: "GrassmannPoint") -> np.ndarray:
        return scipy.linalg.subspace_angles(self.frame.T, other.frame.T)


def _signs(n):
    s = np.ones(n)
    s[0] = -1.0
    return s


def _sphere_frame(pg: PointGeometry) -> np.ndarray:
    """xi_r = (H^r, n_r + H^r f) rows from classical point data."""
    p = pg.p
    out = np.zeros((p, pg.f.shape[0] + 1))
    for r in range(p):
        out[r, 0] = pg.H[r]
        out[r, 1:] = pg.normal_frame[r] + pg.H[r] * pg.f
    return out


def gauss_map(chart: Chart, u, allow_umbilic: bool = False,
              pivot_order=None) -> GrassmannPoint:
    """Mean-curvature-sphere plane at ``u``.

    Umbilic points still carry a well-defined plane (the tangent sphere
    needs no conformal factor), but are rejected unless ``allow_umbilic``
    since every Wintgen certificate assumes an umbilic-free point.
    """
    pg = fundamental_forms(chart, u, pivot_order=pivot_order)
    if pg.umbilic and not allow_umbilic:
        from .errors import UmbilicError
        raise UmbilicError(f"umbilic point: rho^2 = {pg.rho_sq:.3e}",
                           rho_sq=pg.rho_sq)
    return GrassmannPoint(frame=_sphere_frame(pg))


# ---------------------------------------------------------------------------
# differencing directions

def _conformal_frame_coords(pg: PointGeometry, want_canonical: bool,
                            allow_umbilic: bool):
    """Coordinate components of the differencing directions.

    Wintgen inputs get the canonical frame scaled to Moebius-unit length;
    umbilic inputs (constant Gauss map) keep the induced-metric frame, and
    anything else is rejected.
    """
    rep = report_from_geometry(pg)
    if pg.umbilic:
        if not allow_umbilic:
            from .errors import UmbilicError
            raise UmbilicError("umbilic point", rho_sq=pg.rho_sq)
        return pg.tangent_coeffs, False
    coords = pg.tangent_coeffs / np.sqrt(pg.rho_sq)
    if not want_canonical:
        return coords, False
    if not is_wintgen_ideal(rep, 1e-6):
        raise NotWintgenError(
            f"certificate needs a Wintgen ideal point "
            f"(deficit {rep.deficit:.3e})")
    fit = fit_shape_operators(pg.II)
    return fit.tangent_rotation @ coords, True


# ---------------------------------------------------------------------------
# rank certificate via projector differencing

def rank_certificate(chart: Chart, u, h: float = 1e-3) -> np.ndarray:
    """Singular values of the Gauss map differential on the conformal-unit
    tangent frame, sorted descending.

    The values are frame-gauge invariant, so the deterministic frame is fine
    even on non-Wintgen controls.
    """
    u = np.asarray(u, dtype=float)
    pg = fundamental_forms(chart, u)
    coords, _ = _conformal_frame_coords(pg, want_canonical=False,
                                        allow_umbilic=True)
    m = pg.m
    base = gauss_map(chart, u, allow_umbilic=True)
    P0 = base.projector()
    sgn = _signs(base.n)
    pivots = None
    tangents = []
    for i in range(m):
        du = coords[i] * h
        Pp = gauss_map(chart, u + du, allow_umbilic=True).projector()
        Pm = gauss_map(chart, u - du, allow_umbilic=True).projector()
        dP = (Pp - Pm) / (2.0 * h)
        cols = []
        for r in range(base.p):
            v = dP @ base.frame[r]
            v = v - P0 @ v
            cols.append(v)
        tangents.append(np.array(cols))
    G = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            G[i, j] = sum(float(np.dot(a, sgn * b))
                          for a, b in zip(tangents[i], tangents[j]))
    evals = np.linalg.eigvalsh(G)
    if evals[0] < -1e-6:
        raise SignatureError(
            f"Grassmann pairing not positive on the differential "
            f"({evals[0]:.3e})")
    sv = np.sqrt(np.clip(evals, 0.0, None))[::-1]
    return sv


def fiber_displacement(chart: Chart, u, step: float = 1e-2) -> float:
    """Largest projector displacement of the Gauss map when moving along the
    partner directions E_3..E_m; O(step^2) on Wintgen inputs."""
    u = np.asarray(u, dtype=float)
    pg = fundamental_forms(chart, u)
    coords, canonical = _conformal_frame_coords(pg, want_canonical=True,
                                                allow_umbilic=True)
    m = pg.m
    if m <= 2:
        return 0.0
    P0 = gauss_map(chart, u, allow_umbilic=True).projector()
    worst = 0.0
    for a in range(2, m):
        P1 = gauss_map(chart, u + step * coords[a],
                       allow_umbilic=True).projector()
        worst = max(worst, float(np.abs(P1 - P0).max()))
    return worst


# ---------------------------------------------------------------------------
# wedge picture

class WedgeSpace:
    _cache: dict = {}

    def __new__(cls, n, p):
        key = (n, p)
        if key in cls._cache:
            return cls._cache[key]
        self = super().__new__(cls)
        self.n, self.p = n, p
        self.combos = list(itertools.combinations(range(n), p))
        self.index = {c: i for i, c in enumerate(self.combos)}
        sgn = _signs(n)
        self.signs = np.array([np.prod(sgn[list(c)]) for c in self.combos])
        cls._cache[key] = self
        return self

    def vector(self, frame: np.ndarray) -> np.ndarray:
        out = np.empty(len(self.combos))
        for i, c in enumerate(self.combos):
            out[i] = np.linalg.det(frame[:, list(c)])
        return out

    def inner(self, a, b) -> float:
        return float(np.sum(self.signs * a * b))


def _lorentz_complement(frame: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pseudo-orthonormal basis of the Lorentz complement of a spacelike
    plane; returns (rows, self-products)."""
    p, n = frame.shape
    sgn = _signs(n)
    rows = []
    eps = []
    # timelike seed from the first coordinate axis
    cands = [np.eye(n)[i] for i in range(n)]
    for v in cands:
        w = v.copy()
        for r in frame:
            w = w - float(np.dot(r, sgn * w)) * r
        for b, e in zip(rows, eps):
            w = w - e * float(np.dot(b, sgn * w)) * b
        q = float(np.dot(w, sgn * w))
        if abs(q) < 1e-10:
            continue
        rows.append(w / np.sqrt(abs(q)))
        eps.append(1.0 if q > 0 else -1.0)
        if len(rows) == n - p:
            break
    if len(rows) != n - p or eps.count(-1.0) != 1:
        raise SignatureError("complement of the sphere plane is not Lorentz")
    return np.array(rows), np.array(eps)


def _grassmann_tangent_basis(frame: np.ndarray, ws: WedgeSpace):
    """Wedge vectors of the tangent space of Gr at the plane, with their
    metric signs (one timelike direction per frame slot)."""
    comp, eps = _lorentz_complement(frame)
    basis = []
    signs = []
    for r in range(frame.shape[0]):
        for w, e in zip(comp, eps):
            mod = frame.copy()
            mod[r] = w
            basis.append(ws.vector(mod))
            signs.append(e)
    return np.array(basis), np.array(signs)


@dataclass
class GaussMapCertificate:
    """Second-order certificate data of the Gauss map at one point."""

    u: np.ndarray
    h: float
    singular_values: np.ndarray
    submersion_deviation: float
    tension_norm: float
    ellipse: dict
    canonical: bool
    convergence_order: Optional[float] = None

    @property
    def circle_residual(self) -> float:
        return self.ellipse["circle_residual"]

    @property
    def submersion_ratio(self) -> float:
        """Mean horizontal stretch over sqrt(2); 1.0 for an exact Riemannian
        submersion up to that constant factor."""
        top = np.sort(self.singular_values)[::-1][:2]
        return float(np.mean(top) / np.sqrt(2.0))


def _wedge_stencil(chart: Chart, u, coords, h, pivots):
    """Wedge vectors of the Gauss map on the 9-point stencil spanned by the
    first two directions; a fixed normal pivot order keeps the frames (and
    so the wedge signs) smooth across the stencil."""
    def xi_at(q):
        pg = fundamental_forms(chart, q, pivot_order=pivots)
        return _sphere_frame(pg)

    frame0 = xi_at(u)
    ws = WedgeSpace(frame0.shape[1], frame0.shape[0])
    out = {}
    for (i, j) in [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1),
                   (1, 1), (1, -1), (-1, 1), (-1, -1)]:
        q = u + h * (i * coords[0] + j * coords[1])
        out[(i, j)] = ws.vector(xi_at(q))
    return ws, out, frame0


def _certificate_core(chart: Chart, u, h: float) -> GaussMapCertificate:
    u = np.asarray(u, dtype=float)
    pg = fundamental_forms(chart, u)
    coords, canonical = _conformal_frame_coords(pg, want_canonical=True,
                                                allow_umbilic=True)
    ws, st, frame0 = _wedge_stencil(chart, u, coords, h, pg.normal_pivots)

    Xi0 = st[(0, 0)]
    D1 = [(st[(1, 0)] - st[(-1, 0)]) / (2 * h),
          (st[(0, 1)] - st[(0, -1)]) / (2 * h)]
    D2 = {
        (0, 0): (st[(1, 0)] - 2 * Xi0 + st[(-1, 0)]) / h ** 2,
        (1, 1): (st[(0, 1)] - 2 * Xi0 + st[(0, -1)]) / h ** 2,
        (0, 1): (st[(1, 1)] - st[(1, -1)] - st[(-1, 1)] + st[(-1, -1)])
                / (4 * h ** 2),
    }

    tan_basis, tan_signs = _grassmann_tangent_basis(frame0, ws)

    def proj_gr(v):
        out = np.zeros_like(v)
        for b, e in zip(tan_basis, tan_signs):
            out = out + e * ws.inner(b, v) * b
        return out

    t1, t2 = proj_gr(D1[0]), proj_gr(D1[1])
    W = np.array([[ws.inner(t1, t1), ws.inner(t1, t2)],
                  [ws.inner(t2, t1), ws.inner(t2, t2)]])
    sub_dev = float(np.abs(W - 2.0 * np.eye(2)).max())
    if pg.umbilic:
        Winv = None
    else:
        Winv = np.linalg.inv(W)

    def normal_part(v):
        v = proj_gr(v)
        if Winv is None:
            return v
        c = np.array([ws.inner(t1, v), ws.inner(t2, v)])
        lam = Winv @ c
        return v - lam[0] * t1 - lam[1] * t2

    N11 = normal_part(D2[(0, 0)])
    N22 = normal_part(D2[(1, 1)])
    N12 = normal_part(D2[(0, 1)])
    tension = float(np.linalg.norm(N11 + N22))

    v1 = 0.5 * (N11 - N22)
    v2 = N12
    n1 = ws.inner(v1, v1)
    n2 = ws.inner(v2, v2)
    cross = ws.inner(v1, v2)
    scale = max(abs(n1), abs(n2), 1e-30)
    ellipse = {
        "norm_sq_difference_axis": n1,
        "norm_sq_mixed_axis": n2,
        "cross_inner": cross,
        "component_norms": {
            "N11": float(np.linalg.norm(N11)),
            "N22": float(np.linalg.norm(N22)),
            "N12": float(np.linalg.norm(N12)),
        },
        "circle_residual": float(max(abs(n1 - n2), abs(cross)) /
                                 max(scale, 1e-12)) if scale > 1e-20
                            else float(max(abs(n1 - n2), abs(cross))),
    }
    sv = rank_certificate(chart, u, h=h)
    return GaussMapCertificate(u=u, h=h, singular_values=sv,
                               submersion_deviation=sub_dev,
                               tension_norm=tension, ellipse=ellipse,
                               canonical=canonical)


def harmonicity_certificate(chart: Chart, u, h: float = 1e-3,
                            orders: int = 0) -> GaussMapCertificate:
    """Tension-field certificate; optionally estimates the convergence order
    from ``orders`` extra halvings of h."""
    cert = _certificate_core(chart, u, h)
    if orders > 0:
        vals = [cert.tension_norm]
        for k in range(1, orders + 1):
            vals.append(_certificate_core(chart, u, h / 2 ** k).tension_norm)
        cert.convergence_order = _fit_order(vals)
    return cert


def superconformality_certificate(chart: Chart, u, h: float = 1e-3,
                                  orders: int = 0) -> GaussMapCertificate:
    """Circle-condition certificate for the curvature ellipse of the image."""
    cert = _certificate_core(chart, u, h)
    if orders > 0:
        vals = [cert.circle_residual]
        for k in range(1, orders + 1):
            vals.append(_certificate_core(chart, u, h / 2 ** k).circle_residual)
        cert.convergence_order = _fit_order(vals)
    return cert


def _fit_order(vals) -> float:
    vals = np.asarray(vals, dtype=float)
    vals = np.clip(vals, 1e-300, None)
    rates = np.log2(vals[:-1] / vals[1:])
    return float(np.mean(rates))


def broken_section_tension(chart: Chart, u, h: float = 1e-3) -> float:
    """Control experiment: replace the second sphere-frame section by a
    rotated (non mean-curvature) section and recompute the tension norm; the
    harmonicity certificate must break by an O(1) amount."""
    u = np.asarray(u, dtype=float)
    pg = fundamental_forms(chart, u)
    coords, _ = _conformal_frame_coords(pg, want_canonical=True,
                                        allow_umbilic=False)

    def xi_at(q):
        g = fundamental_forms(chart, q)
        fr = _sphere_frame(g)
        # tilt xi_2 towards the point-sphere direction: unit spacelike mix
        # of xi_2 with the light-cone point, no longer the mean curvature
        # sphere but still a sphere congruence through the point
        lift = np.concatenate(([1.0], g.f))
        cand = fr[1] + 0.35 * lift
        q0 = float(np.dot(cand, _signs(len(cand)) * cand))
        fr[1] = cand / np.sqrt(q0)
        return fr

    frame0 = xi_at(u)
    ws = WedgeSpace(frame0.shape[1], frame0.shape[0])
    st = {}
    for (i, j) in [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1),
                   (1, 1), (1, -1), (-1, 1), (-1, -1)]:
        q = u + h * (i * coords[0] + j * coords[1])
        st[(i, j)] = ws.vector(xi_at(q))
    Xi0 = st[(0, 0)]
    D1 = [(st[(1, 0)] - st[(-1, 0)]) / (2 * h),
          (st[(0, 1)] - st[(0, -1)]) / (2 * h)]
    D2sum = ((st[(1, 0)] - 2 * Xi0 + st[(-1, 0)])
             + (st[(0, 1)] - 2 * Xi0 + st[(0, -1)])) / h ** 2
    tan_basis, tan_signs = _grassmann_tangent_basis(frame0, ws)

    def proj_gr(v):
        out = np.zeros_like(v)
        for b, e in zip(tan_basis, tan_signs):
            out = out + e * ws.inner(b, v) * b
        return out

    t1, t2 = proj_gr(D1[0]), proj_gr(D1[1])
    W = np.array([[ws.inner(t1, t1), ws.inner(t1, t2)],
                  [ws.inner(t2, t1), ws.inner(t2, t2)]])
    v = proj_gr(D2sum)
    c = np.array([ws.inner(t1, v), ws.inner(t2, v)])
    lam = np.linalg.solve(W, c)
    v = v - lam[0] * t1 - lam[1] * t2
    return float(np.linalg.norm(v))
