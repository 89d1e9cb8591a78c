"""Codimension-two generator: holomorphic 1-isotropic curves, the sphere
congruence they span, and the envelope with its round-sphere fibers.

A curve xi(z) into the complexified Lorentz space R^{m+4}_1 x C with
<xi, xi> = 0, <xi_z, xi_z> = 0 and xi_zbar parallel to xi determines a
2-parameter family of m-spheres.  Wherever the real span

    V = span{Re xi, Im xi, Re xi_z, Im xi_z}

is spacelike of rank 4, the orthogonal bundle V-perp has signature (1, m-1)
and its null rays trace the envelope: an m-dimensional submanifold fibered
by round (m-2)-spheres.  The chart produced here parametrises the envelope
by (x, y, fiber angles) and differentiates the entire construction in exact
jet arithmetic, so the downstream conformal machinery sees it as just
another chart.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import (
    ChartFormatError,
    DimensionMismatchError,
    SeedDegeneracyError,
    SignatureError,
)
from .jets import (
    Chart,
    Jet,
    JetSpace,
    eval_expression,
    jv_values,
    parse_expression,
)

POSITIVITY_TOL = 1e-10
NULL_TOL = 1e-10
SPACELIKE_TOL = 1e-8


@dataclass
class WeierstrassSeed:
    """Holomorphic null curve W: C -> C^{m+2} given as expressions in z."""

    m: int
    components: list
    name: Optional[str] = None

    def __post_init__(self):
        if len(self.components) != self.m + 2:
            raise ChartFormatError(
                f"seed needs m+2 = {self.m + 2} components, got "
                f"{len(self.components)}")
        self.trees = [parse_expression(c) if isinstance(c, str) else c
                      for c in self.components]

    def to_dict(self) -> dict:
        return {"m": self.m, "components": list(self.components),
                "name": self.name}


class IsotropicCurve:
    """Jet-capable curve z -> C^{m+4}; not assumed holomorphic a priori.

    ``trees`` are expressions in the complex variables ``z`` (and optionally
    ``conj(z)``, which breaks holomorphy and is caught by the validator).
    """

    def __init__(self, m: int, trees, domain, name=None, seed=None):
        self.m = int(m)
        self.target_dim = self.m + 4
        if len(trees) != self.target_dim:
            raise ChartFormatError(
                f"curve needs {self.target_dim} components, got {len(trees)}")
        self.trees = [parse_expression(t) if isinstance(t, str) else t
                      for t in trees]
        self.domain = np.asarray(domain, dtype=float).reshape(2, 2)
        self.name = name
        self.seed = seed

    def jets(self, z: complex, order: int, space: Optional[JetSpace] = None,
             axes=(0, 1)) -> list:
        """Component jets in real variables (x, y) embedded in ``space``."""
        if space is None:
            space = JetSpace(2, order)
        zj = (Jet.variable(space, axes[0], float(np.real(z)))
              + 1j * Jet.variable(space, axes[1], float(np.imag(z))))
        env = {"z": zj}
        out = []
        for tree in self.trees:
            val = eval_expression(tree, env)
            if not isinstance(val, Jet):
                val = Jet.constant(space, complex(val))
            out.append(val)
        return out

    def value(self, z: complex) -> np.ndarray:
        return np.array([j.value for j in self.jets(z, 0)])

    def z_derivative(self, z: complex) -> np.ndarray:
        jets = self.jets(z, 1)
        dx = np.array([j.partial((1, 0)) for j in jets])
        dy = np.array([j.partial((0, 1)) for j in jets])
        return 0.5 * (dx - 1j * dy)

    def zbar_derivative(self, z: complex) -> np.ndarray:
        jets = self.jets(z, 1)
        dx = np.array([j.partial((1, 0)) for j in jets])
        dy = np.array([j.partial((0, 1)) for j in jets])
        return 0.5 * (dx + 1j * dy)


def _c_lorentz(a, b) -> complex:
    """Complex-bilinear Lorentz pairing."""
    return complex(np.sum(a * b) - 2.0 * a[0] * b[0])


def curve_from_weierstrass(seed: WeierstrassSeed, domain=None,
                           samples: int = 9) -> IsotropicCurve:
    """Stereographic embedding of a null curve W into the complex quadric.

    xi = ((1+Q)/2, W, (1-Q)/2) with Q = W.W satisfies <xi,xi> = 0 as an
    algebraic identity and <xi_z, xi_z> = W_z.W_z, so the seed must be a
    null curve; that precondition and the positivity <xi, conj xi> > 0 are
    checked on a sample grid.
    """
    if domain is None:
        domain = [[-0.8, 0.8], [-0.8, 0.8]]
    import ast

    def tree(src):
        return parse_expression(src)

    w_sq_terms = " + ".join(f"({c})*({c})" for c in seed.components)
    comps = [f"(1 + ({w_sq_terms}))/2"]
    comps += [f"({c})" for c in seed.components]
    comps += [f"(1 - ({w_sq_terms}))/2"]
    curve = IsotropicCurve(seed.m, [tree(c) for c in comps], domain,
                           name=seed.name, seed=seed)

    dom = np.asarray(domain, dtype=float)
    xs = np.linspace(dom[0, 0], dom[0, 1], samples)
    ys = np.linspace(dom[1, 0], dom[1, 1], samples)
    space = JetSpace(2, 1)
    for x in xs[:: max(1, samples // 3)]:
        for y in ys[:: max(1, samples // 3)]:
            z = complex(x, y)
            zj = (Jet.variable(space, 0, x) + 1j * Jet.variable(space, 1, y))
            env = {"z": zj}
            W = []
            for t in seed.trees:
                v = eval_expression(t, env)
                W.append(v if isinstance(v, Jet) else Jet.constant(space, complex(v)))
            Wz = np.array([0.5 * (w.partial((1, 0)) - 1j * w.partial((0, 1)))
                           for w in W])
            scale = max(1.0, float(np.linalg.norm(Wz) ** 2))
            if abs(np.sum(Wz * Wz)) > 1e-9 * scale:
                raise SeedDegeneracyError(
                    f"seed is not a null curve at z = {z}: "
                    f"W_z.W_z = {np.sum(Wz * Wz):.3e}", invariant="null_curve")
            xi = curve.value(z)
            pos = np.real(_c_lorentz(xi, np.conj(xi)))
            if pos <= POSITIVITY_TOL:
                raise SeedDegeneracyError(
                    f"curve leaves the positive quadric at z = {z}",
                    invariant="positivity")
    return curve


@dataclass
class IsotropyCertificate:
    null_residual: float
    isotropy_residual: float
    holomorphy_residual: float
    positivity_min: float

    @property
    def ok(self) -> bool:
        return (self.null_residual <= 1e-8 and self.isotropy_residual <= 1e-8
                and self.holomorphy_residual <= 1e-8
                and self.positivity_min > POSITIVITY_TOL)


def validate_isotropic(curve: IsotropicCurve, grid) -> IsotropyCertificate:
    """Max residuals of the curve invariants over a grid of complex points."""
    worst_null = worst_iso = worst_hol = 0.0
    pos_min = np.inf
    for z in grid:
        xi = curve.value(z)
        xi_z = curve.z_derivative(z)
        xi_zb = curve.zbar_derivative(z)
        scale = float(np.linalg.norm(xi) ** 2)
        pos = np.real(_c_lorentz(xi, np.conj(xi)))
        pos_min = min(pos_min, pos)
        worst_null = max(worst_null, abs(_c_lorentz(xi, xi)) / scale)
        dscale = max(float(np.linalg.norm(xi_z) ** 2), 1e-30)
        worst_iso = max(worst_iso, abs(_c_lorentz(xi_z, xi_z)) / dscale)
        lam = _c_lorentz(xi_zb, np.conj(xi)) / _c_lorentz(xi, np.conj(xi))
        res = xi_zb - lam * xi
        worst_hol = max(worst_hol,
                        float(np.linalg.norm(res))
                        / max(np.linalg.norm(xi_z), 1e-15))
    return IsotropyCertificate(null_residual=float(worst_null),
                               isotropy_residual=float(worst_iso),
                               holomorphy_residual=float(worst_hol),
                               positivity_min=float(pos_min))


# ---------------------------------------------------------------------------
# envelope samples (value level)

@dataclass
class EnvelopeSample:
    z: complex
    lam: np.ndarray              # fiber angles
    Yhat: np.ndarray             # lightlike lift, 0-component 1
    point: np.ndarray            # unit vector in S^{m+2}
    V_frame: np.ndarray          # 4 x (m+4) spacelike orthonormal rows


def _congruence_frame_values(curve: IsotropicCurve, z: complex):
    """Orthonormal spacelike basis of V = span{Re xi, Im xi, Re xi_z, Im xi_z}."""
    xi = curve.value(z)
    xi_z = curve.z_derivative(z)
    cands = [np.real(xi), np.imag(xi), np.real(xi_z), np.imag(xi_z)]
    out = []
    for v in cands:
        w = v.astype(float)
        for b in out:
            w = w - _c_lorentz(b, w).real * b
        q = _c_lorentz(w, w).real
        nrm = float(np.linalg.norm(w))
        if nrm < 1e-12 or q < SPACELIKE_TOL * nrm * nrm:
            raise SignatureError(
                f"congruence span fails the spacelike condition at z = {z} "
                f"(self-product {q:.3e})")
        out.append(w / np.sqrt(q))
    return np.array(out)


def build_envelope(curve: IsotropicCurve, z: complex,
                   fiber_samples: int) -> list[EnvelopeSample]:
    """Envelope points over one base point: the null rays of V-perp."""
    m = curve.m
    n = curve.target_dim
    V = _congruence_frame_values(curve, z)

    def project_off_V(w):
        for b in V:
            w = w - _c_lorentz(b, w).real * b
        return w

    t0 = project_off_V(np.eye(n)[0])
    q0 = _c_lorentz(t0, t0).real
    if q0 >= -1e-12:
        raise SignatureError(f"V-perp lost its timelike direction at z = {z}")
    e0 = t0 / np.sqrt(-q0)
    if e0[0] < 0:
        e0 = -e0
    spacelike = []
    basis = [e0]
    for idx in range(1, n):
        if len(spacelike) == m - 1:
            break
        w = project_off_V(np.eye(n)[idx])
        w = w + _c_lorentz(e0, w).real * e0
        for b in spacelike:
            w = w - _c_lorentz(b, w).real * b
        q = _c_lorentz(w, w).real
        if q < 1e-10:
            continue
        spacelike.append(w / np.sqrt(q))
    if len(spacelike) != m - 1:
        raise SignatureError(f"V-perp rank defect at z = {z}")

    samples = []
    if m == 2:
        directions = [np.array([1.0]), np.array([-1.0])] [: max(fiber_samples, 0)]
        angle_sets = [np.array([0.0]), np.array([np.pi])][: len(directions)]
    else:
        k = m - 2
        angle_sets, directions = _sphere_grid(k, fiber_samples)
    for angles, d in zip(angle_sets, directions):
        Yhat = e0 + d @ np.array(spacelike)
        Yhat = Yhat / Yhat[0]
        samples.append(EnvelopeSample(z=z, lam=np.asarray(angles, dtype=float),
                                      Yhat=Yhat, point=Yhat[1:].copy(),
                                      V_frame=V))
    return samples


def _sphere_grid(k: int, count: int):
    """(angles, unit vectors) grids on S^k via spherical coordinates."""
    if count <= 0:
        return [], []
    if k == 1:
        th = 2.0 * np.pi * np.arange(count) / count
        return [np.array([t]) for t in th], \
               [np.array([np.cos(t), np.sin(t)]) for t in th]
    per = max(2, int(np.ceil(count ** (1.0 / k))))
    polar = [np.linspace(0.15, np.pi - 0.15, per)] * (k - 1)
    azim = [np.linspace(0, 2 * np.pi, per, endpoint=False)]
    angles = list(itertools.product(*(list(g) for g in polar + azim)))[:count]
    out_angles, out_dirs = [], []
    for ang in angles:
        out_angles.append(np.array(ang))
        out_dirs.append(_spherical_direction(np.array(ang)))
    return out_angles, out_dirs


def _spherical_direction(angles):
    k = len(angles)
    d = np.ones(k + 1)
    for i, a in enumerate(angles):
        d[i] *= np.cos(a)
        d[i + 1:] *= np.sin(a)
    return d


# ---------------------------------------------------------------------------
# envelope chart with exact jets

class EnvelopeChart(Chart):
    """Chart (x, y, fiber angles) -> S^{m+2} for the envelope submanifold.

    The construction pins its orthonormalisation pivots at the domain center
    once, so evaluations form one coherent smooth chart away from the
    degenerate set; rank drops over a validation grid are recorded in
    ``flagged``.
    """

    def __init__(self, curve: IsotropicCurve, domain, name=None):
        self.curve = curve
        self.dim_m = curve.m
        self.codim_p = 2
        self.domain = np.asarray(domain, dtype=float).reshape(self.dim_m, 2)
        self.name = name or (curve.name and f"envelope({curve.name})")
        self.flagged: list = []
        center = self.domain.mean(axis=1)
        self._pivots = self._choose_pivots(center)

    # -- pivot selection at a reference point --------------------------------
    def _choose_pivots(self, u):
        z = complex(u[0], u[1])
        V = _congruence_frame_values(self.curve, z)
        n = self.curve.target_dim

        def proj(w, extra):
            for b in [*V, *extra]:
                q = _c_lorentz(b, b).real
                w = w - np.sign(q) * _c_lorentz(b, w).real * b
            return w

        t0 = proj(np.eye(n)[0], [])
        e0 = t0 / np.sqrt(-_c_lorentz(t0, t0).real)
        pivots = []
        built = [e0]
        for idx in range(1, n):
            if len(pivots) == self.dim_m - 1:
                break
            w = proj(np.eye(n)[idx], built)
            q = _c_lorentz(w, w).real
            if q < 0.05:
                continue
            built.append(w / np.sqrt(q))
            pivots.append(idx)
        if len(pivots) != self.dim_m - 1:
            raise SignatureError("cannot seed envelope chart pivots")
        return pivots

    def jet(self, u, order):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dim_m,):
            raise DimensionMismatchError(
                f"parameter point has shape {u.shape}, chart wants "
                f"({self.dim_m},)")
        m = self.dim_m
        n = self.curve.target_dim
        space = JetSpace(m, order)
        big = JetSpace(m, order + 1)
        z = complex(u[0], u[1])
        xi_big = self.curve.jets(z, order + 1, space=big, axes=(0, 1))
        xi = [c.truncate(order) for c in xi_big]
        xi_z = [(c.derivative(0) - 1j * c.derivative(1)) * 0.5 for c in xi_big]

        def re(jets):
            return [Jet(j.space, j.c.real.copy()) for j in jets]

        def im(jets):
            return [Jet(j.space, j.c.imag.copy()) for j in jets]

        cands = [re(xi), im(xi), re(xi_z), im(xi_z)]
        V = []
        for v in cands:
            w = list(v)
            for b in V:
                pr = _jv_lorentz(b, w)
                w = [wc - pr * bc for wc, bc in zip(w, b)]
            q = _jv_lorentz(w, w)
            if q.value <= SPACELIKE_TOL:
                raise SignatureError(
                    f"congruence span fails the spacelike condition at {u}")
            inv = q.sqrt().reciprocal()
            V.append([wc * inv for wc in w])

        def unit_vec(idx):
            return [Jet.constant(space, 1.0 if c == idx else 0.0)
                    for c in range(n)]

        def project_off(w, built):
            for b, sign in built:
                pr = _jv_lorentz(b, w)
                w = [wc - sign * pr * bc for wc, bc in zip(w, b)]
            return w

        built = [(v, 1.0) for v in V]
        t0 = project_off(unit_vec(0), built)
        q0 = _jv_lorentz(t0, t0)
        if q0.value >= 0:
            raise SignatureError(f"V-perp lost its timelike direction at {u}")
        inv0 = (-q0).sqrt().reciprocal()
        e0 = [tc * inv0 for tc in t0]
        if e0[0].value < 0:
            e0 = [-c for c in e0]
        built.append((e0, -1.0))
        spacelike = []
        for idx in self._pivots:
            w = project_off(unit_vec(idx), built)
            q = _jv_lorentz(w, w)
            if q.value <= 1e-10:
                raise SignatureError(f"V-perp rank defect at {u}")
            inv = q.sqrt().reciprocal()
            w = [wc * inv for wc in w]
            built.append((w, 1.0))
            spacelike.append(w)

        # fiber direction from the spherical angles
        trig = []
        for i in range(m - 2):
            a = Jet.variable(space, 2 + i, u[2 + i])
            trig.append((a.cos(), a.sin()))
        dir_coeffs = []
        for i in range(m - 1):
            term = Jet.constant(space, 1.0)
            for j in range(min(i, m - 2)):
                term = term * trig[j][1]
            if i < m - 2:
                term = term * trig[i][0]
            dir_coeffs.append(term)

        Yhat = list(e0)
        for coef, w in zip(dir_coeffs, spacelike):
            Yhat = [yc + coef * wc for yc, wc in zip(Yhat, w)]
        inv_top = Yhat[0].reciprocal()
        return [yc * inv_top for yc in Yhat[1:]]

    def congruence_pair(self, u) -> np.ndarray:
        """Orthonormal spacelike pair spanning the sphere congruence at the
        base point under ``u`` (rows, length m+4)."""
        z = complex(u[0], u[1])
        return _congruence_frame_values(self.curve, z)[:2]

    def lift_value(self, u) -> np.ndarray:
        """(1, f(u)): the section of the light cone over the chart point."""
        return np.concatenate(([1.0], self.value(u)))


def _jv_lorentz(u, v):
    acc = -(u[0] * v[0])
    for a, b in zip(u[1:], v[1:]):
        acc = acc + a * b
    return acc


def envelope_to_chart(curve: IsotropicCurve, domain, validate_grid=None,
                      rank_tol: float = 1e-6) -> EnvelopeChart:
    """Package the envelope as a chart; flag parameters where the rank drops."""
    chart = EnvelopeChart(curve, domain)
    if validate_grid is None:
        counts = [4] * chart.dim_m
        from .jets import grid_points
        validate_grid = grid_points(chart.domain, counts, margin=0.05)
    flagged = []
    for q in validate_grid:
        try:
            jets = chart.jet(q, 1)
        except SignatureError:
            flagged.append(np.asarray(q, dtype=float))
            continue
        df = np.array([[j.partial(tuple(1 if k == a else 0
                                        for k in range(chart.dim_m)))
                        for j in jets] for a in range(chart.dim_m)])
        sv = np.linalg.svd(df, compute_uv=False)
        if sv[-1] < rank_tol * max(sv[0], 1.0):
            flagged.append(np.asarray(q, dtype=float))
    chart.flagged = flagged
    return chart


def envelope_chart_from_dict(doc: dict) -> EnvelopeChart:
    try:
        seed = WeierstrassSeed(m=doc["m"], components=doc["seed"]["components"],
                               name=doc["seed"].get("name"))
        curve_domain = doc.get("curve_domain")
        curve = curve_from_weierstrass(seed, domain=curve_domain)
        return envelope_to_chart(curve, doc["domain"])
    except KeyError as exc:
        raise ChartFormatError(f"envelope chart document missing {exc}") from exc


def envelope_chart_to_dict(chart: EnvelopeChart) -> dict:
    if chart.curve.seed is None:
        raise ChartFormatError("envelope chart lacks seed provenance")
    return {"type": "envelope", "m": chart.dim_m,
            "seed": chart.curve.seed.to_dict(),
            "curve_domain": np.asarray(chart.curve.domain).tolist(),
            "domain": np.asarray(chart.domain).tolist()}


# ---------------------------------------------------------------------------
# geometric certificates

def sphere_fit(points: np.ndarray) -> dict:
    """Affine-subspace plus center/radius fit of a point cloud.

    Returns the max distance deviation from the fitted sphere and the rank
    of the affine span; the fiber claim is that points of one fiber sit on a
    round (m-2)-sphere, i.e. rank m-1 and vanishing deviation.
    """
    P = np.asarray(points, dtype=float)
    mean = P.mean(axis=0)
    X = P - mean
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    rank = int(np.sum(s > 1e-9 * max(s[0], 1.0)))
    basis = Vt[:rank]
    coords = X @ basis.T
    # algebraic fit: |x|^2 - 2 c.x = r^2 - |c|^2 in the affine coordinates
    A = np.hstack([2.0 * coords, np.ones((len(P), 1))])
    b = np.sum(coords ** 2, axis=1)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    c, d = sol[:rank], sol[rank]
    r_sq = d + float(c @ c)
    radius = np.sqrt(max(r_sq, 0.0))
    dists = np.linalg.norm(coords - c, axis=1)
    out_of_plane = 0.0
    if rank < X.shape[1]:
        out_of_plane = float(np.abs(X - coords @ basis).max())
    return {"residual": float(np.abs(dists - radius).max() + out_of_plane),
            "radius": float(radius), "rank": rank,
            "center": mean + c @ basis}


def fiber_sphericity(curve: IsotropicCurve, z: complex,
                     fiber_samples: int = 12) -> dict:
    samples = build_envelope(curve, z, fiber_samples)
    pts = np.array([s.point for s in samples])
    return sphere_fit(pts)


def mean_curvature_sphere_residual(chart: EnvelopeChart, u,
                                   h: float = 1e-3) -> float:
    """Stencil certificate that the congruence spheres stay the mean
    curvature spheres of the envelope: the induced-metric Laplacian of
    <(1,f), xi_r> must vanish at the point.

    <Y,xi_r> and <dY,xi_r> vanish by construction, so the Laplacian reduces
    to the plain second-difference quadratic form contracted with the
    inverse induced metric; the result converges at O(h^2).
    """
    u = np.asarray(u, dtype=float)
    m = chart.dim_m
    xi_pair = chart.congruence_pair(u)

    jets = chart.jet(u, 1)
    df = np.array([[j.partial(tuple(1 if k == a else 0 for k in range(m)))
                    for j in jets] for a in range(m)])
    ginv = np.linalg.inv(df @ df.T)

    def s_vals(q):
        lift = chart.lift_value(q)
        return np.array([float(np.dot(lift, xi) - 2.0 * lift[0] * xi[0])
                         for xi in xi_pair])

    center = s_vals(u)
    lap = np.zeros(2)
    for a in range(m):
        for b in range(m):
            if ginv[a, b] == 0.0:
                continue
            if a == b:
                du = np.zeros(m)
                du[a] = h
                dd = (s_vals(u + du) - 2.0 * center + s_vals(u - du)) / h ** 2
            else:
                da, db = np.zeros(m), np.zeros(m)
                da[a] = h
                db[b] = h
                dd = (s_vals(u + da + db) - s_vals(u + da - db)
                      - s_vals(u - da + db) + s_vals(u - da - db)) / (4 * h ** 2)
            lap += ginv[a, b] * dd
    return float(np.abs(lap).max())


def congruence_transversality(curve: IsotropicCurve, z1: complex,
                              z2: complex) -> float:
    """Largest principal angle between the congruence bundles at two base
    points; positive values certify the fibers are distinct spheres."""
    V1 = _congruence_frame_values(curve, z1)
    V2 = _congruence_frame_values(curve, z2)
    return float(np.max(scipy.linalg.subspace_angles(V1.T, V2.T)))
