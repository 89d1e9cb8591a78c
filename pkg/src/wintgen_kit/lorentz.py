"""Lorentz linear algebra in R^{n}_1 and the light-cone model of the sphere.

Vectors are plain 1-d numpy arrays with the signature (-,+,...,+), index 0
timelike.  Points of the round sphere S^{n-2} correspond to null rays through
vectors (1, f).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateRankError,
    DimensionMismatchError,
    DomainError,
    SignatureError,
)

TOL_NULL = 1e-9
TOL_FRAME = 1e-8
TOL_RANK = 1e-10
TOL_SPHERE = 1e-9


def signs(n: int) -> np.ndarray:
    """Metric sign vector (-1, +1, ..., +1) of length n."""
    s = np.ones(n)
    s[0] = -1.0
    return s


def inner(a, b) -> float:
    """Lorentz inner product -a0*b0 + sum_k a_k b_k."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionMismatchError(
            f"inner product needs equal-length vectors, got {a.shape} vs {b.shape}")
    return float(np.dot(a, b) - 2.0 * a[0] * b[0])


def gram(vectors: np.ndarray) -> np.ndarray:
    """Gram matrix of the rows of ``vectors`` under the Lorentz product."""
    v = np.asarray(vectors, dtype=float)
    return (v * signs(v.shape[1])) @ v.T


def classify(v, tol_null: float = TOL_NULL) -> str:
    """Classify a vector as 'timelike', 'lightlike' or 'spacelike'.

    The null band scales with the squared vector size so the classification is
    homothety-consistent.
    """
    v = np.asarray(v, dtype=float)
    q = inner(v, v)
    scale = float(np.dot(v, v))
    band = tol_null * max(scale, 1.0)
    if q < -band:
        return "timelike"
    if q > band:
        return "spacelike"
    return "lightlike"


def lift_to_light_cone(f) -> np.ndarray:
    """Map a unit vector f in R^{n-1} to the null vector (1, f).

    Raises DomainError (carrying ``|f|-1``) when f is off the sphere.
    """
    f = np.asarray(f, dtype=float)
    defect = float(np.linalg.norm(f) - 1.0)
    if abs(defect) > TOL_SPHERE:
        raise DomainError(f"light-cone lift needs a unit vector, |f|-1 = {defect:.3e}",
                          defect=defect)
    return np.concatenate(([1.0], f))


@dataclass
class LorentzBasis:
    """Ordered list of Lorentz vectors with a cached Gram matrix."""

    vectors: np.ndarray
    gram: np.ndarray = field(default=None)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.gram is None:
            self.gram = gram(self.vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    def signature(self, tol: float = TOL_FRAME) -> tuple[int, int]:
        """(n_time, n_space) read off the diagonal of the Gram matrix."""
        d = np.diag(self.gram)
        return int(np.sum(d < -tol)), int(np.sum(d > tol))

    def is_pseudo_orthonormal(self, tol: float = TOL_FRAME) -> bool:
        d = np.abs(np.abs(np.diag(self.gram)) - 1.0)
        off = self.gram - np.diag(np.diag(self.gram))
        return bool(d.max() <= tol and np.abs(off).max() <= tol)


def orthonormalize(vs, expected_signature: tuple[int, int],
                   tol_rank: float = TOL_RANK,
                   tol_frame: float = TOL_FRAME) -> LorentzBasis:
    """Pseudo-orthonormal basis of span(vs) with the requested signature.

    Candidate timelike directions are processed first (most negative
    self-product first), then the spacelike rest by modified Gram-Schmidt
    with one re-orthogonalisation pass; this stays stable near the null cone.
    """
    V = np.asarray(vs, dtype=float)
    if V.ndim != 2:
        V = np.vstack(vs)
    k, n = V.shape
    n_time, n_space = expected_signature
    if n_time + n_space != k:
        raise DimensionMismatchError(
            f"expected signature {expected_signature} for {k} vectors")

    U, sv, W = np.linalg.svd(V)
    if sv[-1] < tol_rank * sv[0]:
        raise DegenerateRankError(
            f"input vectors rank deficient (sv ratio {sv[-1]/sv[0]:.2e})")

    # Seed directions: diagonalise the small Gram of the span, process the
    # most-negative (timelike) directions first.  Null input vectors (points
    # on the cone) then never start the Gram-Schmidt sweep.
    Q = W[:k]
    small = (Q * signs(n)) @ Q.T
    evals, evecs = np.linalg.eigh(small)
    work = [evecs[:, i] @ Q for i in range(k)]
    out = []
    diag = []

    def project_off(w):
        for u, e in zip(out, diag):
            w = w - e * inner(u, w) * u
        return w

    for w in work:
        for _ in range(2):  # one re-orthogonalisation pass
            w = project_off(w)
        q = inner(w, w)
        nrm = float(np.linalg.norm(w))
        if nrm == 0.0 or abs(q) < tol_rank * nrm * nrm:
            raise DegenerateRankError("vector degenerates onto the null cone")
        e = -1.0 if q < 0 else 1.0
        out.append(w / np.sqrt(abs(q)))
        diag.append(e)

    got = (diag.count(-1.0), diag.count(1.0))
    if got != (n_time, n_space):
        raise SignatureError(
            f"requested signature {expected_signature}, got {got}")

    # canonical order: timelike block first
    idx = np.argsort(diag)
    basis = LorentzBasis(np.array([out[i] for i in idx]))
    target = np.diag([-1.0] * n_time + [1.0] * n_space)
    if np.abs(basis.gram - target).max() > tol_frame:
        raise SignatureError("orthonormalisation failed to reach tolerance")
    return basis


def _unit_sphere_grid(dim: int, count: int) -> np.ndarray:
    """Deterministic spread of ``count`` points on S^{dim-1}."""
    if count <= 0:
        return np.zeros((0, dim))
    if dim == 1:
        pts = [[1.0], [-1.0]]
        return np.array(pts[:count])
    if dim == 2:
        th = 2.0 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(th), np.sin(th)])
    if dim == 3:
        # spiral points (Bauer)
        i = np.arange(count)
        phi = np.arccos(np.clip(-1.0 + (2.0 * i + 1.0) / count, -1, 1))
        theta = np.sqrt(count * np.pi) * phi
        return np.column_stack([np.sin(phi) * np.cos(theta),
                                np.sin(phi) * np.sin(theta),
                                np.cos(phi)])
    # product angle grid for higher spheres; uniform enough for sampling
    per = max(2, int(np.ceil(count ** (1.0 / (dim - 1)))))
    grids = np.meshgrid(*[np.linspace(0, np.pi, per)] * (dim - 2)
                        + [np.linspace(0, 2 * np.pi, per, endpoint=False)],
                        indexing="ij")
    angles = np.stack([g.ravel() for g in grids], axis=-1)[:count]
    pts = np.ones((angles.shape[0], dim))
    for j in range(dim - 1):
        pts[:, j] *= np.cos(angles[:, j])
        pts[:, j + 1:] *= np.sin(angles[:, j])[:, None]
    return pts


def null_directions(basis: LorentzBasis, sample_count: int) -> list[np.ndarray]:
    """Null vectors e0 + u with u on a grid of the unit sphere of the
    spacelike part of a (1, d-1) basis.

    For a (1,1) basis the sphere is S^0 and at most the two rays e0 +- e1
    exist.
    """
    n_time, n_space = basis.signature()
    if n_time != 1 or n_space < 1:
        raise SignatureError(
            f"null directions need signature (1, d-1), got ({n_time},{n_space})")
    e0 = basis.vectors[0]
    space = basis.vectors[1:]
    count = sample_count if n_space > 1 else min(sample_count, 2)
    pts = _unit_sphere_grid(n_space, count)
    return [e0 + pts[i] @ space for i in range(pts.shape[0])]


def random_lorentz_transform(rng: np.random.Generator, n: int,
                             scale: float = 0.5) -> np.ndarray:
    """exp(G A) with A antisymmetric, entries in [-scale, scale].

    G A is antisymmetric with respect to the metric, so the exponential lies
    in O(n-1, 1); the bounded generator keeps it well-conditioned while
    mixing boosts and rotations.
    """
    A = rng.uniform(-scale, scale, size=(n, n))
    A = A - A.T
    M = (signs(n)[:, None]) * A
    return scipy.linalg.expm(M)
