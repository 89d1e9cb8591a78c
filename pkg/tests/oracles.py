"""Independent numerical oracles used only by the test-suite.

Everything here differentiates charts by central finite differences on plain
value evaluations, deliberately avoiding the exact-jet machinery it checks.
"""
import numpy as np

# 4th-order accurate central stencils for d^k/dx^k, k = 1..4
FD_STENCILS = {
    1: ([-2, -1, 1, 2], [1 / 12, -2 / 3, 2 / 3, -1 / 12]),
    2: ([-2, -1, 0, 1, 2], [-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12]),
    3: ([-3, -2, -1, 1, 2, 3], [1 / 8, -1, 13 / 8, -13 / 8, 1, -1 / 8]),
    4: ([-3, -2, -1, 0, 1, 2, 3], [-1 / 6, 2, -13 / 2, 28 / 3, -13 / 2, 2, -1 / 6]),
}


def fd_partial(func, u, alpha, h=1e-2):
    """Mixed partial d^alpha func(u) by composing 4th-order central stencils.

    ``func`` maps a parameter vector to a numpy array.
    """
    alpha = list(alpha)
    axis = next((i for i, a in enumerate(alpha) if a > 0), None)
    if axis is None:
        return np.asarray(func(u), dtype=float)
    k = alpha[axis]
    rest = alpha.copy()
    rest[axis] = 0
    offsets, weights = FD_STENCILS[k]
    acc = None
    for off, w in zip(offsets, weights):
        shifted = np.array(u, dtype=float)
        shifted[axis] += off * h
        term = w * fd_partial(func, shifted, rest, h=h)
        acc = term if acc is None else acc + term
    return acc / h ** k


def fd_metric(chart, u, h=1e-4):
    m = chart.dim_m
    df = np.array([fd_partial(chart.value, u, [1 if i == a else 0 for i in range(m)], h=h)
                   for a in range(m)])
    return df @ df.T


def fd_gauss_curvature_2d(chart, u, h=1e-3):
    """Intrinsic Gauss curvature of a 2d chart by the Brioschi formula,
    with all metric derivatives taken by finite differences."""
    def metric(v):
        return fd_metric(chart, v, h=h)

    def comp(v, i, j):
        return metric(v)[i, j]

    def d(fun, v, axis, step=h):
        vp = np.array(v, dtype=float)
        vm = np.array(v, dtype=float)
        vp[axis] += step
        vm[axis] -= step
        return (fun(vp) - fun(vm)) / (2 * step)

    E = comp(u, 0, 0)
    F = comp(u, 0, 1)
    G = comp(u, 1, 1)
    Eu = d(lambda v: comp(v, 0, 0), u, 0)
    Ev = d(lambda v: comp(v, 0, 0), u, 1)
    Fu = d(lambda v: comp(v, 0, 1), u, 0)
    Fv = d(lambda v: comp(v, 0, 1), u, 1)
    Gu = d(lambda v: comp(v, 1, 1), u, 0)
    Gv = d(lambda v: comp(v, 1, 1), u, 1)
    Evv = d(lambda v: d(lambda w: comp(w, 0, 0), v, 1), u, 1)
    Guu = d(lambda v: d(lambda w: comp(w, 1, 1), v, 0), u, 0)
    Fuv = d(lambda v: d(lambda w: comp(w, 0, 1), v, 0), u, 1)
    det = E * G - F * F
    M1 = np.array([
        [-0.5 * Evv + Fuv - 0.5 * Guu, 0.5 * Eu, Fu - 0.5 * Ev],
        [Fv - 0.5 * Gu, E, F],
        [0.5 * Gv, F, G]])
    M2 = np.array([
        [0.0, 0.5 * Ev, 0.5 * Gu],
        [0.5 * Ev, E, F],
        [0.5 * Gu, F, G]])
    return (np.linalg.det(M1) - np.linalg.det(M2)) / det ** 2


def fd_shape_operators(chart, u, h=1e-4):
    """Second fundamental form in orthonormal frames, all via central FD."""
    m = chart.dim_m
    f = chart.value(u)
    df = np.array([fd_partial(chart.value, u, [1 if i == a else 0 for i in range(m)], h=h)
                   for a in range(m)])
    # orthonormal tangent frame by Gram-Schmidt, same pivot convention as prod
    frame = []
    coeffs = []
    for i in range(m):
        v = df[i].copy()
        c = np.zeros(m)
        c[i] = 1.0
        for w, cw in zip(frame, coeffs):
            pr = float(w @ v)
            v -= pr * w
            c -= pr * cw
        nrm = np.linalg.norm(v)
        frame.append(v / nrm)
        coeffs.append(c / nrm)
    frame = np.array(frame)
    coeffs = np.array(coeffs)
    span = np.vstack([f[None, :], frame])
    # complete to an orthonormal normal frame, deterministic largest-residual
    normals = []
    basis = [row / np.linalg.norm(row) for row in span]
    ambient = chart.ambient_dim
    while len(normals) < chart.codim_p:
        best, vec = -1.0, None
        for idx in range(ambient):
            v = np.zeros(ambient)
            v[idx] = 1.0
            for b in basis:
                v -= (b @ v) * b
            if np.linalg.norm(v) > best:
                best, vec = np.linalg.norm(v), v
        vec = vec / np.linalg.norm(vec)
        basis.append(vec)
        normals.append(vec)
    normals = np.array(normals)
    d2 = {}
    for a in range(m):
        for b in range(a, m):
            alpha = [0] * m
            alpha[a] += 1
            alpha[b] += 1
            d2[(a, b)] = fd_partial(chart.value, u, alpha, h=h)
            d2[(b, a)] = d2[(a, b)]
    h_coord = np.zeros((chart.codim_p, m, m))
    for r in range(chart.codim_p):
        for a in range(m):
            for b in range(m):
                h_coord[r, a, b] = normals[r] @ d2[(a, b)]
    hh = np.einsum("ia,jb,rab->rij", coeffs, coeffs, h_coord)
    return 0.5 * (hh + np.transpose(hh, (0, 2, 1))), normals, frame


def fd_curvatures(chart, u, c=1.0, h=1e-4):
    """(K, K_N, H_sq) via the FD shape operators and the Gauss/Ricci
    equations, normalised exactly as in the production module but computed
    from an entirely independent derivative path."""
    hh, _, _ = fd_shape_operators(chart, u, h=h)
    p, m, _ = hh.shape
    H = np.einsum("rii->r", hh) / m
    tot = 0.0
    for r in range(p):
        tr = np.trace(hh[r])
        tot += 0.5 * (tr * tr - np.sum(hh[r] * hh[r]))
    K = c + 2.0 * tot / (m * (m - 1))
    tot = 0.0
    for r in range(p):
        for s in range(r + 1, p):
            comm = hh[r] @ hh[s] - hh[s] @ hh[r]
            iu = np.triu_indices(m, k=1)
            tot += float(np.sum(comm[iu] ** 2))
    K_N = 2.0 * np.sqrt(tot) / (m * (m - 1))
    return float(K), float(K_N), float(H @ H)
