import numpy as np
import pytest

from wintgen_kit import lorentz
from wintgen_kit.catalog import get_entry
from wintgen_kit.errors import NotWintgenError, UmbilicError
from wintgen_kit.jets import MoebiusTransformedChart
from wintgen_kit.moebius import (
    build_frame,
    canonical_lift,
    exact_integrability_residuals,
    integrability_residuals,
    laplacian_lift,
    second_gauss_map_residual,
    wintgen_invariants,
)
from wintgen_kit.surface import fundamental_forms


def lorentz_dot(a, b):
    return float(np.dot(a, b) - 2.0 * a[0] * b[0])


def envelope_chart(name="helicoid_seed_m3"):
    from wintgen_kit.envelope import envelope_to_chart

    obj = get_entry(name).seed()
    return envelope_to_chart(obj["curve"](), obj["domain"])


# ------------------------------------------------------------ canonical lift

def test_canonical_lift_veronese():
    chart = get_entry("veronese_s4").chart()
    rng = np.random.default_rng(2)
    rhos = []
    for _ in range(10):
        u = np.array([rng.uniform(0, 6), rng.uniform(-0.9, 0.9)])
        pg = fundamental_forms(chart, u)
        Y, rho = canonical_lift(pg)
        rhos.append(rho)
        np.testing.assert_allclose(Y, rho * np.r_[1.0, pg.f], atol=1e-15)
        assert abs(lorentz_dot(Y, Y)) < 1e-15
    rhos = np.array(rhos)
    # homogeneity: the conformal factor is constant over the surface
    assert rhos.std() / rhos.mean() <= 1e-8


def test_canonical_lift_umbilic_error():
    chart = get_entry("totally_geodesic_s2_s4").chart()
    pg = fundamental_forms(chart, np.array([0.3, 0.2]))
    with pytest.raises(UmbilicError):
        canonical_lift(pg)


def test_canonical_lift_scaling():
    # rho equals half the norm of the traceless second form by definition
    chart = get_entry("clifford_torus_s3").chart()
    pg = fundamental_forms(chart, np.array([0.7, 0.4]))
    _, rho = canonical_lift(pg)
    assert rho == pytest.approx(np.sqrt(np.sum(pg.traceless_II ** 2)) / 2.0,
                                rel=1e-12)


# ------------------------------------------------------------------- frames

@pytest.mark.parametrize("name,u", [
    ("veronese_s4", [0.4, 0.3]),
    ("clifford_torus_s3_in_s4", [0.5, 1.2]),
    ("hopf_veronese_s5", [0.4, -0.2]),
    ("random_trig_m3_p2", [2.0, 3.0, 1.5]),
])
def test_frame_pseudo_orthonormal(name, u):
    chart = get_entry(name).chart()
    fr = build_frame(chart, np.array(u, dtype=float))
    G = fr.full_frame_gram()
    n = G.shape[0]
    target = np.eye(n)
    target[0, 0] = target[1, 1] = 0.0
    target[0, 1] = target[1, 0] = 1.0
    assert np.abs(G - target).max() <= 1e-8


@pytest.mark.parametrize("name,u", [
    ("veronese_s4", [0.4, 0.3]),
    ("clifford_torus_s3_in_s4", [0.5, 1.2]),
    ("hopf_veronese_s5", [0.4, -0.2]),
    ("random_trig_m2_p2", [2.5, 1.0]),
    ("random_trig_m3_p2", [2.0, 3.0, 1.5]),
])
def test_conformal_form_identities(name, u):
    fr = build_frame(get_entry(name).chart(), np.array(u, dtype=float))
    for r in range(fr.B.shape[0]):
        assert abs(np.trace(fr.B[r])) <= 1e-9
    assert fr.B_sq == pytest.approx(4.0, abs=1e-7)


def test_moebius_form_vanishes_on_veronese():
    fr = build_frame(get_entry("veronese_s4").chart(), np.array([1.1, -0.3]))
    assert np.abs(fr.C).max() <= 1e-6


def test_frame_N_matches_laplacian_definition():
    # closed form of N against the independent Laplace-Beltrami route
    for name, u in [("veronese_s4", [0.4, 0.3]),
                    ("hopf_veronese_s5", [0.3, 0.5]),
                    ("random_trig_m3_p2", [2.0, 3.0, 1.5])]:
        fr = build_frame(get_entry(name).chart(), np.array(u, dtype=float))
        lap = laplacian_lift(fr.context)
        m = fr.A.shape[0]
        N_ref = -lap / m - lorentz_dot(lap, lap) / (2 * m * m) * fr.Y
        np.testing.assert_allclose(fr.N, N_ref, atol=1e-10)


def test_B_matches_scaled_traceless_second_form():
    for name, u in [("veronese_s4", [0.4, 0.3]),
                    ("random_trig_m2_p2", [2.5, 1.0])]:
        chart = get_entry(name).chart()
        u = np.array(u, dtype=float)
        fr = build_frame(chart, u)
        pg = fundamental_forms(chart, u)
        np.testing.assert_allclose(fr.B,
                                   pg.traceless_II / np.sqrt(pg.rho_sq),
                                   atol=1e-9)
        np.testing.assert_allclose(fr.context.B_pairing, fr.B, atol=1e-9)


def test_moebius_metric_relation():
    # <dY, dY> = rho^2 df.df, read off the jet fields
    ctx = build_frame(get_entry("hopf_veronese_s5").chart(),
                      np.array([0.4, -0.2])).context
    m = ctx.m
    for a in range(m):
        for b in range(m):
            g_ab = ctx.g[a][b].value
            ref = ctx.rho_sq.value * ctx.I[a][b].value
            assert g_ab == pytest.approx(ref, rel=1e-12)


def test_build_frame_umbilic_error():
    with pytest.raises(UmbilicError):
        build_frame(get_entry("totally_geodesic_s2_s4").chart(),
                    np.array([0.3, 0.2]))


# ------------------------------------------------------------- integrability

def test_integrability_exact_oracle():
    for name, u in [("veronese_s4", [0.4, 0.3]),
                    ("hopf_veronese_s5", [0.4, -0.2]),
                    ("random_trig_m3_p2", [2.0, 3.0, 1.5])]:
        res = exact_integrability_residuals(get_entry(name).chart(),
                                            np.array(u, dtype=float))
        assert max(res.values()) <= 1e-9, (name, res)


def test_integrability_stencil_convergence():
    chart = get_entry("random_trig_m3_p2").chart()
    u = np.array([2.0, 3.0, 1.5])
    r1 = integrability_residuals(chart, u, h=2e-3)
    r2 = integrability_residuals(chart, u, h=1e-3)
    for key in ("equa1", "equa2", "equa3", "equa4", "equa5"):
        ratio = r1[key] / r2[key]
        assert 3.5 <= ratio <= 4.5, (key, ratio)


def test_integrability_veronese_magnitudes():
    chart = get_entry("veronese_s4").chart()
    u = np.array([0.4, 0.3])
    r = integrability_residuals(chart, u, h=1e-2)
    assert max(v for k, v in r.items() if k != "h") <= 1e-3
    r = integrability_residuals(chart, u, h=1e-3)
    assert max(v for k, v in r.items() if k != "h") <= 1e-5


def test_stencil_covariant_derivatives_match_exact():
    # dual-route check: the stencil covariant derivatives must agree with
    # the exact jet-field values for B and C
    chart = get_entry("random_trig_m3_p2").chart()
    u = np.array([2.0, 3.0, 1.5])
    ctx = build_frame(chart, u).context
    Bx = ctx.covariant_B()
    Cx = ctx.covariant_C()
    h = 1e-4
    m = ctx.m
    plus, minus = [], []
    for a in range(m):
        du = np.zeros(m)
        du[a] = h
        plus.append(build_frame(chart, u + du,
                                pivot_order=ctx.normal_pivots))
        minus.append(build_frame(chart, u - du,
                                 pivot_order=ctx.normal_pivots))
    E = ctx.Ec_vals
    dB = np.einsum("ka,a...->k...",
                   E, np.array([(plus[a].B - minus[a].B) / (2 * h)
                                for a in range(m)]))
    p = ctx.p
    B_st = np.zeros_like(Bx)
    for r in range(p):
        for i in range(m):
            for j in range(m):
                for k in range(m):
                    B_st[r, i, j, k] = (
                        dB[k][r, i, j]
                        - sum(ctx.omega[i][l][k] * ctx.B[r, l, j]
                              for l in range(m))
                        - sum(ctx.omega[j][l][k] * ctx.B[r, i, l]
                              for l in range(m))
                        + sum(ctx.theta[s][r][k] * ctx.B[s, i, j]
                              for s in range(p)))
    assert np.abs(B_st - Bx).max() <= 1e-5  # O(h^2) gap at h = 1e-4


# --------------------------------------------------------- Moebius invariance

def test_moebius_invariance_of_frame_scalars():
    rng = np.random.default_rng(12)
    for name, u in [("veronese_s4", [0.4, 0.3]),
                    ("hopf_veronese_s5", [0.4, -0.2])]:
        chart = get_entry(name).chart()
        u = np.array(u, dtype=float)
        fr = build_frame(chart, u)
        g0 = np.array([[c.value for c in row] for row in
                       [[fr.context.g[a][b] for b in range(fr.context.m)]
                        for a in range(fr.context.m)]])
        for _ in range(5):
            T = lorentz.random_lorentz_transform(rng, chart.ambient_dim + 1,
                                                 scale=0.35)
            tr = build_frame(MoebiusTransformedChart(chart, T), u)
            gT = np.array([[c.value for c in row] for row in
                           [[tr.context.g[a][b] for b in range(tr.context.m)]
                            for a in range(tr.context.m)]])
            assert np.abs(gT - g0).max() <= 1e-8
            assert tr.B_sq == pytest.approx(fr.B_sq, abs=1e-6)
            assert tr.Phi_sq == pytest.approx(fr.Phi_sq, abs=1e-6)
            assert tr.trace_A == pytest.approx(fr.trace_A, abs=1e-6)


def test_moebius_invariance_of_wintgen_scalars():
    chart = envelope_chart("quintic_seed_m3")
    u = np.array([0.61, 0.87, 1.26])
    inv0 = wintgen_invariants(chart, u, h=1e-3)
    rng = np.random.default_rng(5)
    T = lorentz.random_lorentz_transform(rng, chart.ambient_dim + 1,
                                         scale=0.2)
    invT = wintgen_invariants(MoebiusTransformedChart(chart, T), u, h=1e-3)
    assert invT.U ** 2 + invT.V ** 2 == pytest.approx(
        inv0.U ** 2 + inv0.V ** 2, rel=1e-6, abs=1e-6)
    assert invT.L ** 2 == pytest.approx(inv0.L ** 2, rel=1e-6, abs=1e-6)
    assert float(np.sum(invT.S_alpha ** 2 + invT.T_alpha ** 2)) == \
        pytest.approx(float(np.sum(inv0.S_alpha ** 2 + inv0.T_alpha ** 2)),
                      rel=1e-6, abs=1e-6)


# ---------------------------------------------------------------- invariants

def test_wintgen_invariants_veronese_vacuous_blocks():
    inv = wintgen_invariants(get_entry("veronese_s4").chart(),
                             np.array([0.4, 0.3]), h=1e-3)
    assert inv.L_a.size == 0 and inv.S_alpha.size == 0
    assert inv.eta3 is None and inv.F is None
    assert np.isfinite(inv.U) and np.isfinite(inv.V)
    assert max(inv.residuals.values()) <= 1e-5


def test_wintgen_invariants_envelope_identities():
    chart = envelope_chart()
    u = np.array([0.2, 0.3, 1.0])
    inv = wintgen_invariants(chart, u, h=1e-3)
    assert inv.residuals["omega_pair_partner"] <= 1e-5
    assert inv.residuals["gauge_combination"] <= 1e-5
    assert inv.residuals["moebius_form_relations"] <= 1e-6


def test_wintgen_invariants_eta_frame():
    chart = envelope_chart("quintic_seed_m3")
    u = np.array([0.5, 0.77, 2.11])
    inv = wintgen_invariants(chart, u, h=1e-3)
    assert abs(inv.L) > 0.5
    Y = inv.frame.Y
    for eta in (inv.eta1, inv.eta2, inv.eta3):
        assert lorentz_dot(eta, eta) == pytest.approx(1.0, abs=1e-8)
        assert abs(lorentz_dot(eta, Y)) <= 1e-9
    assert lorentz_dot(inv.Ytilde, inv.Ytilde) == pytest.approx(0.0, abs=1e-8)
    assert lorentz_dot(inv.Ytilde, Y) == pytest.approx(1.0, abs=1e-9)


def test_wintgen_invariants_requires_equality_case():
    with pytest.raises(NotWintgenError):
        wintgen_invariants(get_entry("clifford_torus_s3_in_s4").chart(),
                           np.array([0.4, 0.3]))


def test_second_gauss_map_identity_converges():
    chart = get_entry("hopf_veronese_s5").chart()
    u = np.array([0.4, -0.2])
    r1 = second_gauss_map_residual(chart, u, h=2e-3)
    r2 = second_gauss_map_residual(chart, u, h=1e-3)
    assert r2 <= 3e-6
    assert 3.0 <= r1 / r2 <= 5.0
