import itertools

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from wintgen_kit import jets
from wintgen_kit.errors import (
    ChartFormatError,
    DimensionMismatchError,
    DomainError,
    EvaluationError,
)
from wintgen_kit.jets import (
    ExpressionChart,
    Jet,
    JetSpace,
    eval_jet,
    grid_points,
    random_trig_chart,
    validate_chart,
)

from .oracles import fd_partial


def clifford_chart():
    r = "1/sqrt(2)"
    return ExpressionChart(
        dim_m=2, codim_p=1, domain=[[-7, 7], [-7, 7]],
        components=[f"cos(u1)*{r}", f"sin(u1)*{r}", f"cos(u2)*{r}", f"sin(u2)*{r}"],
        name="clifford")


# --------------------------------------------------------------------- jets

def test_jet_arithmetic_against_sympy():
    x, y = sp.symbols("x y")
    expr = sp.sin(x * y) * sp.exp(x) / (2 + sp.cos(y)) + sp.sqrt(1 + x ** 2)
    space = JetSpace(2, 4)
    u = (0.3, -0.7)
    jx = Jet.variable(space, 0, u[0])
    jy = Jet.variable(space, 1, u[1])
    val = (jx * jy).sin() * jx.exp() / ((jy.cos() + 2)) + (jx * jx + 1).sqrt()
    for alpha in space.exponents:
        want = float(sp.diff(expr, x, alpha[0], y, alpha[1]).subs({x: u[0], y: u[1]}))
        got = val.partial(alpha)
        assert got == pytest.approx(want, rel=1e-11, abs=1e-11)


@given(st.floats(-1.2, 1.2), st.floats(-1.2, 1.2), st.integers(0, 3))
@settings(max_examples=30, deadline=None)
def test_jet_product_rule(a, b, k):
    space = JetSpace(1, 4)
    ja = Jet.variable(space, 0, a)
    f = ja.sin() * (ja + 2.0)
    g = ja.cos() + ja * ja
    left = (f * g).partial((k,))
    # Leibniz rule from the factor jets
    right = sum(
        float(sp.binomial(k, i)) * f.partial((i,)) * g.partial((k - i,))
        for i in range(k + 1))
    assert left == pytest.approx(right, rel=1e-10, abs=1e-10)


def test_jet_division_and_pow():
    space = JetSpace(1, 4)
    jx = Jet.variable(space, 0, 0.4)
    expr = (1.0 / (jx + 2.0)) ** 3
    x = sp.symbols("x")
    sym = (1 / (x + 2)) ** 3
    for k in range(5):
        want = float(sp.diff(sym, x, k).subs(x, 0.4))
        assert expr.partial((k,)) == pytest.approx(want, rel=1e-12)


def test_jet_fractional_pow_guard():
    space = JetSpace(1, 2)
    jx = Jet.variable(space, 0, -1.0)
    with pytest.raises(EvaluationError):
        jx ** 0.5
    with pytest.raises(EvaluationError):
        jx.sqrt()


def test_jet_complex_dtype():
    space = JetSpace(2, 3)
    jx = Jet.variable(space, 0, 0.2)
    jy = Jet.variable(space, 1, 0.5)
    z = jx + 1j * jy
    w = (z * z).exp()
    zz = complex(0.2, 0.5) ** 2
    assert w.value == pytest.approx(np.exp(zz), rel=1e-12)
    # holomorphy: d/dy = i d/dx
    assert w.partial((0, 1)) == pytest.approx(1j * w.partial((1, 0)), rel=1e-12)


def test_jet_truncate_and_lift():
    s4 = JetSpace(2, 4)
    jx = Jet.variable(s4, 0, 0.3)
    f = jx.sin()
    f2 = f.truncate(2)
    assert f2.order == 2
    assert f2.partial((2, 0)) == pytest.approx(f.partial((2, 0)))
    s3 = JetSpace(3, 4)
    g = f.lift(s3, var_map={0: 0, 1: 2})
    assert g.partial((2, 0, 0)) == pytest.approx(f.partial((2, 0)))
    assert g.partial((0, 1, 0)) == 0.0


# ------------------------------------------------------------------- charts

def test_clifford_jet_values():
    chart = clifford_chart()
    j = eval_jet(chart, np.array([0.0, 0.0]), 1)
    np.testing.assert_allclose(j.value, np.array([1, 0, 1, 0]) / np.sqrt(2),
                               atol=1e-14)
    np.testing.assert_allclose(j.partial((1, 0)),
                               np.array([0, 1, 0, 0]) / np.sqrt(2), atol=1e-14)


def test_clifford_mixed_partial_zero():
    chart = clifford_chart()
    j = eval_jet(chart, np.array([0.3, 0.4]), 2)
    np.testing.assert_allclose(j.partial((1, 1)), np.zeros(4), atol=1e-15)


def test_clifford_fourth_u_derivative():
    chart = clifford_chart()
    j = eval_jet(chart, np.array([0.0, 0.5]), 4)
    # d^4/du^4 cos(u)/sqrt(2) = cos(u)/sqrt(2); cross-check with 4th-order FD
    assert j.partial((4, 0))[0] == pytest.approx(1 / np.sqrt(2), rel=1e-12)
    fd = fd_partial(chart.value, np.array([0.0, 0.5]), [4, 0], h=1e-2)
    assert j.partial((4, 0))[0] == pytest.approx(fd[0], rel=1e-6)


def test_partial_symmetric_storage():
    chart = clifford_chart()
    j = eval_jet(chart, np.array([0.2, 1.1]), 4)
    a = j.partial((2, 1))
    b = j.partials[(2, 1)]
    assert a is b  # one entry per multi-index: symmetry is bit-identical


def test_jets_match_fd_on_catalog_charts():
    from wintgen_kit.catalog import iter_chart_entries

    for entry in iter_chart_entries():
        chart = entry.chart()
        rng = np.random.default_rng(11)
        lo, hi = chart.domain[:, 0], chart.domain[:, 1]
        u = lo + (hi - lo) * (0.35 + 0.3 * rng.random(chart.dim_m))
        j = eval_jet(chart, u, 4)
        for alpha in itertools.product(range(3), repeat=chart.dim_m):
            if not 0 < sum(alpha) <= 4 or max(alpha) > 2:
                continue
            if sum(alpha) <= 2:
                fd, tol = fd_partial(chart.value, u, alpha, h=1e-2), 1e-6
            elif sum(alpha) == 3:
                # Richardson-extrapolated oracle: kills the h^4 truncation
                f1 = fd_partial(chart.value, u, alpha, h=1e-2)
                f2 = fd_partial(chart.value, u, alpha, h=5e-3)
                fd, tol = (16.0 * f2 - f1) / 15.0, 1e-6
            else:
                # order four sits at the oracle's rounding floor at h = 1e-2
                fd, tol = fd_partial(chart.value, u, alpha, h=1e-2), 3e-6
            scale = max(np.max(np.abs(fd)), 1.0)
            assert np.max(np.abs(j.partial(alpha) - fd)) / scale < tol, \
                f"{entry.name} {alpha}"


def test_eval_jet_rejects_bad_order():
    chart = clifford_chart()
    with pytest.raises(DimensionMismatchError):
        eval_jet(chart, np.array([0.1, 0.1]), 5)


def test_eval_jet_outside_domain():
    chart = clifford_chart()
    with pytest.raises(DomainError):
        eval_jet(chart, np.array([-10.0, 0.1]), 2)


def test_expression_singularity_reports_path():
    chart = ExpressionChart(1, 1, [[-1, 1]], ["1/u1", "u1", "u1"])
    with pytest.raises(EvaluationError) as err:
        chart.jet(np.array([0.0]), 2)
    assert "u1" in (err.value.where or "")


def test_expression_rejects_bad_syntax():
    with pytest.raises(ChartFormatError):
        ExpressionChart(1, 1, [[-1, 1]], ["__import__('os')", "u1", "u1"])
    with pytest.raises(ChartFormatError):
        ExpressionChart(1, 1, [[-1, 1]], ["foo(u1)", "u1", "u1"])


# --------------------------------------------------------------- validation

def test_validate_clifford_grid():
    chart = clifford_chart()
    grid = grid_points(chart.domain, [6, 6])
    rep = validate_chart(chart, grid)
    assert rep.max_sphere_defect <= 1e-12
    assert rep.spherical and rep.immersed
    assert not rep.umbilic_suspects


def test_validate_flags_scaled_chart():
    r = "1.01/sqrt(2)"
    chart = ExpressionChart(
        2, 1, [[0, 6.28], [0, 6.28]],
        [f"cos(u1)*{r}", f"sin(u1)*{r}", f"cos(u2)*{r}", f"sin(u2)*{r}"])
    rep = validate_chart(chart, grid_points(chart.domain, [4, 4]))
    assert not rep.spherical


def test_validate_flags_constant_chart():
    chart = ExpressionChart(2, 1, [[0, 1], [0, 1]], ["1", "0*u1", "0*u2", "0"])
    rep = validate_chart(chart, grid_points(chart.domain, [3, 3]))
    assert not rep.immersed


def test_random_trig_charts_are_spherical_immersions():
    rng = np.random.default_rng(5)
    for m, p in [(2, 1), (2, 2), (3, 3)]:
        chart = random_trig_chart(m, p, rng)
        for _ in range(5):
            u = rng.uniform(0.2, 6.0, size=m)
            assert abs(np.linalg.norm(chart.value(u)) - 1.0) < 1e-12
