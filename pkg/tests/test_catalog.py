import numpy as np
import pytest

from wintgen_kit.catalog import entry_names, get_entry, random_chart
from wintgen_kit.ddvv import evaluate_point, is_wintgen_ideal
from wintgen_kit.errors import ChartFormatError


def interior_points(chart, n, seed=0):
    rng = np.random.default_rng(seed)
    lo, hi = chart.domain[:, 0], chart.domain[:, 1]
    return [lo + (hi - lo) * (0.2 + 0.6 * rng.random(chart.dim_m))
            for _ in range(n)]


def test_unknown_entry():
    with pytest.raises(ChartFormatError):
        get_entry("no_such_chart")


def test_expected_values_reproduced():
    for name in entry_names():
        entry = get_entry(name)
        chart = entry.chart()
        exp = entry.expected
        for u in interior_points(chart, 4, seed=hash(name) % 1000):
            rep = evaluate_point(chart, u)
            if "umbilic" in exp:
                assert rep.umbilic == exp["umbilic"], name
            if "wintgen" in exp:
                assert is_wintgen_ideal(rep, 1e-6) == exp["wintgen"], name
            if "K" in exp:
                assert rep.K == pytest.approx(exp["K"], abs=1e-6), name
            if "K_N" in exp:
                assert rep.K_N == pytest.approx(exp["K_N"], abs=1e-6), name
            if "H_sq" in exp:
                assert rep.H_sq == pytest.approx(exp["H_sq"], abs=1e-9), name
            if "deficit" in exp:
                assert rep.deficit == pytest.approx(exp["deficit"],
                                                    abs=1e-6), name


def test_entries_have_provenance():
    for name in entry_names():
        entry = get_entry(name)
        assert entry.provenance.startswith(("derived", "trivial"))
        assert entry.kind in ("chart", "seed")


def test_seed_entries_expose_seeds():
    obj = get_entry("helicoid_seed_m3").seed()
    assert obj["seed"].m == 3
    with pytest.raises(ChartFormatError):
        get_entry("veronese_s4").seed()


def test_random_chart_deterministic():
    a = random_chart(2, 2, seed=5)
    b = random_chart(2, 2, seed=5)
    u = np.array([1.0, 2.0])
    np.testing.assert_array_equal(a.value(u), b.value(u))
