"""Curated charts and seeds with known ground truth.

Every ``expected`` block carries a provenance note: values marked *derived*
are frozen from the independent finite-difference curvature oracle in the
test-suite, *trivial* ones follow from the construction itself.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ChartFormatError
from .jets import Chart, ExpressionChart, random_trig_chart

SQ3 = "sqrt(3)"


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    kind: str                     # "chart" or "seed"
    expected: dict
    provenance: str
    factory: Callable[[], object] = field(repr=False)

    def chart(self) -> Chart:
        """The chart itself, or the envelope chart built from the seed."""
        obj = self.factory()
        if self.kind == "seed":
            from .envelope import envelope_to_chart
            return envelope_to_chart(obj["curve"](), obj["domain"])
        return obj

    def seed(self):
        if self.kind != "seed":
            raise ChartFormatError(f"catalog entry {self.name} is not a seed")
        return self.factory()


def _veronese_s4() -> Chart:
    # image of the degree-2 sphere embedding; round metric of curvature 1/3
    a = f"cos(u1)*cos(u2)"
    b = f"sin(u1)*cos(u2)"
    c = f"sin(u2)"
    return ExpressionChart(
        dim_m=2, codim_p=2,
        domain=[[-7.0, 7.0], [-1.05, 1.05]],
        components=[
            f"{SQ3}*{a}*{b}",
            f"{SQ3}*{a}*{c}",
            f"{SQ3}*{b}*{c}",
            f"({SQ3}/2)*(({a})^2 - ({b})^2)",
            f"(({a})^2 + ({b})^2 - 2*({c})^2)/2",
        ],
        name="veronese_s4")


def _clifford_torus(extra_zero: bool) -> Chart:
    comps = ["cos(u1)/sqrt(2)", "sin(u1)/sqrt(2)",
             "cos(u2)/sqrt(2)", "sin(u2)/sqrt(2)"]
    p = 1
    if extra_zero:
        comps.append("0*u1")
        p = 2
    return ExpressionChart(
        dim_m=2, codim_p=p, domain=[[-7.0, 7.0], [-7.0, 7.0]],
        components=comps,
        name="clifford_torus_s3_in_s4" if extra_zero else "clifford_torus_s3")


def _totally_geodesic_s2_s4() -> Chart:
    return ExpressionChart(
        dim_m=2, codim_p=2, domain=[[-7.0, 7.0], [-1.2, 1.2]],
        components=["cos(u1)*cos(u2)", "sin(u1)*cos(u2)", "sin(u2)",
                    "0*u1", "0*u2"],
        name="totally_geodesic_s2_s4")


def _hopf_veronese_s5() -> Chart:
    # section lift through the Hopf fibration of the degree-2 holomorphic
    # curve w -> [1, sqrt(2) w, w^2]; super-conformal wherever immersed
    d = "(1 + u1^2 + u2^2)"
    return ExpressionChart(
        dim_m=2, codim_p=3, domain=[[-1.5, 1.5], [-1.5, 1.5]],
        components=[
            f"1/{d}",
            "0*u1",
            f"sqrt(2)*u1/{d}",
            f"sqrt(2)*u2/{d}",
            f"(u1^2 - u2^2)/{d}",
            f"2*u1*u2/{d}",
        ],
        name="hopf_veronese_s5")


def _helicoid_seed():
    from .envelope import WeierstrassSeed, curve_from_weierstrass

    seed = WeierstrassSeed(
        m=3,
        components=["-1j*cosh(z)", "-sinh(z)", "1j*z", "0*z", "0*z"],
        name="helicoid_seed_m3")
    domain = np.array([[-0.7, 0.7], [-0.7, 0.7], [0.0, 2.0 * np.pi]])
    return {"seed": seed,
            "curve": lambda: curve_from_weierstrass(seed),
            "domain": domain}


def _quintic_seed():
    # genuinely five-dimensional null curve; its envelope has L != 0, so the
    # extended invariant block (eta_3, Ytilde, F, G) is exercised
    from .envelope import WeierstrassSeed, curve_from_weierstrass

    seed = WeierstrassSeed(
        m=3,
        components=[
            "-z^5/40 + z^3/12 + 3*z/8",
            "1j*(z^5/40 - z^3/12 + 5*z/8)",
            "z^5/40 + z^3/12 + 5*z/8",
            "-1j*(z^5/40 + z^3/12 - 3*z/8)",
            "1j*z^2/2",
        ],
        name="quintic_seed_m3")
    domain = np.array([[0.25, 0.95], [0.25, 0.95], [0.0, 2.0 * np.pi]])
    return {"seed": seed,
            "curve": lambda: curve_from_weierstrass(seed,
                                                    domain=[[0.2, 1.0],
                                                            [0.2, 1.0]]),
            "domain": domain}


_ENTRIES = {
    "veronese_s4": CatalogEntry(
        name="veronese_s4", kind="chart",
        expected={"wintgen": True, "umbilic": False,
                  "K": 1.0 / 3.0, "K_N": 2.0 / 3.0, "H_sq": 0.0,
                  "deficit": 0.0},
        provenance=("derived: K, K_N, H frozen from the finite-difference "
                    "curvature oracle at 10 interior points"),
        factory=_veronese_s4),
    "clifford_torus_s3": CatalogEntry(
        name="clifford_torus_s3", kind="chart",
        expected={"wintgen": False, "umbilic": False,
                  "K": 0.0, "K_N": 0.0, "H_sq": 0.0},
        provenance=("derived: flat minimal torus, principal curvatures +-1 "
                    "checked against the finite-difference oracle"),
        factory=lambda: _clifford_torus(False)),
    "clifford_torus_s3_in_s4": CatalogEntry(
        name="clifford_torus_s3_in_s4", kind="chart",
        expected={"wintgen": False, "umbilic": False,
                  "K": 0.0, "K_N": 0.0, "H_sq": 0.0, "deficit": 1.0},
        provenance=("derived: totally geodesic second normal direction; "
                    "deficit 1 verified numerically"),
        factory=lambda: _clifford_torus(True)),
    "totally_geodesic_s2_s4": CatalogEntry(
        name="totally_geodesic_s2_s4", kind="chart",
        expected={"wintgen": False, "umbilic": True},
        provenance="trivial: equatorial round sphere, vanishing second form",
        factory=_totally_geodesic_s2_s4),
    "hopf_veronese_s5": CatalogEntry(
        name="hopf_veronese_s5", kind="chart",
        expected={"wintgen": True, "umbilic": False},
        provenance=("derived: section lift of the degree-2 holomorphic curve; "
                    "super-conformality certified numerically (curvatures are "
                    "not constant along the section, so none are frozen)"),
        factory=_hopf_veronese_s5),
    "helicoid_seed_m3": CatalogEntry(
        name="helicoid_seed_m3", kind="seed",
        expected={"wintgen": True, "umbilic": False},
        provenance=("derived: sphere-congruence envelope of the helicoid "
                    "null curve; round-trip certified numerically"),
        factory=_helicoid_seed),
    "quintic_seed_m3": CatalogEntry(
        name="quintic_seed_m3", kind="seed",
        expected={"wintgen": True, "umbilic": False},
        provenance=("derived: degree-five polynomial null curve using the "
                    "whole target space; envelope certified numerically"),
        factory=_quintic_seed),
    "random_trig_m2_p2": CatalogEntry(
        name="random_trig_m2_p2", kind="chart",
        expected={"wintgen": False, "umbilic": False},
        provenance="trivial: fixed-seed fuzzing chart, generic by inspection",
        factory=lambda: random_trig_chart(2, 2, np.random.default_rng(20240817),
                                          nterms=2)),
    "random_trig_m3_p2": CatalogEntry(
        name="random_trig_m3_p2", kind="chart",
        expected={"wintgen": False, "umbilic": False},
        provenance="trivial: fixed-seed fuzzing chart, generic by inspection",
        factory=lambda: random_trig_chart(3, 2, np.random.default_rng(20240818),
                                          nterms=2)),
}


def get_entry(name: str) -> CatalogEntry:
    try:
        return _ENTRIES[name]
    except KeyError:
        raise ChartFormatError(
            f"unknown catalog entry {name!r}; have {sorted(_ENTRIES)}") from None


def entry_names() -> list[str]:
    return sorted(_ENTRIES)


def iter_chart_entries(include_seeds: bool = False):
    """Entries that resolve to plain charts (seeds optional: they resolve to
    their envelope charts and cost noticeably more per evaluation)."""
    for name in entry_names():
        e = _ENTRIES[name]
        if e.kind == "chart" or include_seeds:
            yield e


def random_chart(dim_m: int, codim_p: int, seed: int) -> Chart:
    """Deterministic random spherical trig chart for fuzzing suites."""
    return random_trig_chart(dim_m, codim_p, np.random.default_rng(seed))
