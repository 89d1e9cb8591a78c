"""Truncated multivariate Taylor arithmetic and jet-capable charts.

A :class:`Jet` stores the Taylor coefficients c_alpha = d^alpha f / alpha! of
a scalar function at a point, for all multi-indices |alpha| <= order.  All
arithmetic propagates the coefficients exactly (to rounding), so derivatives
of compositions of +, *, /, powers, sin, cos, exp, sqrt come out exact;
there is no finite-difference fallback anywhere in the evaluation path.

Charts are maps U subset R^m -> S^{m+p} subset R^{m+p+1} exposing
``jet(u, order)``; the concrete classes cover expression files, the random
fuzzing charts, and Moebius-transformed charts.
"""
from __future__ import annotations

import ast
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ChartFormatError, DimensionMismatchError, DomainError, EvaluationError

MAX_PUBLIC_ORDER = 4
TOL_SPHERE = 1e-9


# ---------------------------------------------------------------------------
# coefficient spaces

class JetSpace:
    """Cached index tables for jets in ``nvars`` variables up to ``order``."""

    _cache: dict[tuple[int, int], "JetSpace"] = {}

    def __new__(cls, nvars: int, order: int):
        key = (nvars, order)
        if key in cls._cache:
            return cls._cache[key]
        self = super().__new__(cls)
        self.nvars = nvars
        self.order = order
        exps = []
        for total in range(order + 1):
            exps.extend(sorted(_exponents(nvars, total), reverse=True))
        self.exponents = tuple(exps)
        self.index = {e: i for i, e in enumerate(self.exponents)}
        self.size = len(self.exponents)
        self.degree = np.array([sum(e) for e in self.exponents])
        self.factorial = np.array([_multi_factorial(e) for e in self.exponents],
                                  dtype=float)
        ii, jj, kk = [], [], []
        for i, a in enumerate(self.exponents):
            for j, b in enumerate(self.exponents):
                if sum(a) + sum(b) <= order:
                    ii.append(i)
                    jj.append(j)
                    kk.append(self.index[tuple(x + y for x, y in zip(a, b))])
        self.mul_i = np.array(ii)
        self.mul_j = np.array(jj)
        self.mul_k = np.array(kk)
        cls._cache[key] = self
        return self


def _exponents(nvars, total):
    if nvars == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _exponents(nvars - 1, total - head):
            yield (head,) + rest


def _multi_factorial(alpha):
    out = 1
    for a in alpha:
        out *= math.factorial(a)
    return out


class Jet:
    """Scalar jet: value plus Taylor coefficients up to a fixed order."""

    __slots__ = ("space", "c")

    def __init__(self, space: JetSpace, coeffs: np.ndarray):
        self.space = space
        self.c = coeffs

    # -- constructors -------------------------------------------------------
    @classmethod
    def constant(cls, space, value):
        c = np.zeros(space.size, dtype=np.result_type(type(value), float))
        c[0] = value
        return cls(space, c)

    @classmethod
    def variable(cls, space, i, value):
        c = np.zeros(space.size, dtype=float)
        c[0] = value
        if space.order >= 1:
            e = tuple(1 if k == i else 0 for k in range(space.nvars))
            c[space.index[e]] = 1.0
        return cls(space, c)

    # -- inspection ---------------------------------------------------------
    @property
    def value(self):
        return self.c[0]

    @property
    def order(self):
        return self.space.order

    def partial(self, alpha) -> complex:
        """Mixed partial derivative d^alpha; alpha order-insensitive."""
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.space.nvars or sum(alpha) > self.space.order:
            raise DimensionMismatchError(f"partial {alpha} outside jet order")
        i = self.space.index[alpha]
        return self.c[i] * self.space.factorial[i]

    def gradient(self) -> np.ndarray:
        return np.array([self.partial(tuple(1 if k == i else 0
                                            for k in range(self.space.nvars)))
                         for i in range(self.space.nvars)])

    def derivative(self, axis: int) -> "Jet":
        """d/du_axis as a jet one order lower."""
        space = JetSpace(self.space.nvars, self.space.order - 1)
        c = np.zeros(space.size, dtype=self.c.dtype)
        for idx, e in enumerate(space.exponents):
            src = list(e)
            src[axis] += 1
            c[idx] = self.c[self.space.index[tuple(src)]] * src[axis]
        return Jet(space, c)

    def truncate(self, order: int) -> "Jet":
        if order == self.space.order:
            return self
        if order > self.space.order:
            raise DimensionMismatchError("cannot extend a jet")
        space = JetSpace(self.space.nvars, order)
        return Jet(space, self.c[:space.size].copy())

    def lift(self, space: JetSpace, var_map) -> "Jet":
        """Re-embed into a larger variable space; var_map[i] = new axis."""
        c = np.zeros(space.size, dtype=self.c.dtype)
        for idx, e in enumerate(self.space.exponents):
            if sum(e) > space.order:
                continue
            new = [0] * space.nvars
            for old_axis, a in enumerate(e):
                new[var_map[old_axis]] = a
            c[space.index[tuple(new)]] = self.c[idx]
        return Jet(space, c)

    # -- ring operations ----------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.space is self.space:
                return self, other
            order = min(self.space.order, other.space.order)
            return self.truncate(order), other.truncate(order)
        return self, Jet.constant(self.space, other)

    def __add__(self, other):
        a, b = self._coerce(other)
        return Jet(a.space, a.c + b.c)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.space, -self.c)

    def __sub__(self, other):
        a, b = self._coerce(other)
        return Jet(a.space, a.c - b.c)

    def __rsub__(self, other):
        a, b = self._coerce(other)
        return Jet(a.space, b.c - a.c)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.space, self.c * other)
        a, b = self._coerce(other)
        sp = a.space
        prod = a.c[sp.mul_i] * b.c[sp.mul_j]
        if np.iscomplexobj(prod):
            out = (np.bincount(sp.mul_k, weights=prod.real, minlength=sp.size)
                   + 1j * np.bincount(sp.mul_k, weights=prod.imag, minlength=sp.size))
        else:
            out = np.bincount(sp.mul_k, weights=prod, minlength=sp.size)
        return Jet(sp, out)

    __rmul__ = __mul__

    def reciprocal(self):
        if self.c[0] == 0:
            raise EvaluationError("division by zero jet")
        b = Jet.constant(self.space, 1.0 / self.c[0])
        # Newton iteration doubles the valid order each step
        steps = max(1, math.ceil(math.log2(self.space.order + 1)))
        for _ in range(steps):
            b = b * (2.0 - self * b)
        return b

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.space, self.c / other)
        a, b = self._coerce(other)
        return a * b.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        if isinstance(p, Jet):
            raise EvaluationError("jet exponents are not supported")
        if isinstance(p, (int, np.integer)) or (isinstance(p, float) and p.is_integer()):
            n = int(p)
            if n == 0:
                return Jet.constant(self.space, 1.0)
            base = self if n > 0 else self.reciprocal()
            out = base
            for _ in range(abs(n) - 1):
                out = out * base
            return out
        if not np.iscomplexobj(self.c) and self.c[0] <= 0:
            raise EvaluationError("fractional power of a non-positive value")
        return self._analytic(lambda k, x: _pow_deriv(p, k, x))

    # -- analytic functions --------------------------------------------------
    def _analytic(self, kth_deriv):
        """Compose with an analytic function given derivatives at the value."""
        x0 = self.c[0]
        bar = Jet(self.space, self.c.copy())
        bar.c[0] = 0.0
        out = Jet.constant(self.space, kth_deriv(0, x0))
        power = None
        fact = 1.0
        for k in range(1, self.space.order + 1):
            power = bar if power is None else power * bar
            fact *= k
            out = out + power * (kth_deriv(k, x0) / fact)
        return out

    def sqrt(self):
        x0 = self.c[0]
        if not np.iscomplexobj(self.c) and x0 < 0:
            raise EvaluationError("sqrt of negative value")
        if x0 == 0:
            raise EvaluationError("sqrt of zero is not differentiable")
        return self._analytic(lambda k, x: _pow_deriv(0.5, k, x))

    def exp(self):
        return self._analytic(lambda k, x: np.exp(x))

    def log(self):
        x0 = self.c[0]
        if (not np.iscomplexobj(self.c) and x0 <= 0) or x0 == 0:
            raise EvaluationError("log of non-positive value")
        return self._analytic(
            lambda k, x: np.log(x) if k == 0
            else (-1.0) ** (k - 1) * math.factorial(k - 1) / x ** k)

    def sin(self):
        cyc = (np.sin, np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x))
        return self._analytic(lambda k, x: cyc[k % 4](x))

    def cos(self):
        cyc = (np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x), np.sin)
        return self._analytic(lambda k, x: cyc[k % 4](x))

    def sinh(self):
        return self._analytic(lambda k, x: np.sinh(x) if k % 2 == 0 else np.cosh(x))

    def cosh(self):
        return self._analytic(lambda k, x: np.cosh(x) if k % 2 == 0 else np.sinh(x))

    def conj(self):
        return Jet(self.space, np.conj(self.c))


def _pow_deriv(p, k, x):
    coef = 1.0
    for j in range(k):
        coef *= (p - j)
    return coef * x ** (p - k)


# ---------------------------------------------------------------------------
# jet vectors (lists of scalar jets) - small helpers used across modules

def jv_dot(u, v, sign=None):
    """Dot product of two jet vectors; ``sign`` gives a metric sign per slot."""
    acc = None
    for k, (a, b) in enumerate(zip(u, v)):
        term = a * b
        if sign is not None and sign[k] < 0:
            term = -term
        acc = term if acc is None else acc + term
    return acc


def jv_scale(u, s):
    return [a * s for a in u]


def jv_add(u, v):
    return [a + b for a, b in zip(u, v)]


def jv_sub(u, v):
    return [a - b for a, b in zip(u, v)]


def jv_values(u) -> np.ndarray:
    return np.array([a.value for a in u])


# ---------------------------------------------------------------------------
# Jet4: the public carrier of values and partials up to total order 4

@dataclass
class Jet4:
    """Value and mixed partials (by multi-index) of a map at a point."""

    point: np.ndarray
    value: np.ndarray
    partials: dict
    order: int

    def partial(self, alpha) -> np.ndarray:
        """Partial derivative; symmetric by storage, so the order of the
        entries of ``alpha`` never matters."""
        key = tuple(int(a) for a in alpha)
        return self.partials[key]


def _jets_to_jet4(u, jets, order) -> Jet4:
    space = jets[0].space
    partials = {}
    for i, e in enumerate(space.exponents):
        arr = np.array([j.c[i] for j in jets]) * space.factorial[i]
        partials[e] = arr
    return Jet4(point=np.asarray(u, dtype=float),
                value=partials[space.exponents[0]],
                partials=partials, order=order)


# ---------------------------------------------------------------------------
# expression grammar (infix, parsed through the ast module)

_ALLOWED_CALLS = {"sin", "cos", "exp", "sqrt", "log", "sinh", "cosh", "conj"}
_CONSTANTS = {"pi": math.pi, "e": math.e}


def parse_expression(src: str) -> ast.Expression:
    try:
        tree = ast.parse(src.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ChartFormatError(f"cannot parse expression {src!r}: {exc}") from exc
    for node in ast.walk(tree):
        if isinstance(node, ast.Call):
            if not (isinstance(node.func, ast.Name)
                    and node.func.id in _ALLOWED_CALLS):
                raise ChartFormatError(f"unsupported call in {src!r}")
        elif isinstance(node, (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Name,
                               ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div,
                               ast.Pow, ast.USub, ast.UAdd, ast.Load)):
            continue
        elif isinstance(node, ast.Attribute):
            raise ChartFormatError(f"attributes not allowed in {src!r}")
        else:
            raise ChartFormatError(
                f"unsupported syntax {type(node).__name__} in {src!r}")
    return tree


def eval_expression(tree, env: dict):
    """Evaluate a parsed expression over jets (or plain numbers).

    Raises EvaluationError carrying the offending sub-expression source.
    """

    def run(node):
        if isinstance(node, ast.Expression):
            return run(node.body)
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float, complex)):
                raise ChartFormatError(f"non-numeric constant {node.value!r}")
            return node.value
        if isinstance(node, ast.Name):
            if node.id in env:
                return env[node.id]
            if node.id in _CONSTANTS:
                return _CONSTANTS[node.id]
            raise ChartFormatError(f"unknown name {node.id!r}")
        if isinstance(node, ast.UnaryOp):
            v = run(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp):
            a, b = run(node.left), run(node.right)
            try:
                if isinstance(node.op, ast.Add):
                    return a + b
                if isinstance(node.op, ast.Sub):
                    return a - b
                if isinstance(node.op, ast.Mult):
                    return a * b
                if isinstance(node.op, ast.Div):
                    return a / b
                if isinstance(node.op, ast.Pow):
                    if isinstance(b, Jet):
                        raise EvaluationError("exponent must be constant",
                                              where=ast.unparse(node))
                    return a ** b
            except ZeroDivisionError as exc:
                raise EvaluationError("division by zero",
                                      where=ast.unparse(node)) from exc
            except EvaluationError as exc:
                if exc.where is None:
                    exc.where = ast.unparse(node)
                raise
            raise ChartFormatError("unsupported operator")
        if isinstance(node, ast.Call):
            arg = run(node.args[0])
            name = node.func.id
            try:
                if isinstance(arg, Jet):
                    return getattr(arg, name)()
                if name == "conj":
                    return np.conj(arg)
                return getattr(np, name)(arg)
            except EvaluationError as exc:
                if exc.where is None:
                    exc.where = ast.unparse(node)
                raise
        raise ChartFormatError(f"unsupported node {ast.dump(node)}")

    return run(tree)


# ---------------------------------------------------------------------------
# charts

class Chart:
    """Protocol: parameter box -> unit sphere, with exact jets.

    Concrete charts provide ``dim_m``, ``codim_p``, ``domain`` (m x 2 array)
    and ``jet(u, order) -> list[Jet]`` with one jet per ambient component.
    """

    dim_m: int
    codim_p: int
    domain: np.ndarray

    @property
    def ambient_dim(self) -> int:
        return self.dim_m + self.codim_p + 1

    def jet(self, u, order: int) -> list:
        raise NotImplementedError

    def value(self, u) -> np.ndarray:
        return jv_values(self.jet(u, 0))

    def contains(self, u, margin: float = 0.0) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.domain[:, 0] + margin)
                    and np.all(u <= self.domain[:, 1] - margin))


def _check_point(chart, u):
    u = np.asarray(u, dtype=float)
    if u.shape != (chart.dim_m,):
        raise DimensionMismatchError(
            f"parameter point has shape {u.shape}, chart wants ({chart.dim_m},)")
    if not chart.contains(u):
        raise DomainError(f"point {u.tolist()} outside chart domain")
    return u


class ExpressionChart(Chart):
    """Chart whose components are infix expressions in u1..um."""

    def __init__(self, dim_m, codim_p, domain, components, name=None):
        self.dim_m = int(dim_m)
        self.codim_p = int(codim_p)
        self.domain = np.asarray(domain, dtype=float).reshape(self.dim_m, 2)
        if len(components) != self.ambient_dim:
            raise ChartFormatError(
                f"chart needs {self.ambient_dim} components, got {len(components)}")
        self.sources = [c if isinstance(c, str) else None for c in components]
        self.trees = [parse_expression(c) if isinstance(c, str) else c
                      for c in components]
        self.name = name

    def jet(self, u, order):
        u = _check_point(self, u)
        space = JetSpace(self.dim_m, order)
        env = {f"u{i+1}": Jet.variable(space, i, u[i]) for i in range(self.dim_m)}
        out = []
        for tree in self.trees:
            val = eval_expression(tree, env)
            if not isinstance(val, Jet):
                val = Jet.constant(space, val)
            out.append(val)
        return out


class TrigChart(Chart):
    """Random trigonometric-polynomial chart, normalised onto the sphere.

    Each raw component is  c0 + sum_k  a_k cos(<k, u> + phase_k); the map is
    f = p / |p|, which is exactly spherical by construction so that no
    projection noise enters the higher derivatives.
    """

    def __init__(self, dim_m, codim_p, const, amps, freqs, phases, name=None):
        self.dim_m = int(dim_m)
        self.codim_p = int(codim_p)
        self.domain = np.array([[0.0, 2.0 * np.pi]] * self.dim_m)
        self.const = np.asarray(const, dtype=float)
        self.amps = np.asarray(amps, dtype=float)      # (ncomp, nterms)
        self.freqs = np.asarray(freqs, dtype=float)    # (ncomp, nterms, m)
        self.phases = np.asarray(phases, dtype=float)  # (ncomp, nterms)
        self.name = name or "random-trig"

    def _raw(self, space, uj):
        comps = []
        for i in range(self.ambient_dim):
            acc = Jet.constant(space, self.const[i])
            for t in range(self.amps.shape[1]):
                arg = jv_dot(uj, [Jet.constant(space, f)
                                  for f in self.freqs[i, t]])
                acc = acc + self.amps[i, t] * (arg + self.phases[i, t]).cos()
            comps.append(acc)
        return comps

    def jet(self, u, order):
        u = _check_point(self, u)
        space = JetSpace(self.dim_m, order)
        uj = [Jet.variable(space, i, u[i]) for i in range(self.dim_m)]
        comps = self._raw(space, uj)
        norm_sq = jv_dot(comps, comps)
        inv = norm_sq.sqrt().reciprocal()
        return [c * inv for c in comps]


def random_trig_chart(dim_m, codim_p, rng, nterms=2, max_freq=2,
                      min_norm=0.35, min_rank=1e-3, max_tries=60,
                      probe_points=6) -> TrigChart:
    """Draw a valid random chart; resamples until immersed and bounded away
    from the origin (both checked on probe points)."""
    ncomp = dim_m + codim_p + 1
    for _ in range(max_tries):
        const = rng.uniform(-1.0, 1.0, size=ncomp)
        amps = rng.uniform(-0.6, 0.6, size=(ncomp, nterms))
        freqs = rng.integers(-max_freq, max_freq + 1,
                             size=(ncomp, nterms, dim_m)).astype(float)
        phases = rng.uniform(0, 2 * np.pi, size=(ncomp, nterms))
        chart = TrigChart(dim_m, codim_p, const, amps, freqs, phases)
        ok = True
        for _ in range(probe_points):
            u = rng.uniform(0.0, 2 * np.pi, size=dim_m)
            jets = chart._raw(JetSpace(dim_m, 1),
                              [Jet.variable(JetSpace(dim_m, 1), i, u[i])
                               for i in range(dim_m)])
            vals = jv_values(jets)
            if np.linalg.norm(vals) < min_norm:
                ok = False
                break
            jets1 = chart.jet(u, 1)
            df = np.array([[j.partial(_unit(dim_m, a)) for j in jets1]
                           for a in range(dim_m)])
            sv = np.linalg.svd(df, compute_uv=False)
            if sv[-1] < min_rank:
                ok = False
                break
        if ok:
            return chart
    raise ChartFormatError("could not draw a valid random chart")


class MoebiusTransformedChart(Chart):
    """Chart composed with the Moebius transformation of the sphere induced
    by a Lorentz matrix acting on light-cone lifts."""

    def __init__(self, base: Chart, T: np.ndarray):
        n = base.ambient_dim + 1
        T = np.asarray(T, dtype=float)
        if T.shape != (n, n):
            raise DimensionMismatchError(
                f"transform must be {n}x{n}, got {T.shape}")
        self.base = base
        self.T = T
        self.dim_m = base.dim_m
        self.codim_p = base.codim_p
        self.domain = base.domain

    def jet(self, u, order):
        f = self.base.jet(u, order)
        space = f[0].space
        lift = [Jet.constant(space, 1.0)] + list(f)
        img = [jv_dot([Jet.constant(space, t) for t in row], lift)
               for row in self.T]
        w = img[0]
        if w.value <= 0:
            raise EvaluationError("transformed lift crossed the celestial horizon")
        inv = w.reciprocal()
        return [v * inv for v in img[1:]]


# ---------------------------------------------------------------------------
# public jet evaluation + validation

def eval_jet(chart: Chart, u, order: int) -> Jet4:
    """Evaluate a chart and all mixed partials up to ``order`` (0..4).

    Derivatives are exact to rounding: they come from truncated-Taylor
    propagation through the evaluator, never from differencing.
    """
    if not 0 <= order <= MAX_PUBLIC_ORDER:
        raise DimensionMismatchError(f"order must be 0..4, got {order}")
    u = _check_point(chart, u)
    return _jets_to_jet4(u, chart.jet(u, order), order)


@dataclass
class ChartValidation:
    """Grid report: sphericity, immersion rank, umbilic suspects."""

    max_sphere_defect: float
    min_df_singular_value: float
    umbilic_suspects: list = field(default_factory=list)
    rank_failures: list = field(default_factory=list)

    @property
    def spherical(self) -> bool:
        return self.max_sphere_defect <= TOL_SPHERE

    @property
    def immersed(self) -> bool:
        return not self.rank_failures


def validate_chart(chart: Chart, grid, umbilic_tol: float = 1e-10,
                   rank_tol: float = 1e-8) -> ChartValidation:
    """Check |f|=1 and rank(df)=m over the grid; report umbilic suspects."""
    from .surface import traceless_second_form_norm_sq  # local import: no cycle

    max_defect = 0.0
    min_sv = np.inf
    suspects = []
    failures = []
    for u in grid:
        jets = chart.jet(u, 2)
        vals = jv_values(jets)
        max_defect = max(max_defect, abs(float(np.linalg.norm(vals)) - 1.0))
        df = np.array([[j.partial(_unit(chart.dim_m, a)) for j in jets]
                       for a in range(chart.dim_m)])
        sv = np.linalg.svd(df, compute_uv=False)
        min_sv = min(min_sv, sv[-1])
        if sv[-1] < rank_tol * max(sv[0], 1.0):
            failures.append(np.asarray(u, dtype=float))
            continue
        if traceless_second_form_norm_sq(chart, u) / 4.0 < umbilic_tol:
            suspects.append(np.asarray(u, dtype=float))
    return ChartValidation(max_sphere_defect=max_defect,
                           min_df_singular_value=float(min_sv),
                           umbilic_suspects=suspects,
                           rank_failures=failures)


def _unit(m, a):
    return tuple(1 if k == a else 0 for k in range(m))


def grid_points(domain, counts, margin=1e-3) -> list[np.ndarray]:
    """Uniform interior grid; counts per axis, relative edge margin."""
    domain = np.asarray(domain, dtype=float)
    axes = []
    for (lo, hi), n in zip(domain, counts):
        pad = margin * (hi - lo)
        axes.append(np.linspace(lo + pad, hi - pad, int(n)))
    return [np.array(p) for p in itertools.product(*axes)]


# ---------------------------------------------------------------------------
# chart files

def chart_from_dict(doc: dict, name=None) -> Chart:
    if not isinstance(doc, dict):
        raise ChartFormatError("chart document must be a JSON object")
    kind = doc.get("type", "expression")
    if kind == "expression":
        try:
            return ExpressionChart(doc["dim_m"], doc["codim_p"], doc["domain"],
                                   doc["components"], name=name)
        except KeyError as exc:
            raise ChartFormatError(f"chart document missing field {exc}") from exc
    if kind == "envelope":
        from .envelope import envelope_chart_from_dict
        return envelope_chart_from_dict(doc)
    raise ChartFormatError(f"unknown chart type {kind!r}")


def load_chart(path) -> Chart:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ChartFormatError(f"cannot read chart file {path}: {exc}") from exc
    return chart_from_dict(doc, name=str(path))
