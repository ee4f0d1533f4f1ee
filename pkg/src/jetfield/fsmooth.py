"""F-smooth spaces presented by families of curves, and numeric smoothness probes.

Smoothness cannot be decided numerically.  Everything here that touches a
numeric callable is a *probe*: finite-order, finite-sample evidence, labelled
as such in the returned verdicts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import qmc

from .expr import Expr, as_expr, eval_numeric, partial, substitute
from .maps import MapSystem, number

__all__ = [
    "LAM", "Curve", "CurveFamily", "ContactClass", "ProbeVerdict", "MemberVerdict",
    "smoothness_probe", "member", "product", "subspace", "first_order_contact",
    "tangent_rep_map_space", "xi_add", "xi_scale", "witness_points", "derivative",
]

LAM = "lam"
_EPS = np.finfo(float).eps

# central (2nd order accurate) stencils for derivative k: offsets, weights; divide by h^k
_CENTRAL = {
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
}


def _forward(k):
    offs = tuple(range(k + 1))
    w = tuple((-1) ** (k - j) * math.comb(k, j) for j in offs)
    return offs, w


@dataclass(frozen=True)
class ProbeVerdict:
    """Outcome of a finite-difference smoothness probe (never a proof)."""

    passes: bool
    failed_order: int | None
    rates: Mapping
    label: str = "probe"

    def __bool__(self):
        return self.passes

    def __str__(self):
        if self.passes:
            return "passes(" + ", ".join(f"{k}:{_fmt_rate(r)}" for k, r in sorted(self.rates.items())) + ")"
        return f"fails({self.failed_order})"


def _fmt_rate(r):
    return "n/a" if r is None else f"{r:.2f}"


def _steps(n: int = 7):
    # geometric from 1e-2 down to 1e-5
    return [1e-2 * 10 ** (-j / 2) for j in range(n)]


def _stencil(f, x, h, offs, weights, k):
    vals = [f(x + o * h) for o in offs]
    scale = max(max(abs(v) for v in vals), 1e-300)
    est = sum(w * v for w, v in zip(weights, vals)) / h**k
    noise = 4 * _EPS * scale * sum(abs(w) for w in weights) / abs(h) ** k
    return est, noise


def _probe_scalar(f: Callable[[float], float], x0: float, order: int, nominal: float = 2.0, tol: float = 0.2):
    steps = _steps()
    r = steps[0] / steps[1]
    rates = {}
    for k in range(1, order + 1):
        central = [_stencil(f, x0, h, *_CENTRAL[k], k) for h in steps]
        vals = [c for c, _ in central]
        if not all(math.isfinite(v) for v in vals):
            return False, k, rates
        diffs = [abs(a - b) for a, b in zip(vals, vals[1:])]
        noise = [central[j][1] + central[j + 1][1] for j in range(len(diffs))]
        usable = [j for j in range(len(diffs) - 1) if diffs[j] > 10 * noise[j] and diffs[j + 1] > 10 * noise[j + 1]]
        observed = [math.log(diffs[j] / diffs[j + 1]) / math.log(r) for j in usable]
        if observed:
            # largest steps first: least polluted by roundoff
            rate = float(np.median(observed[:3]))
            if rate < nominal * (1 - tol):
                return False, k, rates
        elif any(d > 10 * n for d, n in zip(diffs[1:], noise[1:])):
            return False, k, rates
        else:
            rate = None
        # kink detector: one-sided quotients must close up at first order
        offs, w = _forward(k)
        gaps = []
        for h in steps:
            fwd, nf = _stencil(f, x0, h, offs, w, k)
            bwd, nb = _stencil(f, x0, -h, offs, w, k)
            gaps.append((abs(fwd - bwd), nf + nb))
        good = [(g, n) for g, n in gaps if g > 10 * n]
        if len(good) >= 2:
            g_first, g_last = good[0][0], good[-1][0]
            span = steps[0] / steps[len(good) - 1]
            if g_last > g_first / span ** 0.5:
                return False, k, rates
        rates[k] = rate
    return True, None, rates


def smoothness_probe(f: Callable[[float], object], lam0: float, order: int = 3) -> ProbeVerdict:
    """Probe ``f`` (scalar or vector valued) for ``C^order`` behaviour at ``lam0``.

    For each derivative order the central-difference estimates over steps
    ``1e-2 .. 1e-5`` must converge at an observed Richardson rate of at
    least 2 (within 20%), and forward/backward quotients must agree in the
    limit.  Rates are reported per order; ``None`` marks estimates that
    agree to rounding at every step.
    """
    if not 1 <= order <= 3:
        raise ValueError("order must be 1, 2 or 3")
    sample = np.atleast_1d(np.asarray(f(lam0), dtype=float))
    worst: dict = {}
    for comp in range(sample.size):
        g = (lambda t, c=comp: float(np.atleast_1d(np.asarray(f(t), dtype=float))[c]))
        ok, k, rates = _probe_scalar(g, float(lam0), order)
        if not ok:
            return ProbeVerdict(False, k, rates)
        for kk, rr in rates.items():
            if kk not in worst or (rr is not None and (worst[kk] is None or rr < worst[kk])):
                worst[kk] = rr
    return ProbeVerdict(True, None, worst)


def derivative(f: Callable[[float], float], x: float, h: float = 1e-2) -> float:
    """First derivative by Richardson-extrapolated central differences."""
    tab = []
    for i in range(6):
        hi = h / 2**i
        row = [(f(x + hi) - f(x - hi)) / (2 * hi)]
        for j in range(1, i + 1):
            prev = tab[i - 1][j - 1]
            row.append(row[j - 1] + (row[j - 1] - prev) / (4**j - 1))
        tab.append(row)
    return tab[-1][-1]


@dataclass(frozen=True)
class Curve:
    """A curve ``c: I -> S`` in the coordinates ``space``.

    ``body`` is either a mapping coordinate -> Expr in ``lam`` (symbolic) or
    a callable ``lam -> sequence`` (numeric).  ``interval`` endpoints may be
    ``None`` (unbounded).
    """

    space: tuple
    body: object
    interval: tuple = (None, None)
    name: str = "c"
    order: int = 3

    def __post_init__(self):
        object.__setattr__(self, "space", tuple(self.space))
        lo, hi = self.interval
        if lo is not None and hi is not None and not lo < hi:
            raise ValueError("curve interval must be nonempty")
        if isinstance(self.body, Mapping):
            b = {k: as_expr(self.body[k]) for k in self.space}
            for k, e in b.items():
                bad = e.free_symbols() - {LAM}
                if bad:
                    raise ValueError(f"curve component {k} uses {sorted(bad)}; only {LAM} is allowed")
            object.__setattr__(self, "body", b)
        elif not callable(self.body):
            raise TypeError("curve body must be a mapping of Exprs or a callable")

    @property
    def symbolic(self) -> bool:
        return isinstance(self.body, Mapping)

    def contains(self, lam) -> bool:
        lo, hi = self.interval
        return (lo is None or lam > lo) and (hi is None or lam < hi)

    def _check(self, lam):
        if not self.contains(lam):
            raise ValueError(f"{lam} outside interval {self.interval} of {self.name}")

    def is_constant(self) -> bool:
        return self.symbolic and all(LAM not in e.free_symbols() for e in self.body.values())

    def is_polynomial(self) -> bool:
        return self.symbolic and all(not e.functions() for e in self.body.values())

    def exact(self, lam=None) -> dict:
        """Components as Exprs; at ``lam`` if given."""
        if not self.symbolic:
            raise TypeError("numeric curve has no exact body")
        if lam is None:
            return dict(self.body)
        if isinstance(lam, (int, float, Fraction)):
            self._check(lam)
        return {k: substitute(e, {LAM: number(lam)}) for k, e in self.body.items()}

    def __call__(self, lam: float, realizations=None) -> np.ndarray:
        if self.symbolic:
            return np.array([eval_numeric(self.body[k], {LAM: lam}, realizations or {}) for k in self.space])
        return np.atleast_1d(np.asarray(self.body(lam), dtype=float))

    def velocity(self, lam) -> dict:
        if self.symbolic:
            return {k: partial(e, LAM) for k, e in self.body.items()}
        return {k: derivative(lambda t, i=i: float(self(t)[i]), float(lam)) for i, k in enumerate(self.space)}

    def reparametrize(self, gamma, interval=(None, None)) -> Curve:
        """``c o gamma`` for a smooth reparametrisation ``gamma`` (Expr in lam or callable)."""
        if self.symbolic and isinstance(gamma, (Expr, str, int, Fraction)):
            g = as_expr(gamma)
            return Curve(self.space, {k: substitute(e, {LAM: g}) for k, e in self.body.items()}, interval, f"{self.name}o", self.order)
        gf = gamma if callable(gamma) else (lambda t, g=as_expr(gamma): eval_numeric(g, {LAM: t}))
        return Curve(self.space, lambda t: self(gf(t)), interval, f"{self.name}o", self.order)

    def project(self, names: Sequence[str]) -> Curve:
        names = tuple(names)
        if self.symbolic:
            return Curve(names, {k: self.body[k] for k in names}, self.interval, self.name, self.order)
        idx = [self.space.index(k) for k in names]
        return Curve(names, lambda t: self(t)[idx], self.interval, self.name, self.order)

    def sample_points(self, n: int = 16) -> list:
        lo, hi = self.interval
        lo = -1.0 if lo is None else float(lo)
        hi = 1.0 if hi is None else float(hi)
        return [lo + (hi - lo) * (j + 1) / (n + 1) for j in range(n)]

    @staticmethod
    def constant(space: Sequence[str], values: Sequence, name: str = "const") -> Curve:
        return Curve(tuple(space), {k: number(v) for k, v in zip(space, values)}, (None, None), name)


@dataclass(frozen=True)
class MemberVerdict:
    member: bool
    method: str  # exact | probe | constant | constraint | predicate
    failures: tuple = ()

    def __bool__(self):
        return self.member


# observable: Expr in lam (exact) or callable lam -> float (probed)
Observable = object


@dataclass(frozen=True)
class CurveFamily:
    """A Frölicher family: generators plus a membership test.

    ``observables(curve)`` returns scalar functions of the curve parameter
    whose smoothness characterizes membership; ``constraint`` is an extra
    structural condition (e.g. a frozen coordinate).  Constant curves are
    always admitted; the family is implicitly closed under smooth
    reparametrisation.
    """

    space: tuple
    generators: tuple = ()
    observables: Callable | None = None
    constraint: Callable | None = None
    order: int = 3
    kind: str = "chart"
    parts: tuple = field(default=(), compare=False)
    predicate: Callable | None = field(default=None, compare=False)
    closed: bool = True

    @classmethod
    def smooth(cls, space: Sequence[str], generators=(), order: int = 3) -> CurveFamily:
        """All curves whose coordinate expressions are smooth."""
        space = tuple(space)
        return cls(space, tuple(generators), _coordinate_observables, None, order, "chart")

    @classmethod
    def constants(cls, space: Sequence[str]) -> CurveFamily:
        return cls(tuple(space), (), None, lambda c, pts: False, 3, "constants")

    @classmethod
    def from_chart(cls, space: Sequence[str], chart: Mapping[str, object], generators=(), order: int = 3) -> CurveFamily:
        """Curves that are smooth after composing with ``chart`` (Exprs or callables of the point)."""
        space = tuple(space)

        def obs(curve):
            out = []
            for name, g in chart.items():
                if isinstance(g, Expr) and curve.symbolic:
                    out.append((name, substitute(g, curve.exact())))
                elif isinstance(g, Expr):
                    out.append((name, lambda t, g=g: eval_numeric(g, dict(zip(space, curve(t))))))
                else:
                    out.append((name, lambda t, g=g: float(g(dict(zip(space, curve(t)))))))
            return out

        return cls(space, tuple(generators), obs, None, order, "chart")

    @classmethod
    def from_system(cls, sys: MapSystem, witnesses: Sequence[Mapping[str, float]] | None = None, order: int = 3, seed: int = 0) -> CurveFamily:
        """Curves ``c`` in S with ``(lam, m) -> eps(c(lam), m)`` smooth."""
        wit = list(witnesses) if witnesses is not None else witness_points(sys.source, seed=seed)

        def obs(curve):
            out = []
            for j, m in enumerate(wit):
                for z in sys.target:
                    e = substitute(sys.eval[z], {k: number(v) for k, v in m.items()})
                    if curve.symbolic:
                        out.append((f"{z}@{j}", substitute(e, curve.exact())))
                    else:
                        out.append((f"{z}@{j}", lambda t, e=e: eval_numeric(e, dict(zip(sys.params, curve(t))))))
            return out

        return cls(tuple(sys.params), (), obs, None, order, "system")

    @classmethod
    def vertical_lines(cls, space: Sequence[str] = ("x", "y"), order: int = 3) -> CurveFamily:
        """Curves with the first coordinate frozen and the second smooth."""
        space = tuple(space)

        def frozen(curve, pts):
            if curve.symbolic:
                return LAM not in curve.body[space[0]].free_symbols()
            vals = [curve(t)[0] for t in pts]
            return max(vals) - min(vals) <= 1e-12

        def obs(curve):
            return [o for o in _coordinate_observables(curve) if o[0] == space[1]]

        return cls(space, (), obs, frozen, order, "vertical-lines")


def _coordinate_observables(curve: Curve):
    if curve.symbolic:
        return [(k, curve.body[k]) for k in curve.space]
    return [(k, lambda t, i=i: float(curve(t)[i])) for i, k in enumerate(curve.space)]


def witness_points(names: Sequence[str], n: int = 8, seed: int = 0, box=(-1.0, 1.0)) -> list[dict]:
    """Seeded scrambled-Halton points in ``box^len(names)``."""
    names = list(names)
    if not names:
        return [{}]
    pts = qmc.Halton(d=len(names), scramble=True, seed=seed).random(n)
    lo, hi = box
    return [{k: float(lo + (hi - lo) * v) for k, v in zip(names, row)} for row in pts]


def member(family: CurveFamily, candidate: Curve, probe_points: Sequence[float] | None = None) -> MemberVerdict:
    """Decide (exactly) or probe (numerically) whether ``candidate`` is a basic curve."""
    if tuple(candidate.space) != tuple(family.space):
        raise ValueError(f"curve lives in {candidate.space}, family in {family.space}")
    if family.parts:
        fails = []
        method = "exact"
        for fam, names in family.parts:
            v = member(fam, candidate.project(names), probe_points)
            if not v:
                fails.append((names, v.failures))
            if v.method == "probe":
                method = "probe"
        return MemberVerdict(not fails, method, tuple(fails))
    pts = list(probe_points) if probe_points is not None else candidate.sample_points(3)
    if candidate.is_constant():
        base = MemberVerdict(True, "constant")
    elif family.constraint is not None and not family.constraint(candidate, candidate.sample_points()):
        return MemberVerdict(False, "constraint", ("constraint",))
    elif family.observables is None:
        base = MemberVerdict(False, "constraint", ("only constant curves",))
    else:
        fails = []
        method = "exact"
        for name, ob in family.observables(candidate):
            if isinstance(ob, Expr):
                # polynomial and opaque-smooth bodies are smooth by construction
                continue
            method = "probe"
            for p in pts:
                if not candidate.contains(p):
                    continue
                v = smoothness_probe(ob, p, family.order)
                if not v:
                    fails.append((name, p, v.failed_order))
        base = MemberVerdict(not fails, method, tuple(fails))
    if base and family.predicate is not None and not _satisfies(candidate, family.predicate):
        return MemberVerdict(False, "predicate", ("image leaves the subset",))
    return base


def _satisfies(curve: Curve, predicate) -> bool:
    for t in curve.sample_points():
        if curve.symbolic:
            point = {k: e.constant_value() for k, e in curve.exact(t).items()}
        else:
            point = dict(zip(curve.space, curve(t)))
        if not predicate(point):
            return False
    return True


def product(f1: CurveFamily, f2: CurveFamily) -> CurveFamily:
    """Curve family of the cartesian product; members project to members."""
    overlap = set(f1.space) & set(f2.space)
    if overlap:
        raise ValueError(f"product factors share coordinates {sorted(overlap)}")
    gens = []
    for g1 in f1.generators:
        for g2 in f2.generators:
            lo = _max_none(g1.interval[0], g2.interval[0])
            hi = _min_none(g1.interval[1], g2.interval[1])
            if lo is not None and hi is not None and lo >= hi:
                continue
            gens.append(_pair(g1, g2, (lo, hi)))
    return CurveFamily(
        f1.space + f2.space, tuple(gens), None, None, max(f1.order, f2.order), "product",
        parts=((f1, f1.space), (f2, f2.space)),
    )


def _max_none(a, b):
    return b if a is None else a if b is None else max(a, b)


def _min_none(a, b):
    return b if a is None else a if b is None else min(a, b)


def _pair(c1: Curve, c2: Curve, interval) -> Curve:
    space = c1.space + c2.space
    if c1.symbolic and c2.symbolic:
        return Curve(space, {**c1.body, **c2.body}, interval, f"{c1.name}x{c2.name}")
    return Curve(space, lambda t: np.concatenate([c1(t), c2(t)]), interval, f"{c1.name}x{c2.name}")


def pair(c1: Curve, c2: Curve) -> Curve:
    lo = _max_none(c1.interval[0], c2.interval[0])
    hi = _min_none(c1.interval[1], c2.interval[1])
    return _pair(c1, c2, (lo, hi))


def subspace(family: CurveFamily, predicate: Callable[[Mapping], bool]) -> CurveFamily:
    """Members of ``family`` whose images (16 sampled points) satisfy ``predicate``."""
    prev = family.predicate
    pred = predicate if prev is None else (lambda p: prev(p) and predicate(p))
    gens = tuple(g for g in family.generators if _satisfies(g, predicate))
    return CurveFamily(
        family.space, gens, family.observables, family.constraint, family.order,
        family.kind, family.parts, pred, family.closed,
    )


# -- first order contact and tangent representation --------------------------------------

def _pullback_exprs(sys: MapSystem, curve: Curve, lam):
    """Value and lam-derivative of ``c*(eps)`` at ``lam``, as Exprs over the source."""
    if curve.symbolic:
        ce = curve.exact()
        vals, ders = {}, {}
        for z in sys.target:
            pulled = substitute(sys.eval[z], ce)
            d = partial(pulled, LAM)
            vals[z] = substitute(pulled, {LAM: number(lam)})
            ders[z] = substitute(d, {LAM: number(lam)})
        return vals, ders
    raise TypeError("numeric curve")


def _pullback_numeric(sys: MapSystem, curve: Curve, lam: float, m: Mapping[str, float], realizations=None):
    point = curve(lam, realizations)
    vel = curve.velocity(lam)
    vel_vec = [float(eval_numeric(vel[k], {LAM: lam}, realizations or {})) if curve.symbolic else float(vel[k]) for k in sys.params]
    pt = {**dict(zip(sys.params, point)), **m}
    vals, ders = [], []
    for z in sys.target:
        e = sys.eval[z]
        vals.append(eval_numeric(e, pt, realizations or {}))
        ders.append(sum(eval_numeric(partial(e, w), pt, realizations or {}) * v for w, v in zip(sys.params, vel_vec)))
    return vals, ders


def first_order_contact(sys: MapSystem, p1, p2, witnesses: Sequence[Mapping[str, float]] | None = None, tol: float = 1e-7, seed: int = 0, realizations=None) -> bool:
    """Whether ``(c1, lam1)`` and ``(c2, lam2)`` induce the same 1-jet of ``c*(eps)``.

    Exact over the whole source when both curves are symbolic; otherwise
    compared at witness points within ``tol``.
    """
    (c1, l1), (c2, l2) = p1, p2
    for c, l in (p1, p2):
        if isinstance(l, (int, float, Fraction)):
            c._check(l)
        if tuple(c.space) != tuple(sys.params):
            raise ValueError(f"curve {c.name} is not valued in the parameter space {sys.params}")
    if c1.symbolic and c2.symbolic:
        return _pullback_exprs(sys, c1, l1) == _pullback_exprs(sys, c2, l2)
    wit = list(witnesses) if witnesses is not None else witness_points(sys.source, seed=seed)
    for m in wit:
        v1, d1 = _pullback_numeric(sys, c1, float(l1), m, realizations)
        v2, d2 = _pullback_numeric(sys, c2, float(l2), m, realizations)
        if any(abs(a - b) > tol for a, b in zip(v1 + d1, v2 + d2)):
            return False
    return True


def tangent_rep_map_space(sys: MapSystem, rep) -> dict:
    """``Xi = (T1 c*(eps))|(lam, 1)``: ``z -> eps at c(lam)``, ``d_z -> d/dlam``."""
    curve, lam = rep
    if isinstance(lam, (int, float, Fraction)):
        curve._check(lam)
    if tuple(curve.space) != tuple(sys.params):
        raise ValueError("curve is not valued in the parameter space")
    vals, ders = _pullback_exprs(sys, curve, lam)
    out = {}
    for z in sys.target:
        out[z] = vals[z]
        out["d_" + z] = ders[z]
    return out


@dataclass(frozen=True)
class ContactClass:
    """A first-order contact class ``[(c, lam)]`` with its cached 1-jet data."""

    curve: Curve
    lam: object
    data: Mapping

    @classmethod
    def of(cls, sys: MapSystem, curve: Curve, lam) -> ContactClass:
        return cls(curve, lam, tangent_rep_map_space(sys, (curve, lam)))

    def same_class(self, other: ContactClass) -> bool:
        return dict(self.data) == dict(other.data)


def _split(xi):
    base = {k: v for k, v in xi.items() if not k.startswith("d_")}
    vel = {k: v for k, v in xi.items() if k.startswith("d_")}
    return base, vel


def xi_add(xi1: Mapping, xi2: Mapping) -> dict:
    """Fibrewise sum of two representations over the same selected map."""
    b1, v1 = _split(xi1)
    b2, v2 = _split(xi2)
    if b1 != b2:
        raise ValueError("representations over different points of S")
    return {**b1, **{k: v1[k] + v2[k] for k in v1}}


def xi_scale(r, xi: Mapping) -> dict:
    b, v = _split(xi)
    r = number(r)
    return {**b, **{k: r * e for k, e in v.items()}}
