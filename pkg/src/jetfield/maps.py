"""Smooth systems of smooth maps and their tangent prolongations."""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .expr import Expr, as_expr, const, eval_numeric, substitute, sym
from .geometry import dot, total_differential

__all__ = [
    "MapSystem", "ProlongedMap", "InjectivityVerdict", "total_tangent",
    "partial_tangent_1", "partial_tangent_2", "check_decomposition",
    "injectivity_probe", "iota", "linear_map_system", "affine_map_system",
    "random_polynomial_system", "number",
]


def number(v) -> Expr:
    """Coerce a numeric or symbolic value to an exact Expr (floats via their decimal repr)."""
    if isinstance(v, float):
        return const(Fraction(repr(v)))
    return as_expr(v)


@dataclass(frozen=True)
class MapSystem:
    """Evaluation map ``eps: S x M -> N`` as target coordinates over (w, y)."""

    params: tuple
    source: tuple
    target: tuple
    eval: Mapping = field(default_factory=dict)
    functions: Mapping = field(default_factory=dict, compare=False)
    name: str = field(default="eps", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        object.__setattr__(self, "source", tuple(self.source))
        object.__setattr__(self, "target", tuple(self.target))
        ev = {k: as_expr(v) for k, v in self.eval.items()}
        object.__setattr__(self, "eval", ev)
        if set(ev) != set(self.target) or len(ev) != len(self.target):
            missing = set(self.target) - set(ev)
            extra = set(ev) - set(self.target)
            raise ValueError(f"evaluation map must assign every target exactly once (missing {sorted(missing)}, extra {sorted(extra)})")
        allowed = set(self.params) | set(self.source)
        for z, e in ev.items():
            bad = e.free_symbols() - allowed
            if bad:
                raise ValueError(f"{z} uses undeclared symbols {sorted(bad)}")

    def at(self, values: Mapping[str, object]) -> dict:
        """The selected map ``eps_s`` for parameter ``values``."""
        b = {k: number(v) for k, v in values.items()}
        return {z: substitute(self.eval[z], b) for z in self.target}


@dataclass(frozen=True)
class ProlongedMap:
    kind: str  # total | partial-1 | partial-2
    params: tuple
    source: tuple
    eval: Mapping

    @property
    def undotted(self) -> dict:
        return {k: v for k, v in self.eval.items() if not k.startswith("d_")}

    @property
    def dotted(self) -> dict:
        return {k: v for k, v in self.eval.items() if k.startswith("d_")}

    def lines(self) -> list[str]:
        return [f"{k} = {v}" for k, v in self.eval.items()]


def _prolong(sys: MapSystem, kind: str, wrt_params: bool, wrt_source: bool) -> ProlongedMap:
    out = dict(sys.eval)
    for z in sys.target:
        e = sys.eval[z]
        d = Expr()
        if wrt_params:
            d = d + total_differential(e, sys.params)
        if wrt_source:
            d = d + total_differential(e, sys.source)
        out[dot(z)] = d
    params = sys.params + (tuple(dot(w) for w in sys.params) if wrt_params else ())
    source = sys.source + (tuple(dot(y) for y in sys.source) if wrt_source else ())
    return ProlongedMap(kind, params, source, out)


def total_tangent(sys: MapSystem) -> ProlongedMap:
    """``Teps``: ``d_z = dA eps * d_w^A + di eps * d_y^i``."""
    return _prolong(sys, "total", True, True)


def partial_tangent_1(sys: MapSystem) -> ProlongedMap:
    """``T1 eps``: only the parameter contraction."""
    return _prolong(sys, "partial-1", True, False)


def partial_tangent_2(sys: MapSystem) -> ProlongedMap:
    """``T2 eps``: only the source contraction."""
    return _prolong(sys, "partial-2", False, True)


def check_decomposition(sys: MapSystem) -> bool:
    """Exact check that the total prolongation is the sum of the partial ones."""
    t, p1, p2 = total_tangent(sys), partial_tangent_1(sys), partial_tangent_2(sys)
    if not (t.undotted == p1.undotted == p2.undotted == dict(sys.eval)):
        return False
    return all(t.eval[k] == p1.eval[k] + p2.eval[k] for k in t.dotted)


@dataclass(frozen=True)
class InjectivityVerdict:
    """Sample-relative injectivity result; records the grids it used."""

    collisions: tuple
    grid: tuple
    witnesses: tuple
    tol: float = 1e-12

    @property
    def injective_on_sample(self) -> bool:
        return not self.collisions

    @property
    def verdict(self) -> str:
        return "no-collision-found" if not self.collisions else "counterexample"

    @property
    def counterexample(self):
        return self.collisions[0] if self.collisions else None


def injectivity_probe(sys, grid: Mapping[str, Sequence[float]], witnesses: Mapping[str, Sequence[float]], tol: float = 1e-12, realizations=None) -> InjectivityVerdict:
    """Look for distinct parameter points selecting the same map on the witnesses.

    ``sys`` is a :class:`MapSystem` or :class:`ProlongedMap`.  Parameter
    points are the cartesian product of ``grid`` in declaration order;
    collisions are pairs ``(s, s')`` of parameter tuples, ``s`` first in grid
    order.
    """
    params = [p for p in sys.params]
    src = [m for m in sys.source]
    if any(len(grid.get(p, ())) == 0 for p in params) or any(len(witnesses.get(m, ())) == 0 for m in src):
        raise ValueError("empty grid or witness list")
    exprs = list(sys.eval.values())
    s_points = list(itertools.product(*(grid[p] for p in params)))
    m_points = list(itertools.product(*(witnesses[m] for m in src)))
    images = []
    for s in s_points:
        vec = []
        for m in m_points:
            pt = {**dict(zip(params, s)), **dict(zip(src, m))}
            vec.extend(eval_numeric(e, pt, realizations or {}) for e in exprs)
        images.append(vec)
    collisions = []
    for i, j in itertools.combinations(range(len(s_points)), 2):
        if all(abs(a - b) <= tol for a, b in zip(images[i], images[j])):
            collisions.append((s_points[i], s_points[j]))
    return InjectivityVerdict(
        tuple(collisions),
        tuple((p, tuple(grid[p])) for p in params),
        tuple((m, tuple(witnesses[m])) for m in src),
        tol,
    )


def iota(sys: MapSystem, X: Mapping[str, object]) -> dict:
    """Image of a tangent vector of S in the F-smooth tangent space.

    ``X`` binds every ``w`` and its dotted twin ``d_w``; the result maps
    each ``z`` to ``eps`` at ``w`` and each ``d_z`` to ``dA eps * d_w^A``.
    """
    p1 = partial_tangent_1(sys)
    b = {k: number(v) for k, v in X.items()}
    missing = [n for n in p1.params if n not in b]
    if missing:
        raise ValueError(f"tangent point lacks values for {missing}")
    return {k: substitute(v, b) for k, v in p1.eval.items()}


# -- standard families ------------------------------------------------------------

def _lin_names(dim_source: int, dim_target: int):
    ys = tuple(f"y{i}" for i in range(dim_source))
    zs = tuple(f"z{a}" for a in range(dim_target))
    ws = tuple(f"w{a}_{i}" for a in range(dim_target) for i in range(dim_source))
    return ys, zs, ws


def linear_map_system(dim_source: int = 2, dim_target: int = 2) -> MapSystem:
    """``z^a = w^a_i y^i`` with parameters ``w{a}_{i}``."""
    ys, zs, ws = _lin_names(dim_source, dim_target)
    ev = {
        f"z{a}": sum((sym(f"w{a}_{i}") * sym(f"y{i}") for i in range(dim_source)), Expr())
        for a in range(dim_target)
    }
    return MapSystem(ws, ys, zs, ev, name="linear")


def affine_map_system(dim_source: int = 2, dim_target: int = 2) -> MapSystem:
    """``z^a = w^a_i y^i + w^a`` with offsets ``w{a}``."""
    ys, zs, ws = _lin_names(dim_source, dim_target)
    offs = tuple(f"w{a}" for a in range(dim_target))
    ev = {
        f"z{a}": sum((sym(f"w{a}_{i}") * sym(f"y{i}") for i in range(dim_source)), Expr()) + sym(f"w{a}")
        for a in range(dim_target)
    }
    return MapSystem(ws + offs, ys, zs, ev, name="affine")


def random_polynomial_system(rng: random.Random, max_degree: int = 3, max_dim: int = 3) -> MapSystem:
    """Random polynomial evaluation map with all dimensions in ``1..max_dim``."""
    nw, ny, nz = (rng.randint(1, max_dim) for _ in range(3))
    ws = tuple(f"w{k}" for k in range(nw))
    ys = tuple(f"y{k}" for k in range(ny))
    zs = tuple(f"z{k}" for k in range(nz))
    names = ws + ys
    ev = {}
    for z in zs:
        e = Expr()
        for _ in range(rng.randint(1, 5)):
            t = const(Fraction(rng.randint(-5, 5), rng.randint(1, 3)))
            for _ in range(rng.randint(0, max_degree)):
                t = t * sym(rng.choice(names))
            e = e + t
        ev[z] = e
    return MapSystem(ws, ys, zs, ev, name="random")
