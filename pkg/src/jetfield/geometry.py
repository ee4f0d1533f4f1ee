"""Coordinate frames of (double) fibred manifolds, tangent frames and chart changes."""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .expr import Expr, PolynomialRealization, as_expr, eval_numeric, partial, substitute, sym

__all__ = [
    "ROLES", "Frame", "DoubleFibredFrame", "TangentFrame", "ChartChange",
    "FrameError", "ChartError", "dot", "induce_tangent", "prolong_chart_change",
    "total_differential", "random_chart_change",
]

# ordering of role blocks inside a frame
ROLES = ("base", "param", "fibre", "second")
DOT_PREFIX = "d_"


class FrameError(ValueError):
    pass


class ChartError(ValueError):
    pass


def dot(name: str) -> str:
    """Name of the dotted (tangent) twin of a coordinate."""
    return DOT_PREFIX + name


@dataclass(frozen=True)
class Frame:
    """Ordered coordinate symbols with role tags.

    Blocks are stored in the fixed order base, param, fibre, second
    (``x``, ``w``, ``y``, ``z``), so ``(x, w, y)`` is the lifted-fibred
    layout and ``(x, y, z)`` the double-fibred one.
    """

    base: tuple = ()
    fibre: tuple = ()
    param: tuple = ()
    second: tuple = ()
    functions: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for role in ROLES:
            object.__setattr__(self, role, tuple(getattr(self, role)))
        object.__setattr__(self, "functions", dict(self.functions))
        names = self.symbols
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise FrameError(f"duplicate coordinates {dup}")
        if not self.base:
            raise FrameError("a frame needs at least one base coordinate")

    @property
    def symbols(self) -> tuple:
        return tuple(n for role in ROLES for n in getattr(self, role))

    @property
    def dims(self) -> dict:
        return {role: len(getattr(self, role)) for role in ROLES}

    def role(self, name: str) -> str:
        for r in ROLES:
            if name in getattr(self, r):
                return r
        raise KeyError(name)

    def block(self, *roles: str) -> tuple:
        return tuple(n for r in ROLES if r in roles for n in getattr(self, r))

    def with_functions(self, functions: Mapping[str, int]) -> Frame:
        return Frame(self.base, self.fibre, self.param, self.second, {**self.functions, **functions})


@dataclass(frozen=True)
class DoubleFibredFrame:
    """Frames of ``G -> F -> B`` sharing base and fibre symbols."""

    B: Frame
    F: Frame
    G: Frame

    def __post_init__(self):
        if self.F.base != self.B.base:
            raise FrameError("F's base block must equal B's coordinates")
        if (self.G.base, self.G.fibre) != (self.F.base, self.F.fibre):
            raise FrameError("G's base and fibre blocks must equal F's coordinates")

    @classmethod
    def build(cls, base: Sequence[str], fibre: Sequence[str], second: Sequence[str]) -> DoubleFibredFrame:
        return cls(Frame(base), Frame(base, fibre), Frame(base, fibre, second=second))

    @property
    def x(self):
        return self.G.base

    @property
    def y(self):
        return self.G.fibre

    @property
    def z(self):
        return self.G.second


@dataclass(frozen=True)
class TangentFrame:
    frame: Frame
    dotted: tuple  # parallel to frame.symbols

    @property
    def symbols(self) -> tuple:
        return self.frame.symbols + self.dotted

    @property
    def functions(self):
        return self.frame.functions

    def dot_of(self, name: str) -> str:
        return self.dotted[self.frame.symbols.index(name)]


def induce_tangent(frame: Frame) -> TangentFrame:
    """Add dotted twins ``d_<name>`` in the frame's order."""
    dotted = tuple(dot(n) for n in frame.symbols)
    clash = set(dotted) & set(frame.symbols)
    if clash:
        raise FrameError(f"dotted names collide with coordinates: {sorted(clash)}")
    return TangentFrame(frame, dotted)


def total_differential(e: Expr, names: Iterable[str]) -> Expr:
    """``sum_k (d e / d n_k) * d_n_k`` over the given coordinates."""
    out = Expr()
    for n in names:
        d = partial(e, n)
        if not d.is_zero():
            out = out + d * sym(dot(n))
    return out


# which old blocks a new coordinate of each role may depend on
_ALLOWED = {
    "base": ("base",),
    "param": ("base", "param"),
    "fibre": ("base", "fibre"),
    "second": ("base", "fibre", "second"),
}


@dataclass(frozen=True)
class ChartChange:
    """New coordinates as expressions in old ones, block-triangular.

    ``mapping`` sends every coordinate of ``source`` to its replacement
    (identity where omitted); the target frame reuses the source names, so
    the change acts as a substitution on expressions.
    """

    source: Frame
    mapping: Mapping = field(default_factory=dict)
    functions: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        full = {n: as_expr(self.mapping.get(n, sym(n))) for n in self.source.symbols}
        unknown = set(self.mapping) - set(full)
        if unknown:
            raise ChartError(f"chart change assigns unknown coordinates {sorted(unknown)}")
        object.__setattr__(self, "mapping", full)
        object.__setattr__(self, "functions", dict(self.functions))
        for n, e in full.items():
            allowed = set(self.source.block(*_ALLOWED[self.source.role(n)]))
            bad = e.free_symbols() - allowed
            if bad:
                raise ChartError(f"new {n} depends on {sorted(bad)}: not block-triangular")

    @classmethod
    def identity(cls, frame: Frame) -> ChartChange:
        return cls(frame, {})

    def apply(self, e: Expr) -> Expr:
        """Express ``e`` (given in new coordinates) in the old ones."""
        return substitute(e, self.mapping)

    def compose(self, other: ChartChange) -> ChartChange:
        """``self`` after ``other``: old -> other -> self."""
        return ChartChange(
            self.source,
            {n: other.apply(e) for n, e in self.mapping.items()},
            {**self.functions, **other.functions},
        )

    def jacobian(self, rows: Sequence[str], cols: Sequence[str]) -> list[list[Expr]]:
        return [[partial(self.mapping[r], c) for c in cols] for r in rows]

    def check_invertible(self, seed: int = 0, points: int = 8, realizations=None, threshold: float = 1e-9):
        """Numeric block-Jacobian test at seeded points.

        Returns the smallest ``|det|`` seen; raises ChartError below threshold.
        """
        rng = random.Random(seed)
        reals = dict(realizations or {})
        funcs: dict = {}
        for e in self.mapping.values():
            funcs.update(e.functions())
        for f, n in sorted(funcs.items()):
            reals.setdefault(f, _invertible_realization(n, rng))
        worst = np.inf
        for _ in range(points):
            pt = {n: rng.uniform(-1.0, 1.0) for n in self.source.symbols}
            for role in ROLES:
                block = getattr(self.source, role)
                if not block:
                    continue
                J = np.array(
                    [[eval_numeric(d, pt, reals) for d in row] for row in self.jacobian(block, block)]
                )
                det = abs(np.linalg.det(J))
                worst = min(worst, det)
                if det <= threshold:
                    raise ChartError(f"{role} block Jacobian degenerate (|det|={det:.3g})")
        return worst

    def evaluate(self, point: Mapping[str, float], realizations=None) -> dict:
        return {n: eval_numeric(e, point, realizations or {}) for n, e in self.mapping.items()}

    def invert_numeric(self, values: Mapping[str, float], guess: Mapping[str, float], realizations=None) -> dict:
        """Solve ``new(old) = values`` for old coordinates by Newton iteration."""
        from scipy.optimize import fsolve

        names = list(self.source.symbols)
        jac = self.jacobian(names, names)

        def residual(v):
            pt = dict(zip(names, v))
            return [eval_numeric(self.mapping[n], pt, realizations or {}) - values[n] for n in names]

        def jacobian(v):
            pt = dict(zip(names, v))
            return [[eval_numeric(d, pt, realizations or {}) for d in row] for row in jac]

        sol, info, ier, msg = fsolve(
            residual, [guess[n] for n in names], fprime=jacobian, xtol=1e-12, full_output=True
        )
        # fsolve also complains when it stalls at roundoff, so judge by the residual
        if np.max(np.abs(info["fvec"])) > 1e-10:
            raise ChartError(f"numeric inversion did not converge: {msg}")
        return dict(zip(names, sol))


def _invertible_realization(arity: int, rng: random.Random) -> PolynomialRealization:
    # near-identity in the last argument keeps random charts invertible
    r = PolynomialRealization.random(arity, rng, degree=1)
    params = r.params
    body = r.body / 8 + sym(params[-1]) * 2
    return PolynomialRealization(params, body)


def prolong_chart_change(ch: ChartChange) -> ChartChange:
    """Lift a chart change to the tangent frame.

    Each dotted coordinate is replaced by the total differential of the
    corresponding undotted replacement.
    """
    tf = induce_tangent(ch.source)
    src = ch.source
    big = Frame(
        src.base + tuple(dot(n) for n in src.base),
        src.fibre + tuple(dot(n) for n in src.fibre),
        src.param + tuple(dot(n) for n in src.param),
        src.second + tuple(dot(n) for n in src.second),
        src.functions,
    )
    mapping = dict(ch.mapping)
    for n, e in ch.mapping.items():
        mapping[tf.dot_of(n)] = total_differential(e, src.symbols)
    return ChartChange(big, mapping, ch.functions)


def random_chart_change(frame: Frame, rng: random.Random, opaque: bool = False, prefix: str = "chi") -> ChartChange:
    """Random block-triangular chart change of ``frame``.

    Polynomial charts scale each coordinate by a nonzero rational and add a
    polynomial in the lower blocks times a power of the coordinate; opaque
    charts use one unknown function per coordinate of all allowed symbols.
    """
    from fractions import Fraction

    from .expr import apply, const

    mapping = {}
    for k, n in enumerate(frame.symbols):
        allowed = [m for m in frame.block(*_ALLOWED[frame.role(n)]) if m != n]
        lower = [m for m in allowed if frame.role(m) != frame.role(n)]
        if opaque:
            mapping[n] = apply(f"{prefix}{k}", *[sym(m) for m in frame.block(*_ALLOWED[frame.role(n)])])
            continue
        scale = const(Fraction(rng.choice([1, -1, 2, -2, 3]), rng.choice([1, 2, 3])))
        e = scale * sym(n)
        for _ in range(rng.randint(0, 2)):
            t = const(Fraction(rng.randint(-3, 3), rng.randint(1, 4)))
            for _ in range(rng.randint(1, 2)):
                if lower:
                    t = t * sym(rng.choice(lower))
            # coupling to the coordinate itself keeps its block Jacobian generically nonzero
            if lower and rng.random() < 0.5:
                t = t * sym(n)
            e = e + t
        mapping[n] = e
    return ChartChange(frame, mapping)
