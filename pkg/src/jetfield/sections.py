"""Systems of sections of a double fibred manifold ``G -> F -> B``.

A system selects sections ``F -> G`` through an evaluation map
``eps: S x_B F -> G`` with parameters ``w`` over the base.  Tangent vectors
of the parameter space are represented by pairs ``(u, Xi)`` where ``u`` is a
base vector and ``Xi`` a section of ``TG -> TF`` over ``u``; in coordinates
``Xi^a = Xi0^a + d_i(eps_s)^a * d_y^i``.  Only ``(u, Xi0)`` is free data: the
``d_y`` block is forced by the selected section.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

from .algebra import adjugate, coefficients_in, det, is_affine_in, is_linear_in, solve_constant
from .expr import ZERO, Expr, as_expr, partial, substitute, sym
from .fsmooth import LAM, Curve
from .geometry import ChartChange, DoubleFibredFrame, Frame, dot
from .maps import number

__all__ = [
    "SectionSystem", "SectionTangentRep", "apply_section", "lift_fibred",
    "tangent_rep_section", "vertical_split", "rep_scale", "rep_add", "rep_zero",
    "transform_rep", "chart_invariance_check", "tangent_prolong_section",
    "hat_operator", "solve_section", "linear_section_system",
    "affine_section_system", "IncompatibleOperator",
]


class IncompatibleOperator(ValueError):
    """A differential operator sent a selected section outside the target system."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


@dataclass(frozen=True)
class SectionSystem:
    frame: DoubleFibredFrame
    params: tuple
    eval: Mapping
    functions: Mapping = field(default_factory=dict, compare=False)
    bundle: str = "none"  # none | vector | affine
    name: str = field(default="eps", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        ev = {k: as_expr(v) for k, v in self.eval.items()}
        object.__setattr__(self, "eval", ev)
        if set(ev) != set(self.z):
            raise ValueError(f"evaluation map must assign exactly {self.z}")
        allowed = set(self.x) | set(self.y) | set(self.params)
        for k, e in ev.items():
            bad = e.free_symbols() - allowed
            if bad:
                raise ValueError(f"{k} uses {sorted(bad)}: the map must be fibred over F (no z on the right)")
        if self.bundle == "vector" and not all(is_linear_in(e, self.params) for e in ev.values()):
            raise ValueError("vector flag requires an evaluation map linear in the parameters")
        if self.bundle == "affine" and not all(is_affine_in(e, self.params) for e in ev.values()):
            raise ValueError("affine flag requires an evaluation map affine in the parameters")

    @property
    def x(self):
        return self.frame.x

    @property
    def y(self):
        return self.frame.y

    @property
    def z(self):
        return self.frame.z

    def at(self, base: Mapping | None = None, params: Mapping | None = None) -> dict:
        b = {k: number(v) for k, v in {**(base or {}), **(params or {})}.items()}
        return {z: substitute(self.eval[z], b) for z in self.z}


def apply_section(sys: SectionSystem, sigma: Mapping) -> dict:
    """The selected section ``F -> G``: ``z^a = eps^a(x, sigma(x), y)``."""
    sigma = {k: as_expr(v) for k, v in sigma.items()}
    missing = set(sys.params) - set(sigma)
    if missing:
        raise ValueError(f"parameter section lacks {sorted(missing)}")
    for k, e in sigma.items():
        bad = e.free_symbols() - set(sys.x)
        if bad:
            raise ValueError(f"parameter section component {k} uses non-base symbols {sorted(bad)}")
    return {z: substitute(sys.eval[z], sigma) for z in sys.z}


def lift_fibred(sys) -> DoubleFibredFrame:
    """Frames of ``F^ = S x_B F -> S -> B`` with coordinates ``(x, w, y)``.

    The parameters ``w`` become the fibre of ``S -> B`` and the base block
    of the lifted fibration.  Works for section and connection systems.
    """
    x, y, w = sys.x, sys.y, sys.params
    return DoubleFibredFrame(Frame(x), Frame(x, w), Frame(x, w, second=y))


@dataclass(frozen=True)
class SectionTangentRep:
    """``(u, Xi0)`` at the selected section ``s`` over the base point ``base``.

    ``phi[(z, y)]`` caches the forced block ``d_y eps_s^z``.
    """

    base: Mapping
    s: Mapping
    u: Mapping
    xi0: Mapping
    phi: Mapping

    def key(self):
        return (tuple(self.base.items()), tuple(self.s.items()))

    def xi(self) -> dict:
        """Full ``Xi^a = Xi0^a + phi^a_i d_y^i`` with ``d_y`` symbols."""
        out = {}
        for z, x0 in self.xi0.items():
            e = x0
            for (zz, y), c in self.phi.items():
                if zz == z:
                    e = e + c * sym(dot(y))
            out[z] = e
        return out


def _base_binding(sys, base):
    if base is None:
        return {x: sym(x) for x in sys.x}
    return {x: number(base[x]) if x in base else sym(x) for x in sys.x}


def _forced(sys: SectionSystem, base: Mapping, s: Mapping) -> dict:
    b = {**base, **s}
    return {(z, y): substitute(partial(sys.eval[z], y), b) for z in sys.z for y in sys.y}


def check_rep(sys: SectionSystem, rep: SectionTangentRep) -> bool:
    """The forced ``d_y`` block equals the fibre derivative of ``eps_s``."""
    return dict(rep.phi) == _forced(sys, rep.base, rep.s)


def tangent_rep_section(sys: SectionSystem, curve: Curve, lam0) -> SectionTangentRep:
    """Representation of the tangent vector of ``curve`` (valued in ``(x, w)``) at ``lam0``.

    ``u^mu = d/dlam x^mu`` and ``Xi0 = d/dlam eps(x(lam), w(lam), y)`` at
    fixed ``y``.
    """
    if not curve.symbolic:
        raise TypeError("tangent representation needs a symbolic curve")
    if isinstance(lam0, (int, float)) or hasattr(lam0, "denominator"):
        curve._check(lam0)
    need = set(sys.x) | set(sys.params)
    if set(curve.space) != need:
        raise ValueError(f"curve must be valued in {sorted(need)}")
    body = curve.exact()
    at = {LAM: number(lam0)}
    base = {x: substitute(body[x], at) for x in sys.x}
    s = {w: substitute(body[w], at) for w in sys.params}
    u = {x: substitute(partial(body[x], LAM), at) for x in sys.x}
    xi0 = {}
    for z in sys.z:
        pulled = substitute(sys.eval[z], body)
        xi0[z] = substitute(partial(pulled, LAM), at)
    return SectionTangentRep(base, s, u, xi0, _forced(sys, base, s))


def rep_zero(sys: SectionSystem, base: Mapping | None, s: Mapping) -> SectionTangentRep:
    base = _base_binding(sys, base)
    s = {k: number(v) for k, v in s.items()}
    return SectionTangentRep(base, s, {x: ZERO for x in sys.x}, {z: ZERO for z in sys.z}, _forced(sys, base, s))


def rep_scale(r, rep: SectionTangentRep) -> SectionTangentRep:
    r = number(r)
    return replace(
        rep,
        u={k: r * v for k, v in rep.u.items()},
        xi0={k: r * v for k, v in rep.xi0.items()},
    )


def rep_add(rep1: SectionTangentRep, rep2: SectionTangentRep) -> SectionTangentRep:
    if rep1.key() != rep2.key():
        raise ValueError("representations live over different points of S")
    return replace(
        rep1,
        u={k: rep1.u[k] + rep2.u[k] for k in rep1.u},
        xi0={k: rep1.xi0[k] + rep2.xi0[k] for k in rep1.xi0},
    )


def _solve_in_image(sys: SectionSystem, target: Mapping[str, Expr], names, offset: Mapping[str, Expr]):
    """Find values ``v`` for ``names`` with ``sum_A v^A d_A eps + offset = target`` by y-coefficients."""
    rows, rhs = [], []
    keys = set()
    gens = {A: {z: partial(sys.eval[z], A) for z in sys.z} for A in names}
    for z in sys.z:
        parts = [coefficients_in(gens[A][z], sys.y) for A in names]
        tgt = coefficients_in(target[z] - offset.get(z, ZERO), sys.y)
        keys = set().union(*[set(p) for p in parts], set(tgt))
        for key in sorted(keys, key=lambda k: tuple((a.sort_key, e) for a, e in k)):
            rows.append([p.get(key, ZERO) for p in parts])
            rhs.append(tgt.get(key, ZERO))
    sol = solve_constant(rows, rhs)
    return None if sol is None else dict(zip(names, sol))


def solve_section(sys: SectionSystem, section_map: Mapping[str, Expr]):
    """Parameter section selecting ``section_map`` (``z -> Expr(x, y)``), or ``None``.

    Supported for systems affine in the parameters whose y-coefficient
    matrix is rational.
    """
    if not all(is_affine_in(e, sys.params) for e in sys.eval.values()):
        raise ValueError("parameter recovery needs an evaluation map affine in the parameters")
    offset = {z: substitute(sys.eval[z], {w: ZERO for w in sys.params}) for z in sys.z}
    return _solve_in_image(sys, section_map, sys.params, offset)


@dataclass(frozen=True)
class VerticalSplit:
    section: Mapping  # z -> Xi0 over the fibre at b
    point: Mapping | None  # s of the rep
    vector: Mapping | None  # parameter point (vector case) or associated vector (affine case)


def vertical_split(sys: SectionSystem, rep: SectionTangentRep) -> VerticalSplit:
    """Identify a vertical representation with a section ``F_b -> G_b`` and, when possible, a parameter point."""
    if sys.bundle not in ("vector", "affine"):
        raise ValueError("vertical splitting needs a vector or affine bundle system")
    if any(not v.is_zero() for v in rep.u.values()):
        raise ValueError("representation is not vertical (u != 0)")
    section = dict(rep.xi0)
    gens_sys = replace(sys, eval={z: substitute(sys.eval[z], dict(rep.base)) for z in sys.z}, bundle="none")
    try:
        vec = _solve_in_image(gens_sys, section, sys.params, {})
    except ValueError:
        vec = None
    return VerticalSplit(section, dict(rep.s), vec)


def embed_vertical(sys: SectionSystem, base: Mapping | None, s: Mapping, vector: Mapping) -> SectionTangentRep:
    """Inverse of :func:`vertical_split`: ``Xi0 = d_A eps * vector^A`` at ``(b, s)``."""
    rep = rep_zero(sys, base, s)
    b = {**rep.base, **rep.s}
    xi0 = {}
    for z in sys.z:
        e = ZERO
        for A in sys.params:
            e = e + substitute(partial(sys.eval[z], A), b) * number(vector[A])
        xi0[z] = e
    return replace(rep, xi0=xi0)


# -- chart changes -------------------------------------------------------------------

@dataclass(frozen=True)
class TransformedRep:
    """A representation in another chart, scaled by the fibre Jacobian determinant.

    ``xi0_num / jac_det`` is the new ``Xi0``; keeping the numerator avoids
    division while preserving linearity in ``(u, Xi0)``.
    """

    u: Mapping
    xi0_num: Mapping
    jac_det: Expr
    residual_free_of_dy: bool


def transform_rep(sys: SectionSystem, rep: SectionTangentRep, ch: ChartChange) -> TransformedRep:
    """Push ``(u, Xi0)`` through a block-triangular chart change of G."""
    G = sys.frame.G
    if tuple(ch.source.symbols) != tuple(G.symbols):
        raise ValueError("chart change must act on the frame of G")
    x, y, z = sys.x, sys.y, sys.z
    eps_s = {zz: substitute(sys.eval[zz], {**rep.base, **rep.s}) for zz in z}
    at = {**{k: v for k, v in rep.base.items()}, **eps_s}

    def ev(e):
        return substitute(e, at)

    m = ch.mapping
    dx = {(a, b): ev(partial(m[a], b)) for a in x for b in x}
    dy = {(a, b): ev(partial(m[a], b)) for a in y for b in x + y}
    dz = {(a, b): ev(partial(m[a], b)) for a in z for b in x + y + z}
    u_new = {a: sum((dx[a, b] * rep.u[b] for b in x), ZERO) for a in x}
    J = [[dy[i, j] for j in y] for i in y]
    D = det(J)
    A = adjugate(J)
    # total new Xi^a as affine function of old d_y
    dys = {j: sym(dot(j)) for j in y}
    full = {}
    for a in z:
        e = sum((dz[a, mu] * rep.u[mu] for mu in x), ZERO)
        e = e + sum((dz[a, j] * dys[j] for j in y), ZERO)
        for b in z:
            inner = rep.xi0[b] + sum((rep.phi[b, j] * dys[j] for j in y), ZERO)
            e = e + dz[a, b] * inner
        full[a] = e
    ydot_new = {
        i: sum((dy[i, mu] * rep.u[mu] for mu in x), ZERO) + sum((dy[i, j] * dys[j] for j in y), ZERO) for i in y
    }
    # D * phibar^a_i = sum_j (dz^a_j + dz^a_b phi^b_j) * adj(J)^j_i
    num = {}
    free = True
    for a in z:
        chain = [dz[a, j] + sum((dz[a, b] * rep.phi[b, j] for b in z), ZERO) for j in y]
        phibar_num = [sum((chain[jj] * A[jj][ii] for jj in range(len(y))), ZERO) for ii in range(len(y))]
        n = D * full[a] - sum((phibar_num[ii] * ydot_new[i] for ii, i in enumerate(y)), ZERO)
        if any(not partial(n, dot(j)).is_zero() for j in y):
            free = False
        num[a] = substitute(n, {dot(j): ZERO for j in y})
    return TransformedRep(u_new, num, D, free)


def chart_invariance_check(sys: SectionSystem, rep: SectionTangentRep, ch: ChartChange, other: SectionTangentRep | None = None, r=None) -> bool:
    """Scaling and addition commute with the chart change (exact).

    Also checks that the new ``Xi0`` does not depend on ``d_y``, i.e. that
    the split into free and forced blocks is chart independent.
    """
    r = number(3 if r is None else r)
    other = other if other is not None else rep_scale(2, rep)
    t1, t2 = transform_rep(sys, rep, ch), transform_rep(sys, other, ch)
    if not (t1.residual_free_of_dy and t2.residual_free_of_dy):
        return False
    ts = transform_rep(sys, rep_scale(r, rep), ch)
    ok_scale = ts.jac_det == t1.jac_det and ts.u == {k: r * v for k, v in t1.u.items()} and ts.xi0_num == {
        k: r * v for k, v in t1.xi0_num.items()
    }
    ta = transform_rep(sys, rep_add(rep, other), ch)
    ok_add = ta.u == {k: t1.u[k] + t2.u[k] for k in t1.u} and ta.xi0_num == {
        k: t1.xi0_num[k] + t2.xi0_num[k] for k in t1.xi0_num
    }
    return ok_scale and ok_add


# -- prolongation of sections and operators --------------------------------------------------

def tangent_prolong_section(sys: SectionSystem, sigma: Mapping) -> SectionTangentRep:
    """``ETsigma`` at a symbolic base point and symbolic base vector ``u = d_x``."""
    sigma = {k: as_expr(v) for k, v in sigma.items()}
    bar = apply_section(sys, sigma)
    base = {x: sym(x) for x in sys.x}
    u = {x: sym(dot(x)) for x in sys.x}
    xi0 = {z: sum((partial(bar[z], mu) * u[mu] for mu in sys.x), ZERO) for z in sys.z}
    return SectionTangentRep(base, sigma, u, xi0, _forced(sys, base, sigma))


def hat_operator(sysA: SectionSystem, sysB: SectionSystem, D: Callable[[dict], Mapping]) -> Callable[[Mapping], dict]:
    """Lift an operator on selected sections to parameter sections.

    Raises :class:`IncompatibleOperator` with the offending image when
    ``D(sigma_bar)`` is not selected by ``sysB``.
    """

    def hat(sigma: Mapping) -> dict:
        image = {k: as_expr(v) for k, v in D(apply_section(sysA, sigma)).items()}
        sol = solve_section(sysB, image)
        if sol is None:
            raise IncompatibleOperator("operator image is not selected by the target system", image)
        return sol

    return hat


# -- standard families ---------------------------------------------------------------------

def _names(dim_base, dim_fibre, dim_second):
    return (
        tuple(f"x{k}" for k in range(dim_base)),
        tuple(f"y{k}" for k in range(dim_fibre)),
        tuple(f"z{k}" for k in range(dim_second)),
    )


def linear_section_system(dim_base=1, dim_fibre=2, dim_second=2) -> SectionSystem:
    """``z^a = w^a_i y^i`` over a vector bundle."""
    x, y, z = _names(dim_base, dim_fibre, dim_second)
    ws = tuple(f"w{a}_{i}" for a in range(dim_second) for i in range(dim_fibre))
    ev = {f"z{a}": sum((sym(f"w{a}_{i}") * sym(f"y{i}") for i in range(dim_fibre)), ZERO) for a in range(dim_second)}
    return SectionSystem(DoubleFibredFrame.build(x, y, z), ws, ev, bundle="vector", name="linear")


def affine_section_system(dim_base=1, dim_fibre=2, dim_second=2) -> SectionSystem:
    """``z^a = w^a_i y^i + w^a`` over an affine bundle."""
    x, y, z = _names(dim_base, dim_fibre, dim_second)
    ws = tuple(f"w{a}_{i}" for a in range(dim_second) for i in range(dim_fibre))
    offs = tuple(f"w{a}" for a in range(dim_second))
    ev = {
        f"z{a}": sum((sym(f"w{a}_{i}") * sym(f"y{i}") for i in range(dim_fibre)), ZERO) + sym(f"w{a}")
        for a in range(dim_second)
    }
    return SectionSystem(DoubleFibredFrame.build(x, y, z), ws + offs, ev, bundle="affine", name="affine")
