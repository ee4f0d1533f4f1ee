"""Connections of a section system presented as first-order operators.

A connection is stored through recipes ``Dv[(a, l)]``: expressions in the
frame coordinates and jet symbols of a section body ``phi``.  Jet symbols
are ``phi_z0`` for ``phi^z0`` and ``phi_z0__y1__x0`` for its partial
derivatives (variables in frame order).  The covariant differential of a
parameter section is ``d_l sbar^a - Dv^a_l(sbar)`` and the associated
operator is ``D^a_l(phi) = phi_a__l - Dv^a_l(phi)``.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .algebra import coefficients_in
from .expr import ZERO, Expr, apply, as_expr, const, partial, substitute, sym
from .sections import SectionSystem, SectionTangentRep, apply_section, tangent_prolong_section
from .geometry import dot

__all__ = [
    "OperatorConnection", "DifferentialOperator", "HorizontalOrderError",
    "jet_symbol", "parse_jet", "apply_recipe", "covariant_differential",
    "connection_rep", "operator_from_connection", "connection_from_operator",
    "is_linear", "random_gamma_recipe", "random_recipe",
]

JET = "phi"


class HorizontalOrderError(ValueError):
    """Recipe is not of the shape ``d_l phi - (fibrewise term)``."""

    def __init__(self, message, term=None):
        super().__init__(message)
        self.term = term


def jet_symbol(z: str, *vars: str, prefix: str = JET) -> str:
    return "__".join((f"{prefix}_{z}",) + tuple(vars))


def parse_jet(name: str, prefix: str = JET):
    """``(z, vars)`` for a jet symbol, ``None`` otherwise."""
    head = prefix + "_"
    if not name.startswith(head):
        return None
    parts = name[len(head):].split("__")
    return parts[0], tuple(parts[1:])


def _jets(e: Expr, prefix: str = JET) -> dict:
    return {n: parse_jet(n, prefix) for n in e.free_symbols() if parse_jet(n, prefix) is not None}


def _check_template(sys: SectionSystem, e: Expr, what: str):
    coords = set(sys.x) | set(sys.y)
    for n in e.free_symbols():
        if n in coords:
            continue
        jet = parse_jet(n)
        if jet is None:
            raise ValueError(f"{what} uses {n}, which is neither a coordinate nor a jet symbol")
        z, vars = jet
        if z not in sys.z or any(v not in coords for v in vars):
            raise ValueError(f"{what} uses malformed jet symbol {n}")
        order = {v: k for k, v in enumerate(sys.x + sys.y)}
        if list(vars) != sorted(vars, key=order.__getitem__):
            raise ValueError(f"{what}: derivative variables of {n} must be in frame order")


def _horizontal_terms(sys, e: Expr) -> list:
    """Monomials of ``e`` carrying a jet symbol with a base derivative."""
    bad = []
    for n, (z, vars) in _jets(e).items():
        if any(v in sys.x for v in vars):
            bad.append(n)
    if not bad:
        return []
    coeffs = coefficients_in(e, bad)

    def order(key):
        return -max(len(parse_jet(a.name)[1]) for a, _ in key)

    # highest derivative order first so the report names the worst term
    return sorted((key for key in coeffs if key), key=lambda k: (order(k), _fmt_term(k)))


def apply_recipe(recipe: Expr, body: Mapping[str, Expr]) -> Expr:
    """Evaluate a template on a section body ``z -> Expr(x, y)``."""
    binding = {}
    for n, (z, vars) in _jets(recipe).items():
        e = as_expr(body[z])
        for v in vars:
            e = partial(e, v)
        binding[n] = e
    return substitute(recipe, binding)


@dataclass(frozen=True)
class OperatorConnection:
    system: SectionSystem
    recipes: Mapping  # (a, l) -> template Dv^a_l

    def __post_init__(self):
        sys = self.system
        r = {}
        for a in sys.z:
            for l in sys.x:
                if (a, l) not in self.recipes:
                    raise ValueError(f"connection lacks recipe ({a}, {l})")
                e = as_expr(self.recipes[a, l])
                _check_template(sys, e, f"recipe ({a}, {l})")
                bad = _horizontal_terms(sys, e)
                if bad:
                    raise HorizontalOrderError(
                        f"recipe ({a}, {l}) contains a base derivative of phi", _fmt_term(bad[0])
                    )
                r[a, l] = e
        extra = set(self.recipes) - set(r)
        if extra:
            raise ValueError(f"unknown recipe entries {sorted(extra)}")
        object.__setattr__(self, "recipes", r)


@dataclass(frozen=True)
class DifferentialOperator:
    system: SectionSystem
    recipes: Mapping  # (a, l) -> template D^a_l

    def __post_init__(self):
        r = {k: as_expr(v) for k, v in self.recipes.items()}
        for k, e in r.items():
            _check_template(self.system, e, f"operator {k}")
        object.__setattr__(self, "recipes", r)

    def __call__(self, body: Mapping[str, Expr]) -> dict:
        return {k: apply_recipe(e, body) for k, e in self.recipes.items()}


def _fmt_term(key) -> str:
    return "*".join(f"{a}" if k == 1 else f"{a}^{k}" for a, k in key)


def _selected(K: OperatorConnection, sigma: Mapping) -> dict:
    return apply_section(K.system, sigma)


def covariant_differential(K: OperatorConnection, sigma: Mapping) -> dict:
    """``(nabla sigma)^a_l = d_l sbar^a - Dv^a_l(sbar)``."""
    body = _selected(K, sigma)
    return {(a, l): partial(body[a], l) - apply_recipe(e, body) for (a, l), e in K.recipes.items()}


def connection_rep(K: OperatorConnection, sigma: Mapping, l: str) -> SectionTangentRep:
    """``K o sigma`` evaluated on the base vector ``d_l``, as a tangent representation."""
    sys = K.system
    prolonged = tangent_prolong_section(sys, sigma)
    body = _selected(K, sigma)
    u = {x: as_expr(1 if x == l else 0) for x in sys.x}
    xi0 = {a: apply_recipe(K.recipes[a, l], body) for a in sys.z}
    return SectionTangentRep(prolonged.base, prolonged.s, u, xi0, prolonged.phi)


def prolonged_rep(K: OperatorConnection, sigma: Mapping, l: str) -> SectionTangentRep:
    """``ET sigma`` on ``d_l``."""
    sys = K.system
    rep = tangent_prolong_section(sys, sigma)
    at = {dot(x): as_expr(1 if x == l else 0) for x in sys.x}
    return SectionTangentRep(
        rep.base, rep.s, {x: substitute(v, at) for x, v in rep.u.items()},
        {a: substitute(v, at) for a, v in rep.xi0.items()}, rep.phi,
    )


def operator_from_connection(K: OperatorConnection) -> DifferentialOperator:
    sys = K.system
    return DifferentialOperator(sys, {(a, l): sym(jet_symbol(a, l)) - e for (a, l), e in K.recipes.items()})


def connection_from_operator(D: DifferentialOperator) -> OperatorConnection:
    """Recover ``Dv = d_l phi - D``; rejects operators not of horizontal order one."""
    sys = D.system
    out = {}
    for (a, l), e in D.recipes.items():
        rest = sym(jet_symbol(a, l)) - e
        bad = _horizontal_terms(sys, rest)
        if bad:
            raise HorizontalOrderError(
                f"operator ({a}, {l}) is not d_{l} {a} minus a fibrewise term; offending term {_fmt_term(bad[0])}",
                _fmt_term(bad[0]),
            )
        out[a, l] = rest
    return OperatorConnection(sys, out)


def is_linear(K: OperatorConnection) -> bool:
    """``Dv(alpha phi + psi) = alpha Dv(phi) + Dv(psi)`` with a formal scalar ``alpha``."""
    if K.system.bundle != "vector":
        raise ValueError("linearity is defined for vector bundle systems")
    alpha = sym("alpha__")
    for e in K.recipes.values():
        jets = _jets(e)
        mixed = {n: alpha * sym("p" + n) + sym("q" + n) for n in jets}
        left = substitute(e, mixed)
        right = alpha * substitute(e, {n: sym("p" + n) for n in jets}) + substitute(e, {n: sym("q" + n) for n in jets})
        if left != right:
            return False
    return True


# -- random recipes ------------------------------------------------------------------

def _rand_coeff(rng: random.Random, x: Sequence[str], opaque: bool, name: str) -> Expr:
    if opaque:
        return apply(name, *[sym(v) for v in x])
    e = const(Fraction(rng.randint(-4, 4), rng.randint(1, 3)))
    for _ in range(rng.randint(0, 2)):
        e = e * sym(rng.choice(x))
    return e + const(Fraction(rng.randint(-2, 2)))


def random_gamma_recipe(sys: SectionSystem, rng: random.Random, opaque: bool = False, fibre_terms: bool = False) -> OperatorConnection:
    """``Dv^a_l(phi) = Gamma^a_{lb}(x) phi^b`` plus optional ``y``-derivative terms."""
    recipes = {}
    for a in sys.z:
        for l in sys.x:
            e = ZERO
            for b in sys.z:
                e = e + _rand_coeff(rng, sys.x, opaque, f"G{a}_{l}_{b}") * sym(jet_symbol(b))
                if fibre_terms:
                    for i in sys.y:
                        if rng.random() < 0.5:
                            e = e + _rand_coeff(rng, sys.x, False, "") * sym(jet_symbol(b, i))
            recipes[a, l] = e
    return OperatorConnection(sys, recipes)


def random_recipe(sys: SectionSystem, rng: random.Random) -> OperatorConnection:
    """Random polynomial recipe in ``phi`` and its fibre derivatives.

    Half of the recipes are built from jet-degree-one terms only (linear);
    the others may contain jet-free or quadratic terms.
    """
    jets = [jet_symbol(b) for b in sys.z] + [jet_symbol(b, i) for b in sys.z for i in sys.y]
    degrees = [1] if rng.random() < 0.5 else [0, 1, 1, 2]
    recipes = {}
    for a in sys.z:
        for l in sys.x:
            e = ZERO
            for _ in range(rng.randint(0, 3)):
                t = _rand_coeff(rng, sys.x + sys.y, False, "")
                for _ in range(rng.choice(degrees)):
                    t = t * sym(rng.choice(jets))
                e = e + t
            recipes[a, l] = e
    return OperatorConnection(sys, recipes)
