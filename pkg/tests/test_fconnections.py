"""Operator connections, covariant differentials and the operator bijection."""
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jetfield.expr import ZERO, apply, const, eval_numeric, partial, sym
from jetfield.fconnections import (
    DifferentialOperator, HorizontalOrderError, OperatorConnection, apply_recipe,
    connection_from_operator, connection_rep, covariant_differential, is_linear,
    jet_symbol, operator_from_connection, parse_jet, random_gamma_recipe, random_recipe,
)
from jetfield.fconnections import prolonged_rep
from jetfield.geometry import DoubleFibredFrame
from jetfield.sections import SectionSystem, affine_section_system, apply_section, linear_section_system

x0, y0, y1 = sym("x0"), sym("y0"), sym("y1")
LIN = linear_section_system(1, 2, 2)
J = lambda *a: sym(jet_symbol(*a))


def gamma_connection(sys, G):
    return OperatorConnection(sys, {(a, l): sum((G[a, l, b] * J(b) for b in sys.z), ZERO) for a in sys.z for l in sys.x})


def opaque_gamma(sys):
    return {(a, l, b): apply(f"G{a}{l}{b}", x0) for a in sys.z for l in sys.x for b in sys.z}


def test_jet_symbols():
    assert jet_symbol("z0") == "phi_z0"
    assert jet_symbol("z0", "x0", "y1") == "phi_z0__x0__y1"
    assert parse_jet("phi_z0__y0") == ("z0", ("y0",))
    assert parse_jet("w0") is None


def test_apply_recipe_differentiates_the_body():
    body = {"z0": x0**2 * y0, "z1": y1}
    assert apply_recipe(J("z0", "y0") + J("z1") * J("z0", "x0"), body) == x0**2 + 2 * x0 * y0 * y1


# -- covariant differential ---------------------------------------------------------------

def test_trivial_connection_gives_plain_derivative():
    K = OperatorConnection(LIN, {(a, "x0"): ZERO for a in LIN.z})
    sigma = {w: apply("K" + w[1:], x0) for w in LIN.params}
    bar = apply_section(LIN, sigma)
    assert covariant_differential(K, sigma) == {(a, "x0"): partial(bar[a], "x0") for a in LIN.z}


def test_gamma_connection_matches_hand_expansion():
    G = opaque_gamma(LIN)
    K = gamma_connection(LIN, G)
    Kf = {w: apply("K" + w[1:], x0) for w in LIN.params}
    nabla = covariant_differential(K, Kf)
    for a in range(2):
        expected = ZERO
        for i in range(2):
            coeff = partial(Kf[f"w{a}_{i}"], "x0") - sum((G[f"z{a}", "x0", f"z{b}"] * Kf[f"w{b}_{i}"] for b in range(2)), ZERO)
            expected = expected + coeff * sym(f"y{i}")
        assert nabla[f"z{a}", "x0"] == expected


def test_parallel_section_by_construction():
    # Gamma = [[0, A'(x)], [0, 0]] is solved by K0 = c A(x) + d, K1 = c
    sys = linear_section_system(1, 1, 2)
    A = apply("A", x0)
    K = OperatorConnection(sys, {("z0", "x0"): partial(A, "x0") * J("z1"), ("z1", "x0"): ZERO})
    c, d = const(3), const(-2)
    sigma = {"w0_0": c * A + d, "w1_0": c}
    assert all(e.is_zero() for e in covariant_differential(K, sigma).values())
    assert not all(e.is_zero() for e in covariant_differential(K, {"w0_0": A, "w1_0": const(1) + x0}).values())


def test_covariant_differential_is_the_rep_difference():
    rng = random.Random(4)
    K = random_gamma_recipe(LIN, rng, fibre_terms=True)
    sigma = {w: apply("K" + w[1:], x0) for w in LIN.params}
    nabla = covariant_differential(K, sigma)
    et, ks = prolonged_rep(K, sigma, "x0"), connection_rep(K, sigma, "x0")
    assert et.u == ks.u and et.s == ks.s and et.phi == ks.phi
    assert {(a, "x0"): et.xi0[a] - ks.xi0[a] for a in LIN.z} == nabla


def test_nabla_depends_only_on_the_selected_section():
    fr = DoubleFibredFrame.build(("x0",), ("y0",), ("z0",))
    sq = SectionSystem(fr, ("w",), {"z0": sym("w") ** 2 * y0})
    K = OperatorConnection(sq, {("z0", "x0"): x0 * J("z0") ** 2 + J("z0", "y0")})
    assert covariant_differential(K, {"w": x0 + 1}) == covariant_differential(K, {"w": -x0 - 1})


@settings(max_examples=30)
@given(st.integers(0, 2**32), st.fractions(-3, 3, max_denominator=4))
def test_nabla_is_linear_for_linear_connections(seed, alpha):
    rng = random.Random(seed)
    K = random_gamma_recipe(LIN, rng, fibre_terms=True)
    s1 = {w: apply("P" + w[1:], x0) for w in LIN.params}
    s2 = {w: const(rng.randint(-2, 2)) * x0**2 for w in LIN.params}
    mix = {w: const(alpha) * s1[w] + s2[w] for w in LIN.params}
    n1, n2, nm = (covariant_differential(K, s) for s in (s1, s2, mix))
    assert nm == {k: const(alpha) * n1[k] + n2[k] for k in nm}


# -- operator bijection ---------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(20))
def test_round_trip_on_random_gamma_recipes(seed):
    rng = random.Random(seed)
    K = random_gamma_recipe(LIN, rng, opaque=seed % 2 == 0, fibre_terms=seed % 3 == 0)
    D = operator_from_connection(K)
    assert connection_from_operator(D) == K
    assert operator_from_connection(connection_from_operator(D)) == D


def test_operator_has_the_expected_shape():
    K = OperatorConnection(LIN, {(a, "x0"): x0 * J(a) for a in LIN.z})
    D = operator_from_connection(K)
    assert D.recipes["z1", "x0"] == J("z1", "x0") - x0 * J("z1")
    body = {"z0": x0 * y0, "z1": ZERO}
    assert D(body) == {("z0", "x0"): y0 - x0**2 * y0, ("z1", "x0"): ZERO}


def test_second_order_operators_are_rejected():
    D = DifferentialOperator(LIN, {
        ("z0", "x0"): J("z0", "x0") - J("z0", "x0", "x0") + J("z1", "x0"),
        ("z1", "x0"): J("z1", "x0"),
    })
    with pytest.raises(HorizontalOrderError) as err:
        connection_from_operator(D)
    assert err.value.term == "phi_z0__x0__x0"
    with pytest.raises(HorizontalOrderError):
        OperatorConnection(LIN, {("z0", "x0"): J("z1", "x0", "y0"), ("z1", "x0"): ZERO})


def test_fibre_derivatives_are_accepted():
    K = OperatorConnection(LIN, {("z0", "x0"): J("z0", "y0") * J("z1", "y0", "y1"), ("z1", "x0"): J("z1", "y1")})
    assert connection_from_operator(operator_from_connection(K)) == K


def test_malformed_templates_are_rejected():
    with pytest.raises(ValueError, match="neither"):
        OperatorConnection(LIN, {("z0", "x0"): sym("w0_0"), ("z1", "x0"): ZERO})
    with pytest.raises(ValueError, match="frame order"):
        OperatorConnection(LIN, {("z0", "x0"): J("z0", "y1", "y0"), ("z1", "x0"): ZERO})
    with pytest.raises(ValueError, match="malformed"):
        OperatorConnection(LIN, {("z0", "x0"): J("z9"), ("z1", "x0"): ZERO})
    with pytest.raises(ValueError, match="lacks"):
        OperatorConnection(LIN, {("z0", "x0"): ZERO})


# -- linearity ------------------------------------------------------------------------------

def test_linearity_examples():
    assert is_linear(gamma_connection(LIN, opaque_gamma(LIN)))
    assert not is_linear(OperatorConnection(LIN, {(a, "x0"): J(a) ** 2 for a in LIN.z}))
    assert is_linear(OperatorConnection(LIN, {(a, "x0"): ZERO for a in LIN.z}))
    aff = affine_section_system(1, 2, 2)
    with pytest.raises(ValueError, match="vector bundle"):
        is_linear(OperatorConnection(aff, {(a, "x0"): ZERO for a in aff.z}))


def numerically_linear(K, rng):
    """Oracle: additivity and homogeneity of each template at random jet values."""
    for e in K.recipes.values():
        jets = sorted(n for n in e.free_symbols() if parse_jet(n))
        coords = {n: rng.uniform(-1, 1) for n in K.system.x + K.system.y}
        for _ in range(3):
            p = {j: rng.uniform(-2, 2) for j in jets}
            q = {j: rng.uniform(-2, 2) for j in jets}
            a = rng.uniform(-2, 2)
            f = lambda v: eval_numeric(e, {**coords, **v})
            mixed = {j: a * p[j] + q[j] for j in jets}
            if abs(f(mixed) - (a * f(p) + f(q))) > 1e-9 * (1 + abs(f(mixed))):
                return False
    return True


@pytest.mark.parametrize("seed", range(20))
def test_linearity_predicate_agrees_with_numeric_oracle(seed):
    K = random_recipe(LIN, random.Random(seed))
    assert is_linear(K) == numerically_linear(K, random.Random(seed + 100))
