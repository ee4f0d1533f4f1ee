"""Connection systems, the universal connection, curvature and pullbacks."""
import itertools
import random
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jetfield.connections import (
    CURVATURE_FACTOR, Connection, ConnectionSystem, UpperConnection, affine_connection_system,
    curvature, exterior_derivative, factor_system, generic_connection_system, generic_gamma,
    is_reducible, linear_connection_system, linear_gamma, liouville_check, make_universal,
    pullback, pullback_curvature, transform_upper, verify_universal,
)
from jetfield.expr import ZERO, PolynomialRealization, apply, const, eval_numeric, partial, sym
from jetfield.geometry import ChartChange, Frame, random_chart_change

x0, x1, y0, w0 = sym("x0"), sym("x1"), sym("y0"), sym("w0")


def opaque(name, *names):
    return apply(name, *(sym(n) for n in names))


# -- universal connection and bijection ---------------------------------------------------

def test_universal_connection_of_linear_system():
    sys = linear_connection_system(2, 1)
    up = make_universal(sys)
    assert up.base_leg["y0", "x1"] == sym("w0_1_0") * y0
    assert all(e.is_zero() for e in up.param_leg.values())
    assert set(up.param_leg) == {("y0", A) for A in sys.params}


def test_universal_connection_of_affine_system():
    up = make_universal(affine_connection_system(2, 1))
    assert up.base_leg["y0", "x0"] == sym("w0_0_0") * y0 + sym("w0_0")


def test_zero_system_gives_trivial_upper_connection():
    sys = ConnectionSystem(Frame(("x0",), ("y0",)), ("w0",), {("y0", "x0"): ZERO})
    assert curvature(make_universal(sys)).is_zero()


@pytest.mark.parametrize("make", [linear_connection_system, affine_connection_system, generic_connection_system])
def test_make_universal_and_factor_are_inverse(make):
    sys = make()
    assert factor_system(make_universal(sys)) == sys
    up = make_universal(sys)
    assert make_universal(factor_system(up)) == up


def test_factor_rejects_non_reducible():
    fr = Frame(base=("x0",), param=("w0",), fibre=("y0",))
    up = UpperConnection(fr, {("y0", "x0"): y0}, {("y0", "w0"): y0})
    with pytest.raises(ValueError):
        factor_system(up)
    assert not is_reducible(up)


def test_tables_must_be_complete_and_clean():
    with pytest.raises(ValueError, match="lacks"):
        Connection(Frame(("x0", "x1"), ("y0",)), {("y0", "x0"): y0})
    with pytest.raises(ValueError, match="uses"):
        Connection(Frame(("x0",), ("y0",)), {("y0", "x0"): w0})


# -- reducibility under chart changes ----------------------------------------------------

LIFTED = Frame(base=("x0", "x1"), param=("w0",), fibre=("y0",))


@pytest.mark.parametrize("seed", range(10))
def test_reducibility_is_chart_stable(seed):
    rng = random.Random(seed)
    up = make_universal(generic_connection_system(2, 1, 1))
    ch = random_chart_change(LIFTED, rng, opaque=seed % 2 == 0)
    assert is_reducible(up, [ch])


def test_reducible_under_cubic_reparametrisation():
    up = make_universal(generic_connection_system(2, 1, 1))
    assert is_reducible(up, [ChartChange(LIFTED, {"w0": w0**3})])


def test_non_reducible_stays_non_reducible_and_transforms_covariantly():
    up = UpperConnection(LIFTED, {("y0", "x0"): ZERO, ("y0", "x1"): ZERO}, {("y0", "w0"): y0})
    ch = ChartChange(LIFTED, {"w0": 2 * w0 + x0, "y0": 3 * y0})
    # det(dwbar/dw) * cbar = c * dybar/dy = 3 y
    assert transform_upper(up, ch) == {("y0", "w0"): 3 * y0}
    assert not is_reducible(up, [ch])


def test_degenerate_parameter_chart_rejected():
    up = make_universal(generic_connection_system(2, 1, 1))
    with pytest.raises(ValueError, match="degenerate"):
        is_reducible(up, [ChartChange(LIFTED, {"w0": x0})])


# -- pullback ------------------------------------------------------------------------------

def test_pullback_of_linear_system():
    sys = linear_connection_system(2, 1)
    conn = pullback(sys, linear_gamma(sys))
    assert conn.coeffs["y0", "x1"] == opaque("K0_1_0", "x0", "x1") * y0


def test_constant_gamma_on_x_free_system():
    sys = affine_connection_system(2, 1)
    conn = pullback(sys, {A: const(k) for k, A in enumerate(sys.params)})
    assert all(e.free_symbols() <= {"y0"} for e in conn.coeffs.values())


def test_pullback_routes_agree_for_generic_system():
    sys = generic_connection_system(2, 1, 1)
    g = generic_gamma(sys)
    a, b = pullback(sys, g), pullback(make_universal(sys), g)
    assert a == b
    assert a.coeffs["y0", "x0"] == apply("eps0_0", x0, x1, opaque("g0", "x0", "x1"), y0)


def test_pullback_contracts_nonzero_parameter_leg():
    up = UpperConnection(LIFTED, {("y0", "x0"): ZERO, ("y0", "x1"): ZERO}, {("y0", "w0"): y0})
    conn = pullback(up, {"w0": x0 * x1})
    assert conn.coeffs == {("y0", "x0"): x1 * y0, ("y0", "x1"): x0 * y0}


def test_gamma_validation():
    sys = linear_connection_system(2, 1)
    with pytest.raises(ValueError, match="lacks"):
        pullback(sys, {})
    with pytest.raises(ValueError, match="non-base"):
        pullback(sys, {A: y0 for A in sys.params})


# -- curvature -------------------------------------------------------------------------------

def test_flat_connection():
    assert curvature(Connection(Frame(("x0", "x1"), ("y0",)), {("y0", "x0"): ZERO, ("y0", "x1"): ZERO})).is_zero()


def test_curvature_of_linear_one_dimensional_connection():
    a0, a1 = opaque("a0", "x0", "x1"), opaque("a1", "x0", "x1")
    conn = Connection(Frame(("x0", "x1"), ("y0",)), {("y0", "x0"): a0 * y0, ("y0", "x1"): a1 * y0})
    R = curvature(conn)
    assert R["y0", "x0", "x1"] == -2 * (partial(a1, "x0") - partial(a0, "x1")) * y0
    assert R["y0", "x1", "x0"] == -R["y0", "x0", "x1"]
    assert R["y0", "x0", "x0"].is_zero()


def test_curvature_of_generic_universal_connection():
    sys = generic_connection_system(2, 1, 1)
    R = curvature(make_universal(sys))
    eps = sys.coeffs
    T = lambda a, b: partial(eps["y0", b], a) + eps["y0", a] * partial(eps["y0", b], "y0")
    assert R["y0", "x0", "x1"] == CURVATURE_FACTOR * (T("x0", "x1") - T("x1", "x0"))
    for m in ("x0", "x1"):
        assert R["y0", "w0", m] == -2 * partial(eps["y0", m], "w0")
        assert R["y0", m, "w0"] == 2 * partial(eps["y0", m], "w0")
    assert "R^i_ab = -2" in R.convention


def test_curvature_of_non_reducible_includes_parameter_block():
    fr = Frame(base=("x0",), param=("w0", "w1"), fibre=("y0",))
    up = UpperConnection(fr, {("y0", "x0"): ZERO}, {("y0", "w0"): ZERO, ("y0", "w1"): sym("w0") * y0})
    R = curvature(up)
    assert R["y0", "w0", "w1"] == -2 * y0


def finite_difference_curvature(coeff_funcs, point, h=1e-5):
    """Numeric oracle for -2 antisym(d_a c_b + c_a d_y c_b) on a 2-D base, 1-D fibre."""
    def d(f, k):
        up = list(point); dn = list(point)
        up[k] += h; dn[k] -= h
        return (f(*up) - f(*dn)) / (2 * h)
    c0, c1 = coeff_funcs
    T01 = d(c1, 0) + c0(*point) * d(c1, 2)
    T10 = d(c0, 1) + c1(*point) * d(c0, 2)
    return -2 * (T01 - T10)


@pytest.mark.parametrize("seed", range(5))
def test_curvature_against_finite_differences(seed):
    rng = random.Random(seed)
    sys = generic_connection_system(2, 1, 1)
    reals = {f"eps0_{l}": PolynomialRealization.random(4, rng, degree=2) for l in range(2)}
    reals["g0"] = PolynomialRealization.random(2, rng, degree=2)
    conn = pullback(sys, generic_gamma(sys))
    R = curvature(conn)
    pt = [rng.uniform(-1, 1) for _ in range(3)]
    env = dict(zip(("x0", "x1", "y0"), pt))
    funcs = [
        (lambda *p, e=conn.coeffs["y0", f"x{l}"]: eval_numeric(e, dict(zip(("x0", "x1", "y0"), p)), reals))
        for l in range(2)
    ]
    exact = eval_numeric(R["y0", "x0", "x1"], env, reals)
    assert abs(exact - finite_difference_curvature(funcs, pt)) < 1e-6 * (1 + abs(exact))


# -- universal property ------------------------------------------------------------------------

@pytest.mark.parametrize(
    "make, gamma",
    [
        (lambda: linear_connection_system(2, 1), linear_gamma),
        (lambda: affine_connection_system(2, 1), linear_gamma),
        (lambda: generic_connection_system(2, 1, 1), generic_gamma),
    ],
)
def test_verify_universal_on_named_instances(make, gamma):
    sys = make()
    t = time.perf_counter()
    rep = verify_universal(sys, gamma(sys))
    assert time.perf_counter() - t < 2.0
    assert rep.connection_identity and rep.curvature_identity and rep.cancellation_identity
    assert all(r.is_zero() for r in rep.residuals.values())
    assert rep.passed


def test_generic_cancellation_terms_are_chain_rule_terms():
    sys = generic_connection_system(2, 1, 1)
    g = generic_gamma(sys)
    rep = verify_universal(sys, g)
    gx = {l: partial(g["w0"], l) for l in ("x0", "x1")}
    from jetfield.expr import substitute
    dA = {m: substitute(partial(sys.coeffs["y0", m], "w0"), g) for m in ("x0", "x1")}
    assert rep.cancelled_terms["y0", "x0", "x1"] == -2 * (dA["x1"] * gx["x0"] - dA["x0"] * gx["x1"])
    assert not rep.cancelled_terms["y0", "x0", "x1"].is_zero()


def random_polynomial_system(rng, dim_base, dim_fibre, dim_params):
    x = tuple(f"x{l}" for l in range(dim_base))
    y = tuple(f"y{i}" for i in range(dim_fibre))
    w = tuple(f"w{A}" for A in range(dim_params))
    coeffs = {}
    for i in y:
        for l in x:
            e = ZERO
            for k in range(rng.randint(1, 3)):
                mono = apply(f"a_{i}_{l}_{k}", *(sym(n) for n in x))
                for _ in range(rng.randint(0, 2)):
                    mono = mono * sym(rng.choice(w + y))
                e = e + mono
            coeffs[i, l] = e
    return ConnectionSystem(Frame(x, y), w, coeffs)


@settings(max_examples=15)
@given(st.integers(0, 2**32), st.integers(1, 3), st.integers(1, 2), st.integers(1, 3))
def test_verify_universal_on_random_polynomial_systems(seed, nb, nf, nw):
    sys = random_polynomial_system(random.Random(seed), nb, nf, nw)
    rep = verify_universal(sys, generic_gamma(sys))
    assert rep.passed
    # the curvature of a pullback never mentions parameters
    R = curvature(pullback(sys, generic_gamma(sys)))
    assert all(not (e.free_symbols() & set(sys.params)) for e in R.table.values())


def test_pullback_curvature_matches_on_linear_system():
    sys = linear_connection_system(3, 2)
    g = linear_gamma(sys)
    assert pullback_curvature(make_universal(sys), g).table == curvature(pullback(sys, g)).table


# -- Liouville -----------------------------------------------------------------------------

@pytest.mark.parametrize("dim", [1, 2, 3])
def test_liouville_identification(dim):
    rep = liouville_check(dim)
    assert rep.passed and rep.normalization == 2
    nonzero = {k: v for k, v in rep.symplectic_form.items() if not v.is_zero()}
    assert nonzero == {(f"x{m}", f"w{m}"): const(1) for m in range(dim)}
    assert rep.contact_form == {**{f"x{m}": sym(f"w{m}") for m in range(dim)}, **{f"w{m}": ZERO for m in range(dim)}}


def test_liouville_rejects_empty_base():
    with pytest.raises(ValueError):
        liouville_check(0)


def test_exterior_derivative():
    assert all(v.is_zero() for v in exterior_derivative({"a": const(3), "b": const(-1)}, ("a", "b", "c")).values())
    d = exterior_derivative({"a": sym("b"), "b": ZERO}, ("a", "b"))
    assert d == {("a", "b"): const(-1)}
    # d(df) = 0 for a gradient
    f = sym("a") ** 2 * sym("b") + sym("c")
    grad = {c: partial(f, c) for c in ("a", "b", "c")}
    assert all(v.is_zero() for v in exterior_derivative(grad, ("a", "b", "c")).values())
