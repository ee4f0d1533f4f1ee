"""Normal form, calculus and numeric evaluation of expressions."""
import math
import random
import warnings
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from strategies import depth, eval_tree, raw_trees, to_expr

from jetfield.expr import (
    ONE, ZERO, Apply, ArityError, EquivalenceDiagnostic, FunctionRealization,
    MissingPartialError, PolynomialRealization, UnboundSymbolError, apply, canonicalize,
    const, equivalent, eval_numeric, partial, substitute, substitute_functions, sym,
)
from jetfield.parsing import ParseError, parse_expr

x, y, w = sym("x"), sym("y"), sym("w")

# polynomial realizations shared by the numeric oracles
F_BODY = ("_a",), parse_expr("1/2 + _a - 1/3*_a^2")
G_BODY = ("_a", "_b"), parse_expr("_a*_b - 2*_b + 1/4*_a^2")
REALS = {"f": PolynomialRealization(*F_BODY), "g": PolynomialRealization(*G_BODY)}
PY_FUNCS = {"f": lambda a: 0.5 + a - a * a / 3, "g": lambda a, b: a * b - 2 * b + a * a / 4}

trees = raw_trees().filter(lambda t: depth(t) <= 6)
# calculus properties compose and substitute trees, so keep them moderate
small = raw_trees(max_depth=4, max_pow=2).filter(lambda t: depth(t) <= 4)
points = st.fixed_dictionaries({n: st.fractions(-2, 2, max_denominator=5) for n in "xyw"})


# -- normal form --------------------------------------------------------------

@settings(max_examples=1000)
@given(trees)
def test_canonicalize_is_idempotent(tree):
    e = to_expr(tree)
    once = canonicalize(e)
    assert canonicalize(once) == once
    assert once == e


@settings(max_examples=300)
@given(trees, points)
def test_normal_form_evaluates_like_the_raw_tree(tree, pt):
    # oracle: evaluate the unsimplified tree directly with Python floats
    fpt = {k: float(v) for k, v in pt.items()}
    expected = eval_tree(tree, fpt, PY_FUNCS)
    got = eval_numeric(to_expr(tree), fpt, REALS)
    assert math.isclose(got, expected, rel_tol=1e-9, abs_tol=1e-9)


def test_sum_and_product_are_order_independent():
    assert x * y + w == w + y * x
    assert (x + y) * (x - y) == x**2 - y**2
    assert (w + y) ** 2 == w**2 + 2 * w * y + y**2


def test_constants_fold_to_exact_rationals():
    e = const(Fraction(1, 3)) + const(Fraction(1, 6))
    assert e.is_constant() and e.constant_value() == Fraction(1, 2)
    assert (x - x).is_zero()


def test_node_kinds_of_parsed_input():
    assert parse_expr("w0*y0 + w1").kind == "sum"
    p = parse_expr("w0^3 * y0")
    assert p.kind == "product"
    assert {o.kind for o in p.operands} == {"power", "symbol"}
    e = parse_expr("eps(x0, w0, y0)", functions={"eps": 3}, frame=("x0", "w0", "y0"))
    assert e.kind == "apply" and e.atom.arity == 3


def test_opaque_partials_commute():
    a = apply("f", x, y, derivs=(1, 0))
    b = apply("f", x, y, derivs=(0, 1))
    assert a == b
    assert partial(partial(apply("f", x, y), "x"), "y") == partial(partial(apply("f", x, y), "y"), "x")


def test_floats_are_rejected():
    with pytest.raises(TypeError):
        x + 0.5


def test_negative_power_only_for_constants():
    assert const(2) ** -1 == const(Fraction(1, 2))
    with pytest.raises(ValueError):
        x ** -1


def test_opaque_arity_checks():
    with pytest.raises(ArityError):
        apply("f", x, derivs=(1,))
    with pytest.raises(ParseError):
        parse_expr("f(x, y)", frame=("x", "y"), functions={"f": 1})


# -- calculus -----------------------------------------------------------------

def test_power_rule():
    assert partial(w**3 * y, "w") == 3 * w**2 * y


def test_chain_rule_nested_opaque():
    e = apply("f", apply("g", x, x))
    # d/dx f(g(x,x)) = f'(g) * (g_1 + g_2)
    expected = apply("f", apply("g", x, x), derivs=(0,)) * (
        apply("g", x, x, derivs=(0,)) + apply("g", x, x, derivs=(1,))
    )
    assert partial(e, "x") == expected


def test_chain_rule_through_pullback():
    eps = apply("eps", x, w, y)
    gam = apply("gamma", x)
    pulled = substitute(eps, {"w": gam})
    expected = apply("eps", x, gam, y, derivs=(0,)) + apply("eps", x, gam, y, derivs=(1,)) * apply("gamma", x, derivs=(0,))
    assert partial(pulled, "x") == expected


def test_substitution_does_not_redifferentiate():
    d = apply("eps", x, w, y, derivs=(1,))
    out = substitute(d, {"w": apply("gamma", x)})
    assert out == apply("eps", x, apply("gamma", x), y, derivs=(1,))
    assert substitute(w * y, {"w": x**2}) == x**2 * y


def test_substitution_is_simultaneous():
    assert substitute(x + 2 * y, {"x": y, "y": x}) == y + 2 * x


def test_duplicate_binding_rejected():
    with pytest.raises(ValueError):
        substitute(x, {"x": y, sym("x"): w})


@given(small, small, st.fractions(-3, 3, max_denominator=3), st.sampled_from("xyw"))
def test_partial_is_linear(t1, t2, a, s):
    e1, e2 = to_expr(t1), to_expr(t2)
    assert partial(const(a) * e1 + e2, s) == const(a) * partial(e1, s) + partial(e2, s)


@given(small, st.sampled_from("xyw"), st.sampled_from("xyw"))
def test_clairaut(tree, s, t):
    e = to_expr(tree)
    assert partial(partial(e, s), t) == partial(partial(e, t), s)


@given(small, small)
def test_substitution_chain_law(tree, gtree):
    # g may depend on x only, so w -> g(x) is a genuine pullback
    e = to_expr(tree)
    g = substitute(to_expr(gtree), {"y": x, "w": x * x})
    lhs = partial(substitute(e, {"w": g}), "x")
    rhs = substitute(partial(e, "x"), {"w": g}) + substitute(partial(e, "w"), {"w": g}) * partial(g, "x")
    assert lhs == rhs


@settings(max_examples=200)
@given(small, points, st.sampled_from("xyw"))
def test_derivative_matches_central_difference(tree, pt, s):
    e = to_expr(tree)
    fpt = {k: float(v) for k, v in pt.items()}
    h = 1e-5
    up = dict(fpt, **{s: fpt[s] + h})
    dn = dict(fpt, **{s: fpt[s] - h})
    fd = (eval_numeric(e, up, REALS) - eval_numeric(e, dn, REALS)) / (2 * h)
    exact = eval_numeric(partial(e, s), fpt, REALS)
    scale = max(1.0, abs(eval_numeric(e, fpt, REALS)))
    assert abs(exact - fd) <= 1e-6 * (1 + abs(exact)) * scale


# -- equivalence and evaluation --------------------------------------------------

def test_equivalent_examples():
    assert equivalent((w + y) ** 2, w**2 + 2 * w * y + y**2)
    assert not equivalent(w**2 * y, w**3 * y)


@settings(max_examples=100)
@given(small, small)
def test_equivalent_never_disagrees_with_probing(t1, t2):
    report = []
    with warnings.catch_warnings():
        warnings.simplefilter("error", EquivalenceDiagnostic)
        equivalent(to_expr(t1), to_expr(t2), report=report)
        equivalent(to_expr(t1), to_expr(t1) + ZERO, report=report)
    assert report == []


def test_eval_numeric_examples():
    assert eval_numeric(w**2 * y, {"w": 2, "y": 3}) == 12.0
    assert eval_numeric(partial(w**2 * y, "w"), {"w": 2, "y": 3}) == 12.0


def test_eval_numeric_errors():
    with pytest.raises(UnboundSymbolError):
        eval_numeric(x + y, {"x": 1.0})
    real = FunctionRealization(1, {(): math.sin})
    assert eval_numeric(apply("f", x), {"x": 0.0}, {"f": real}) == 0.0
    with pytest.raises(MissingPartialError):
        eval_numeric(partial(apply("f", x), "x"), {"x": 0.0}, {"f": real})


def test_function_realization_with_partials():
    real = FunctionRealization(1, {(): math.sin, (0,): math.cos})
    v = eval_numeric(partial(apply("f", x**2), "x"), {"x": 0.5}, {"f": real})
    assert math.isclose(v, math.cos(0.25) * 1.0)


def test_substitute_functions_realizes_generic_identity():
    e = partial(apply("f", x * y), "x")
    body = (("_t",), sym("_t") ** 3)
    assert substitute_functions(e, {"f": body}) == 3 * x**2 * y**3


def test_printing_round_trips():
    rng = random.Random(1)
    e = apply("f", x + ONE, derivs=(0, 0)) ** 2 * const(Fraction(-3, 4)) + apply("g", x, y, derivs=(1,)) * w
    assert parse_expr(str(e)) == e
    for _ in range(6):
        e = e * (sym(rng.choice("xyw")) + const(rng.randint(-2, 2)))
        e = partial(e, "x") + e
    assert parse_expr(str(e)) == e


@given(small)
def test_printing_round_trips_on_random_trees(tree):
    e = to_expr(tree)
    assert parse_expr(str(e)) == e


def test_apply_atom_records_derivs_sorted():
    a = Apply("f", [x, y], (1, 0, 1))
    assert a.derivs == (0, 1, 1)
