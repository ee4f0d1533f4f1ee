"""Expression grammar: parsing, scopes and error positions."""
from fractions import Fraction

import pytest
from hypothesis import given, settings
from strategies import depth, raw_trees, to_expr, to_text

from jetfield.expr import apply, const, sym
from jetfield.geometry import Frame
from jetfield.parsing import ParseError, parse_expr, parse_tree

x0, w0, y0 = sym("x0"), sym("w0"), sym("y0")
FRAME = ("x0", "w0", "y0")


@settings(max_examples=300)
@given(raw_trees(max_depth=4, max_pow=2).filter(lambda t: depth(t) <= 4))
def test_text_of_a_tree_parses_to_the_same_expression(tree):
    assert parse_expr(to_text(tree)) == to_expr(tree)


def test_precedence_and_unary_minus():
    assert parse_expr("1 + 2*3^2") == const(19)
    assert parse_expr("-x0^2") == -(x0**2)
    assert parse_expr("(-x0)^2") == x0**2
    assert parse_expr("x0 - y0 - w0") == x0 - y0 - w0
    assert parse_expr("--x0") == x0


def test_rational_literals():
    assert parse_expr("3/4*x0") == const(Fraction(3, 4)) * x0
    assert parse_expr("2^-1") == const(Fraction(1, 2))


def test_partial_syntax():
    e = parse_expr("D[2] eps(x0, w0, y0)", frame=FRAME, functions={"eps": 3})
    assert e == apply("eps", x0, w0, y0, derivs=(1,))
    assert parse_expr("D[3,1] eps(x0, w0, y0)", functions={"eps": 3}, frame=FRAME) == apply(
        "eps", x0, w0, y0, derivs=(0, 2)
    )


def test_frame_object_supplies_scope():
    fr = Frame(base=("x0",), fibre=("y0",), param=("w0",), functions={"eps": 3})
    assert parse_expr("eps(x0, w0, y0)", frame=fr).kind == "apply"


@pytest.mark.parametrize(
    "text, offset, fragment",
    [
        ("x0 + * y0", 5, "unexpected"),
        ("x0 + (y0", 8, "expected ')'"),
        ("x0 $ y0", 3, "unexpected character"),
        ("x0^1/2", 3, "integer"),
        ("x0 y0", 3, "unexpected"),
        ("D[0] eps(x0, w0, y0)", 2, "positive"),
    ],
)
def test_syntax_errors_report_byte_offsets(text, offset, fragment):
    with pytest.raises(ParseError) as err:
        parse_expr(text, frame=FRAME, functions={"eps": 3})
    assert err.value.offset == offset
    assert fragment in err.value.message


def test_offsets_count_bytes_not_characters():
    with pytest.raises(ParseError) as err:
        parse_tree("x0 + é")
    assert err.value.offset == 5
    with pytest.raises(ParseError) as err:
        parse_tree("(é) + $")
    assert err.value.offset == 1


def test_resolution_errors():
    with pytest.raises(ParseError, match="unknown symbol"):
        parse_expr("x0 + q", frame=FRAME)
    with pytest.raises(ParseError, match="unknown function"):
        parse_expr("h(x0)", frame=FRAME)
    with pytest.raises(ParseError, match="arity mismatch"):
        parse_expr("eps(x0, w0)", frame=FRAME, functions={"eps": 3})
    with pytest.raises(ParseError, match="out of range"):
        parse_expr("D[4] eps(x0, w0, y0)", frame=FRAME, functions={"eps": 3})
    with pytest.raises(ParseError, match="without arguments"):
        parse_expr("eps + x0", frame=FRAME, functions={"eps": 3})


def test_open_scope_accepts_everything():
    assert parse_expr("anything * f(x)") == sym("anything") * apply("f", sym("x"))
