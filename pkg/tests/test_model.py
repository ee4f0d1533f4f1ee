"""Model files: parsing, diagnostics, building and the print/parse fixpoint."""
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from strategies import depth, raw_trees, to_text

from jetfield.connections import ConnectionSystem
from jetfield.fconnections import OperatorConnection
from jetfield.fsmooth import Curve
from jetfield.geometry import ChartChange, Frame
from jetfield.maps import MapSystem
from jetfield.model import ModelError, format_model, load_model, parse_model
from jetfield.sections import SectionSystem

MODELS = sorted((Path(__file__).parent.parent / "models").glob("*.jf"))


def test_golden_linear_sections_file():
    m = load_model(MODELS[0].parent / "linear_sections.jf")
    assert [(d.kind, d.name) for d in m.declarations] == [
        ("chart", "B"), ("fibred", "F"), ("fibred", "G"), ("secsystem", "linear"),
    ]
    sys = m.build("linear")
    assert isinstance(sys, SectionSystem) and sys.bundle == "vector"
    assert sys.params == ("w0_0", "w0_1", "w1_0", "w1_1")
    assert m.get("linear").pos == (5, 1)


def test_empty_and_comment_only_files():
    assert len(parse_model("")) == 0
    assert len(parse_model("# nothing here\n\n")) == 0


@pytest.mark.parametrize("path", MODELS, ids=lambda p: p.name)
def test_shipped_models_round_trip_and_build(path):
    m = load_model(path)
    again = parse_model(format_model(m))
    assert again == m
    assert format_model(again) == format_model(m)
    for d in m.declarations:
        if d.kind != "opaque":
            m.build(d.name)


def test_built_objects_have_the_right_types():
    sec = load_model(MODELS[0].parent / "sections.jf")
    assert isinstance(sec.build("nabla"), OperatorConnection)
    assert isinstance(sec.build("moving"), Curve)
    assert isinstance(sec.build("rot"), ChartChange)
    assert isinstance(sec.build("B"), Frame)
    conn = load_model(MODELS[0].parent / "connections.jf")
    assert isinstance(conn.build("generic"), ConnectionSystem)
    maps = load_model(MODELS[0].parent / "maps.jf")
    assert isinstance(maps.build("square"), MapSystem)
    assert maps.build("up").interval == (-2, 2)


def test_pick():
    m = load_model(MODELS[0].parent / "maps.jf")
    assert m.pick("system", "cubic").name == "cubic"
    with pytest.raises(KeyError, match="exactly one"):
        m.pick("system")
    with pytest.raises(KeyError, match="not a"):
        m.pick("curve", "cubic")


def error_of(text):
    with pytest.raises(ModelError) as err:
        parse_model(text, "t.jf")
    return err.value


def test_forward_reference_is_reported_at_the_use_site():
    e = error_of("chart B { x0 }\nfibred G over F { z0 }\nfibred F over B { y0 }\n")
    assert (e.line, e.col) == (2, 15)
    assert "F" in e.message
    assert str(e).startswith("t.jf:2:15:")


def test_duplicate_names():
    e = error_of("chart B { x0 }\nchart B { x1 }\n")
    assert e.line == 2 and "duplicate" in e.message


def test_duplicate_coordinates():
    e = error_of("chart B { x0 }\nfibred F over B { x0 }\n")
    assert e.line == 2


def test_unknown_symbol_inside_expression_has_exact_column():
    e = error_of("system s params { w } source { y } target { z } eval { z = w*q }\n")
    assert (e.line, e.col) == (1, 62)
    assert "unknown symbol" in e.message


def test_opaque_arity_is_checked():
    e = error_of("opaque f/1\nsystem s params { w } source { y } target { z } eval { z = f(w, y) }\n")
    assert e.line == 2 and "arity" in e.message


def test_syntax_errors():
    assert "expected" in error_of("chart B x0 }").message
    assert error_of("bogus X { }").line == 1
    assert "exponent" in error_of("system s params { w } source { y } target { z } eval { z = w^1/2 }").message


def test_structural_errors_surface_with_positions():
    text = "chart B { x0 }\nfibred F over B { y0 }\nfibred G over F { z0 }\nsecsystem s over (B, F, G) vector params { w } eval { z0 = w^2*y0 }\n"
    e = error_of(text)
    assert e.line == 4 and "linear" in e.message


def test_second_order_fconnection_is_rejected_with_position():
    text = (
        "chart B { x0 }\nfibred F over B { y0 }\nfibred G over F { z0 }\n"
        "secsystem s over (B, F, G) vector params { w } eval { z0 = w*y0 }\n"
        "fconnection K over s { D[z0, x0](phi) = phi_z0__x0 - phi_z0__x0__x0 }\n"
    )
    e = error_of(text)
    assert e.line == 5 and "phi_z0__x0__x0" in e.message


def test_anonymous_change_uses_last_frame():
    m = parse_model("chart B { x0 }\nfibred F over B { y0 }\nchange { ybar0 = y0^3 }\n")
    ch = m.build(m.names("change")[0])
    assert str(ch.mapping["y0"]) == "y0^3"
    assert ch.source.symbols == ("x0", "y0")


# -- random models for the fixpoint ----------------------------------------------------------

exprs = raw_trees(max_depth=3, symbols=("w0", "y0", "y1"), funcs={"f": 1, "g": 2}, max_pow=2).filter(
    lambda t: depth(t) <= 3
)


@settings(max_examples=60)
@given(st.lists(exprs, min_size=1, max_size=3), st.lists(exprs, min_size=1, max_size=3), st.booleans())
def test_parse_print_parse_is_a_fixpoint(bodies1, bodies2, with_curve):
    lines = ["opaque f/1", "opaque g/2", "chart B { x0 }"]
    for k, bodies in enumerate((bodies1, bodies2)):
        targets = " ".join(f"z{a}" for a in range(len(bodies)))
        evals = "\n".join(f"  z{a} = {to_text(b)}" for a, b in enumerate(bodies))
        lines.append(f"system s{k} params {{ w0 }} source {{ y0 y1 }} target {{ {targets} }} eval {{\n{evals}\n}}")
    if with_curve:
        lines.append("curve c over s0 { w0 = 1/3*lam^2 - 2 } interval (-1/2, inf)")
    text = "\n".join(lines) + "\n"
    first = parse_model(text)
    printed = format_model(first)
    second = parse_model(printed)
    assert second == first
    assert format_model(second) == printed


def test_documented_grammar_sample_builds():
    import jetfield.model as jm
    readme = (Path(__file__).parent.parent / "README.md").read_text()
    samples = [jm.__doc__.split("::")[1].split("Inside")[0], readme.split("## Model files")[1].split("```")[1]]
    for text in samples:
        m = parse_model(text)
        assert len(m) == 15
        for d in m.declarations:
            if d.kind != "opaque":
                m.build(d.name)
