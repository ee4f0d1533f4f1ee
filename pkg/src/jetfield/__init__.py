"""Exact symbolic engine for smooth systems of maps, sections and connections."""
from .expr import (
    ZERO, ONE, Expr, apply, as_expr, canonicalize, const, equivalent, eval_numeric,
    partial, substitute, substitute_functions, sym,
)
from .parsing import ParseError, parse_expr
from .geometry import (
    ChartChange, DoubleFibredFrame, Frame, TangentFrame, induce_tangent,
    prolong_chart_change, random_chart_change,
)
from .maps import (
    MapSystem, affine_map_system, check_decomposition, injectivity_probe, iota,
    linear_map_system, partial_tangent_1, partial_tangent_2, random_polynomial_system,
    total_tangent,
)
from .fsmooth import (
    Curve, CurveFamily, first_order_contact, member, smoothness_probe,
    tangent_rep_map_space,
)
from .sections import (
    SectionSystem, SectionTangentRep, apply_section, chart_invariance_check,
    hat_operator, lift_fibred, rep_add, rep_scale, tangent_prolong_section,
    tangent_rep_section, vertical_split,
)
from .connections import (
    Connection, ConnectionSystem, Curvature, UpperConnection, curvature,
    exterior_derivative, is_reducible, liouville_check, make_universal, pullback,
    verify_universal,
)
from .fconnections import (
    OperatorConnection, connection_from_operator, covariant_differential, is_linear,
    operator_from_connection,
)
from .model import ModelFile, format_model, load_model, parse_model

__version__ = "0.1.0"
