"""Systems of connections, the universal connection, curvature and pullbacks.

A connection on ``F -> B`` is ``d^l (x) (d_l + c^i_l d_i)``, stored as the
table ``c[(i, l)]``.  Curvature components are stored for ordered index
pairs ``a < b`` of the base coordinates (``x`` then ``w`` for upper
connections) with

    R^i_ab = -2 (T^i_ab - T^i_ba),   T^i_ab = d_a c^i_b + c^j_a d_j c^i_b,

so that ``R = sum_{a<b} R^i_ab d^a ^ d^b (x) d_i`` equals the unordered sum
``-2 sum_{a,b} T^i_ab d^a ^ d^b (x) d_i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .algebra import adjugate, det
from .expr import ZERO, Expr, apply, as_expr, partial, substitute, sym
from .geometry import ChartChange, Frame, FrameError

__all__ = [
    "Connection", "ConnectionSystem", "UpperConnection", "Curvature",
    "UniversalReport", "LiouvilleReport", "make_universal", "factor_system",
    "is_reducible", "transform_upper", "pullback", "curvature", "pullback_form",
    "pullback_curvature", "verify_universal", "exterior_derivative",
    "liouville_check", "linear_connection_system", "affine_connection_system",
    "generic_connection_system", "generic_gamma", "linear_gamma", "CURVATURE_FACTOR",
]

CURVATURE_FACTOR = -2


def _table(coeffs: Mapping, rows: Sequence[str], cols: Sequence[str], what: str) -> dict:
    out = {}
    for i in rows:
        for l in cols:
            if (i, l) not in coeffs:
                raise ValueError(f"{what} table lacks entry ({i}, {l})")
            out[i, l] = as_expr(coeffs[i, l])
    extra = set(coeffs) - set(out)
    if extra:
        raise ValueError(f"{what} table has unknown entries {sorted(extra)}")
    return out


def _check_symbols(table: Mapping, allowed: set, what: str):
    for k, e in table.items():
        bad = e.free_symbols() - allowed
        if bad:
            raise ValueError(f"{what} entry {k} uses {sorted(bad)}")


@dataclass(frozen=True)
class Connection:
    frame: Frame
    coeffs: Mapping

    def __post_init__(self):
        if self.frame.param or self.frame.second:
            raise FrameError("a connection frame has only base and fibre blocks")
        t = _table(self.coeffs, self.frame.fibre, self.frame.base, "coefficient")
        _check_symbols(t, set(self.frame.symbols), "coefficient")
        object.__setattr__(self, "coeffs", t)

    @property
    def x(self):
        return self.frame.base

    @property
    def y(self):
        return self.frame.fibre


@dataclass(frozen=True)
class ConnectionSystem:
    frame: Frame
    params: tuple
    coeffs: Mapping
    functions: Mapping = field(default_factory=dict, compare=False)
    name: str = field(default="eps", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        if self.frame.param or self.frame.second:
            raise FrameError("a connection frame has only base and fibre blocks")
        clash = set(self.params) & set(self.frame.symbols)
        if clash:
            raise FrameError(f"parameters collide with coordinates {sorted(clash)}")
        t = _table(self.coeffs, self.frame.fibre, self.frame.base, "coefficient")
        _check_symbols(t, set(self.frame.symbols) | set(self.params), "coefficient")
        object.__setattr__(self, "coeffs", t)

    @property
    def x(self):
        return self.frame.base

    @property
    def y(self):
        return self.frame.fibre


@dataclass(frozen=True)
class UpperConnection:
    """Connection on ``F^ = C x_B F -> C`` with legs along ``x`` and ``w``."""

    frame: Frame  # base=x, param=w, fibre=y
    base_leg: Mapping
    param_leg: Mapping

    def __post_init__(self):
        f = self.frame
        object.__setattr__(self, "base_leg", _table(self.base_leg, f.fibre, f.base, "base-leg"))
        object.__setattr__(self, "param_leg", _table(self.param_leg, f.fibre, f.param, "parameter-leg"))
        _check_symbols(self.base_leg, set(f.symbols), "base-leg")
        _check_symbols(self.param_leg, set(f.symbols), "parameter-leg")

    @property
    def x(self):
        return self.frame.base

    @property
    def params(self):
        return self.frame.param

    @property
    def y(self):
        return self.frame.fibre

    @property
    def legs(self) -> dict:
        return {**self.base_leg, **self.param_leg}


@dataclass(frozen=True)
class Curvature:
    """Vertical-valued 2-form stored on ordered pairs of ``index``."""

    index: tuple
    fibre: tuple
    table: Mapping  # (i, a, b) with a before b in index
    convention: str = "R^i_ab = -2 (T^i_ab - T^i_ba), T^i_ab = d_a c^i_b + c^j_a d_j c^i_b"

    def __getitem__(self, key) -> Expr:
        i, a, b = key
        if a == b:
            return ZERO
        if self.index.index(a) < self.index.index(b):
            return self.table[i, a, b]
        return -self.table[i, b, a]

    def is_zero(self) -> bool:
        return all(e.is_zero() for e in self.table.values())

    def nonzero(self) -> dict:
        return {k: v for k, v in self.table.items() if not v.is_zero()}


def _lifted_frame(x, w, y) -> Frame:
    return Frame(base=x, param=w, fibre=y)


def make_universal(sys: ConnectionSystem) -> UpperConnection:
    """``eps^ = d^l (x) (d_l + eps^i_l d_i) + d^A (x) d_A``."""
    return UpperConnection(
        _lifted_frame(sys.x, sys.params, sys.y),
        dict(sys.coeffs),
        {(i, A): ZERO for i in sys.y for A in sys.params},
    )


def factor_system(up: UpperConnection) -> ConnectionSystem:
    """Inverse of :func:`make_universal` for reducible upper connections."""
    if any(not e.is_zero() for e in up.param_leg.values()):
        raise ValueError("upper connection is not reducible: parameter leg is nonzero")
    return ConnectionSystem(Frame(up.x, up.y), up.params, dict(up.base_leg))


def transform_upper(up: UpperConnection, ch: ChartChange) -> dict:
    """Parameter leg in the new chart, times ``det(d wbar / d w)``, in old coordinates.

    From ``sum_B (d_A wbar^B) cbar^k_B = c^j_A d_j ybar^k`` one gets
    ``det J * cbar^k_B = sum_A Q^k_A adj(J)_AB`` with ``Q^k_A = c^j_A d_j ybar^k``.
    """
    if tuple(ch.source.symbols) != tuple(up.frame.symbols):
        raise ValueError("chart change must act on the lifted frame (x, w, y)")
    w, y = up.params, up.y
    J = [[partial(ch.mapping[B], A) for A in w] for B in w]
    adj = adjugate(J) if w else []
    out = {}
    for k in y:
        Q = [sum((up.param_leg[j, A] * partial(ch.mapping[k], j) for j in y), ZERO) for A in w]
        for b, B in enumerate(w):
            out[k, B] = sum((Q[a] * adj[a][b] for a in range(len(w))), ZERO)
    return out


def is_reducible(up: UpperConnection, charts: Sequence[ChartChange] = ()) -> bool:
    """Parameter leg vanishes in the given chart and in every transformed chart."""
    if any(not e.is_zero() for e in up.param_leg.values()):
        return False
    for ch in charts:
        w = up.params
        if w and det([[partial(ch.mapping[B], A) for A in w] for B in w]).is_zero():
            raise ValueError("chart change is degenerate in the parameter block")
        if any(not e.is_zero() for e in transform_upper(up, ch).values()):
            return False
    return True


def _gamma_binding(params, gamma: Mapping, x) -> dict:
    g = {k: as_expr(v) for k, v in gamma.items()}
    missing = set(params) - set(g)
    if missing:
        raise ValueError(f"parameter section lacks {sorted(missing)}")
    for k, e in g.items():
        bad = e.free_symbols() - set(x)
        if bad:
            raise ValueError(f"parameter section component {k} uses non-base symbols {sorted(bad)}")
    return g


def pullback(obj, gamma: Mapping) -> Connection:
    """Connection selected by the parameter section ``gamma``.

    For a system this is ``eps o gamma``; for an upper connection the
    parameter leg is contracted with ``d_l gamma^A`` as well.
    """
    g = _gamma_binding(obj.params, gamma, obj.x)
    frame = Frame(obj.x, obj.y)
    if isinstance(obj, ConnectionSystem):
        return Connection(frame, {k: substitute(e, g) for k, e in obj.coeffs.items()})
    if isinstance(obj, UpperConnection):
        out = {}
        for i in obj.y:
            for l in obj.x:
                e = substitute(obj.base_leg[i, l], g)
                for A in obj.params:
                    e = e + substitute(obj.param_leg[i, A], g) * partial(g[A], l)
                out[i, l] = e
        return Connection(frame, out)
    raise TypeError("pullback needs a ConnectionSystem or UpperConnection")


def _curv(index, fibre, legs) -> Curvature:
    def T(i, a, b):
        e = partial(legs[i, b], a)
        for j in fibre:
            e = e + legs[j, a] * partial(legs[i, b], j)
        return e

    table = {}
    for p, a in enumerate(index):
        for b in index[p + 1:]:
            for i in fibre:
                table[i, a, b] = (T(i, a, b) - T(i, b, a)) * CURVATURE_FACTOR
    return Curvature(tuple(index), tuple(fibre), table)


def curvature(conn) -> Curvature:
    if isinstance(conn, UpperConnection):
        return _curv(conn.x + conn.params, conn.y, conn.legs)
    if isinstance(conn, (Connection, ConnectionSystem)):
        return _curv(conn.x, conn.y, conn.coeffs)
    raise TypeError("curvature needs a connection")


def pullback_form(K: Curvature, phi: Mapping[str, Expr], base: Sequence[str]) -> Curvature:
    """Pull a 2-form back along ``index -> phi(base)``.

    ``(phi*K)_lm = sum_{a<b} K_ab o phi (d_l phi^a d_m phi^b - d_m phi^a d_l phi^b)``.
    """
    phi = {a: as_expr(phi[a]) for a in K.index}
    table = {}
    for p, l in enumerate(base):
        for m in base[p + 1:]:
            for i in K.fibre:
                e = ZERO
                for (ii, a, b), v in K.table.items():
                    if ii != i:
                        continue
                    jac = partial(phi[a], l) * partial(phi[b], m) - partial(phi[a], m) * partial(phi[b], l)
                    if not jac.is_zero():
                        e = e + substitute(v, phi) * jac
                table[i, l, m] = e
    return Curvature(tuple(base), K.fibre, table)


def pullback_curvature(up: UpperConnection, gamma: Mapping) -> Curvature:
    g = _gamma_binding(up.params, gamma, up.x)
    phi = {**{x: sym(x) for x in up.x}, **g}
    return pullback_form(curvature(up), phi, up.x)


@dataclass(frozen=True)
class UniversalReport:
    connection_identity: bool
    curvature_identity: bool
    residuals: Mapping  # name -> Expr, all zero on success
    cancelled_terms: Mapping  # (i, l, m) -> mixed-block contribution matched by the chain rule
    cancellation_identity: bool
    convention: str

    @property
    def passed(self) -> bool:
        return self.connection_identity and self.curvature_identity and self.cancellation_identity


def verify_universal(sys: ConnectionSystem, gamma: Mapping) -> UniversalReport:
    """Check ``gamma*(eps^) = eps o gamma`` and ``gamma* R[eps^] = R[eps o gamma]`` exactly.

    The mixed ``(x, w)`` block of ``R[eps^]`` pulls back to
    ``-2 antisym((d_A eps^i_m) o gamma * d_l gamma^A)``; this is exactly the
    chain-rule part of ``d_l (eps^i_m o gamma)`` that the base-block terms
    alone miss.  Both sides of that match are reported.
    """
    g = _gamma_binding(sys.params, gamma, sys.x)
    up = make_universal(sys)
    direct = pullback(sys, g)
    via_upper = pullback(up, g)
    substituted = {k: substitute(e, g) for k, e in sys.coeffs.items()}
    residuals = {}
    conn_ok = True
    for (i, l), e in substituted.items():
        r1 = via_upper.coeffs[i, l] - direct.coeffs[i, l]
        r2 = direct.coeffs[i, l] - e
        residuals[f"connection[{i},{l}]"] = r1 + r2 if r1.is_zero() or r2.is_zero() else r1
        conn_ok = conn_ok and r1.is_zero() and r2.is_zero()
    left = pullback_curvature(up, g)
    right = curvature(direct)
    curv_ok = True
    for k in right.table:
        r = left.table[k] - right.table[k]
        residuals["curvature[{},{},{}]".format(*k)] = r
        curv_ok = curv_ok and r.is_zero()
    # mixed block contribution versus chain-rule terms
    full = curvature(up)
    mixed = Curvature(full.index, full.fibre, {
        k: v for k, v in full.table.items() if (k[1] in sys.params) != (k[2] in sys.params)
    })
    phi = {**{x: sym(x) for x in sys.x}, **g}
    mixed_pb = pullback_form(mixed, phi, sys.x) if mixed.table else Curvature(tuple(sys.x), sys.y, {})
    cancelled, canc_ok = {}, True
    for p, l in enumerate(sys.x):
        for m in sys.x[p + 1:]:
            for i in sys.y:
                chain = ZERO
                for A in sys.params:
                    chain = chain + substitute(partial(sys.coeffs[i, m], A), g) * partial(g[A], l)
                    chain = chain - substitute(partial(sys.coeffs[i, l], A), g) * partial(g[A], m)
                chain = chain * CURVATURE_FACTOR
                got = mixed_pb.table.get((i, l, m), ZERO)
                cancelled[i, l, m] = got
                canc_ok = canc_ok and got == chain
    return UniversalReport(conn_ok, curv_ok, residuals, cancelled, canc_ok, full.convention)


def exterior_derivative(form: Mapping[str, Expr], coords: Sequence[str]) -> dict:
    """``(d a)_ab = d_a a_b - d_b a_a`` on ordered pairs of ``coords``."""
    a = {c: as_expr(form.get(c, ZERO)) for c in coords}
    out = {}
    for p, u in enumerate(coords):
        for v in coords[p + 1:]:
            out[u, v] = partial(a[v], u) - partial(a[u], v)
    return out


@dataclass(frozen=True)
class LiouvilleReport:
    dim: int
    identification: Mapping  # parameter -> cotangent fibre coordinate
    contact_form: Mapping
    contact_identity: bool
    symplectic_form: Mapping
    symplectic_identity: bool
    curvature: Curvature
    normalization: int
    curvature_identity: bool

    @property
    def passed(self) -> bool:
        return self.contact_identity and self.symplectic_identity and self.curvature_identity


def liouville_check(dim_M: int) -> LiouvilleReport:
    """System of principal connections of ``M x R -> M`` against the Liouville form.

    The system is ``c = d^m (x) (d_m + w_m d_t)`` with the parameters
    ``w_m`` read as the cotangent fibre coordinates.  The contact form of the
    universal connection is ``lambda = w_m d^m``; ``-d lambda`` has
    coefficient ``+1`` on ``d^{x_m} ^ d^{w_m}``; the universal curvature
    equals ``2 (-d lambda)``.
    """
    if dim_M < 1:
        raise ValueError("dim_M must be at least 1")
    x = tuple(f"x{m}" for m in range(dim_M))
    w = tuple(f"w{m}" for m in range(dim_M))
    sys = ConnectionSystem(Frame(x, ("t",)), w, {("t", x[m]): sym(w[m]) for m in range(dim_M)}, name="principal")
    up = make_universal(sys)
    coords = x + w
    contact = {c: (up.base_leg["t", c] if c in x else up.param_leg["t", c]) for c in coords}
    expected = {c: (sym(w[x.index(c)]) if c in x else ZERO) for c in coords}
    contact_ok = contact == expected
    dl = exterior_derivative(contact, coords)
    omega = {k: -v for k, v in dl.items()}
    expected_omega = {(u, v): (as_expr(1) if u in x and v == w[x.index(u)] else ZERO) for (u, v) in omega}
    omega_ok = omega == expected_omega
    R = curvature(up)
    normalization = 2
    curv_ok = all(R.table["t", u, v] == omega[u, v] * normalization for (u, v) in omega)
    return LiouvilleReport(
        dim_M,
        {w[m]: f"d_{x[m]}" for m in range(dim_M)},
        contact, contact_ok, omega, omega_ok, R, normalization, curv_ok,
    )


# -- standard families -----------------------------------------------------------------

def _names(dim_base, dim_fibre):
    return tuple(f"x{l}" for l in range(dim_base)), tuple(f"y{i}" for i in range(dim_fibre))


def linear_connection_system(dim_base=2, dim_fibre=1) -> ConnectionSystem:
    """``eps^i_l = w^i_{lj} y^j`` with parameters ``w{i}_{l}_{j}``."""
    x, y = _names(dim_base, dim_fibre)
    n = len(y)
    ws = tuple(f"w{i}_{l}_{j}" for i in range(n) for l in range(len(x)) for j in range(n))
    coeffs = {
        (y[i], x[l]): sum((sym(f"w{i}_{l}_{j}") * sym(y[j]) for j in range(n)), ZERO)
        for i in range(n) for l in range(len(x))
    }
    return ConnectionSystem(Frame(x, y), ws, coeffs, name="linear")


def affine_connection_system(dim_base=2, dim_fibre=1) -> ConnectionSystem:
    """``eps^i_l = w^i_{lj} y^j + w^i_l``."""
    lin = linear_connection_system(dim_base, dim_fibre)
    x, y = lin.x, lin.y
    offs = tuple(f"w{i}_{l}" for i in range(len(y)) for l in range(len(x)))
    coeffs = {(y[i], x[l]): lin.coeffs[y[i], x[l]] + sym(f"w{i}_{l}") for i in range(len(y)) for l in range(len(x))}
    return ConnectionSystem(lin.frame, lin.params + offs, coeffs, name="affine")


def generic_connection_system(dim_base=2, dim_fibre=1, dim_params=1) -> ConnectionSystem:
    """Fully opaque ``eps^i_l(x, w, y)`` named ``eps{i}_{l}``."""
    x, y = _names(dim_base, dim_fibre)
    w = tuple(f"w{A}" for A in range(dim_params))
    args = [sym(n) for n in x + w + y]
    coeffs = {(y[i], x[l]): apply(f"eps{i}_{l}", *args) for i in range(len(y)) for l in range(len(x))}
    return ConnectionSystem(Frame(x, y), w, coeffs, name="generic")


def generic_gamma(sys: ConnectionSystem, prefix: str = "g") -> dict:
    """Opaque parameter section ``w^A = g{A}(x)``."""
    args = [sym(n) for n in sys.x]
    return {A: apply(f"{prefix}{k}", *args) for k, A in enumerate(sys.params)}


def linear_gamma(sys: ConnectionSystem) -> dict:
    """Opaque parameter section ``w_... = K_...(x)`` (``k_...`` for affine offsets)."""
    args = [sym(n) for n in sys.x]
    out = {}
    for A in sys.params:
        idx = A[1:]
        out[A] = apply(("K" if idx.count("_") == 2 else "k") + idx, *args)
    return out
