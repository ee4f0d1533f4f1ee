"""Exact symbolic expressions over coordinates and opaque smooth functions.

Every :class:`Expr` is stored in canonical form: a sparse polynomial with
rational coefficients whose atoms are coordinate symbols and applications of
opaque function symbols (optionally differentiated with respect to argument
positions).  Canonical form is unique, so structural equality *is*
mathematical equality for this class of expressions.
"""
from __future__ import annotations

import math
import random
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

__all__ = [
    "Expr", "Symbol", "Apply", "const", "sym", "apply", "ZERO", "ONE",
    "partial", "substitute", "equivalent", "eval_numeric", "canonicalize",
    "PolynomialRealization", "FunctionRealization", "UnboundSymbolError",
    "MissingPartialError", "ArityError", "EquivalenceDiagnostic",
]


class UnboundSymbolError(KeyError):
    pass


class MissingPartialError(LookupError):
    pass


class ArityError(ValueError):
    pass


class Symbol:
    """A coordinate symbol.  Interned by name."""

    __slots__ = ("name", "sort_key", "_hash")
    _pool: dict[str, Symbol] = {}

    def __new__(cls, name: str):
        inst = cls._pool.get(name)
        if inst is None:
            inst = object.__new__(cls)
            inst.name = name
            inst.sort_key = (0, name)
            inst._hash = hash(inst.sort_key)
            cls._pool[name] = inst
        return inst

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return self is other

    def __repr__(self):
        return f"Symbol({self.name!r})"

    def __str__(self):
        return self.name


class Apply:
    """Opaque function ``func`` applied to ``args``, differentiated by ``derivs``.

    ``derivs`` is a sorted tuple of 0-based argument positions; partials
    commute, so ``(0, 1)`` and ``(1, 0)`` are the same derivative.
    """

    __slots__ = ("func", "args", "derivs", "sort_key", "_hash")

    def __init__(self, func: str, args: Sequence[Expr], derivs: Iterable[int] = ()):
        args = tuple(as_expr(a) for a in args)
        derivs = tuple(sorted(derivs))
        for k in derivs:
            if not 0 <= k < len(args):
                raise ArityError(f"partial index {k + 1} out of range for {func}/{len(args)}")
        self.func = func
        self.args = args
        self.derivs = derivs
        self.sort_key = (1, func, derivs, tuple(a.sort_key for a in args))
        self._hash = hash(self.sort_key)

    @property
    def arity(self) -> int:
        return len(self.args)

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        return (
            isinstance(other, Apply)
            and self._hash == other._hash
            and self.sort_key == other.sort_key
        )

    def __repr__(self):
        return f"Apply({self.func!r}, {self.args!r}, {self.derivs!r})"

    def __str__(self):
        body = f"{self.func}({', '.join(str(a) for a in self.args)})"
        if not self.derivs:
            return body
        return f"D[{','.join(str(k + 1) for k in self.derivs)}] {body}"


Atom = Symbol | Apply
Monomial = tuple  # tuple[tuple[Atom, int], ...], sorted by atom sort key


def _mono_key(mono: Monomial) -> tuple:
    return tuple((atom.sort_key, e) for atom, e in mono)


def _mono_mul(m1: Monomial, m2: Monomial) -> Monomial:
    if not m1:
        return m2
    if not m2:
        return m1
    powers: dict = dict(m1)
    for atom, e in m2:
        powers[atom] = powers.get(atom, 0) + e
    return tuple(sorted(powers.items(), key=lambda p: p[0].sort_key))


class Expr:
    """Immutable canonical polynomial in atoms with rational coefficients."""

    __slots__ = ("_terms", "_key", "_hash")

    def __init__(self, terms: Mapping[Monomial, Fraction] | None = None):
        items = [(m, Fraction(c)) for m, c in (terms or {}).items() if c != 0]
        items.sort(key=lambda mc: _mono_key(mc[0]))
        self._terms: tuple = tuple(items)
        self._key = None
        self._hash = None

    # -- identity ---------------------------------------------------------
    @property
    def sort_key(self) -> tuple:
        if self._key is None:
            self._key = tuple(
                (_mono_key(m), (c.numerator, c.denominator)) for m, c in self._terms
            )
        return self._key

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self.sort_key)
        return self._hash

    def __eq__(self, other):
        if not isinstance(other, Expr):
            if isinstance(other, (int, Fraction)):
                other = const(other)
            else:
                return NotImplemented
        return self._terms == other._terms

    @property
    def terms(self) -> tuple:
        """Canonical ``(monomial, coefficient)`` pairs."""
        return self._terms

    def is_zero(self) -> bool:
        return not self._terms

    def is_constant(self) -> bool:
        return all(not m for m, _ in self._terms)

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise ValueError(f"{self} is not constant")
        return self._terms[0][1] if self._terms else Fraction(0)

    def atoms(self) -> set:
        out = set()
        for m, _ in self._terms:
            for atom, _ in m:
                out.add(atom)
        return out

    def free_symbols(self) -> set[str]:
        """Names of every coordinate symbol, including inside opaque arguments."""
        out: set[str] = set()
        for atom in self.atoms():
            if isinstance(atom, Symbol):
                out.add(atom.name)
            else:
                for a in atom.args:
                    out |= a.free_symbols()
        return out

    def functions(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for atom in self.atoms():
            if isinstance(atom, Apply):
                out[atom.func] = atom.arity
                for a in atom.args:
                    out.update(a.functions())
        return out

    def degree_in(self, names: Iterable[str]) -> int:
        """Total polynomial degree in the given top-level symbols."""
        names = set(names)
        best = 0
        for m, _ in self._terms:
            best = max(best, sum(e for a, e in m if isinstance(a, Symbol) and a.name in names))
        return best

    # -- structural view ------------------------------------------------------
    @property
    def kind(self) -> str:
        """One of const, symbol, apply, power, product, sum."""
        if len(self._terms) > 1:
            return "sum"
        if not self._terms:
            return "const"
        mono, coeff = self._terms[0]
        if not mono:
            return "const"
        if coeff != 1 or len(mono) > 1:
            return "product"
        atom, e = mono[0]
        if e > 1:
            return "power"
        return "symbol" if isinstance(atom, Symbol) else "apply"

    @property
    def operands(self) -> tuple:
        """Children of the top node, in canonical order."""
        k = self.kind
        if k == "sum":
            return tuple(Expr({m: c}) for m, c in self._terms)
        if k == "product":
            mono, coeff = self._terms[0]
            parts = [] if coeff == 1 else [const(coeff)]
            parts += [Expr({((a, e),): 1}) for a, e in mono]
            return tuple(parts)
        if k == "power":
            atom, e = self._terms[0][0][0]
            return (Expr({((atom, 1),): 1}), const(e))
        if k == "apply":
            return self._terms[0][0][0][0].args
        return ()

    @property
    def atom(self) -> Atom:
        if self.kind not in ("symbol", "apply"):
            raise ValueError(f"{self} is not a single atom")
        return self._terms[0][0][0][0]

    # -- arithmetic -----------------------------------------------------------
    def __add__(self, other):
        other = as_expr(other)
        acc = dict(self._terms)
        for m, c in other._terms:
            acc[m] = acc.get(m, 0) + c
        return Expr(acc)

    __radd__ = __add__

    def __neg__(self):
        return Expr({m: -c for m, c in self._terms})

    def __sub__(self, other):
        return self + (-as_expr(other))

    def __rsub__(self, other):
        return as_expr(other) - self

    def __mul__(self, other):
        other = as_expr(other)
        acc: dict = {}
        for m1, c1 in self._terms:
            for m2, c2 in other._terms:
                m = _mono_mul(m1, m2)
                acc[m] = acc.get(m, 0) + c1 * c2
        return Expr(acc)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_expr(other)
        if not other.is_constant() or other.is_zero():
            raise ZeroDivisionError("only division by nonzero rational constants")
        inv = 1 / other.constant_value()
        return Expr({m: c * inv for m, c in self._terms})

    def __pow__(self, n: int):
        if isinstance(n, Expr):
            n = n.constant_value()
            if n.denominator != 1:
                raise ValueError("exponent must be an integer")
            n = int(n)
        if n < 0:
            if self.is_constant() and not self.is_zero():
                return const(self.constant_value() ** n)
            raise ValueError("negative powers of non-constant expressions are not supported")
        # single-term fast path keeps atom powers symbolic
        if len(self._terms) == 1:
            mono, c = self._terms[0]
            return Expr({tuple((a, e * n) for a, e in mono) if n else (): c**n})
        out = ONE
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    # -- printing ---------------------------------------------------------------
    def __str__(self):
        if not self._terms:
            return "0"
        pieces = []
        for i, (mono, c) in enumerate(self._terms):
            sign = "-" if c < 0 else "+"
            mag = abs(c)
            factors = []
            if mag != 1 or not mono:
                factors.append(str(mag))
            for atom, e in mono:
                s = str(atom)
                if isinstance(atom, Apply) and atom.derivs and (e > 1):
                    s = f"({s})"
                factors.append(s if e == 1 else f"{s}^{e}")
            body = "*".join(factors)
            if i == 0:
                pieces.append(body if sign == "+" else f"-{body}")
            else:
                pieces.append(f" {sign} {body}")
        return "".join(pieces)

    def __repr__(self):
        return f"Expr({str(self)!r})"


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (Symbol, Apply)):
        return Expr({((value, 1),): 1})
    if isinstance(value, str):
        return sym(value)
    if isinstance(value, bool):
        raise TypeError("booleans are not expressions")
    if isinstance(value, (int, Fraction)):
        return const(value)
    raise TypeError(f"cannot convert {type(value).__name__} to Expr (floats are not allowed)")


def const(value) -> Expr:
    return Expr({(): Fraction(value)})


def sym(name: str) -> Expr:
    return Expr({((Symbol(name), 1),): 1})


def apply(func: str, *args, derivs: Iterable[int] = ()) -> Expr:
    return Expr({((Apply(func, args, derivs), 1),): 1})


ZERO = Expr()
ONE = const(1)


def canonicalize(e: Expr) -> Expr:
    """Rebuild ``e`` bottom-up from its own canonical pieces.

    Expressions are canonical on construction; this is exposed so the
    idempotence of the normal form can be checked against a rebuild.
    """
    acc = ZERO
    for mono, c in e.terms:
        t = const(c)
        for atom, k in mono:
            if isinstance(atom, Apply):
                a = Expr({((Apply(atom.func, [canonicalize(x) for x in atom.args], atom.derivs), 1),): 1})
            else:
                a = sym(atom.name)
            t = t * a**k
        acc = acc + t
    return acc


# -- calculus --------------------------------------------------------------------

def _atom_partial(atom: Atom, s: Symbol, cache: dict) -> Expr:
    if isinstance(atom, Symbol):
        return ONE if atom is s else ZERO
    key = (atom, s)
    if key in cache:
        return cache[key]
    out = ZERO
    for k, arg in enumerate(atom.args):
        d = _partial(arg, s, cache)
        if d.is_zero():
            continue
        out = out + Expr({((Apply(atom.func, atom.args, atom.derivs + (k,)), 1),): 1}) * d
    cache[key] = out
    return out


def _partial(e: Expr, s: Symbol, cache: dict) -> Expr:
    acc: dict = {}
    result = ZERO
    for mono, c in e.terms:
        for idx, (atom, k) in enumerate(mono):
            da = _atom_partial(atom, s, cache)
            if da.is_zero():
                continue
            rest = list(mono)
            if k == 1:
                del rest[idx]
            else:
                rest[idx] = (atom, k - 1)
            head = Expr({tuple(rest): c * k})
            if da == ONE:
                for m, cc in head.terms:
                    acc[m] = acc.get(m, 0) + cc
            else:
                result = result + head * da
    return result + Expr(acc)


def partial(e: Expr, s) -> Expr:
    """Partial derivative with respect to coordinate ``s`` (name or Symbol).

    Opaque applications obey the chain rule: every argument that depends on
    ``s`` contributes a new partial-of-opaque atom times the argument's
    derivative.
    """
    if isinstance(s, Expr):
        s = s.atom
    if isinstance(s, str):
        s = Symbol(s)
    if not isinstance(s, Symbol):
        raise TypeError("can only differentiate with respect to a coordinate symbol")
    return _partial(as_expr(e), s, {})


def substitute(e: Expr, binding: Mapping) -> Expr:
    """Simultaneously replace coordinate symbols, then re-canonicalize.

    Opaque partial atoms keep their multi-index: ``D[2] f(x, w)`` with
    ``w -> g(x)`` becomes ``D[2] f(x, g(x))`` without re-differentiation.
    """
    table: dict[Symbol, Expr] = {}
    for k, v in binding.items():
        key = Symbol(k) if isinstance(k, str) else (k.atom if isinstance(k, Expr) else k)
        if key in table:
            raise ValueError(f"symbol {key} bound twice")
        table[key] = as_expr(v)
    if not table:
        return e
    return _subst(as_expr(e), table, {})


def _subst(e: Expr, table: dict, cache: dict) -> Expr:
    out = ZERO
    for mono, c in e.terms:
        t = const(c)
        for atom, k in mono:
            r = cache.get(atom)
            if r is None:
                if isinstance(atom, Symbol):
                    r = table.get(atom)
                    if r is None:
                        r = Expr({((atom, 1),): 1})
                else:
                    r = Expr({((Apply(atom.func, [_subst(a, table, cache) for a in atom.args], atom.derivs), 1),): 1})
                cache[atom] = r
            t = t * (r**k if k != 1 else r)
        out = out + t
    return out


def substitute_functions(e: Expr, bodies: Mapping[str, tuple[Sequence[str], Expr]]) -> Expr:
    """Replace opaque function symbols by concrete bodies.

    ``bodies[f] = (params, body)`` realizes ``f(a1..an)`` as ``body`` with
    ``params`` bound to the arguments; partial atoms differentiate the body
    first.  Used to instantiate generic identities.
    """
    out = ZERO
    for mono, c in e.terms:
        t = const(c)
        for atom, k in mono:
            if isinstance(atom, Apply):
                args = [substitute_functions(a, bodies) for a in atom.args]
                if atom.func in bodies:
                    params, body = bodies[atom.func]
                    if len(params) != len(args):
                        raise ArityError(f"{atom.func} realized with {len(params)} params, used with {len(args)}")
                    d = body
                    for pos in atom.derivs:
                        d = partial(d, params[pos])
                    r = substitute(d, dict(zip(params, args)))
                else:
                    r = Expr({((Apply(atom.func, args, atom.derivs), 1),): 1})
            else:
                r = Expr({((atom, 1),): 1})
            t = t * r**k
        out = out + t
    return out


# -- numeric evaluation --------------------------------------------------------------

class PolynomialRealization:
    """Realize an opaque function by a polynomial body in placeholder params."""

    def __init__(self, params: Sequence[str], body: Expr):
        self.params = tuple(params)
        self.body = body
        self._cache: dict = {}

    @property
    def arity(self):
        return len(self.params)

    def __call__(self, derivs: tuple, args: Sequence[float]) -> float:
        d = self._cache.get(derivs)
        if d is None:
            d = self.body
            for pos in derivs:
                d = partial(d, self.params[pos])
            self._cache[derivs] = d
        return eval_numeric(d, dict(zip(self.params, args)), {})

    @classmethod
    def random(cls, arity: int, rng: random.Random, degree: int = 2) -> PolynomialRealization:
        params = [f"_p{k}" for k in range(arity)]
        body = ZERO
        # dense random polynomial of total degree <= degree
        monos = [()]
        for _ in range(degree):
            monos = monos + [m + (p,) for m in monos for p in range(arity) if not m or p >= m[-1]]
        for m in sorted(set(monos)):
            coeff = Fraction(rng.randint(-9, 9), rng.randint(1, 4))
            t = const(coeff)
            for p in m:
                t = t * sym(params[p])
            body = body + t
        return cls(params, body)


class FunctionRealization:
    """Realize an opaque function by Python callables keyed by partial multi-index."""

    def __init__(self, arity: int, partials: Mapping[tuple, Callable[..., float]]):
        self.arity = arity
        self.partials = {tuple(sorted(k)): f for k, f in partials.items()}

    def __call__(self, derivs: tuple, args: Sequence[float]) -> float:
        f = self.partials.get(derivs)
        if f is None:
            raise MissingPartialError(f"realization lacks partial {tuple(d + 1 for d in derivs)}")
        return float(f(*args))


def eval_numeric(e: Expr, point: Mapping[str, float], opaque: Mapping[str, object] | None = None) -> float:
    """Evaluate ``e`` in IEEE doubles.

    ``opaque`` maps function names to realizations: a
    :class:`PolynomialRealization`, :class:`FunctionRealization`, or a plain
    callable (value only, no partials).
    """
    opaque = opaque or {}
    cache: dict = {}

    def atom_value(atom):
        if atom in cache:
            return cache[atom]
        if isinstance(atom, Symbol):
            try:
                v = float(point[atom.name])
            except KeyError:
                raise UnboundSymbolError(atom.name) from None
        else:
            real = opaque.get(atom.func)
            if real is None:
                raise UnboundSymbolError(atom.func)
            args = [value(a) for a in atom.args]
            if isinstance(real, (PolynomialRealization, FunctionRealization)):
                v = real(atom.derivs, args)
            elif atom.derivs:
                raise MissingPartialError(f"plain callable for {atom.func} has no partials")
            else:
                v = float(real(*args))
        cache[atom] = v
        return v

    def value(x: Expr) -> float:
        total = 0.0
        for mono, c in x.terms:
            t = float(c)
            for atom, k in mono:
                t *= atom_value(atom) ** k
            total += t
        return total

    return value(as_expr(e))


class EquivalenceDiagnostic(UserWarning):
    pass


def equivalent(e1: Expr, e2: Expr, seed: int = 0, probes: int = 8, report: list | None = None) -> bool:
    """Exact equality of canonical forms, cross-checked by random probing.

    Opaque symbols are realized as seeded random quadratic polynomials and
    both sides are evaluated at ``probes`` random rational points.  If the
    numeric verdict disagrees with the canonical one a diagnostic string is
    appended to ``report`` (and a warning is issued).
    """
    e1, e2 = as_expr(e1), as_expr(e2)
    exact = e1 == e2
    rng = random.Random(seed)
    funcs = {**e1.functions(), **e2.functions()}
    reals = {f: PolynomialRealization.random(n, rng) for f, n in sorted(funcs.items())}
    names = sorted(e1.free_symbols() | e2.free_symbols())
    numeric = True
    for _ in range(probes):
        pt = {n: rng.randint(-20, 20) / rng.randint(1, 7) for n in names}
        a = eval_numeric(e1, pt, reals)
        b = eval_numeric(e2, pt, reals)
        if not math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-9):
            numeric = False
            break
    if numeric != exact:
        msg = f"canonical={exact} but probing={numeric} for {e1} vs {e2}"
        if report is not None:
            report.append(msg)
        import warnings

        warnings.warn(msg, EquivalenceDiagnostic, stacklevel=2)
    return exact
