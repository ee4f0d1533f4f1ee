"""Model files: declarations of charts, systems, sections, curves and connections.

Grammar (one declaration after another; ``#`` starts a comment)::

    opaque k/1
    opaque g0/1
    chart B { x0 }
    fibred F over B { y0 }
    fibred G over F { z0 }
    params S over B { w0 }
    system eps params { w0 } source { y0 } target { z0 } eval { z0 = w0^2*y0 }
    secsystem lin over (B, F, G) vector params { w0_0 } eval { z0 = w0_0*y0 }
    section sigma of lin { w0_0 = k(x0) }
    curve c over S { x0 = lam; w0 = lam^2 } interval (-1, 1)
    connsystem C over (B, F) params { w0 } coeff { c[y0, x0] = w0*y0 }
    gamma g of C { w0 = g0(x0) }
    fconnection K over lin { D[z0, x0](phi) = phi_z0__x0 - phi_z0 }
    change ch on G { y0 = 2*y0 + x0 }
    change { wbar0 = w0^3 }          # anonymous, on the last declared frame

Inside ``{ ... }`` assignments end at ``;``, a newline outside
parentheses, or the closing brace.  Names must be declared before use and
are unique across the file; opaque functions must be declared with their
arity before they appear in an expression.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .connections import ConnectionSystem
from .expr import Expr
from .fconnections import DifferentialOperator, connection_from_operator, parse_jet
from .fsmooth import LAM, Curve
from .geometry import ChartChange, DoubleFibredFrame, Frame
from .maps import MapSystem
from .parsing import ParseError, Scope, build, parse_tree
from .sections import SectionSystem

__all__ = ["ModelError", "Decl", "ModelFile", "parse_model", "format_model", "load_model"]

KINDS = (
    "opaque", "chart", "fibred", "params", "system", "secsystem", "section",
    "curve", "connsystem", "gamma", "fconnection", "change",
)


class ModelError(ValueError):
    def __init__(self, message: str, line: int, col: int, source: str = "<model>"):
        self.message, self.line, self.col, self.source = message, line, col, source
        super().__init__(f"{source}:{line}:{col}: {message}")


@dataclass(frozen=True)
class Decl:
    kind: str
    name: str
    fields: Mapping
    pos: tuple = field(default=(0, 0), compare=False)


# -- scanning ---------------------------------------------------------------------------

_IDENT = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_INT = re.compile(r"\d+")
_NUMBER = re.compile(r"-?(?:inf|\d+(?:\.\d*)?(?:/\d+)?)")


class _Scanner:
    def __init__(self, text: str, source: str):
        self.text, self.i, self.source = text, 0, source

    def where(self, i: int | None = None) -> tuple:
        i = self.i if i is None else i
        line = self.text.count("\n", 0, i) + 1
        col = i - (self.text.rfind("\n", 0, i) + 1) + 1
        return line, col

    def error(self, msg: str, i: int | None = None):
        raise ModelError(msg, *self.where(i), self.source)

    def skip(self):
        t = self.text
        while self.i < len(t):
            if t[self.i].isspace():
                self.i += 1
            elif t[self.i] == "#":
                while self.i < len(t) and t[self.i] != "\n":
                    self.i += 1
            else:
                break

    def at_end(self) -> bool:
        self.skip()
        return self.i >= len(self.text)

    def peek(self, s: str) -> bool:
        self.skip()
        return self.text.startswith(s, self.i)

    def expect(self, s: str):
        self.skip()
        if not self.text.startswith(s, self.i):
            found = self.text[self.i:self.i + 1] or "end of file"
            self.error(f"expected {s!r}, found {found!r}")
        self.i += len(s)

    def ident(self, what: str = "name") -> tuple:
        self.skip()
        m = _IDENT.match(self.text, self.i)
        if not m:
            self.error(f"expected {what}")
        self.i = m.end()
        return m.group(), m.start()

    def keyword(self, kw: str) -> bool:
        self.skip()
        m = _IDENT.match(self.text, self.i)
        if m and m.group() == kw:
            self.i = m.end()
            return True
        return False

    def integer(self) -> int:
        self.skip()
        m = _INT.match(self.text, self.i)
        if not m:
            self.error("expected an integer")
        self.i = m.end()
        return int(m.group())

    def number(self):
        self.skip()
        m = _NUMBER.match(self.text, self.i)
        if not m:
            self.error("expected a number")
        self.i = m.end()
        s = m.group()
        if s.lstrip("-") == "inf":
            return None
        return Fraction(s)

    def names(self) -> list:
        self.expect("{")
        out = []
        while not self.peek("}"):
            out.append(self.ident("coordinate name"))
            if self.peek(","):
                self.expect(",")
        self.expect("}")
        return out

    def expr_text(self) -> tuple:
        """Raw expression text up to ``;``, a top-level newline or ``}``."""
        t = self.text
        while self.i < len(t) and t[self.i] in " \t":
            self.i += 1
        start, depth = self.i, 0
        while self.i < len(t):
            ch = t[self.i]
            if ch in "([":
                depth += 1
            elif ch in ")]":
                depth -= 1
            elif depth == 0 and ch in ";\n}#":
                break
            self.i += 1
        text = t[start:self.i]
        if self.i < len(t) and t[self.i] == ";":
            self.i += 1
        if not text.strip():
            self.error("expected an expression", start)
        return text, start


# -- parsing ----------------------------------------------------------------------------

class _ModelParser:
    def __init__(self, text: str, source: str):
        self.sc = _Scanner(text, source)
        self.decls: list[Decl] = []
        self.by_name: dict[str, Decl] = {}
        self.functions: dict[str, int] = {}

    # helpers

    def error(self, msg, i=None):
        self.sc.error(msg, i)

    def ref(self, kinds: tuple, what: str) -> str:
        name, at = self.sc.ident(what)
        d = self.by_name.get(name)
        if d is None:
            self.error(f"unresolved reference {name!r}", at)
        if d.kind not in kinds:
            self.error(f"{name!r} is a {d.kind}, expected {' or '.join(kinds)}", at)
        return name

    def expr(self, text: str, start: int, symbols) -> Expr:
        try:
            scope = symbols if isinstance(symbols, _JetScope) else set(symbols)
            return build(parse_tree(text), Scope(scope, dict(self.functions)))
        except ParseError as exc:
            off = len(text.encode("utf-8")[: exc.offset].decode("utf-8", errors="ignore"))
            self.error(exc.message, start + off)

    def assignments(self, lhs, symbols) -> list:
        """``{ lhs = expr ... }`` with ``lhs`` a callable returning ``(key, offset)``."""
        sc = self.sc
        sc.expect("{")
        out, seen = [], set()
        while not sc.peek("}"):
            key, at = lhs()
            if key in seen:
                self.error(f"{key} assigned twice", at)
            seen.add(key)
            sc.expect("=")
            text, start = sc.expr_text()
            out.append((key, self.expr(text, start, symbols)))
        sc.expect("}")
        return out

    def coord_lhs(self, allowed):
        def lhs():
            name, at = self.sc.ident("coordinate")
            if name not in allowed:
                self.error(f"{name!r} is not one of {list(allowed)}", at)
            return name, at
        return lhs

    def coords(self, name: str) -> tuple:
        """All coordinates of a frame-like declaration."""
        d = self.by_name[name]
        f = d.fields
        if d.kind == "chart":
            return tuple(f["coords"])
        if d.kind in ("fibred", "params"):
            below = self.coords(f["over"]) if f["over"] else ()
            return below + tuple(f["coords"])
        if d.kind == "system":
            return tuple(f["params"])
        if d.kind in ("secsystem", "connsystem"):
            return self.coords(f["over"][0]) + tuple(f["params"])
        raise KeyError(name)

    def base_of(self, name: str) -> tuple:
        d = self.by_name[name]
        if d.kind in ("secsystem", "connsystem"):
            return self.coords(d.fields["over"][0])
        raise KeyError(name)

    def fresh(self, names, all_coords=()):
        seen = set(all_coords)
        for n, at in names:
            if n in seen:
                self.error(f"coordinate {n!r} declared twice", at)
            if n == LAM:
                self.error(f"{LAM!r} is reserved for curve parameters", at)
            seen.add(n)
        return tuple(n for n, _ in names)

    # declarations

    def parse(self) -> list:
        sc = self.sc
        while not sc.at_end():
            kind, at = sc.ident("declaration keyword")
            if kind not in KINDS:
                self.error(f"unknown declaration {kind!r}", at)
            if kind == "change" and (sc.peek("{") or sc.keyword("on")):
                # anonymous change; 'on' may already have been consumed
                name, name_at = f"change{sum(d.kind == 'change' for d in self.decls) + 1}", at
                sc.i = at + len(kind)
            else:
                name, name_at = sc.ident(f"{kind} name")
            if name in self.by_name:
                self.error(f"duplicate name {name!r}", name_at)
            if name in self.functions:
                self.error(f"duplicate name {name!r}", name_at)
            fields = getattr(self, "p_" + kind)(name, name_at)
            d = Decl(kind, name, fields, sc.where(at))
            self.decls.append(d)
            if kind != "opaque":
                self.by_name[name] = d
            try:
                _validate(self, d)
            except (ValueError, TypeError) as exc:
                if isinstance(exc, ModelError):
                    raise
                self.error(str(exc), at)
        return self.decls

    def p_opaque(self, name, at):
        self.sc.expect("/")
        n = self.sc.integer()
        if n < 1:
            self.error("opaque functions need at least one argument", at)
        self.functions[name] = n
        return {"arity": n}

    def p_chart(self, name, at):
        return {"coords": self.fresh(self.sc.names())}

    def p_fibred(self, name, at):
        self.sc.keyword("over") or self.error("expected 'over'")
        over = self.ref(("chart", "fibred"), "base name")
        return {"over": over, "coords": self.fresh(self.sc.names(), self.coords(over))}

    def p_params(self, name, at):
        over = self.ref(("chart",), "base chart") if self.sc.keyword("over") else None
        below = self.coords(over) if over else ()
        return {"over": over, "coords": self.fresh(self.sc.names(), below)}

    def p_system(self, name, at):
        sc = self.sc
        blocks = {}
        for kw in ("params", "source", "target"):
            sc.keyword(kw) or self.error(f"expected {kw!r}")
            blocks[kw] = self.fresh(sc.names(), [n for b in blocks.values() for n in b])
        sc.keyword("eval") or self.error("expected 'eval'")
        ev = self.assignments(self.coord_lhs(blocks["target"]), blocks["params"] + blocks["source"])
        return {**blocks, "eval": tuple(ev)}

    def _over_tuple(self, kinds_seq):
        sc = self.sc
        sc.expect("(")
        names = []
        for k, kinds in enumerate(kinds_seq):
            if k:
                sc.expect(",")
            names.append(self.ref(kinds, "frame name"))
        sc.expect(")")
        return tuple(names)

    def p_secsystem(self, name, at):
        sc = self.sc
        sc.keyword("over") or self.error("expected 'over'")
        B, F, G = self._over_tuple((("chart",), ("fibred",), ("fibred",)))
        if self.by_name[F].fields["over"] != B or self.by_name[G].fields["over"] != F:
            self.error(f"({B}, {F}, {G}) is not a tower G over F over B", at)
        bundle = "none"
        for flag in ("vector", "affine"):
            if sc.keyword(flag):
                bundle = flag
        sc.keyword("params") or self.error("expected 'params'")
        params = self.fresh(sc.names(), self.coords(G))
        sc.keyword("eval") or self.error("expected 'eval'")
        z = self.by_name[G].fields["coords"]
        ev = self.assignments(self.coord_lhs(z), self.coords(F) + params)
        return {"over": (B, F, G), "bundle": bundle, "params": params, "eval": tuple(ev)}

    def _of(self, kinds):
        return self.ref(kinds, "system name") if self.sc.keyword("of") else None

    def _all_base(self):
        return tuple(c for d in self.decls if d.kind == "chart" for c in d.fields["coords"])

    def p_section(self, name, at):
        of = self._of(("secsystem",))
        params = self.by_name[of].fields["params"] if of else None
        base = self.base_of(of) if of else self._all_base()
        lhs = self.coord_lhs(params) if params else (lambda: self.sc.ident("parameter"))
        return {"of": of, "assign": tuple(self.assignments(lhs, base))}

    def p_gamma(self, name, at):
        of = self._of(("connsystem",))
        params = self.by_name[of].fields["params"] if of else None
        base = self.base_of(of) if of else self._all_base()
        lhs = self.coord_lhs(params) if params else (lambda: self.sc.ident("parameter"))
        return {"of": of, "assign": tuple(self.assignments(lhs, base))}

    def p_curve(self, name, at):
        sc = self.sc
        sc.keyword("over") or self.error("expected 'over'")
        over = self.ref(("chart", "fibred", "params", "system", "secsystem", "connsystem"), "space name")
        space = self.coords(over)
        assign = self.assignments(self.coord_lhs(space), (LAM,))
        missing = [c for c in space if c not in dict(assign)]
        if missing:
            self.error(f"curve {name} does not assign {missing}", at)
        interval = (None, None)
        if sc.keyword("interval"):
            sc.expect("(")
            lo = sc.number()
            sc.expect(",")
            hi = sc.number()
            sc.expect(")")
            interval = (lo, hi)
        return {"over": over, "assign": tuple(assign), "interval": interval}

    def p_connsystem(self, name, at):
        sc = self.sc
        sc.keyword("over") or self.error("expected 'over'")
        B, F = self._over_tuple((("chart",), ("fibred",)))
        if self.by_name[F].fields["over"] != B:
            self.error(f"{F} is not fibred over {B}", at)
        sc.keyword("params") or self.error("expected 'params'")
        params = self.fresh(sc.names(), self.coords(F))
        sc.keyword("coeff") or self.error("expected 'coeff'")
        x, y = self.coords(B), self.by_name[F].fields["coords"]

        def lhs():
            c, at2 = sc.ident("'c'")
            if c != "c":
                self.error("coefficients are written c[fibre, base]", at2)
            sc.expect("[")
            i, ai = sc.ident("fibre coordinate")
            sc.expect(",")
            l, al = sc.ident("base coordinate")
            sc.expect("]")
            if i not in y:
                self.error(f"{i!r} is not a fibre coordinate of {F}", ai)
            if l not in x:
                self.error(f"{l!r} is not a base coordinate of {B}", al)
            return (i, l), at2

        coeff = self.assignments(lhs, self.coords(F) + params)
        return {"over": (B, F), "params": params, "coeff": tuple(coeff)}

    def p_fconnection(self, name, at):
        sc = self.sc
        sc.keyword("over") or self.error("expected 'over'")
        over = self.ref(("secsystem",), "section system")
        B, F, G = self.by_name[over].fields["over"]
        x, z = self.coords(B), self.by_name[G].fields["coords"]
        fcoords = self.coords(F)

        def lhs():
            d, at2 = sc.ident("'D'")
            if d != "D":
                self.error("operator entries are written D[z, x](phi)", at2)
            sc.expect("[")
            a, aa = sc.ident("target coordinate")
            sc.expect(",")
            l, al = sc.ident("base coordinate")
            sc.expect("]")
            sc.expect("(")
            sc.ident("phi")
            sc.expect(")")
            if a not in z:
                self.error(f"{a!r} is not a coordinate of {G}", aa)
            if l not in x:
                self.error(f"{l!r} is not a base coordinate", al)
            return (a, l), at2

        # jet symbols are accepted by name and validated when the connection is built
        jets = _JetScope(fcoords)
        ops = self.assignments(lhs, jets)
        return {"over": over, "ops": tuple(ops)}

    def p_change(self, name, at):
        sc = self.sc
        if sc.keyword("on"):
            on = self.ref(("chart", "fibred", "params"), "frame name")
        else:
            frames = [d.name for d in self.decls if d.kind in ("chart", "fibred", "params")]
            if not frames:
                self.error("change needs a declared frame", at)
            on = frames[-1]
        coords = self.coords(on)

        def lhs():
            # new coordinates may be written with a 'bar' marker: ybar0 for y0
            n, a = self.sc.ident("coordinate")
            plain = n if n in coords else re.sub(r"bar(?=\d*$)", "", n, count=1)
            if plain not in coords:
                self.error(f"{n!r} is not one of {list(coords)}", a)
            return plain, a

        return {"on": on, "assign": tuple(self.assignments(lhs, coords))}


class _JetScope(set):
    """Frame coordinates plus any ``phi_...`` jet symbol."""

    def __init__(self, coords):
        super().__init__(coords)

    def __contains__(self, name):
        return super().__contains__(name) or parse_jet(name) is not None


def _validate(p: _ModelParser, d: Decl):
    """Build the library object once so structural errors surface with positions."""
    m = ModelFile(tuple(p.decls), dict(p.functions))
    if d.kind in ("secsystem", "connsystem", "system", "change", "fconnection", "curve"):
        m.build(d.name)


# -- model ------------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelFile:
    declarations: tuple = ()
    functions: Mapping = field(default_factory=dict)

    def __len__(self):
        return len(self.declarations)

    def names(self, kind: str | None = None) -> list:
        return [d.name for d in self.declarations if kind is None or d.kind == kind]

    def get(self, name: str) -> Decl:
        for d in self.declarations:
            if d.name == name and d.kind != "opaque":
                return d
        raise KeyError(name)

    def pick(self, kind: str, name: str | None = None) -> Decl:
        """Named declaration of ``kind``, or the only one when ``name`` is None."""
        if name is not None:
            d = self.get(name)
            if d.kind != kind:
                raise KeyError(f"{name} is a {d.kind}, not a {kind}")
            return d
        cands = [d for d in self.declarations if d.kind == kind]
        if len(cands) != 1:
            raise KeyError(f"expected exactly one {kind} declaration, found {len(cands)}; name one explicitly")
        return cands[0]

    def coords(self, name: str) -> tuple:
        d = self.get(name)
        f = d.fields
        if d.kind == "chart":
            return tuple(f["coords"])
        if d.kind in ("fibred", "params"):
            return (self.coords(f["over"]) if f["over"] else ()) + tuple(f["coords"])
        if d.kind == "system":
            return tuple(f["params"])
        if d.kind in ("secsystem", "connsystem"):
            return self.coords(f["over"][0]) + tuple(f["params"])
        raise KeyError(name)

    def frame(self, name: str) -> Frame:
        """Frame with the chart as base and each tower level in its role block."""
        chain = []
        d = self.get(name)
        while d.kind == "fibred":
            chain.append(d.fields["coords"])
            d = self.get(d.fields["over"])
        if d.kind == "params":
            base = self.coords(d.fields["over"]) if d.fields["over"] else ()
            return Frame(base, param=d.fields["coords"], functions=self.functions)
        if d.kind != "chart":
            raise KeyError(f"{name} is not a frame")
        chain.reverse()
        base = tuple(d.fields["coords"])
        fibre = tuple(chain[0]) if chain else ()
        second = tuple(c for block in chain[1:] for c in block)
        return Frame(base, fibre, second=second, functions=self.functions)

    def build(self, name: str):
        """Library object for a declaration."""
        d = self.get(name)
        f = d.fields
        k = d.kind
        if k in ("chart", "fibred", "params"):
            return self.frame(name)
        if k == "system":
            return MapSystem(f["params"], f["source"], f["target"], dict(f["eval"]), self.functions, name)
        if k == "secsystem":
            B, F, G = f["over"]
            frame = DoubleFibredFrame.build(self.coords(B), self.get(F).fields["coords"], self.get(G).fields["coords"])
            return SectionSystem(frame, f["params"], dict(f["eval"]), self.functions, f["bundle"], name)
        if k == "connsystem":
            B, F = f["over"]
            return ConnectionSystem(Frame(self.coords(B), self.get(F).fields["coords"]), f["params"], dict(f["coeff"]), self.functions, name)
        if k in ("section", "gamma"):
            return dict(f["assign"])
        if k == "curve":
            return Curve(self.coords(f["over"]), dict(f["assign"]), f["interval"], name)
        if k == "fconnection":
            sys = self.build(f["over"])
            return connection_from_operator(DifferentialOperator(sys, dict(f["ops"])))
        if k == "change":
            return ChartChange(self.frame(f["on"]), dict(f["assign"]), self.functions)
        raise KeyError(name)


def parse_model(text: str, source: str = "<model>") -> ModelFile:
    p = _ModelParser(text, source)
    decls = p.parse()
    return ModelFile(tuple(decls), dict(p.functions))


def load_model(path) -> ModelFile:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read(), str(path))


# -- printing ---------------------------------------------------------------------------

def _block(names) -> str:
    return "{ " + " ".join(names) + " }" if names else "{ }"


def _assign(pairs, lhs=str) -> str:
    if not pairs:
        return "{ }"
    return "{\n" + "".join(f"  {lhs(k)} = {v}\n" for k, v in pairs) + "}"


def _num(v) -> str:
    return "inf" if v is None else str(v)


def format_decl(d: Decl) -> str:
    f = d.fields
    k = d.kind
    if k == "opaque":
        return f"opaque {d.name}/{f['arity']}"
    if k == "chart":
        return f"chart {d.name} {_block(f['coords'])}"
    if k == "fibred":
        return f"fibred {d.name} over {f['over']} {_block(f['coords'])}"
    if k == "params":
        over = f" over {f['over']}" if f["over"] else ""
        return f"params {d.name}{over} {_block(f['coords'])}"
    if k == "system":
        return (f"system {d.name} params {_block(f['params'])} source {_block(f['source'])} "
                f"target {_block(f['target'])} eval {_assign(f['eval'])}")
    if k == "secsystem":
        flag = "" if f["bundle"] == "none" else f" {f['bundle']}"
        return (f"secsystem {d.name} over ({', '.join(f['over'])}){flag} params {_block(f['params'])} "
                f"eval {_assign(f['eval'])}")
    if k in ("section", "gamma"):
        of = f" of {f['of']}" if f["of"] else ""
        return f"{k} {d.name}{of} {_assign(f['assign'])}"
    if k == "curve":
        lo, hi = f["interval"]
        iv = "" if (lo, hi) == (None, None) else f" interval ({_num(lo)}, {_num(hi)})"
        return f"curve {d.name} over {f['over']} {_assign(f['assign'])}{iv}"
    if k == "connsystem":
        return (f"connsystem {d.name} over ({', '.join(f['over'])}) params {_block(f['params'])} "
                f"coeff {_assign(f['coeff'], lambda key: f'c[{key[0]}, {key[1]}]')}")
    if k == "fconnection":
        return f"fconnection {d.name} over {f['over']} {_assign(f['ops'], lambda key: f'D[{key[0]}, {key[1]}](phi)')}"
    if k == "change":
        return f"change {d.name} on {f['on']} {_assign(f['assign'])}"
    raise ValueError(k)


def format_model(m: ModelFile) -> str:
    return "".join(format_decl(d) + "\n" for d in m.declarations)
