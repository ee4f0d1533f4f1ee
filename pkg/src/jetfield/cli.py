"""Command-line front end: ``jetfield <command> --model file.jf [options]``.

Exit status is 0 when every verdict of the report holds, 1 when one fails
and 2 for usage, model or evaluation errors.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction

from . import connections as cx
from .fconnections import connection_rep, covariant_differential, prolonged_rep
from .fsmooth import first_order_contact, smoothness_probe, tangent_rep_map_space, witness_points
from .maps import check_decomposition, partial_tangent_1, partial_tangent_2, total_tangent
from .model import ModelError, load_model
from .parsing import ParseError, parse_tree
from .sections import apply_section, check_rep, tangent_rep_section

__all__ = ["Report", "run", "main", "COMMANDS", "SCHEMA"]

SCHEMA = 1
COMMANDS = (
    "prolong", "contact", "rep", "section-apply", "universal", "curvature",
    "pullback", "verify-universal", "liouville", "nabla", "probe",
)


class UsageError(ValueError):
    pass


@dataclass
class Report:
    command: str
    seed: int
    args: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    timing: float | None = None

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def as_dict(self, timing: bool = False) -> dict:
        d = {
            "schema": SCHEMA,
            "command": self.command,
            "args": self.args,
            "seed": self.seed,
            "passed": self.passed,
            "verdicts": self.verdicts,
            "results": self.results,
            "residuals": self.residuals,
        }
        if timing and self.timing is not None:
            d["timing_seconds"] = round(self.timing, 6)
        return d

    def to_json(self, timing: bool = False) -> str:
        return json.dumps(self.as_dict(timing), indent=2, sort_keys=True) + "\n"

    def to_text(self, timing: bool = False) -> str:
        lines = [f"{self.command} (seed {self.seed})"]
        for k, v in self.verdicts.items():
            lines.append(f"  {k}: {'pass' if v else 'FAIL'}")
        for k, v in self.results.items():
            if isinstance(v, dict):
                lines.append(f"  {k}:")
                lines.extend(f"    {kk} = {vv}" for kk, vv in v.items())
            else:
                lines.append(f"  {k}: {v}")
        if self.residuals:
            nonzero = {k: v for k, v in self.residuals.items() if v != "0"}
            lines.append(f"  residuals: {len(self.residuals)} checked, {len(nonzero)} nonzero")
            lines.extend(f"    {k} = {v}" for k, v in nonzero.items())
        if timing and self.timing is not None:
            lines.append(f"  time: {self.timing:.3f} s")
        return "\n".join(lines) + "\n"


def _key(k) -> str:
    return ",".join(k) if isinstance(k, tuple) else str(k)


def _table(d) -> dict:
    return {_key(k): str(v) for k, v in d.items()}


def _need_model(args):
    if args.model is None:
        raise UsageError(f"{args.command} needs --model")
    return load_model(args.model)


def _pick(model, kind, name):
    try:
        return model.pick(kind, name)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None


_KIND_ALIASES = {"p1": "partial-1", "p2": "partial-2"}


def _curve_specs(args) -> list:
    """``(name, lam)`` pairs from ``--curve name@lam`` or ``--curve name --at lam``."""
    ats = list(args.at)
    out = []
    for item in args.curve:
        if "@" in item:
            name, at = item.split("@", 1)
        else:
            name, at = item, (ats.pop(0) if ats else "0")
        out.append((name, at))
    return out


def _lam(text: str):
    return Fraction(text) if "." not in text and "e" not in text.lower() else float(text)


# -- commands ---------------------------------------------------------------------------

def cmd_prolong(args, rep: Report):
    m = _need_model(args)
    d = _pick(m, "system", args.system)
    sys_ = m.build(d.name)
    kind = _KIND_ALIASES.get(args.kind, args.kind)
    fn = {"total": total_tangent, "partial-1": partial_tangent_1, "partial-2": partial_tangent_2}[kind]
    p = fn(sys_)
    rep.results["system"] = d.name
    rep.results["kind"] = kind
    rep.results["map"] = _table(p.eval)
    rep.verdicts["decomposition"] = check_decomposition(sys_)


def cmd_contact(args, rep: Report):
    m = _need_model(args)
    d = _pick(m, "system", args.system)
    sys_ = m.build(d.name)
    specs = _curve_specs(args)
    if len(specs) != 2:
        raise UsageError("contact needs two curves: --curve c1@1 --curve c2@-1")
    pts = [(m.build(_pick(m, "curve", name).name), _lam(at)) for name, at in specs]
    names = [name for name, _ in specs]
    wit = witness_points(sys_.source, seed=args.seed)
    same = first_order_contact(sys_, pts[0], pts[1], wit, seed=args.seed)
    reps = [tangent_rep_map_space(sys_, p) for p in pts]
    rep.verdicts["first_order_contact"] = same
    for name, r in zip(names, reps):
        rep.results[f"rep[{name}]"] = _table(r)
    rep.results["reps_identical"] = reps[0] == reps[1]


def cmd_rep(args, rep: Report):
    m = _need_model(args)
    sys_ = m.build(_pick(m, "secsystem", args.system).name)
    specs = _curve_specs(args) or [(None, "0")]
    c = m.build(_pick(m, "curve", specs[0][0]).name)
    r = tangent_rep_section(sys_, c, _lam(specs[0][1]))
    rep.results["base"] = _table(r.base)
    rep.results["section_point"] = _table(r.s)
    rep.results["u"] = _table(r.u)
    rep.results["xi0"] = _table(r.xi0)
    rep.results["xi"] = _table(r.xi())
    rep.verdicts["forced_block"] = check_rep(sys_, r)


def cmd_section_apply(args, rep: Report):
    m = _need_model(args)
    sys_ = m.build(_pick(m, "secsystem", args.system).name)
    sigma = m.build(_pick(m, "section", args.section).name)
    rep.results["section"] = _table(apply_section(sys_, sigma))


def _connsys(args):
    m = _need_model(args)
    d = _pick(m, "connsystem", args.system)
    return m, m.build(d.name)


def _gamma(m, args):
    return m.build(_pick(m, "gamma", args.gamma).name)


def cmd_universal(args, rep: Report):
    _, s = _connsys(args)
    up = cx.make_universal(s)
    rep.results["base_leg"] = _table(up.base_leg)
    rep.results["param_leg"] = _table(up.param_leg)
    rep.verdicts["reducible"] = cx.is_reducible(up)
    rep.verdicts["round_trip"] = cx.factor_system(up).coeffs == s.coeffs


def cmd_curvature(args, rep: Report):
    m, s = _connsys(args)
    if args.gamma is not None or args.pullback:
        R = cx.curvature(cx.pullback(s, _gamma(m, args)))
        rep.results["of"] = "pullback"
    else:
        R = cx.curvature(cx.make_universal(s))
        rep.results["of"] = "universal"
    rep.results["convention"] = R.convention
    rep.results["curvature"] = _table(R.table)


def cmd_pullback(args, rep: Report):
    m, s = _connsys(args)
    g = _gamma(m, args)
    a = cx.pullback(s, g)
    b = cx.pullback(cx.make_universal(s), g)
    rep.results["connection"] = _table(a.coeffs)
    rep.residuals.update({f"routes[{_key(k)}]": str(b.coeffs[k] - v) for k, v in a.coeffs.items()})
    rep.verdicts["routes_agree"] = a.coeffs == b.coeffs


def _family(args):
    if args.generic:
        b, f, p = args.generic
        s = cx.generic_connection_system(b, f, p)
        return s, cx.generic_gamma(s), f"generic {b} {f} {p}"
    if args.linear:
        s = cx.linear_connection_system(*args.linear)
        return s, cx.linear_gamma(s), "linear {} {}".format(*args.linear)
    if args.affine:
        s = cx.affine_connection_system(*args.affine)
        return s, cx.linear_gamma(s), "affine {} {}".format(*args.affine)
    return None


def cmd_verify_universal(args, rep: Report):
    fam = _family(args)
    if fam is None:
        m, s = _connsys(args)
        g = _gamma(m, args)
        rep.results["instance"] = s.name
    else:
        s, g, label = fam
        rep.results["instance"] = label
    r = cx.verify_universal(s, g)
    rep.verdicts["connection_identity"] = r.connection_identity
    rep.verdicts["curvature_identity"] = r.curvature_identity
    rep.verdicts["cancellation_identity"] = r.cancellation_identity
    rep.results["convention"] = r.convention
    rep.results["cancelled_terms"] = _table(r.cancelled_terms)
    rep.residuals.update({k: str(v) for k, v in r.residuals.items()})


def cmd_liouville(args, rep: Report):
    r = cx.liouville_check(args.dim)
    rep.verdicts["contact_identity"] = r.contact_identity
    rep.verdicts["symplectic_identity"] = r.symplectic_identity
    rep.verdicts["curvature_identity"] = r.curvature_identity
    rep.results["identification"] = dict(r.identification)
    rep.results["contact_form"] = _table(r.contact_form)
    rep.results["symplectic_form"] = {k: v for k, v in _table(r.symplectic_form).items() if v != "0"}
    rep.results["normalization"] = r.normalization


def cmd_nabla(args, rep: Report):
    m = _need_model(args)
    K = m.build(_pick(m, "fconnection", args.connection).name)
    sigma = m.build(_pick(m, "section", args.section).name)
    nab = covariant_differential(K, sigma)
    rep.results["nabla"] = _table(nab)
    ok = True
    for (a, l), v in nab.items():
        diff = prolonged_rep(K, sigma, l).xi0[a] - connection_rep(K, sigma, l).xi0[a]
        rep.residuals[f"rep_form[{a},{l}]"] = str(diff - v)
        ok = ok and diff == v
    rep.verdicts["rep_form"] = ok


_NUMERIC = {
    "abs": abs, "sqrt": math.sqrt, "cbrt": lambda t: math.copysign(abs(t) ** (1 / 3), t),
    "exp": math.exp, "log": math.log, "sin": math.sin, "cos": math.cos, "tan": math.tan,
    "sign": lambda t: float((t > 0) - (t < 0)),
}


def _numeric(node, env):
    tag = node[0]
    if tag == "num":
        return float(node[1])
    if tag == "sym":
        if node[1] not in env:
            raise ParseError(f"unknown symbol {node[1]!r}", node[2])
        return env[node[1]]
    if tag == "add":
        return _numeric(node[1], env) + _numeric(node[2], env)
    if tag == "neg":
        return -_numeric(node[1], env)
    if tag == "mul":
        return _numeric(node[1], env) * _numeric(node[2], env)
    if tag == "pow":
        return _numeric(node[1], env) ** node[2]
    if tag == "call":
        _, name, argv, derivs, off = node
        if name not in _NUMERIC or derivs or len(argv) != 1:
            raise ParseError(f"unsupported numeric function {name!r}", off)
        return _NUMERIC[name](_numeric(argv[0], env))
    raise ValueError(node)


def cmd_probe(args, rep: Report):
    specs = _curve_specs(args)
    lam0 = float(specs[0][1]) if specs else (float(args.at[0]) if args.at else 0.0)
    if args.body is not None:
        tree = parse_tree(args.body)
        f = lambda t: _numeric(tree, {"lam": t})  # noqa: E731
        rep.results["body"] = args.body
    else:
        m = _need_model(args)
        c = m.build(_pick(m, "curve", specs[0][0] if specs else None).name)
        f = c
        rep.results["curve"] = c.name
    v = smoothness_probe(f, lam0, args.order)
    rep.results["at"] = repr(lam0)
    rep.results["verdict"] = str(v)
    rep.results["rates"] = {str(k): (None if r is None else round(r, 6)) for k, r in sorted(v.rates.items())}
    rep.verdicts["smooth"] = v.passes


HANDLERS = {
    "prolong": cmd_prolong, "contact": cmd_contact, "rep": cmd_rep,
    "section-apply": cmd_section_apply, "universal": cmd_universal,
    "curvature": cmd_curvature, "pullback": cmd_pullback,
    "verify-universal": cmd_verify_universal, "liouville": cmd_liouville,
    "nabla": cmd_nabla, "probe": cmd_probe,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jetfield", description="Symbolic checks for smooth systems of maps, sections and connections.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--model", help="model file (.jf)")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--timing", action="store_true", help="include wall-clock time in the report")
    p.add_argument("--system", help="system declaration to use")
    p.add_argument("--kind", choices=("total", "partial-1", "partial-2", "p1", "p2"), default="total")
    p.add_argument("--curve", action="append", default=[], help="curve declaration, optionally name@lam (repeatable)")
    p.add_argument("--at", action="append", default=[], help="curve parameter (repeatable)")
    p.add_argument("--section", help="parameter section declaration")
    p.add_argument("--gamma", help="parameter section of a connection system")
    p.add_argument("--pullback", action="store_true", help="curvature of the pulled-back connection")
    p.add_argument("--connection", help="operator connection declaration")
    p.add_argument("--generic", type=int, nargs=3, metavar=("BASE", "FIBRE", "PARAMS"))
    p.add_argument("--linear", type=int, nargs=2, metavar=("BASE", "FIBRE"))
    p.add_argument("--affine", type=int, nargs=2, metavar=("BASE", "FIBRE"))
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--body", help="numeric curve body in lam for probe, e.g. 'abs(lam)'")
    p.add_argument("--order", type=int, default=3)
    return p


def _arg_echo(args) -> dict:
    skip = {"command", "format", "seed", "out", "timing"}
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in skip or v in (None, [], False):
            continue
        out[k] = list(v) if isinstance(v, (list, tuple)) else v
    return out


def run(command: str, args) -> Report:
    rep = Report(command, args.seed, _arg_echo(args))
    t0 = time.perf_counter()
    HANDLERS[command](args, rep)
    rep.timing = time.perf_counter() - t0
    return rep


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        rep = run(args.command, args)
    except (ModelError, ParseError, UsageError, OSError) as exc:
        print(f"jetfield: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, TypeError, KeyError) as exc:
        print(f"jetfield: error: {exc}", file=sys.stderr)
        return 2
    text = rep.to_json(args.timing) if args.format == "json" else rep.to_text(args.timing)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if rep.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
