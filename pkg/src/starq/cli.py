"""Command-line front end: config parsing, pipelines, JSON/CSV reports.

Exit codes: 0 success, 2 validation error, 3 numeric-tolerance failure.
Errors are emitted as JSON lines on stderr; stdout (or --out) carries the
primary artifact.  Reports are byte-identical for identical configs and
seeds; --jobs caps internal parallelism and never affects results.
"""

from __future__ import annotations

import argparse
import configparser
import io
import json
import math
import os
import re
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import __version__
from .jets import jet_from_json, metric_from_potential
from .formal import star_table_to_json
from .karabegov import (
    FormalPotential, bt_star_from, karabegov_star, reference_potentials,
)
from .graphs import (
    CrossCheckFailure, IntegrationConfig, IntegrationFailure,
    PoissonBivector, Poly, ResourceGuard, enumerate_ggraphs,
    enumerate_kgraphs, gammelgaard_star, kontsevich_star, kontsevich_weight,
)
from .cp1 import (
    ObservableFn, QuadratureTolerance, UnboundedSymbol, berezin_defect_series,
    berezin_transform_num, bms_suite, laplacian_fn, make_context,
    toeplitz_matrix,
)


class ParseError(ValueError):
    """Observable expression rejected; carries the offending position."""

    def __init__(self, message, pos):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


class ValidationError(ValueError):
    pass


COMMANDS = ("star-karabegov", "star-bt", "star-kontsevich",
            "star-gammelgaard", "graphs-enumerate", "weights",
            "cp1-toeplitz", "cp1-berezin", "cp1-suite")


# ---------------------------------------------------------------------------
# observable expression parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?j?)|(?P<name>zbar|zz|z)"
    r"|(?P<op>[-+*/^()]))")


def _tokenize(text):
    out = []
    pos = 0
    while pos < len(text):
        mt = _TOKEN_RE.match(text, pos)
        if mt is None or mt.end() == pos:
            bad = pos
            while bad < len(text) and text[bad].isspace():
                bad += 1
            if bad == len(text):
                break
            raise ParseError(f"unexpected character {text[bad]!r}", bad)
        if mt.lastgroup is None:
            break
        kind = mt.lastgroup
        out.append((kind, mt.group(kind), mt.start(kind)))
        pos = mt.end()
    out.append(("end", "", len(text)))
    return out


class _ExprParser:
    """Recursive descent over sums of monomial terms in z, zbar, zz with
    division restricted to powers of (1+zz).

    Values are dicts (a, b, c) -> coeff for coeff z^a zbar^b (1+zz)^{-c}.
    """

    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.next()
        if val != value:
            raise ParseError(f"expected {value!r}, found {val!r}", pos)

    def parse(self):
        val = self.expr()
        kind, tok, pos = self.peek()
        if kind != "end":
            raise ParseError(f"trailing input {tok!r}", pos)
        return val

    def expr(self):
        sign = 1.0
        kind, tok, _ = self.peek()
        if tok in "+-":
            self.next()
            sign = -1.0 if tok == "-" else 1.0
        val = _scale(self.term(), sign)
        while True:
            kind, tok, _ = self.peek()
            if tok not in ("+", "-"):
                return val
            self.next()
            rhs = self.term()
            val = _add(val, _scale(rhs, -1.0 if tok == "-" else 1.0))

    def term(self):
        val = self.factor()
        while True:
            kind, tok, pos = self.peek()
            if tok == "*":
                self.next()
                val = _mul(val, self.factor())
            elif tok == "/":
                self.next()
                denom = self.factor()
                k = _as_one_plus_zz_power(denom)
                if k is None:
                    raise ParseError(
                        "division is only defined by powers of (1+zz)", pos)
                val = {(a, b, c + k): co for (a, b, c), co in val.items()}
            elif kind in ("num", "name") or tok == "(":
                val = _mul(val, self.factor())
            else:
                return val

    def factor(self):
        kind, tok, pos = self.next()
        if kind == "num":
            coeff = complex(0, float(tok[:-1] or 1)) if tok.endswith("j") \
                else complex(float(tok))
            base = {(0, 0, 0): coeff}
        elif kind == "name":
            base = {{"z": (1, 0, 0), "zbar": (0, 1, 0),
                     "zz": (1, 1, 0)}[tok]: 1.0 + 0j}
        elif tok == "(":
            base = self.expr()
            self.expect(")")
        else:
            raise ParseError(f"expected a number, variable, or '(', found "
                             f"{tok!r}", pos)
        kind, tok, _ = self.peek()
        if tok == "^":
            self.next()
            k2, etok, epos = self.next()
            if k2 != "num" or not etok.isdigit():
                raise ParseError("exponent must be a nonnegative integer",
                                 epos)
            out = {(0, 0, 0): 1.0 + 0j}
            for _ in range(int(etok)):
                out = _mul(out, base)
            return out
        return base


def _add(u, v):
    out = dict(u)
    for k, c in v.items():
        out[k] = out.get(k, 0) + c
    return out


def _scale(u, s):
    return {k: c * s for k, c in u.items()}


def _mul(u, v):
    out = {}
    for (a1, b1, c1), x in u.items():
        for (a2, b2, c2), y in v.items():
            k = (a1 + a2, b1 + b2, c1 + c2)
            out[k] = out.get(k, 0) + x * y
    return out


def _as_one_plus_zz_power(val):
    """k when val is the expansion of (1+zz)^k with no denominators."""
    ks = [a for (a, b, c), co in val.items() if co != 0]
    if any(c != 0 or a != b for (a, b, c), co in val.items() if co != 0):
        return None
    k = max(ks, default=-1)
    if k < 0:
        return None
    for i in range(k + 1):
        if not np.isclose(val.get((i, i, 0), 0), math.comb(k, i)):
            return None
    return k


def parse_observable(text):
    raw = _ExprParser(text).parse()
    terms = tuple((co, a, b, c) for (a, b, c), co in sorted(raw.items())
                  if co != 0)
    return ObservableFn(terms=terms)


# ---------------------------------------------------------------------------
# run configuration

@dataclass(frozen=True)
class RunConfig:
    command: str = ""
    potential: str = "flat"          # name or path to a potential JSON file
    alpha_path: str = ""             # path to a bivector JSON file
    expr: str = "1"
    f_expr: str = "(1 - zz) / (1+zz)"
    g_expr: str = "(z + zbar) / (1+zz)"
    f_poly: str = ""                 # JSON for graph star factors
    g_poly: str = ""
    order: int = 2
    max_degree: int = 0              # 0 = derived from order
    n: int = 1
    family: str = "admissible"       # graphs-enumerate: admissible | weighted
    wmax: int = 2
    m: int = 8
    m_list: tuple = (8, 16, 32, 64, 128)
    at: str = "0"
    suite: str = "bms"               # cp1-suite: bms | berezin
    method: str = "grid"
    grid_nodes: int = 800
    samples: int = 200_000
    eta: float = 0.1
    tol: float = 5e-3
    seed: int = 20260823
    jobs: int = 1
    format: str = "json"
    out: str = ""

    def validate(self):
        if self.command not in COMMANDS:
            raise ValidationError(f"unknown command {self.command!r}")
        if self.jobs < 1:
            raise ValidationError("jobs must be >= 1")
        if self.format not in ("json", "csv"):
            raise ValidationError(f"unknown format {self.format!r}")
        if self.method not in ("grid", "mc"):
            raise ValidationError(f"unknown method {self.method!r}")
        if self.order < 0 or self.n < 0 or self.m < 1:
            raise ValidationError("order/n must be >= 0 and m >= 1")
        if self.suite not in ("bms", "berezin"):
            raise ValidationError(f"unknown suite {self.suite!r}")
        if self.family not in ("admissible", "weighted"):
            raise ValidationError(f"unknown family {self.family!r}")


_CONFIG_TYPES = {f.name: f.type for f in fields(RunConfig)}


def load_config_file(path):
    """Flat key=value sections; every key must be a RunConfig field."""
    cp = configparser.ConfigParser()
    with open(path) as fh:
        cp.read_file(fh)
    out = {}
    for section in cp.sections():
        for key, val in cp.items(section):
            if key not in _CONFIG_TYPES:
                raise ValidationError(f"unknown config key {key!r} in "
                                      f"section [{section}]")
            out[key] = _coerce(key, val)
    return out


def _coerce(key, val):
    default = RunConfig.__dataclass_fields__[key].default
    if key == "m_list":
        return tuple(int(x) for x in val.replace(",", " ").split())
    if isinstance(default, bool):
        return val.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(val)
    if isinstance(default, float):
        return float(val)
    return val


# ---------------------------------------------------------------------------
# pipelines

@dataclass
class Report:
    command: str
    inputs: dict
    results: object
    seed: int
    version: str = __version__
    tool: str = "starq"

    def as_dict(self):
        return {"tool": self.tool, "version": self.version,
                "command": self.command, "inputs": self.inputs,
                "seed": self.seed, "results": self.results}


def _load_potential(cfg):
    D = cfg.max_degree or (3 * cfg.order + 6)
    named = reference_potentials(D)
    if cfg.potential in named:
        return named[cfg.potential]
    with open(cfg.potential) as fh:
        obj = json.load(fh)
    phi_minus1 = jet_from_json(obj["phi_minus1"])
    phi = [jet_from_json(j) for j in obj.get("phi", [])]
    return FormalPotential(phi_minus1=phi_minus1, phi=phi)


def _load_bivector(cfg):
    if not cfg.alpha_path:
        return PoissonBivector.constant([[0.0, 1.0], [-1.0, 0.0]])
    with open(cfg.alpha_path) as fh:
        obj = json.load(fh)
    return PoissonBivector.constant(obj["constant"])


def _load_poly(text, d):
    if not text:
        return Poly.variable(0, d)
    coeffs = {}
    for coeff, exps in json.loads(text):
        c = complex(coeff[0], coeff[1]) if isinstance(coeff, list) else coeff
        coeffs[tuple(exps)] = coeffs.get(tuple(exps), 0) + c
    return Poly(d, coeffs)


def _poly_json(p):
    return [[[c.real, c.imag], list(k)]
            for k, c in sorted(p.coeffs.items())]


def _integration_config(cfg):
    return IntegrationConfig(method=cfg.method, grid_nodes=cfg.grid_nodes,
                             samples=cfg.samples, eta=cfg.eta, seed=cfg.seed,
                             tol=cfg.tol)


def run(cfg):
    cfg.validate()
    cmd = cfg.command
    # jobs and out are execution details: reports must be byte-identical
    # across worker counts and output destinations
    inputs = {"config": {k: (list(v) if isinstance(v, tuple) else v)
                         for k, v in cfg.__dict__.items()
                         if k not in ("jobs", "out")}}
    if cmd == "star-karabegov":
        table = karabegov_star(_load_potential(cfg), cfg.order)
        results = star_table_to_json(table)
    elif cmd == "star-bt":
        table = bt_star_from(_load_potential(cfg), cfg.order)
        results = star_table_to_json(table)
    elif cmd == "star-gammelgaard":
        P = _load_potential(cfg)
        metric = metric_from_potential(P.phi_minus1)
        table = gammelgaard_star(P, metric.g_inv, cfg.order)
        results = star_table_to_json(table)
    elif cmd == "star-kontsevich":
        alpha = _load_bivector(cfg)
        f = _load_poly(cfg.f_poly, alpha.d)
        g = _load_poly(cfg.g_poly, alpha.d)
        orders = kontsevich_star(alpha, f, g, cfg.order,
                                 _integration_config(cfg))
        results = {"orders": [_poly_json(p) for p in orders]}
    elif cmd == "graphs-enumerate":
        if cfg.family == "admissible":
            gs = enumerate_kgraphs(cfg.n)
            results = {"count": len(gs), "graphs": [g.to_json() for g in gs]}
        else:
            gs = enumerate_ggraphs(cfg.wmax)
            results = {"count": len(gs), "graphs": [g.to_json() for g in gs]}
    elif cmd == "weights":
        icfg = _integration_config(cfg)
        rows = []
        for g in enumerate_kgraphs(cfg.n):
            w = kontsevich_weight(g, icfg)
            rows.append({"graph": g.to_json(), "value": w.value,
                         "error_estimate": w.error_estimate,
                         "samples_or_cells": w.samples_or_cells,
                         "seed": w.seed})
        results = {"weights": rows}
    elif cmd == "cp1-toeplitz":
        f = parse_observable(cfg.expr)
        A = toeplitz_matrix(f, make_context(cfg.m))
        results = {"m": cfg.m,
                   "entries": [[x.real, x.imag] for x in A.ravel()]}
    elif cmd == "cp1-berezin":
        f = parse_observable(cfg.expr)
        z0 = complex(cfg.at.replace(" ", ""))
        points = []
        for m in cfg.m_list:
            val = berezin_transform_num(f, z0, make_context(m))
            points.append({"m": m, "value": val.real, "imag": val.imag})
        results = {"series": "berezin", "at": cfg.at, "points": points}
    elif cmd == "cp1-suite":
        f = parse_observable(cfg.f_expr)
        g = parse_observable(cfg.g_expr)
        if cfg.suite == "bms":
            names = ("norm_gap", "commutator_defect", "product_defect")
            series = bms_suite(f, g, cfg.m_list)
        else:
            pts = [0.0 + 0.0j, 0.3 + 0.1j, 0.8 - 0.5j, 1.6 + 0.9j]
            series = (berezin_defect_series(f, laplacian_fn(f), pts,
                                            cfg.m_list),)
            names = ("berezin_defect",)
        results = {"series": [
            {"name": nm,
             "points": [{"m": m, "value": v} for m, v in s.points],
             "fit": {"limit": s.fit[0], "slope": s.fit[1],
                     "residual": s.fit[2]}}
            for nm, s in zip(names, series)]}
    else:  # pragma: no cover - guarded by validate()
        raise ValidationError(cmd)
    return Report(command=cmd, inputs=inputs, results=results, seed=cfg.seed)


# ---------------------------------------------------------------------------
# emission

def emit(report, fmt):
    if fmt == "json":
        return (json.dumps(report.as_dict(), sort_keys=True,
                           separators=(",", ":")) + "\n").encode()
    results = report.results
    buf = io.StringIO()
    if isinstance(results, dict) and "series" in results \
            and isinstance(results["series"], list):
        buf.write("series,m,value,fit_limit,fit_slope,fit_residual\n")
        for s in results["series"]:
            fit = s["fit"]
            for pt in s["points"]:
                buf.write(f"{s['name']},{pt['m']},{pt['value']!r},"
                          f"{fit['limit']!r},{fit['slope']!r},"
                          f"{fit['residual']!r}\n")
    elif isinstance(results, dict) and "points" in results:
        buf.write("m,value\n")
        for pt in results["points"]:
            buf.write(f"{pt['m']},{pt['value']!r}\n")
    elif isinstance(results, dict) and "weights" in results:
        buf.write("graph,value,error_estimate,samples_or_cells,seed\n")
        for row in results["weights"]:
            gtxt = json.dumps(row["graph"], sort_keys=True,
                              separators=(",", ":")).replace('"', "'")
            buf.write(f"\"{gtxt}\",{row['value']!r},"
                      f"{row['error_estimate']!r},"
                      f"{row['samples_or_cells']},{row['seed']}\n")
    else:
        raise ValidationError(
            f"command {report.command!r} has no CSV representation")
    return buf.getvalue().encode()


# ---------------------------------------------------------------------------
# entry point

def build_parser():
    p = argparse.ArgumentParser(prog="starq", description=__doc__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", default="", help="key=value config file")
    for fld in fields(RunConfig):
        if fld.name == "command":
            continue
        flag = "--" + fld.name.replace("_", "-")
        if fld.name == "m_list":
            p.add_argument(flag, default=None,
                           help="comma-separated levels, e.g. 8,16,32")
        else:
            p.add_argument(flag, default=None, type=str)
    return p


def config_from_args(argv):
    args = build_parser().parse_args(argv)
    values = {}
    if args.config:
        values.update(load_config_file(args.config))
    for fld in fields(RunConfig):
        if fld.name == "command":
            continue
        raw = getattr(args, fld.name)
        if raw is not None:
            values[fld.name] = _coerce(fld.name, raw)
    values["command"] = args.command
    return RunConfig(**values)


def main(argv=None):
    try:
        cfg = config_from_args(argv if argv is not None else sys.argv[1:])
        report = run(cfg)
        payload = emit(report, cfg.format)
    except (ValidationError, ParseError, UnboundedSymbol, ResourceGuard,
            ValueError, OSError, json.JSONDecodeError) as exc:
        _err(exc)
        return 2
    except (IntegrationFailure, QuadratureTolerance, CrossCheckFailure,
            ArithmeticError) as exc:
        _err(exc)
        return 3
    if cfg.out:
        out_dir = os.environ.get("OUTPUT_DIR", "")
        path = os.path.join(out_dir, cfg.out) if out_dir else cfg.out
        with open(path, "wb") as fh:
            fh.write(payload)
    else:
        sys.stdout.buffer.write(payload)
        sys.stdout.buffer.flush()
    return 0


def _err(exc):
    line = json.dumps({"error": type(exc).__name__, "message": str(exc)},
                      sort_keys=True)
    print(line, file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
