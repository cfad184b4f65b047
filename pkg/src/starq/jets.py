"""Exact truncated power series (jets) in n complex variables and conjugates.

Coefficients are complex rationals; no floats ever enter this module.
A jet of max_degree D stores terms (holo exponents, anti exponents) -> Scalar
with total degree <= D.  Multiplication truncates above D.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction


class ZeroConstantTerm(ArithmeticError):
    """Jet inversion requested for a jet with zero constant term."""


class DegenerateMetric(ArithmeticError):
    """Degree-0 Hessian block is singular."""


# ---------------------------------------------------------------------------
# scalars

class Scalar:
    """Complex number with exact rational real/imaginary parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = re if isinstance(re, Fraction) else Fraction(re)
        self.im = im if isinstance(im, Fraction) else Fraction(im)

    def __add__(self, other):
        other = _as_scalar(other)
        return Scalar(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __neg__(self):
        return Scalar(-self.re, -self.im)

    def __sub__(self, other):
        return self + (-_as_scalar(other))

    def __rsub__(self, other):
        return _as_scalar(other) + (-self)

    def __mul__(self, other):
        other = _as_scalar(other)
        return Scalar(self.re * other.re - self.im * other.im,
                      self.re * other.im + self.im * other.re)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_scalar(other)
        den = other.re * other.re + other.im * other.im
        if den == 0:
            raise ZeroDivisionError("division by zero Scalar")
        return Scalar((self.re * other.re + self.im * other.im) / den,
                      (self.im * other.re - self.re * other.im) / den)

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Scalar(other)
        if not isinstance(other, Scalar):
            return NotImplemented
        return self.re == other.re and self.im == other.im

    def __hash__(self):
        return hash((self.re, self.im))

    def is_zero(self):
        return self.re == 0 and self.im == 0

    def conj(self):
        return Scalar(self.re, -self.im)

    def to_complex(self):
        return complex(self.re, self.im)

    def __repr__(self):
        return f"Scalar({self.re}, {self.im})"


def _as_scalar(x):
    if isinstance(x, Scalar):
        return x
    if isinstance(x, (int, Fraction)):
        return Scalar(x)
    raise TypeError(f"cannot coerce {type(x)!r} to Scalar")


ZERO = Scalar(0)
ONE = Scalar(1)
I = Scalar(0, 1)


# ---------------------------------------------------------------------------
# multi-index helpers (plain tuples of non-negative ints)

def mi_zero(n):
    return (0,) * n


def mi_add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def mi_sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def mi_le(a, b):
    return all(x <= y for x, y in zip(a, b))


def mi_deg(a):
    return sum(a)


def mi_fact(a):
    out = 1
    for x in a:
        out *= math.factorial(x)
    return out


def mi_binom(a, b):
    """Product of componentwise binomials C(a_i, b_i)."""
    out = 1
    for x, y in zip(a, b):
        out *= math.comb(x, y)
    return out


def mi_falling(a, b):
    """Product of falling factorials a_i!/(a_i-b_i)!  (b <= a assumed)."""
    out = 1
    for x, y in zip(a, b):
        out *= math.perm(x, y)
    return out


def mi_range(n, max_deg):
    """All multi-indices of length n with total degree <= max_deg, graded lex."""
    out = []

    def rec(prefix, remaining):
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        for v in range(remaining + 1):
            rec(prefix + [v], remaining - v)

    for d in range(max_deg + 1):
        tier = []

        def rec_exact(prefix, remaining):
            if len(prefix) == n - 1:
                tier.append(tuple(prefix) + (remaining,))
                return
            for v in range(remaining + 1):
                rec_exact(prefix + [v], remaining - v)

        rec_exact([], d)
        out.extend(sorted(tier))
    return out


def unit_mi(n, i):
    return tuple(1 if j == i else 0 for j in range(n))


# ---------------------------------------------------------------------------
# jets

class Jet:
    """Truncated power series in (z_1..z_n, zbar_1..zbar_n)."""

    __slots__ = ("n", "max_degree", "terms")

    def __init__(self, n, max_degree, terms=None):
        self.n = n
        self.max_degree = max_degree
        pruned = {}
        if terms:
            for key, coeff in terms.items():
                if coeff.is_zero():
                    continue
                holo, anti = key
                if mi_deg(holo) + mi_deg(anti) > max_degree:
                    continue
                pruned[key] = coeff
        self.terms = pruned

    # constructors ---------------------------------------------------------
    @staticmethod
    def zero(n, max_degree):
        return Jet(n, max_degree)

    @staticmethod
    def constant(c, n, max_degree):
        c = _as_scalar(c)
        return Jet(n, max_degree, {(mi_zero(n), mi_zero(n)): c})

    @staticmethod
    def variable(i, n, max_degree, kind="holo"):
        key = (unit_mi(n, i), mi_zero(n)) if kind == "holo" else (mi_zero(n), unit_mi(n, i))
        return Jet(n, max_degree, {key: ONE})

    @staticmethod
    def monomial(holo, anti, n, max_degree, coeff=ONE):
        return Jet(n, max_degree, {(tuple(holo), tuple(anti)): _as_scalar(coeff)})

    # basics ---------------------------------------------------------------
    def _check(self, other):
        if self.n != other.n or self.max_degree != other.max_degree:
            raise ValueError("jet dimension/truncation mismatch")

    def __eq__(self, other):
        if not isinstance(other, Jet):
            return NotImplemented
        return (self.n == other.n and self.max_degree == other.max_degree
                and self.terms == other.terms)

    def __hash__(self):
        return hash((self.n, self.max_degree, frozenset(self.terms.items())))

    def is_zero(self):
        return not self.terms

    def constant_term(self):
        return self.terms.get((mi_zero(self.n), mi_zero(self.n)), ZERO)

    def __add__(self, other):
        self._check(other)
        out = dict(self.terms)
        for key, c in other.terms.items():
            s = out.get(key, ZERO) + c
            if s.is_zero():
                out.pop(key, None)
            else:
                out[key] = s
        return Jet(self.n, self.max_degree, out)

    def __neg__(self):
        return Jet(self.n, self.max_degree, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction, Scalar)):
            return self.scale(other)
        self._check(other)
        D = self.max_degree
        out = {}
        for (h1, a1), c1 in self.terms.items():
            d1 = mi_deg(h1) + mi_deg(a1)
            for (h2, a2), c2 in other.terms.items():
                if d1 + mi_deg(h2) + mi_deg(a2) > D:
                    continue
                key = (mi_add(h1, h2), mi_add(a1, a2))
                s = out.get(key, ZERO) + c1 * c2
                if s.is_zero():
                    out.pop(key, None)
                else:
                    out[key] = s
        return Jet(self.n, D, out)

    __rmul__ = __mul__

    def scale(self, c):
        c = _as_scalar(c)
        if c.is_zero():
            return Jet.zero(self.n, self.max_degree)
        return Jet(self.n, self.max_degree, {k: v * c for k, v in self.terms.items()})

    def diff(self, var, kind="holo"):
        """Formal partial derivative; max_degree is kept as bookkeeping."""
        out = {}
        slot = 0 if kind == "holo" else 1
        for (h, a), c in self.terms.items():
            idx = h if slot == 0 else a
            e = idx[var]
            if e == 0:
                continue
            new_idx = tuple(v - 1 if j == var else v for j, v in enumerate(idx))
            key = (new_idx, a) if slot == 0 else (h, new_idx)
            s = out.get(key, ZERO) + c * e
            out[key] = s
        return Jet(self.n, self.max_degree, out)

    def diff_multi(self, holo, anti):
        out = self
        for i, e in enumerate(holo):
            for _ in range(e):
                out = out.diff(i, "holo")
        for i, e in enumerate(anti):
            for _ in range(e):
                out = out.diff(i, "anti")
        return out

    def conj(self):
        return Jet(self.n, self.max_degree,
                   {(a, h): c.conj() for (h, a), c in self.terms.items()})

    def truncate(self, new_degree):
        """Drop terms above new_degree, keeping the stored truncation bound."""
        return Jet(self.n, min(self.max_degree, new_degree),
                   {k: c for k, c in self.terms.items()
                    if mi_deg(k[0]) + mi_deg(k[1]) <= new_degree})

    def with_max_degree(self, D):
        """Rebrand at truncation D (terms above D dropped)."""
        return Jet(self.n, D, self.terms)

    def inverse(self):
        c0 = self.constant_term()
        if c0.is_zero():
            raise ZeroConstantTerm("jet has zero constant term")
        n, D = self.n, self.max_degree
        # a = c0 (1 + r) with r of positive valuation; 1/a = (1/c0) sum (-r)^k
        r = self.scale(ONE / c0) - Jet.constant(1, n, D)
        out = Jet.constant(1, n, D)
        power = Jet.constant(1, n, D)
        for _ in range(D):
            power = power * (-r)
            if power.is_zero():
                break
            out = out + power
        return out.scale(ONE / c0)

    def __repr__(self):
        if not self.terms:
            return "Jet(0)"
        bits = []
        for (h, a) in sorted(self.terms):
            c = self.terms[(h, a)]
            mon = []
            for i, e in enumerate(h):
                if e:
                    mon.append(f"z{i}^{e}" if e > 1 else f"z{i}")
            for i, e in enumerate(a):
                if e:
                    mon.append(f"zb{i}^{e}" if e > 1 else f"zb{i}")
            cs = f"({c.re}+{c.im}i)" if c.im else f"{c.re}"
            bits.append(cs + ("*" + "*".join(mon) if mon else ""))
        return "Jet(" + " + ".join(bits) + ")"


def jet_arith(a, b, op):
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "scale":
        return a.scale(b)
    raise ValueError(f"unknown op {op!r}")


def jet_diff(a, var, kind):
    return a.diff(var, kind)


def jet_inverse(a):
    return a.inverse()


# ---------------------------------------------------------------------------
# metric data

@dataclass(frozen=True)
class MetricJets:
    g: tuple            # n x n tuple-of-tuples of Jet, g[i][j] = d2 Phi / dz_i dzbar_j
    g_inv: tuple        # jet inverse matrix
    base_valid: bool


def _const_matrix_inverse(mat):
    """Exact inverse of an n x n Scalar matrix; raises DegenerateMetric."""
    n = len(mat)
    aug = [[mat[i][j] for j in range(n)] + [ONE if j == i else ZERO for j in range(n)]
           for i in range(n)]
    for col in range(n):
        piv = None
        for r in range(col, n):
            if not aug[r][col].is_zero():
                piv = r
                break
        if piv is None:
            raise DegenerateMetric("degree-0 Hessian block is singular")
        aug[col], aug[piv] = aug[piv], aug[col]
        inv_p = ONE / aug[col][col]
        aug[col] = [x * inv_p for x in aug[col]]
        for r in range(n):
            if r == col:
                continue
            f = aug[r][col]
            if f.is_zero():
                continue
            aug[r] = [x - f * y for x, y in zip(aug[r], aug[col])]
    return [[aug[i][n + j] for j in range(n)] for i in range(n)]


def metric_from_potential(phi):
    """Hessian metric g_ij = d2 Phi / dz_i dzbar_j and its jet inverse."""
    n, D = phi.n, phi.max_degree
    g = [[phi.diff(i, "holo").diff(j, "anti") for j in range(n)] for i in range(n)]
    g0 = [[g[i][j].constant_term() for j in range(n)] for i in range(n)]
    g0_inv = _const_matrix_inverse(g0)
    # g = g0 (Id + g0^{-1} h) with h of positive valuation:
    # g^{-1} = sum_k (-g0^{-1} h)^k g0^{-1}, finite in the truncated ring.
    h = [[g[i][j] - Jet.constant(g0[i][j], n, D) for j in range(n)] for i in range(n)]
    m = [[Jet.zero(n, D) for _ in range(n)] for _ in range(n)]  # -g0^{-1} h
    for i in range(n):
        for j in range(n):
            acc = Jet.zero(n, D)
            for k in range(n):
                acc = acc + h[k][j].scale(g0_inv[i][k])
            m[i][j] = -acc
    g0i_jet = [[Jet.constant(g0_inv[i][j], n, D) for j in range(n)] for i in range(n)]
    total = [[Jet.constant(ONE if i == j else ZERO, n, D) for j in range(n)] for i in range(n)]
    power = [[Jet.constant(ONE if i == j else ZERO, n, D) for j in range(n)] for i in range(n)]
    for _ in range(D):
        power = _mat_mul(power, m, n, D)
        if all(power[i][j].is_zero() for i in range(n) for j in range(n)):
            break
        total = [[total[i][j] + power[i][j] for j in range(n)] for i in range(n)]
    g_inv = _mat_mul(total, g0i_jet, n, D)
    return MetricJets(g=tuple(tuple(row) for row in g),
                      g_inv=tuple(tuple(row) for row in g_inv),
                      base_valid=True)


def _mat_mul(a, b, n, D):
    out = [[Jet.zero(n, D) for _ in range(n)] for _ in range(n)]
    for i in range(n):
        for j in range(n):
            acc = Jet.zero(n, D)
            for k in range(n):
                acc = acc + a[i][k] * b[k][j]
            out[i][j] = acc
    return out


def laplacian(f, m):
    """Sum_ij g^{ij} d2 f / dz_i dzbar_j."""
    n = f.n
    out = Jet.zero(n, f.max_degree)
    for i in range(n):
        for j in range(n):
            out = out + m.g_inv[i][j] * f.diff(i, "holo").diff(j, "anti")
    return out


def poisson_bracket(f, g, m):
    """{f,g} = i sum g^{ij} (df/dzbar_i dg/dz_j - df/dz_j dg/dzbar_i)."""
    n = f.n
    out = Jet.zero(n, f.max_degree)
    for i in range(n):
        for j in range(n):
            term = (f.diff(i, "anti") * g.diff(j, "holo")
                    - f.diff(j, "holo") * g.diff(i, "anti"))
            out = out + m.g_inv[i][j] * term
    return out.scale(I)


# ---------------------------------------------------------------------------
# serialization

def _frac_str(fr):
    return f"{fr.numerator}/{fr.denominator}"


def _frac_parse(s):
    if "/" in s:
        p, q = s.split("/")
        return Fraction(int(p), int(q))
    return Fraction(int(s))


def jet_to_json(jet):
    terms = []
    for (h, a) in sorted(jet.terms):
        c = jet.terms[(h, a)]
        terms.append({"dz": list(h), "dzbar": list(a),
                      "re": _frac_str(c.re), "im": _frac_str(c.im)})
    return {"n": jet.n, "max_degree": jet.max_degree, "terms": terms}


def jet_from_json(obj):
    terms = {}
    for t in obj["terms"]:
        key = (tuple(t["dz"]), tuple(t["dzbar"]))
        terms[key] = Scalar(_frac_parse(t["re"]), _frac_parse(t["im"]))
    return Jet(obj["n"], obj["max_degree"], terms)
