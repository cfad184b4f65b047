"""Formal nu-graded differential and bidifferential operators.

A DiffOp is a finite sum coeff * d^holo_z d^anti_zbar with Jet coefficients.
A NuDiffOp stacks DiffOps by nu power.  A StarTable holds bidifferential
coefficients C_0..C_N of an associative deformed product together with a
separation-of-variables convention flag.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .jets import (
    Jet, ONE, ZERO, Scalar, jet_to_json, jet_from_json,
    mi_add, mi_binom, mi_deg, mi_falling, mi_le, mi_range, mi_sub, mi_zero, mi_fact,
)


class BudgetExceeded(ValueError):
    """Requested derivative order exceeds the declared degree budget."""


class OrderViolation(ValueError):
    """Operator order incompatible with the requested polarization."""


class SingularSystem(ArithmeticError):
    """Coefficient extraction hit an inconsistent or non-triangular system."""


# ---------------------------------------------------------------------------
# DiffOp

class DiffOp:
    """sum_i coeff_i * d^{holo_i}_z d^{anti_i}_zbar with Jet coefficients."""

    __slots__ = ("n", "D", "terms")

    def __init__(self, n, D, terms=()):
        self.n = n
        self.D = D
        merged = {}
        for coeff, holo, anti in terms:
            key = (tuple(holo), tuple(anti))
            cur = merged.get(key)
            merged[key] = coeff if cur is None else cur + coeff
        self.terms = tuple((c, h, a) for (h, a), c in sorted(merged.items())
                           if not c.is_zero())

    @staticmethod
    def zero(n, D):
        return DiffOp(n, D)

    @staticmethod
    def identity(n, D):
        return DiffOp(n, D, [(Jet.constant(1, n, D), mi_zero(n), mi_zero(n))])

    @staticmethod
    def mult(jet):
        return DiffOp(jet.n, jet.max_degree,
                      [(jet, mi_zero(jet.n), mi_zero(jet.n))])

    @staticmethod
    def deriv(n, D, holo, anti):
        return DiffOp(n, D, [(Jet.constant(1, n, D), holo, anti)])

    def is_zero(self):
        return not self.terms

    def max_order(self):
        return max((mi_deg(h) + mi_deg(a) for _, h, a in self.terms), default=0)

    def __add__(self, other):
        return DiffOp(self.n, self.D, list(self.terms) + list(other.terms))

    def __neg__(self):
        return DiffOp(self.n, self.D, [(-c, h, a) for c, h, a in self.terms])

    def __sub__(self, other):
        return self + (-other)

    def scale(self, s):
        return DiffOp(self.n, self.D, [(c.scale(s), h, a) for c, h, a in self.terms])

    def apply(self, f):
        out = Jet.zero(self.n, self.D)
        for coeff, h, a in self.terms:
            out = out + coeff * f.diff_multi(h, a)
        return out

    def compose(self, other):
        """Leibniz composition: (self o other)(f) = self(other(f))."""
        n = self.n
        out = []
        for p, a, b in self.terms:
            for q, c, d in other.terms:
                for a1 in _sub_indices(a):
                    for b1 in _sub_indices(b):
                        cb = mi_binom(a, a1) * mi_binom(b, b1)
                        dq = q.diff_multi(mi_sub(a, a1), mi_sub(b, b1))
                        if dq.is_zero():
                            continue
                        coeff = (p * dq).scale(cb)
                        out.append((coeff, mi_add(a1, c), mi_add(b1, d)))
        return DiffOp(n, self.D, out)

    def __eq__(self, other):
        if not isinstance(other, DiffOp):
            return NotImplemented
        return (self.n, self.D, self.terms) == (other.n, other.D, other.terms)

    def __repr__(self):
        return f"DiffOp({self.terms!r})"


def _sub_indices(a):
    """All multi-indices componentwise <= a."""
    return itertools.product(*(range(x + 1) for x in a))


# ---------------------------------------------------------------------------
# NuDiffOp

class NuDiffOp:
    """Formal series sum_k nu^k A_k of DiffOps, truncated at order N."""

    __slots__ = ("n", "D", "N", "orders")

    def __init__(self, n, D, N, orders):
        self.n = n
        self.D = D
        self.N = N
        orders = list(orders)
        if len(orders) < N + 1:
            orders += [DiffOp.zero(n, D)] * (N + 1 - len(orders))
        self.orders = tuple(orders[:N + 1])

    @staticmethod
    def identity(n, D, N):
        return NuDiffOp(n, D, N, [DiffOp.identity(n, D)])

    def is_identity_leading(self):
        return self.orders[0] == DiffOp.identity(self.n, self.D)

    def check_budget(self):
        for k, op in enumerate(self.orders):
            if op.max_order() > self.D:
                raise BudgetExceeded(
                    f"order-{k} operator derivative order {op.max_order()} "
                    f"exceeds degree budget {self.D}")

    def apply(self, fseries):
        """Apply to a nu-series of jets (list of length <= N+1)."""
        self.check_budget()
        out = [Jet.zero(self.n, self.D) for _ in range(self.N + 1)]
        for i, op in enumerate(self.orders):
            for j, f in enumerate(fseries):
                if i + j > self.N:
                    break
                out[i + j] = out[i + j] + op.apply(f)
        return out

    def compose(self, other):
        if self.N != other.N:
            raise ValueError("nu-order mismatch in composition")
        orders = [DiffOp.zero(self.n, self.D) for _ in range(self.N + 1)]
        for i, a in enumerate(self.orders):
            if a.is_zero():
                continue
            for j, b in enumerate(other.orders):
                if i + j > self.N or b.is_zero():
                    continue
                orders[i + j] = orders[i + j] + a.compose(b)
        return NuDiffOp(self.n, self.D, self.N, orders)

    def __eq__(self, other):
        if not isinstance(other, NuDiffOp):
            return NotImplemented
        return (self.n, self.D, self.N) == (other.n, other.D, other.N) and \
            all(a == b for a, b in zip(self.orders, other.orders))


def op_apply(D, fseries):
    return D.apply(fseries)


def op_compose(A, B):
    return A.compose(B)


# ---------------------------------------------------------------------------
# BiDiffOp

class BiDiffOp:
    """sum coeff * (d^{fh}_z d^{fa}_zbar f) * (d^{gh}_z d^{ga}_zbar g)."""

    __slots__ = ("n", "D", "terms")

    def __init__(self, n, D, terms=()):
        self.n = n
        self.D = D
        merged = {}
        for coeff, fh, fa, gh, ga in terms:
            key = (tuple(fh), tuple(fa), tuple(gh), tuple(ga))
            cur = merged.get(key)
            merged[key] = coeff if cur is None else cur + coeff
        self.terms = tuple((c,) + k for k, c in sorted(merged.items())
                           if not c.is_zero())

    @staticmethod
    def zero(n, D):
        return BiDiffOp(n, D)

    @staticmethod
    def pointwise(n, D):
        z = mi_zero(n)
        return BiDiffOp(n, D, [(Jet.constant(1, n, D), z, z, z, z)])

    def is_zero(self):
        return not self.terms

    def __add__(self, other):
        return BiDiffOp(self.n, self.D, list(self.terms) + list(other.terms))

    def __neg__(self):
        return BiDiffOp(self.n, self.D, [(-t[0],) + t[1:] for t in self.terms])

    def __sub__(self, other):
        return self + (-other)

    def apply(self, f, g):
        out = Jet.zero(self.n, self.D)
        for coeff, fh, fa, gh, ga in self.terms:
            out = out + coeff * f.diff_multi(fh, fa) * g.diff_multi(gh, ga)
        return out

    def swap(self):
        """Arguments exchanged: C'(f,g) = C(g,f)."""
        return BiDiffOp(self.n, self.D,
                        [(c, gh, ga, fh, fa) for c, fh, fa, gh, ga in self.terms])

    def precompose(self, A1, A2):
        """C'(f,g) = C(A1 f, A2 g) for DiffOps A1, A2."""
        out = []
        for coeff, fh, fa, gh, ga in self.terms:
            d1 = DiffOp.deriv(self.n, self.D, fh, fa).compose(A1)
            d2 = DiffOp.deriv(self.n, self.D, gh, ga).compose(A2)
            for c1, h1, a1 in d1.terms:
                for c2, h2, a2 in d2.terms:
                    out.append((coeff * c1 * c2, h1, a1, h2, a2))
        return BiDiffOp(self.n, self.D, out)

    def postcompose(self, P):
        """C'(f,g) = P(C(f,g)) for a DiffOp P, by trinomial Leibniz."""
        out = []
        for p, a, b in P.terms:
            for coeff, fh, fa, gh, ga in self.terms:
                for a1 in _sub_indices(a):
                    rest_a = mi_sub(a, a1)
                    for a2 in _sub_indices(rest_a):
                        a3 = mi_sub(rest_a, a2)
                        ma = mi_binom(a, a1) * mi_binom(rest_a, a2)
                        for b1 in _sub_indices(b):
                            rest_b = mi_sub(b, b1)
                            for b2 in _sub_indices(rest_b):
                                b3 = mi_sub(rest_b, b2)
                                mb = mi_binom(b, b1) * mi_binom(rest_b, b2)
                                dc = coeff.diff_multi(a1, b1)
                                if dc.is_zero():
                                    continue
                                out.append(((p * dc).scale(ma * mb),
                                            mi_add(fh, a2), mi_add(fa, b2),
                                            mi_add(gh, a3), mi_add(ga, b3)))
        return BiDiffOp(self.n, self.D, out)

    def max_orders(self):
        """(f_holo, f_anti, g_holo, g_anti) maximal derivative orders."""
        fh = max((mi_deg(t[1]) for t in self.terms), default=0)
        fa = max((mi_deg(t[2]) for t in self.terms), default=0)
        gh = max((mi_deg(t[3]) for t in self.terms), default=0)
        ga = max((mi_deg(t[4]) for t in self.terms), default=0)
        return fh, fa, gh, ga

    def __eq__(self, other):
        if not isinstance(other, BiDiffOp):
            return NotImplemented
        return (self.n, self.D, self.terms) == (other.n, other.D, other.terms)


# ---------------------------------------------------------------------------
# StarTable

CONVENTIONS = ("karabegov_anti_wick", "wick", "none")


@dataclass
class StarTable:
    N: int
    C: list               # BiDiffOp, C[0] .. C[N]
    convention: str
    label: str = ""

    def __post_init__(self):
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown convention {self.convention!r}")
        if len(self.C) != self.N + 1:
            raise ValueError("need exactly N+1 coefficient operators")

    @property
    def n(self):
        return self.C[0].n

    @property
    def D(self):
        return self.C[0].D

    def check_convention(self):
        """Structural separation-of-variables check on C_k, k >= 1."""
        for k in range(1, self.N + 1):
            fh, fa, gh, ga = self.C[k].max_orders()
            if self.convention == "karabegov_anti_wick":
                ok = fh == 0 and ga == 0 and fa <= k and gh <= k
            elif self.convention == "wick":
                ok = fa == 0 and gh == 0 and fh <= k and ga <= k
            else:
                ok = True
            if not ok:
                raise OrderViolation(
                    f"C_{k} violates convention {self.convention}")


def detect_convention(table_ops):
    """Classify a list of BiDiffOps (C_0..C_N) by derivative routing."""
    anti_wick = wick = True
    for k, op in enumerate(table_ops):
        if k == 0:
            continue
        fh, fa, gh, ga = op.max_orders()
        if not (fh == 0 and ga == 0 and fa <= k and gh <= k):
            anti_wick = False
        if not (fa == 0 and gh == 0 and fh <= k and ga <= k):
            wick = False
    if anti_wick:
        return "karabegov_anti_wick"
    if wick:
        return "wick"
    return "none"


def star_eval(t, f, g):
    """[C_0(f,g), ..., C_N(f,g)] for single jets f, g."""
    return [t.C[k].apply(f, g) for k in range(t.N + 1)]


def star_series(t, fs, gs):
    """Deformed product of two nu-series of jets."""
    n, D, N = t.n, t.D, t.N
    out = [Jet.zero(n, D) for _ in range(N + 1)]
    for k in range(N + 1):
        for i, f in enumerate(fs):
            if k + i > N:
                break
            for j, g in enumerate(gs):
                if k + i + j > N:
                    break
                out[k + i + j] = out[k + i + j] + t.C[k].apply(f, g)
    return out


def assoc_defect(t, f, g, h):
    """(f*g)*h - f*(g*h) as a nu-series of jets."""
    fg = star_eval(t, f, g)
    gh = star_eval(t, g, h)
    lhs = star_series(t, fg, [h])
    rhs = star_series(t, [f], gh)
    return [a - b for a, b in zip(lhs, rhs)]


# ---------------------------------------------------------------------------
# polarization and transform extraction

def polarize(I_k, k):
    """Rebuild C_k from I_k: anti derivatives go to the first argument,
    holomorphic derivatives to the second, coefficients carried over."""
    for _, h, a in I_k.terms:
        if mi_deg(h) > k or mi_deg(a) > k:
            raise OrderViolation(f"I_{k} has a term of order above ({k},{k})")
    n, D = I_k.n, I_k.D
    z = mi_zero(n)
    return BiDiffOp(n, D, [(c, z, a, h, z) for c, h, a in I_k.terms])


def transform_from_star(t):
    """Formal Berezin transform I with C_k(f,g) = sum a_ab d^b_zbar f d^a_z g.

    Solved on monomial pairs (zbar^b', z^a') in increasing total degree;
    the system is triangular because lower-degree coefficients are already
    known when a new pair is processed.
    """
    if t.convention != "karabegov_anti_wick":
        raise ValueError("transform extraction requires an anti-Wick table")
    n, D, N = t.n, t.D, t.N
    orders = [DiffOp.identity(n, D)]
    for k in range(1, N + 1):
        a_coeffs = _extract_sov_coefficients(t.C[k], k)
        orders.append(DiffOp(n, D, [(c, alpha, beta)
                                    for (alpha, beta), c in a_coeffs.items()]))
    return NuDiffOp(n, D, N, orders)


def _extract_sov_coefficients(C_k, k):
    """Solve C_k(zbar^beta', z^alpha') for jet coefficients a_{alpha,beta},
    |alpha|,|beta| <= k.  Raises SingularSystem if the (k,k) bound fails."""
    n, D = C_k.n, C_k.D
    idx = mi_range(n, k)
    pairs = sorted(((a, b) for a in idx for b in idx),
                   key=lambda p: (mi_deg(p[0]) + mi_deg(p[1]), p))
    solved = {}
    for alpha_p, beta_p in pairs:
        f = Jet.monomial(mi_zero(n), beta_p, n, D)
        g = Jet.monomial(alpha_p, mi_zero(n), n, D)
        rhs = C_k.apply(f, g)
        for (alpha, beta), a in solved.items():
            if not (mi_le(alpha, alpha_p) and mi_le(beta, beta_p)):
                continue
            mono = Jet.monomial(mi_sub(alpha_p, alpha), mi_sub(beta_p, beta), n, D,
                                Scalar(mi_falling(alpha_p, alpha)
                                       * mi_falling(beta_p, beta)))
            rhs = rhs - a * mono
        denom = Scalar(mi_fact(alpha_p) * mi_fact(beta_p))
        solved[(alpha_p, beta_p)] = rhs.scale(ONE / denom)
    # consistency: the reconstructed operator must reproduce C_k one order out
    recon = BiDiffOp(n, D, [(c, mi_zero(n), beta, alpha, mi_zero(n))
                            for (alpha, beta), c in solved.items()])
    check = mi_range(n, k + 1)
    probe_deg = D - 2 * (k + 1)
    for alpha_p in check:
        for beta_p in check:
            f = Jet.monomial(mi_zero(n), beta_p, n, D)
            g = Jet.monomial(alpha_p, mi_zero(n), n, D)
            diff = (C_k.apply(f, g) - recon.apply(f, g)).truncate(max(probe_deg, 0))
            if not diff.is_zero():
                raise SingularSystem(
                    f"C_{k} is not of separation-of-variables order ({k},{k})")
    return solved


def invert_transform(I):
    """Neumann inverse of a transform with identity leading order."""
    if not I.is_identity_leading():
        raise ValueError("transform must start with the identity")
    n, D, N = I.n, I.D, I.N
    ident = NuDiffOp.identity(n, D, N)
    P = NuDiffOp(n, D, N, [DiffOp.zero(n, D)] + list(I.orders[1:]))
    out = ident
    power = ident
    sign = -1
    for _ in range(N):
        power = power.compose(P)
        term = NuDiffOp(n, D, N, [op.scale(Scalar(sign)) for op in power.orders])
        out = NuDiffOp(n, D, N, [a + b for a, b in zip(out.orders, term.orders)])
        sign = -sign
    return out


# ---------------------------------------------------------------------------
# star-product transforms

def conjugate_star(t, B):
    """Equivalent product f *' g = B^{-1}(B f * B g)."""
    if not B.is_identity_leading():
        raise ValueError("equivalence transform must start with the identity")
    n, D, N = t.n, t.D, t.N
    Binv = invert_transform(B)
    C_out = []
    for k in range(N + 1):
        acc = BiDiffOp.zero(n, D)
        for a in range(k + 1):
            for b in range(k + 1 - a):
                for c in range(k + 1 - a - b):
                    d = k - a - b - c
                    inner = t.C[b].precompose(B.orders[c], B.orders[d])
                    acc = acc + inner.postcompose(Binv.orders[a])
        C_out.append(acc)
    conv = detect_convention(C_out)
    return StarTable(N=N, C=C_out, convention=conv,
                     label=t.label + "|conjugated" if t.label else "conjugated")


def opposite_star(t):
    C_out = [c.swap() for c in t.C]
    conv = detect_convention(C_out)
    return StarTable(N=t.N, C=C_out, convention=conv,
                     label=t.label + "|opposite" if t.label else "opposite")


def dual_star(t, I):
    """f *~ g = I^{-1}(I(g) * I(f))."""
    return conjugate_star(opposite_star(t), I)


# ---------------------------------------------------------------------------
# equality by action

def tables_agree(t1, t2, probe_degree, up_to=None):
    """Compare star tables by action on monomial pairs up to probe_degree,
    comparing jets through total degree up_to (defaults to probe window)."""
    if t1.N != t2.N or t1.n != t2.n:
        return False
    n, D = t1.n, min(t1.D, t2.D)
    if up_to is None:
        up_to = D - 2 * t1.N
    mons = [Jet.monomial(h, a, n, D)
            for h in mi_range(n, probe_degree) for a in mi_range(n, probe_degree)
            if mi_deg(h) + mi_deg(a) <= probe_degree]
    for f in mons:
        for g in mons:
            for k in range(t1.N + 1):
                d = (t1.C[k].apply(f, g) - t2.C[k].apply(f, g)).truncate(up_to)
                if not d.is_zero():
                    return False
    return True


def ops_agree(A, B, probe_degree, up_to=None):
    """Compare NuDiffOps by action on monomials."""
    if A.N != B.N or A.n != B.n:
        return False
    n, D = A.n, min(A.D, B.D)
    if up_to is None:
        up_to = D - A.N
    mons = [Jet.monomial(h, a, n, D)
            for h in mi_range(n, probe_degree) for a in mi_range(n, probe_degree)
            if mi_deg(h) + mi_deg(a) <= probe_degree]
    for f in mons:
        for i in range(A.N + 1):
            d = (A.orders[i].apply(f) - B.orders[i].apply(f)).truncate(up_to)
            if not d.is_zero():
                return False
    return True


# ---------------------------------------------------------------------------
# serialization

def star_table_to_json(t):
    coeffs = []
    for k, op in enumerate(t.C):
        terms = []
        for coeff, fh, fa, gh, ga in op.terms:
            terms.append({"coeff": jet_to_json(coeff),
                          "f_dz": list(fh), "f_dzbar": list(fa),
                          "g_dz": list(gh), "g_dzbar": list(ga)})
        coeffs.append({"k": k, "terms": terms})
    return {"order": t.N, "convention": t.convention, "label": t.label,
            "coefficients": coeffs}


def star_table_from_json(obj, n=None, D=None):
    N = obj["order"]
    C = []
    for entry in sorted(obj["coefficients"], key=lambda e: e["k"]):
        terms = []
        for tm in entry["terms"]:
            coeff = jet_from_json(tm["coeff"])
            n = coeff.n if n is None else n
            D = coeff.max_degree if D is None else D
            terms.append((coeff, tuple(tm["f_dz"]), tuple(tm["f_dzbar"]),
                          tuple(tm["g_dz"]), tuple(tm["g_dzbar"])))
        if n is None:
            raise ValueError("cannot infer dimensions from an empty table")
        C.append(BiDiffOp(n, D, terms))
    return StarTable(N=N, C=C, convention=obj["convention"],
                     label=obj.get("label", ""))
