"""Separation-of-variables star products from a formal Kaehler potential.

The left multiplication operator L_g is solved order by order in nu from the
requirement that it commutes with the right multiplication operators
R_l = dPhi/dzbar_l + d/dzbar_l.  Multiplying the commutation equation through
by nu couples each new holomorphic-derivative block against the invertible
leading Hessian, giving a triangular exact solve per order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .jets import (
    DegenerateMetric, Jet, ONE, Scalar, ZERO,
    metric_from_potential, mi_add, mi_binom, mi_deg, mi_falling, mi_le,
    mi_range, mi_sub, mi_zero, mi_fact, unit_mi, _const_matrix_inverse,
)
from .formal import (
    BiDiffOp, BudgetExceeded, DiffOp, NuDiffOp, StarTable,
    conjugate_star, detect_convention, transform_from_star,
)


@dataclass
class FormalPotential:
    phi_minus1: Jet
    phi: list = field(default_factory=list)   # Phi_0, Phi_1, ... as Jets

    @property
    def n(self):
        return self.phi_minus1.n

    @property
    def D(self):
        return self.phi_minus1.max_degree

    def phi_k(self, k):
        """Phi_k for k >= 0, zero jet when absent."""
        if 0 <= k < len(self.phi):
            return self.phi[k]
        return Jet.zero(self.n, self.D)


# ---------------------------------------------------------------------------
# reference potentials

def flat_potential(D, n=1, weights=None):
    """Phi = sum w_i z_i zbar_i (weights default to 1)."""
    weights = weights or [1] * n
    phi = Jet.zero(n, D)
    for i, w in enumerate(weights):
        phi = phi + (Jet.variable(i, n, D) * Jet.variable(i, n, D, "anti")).scale(w)
    return FormalPotential(phi_minus1=phi)


def fs_potential(D):
    """Phi = log(1 + z zbar) truncated at D (n = 1)."""
    t = Jet.variable(0, 1, D) * Jet.variable(0, 1, D, "anti")
    out = Jet.zero(1, D)
    power = Jet.constant(1, 1, D)
    for j in range(1, D // 2 + 1):
        power = power * t
        out = out + power.scale(Scalar(Fraction((-1) ** (j + 1), j)))
    return FormalPotential(phi_minus1=out)


def reference_potentials(D):
    return {
        "flat": flat_potential(D),
        "fs": fs_potential(D),
        "aniso": flat_potential(D, n=2, weights=[1, 2]),
    }


# ---------------------------------------------------------------------------
# exact linear algebra helper

class _ConstSolver:
    """Exact solver for a fixed Scalar matrix M0 (full column rank required).

    Precomputes row-reduction transforms so that repeated solves against
    jet-valued right-hand sides stay cheap and exact.
    """

    def __init__(self, rows, ncols):
        nrows = len(rows)
        aug = [[rows[r][c] for c in range(ncols)]
               + [ONE if j == r else ZERO for j in range(nrows)]
               for r in range(nrows)]
        pivot_rows = []
        used = set()
        for col in range(ncols):
            piv = None
            for r in range(nrows):
                if r in used:
                    continue
                if not aug[r][col].is_zero():
                    piv = r
                    break
            if piv is None:
                raise ArithmeticError("underdetermined block in the recursion")
            used.add(piv)
            inv_p = ONE / aug[piv][col]
            aug[piv] = [x * inv_p for x in aug[piv]]
            for r in range(nrows):
                if r == piv:
                    continue
                fac = aug[r][col]
                if fac.is_zero():
                    continue
                aug[r] = [x - fac * y for x, y in zip(aug[r], aug[piv])]
            pivot_rows.append(piv)
        self.ncols = ncols
        self.nrows = nrows
        # x_col = sum_r transform[col][r] * v_r
        self.transform = [aug[pivot_rows[c]][ncols:] for c in range(ncols)]
        self.null_rows = [aug[r][ncols:] for r in range(nrows) if r not in used]

    def solve(self, v_jets, n, D, check_degree=None):
        out = []
        for c in range(self.ncols):
            acc = Jet.zero(n, D)
            for r, s in enumerate(self.transform[c]):
                if s.is_zero():
                    continue
                acc = acc + v_jets[r].scale(s)
            out.append(acc)
        if check_degree is not None and check_degree >= 0:
            for row in self.null_rows:
                acc = Jet.zero(n, D)
                for r, s in enumerate(row):
                    if s.is_zero():
                        continue
                    acc = acc + v_jets[r].scale(s)
                if not acc.truncate(check_degree).is_zero():
                    raise ArithmeticError("inconsistent block in the recursion")
        return out


# ---------------------------------------------------------------------------
# left multiplication operator

def left_mult_operator(g_series, P, N, verify=True):
    """L_g for a nu-series g (list of Jets), as a NuDiffOp through nu^N."""
    n, D = P.n, P.D
    if D < 3 * N:
        raise BudgetExceeded(f"degree budget D={D} below 3N={3 * N}")
    if isinstance(g_series, Jet):
        g_series = [g_series]
    gs = list(g_series) + [Jet.zero(n, D)] * (N + 1 - len(g_series))

    # right-multiplication data, graded after multiplying through by nu:
    # nu R_l = w_{-1,l} + nu (w_{0,l} + d/dzbar_l) + nu^2 w_{1,l} + ...
    w_lead = [P.phi_minus1.diff(l, "anti") for l in range(n)]
    G = [[P.phi_minus1.diff(j, "holo").diff(l, "anti") for l in range(n)]
         for j in range(n)]
    G0 = [[G[j][l].constant_term() for l in range(n)] for j in range(n)]
    try:
        _const_matrix_inverse(G0)
    except DegenerateMetric:
        raise DegenerateMetric("leading potential has a degenerate Hessian")

    def rho(j, l):
        if j == 0:
            return DiffOp.mult(w_lead[l])
        op = DiffOp.mult(P.phi_k(j - 1).diff(l, "anti"))
        if j == 1:
            op = op + DiffOp.deriv(n, D, mi_zero(n), unit_mi(n, l))
        return op

    solvers = {}

    def solver_for(s):
        """Constant-part solver for the exact-degree-s unknown block."""
        if s in solvers:
            return solvers[s]
        betas = [b for b in mi_range(n, s - 1) if mi_deg(b) == s - 1]
        alphas = [a for a in mi_range(n, s) if mi_deg(a) == s]
        rows = []
        for l in range(n):
            for beta in betas:
                row = []
                for alpha in alphas:
                    entry = ZERO
                    if mi_le(beta, alpha) and mi_deg(mi_sub(alpha, beta)) == 1:
                        j = mi_sub(alpha, beta).index(1)
                        entry = G0[j][l] * (beta[j] + 1)
                    row.append(entry)
                rows.append(row)
        solvers[s] = (_ConstSolver(rows, len(alphas)), betas, alphas)
        return solvers[s]

    A = [DiffOp.mult(gs[0])]
    Bs = [DiffOp.zero(n, D)]
    for m in range(1, N + 1):
        # RHS of [B_m, w_{-1,l} .] = -sum_{k<m} [A_k, rho_{m-k,l}]
        rhs_ops = []
        for l in range(n):
            acc = DiffOp.zero(n, D)
            for k in range(m):
                r = rho(m - k, l)
                acc = acc + (A[k].compose(r) - r.compose(A[k]))
            acc = -acc
            for _, h, a in acc.terms:
                if mi_deg(a) > 0:
                    raise ArithmeticError(
                        "recursion right-hand side is not holomorphic")
            rhs_ops.append({h: c for c, h, a_ in acc.terms})
        coeffs = {}
        for s in range(m, 0, -1):
            solver, betas, alphas = solver_for(s)
            # equation RHS with solved higher-order contributions removed
            v = []
            for l in range(n):
                for beta in betas:
                    val = rhs_ops[l].get(beta, Jet.zero(n, D))
                    for alpha, c in coeffs.items():
                        gamma = mi_sub(alpha, beta)
                        if mi_deg(alpha) <= s or not mi_le(beta, alpha):
                            continue
                        val = val - (c * w_lead[l].diff_multi(gamma, mi_zero(n))
                                     ).scale(mi_binom(alpha, gamma))
                    v.append(val)
            # split jet-valued system into constant part plus perturbation;
            # the perturbation has positive valuation, so fixed-point
            # iteration terminates in the truncated ring
            x = solver.solve(v, n, D, check_degree=None)
            for _ in range(D + 1):
                v2 = []
                i = 0
                for l in range(n):
                    for beta in betas:
                        pert = Jet.zero(n, D)
                        for ci, alpha in enumerate(alphas):
                            if mi_le(beta, alpha) and mi_deg(mi_sub(alpha, beta)) == 1:
                                j = mi_sub(alpha, beta).index(1)
                                h = G[j][l] - Jet.constant(G0[j][l], n, D)
                                pert = pert + (h * x[ci]).scale(beta[j] + 1)
                        v2.append(v[i] - pert)
                        i += 1
                x_new = solver.solve(v2, n, D,
                                     check_degree=D - (m + 2))
                if all(a == b for a, b in zip(x, x_new)):
                    x = x_new
                    break
                x = x_new
            for ci, alpha in enumerate(alphas):
                if not x[ci].is_zero():
                    coeffs[alpha] = x[ci]
        B_m = DiffOp(n, D, [(c, alpha, mi_zero(n)) for alpha, c in coeffs.items()])
        Bs.append(B_m)
        A.append(DiffOp.mult(gs[m]) + B_m)

    L = NuDiffOp(n, D, N, A)
    if verify:
        _verify_commutation(L, P, rho, N, n, D)
    return L


def _verify_commutation(L, P, rho, N, n, D):
    """Residual check: [L, nu R_l] vanishes through nu^N on the reliable
    degree window (exact for polynomial potentials)."""
    window = D - (2 * N + 2)
    if window < 0:
        return
    for l in range(n):
        for m in range(N + 1):
            acc = DiffOp.zero(n, D)
            for k in range(m + 1):
                r = rho(m - k, l)
                acc = acc + (L.orders[k].compose(r) - r.compose(L.orders[k]))
            for c, h, a in acc.terms:
                if not c.truncate(window).is_zero():
                    raise ArithmeticError(
                        f"left multiplication operator fails commutation at nu^{m}")


# ---------------------------------------------------------------------------
# star product assembly

def karabegov_star(P, N, label=None):
    """Anti-Wick star table through nu^N from a formal potential."""
    n, D = P.n, P.D
    cut = D - (N + 2)
    Ls = {}
    for beta in mi_range(n, N):
        f = Jet.monomial(mi_zero(n), beta, n, D)
        Ls[beta] = left_mult_operator([f], P, N, verify=False)

    C = [BiDiffOp.pointwise(n, D)]
    for k in range(1, N + 1):
        # B_k for f = zbar^beta' determines a^k_{alpha,beta} triangularly
        a_coeffs = {}
        for beta_p in mi_range(n, k):
            bmap = {}
            for c, h, a in Ls[beta_p].orders[k].terms:
                bmap[h] = c
            seen_alphas = set(bmap) | {al for (al, _) in a_coeffs}
            for alpha in seen_alphas:
                val = bmap.get(alpha, Jet.zero(n, D))
                for (al, beta), acf in list(a_coeffs.items()):
                    if al != alpha or not mi_le(beta, beta_p) or beta == beta_p:
                        continue
                    mono = Jet.monomial(mi_zero(n), mi_sub(beta_p, beta), n, D,
                                        Scalar(mi_falling(beta_p, beta)))
                    val = val - acf * mono
                val = val.scale(ONE / Scalar(mi_fact(beta_p)))
                if not val.is_zero():
                    a_coeffs[(alpha, beta_p)] = val
        terms = []
        for (alpha, beta), c in a_coeffs.items():
            c_cut = Jet(n, D, {key: v for key, v in c.terms.items()
                               if mi_deg(key[0]) + mi_deg(key[1]) <= cut})
            if not c_cut.is_zero():
                terms.append((c_cut, mi_zero(n), beta, alpha, mi_zero(n)))
        C.append(BiDiffOp(n, D, terms))
    t = StarTable(N=N, C=C, convention="karabegov_anti_wick",
                  label=label or "karabegov")
    t.check_convention()
    return t


def berezin_transform_of_star(t):
    """Formal Berezin transform of an anti-Wick table."""
    return transform_from_star(t)


def bt_star_from(P, N, label=None):
    """Berezin-Toeplitz star table: f * g = I^{-1}(I(f) *_B I(g))."""
    t = karabegov_star(P, N)
    Iop = transform_from_star(t)
    bt = conjugate_star(t, Iop)
    # conjugation composes up to 2N derivatives of coefficients that are
    # themselves truncations; zero out the unreliable top strata so that the
    # Wick-type cancellations are visible to the structural checks
    cut = P.D - (3 * N + 2)
    C = []
    for op in bt.C:
        terms = []
        for c, fh, fa, gh, ga in op.terms:
            c_cut = Jet(P.n, P.D, {key: v for key, v in c.terms.items()
                                   if mi_deg(key[0]) + mi_deg(key[1]) <= cut})
            if not c_cut.is_zero():
                terms.append((c_cut, fh, fa, gh, ga))
        C.append(BiDiffOp(P.n, P.D, terms))
    conv = detect_convention(C)
    out = StarTable(N=N, C=C, convention=conv, label=label or "berezin-toeplitz")
    return out
