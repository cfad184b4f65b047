"""Numerical Berezin-Toeplitz quantization on the sphere.

Affine chart z, Kaehler form i dz^dzbar/(1+|z|^2)^2, volume 2 pi.  Holomorphic
sections of the m-th power of the quantizing bundle are polynomials of degree
at most m; the monomial z^k has exact squared norm 2 pi k!(m-k)!/(m+1)!.  All
"exact" paths run through rational Beta integrals and convert to floats once.

Documented sign constants (pinned by the Tuynman and commutator decay tests):
  * Laplacian: Delta f = (1+|z|^2)^2 d^2 f / dz dzbar;
  * Poisson bracket: {f, g} = i (1+|z|^2)^2 (f_zbar g_z - f_z g_zbar);
  * Hamiltonian field at level m: X^z = i f_zbar (1+|z|^2)^2 / (2m),
    the unique scaling for which the quantization operator equals
    i T_{f - Delta f/(2m)} exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np


class UnboundedSymbol(ValueError):
    """Symbol term violates the boundedness constraint a+b <= 2c."""


class QuadratureTolerance(ArithmeticError):
    """Grid refinement changed the result by more than the tolerance."""


class ResourceGuard(ValueError):
    """Request exceeds the supported problem size."""


TWO_PI = 2 * math.pi


# ---------------------------------------------------------------------------
# observables

@dataclass(frozen=True)
class ObservableFn:
    """Sum of terms coeff * z^a zbar^b (1+|z|^2)^{-c}, or an opaque callback.

    The term form is closed under products, derivatives, and the Poisson
    bracket, and integrates exactly against the quantization measures.
    """
    terms: tuple = ()            # ((coeff complex, a, b, c), ...)
    callback: object = None      # optional z -> complex, grid-only evaluation

    def __post_init__(self):
        if self.callback is None:
            merged = {}
            for coeff, a, b, c in self.terms:
                if a + b > 2 * c:
                    raise UnboundedSymbol(
                        f"term z^{a} zbar^{b} (1+zz)^-{c} is unbounded")
                key = (a, b, c)
                merged[key] = merged.get(key, 0) + complex(coeff)
            canon = tuple((v, *k) for k, v in sorted(merged.items())
                          if v != 0)
            object.__setattr__(self, "terms", canon)

    @staticmethod
    def constant(c):
        return ObservableFn(terms=((complex(c), 0, 0, 0),))

    def is_real(self):
        lookup = {(a, b, c): coeff for coeff, a, b, c in self.terms}
        for coeff, a, b, c in self.terms:
            if not np.isclose(lookup.get((b, a, c), 0), coeff.conjugate()):
                return False
        return True

    def __add__(self, other):
        return ObservableFn(terms=self.terms + other.terms)

    def scale(self, c):
        return ObservableFn(terms=tuple((coeff * c, a, b, k)
                                        for coeff, a, b, k in self.terms))

    def __mul__(self, other):
        out = []
        for c1, a1, b1, k1 in self.terms:
            for c2, a2, b2, k2 in other.terms:
                out.append((c1 * c2, a1 + a2, b1 + b2, k1 + k2))
        return ObservableFn(terms=tuple(out))

    def conj(self):
        return ObservableFn(terms=tuple((coeff.conjugate(), b, a, c)
                                        for coeff, a, b, c in self.terms))

    def _diff_terms(self, kind):
        """Raw term list of d/dz (holo) or d/dzbar (anti); may be unbounded."""
        return _diff_raw(self.terms, kind)

    def __call__(self, z):
        if self.callback is not None:
            return self.callback(z)
        t = (z * np.conjugate(z)).real
        s = 1.0 / (1.0 + t)
        out = 0.0 + 0.0j
        for coeff, a, b, c in self.terms:
            out = out + coeff * z ** a * np.conjugate(z) ** b * s ** c
        return out

    def sup_norm(self, samples=4096):
        """Supremum over a deterministic sphere sample (exact for constants)."""
        if self.callback is None and all(a == b == 0 for _, a, b, _ in self.terms):
            return max(abs(sum(co * 1.0 for co, _, _, _ in self.terms)), 0.0)
        rng = np.random.default_rng(7)
        cth = rng.uniform(-1, 1, samples)
        phi = rng.uniform(0, TWO_PI, samples)
        t = (1 - cth) / (1 + cth)
        z = np.sqrt(t) * np.exp(1j * phi)
        return float(np.max(np.abs(self(z))))


def _diff_raw(raw, kind):
    out = []
    for coeff, a, b, c in raw:
        if kind == "holo":
            if a:
                out.append((coeff * a, a - 1, b, c))
            if c:
                out.append((-coeff * c, a, b + 1, c + 1))
        else:
            if b:
                out.append((coeff * b, a, b - 1, c))
            if c:
                out.append((-coeff * c, a + 1, b, c + 1))
    return out


def multiply_by_one_plus_t_sq(raw):
    """(1+|z|^2)^2 times a raw term list: c -> c - 2."""
    return [(coeff, a, b, c - 2) for coeff, a, b, c in raw]


def reduce_terms(raw):
    """Rewrite to min(a, b) = 0 via |z|^2 (1+|z|^2)^{-c} =
    (1+|z|^2)^{-(c-1)} - (1+|z|^2)^{-c}, exposing cancellations."""
    merged = {}
    for coeff, a, b, c in raw:
        d = min(a, b)
        for i in range(d + 1):
            key = (a - d, b - d, c - i)
            val = coeff * ((-1) ** (d - i)) * math.comb(d, i)
            merged[key] = merged.get(key, 0) + val
    return [(v, *k) for k, v in sorted(merged.items()) if v != 0]


def laplacian_fn(f):
    """Delta f = (1+t)^2 f_{z zbar} within the symbol class."""
    raw = _diff_raw(_diff_raw(f.terms, "holo"), "anti")
    return ObservableFn(terms=tuple(reduce_terms(multiply_by_one_plus_t_sq(raw))))


def poisson_bracket_fn(f, g):
    """{f, g} = i (1+t)^2 (f_zbar g_z - f_z g_zbar); raises UnboundedSymbol
    when the result leaves the symbol class."""
    fa, fh = f._diff_terms("anti"), f._diff_terms("holo")
    ga, gh = g._diff_terms("anti"), g._diff_terms("holo")
    raw = []
    for c1, a1, b1, k1 in fa:
        for c2, a2, b2, k2 in gh:
            raw.append((1j * c1 * c2, a1 + a2, b1 + b2, k1 + k2))
    for c1, a1, b1, k1 in fh:
        for c2, a2, b2, k2 in ga:
            raw.append((-1j * c1 * c2, a1 + a2, b1 + b2, k1 + k2))
    return ObservableFn(terms=tuple(reduce_terms(multiply_by_one_plus_t_sq(raw))))


def height_observable():
    """(1 - |z|^2)/(1 + |z|^2), the third sphere coordinate."""
    return ObservableFn(terms=((1.0, 0, 0, 1), (-1.0, 1, 1, 1)))


def coord_x_observable():
    """(z + zbar)/(1 + |z|^2), the first sphere coordinate."""
    return ObservableFn(terms=((1.0, 1, 0, 1), (1.0, 0, 1, 1)))


# ---------------------------------------------------------------------------
# context

@dataclass(frozen=True)
class QuadGrid:
    c: np.ndarray        # Gauss-Legendre nodes in cos(theta)
    w_c: np.ndarray
    phi: np.ndarray      # uniform azimuth
    z: np.ndarray        # flattened chart points
    w: np.ndarray        # flattened weights, sum = 2 pi (total volume)


@dataclass(frozen=True)
class Cp1Context:
    m: int
    dim: int
    norms_over_2pi: tuple      # exact Fractions; norms[k] = 2 pi * this
    quad: QuadGrid
    vol: float = TWO_PI

    @property
    def norms(self):
        return [TWO_PI * float(fr) for fr in self.norms_over_2pi]


def _build_grid(m, nodes=None):
    K = nodes or 2 * (m + 3)
    c, w_c = np.polynomial.legendre.leggauss(K)
    phi = TWO_PI * (np.arange(K) + 0.5) / K
    C, PHI = np.meshgrid(c, phi, indexing="ij")
    T = (1 - C) / (1 + C)
    Z = np.sqrt(T) * np.exp(1j * PHI)
    W = np.outer(w_c * 0.5, np.full(K, TWO_PI / K))
    return QuadGrid(c=c, w_c=w_c, phi=phi, z=Z.ravel(), w=W.ravel())


def make_context(m, quad_nodes=None):
    if m < 1:
        raise ValueError("level m must be >= 1")
    norms = tuple(Fraction(math.factorial(k) * math.factorial(m - k),
                           math.factorial(m + 1)) for k in range(m + 1))
    return Cp1Context(m=m, dim=m + 1, norms_over_2pi=norms,
                      quad=_build_grid(m, quad_nodes))


def _section_matrix(ctx, z=None):
    """S[l, node] = z^l (1+|z|^2)^{-m/2} / sqrt(norm_l), stable recurrence."""
    m = ctx.m
    if z is None:
        z = ctx.quad.z
    z = np.asarray(z, dtype=complex)
    t = (z * z.conjugate()).real
    s = 1.0 / (1.0 + t)
    S = np.empty((m + 1,) + z.shape, dtype=complex)
    S[0] = math.sqrt((m + 1) / TWO_PI) * s ** (m / 2)
    for l in range(m):
        S[l + 1] = S[l] * z * math.sqrt((m - l) / (l + 1))
    return S


# ---------------------------------------------------------------------------
# Toeplitz matrices

def toeplitz_matrix(f, ctx, tol=1e-8):
    """Matrix of compress(f . ) in the orthonormal monomial basis."""
    if f.callback is not None:
        return _toeplitz_quadrature(f, ctx, tol)
    m = ctx.m
    A = np.zeros((m + 1, m + 1), dtype=complex)
    for coeff, a, b, c in f.terms:
        for j in range(m + 1):
            k = j + b - a
            if not 0 <= k <= m:
                continue
            p = j + b
            integral = Fraction(math.factorial(p) * math.factorial(m + c - p),
                                math.factorial(m + c + 1))
            # exact rational integral / sqrt(n_j n_k), one float conversion
            A[j, k] += coeff * float(integral) / math.sqrt(
                float(ctx.norms_over_2pi[j]) * float(ctx.norms_over_2pi[k]))
    return A


def _toeplitz_quadrature(f, ctx, tol):
    def assemble(grid_nodes):
        grid = _build_grid(ctx.m, grid_nodes)
        S = _section_matrix(ctx, grid.z)
        fv = np.asarray(f(grid.z), dtype=complex)
        return (np.conjugate(S) * (fv * grid.w)) @ S.T

    K = len(ctx.quad.c)
    A1 = assemble(K)
    A2 = assemble(K + 8)
    if np.max(np.abs(A1 - A2)) > tol:
        raise QuadratureTolerance(
            f"toeplitz entries changed by more than {tol} under refinement")
    return A2


def operator_norm(A):
    return float(np.linalg.norm(A, 2))


# ---------------------------------------------------------------------------
# coherent states and symbols

def coherent_vector(z0, ctx, fiber_scale=1.0):
    """Reproducing vector at the chart point z0 for the unit-norm frame;
    rescaling the frame by c multiplies the vector by conj(c)^m."""
    S = _section_matrix(ctx, np.asarray([z0], dtype=complex))[:, 0]
    return np.conjugate(S) * (np.conjugate(fiber_scale) ** ctx.m)


def covariant_symbol(A, z0, ctx):
    e = coherent_vector(z0, ctx)
    denom = np.vdot(e, e).real
    return complex(np.vdot(e, A @ e) / denom)


def berezin_transform_num(f, z0, ctx):
    return covariant_symbol(toeplitz_matrix(f, ctx), z0, ctx)


def epsilon_function(z0, ctx):
    """Rawnsley density; equals (m+1)/(2 pi) everywhere on the sphere."""
    e = coherent_vector(z0, ctx)
    u = np.vdot(e, e).real
    # pointwise metric density of the coherent section at its own point
    S = _section_matrix(ctx, np.asarray([z0], dtype=complex))[:, 0]
    hval = abs(np.dot(e, S)) ** 2 / u
    return float(hval)


def integral_exact(f):
    """Exact rational evaluation of the volume integral of a symbol-class f
    (divided by nothing; total measure 2 pi)."""
    out = 0.0
    for coeff, a, b, c in f.terms:
        if a != b:
            continue
        out += coeff * TWO_PI * float(
            Fraction(math.factorial(a) * math.factorial(c - a),
                     math.factorial(c + 1)))
    return out


def trace_identity(f, ctx):
    lhs = complex(np.trace(toeplitz_matrix(f, ctx)))
    rhs = (ctx.dim / TWO_PI) * integral_exact(f)
    return lhs, rhs, abs(lhs - rhs)


def adjointness_check(A, f, ctx):
    """|Tr(A^dag T_f) - integral of conj(symbol(A)) f against the epsilon
    measure|, the symbol integral by quadrature."""
    lhs = complex(np.trace(A.conj().T @ toeplitz_matrix(f, ctx)))
    S = _section_matrix(ctx)
    E = np.conjugate(S)                        # coherent vectors per node
    u = np.sum((E * np.conjugate(E)).real, axis=0)
    sigma = np.einsum("in,ij,jn->n", np.conjugate(E), A, E) / u
    fv = np.asarray(f(ctx.quad.z), dtype=complex)
    eps = ctx.dim / TWO_PI
    rhs = np.sum(np.conjugate(sigma) * fv * eps * ctx.quad.w)
    return abs(lhs - rhs)


def contravariant_reconstruct(f, ctx, tol=None):
    """Norm defect of rebuilding T_f from coherent projectors weighted by f."""
    S = _section_matrix(ctx)
    E = np.conjugate(S)
    u = np.sum((E * np.conjugate(E)).real, axis=0)
    fv = np.asarray(f(ctx.quad.z), dtype=complex)
    eps = ctx.dim / TWO_PI
    weights = fv * eps * ctx.quad.w / u
    B = (E * weights) @ E.conj().T
    defect = operator_norm(B - toeplitz_matrix(f, ctx))
    if tol is not None and defect > tol:
        raise QuadratureTolerance(
            f"reconstruction defect {defect:.2e} exceeds {tol:.2e}")
    return defect


def twisted_product(f, g, z0, ctx, path="matrix"):
    """Covariant symbol of T_f T_g at z0."""
    Tf = toeplitz_matrix(f, ctx)
    Tg = toeplitz_matrix(g, ctx)
    if path == "matrix":
        return covariant_symbol(Tf @ Tg, z0, ctx)
    if path != "integral":
        raise ValueError(f"unknown path {path!r}")
    # two-point integral form, regrouped through the resolution of identity
    # so no antipodal exclusion is needed (excluded-pair count: 0)
    e = coherent_vector(z0, ctx)
    ux = np.vdot(e, e).real
    S = _section_matrix(ctx)
    E = np.conjugate(S)
    u = np.sum((E * np.conjugate(E)).real, axis=0)
    eps = ctx.dim / TWO_PI
    left = np.conjugate(e) @ (Tf @ E)          # <e_x, T_f e_y> per node
    right = np.einsum("in,i->n", np.conjugate(E), Tg @ e)
    val = np.sum(left * right * eps * ctx.quad.w / u) / ux
    return complex(val)


# ---------------------------------------------------------------------------
# geometric quantization

def geometric_quantization(f, ctx, tol=1e-8):
    """Matrix of compress(covariant derivative along the Hamiltonian field
    plus i f) in the orthonormal basis, by quadrature."""
    m = ctx.m

    def assemble(grid_nodes):
        grid = _build_grid(m, grid_nodes)
        z = grid.z
        t = (z * z.conjugate()).real
        s = 1.0 / (1.0 + t)
        S = _section_matrix(ctx, z)
        fzbar_terms = f._diff_terms("anti")
        fzbar = _eval_raw_terms(fzbar_terms, z)
        Xz = 1j * fzbar / (s * s) / (2 * m)
        fv = np.asarray(f(z), dtype=complex)
        G = np.empty_like(S)
        for k in range(m + 1):
            lower = S[k - 1] * math.sqrt((m - k + 1) / k) if k else 0.0
            G[k] = Xz * (k * lower - m * np.conjugate(z) * s * S[k]) \
                + 1j * fv * S[k]
        return np.conjugate(S) @ (G * grid.w).T

    K = len(ctx.quad.c)
    Q1 = assemble(K)
    Q2 = assemble(K + 8)
    if np.max(np.abs(Q1 - Q2)) > tol:
        raise QuadratureTolerance(
            f"quantization entries changed by more than {tol} under refinement")
    return Q2


def _eval_raw_terms(raw, z):
    t = (z * z.conjugate()).real
    s = 1.0 / (1.0 + t)
    out = np.zeros(z.shape, dtype=complex)
    for coeff, a, b, c in raw:
        out = out + coeff * z ** a * np.conjugate(z) ** b * s ** c
    return out


def tuynman_defect(f, ctx):
    """Norm of Q_f - i T_{f - Delta f/(2m)}; zero up to quadrature error."""
    Q = geometric_quantization(f, ctx)
    corrected = f + laplacian_fn(f).scale(-1.0 / (2 * ctx.m))
    return operator_norm(Q - 1j * toeplitz_matrix(corrected, ctx))


# ---------------------------------------------------------------------------
# asymptotic harness

@dataclass(frozen=True)
class AsymSeries:
    points: tuple                 # ((m, value), ...)
    fit: tuple                    # (limit, slope, residual)

    @staticmethod
    def from_points(points):
        """Power-law fit of a decaying defect series.

        limit: least-squares prefactor C of value ~ C m^slope;
        slope: asymptotic exponent, estimated from consecutive pairwise
        log-log slopes extrapolated linearly in 1/m (a C m^s (1 + O(1/m))
        series has pairwise slopes s + O(1/m), so the intercept recovers s);
        residual: rms of the plain log-log least-squares fit.
        """
        pts = tuple((int(m), float(v)) for m, v in points)
        usable = [(m, v) for m, v in pts if v > 0]
        if len(usable) < 2:
            return AsymSeries(points=pts, fit=(0.0, 0.0, 0.0))
        lm = np.log([m for m, _ in usable])
        lv = np.log([v for _, v in usable])
        ols_slope, intercept = np.polyfit(lm, lv, 1)
        resid = float(np.sqrt(np.mean((lv - (ols_slope * lm + intercept)) ** 2)))
        pair_slopes = (lv[1:] - lv[:-1]) / (lm[1:] - lm[:-1])
        inv_m = np.exp(-(lm[1:] + lm[:-1]) / 2)
        if len(pair_slopes) >= 2:
            _, slope = np.polyfit(inv_m, pair_slopes, 1)
        else:
            slope = pair_slopes[0]
        return AsymSeries(points=pts,
                          fit=(float(np.exp(intercept)), float(slope), resid))


def bms_suite(f, g, m_list):
    """Semiclassical defect series: norm lower bound, commutator vs bracket,
    and product vs pointwise product, each with a log-log fit."""
    br = poisson_bracket_fn(f, g)
    pa, pb, pc = [], [], []
    sup_f = f.sup_norm()
    for m in m_list:
        ctx = make_context(m)
        Tf = toeplitz_matrix(f, ctx)
        Tg = toeplitz_matrix(g, ctx)
        pa.append((m, sup_f - operator_norm(Tf)))
        comm = m * 1j * (Tf @ Tg - Tg @ Tf) - toeplitz_matrix(br, ctx)
        pb.append((m, operator_norm(comm)))
        pc.append((m, operator_norm(Tf @ Tg - toeplitz_matrix(f * g, ctx))))
    return (AsymSeries.from_points(pa), AsymSeries.from_points(pb),
            AsymSeries.from_points(pc))


def berezin_defect_series(f, lap_f, sample_points, m_list):
    """Points (m, max_z |m (I_m f - f)(z) - Delta f(z)|) with a log-log fit."""
    pts = []
    for m in m_list:
        ctx = make_context(m)
        Tf = toeplitz_matrix(f, ctx)
        worst = 0.0
        for z0 in sample_points:
            val = covariant_symbol(Tf, z0, ctx)
            defect = abs(m * (val - f(complex(z0))) - lap_f(complex(z0)))
            worst = max(worst, defect)
        pts.append((m, worst))
    return AsymSeries.from_points(pts)


def surjectivity_rank(ctx):
    """Rank of the span of Toeplitz matrices of the (m+1)^2 basis symbols."""
    m = ctx.m
    if m > 8:
        raise ResourceGuard("surjectivity scan limited to m <= 8")
    rows = []
    for a in range(m + 1):
        for b in range(m + 1):
            f = ObservableFn(terms=((1.0, a, b, max(a, b)),))
            rows.append(toeplitz_matrix(f, ctx).ravel())
    return int(np.linalg.matrix_rank(np.array(rows), tol=1e-9))
