"""Graph-expansion star products.

Two families:
  * admissible directed graphs on R^d with numerically integrated
    upper-half-plane angle weights (orders n <= 2);
  * weighted acyclic source/sink graphs whose contractions against a Kaehler
    metric reproduce the recursion-built star product through nu^2.

Sign bookkeeping (documented constants):
  * the angle form of an edge is d phi(z, w) with
    phi(z, w) = Im[log(w - z) - log(w - zbar)];
  * reported weights use the canonical per-vertex edge order L < R < 1 < 2 ...
    (swapping a vertex's two edges flips both the weight and the operator
    sign, so the product w * D is order independent); the star assembly
    multiplies the edge-order parity back in;
  * order-n term prefactor is (i nu / 2)^n.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .formal import BiDiffOp, StarTable, detect_convention
from .jets import Jet, ONE, Scalar, mi_zero


L = -1
R = -2


class ResourceGuard(ValueError):
    """Request exceeds the supported enumeration/integration size."""


class IntegrationFailure(ArithmeticError):
    """Weight integration error estimate exceeds the configured tolerance."""


class CrossCheckFailure(ArithmeticError):
    """Graph expansion disagrees with the recursion-built product."""


# ---------------------------------------------------------------------------
# polynomials on R^d (float/complex coefficients)

class Poly:
    """Polynomial in x_1..x_d with complex coefficients; dict exponent->coeff."""

    __slots__ = ("d", "coeffs")

    def __init__(self, d, coeffs=None):
        self.d = d
        self.coeffs = {}
        if coeffs:
            for k, v in coeffs.items():
                if v != 0:
                    self.coeffs[tuple(k)] = self.coeffs.get(tuple(k), 0) + v
            self.coeffs = {k: v for k, v in self.coeffs.items() if v != 0}

    @staticmethod
    def constant(c, d):
        return Poly(d, {(0,) * d: c})

    @staticmethod
    def variable(i, d):
        e = tuple(1 if j == i else 0 for j in range(d))
        return Poly(d, {e: 1.0})

    def __add__(self, other):
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, 0) + v
        return Poly(self.d, out)

    def __neg__(self):
        return Poly(self.d, {k: -v for k, v in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, (int, float, complex)):
            return Poly(self.d, {k: v * other for k, v in self.coeffs.items()})
        out = {}
        for k1, v1 in self.coeffs.items():
            for k2, v2 in other.coeffs.items():
                k = tuple(a + b for a, b in zip(k1, k2))
                out[k] = out.get(k, 0) + v1 * v2
        return Poly(self.d, out)

    __rmul__ = __mul__

    def diff(self, i):
        out = {}
        for k, v in self.coeffs.items():
            if k[i] == 0:
                continue
            k2 = tuple(e - 1 if j == i else e for j, e in enumerate(k))
            out[k2] = out.get(k2, 0) + v * k[i]
        return Poly(self.d, out)

    def is_zero(self):
        return not self.coeffs

    def max_abs_coeff(self):
        return max((abs(v) for v in self.coeffs.values()), default=0.0)

    def __eq__(self, other):
        if not isinstance(other, Poly):
            return NotImplemented
        return self.d == other.d and self.coeffs == other.coeffs

    def __repr__(self):
        return f"Poly({self.coeffs!r})"


@dataclass
class PoissonBivector:
    d: int
    alpha: list  # d x d matrix of Poly

    def __post_init__(self):
        for i in range(self.d):
            for j in range(self.d):
                if not (self.alpha[i][j] + self.alpha[j][i]).is_zero():
                    raise ValueError("bivector must be antisymmetric")

    @staticmethod
    def constant(mat):
        d = len(mat)
        alpha = [[Poly.constant(mat[i][j], d) for j in range(d)] for i in range(d)]
        return PoissonBivector(d=d, alpha=alpha)


# ---------------------------------------------------------------------------
# admissible graphs

@dataclass(frozen=True)
class KGraph:
    n: int
    targets: tuple  # per vertex i (1-based), ordered pair of targets

    def __post_init__(self):
        if len(self.targets) != self.n:
            raise ValueError("one target pair per internal vertex")
        for i, (a, b) in enumerate(self.targets, start=1):
            allowed = set(range(1, self.n + 1)) | {L, R}
            allowed.discard(i)
            if a == b or a not in allowed or b not in allowed:
                raise ValueError(f"invalid target pair for vertex {i}")

    def edge_list(self):
        """Edges in per-vertex order: (source, target)."""
        out = []
        for i, (a, b) in enumerate(self.targets, start=1):
            out.append((i, a))
            out.append((i, b))
        return out

    def order_parity(self):
        """+1 if every vertex pair is in canonical order L < R < 1 < 2 .., else
        (-1)^(number of swapped vertices)."""
        sign = 1
        for a, b in self.targets:
            if _target_key(a) > _target_key(b):
                sign = -sign
        return sign

    def canonical(self):
        tg = tuple(tuple(sorted(p, key=_target_key)) for p in self.targets)
        return KGraph(self.n, tg)

    def has_internal_edge(self):
        return any(t >= 1 for p in self.targets for t in p)

    def to_json(self):
        return {"n": self.n, "targets": [list(p) for p in self.targets]}

    @staticmethod
    def from_json(obj):
        return KGraph(obj["n"], tuple(tuple(p) for p in obj["targets"]))


def _target_key(t):
    if t == L:
        return (0, 0)
    if t == R:
        return (0, 1)
    return (1, t)


def enumerate_kgraphs(n):
    """All admissible graphs with n internal vertices, deterministic order."""
    if n > 3:
        raise ResourceGuard("enumeration supported for n <= 3")
    if n == 0:
        return [KGraph(0, ())]
    out = []
    choices = []
    for i in range(1, n + 1):
        allowed = sorted((set(range(1, n + 1)) | {L, R}) - {i})
        pairs = [(a, b) for a in allowed for b in allowed if a != b]
        choices.append(pairs)
    for combo in itertools.product(*choices):
        out.append(KGraph(n, tuple(combo)))
    return out


def d_gamma(G, a, f, g):
    """Bidifferential operator of the graph applied to polynomials f, g.

    Sum over edge labelings of products of alpha factors (differentiated by
    incoming-edge labels) times f, g differentiated by the labels of edges
    into the two external vertices, in the graph's own edge order.
    """
    d = a.d
    edges = G.edge_list()
    total = Poly(d, {})
    for labels in itertools.product(range(d), repeat=len(edges)):
        prod = Poly.constant(1.0, d)
        ok = True
        for i in range(1, G.n + 1):
            la, lb = labels[2 * (i - 1)], labels[2 * (i - 1) + 1]
            factor = a.alpha[la][lb]
            for j, (src, tgt) in enumerate(edges):
                if tgt == i:
                    factor = factor.diff(labels[j])
            if factor.is_zero():
                ok = False
                break
            prod = prod * factor
        if not ok:
            continue
        ff = f
        for j, (src, tgt) in enumerate(edges):
            if tgt == L:
                ff = ff.diff(labels[j])
        if ff.is_zero():
            continue
        gg = g
        for j, (src, tgt) in enumerate(edges):
            if tgt == R:
                gg = gg.diff(labels[j])
        if gg.is_zero():
            continue
        total = total + prod * ff * gg
    return total


# ---------------------------------------------------------------------------
# weight integration

@dataclass(frozen=True)
class IntegrationConfig:
    method: str = "grid"          # "grid" or "mc"
    grid_nodes: int = 800         # per axis, 2D integrals
    grid_nodes_4d: int = 24       # per axis, non-factorizable 4D integrals
    samples: int = 200_000        # Monte Carlo sample count
    eta: float = 0.1              # excision radius (Richardson start)
    seed: int = 20260823
    tol: float = 5e-3

    def key(self):
        return (self.method, self.grid_nodes, self.grid_nodes_4d,
                self.samples, self.eta, self.seed, self.tol)


@dataclass(frozen=True)
class WeightResult:
    value: float
    error_estimate: float
    samples_or_cells: int
    seed: int


_WEIGHT_CACHE = {}


def canonical_hash(G):
    blob = json.dumps(G.canonical().to_json(), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def _grad_phi_boundary(zx, zy, w):
    A = (w - zx) - 1j * zy
    B = (w - zx) + 1j * zy
    dx = np.imag(-1.0 / A + 1.0 / B)
    dy = -np.real(1.0 / A + 1.0 / B)
    return dx, dy


def _grad_phi_full(zx, zy, wx, wy):
    """Gradient of phi(z, w) in (zx, zy, wx, wy) for interior w."""
    A = (wx - zx) + 1j * (wy - zy)
    B = (wx - zx) + 1j * (wy + zy)
    dzx = np.imag(-1.0 / A + 1.0 / B)
    dzy = -np.real(1.0 / A + 1.0 / B)
    dwx = np.imag(1.0 / A - 1.0 / B)
    dwy = np.real(1.0 / A - 1.0 / B)
    return dzx, dzy, dwx, dwy


def _halfplane_grid(M):
    s = (np.arange(M) + 0.5) / M
    u = (np.arange(M) + 0.5) / M
    S, U = np.meshgrid(s, u, indexing="ij")
    X = np.tan(np.pi * (S - 0.5))
    Y = np.tan(np.pi * U / 2)
    W = (np.pi * (1 + X ** 2)) * (np.pi / 2 * (1 + Y ** 2)) / (M * M)
    return X.ravel(), Y.ravel(), W.ravel()


def _pair_integral_2d(p, q, M, eta):
    """int_H d phi(z,p) ^ d phi(z,q) with eta-excision and Richardson in eta."""
    X, Y, W = _halfplane_grid(M)
    d1x, d1y = _grad_phi_boundary(X, Y, p)
    d2x, d2y = _grad_phi_boundary(X, Y, q)
    J = (d1x * d2y - d1y * d2x) * W
    vals = []
    for e in (eta, eta / 2, eta / 4):
        mask = ((X - p) ** 2 + Y ** 2 > e ** 2) & ((X - q) ** 2 + Y ** 2 > e ** 2)
        vals.append(float(np.sum(J * mask)))
    r1 = 2 * vals[1] - vals[0]
    r2 = 2 * vals[2] - vals[1]
    return r2, abs(r2 - r1)


def _vertex_boundary_points(G, i):
    pts = []
    for t in sorted(G.targets[i - 1], key=_target_key):
        if t == L:
            pts.append(0.0)
        elif t == R:
            pts.append(1.0)
        else:
            return None
    return pts


def _weight_grid(G, cfg):
    n = G.n
    if n == 1:
        p, q = _vertex_boundary_points(G, 1)
        val, err = _pair_integral_2d(p, q, cfg.grid_nodes, cfg.eta)
        norm = (2 * math.pi) ** 2
        return WeightResult(val / norm, err / norm + 1e-12,
                            cfg.grid_nodes ** 2, cfg.seed)
    if not G.has_internal_edge():
        # factorizes into independent per-vertex 2D integrals
        total = 1.0
        err_rel = 0.0
        for i in (1, 2):
            p, q = _vertex_boundary_points(G, i)
            val, err = _pair_integral_2d(p, q, cfg.grid_nodes, cfg.eta)
            err_rel += err / max(abs(val), 1e-30)
            total *= val
        norm = (2 * math.pi) ** 4 * 2
        return WeightResult(total / norm, abs(total) * err_rel / norm + 1e-12,
                            2 * cfg.grid_nodes ** 2, cfg.seed)
    return _weight_4d(G, cfg, mode="grid")


def _weight_mc(G, cfg):
    if G.n == 1:
        return _weight_4d(G, cfg, mode="mc2d")
    return _weight_4d(G, cfg, mode="mc")


def _angle_rows(G, X1, Y1, X2, Y2):
    """Jacobian rows (one per edge, canonical per-vertex order) over samples."""
    pos = {1: (X1, Y1), 2: (X2, Y2)}
    rows = []
    npts = X1.shape[0]
    for i in range(1, G.n + 1):
        zx, zy = pos[i]
        for t in sorted(G.targets[i - 1], key=_target_key):
            row = [np.zeros(npts) for _ in range(2 * G.n)]
            if t in (L, R):
                w = 0.0 if t == L else 1.0
                dx, dy = _grad_phi_boundary(zx, zy, w)
                row[2 * (i - 1)] = dx
                row[2 * (i - 1) + 1] = dy
            else:
                wx, wy = pos[t]
                dzx, dzy, dwx, dwy = _grad_phi_full(zx, zy, wx, wy)
                row[2 * (i - 1)] = dzx
                row[2 * (i - 1) + 1] = dzy
                row[2 * (t - 1)] = dwx
                row[2 * (t - 1) + 1] = dwy
            rows.append(row)
    return rows


def _sing_mask(G, X1, Y1, X2, Y2, eta):
    mask = np.ones(X1.shape[0], dtype=bool)
    pos = {1: (X1, Y1)}
    if X2 is not None:
        pos[2] = (X2, Y2)
    for i in range(1, G.n + 1):
        zx, zy = pos[i]
        for t in G.targets[i - 1]:
            if t in (L, R):
                w = 0.0 if t == L else 1.0
                mask &= (zx - w) ** 2 + zy ** 2 > eta ** 2
            else:
                wx, wy = pos[t]
                mask &= (zx - wx) ** 2 + (zy - wy) ** 2 > eta ** 2
    return mask


def _weight_4d(G, cfg, mode):
    n = G.n
    dim = 2 * n
    if mode == "grid":
        M = cfg.grid_nodes_4d
        axes = [((np.arange(M) + 0.5) / M) for _ in range(dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        flat = [m.ravel() for m in mesh]
        count = flat[0].shape[0]
        weight = np.ones(count)
    elif mode in ("mc", "mc2d"):
        rng = np.random.default_rng(cfg.seed)
        count = cfg.samples
        flat = [rng.random(count) for _ in range(dim)]
        weight = np.ones(count)
    else:
        raise ValueError(mode)
    coords = []
    for k in range(dim):
        if k % 2 == 0:
            x = np.tan(np.pi * (flat[k] - 0.5))
            weight = weight * (np.pi * (1 + x ** 2))
        else:
            x = np.tan(np.pi * flat[k] / 2)
            weight = weight * (np.pi / 2 * (1 + x ** 2))
        coords.append(x)
    if n == 1:
        X1, Y1, X2, Y2 = coords[0], coords[1], None, None
    else:
        X1, Y1, X2, Y2 = coords
    with np.errstate(divide="ignore", invalid="ignore"):
        rows = _angle_rows(G, X1, Y1, X2 if X2 is not None else X1,
                           Y2 if Y2 is not None else Y1)
        mats = np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)
        det = np.linalg.det(mats)
        integrand = np.nan_to_num(det * weight, nan=0.0, posinf=0.0, neginf=0.0)
    norm = (2 * math.pi) ** (2 * n) * math.factorial(n)
    vals = []
    for e in (cfg.eta, cfg.eta / 2, cfg.eta / 4):
        mask = _sing_mask(G, X1, Y1, X2, Y2, e)
        if mode == "grid":
            vals.append(float(np.sum(integrand * mask)) / (cfg.grid_nodes_4d ** dim))
        else:
            vals.append(float(np.mean(integrand * mask)))
    r1 = 2 * vals[1] - vals[0]
    r2 = 2 * vals[2] - vals[1]
    value = r2 / norm
    err = abs(r2 - r1) / norm
    if mode in ("mc", "mc2d"):
        mask = _sing_mask(G, X1, Y1, X2, Y2, cfg.eta / 4)
        sd = float(np.std(integrand * mask)) / math.sqrt(count)
        err += sd / norm
    return WeightResult(value, err + 1e-12, count, cfg.seed)


def kontsevich_weight(G, cfg=None):
    """Configuration-space weight of an admissible graph, n <= 2.

    The reported value uses the canonical per-vertex edge ordering; combine
    with order_parity() to pair against the literal operator convention.
    """
    cfg = cfg or IntegrationConfig()
    if G.n > 2:
        raise ResourceGuard("weights implemented for n <= 2")
    if G.n == 0:
        return WeightResult(1.0, 0.0, 0, cfg.seed)
    key = (canonical_hash(G), cfg.key())
    if key in _WEIGHT_CACHE:
        return _WEIGHT_CACHE[key]
    if cfg.method == "grid":
        res = _weight_grid(G, cfg)
    elif cfg.method == "mc":
        res = _weight_mc(G, cfg)
    else:
        raise ValueError(f"unknown integration method {cfg.method!r}")
    if res.error_estimate > cfg.tol:
        raise IntegrationFailure(
            f"weight error estimate {res.error_estimate:.2e} exceeds "
            f"tolerance {cfg.tol:.2e}")
    _WEIGHT_CACHE[key] = res
    return res


def weight_cache_save(path):
    data = [{"key": list(k[0:1]) + [list(k[1])],
             "value": [v.value, v.error_estimate, v.samples_or_cells, v.seed]}
            for k, v in _WEIGHT_CACHE.items()]
    with open(path, "w") as fh:
        json.dump(data, fh)


def weight_cache_load(path):
    with open(path) as fh:
        data = json.load(fh)
    for entry in data:
        khash = entry["key"][0]
        kcfg = tuple(entry["key"][1])
        v = entry["value"]
        _WEIGHT_CACHE[(khash, kcfg)] = WeightResult(v[0], v[1], v[2], v[3])


# ---------------------------------------------------------------------------
# graph star product on R^d

def kontsevich_star(a, f, g, N, cfg=None):
    """nu-polynomial [C_0(f,g), ..., C_N(f,g)] with C_n = (i/2)^n sum w D."""
    if N > 2:
        raise ResourceGuard("graph star product implemented through order 2")
    cfg = cfg or IntegrationConfig()
    out = [f * g]
    for n in range(1, N + 1):
        acc = Poly(a.d, {})
        pref = (0.5j) ** n
        for G in enumerate_kgraphs(n):
            D = d_gamma(G, a, f, g)
            if D.is_zero():
                continue
            w = kontsevich_weight(G, cfg)
            acc = acc + D * (w.value * G.order_parity())
        out.append(acc * pref)
    return out


def star_poly_series(a, fs, gs, N, cfg=None):
    """Product of two nu-polynomial series under the graph star product."""
    out = [Poly(a.d, {}) for _ in range(N + 1)]
    for i, f in enumerate(fs):
        for j, g in enumerate(gs):
            if i + j > N:
                continue
            prod = kontsevich_star(a, f, g, N - i - j, cfg)
            for k, p in enumerate(prod):
                out[i + j + k] = out[i + j + k] + p
    return out


def kontsevich_assoc_defect(a, f, g, h, N, cfg=None):
    fg = kontsevich_star(a, f, g, N, cfg)
    gh = kontsevich_star(a, g, h, N, cfg)
    lhs = star_poly_series(a, fg, [h], N, cfg)
    rhs = star_poly_series(a, [f], gh, N, cfg)
    return [x - y for x, y in zip(lhs, rhs)]


def moyal_star(mat, f, g, N):
    """Closed-form exponential product for a constant bivector matrix."""
    d = len(mat)
    out = [f * g]
    prev = [(f, g)]
    fact = 1
    for n in range(1, N + 1):
        nxt = []
        for (pf, pg) in prev:
            for i in range(d):
                for j in range(d):
                    if mat[i][j] == 0:
                        continue
                    nxt.append((pf.diff(i) * mat[i][j], pg.diff(j)))
        # regroup: represent sum of tensor terms
        prev = [(pf, pg) for pf, pg in nxt]
        fact *= n
        acc = Poly(d, {})
        for pf, pg in prev:
            acc = acc + pf * pg
        out.append(acc * ((0.5j) ** n / fact))
    return out


# ---------------------------------------------------------------------------
# weighted acyclic source/sink graphs

@dataclass(frozen=True)
class GGraph:
    weights: tuple      # internal vertex weights, canonical sorted order
    edges: tuple        # ((u, v, multiplicity), ...), vertices: "S", "T", 0..k
    aut: int

    def total_weight(self):
        ne = sum(m for _, _, m in self.edges)
        return ne + sum(self.weights)

    def to_json(self):
        verts = [{"id": "S", "w": None}, {"id": "T", "w": None}]
        verts += [{"id": i, "w": w} for i, w in enumerate(self.weights)]
        edge_list = []
        for u, v, m in self.edges:
            edge_list += [[u, v]] * m
        return {"vertices": verts, "edges": edge_list, "aut": self.aut}


def enumerate_ggraphs(Wmax):
    """All weighted acyclic source/sink graphs of total weight <= Wmax,
    up to isomorphism fixing source and sink, with |Aut| attached."""
    if Wmax > 2:
        raise ResourceGuard("enumeration supported for total weight <= 2")
    found = {}

    def consider(weights, mult):
        """weights: tuple of internal weights; mult: dict (u,v)->m."""
        k = len(weights)
        ne = sum(mult.values())
        W = ne + sum(weights)
        if W > Wmax:
            return
        # degree constraints
        for v in range(k):
            inc = sum(m for (a, b), m in mult.items() if b == v)
            out = sum(m for (a, b), m in mult.items() if a == v)
            if inc < 1 or out < 1:
                return
            if weights[v] == -1 and inc + out < 3:
                return
        # acyclicity among internal vertices (edges only S->, ->T, v->v')
        order = {}
        rem = set(range(k))
        internal = {(a, b): m for (a, b), m in mult.items()
                    if isinstance(a, int) and isinstance(b, int)}
        while rem:
            progress = False
            for v in list(rem):
                if all(a not in rem for (a, b) in internal if b == v):
                    rem.discard(v)
                    progress = True
            if not progress:
                return  # cycle
        # canonical form and automorphisms over internal permutations
        best = None
        auts = 0
        for perm in itertools.permutations(range(k)):
            pw = tuple(weights[perm.index(i)] for i in range(k))
            pm = {}
            for (a, b), m in mult.items():
                aa = perm[a] if isinstance(a, int) else a
                bb = perm[b] if isinstance(b, int) else b
                pm[(aa, bb)] = m
            key = (pw, tuple(sorted(pm.items(), key=lambda kv: str(kv[0]))))
            if key == (tuple(weights),
                       tuple(sorted(mult.items(), key=lambda kv: str(kv[0])))):
                auts += 1
            if best is None or str(key) < str(best):
                best = key
        mult_fact = 1
        for m in mult.values():
            mult_fact *= math.factorial(m)
        aut = auts * mult_fact
        if best not in found:
            pw, pm = best
            edges = tuple((u, v, m) for (u, v), m in pm)
            found[best] = GGraph(weights=pw, edges=edges, aut=aut)

    # brute force: k internal vertices, edge multisets over all allowed pairs;
    # a weight -1 vertex buys one extra edge, so |E| <= Wmax + k
    for k in range(0, 4):
        pairs = [("S", "T")]
        pairs += [("S", v) for v in range(k)]
        pairs += [(v, "T") for v in range(k)]
        pairs += [(u, v) for u in range(k) for v in range(k) if u != v]
        max_edges = Wmax + k
        for weights in itertools.product(range(-1, Wmax + 1), repeat=k):
            lo = max(1 if k else 0, -sum(weights))
            for ne in range(lo, max_edges + 1):
                if ne + sum(weights) > Wmax:
                    continue
                for combo in itertools.combinations_with_replacement(pairs, ne):
                    mult = {}
                    for e in combo:
                        mult[e] = mult.get(e, 0) + 1
                    consider(tuple(weights), mult)
    return sorted(found.values(),
                  key=lambda G: (G.total_weight(), str(G.weights), str(G.edges)))


def gammelgaard_star(P, g_inv, N, check=True):
    """Star table through nu^N (N <= 2) from weighted-graph contractions.

    Edge rule: each directed edge contracts an anti-holomorphic derivative at
    its tail against a holomorphic derivative at its head through the inverse
    metric; internal vertices of weight k carry -Phi_k.  Cross-checked against
    the recursion unless check=False.
    """
    from .karabegov import karabegov_star  # local import to avoid a cycle
    if N > 2:
        raise ResourceGuard("graph expansion implemented through order 2")
    n, D = P.n, P.D
    graphs = enumerate_ggraphs(N)
    C = [BiDiffOp.zero(n, D) for _ in range(N + 1)]
    C[0] = BiDiffOp.pointwise(n, D)
    for G in graphs:
        W = G.total_weight()
        if W == 0 or W > N:
            continue
        C[W] = C[W] + _ggraph_operator(G, P, g_inv)
    table = StarTable(N=N, C=C, convention=detect_convention(C),
                      label="graph-expansion")
    if check:
        ref = karabegov_star(P, N)
        window = D - (N + 2) - 2
        from .jets import mi_range
        probes = [Jet.monomial(h, a, n, D)
                  for h in mi_range(n, 2) for a in mi_range(n, 2)]
        for k in range(N + 1):
            for f in probes:
                for g in probes:
                    dlt = (table.C[k].apply(f, g) - ref.C[k].apply(f, g))
                    if not dlt.truncate(window).is_zero():
                        raise CrossCheckFailure(
                            f"graph expansion disagrees at nu^{k}")
    return table


def _ggraph_operator(G, P, g_inv):
    """Contraction of one weighted graph into a bidifferential operator."""
    n, D = P.n, P.D
    edge_slots = []
    for u, v, m in G.edges:
        edge_slots += [(u, v)] * m
    k = len(G.weights)
    terms = []
    for assign in itertools.product(
            itertools.product(range(n), repeat=2), repeat=len(edge_slots)):
        # edge e: (anti index at tail, holo index at head)
        coeff = Jet.constant(Fraction(1, G.aut), n, D)
        for (b, a) in assign:
            coeff = coeff * g_inv[b][a]
        ok = True
        for v in range(k):
            holo = [0] * n
            anti = [0] * n
            for (u, w), (b, a) in zip(edge_slots, assign):
                if w == v:
                    holo[a] += 1
                if u == v:
                    anti[b] += 1
            vert = (-P.phi_k(G.weights[v]) if G.weights[v] >= 0
                    else -P.phi_minus1).diff_multi(tuple(holo), tuple(anti))
            if vert.is_zero():
                ok = False
                break
            coeff = coeff * vert
        if not ok or coeff.is_zero():
            continue
        f_anti = [0] * n
        g_holo = [0] * n
        for (u, w), (b, a) in zip(edge_slots, assign):
            if u == "S":
                f_anti[b] += 1
            if w == "T":
                g_holo[a] += 1
        terms.append((coeff, mi_zero(n), tuple(f_anti), tuple(g_holo), mi_zero(n)))
    return BiDiffOp(n, D, terms)
