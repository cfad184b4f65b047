"""Sphere quantization: exact structure, coherent states, asymptotics."""

import math

import numpy as np
import pytest

from starq.cp1 import (
    AsymSeries, Cp1Context, ObservableFn, QuadratureTolerance, ResourceGuard,
    UnboundedSymbol, adjointness_check, berezin_defect_series,
    berezin_transform_num, bms_suite, coherent_vector,
    contravariant_reconstruct, coord_x_observable, covariant_symbol,
    epsilon_function, geometric_quantization, height_observable,
    integral_exact, laplacian_fn, make_context, operator_norm,
    poisson_bracket_fn, surjectivity_rank, toeplitz_matrix, trace_identity,
    tuynman_defect, twisted_product,
)
from starq.cp1 import _section_matrix

TWO_PI = 2 * math.pi


def sample_points(k=50, seed=3):
    rng = np.random.default_rng(seed)
    cth = rng.uniform(-0.9, 0.9, k)
    phi = rng.uniform(0, TWO_PI, k)
    return np.sqrt((1 - cth) / (1 + cth)) * np.exp(1j * phi)


# ---------------------------------------------------------------------------
# context and observables

def test_context_exact_norms():
    ctx = make_context(1)
    assert ctx.dim == 2
    assert np.allclose(ctx.norms, [math.pi, math.pi])
    ctx = make_context(2)
    assert np.allclose(ctx.norms, [TWO_PI / 3, TWO_PI / 6, TWO_PI / 3])
    assert make_context(7).dim == 8


def test_observable_constraints():
    with pytest.raises(UnboundedSymbol):
        ObservableFn(terms=((1.0, 3, 0, 1),))
    h = height_observable()
    assert h.is_real()
    assert abs(h(0j) - 1) < 1e-14 and abs(h(1.0) - 0) < 1e-14
    assert not ObservableFn(terms=((1j, 0, 0, 0),)).is_real()


def test_laplacian_of_height():
    h = height_observable()
    lap = laplacian_fn(h)
    for z in (0j, 0.4 + 0.1j, 2.0 - 1.0j):
        assert abs(lap(z) + 2 * h(z)) < 1e-12
    assert abs(lap(0j) + 2) < 1e-14


def test_poisson_bracket_real_and_antisymmetric():
    h, x = height_observable(), coord_x_observable()
    br = poisson_bracket_fn(h, x)
    assert br.is_real()
    br2 = poisson_bracket_fn(x, h)
    for z in sample_points(10):
        assert abs(br(z) + br2(z)) < 1e-12
    with pytest.raises(UnboundedSymbol):
        # {h, .} of a bounded-but-borderline symbol can leave the class
        poisson_bracket_fn(ObservableFn(terms=((1.0, 2, 0, 1),)), x)


# ---------------------------------------------------------------------------
# Toeplitz matrices

def test_toeplitz_identity_and_height():
    ctx = make_context(6)
    one = ObservableFn.constant(1)
    assert np.allclose(toeplitz_matrix(one, ctx), np.eye(7), atol=1e-14)
    T = toeplitz_matrix(height_observable(), ctx)
    assert np.allclose(np.diag(T), [(6 - 2 * k) / 8 for k in range(7)],
                       atol=1e-14)
    assert np.max(np.abs(T - np.diag(np.diag(T)))) < 1e-14


def test_toeplitz_hermitian_and_positive():
    ctx = make_context(8)
    f = ObservableFn(terms=((1.0, 1, 0, 1), (1.0, 0, 1, 1), (2.0, 0, 0, 0)))
    T = toeplitz_matrix(f, ctx)
    assert f.is_real()
    assert np.max(np.abs(T - T.conj().T)) < 1e-12
    # f = 2 + x >= 1 > 0 on the sphere
    assert np.min(np.linalg.eigvalsh(T)) > -1e-10


def test_toeplitz_callback_matches_exact():
    ctx = make_context(6)
    h = height_observable()
    hc = ObservableFn(callback=lambda z: h(z))
    A = toeplitz_matrix(hc, ctx)
    assert np.max(np.abs(A - toeplitz_matrix(h, ctx))) < 1e-10


def test_toeplitz_callback_tolerance():
    ctx = make_context(4)
    rough = ObservableFn(callback=lambda z: np.sign((z * np.conjugate(z)).real - 1.0))
    with pytest.raises(QuadratureTolerance):
        toeplitz_matrix(rough, ctx, tol=1e-12)


def test_operator_norm():
    ctx = make_context(10)
    assert abs(operator_norm(np.eye(3, dtype=complex)) - 1) < 1e-14
    assert operator_norm(np.zeros((4, 4), dtype=complex)) == 0
    T = toeplitz_matrix(height_observable(), ctx)
    assert abs(operator_norm(T) - 10 / 12) < 1e-12


# ---------------------------------------------------------------------------
# coherent states

def test_coherent_reproducing_property():
    ctx = make_context(7)
    for z0 in sample_points(50):
        e = coherent_vector(z0, ctx)
        S = _section_matrix(ctx, np.array([z0]))[:, 0]
        for l in (0, 3, 7):
            basis = np.zeros(8, dtype=complex)
            basis[l] = 1
            assert abs(np.vdot(e, basis) - S[l]) < 1e-10


def test_coherent_norm_constant_and_fiber_scaling():
    ctx = make_context(9)
    vals = [np.vdot(coherent_vector(z0, ctx), coherent_vector(z0, ctx)).real
            for z0 in sample_points(50)]
    assert max(vals) - min(vals) < 1e-10
    assert abs(vals[0] - ctx.dim / TWO_PI) < 1e-10
    z0 = 0.3 - 0.7j
    e = coherent_vector(z0, ctx)
    e2 = coherent_vector(z0, ctx, fiber_scale=1j)
    assert np.allclose(e2, e * np.conjugate(1j) ** 9, atol=1e-14)


def test_coherent_at_origin():
    ctx = make_context(5)
    e = coherent_vector(0j, ctx)
    assert np.max(np.abs(e[1:])) == 0 and abs(e[0]) > 0


def test_covariant_symbol_phase_independent():
    ctx = make_context(6)
    T = toeplitz_matrix(height_observable(), ctx)
    z0 = 0.5 + 0.2j
    base = covariant_symbol(T, z0, ctx)
    e = coherent_vector(z0, ctx, fiber_scale=np.exp(0.7j))
    val = np.vdot(e, T @ e) / np.vdot(e, e).real
    assert abs(val - base) < 1e-12
    assert abs(covariant_symbol(np.eye(7, dtype=complex), z0, ctx) - 1) < 1e-12


def test_epsilon_function():
    ctx = make_context(8)
    vals = [epsilon_function(z0, ctx) for z0 in sample_points(50)]
    assert max(vals) - min(vals) < 1e-10
    assert abs(vals[0] - ctx.dim / TWO_PI) < 1e-10
    # integral of the epsilon measure = dimension
    total = (ctx.dim / TWO_PI) * integral_exact(ObservableFn.constant(1))
    assert abs(total - ctx.dim) < 1e-8


# ---------------------------------------------------------------------------
# Berezin transform and symbol calculus

def test_berezin_transform_values():
    ctx = make_context(10)
    h = height_observable()
    assert abs(berezin_transform_num(ObservableFn.constant(1), 0.4j, ctx) - 1) < 1e-12
    assert abs(berezin_transform_num(h, 0j, ctx) - 10 / 12) < 1e-10
    # symbol bound chain on sampled points
    T = toeplitz_matrix(h, ctx)
    nrm = operator_norm(T)
    for z0 in sample_points(20):
        assert abs(covariant_symbol(T, z0, ctx)) <= nrm + 1e-12
    assert nrm <= h.sup_norm() + 1e-12


def test_trace_identity():
    ctx = make_context(9)
    lhs, rhs, defect = trace_identity(ObservableFn.constant(1), ctx)
    assert abs(lhs - ctx.dim) < 1e-10 and defect < 1e-10
    _, _, defect = trace_identity(height_observable(), ctx)
    assert defect < 1e-10


def test_adjointness():
    ctx = make_context(8)
    rng = np.random.default_rng(11)
    A = rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9))
    A = A + A.conj().T
    assert adjointness_check(A, height_observable(), ctx) < 1e-8
    # A = T_g case is symmetric in the two readings
    Tg = toeplitz_matrix(coord_x_observable(), ctx)
    assert adjointness_check(Tg, height_observable(), ctx) < 1e-8


def test_contravariant_reconstruction():
    assert contravariant_reconstruct(ObservableFn.constant(1),
                                     make_context(4)) < 1e-8
    assert contravariant_reconstruct(height_observable(),
                                     make_context(4)) < 1e-6
    # refinement decreases the defect
    d1 = contravariant_reconstruct(height_observable(),
                                   make_context(4, quad_nodes=10))
    d2 = contravariant_reconstruct(height_observable(),
                                   make_context(4, quad_nodes=20))
    assert d2 <= d1 + 1e-12


def test_twisted_product():
    ctx = make_context(8)
    h = height_observable()
    one = ObservableFn.constant(1)
    z0 = 0.3 + 0.1j
    assert abs(twisted_product(h, one, z0, ctx)
               - berezin_transform_num(h, z0, ctx)) < 1e-12
    assert abs(twisted_product(h, h, 0j, ctx) - (8 / 10) ** 2) < 1e-10
    matrix = twisted_product(h, h, z0, ctx)
    integral = twisted_product(h, h, z0, ctx, path="integral")
    assert abs(matrix - integral) < 1e-6


def test_surjectivity_rank():
    assert surjectivity_rank(make_context(1)) == 4
    assert surjectivity_rank(make_context(2)) == 9
    with pytest.raises(ResourceGuard):
        surjectivity_rank(make_context(9))


# ---------------------------------------------------------------------------
# geometric quantization

def test_quantization_of_constant():
    ctx = make_context(5)
    Q = geometric_quantization(ObservableFn.constant(1), ctx)
    assert np.max(np.abs(Q - 1j * np.eye(6))) < 1e-10


def test_tuynman_identity():
    h = height_observable()
    for m in (4, 8, 16):
        assert tuynman_defect(h, make_context(m)) < 1e-8


def test_quantization_linearity():
    ctx = make_context(6)
    h, x = height_observable(), coord_x_observable()
    Qh = geometric_quantization(h, ctx)
    Qx = geometric_quantization(x, ctx)
    Q = geometric_quantization(h + x.scale(2), ctx)
    assert np.max(np.abs(Q - (Qh + 2 * Qx))) < 1e-10


# ---------------------------------------------------------------------------
# asymptotics

def test_norm_asymptotics():
    h = height_observable()
    pts = []
    for m in (8, 16, 32, 64, 128):
        nrm = operator_norm(toeplitz_matrix(h, make_context(m)))
        assert abs(nrm - m / (m + 2)) < 1e-10
        pts.append((m, 1.0 - nrm))
    series = AsymSeries.from_points(pts)
    assert abs(series.fit[1] + 1) < 0.05


def test_berezin_asymptotics():
    h = height_observable()
    series = berezin_defect_series(h, laplacian_fn(h), sample_points(12),
                                   (8, 16, 32, 64, 128))
    assert abs(series.fit[1] + 1) < 0.15
    ctx = make_context(16)
    assert abs(berezin_transform_num(h, 0j, ctx) - 16 / 18) < 1e-10


def test_bms_suite_slopes():
    h, x = height_observable(), coord_x_observable()
    sa, sb, sc = bms_suite(h, x, (8, 16, 32, 64, 128))
    assert abs(sa.fit[1] + 1) < 0.05
    assert abs(sb.fit[1] + 1) < 0.2
    assert abs(sc.fit[1] + 1) < 0.2
    for series in (sb, sc):
        vals = [v for _, v in series.points]
        assert all(a > b for a, b in zip(vals, vals[1:]))


def test_trace_scaling():
    f = ObservableFn(terms=((1.0, 0, 0, 1),))  # 1/(1+|z|^2), mean 1/2
    mean = integral_exact(f) / TWO_PI
    m = 128
    tr = np.trace(toeplitz_matrix(f, make_context(m))).real
    assert abs(tr / m - mean) / mean < 0.05
