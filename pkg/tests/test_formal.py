"""Formal operator algebra: composition, polarization, transforms, duals."""

from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from starq.jets import I, ONE, Jet, Scalar, metric_from_potential, laplacian, mi_range
from starq.formal import (
    BiDiffOp, DiffOp, NuDiffOp, OrderViolation, SingularSystem, StarTable,
    assoc_defect, conjugate_star, detect_convention, dual_star, invert_transform,
    op_apply, op_compose, opposite_star, polarize, star_eval, star_series,
    star_table_from_json, star_table_to_json, tables_agree, transform_from_star,
    ops_agree,
)


def flat_table(N, D, n=1):
    """Anti-Wick table of the flat potential: C_k = (1/k!) d^k_zbar x d^k_z."""
    C = [BiDiffOp.pointwise(n, D)]
    for k in range(1, N + 1):
        terms = []
        if n == 1:
            terms.append((Jet.constant(Scalar(Fraction(1, _fact(k))), n, D),
                          (0,), (k,), (k,), (0,)))
        else:
            raise NotImplementedError
        C.append(BiDiffOp(n, D, terms))
    return StarTable(N=N, C=C, convention="karabegov_anti_wick", label="flat")


def _fact(k):
    out = 1
    for i in range(2, k + 1):
        out *= i
    return out


def flat_laplacian_op(D):
    return DiffOp(1, D, [(Jet.constant(1, 1, D), (1,), (1,))])


def zj(D=10):
    return Jet.variable(0, 1, D)


def zbj(D=10):
    return Jet.variable(0, 1, D, "anti")


# ---------------------------------------------------------------------------
# DiffOp / NuDiffOp basics

def test_op_apply_identity_and_deriv():
    D = 8
    f = zj(D) * zj(D) * zbj(D)
    ident = NuDiffOp.identity(1, D, 2)
    assert op_apply(ident, [f])[0] == f
    nudz = NuDiffOp(1, D, 2, [DiffOp.zero(1, D),
                              DiffOp.deriv(1, D, (1,), (0,))])
    out = op_apply(nudz, [zj(D) * zj(D)])
    assert out[0].is_zero()
    assert out[1] == zj(D).scale(2)


def test_op_apply_exp_transform():
    D = 10
    lap = flat_laplacian_op(D)
    expI = NuDiffOp(1, D, 2, [DiffOp.identity(1, D), lap,
                              lap.compose(lap).scale(Scalar(Fraction(1, 2)))])
    f = Jet.monomial((2,), (2,), 1, D)
    out = op_apply(expI, [f])
    assert out[0] == f
    assert out[1] == Jet.monomial((1,), (1,), 1, D, Scalar(4))
    assert out[2] == Jet.constant(2, 1, D)


def test_op_compose_leibniz():
    D = 8
    dz = DiffOp.deriv(1, D, (1,), (0,))
    mz = DiffOp.mult(zj(D))
    comp = dz.compose(mz)
    # d_z (z f) = z d_z f + f
    expect = DiffOp(1, D, [(zj(D), (1,), (0,)), (Jet.constant(1, 1, D), (0,), (0,))])
    assert comp == expect
    mzb = DiffOp.mult(zbj(D))
    comm = dz.compose(mzb) - mzb.compose(dz)
    assert comm.is_zero()


def test_op_compose_nu_graded():
    D = 8
    A = NuDiffOp(1, D, 2, [DiffOp.identity(1, D), flat_laplacian_op(D)])
    ident = NuDiffOp.identity(1, D, 2)
    assert op_compose(A, ident) == A


# ---------------------------------------------------------------------------
# star tables

def test_star_eval_flat_examples():
    D = 10
    t = flat_table(2, D)
    one = Jet.constant(1, 1, D)
    f = zj(D) * zbj(D) + zj(D)
    out = star_eval(t, one, f)
    assert out[0] == f and out[1].is_zero() and out[2].is_zero()
    out = star_eval(t, zbj(D), zj(D))
    assert out[0] == zj(D) * zbj(D)
    assert out[1] == one
    assert out[2].is_zero()
    out = star_eval(t, zj(D), zbj(D))
    assert out[0] == zj(D) * zbj(D)
    assert out[1].is_zero() and out[2].is_zero()


def test_assoc_defect_flat_zero():
    D = 12
    t = flat_table(2, D)
    f, g, h = zbj(D), zj(D), zbj(D)
    defect = assoc_defect(t, f, g, h)
    assert all(d.is_zero() for d in defect)


def test_assoc_defect_detects_corruption():
    D = 12
    t = flat_table(2, D)
    bad_c2 = BiDiffOp(1, D, [(Jet.constant(1, 1, D), (0,), (2,), (2,), (0,))])
    bad = StarTable(N=2, C=[t.C[0], t.C[1], bad_c2],
                    convention="karabegov_anti_wick")
    f = zbj(D) * zbj(D)
    g = zj(D) * zj(D)
    h = zj(D)
    defect = assoc_defect(bad, f, g, h)
    assert not all(d.is_zero() for d in defect)


# ---------------------------------------------------------------------------
# polarization / transform extraction

def test_polarize_examples():
    D = 8
    lap = flat_laplacian_op(D)
    C1 = polarize(lap, 1)
    assert C1 == BiDiffOp(1, D, [(Jet.constant(1, 1, D), (0,), (1,), (1,), (0,))])
    ident = DiffOp.identity(1, D)
    assert polarize(ident, 0) == BiDiffOp.pointwise(1, D)
    half_lap2 = lap.compose(lap).scale(Scalar(Fraction(1, 2)))
    C2 = polarize(half_lap2, 2)
    assert C2 == BiDiffOp(1, D, [(Jet.constant(Scalar(Fraction(1, 2)), 1, D),
                                  (0,), (2,), (2,), (0,))])
    with pytest.raises(OrderViolation):
        polarize(half_lap2, 1)


def test_transform_from_star_flat():
    D = 12
    t = flat_table(2, D)
    Iop = transform_from_star(t)
    lap = flat_laplacian_op(D)
    expect = NuDiffOp(1, D, 2, [DiffOp.identity(1, D), lap,
                                lap.compose(lap).scale(Scalar(Fraction(1, 2)))])
    assert ops_agree(Iop, expect, probe_degree=4)


def test_transform_rejects_order_violation():
    D = 12
    # pretend C_1 is secretly second order in g
    bad_c1 = BiDiffOp(1, D, [(Jet.constant(1, 1, D), (0,), (1,), (2,), (0,))])
    t = StarTable(N=1, C=[BiDiffOp.pointwise(1, D), bad_c1],
                  convention="karabegov_anti_wick")
    with pytest.raises(SingularSystem):
        transform_from_star(t)


def test_polarize_roundtrip():
    D = 12
    t = flat_table(3, D)
    Iop = transform_from_star(t)
    for k in range(1, 4):
        assert polarize(Iop.orders[k], k) == t.C[k]


def test_invert_transform():
    D = 12
    N = 3
    ident = NuDiffOp.identity(1, D, N)
    assert invert_transform(ident) == ident
    lap = flat_laplacian_op(D)
    Iop = NuDiffOp(1, D, N, [DiffOp.identity(1, D), lap])
    Jop = invert_transform(Iop)
    assert ops_agree(Iop.compose(Jop), ident, probe_degree=3)
    # Neumann series: id - nu L + nu^2 L^2 - nu^3 L^3
    assert Jop.orders[1] == lap.scale(Scalar(-1))
    assert Jop.orders[2] == lap.compose(lap)


# ---------------------------------------------------------------------------
# conjugation / opposite / dual

def test_conjugate_identity_and_roundtrip():
    D = 14
    t = flat_table(2, D)
    ident = NuDiffOp.identity(1, D, 2)
    assert tables_agree(conjugate_star(t, ident), t, probe_degree=3)
    lap = flat_laplacian_op(D)
    B = NuDiffOp(1, D, 2, [DiffOp.identity(1, D), lap])
    t2 = conjugate_star(t, B)
    t3 = conjugate_star(t2, invert_transform(B))
    assert tables_agree(t3, t, probe_degree=3)


def test_conjugate_preserves_assoc():
    D = 14
    t = flat_table(2, D)
    lap = flat_laplacian_op(D)
    B = NuDiffOp(1, D, 2, [DiffOp.identity(1, D), lap])
    t2 = conjugate_star(t, B)
    f, g, h = zbj(D) * zj(D), zj(D), zbj(D)
    defect = assoc_defect(t2, f, g, h)
    window = D - 2 * t.N - 2
    assert all(d.truncate(window).is_zero() for d in defect)


def test_opposite_star():
    D = 10
    t = flat_table(2, D)
    t_op = opposite_star(t)
    assert t_op.convention == "wick"
    assert tables_agree(opposite_star(t_op), t, probe_degree=3)
    out = star_eval(t_op, zbj(D), zj(D))
    assert out[1].is_zero()
    out = star_eval(t_op, zj(D), zbj(D))
    assert out[1] == Jet.constant(1, 1, D)


def test_dual_star_flat():
    D = 14
    t = flat_table(2, D)
    Iop = transform_from_star(t)
    dual = dual_star(t, Iop)
    # dual of the dual is the original table
    I2 = transform_from_star(dual)
    dd = dual_star(dual, I2)
    assert tables_agree(dd, t, probe_degree=3)
    # dual-then-opposite gives the Wick-type table with C_1(f,g) = -df/dz dg/dzbar
    bt = opposite_star(dual)
    assert bt.convention == "wick"
    expect_c1 = BiDiffOp(1, D, [(Jet.constant(-1, 1, D), (1,), (0,), (0,), (1,))])
    f = zj(D)
    g = zbj(D)
    assert bt.C[1].apply(f, g) == expect_c1.apply(f, g)
    assert bt.C[1].apply(g, f) == expect_c1.apply(g, f)


def test_convention_enforcement_property():
    D = 10
    t = flat_table(2, D)
    t.check_convention()
    # holomorphic left factor multiplies pointwise
    a = zj(D) * zj(D)
    g = zbj(D) + zj(D) * zbj(D)
    out = star_eval(t, a, g)
    assert out[0] == a * g and out[1].is_zero() and out[2].is_zero()
    b = zbj(D) * zbj(D)
    out = star_eval(t, g, b)
    assert out[0] == g * b and out[1].is_zero() and out[2].is_zero()


def test_star_table_json_roundtrip():
    t = flat_table(2, 10)
    blob = star_table_to_json(t)
    t2 = star_table_from_json(blob)
    assert t2.N == t.N and t2.convention == t.convention
    for k in range(t.N + 1):
        assert t2.C[k] == t.C[k]


def test_detect_convention():
    t = flat_table(2, 8)
    assert detect_convention(t.C) == "karabegov_anti_wick"
    assert detect_convention([c.swap() for c in t.C]) == "wick"
