"""Operator core: generalized commutators, structured operators, norms, dumps."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nambulab.operators import (
    DenseOperator,
    KronSum,
    NormEstimate,
    comm4_expand,
    commutator,
    direct_sum3,
    gen_commutator,
    hs_norm,
    kron3,
    kron_comm4,
    kron_commutator,
    kron_product,
    load_matrix_bin,
    load_matrix_csv,
    op_norm,
    save_matrix_bin,
    save_matrix_csv,
)

rng = np.random.default_rng(2024)


def rmat(n):
    return rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))


def rel(delta, mats):
    scale = float(np.prod([np.linalg.norm(m, 2) for m in mats]))
    return delta / max(scale, 1e-300)


# ---------------------------------------------------------------------------
# generalized commutator
# ---------------------------------------------------------------------------


def test_identity_slot_vanishes():
    mats = [rmat(4), rmat(4), np.eye(4), rmat(4)]
    out = gen_commutator(mats, "direct")
    assert rel(np.linalg.norm(out, 2), mats) < 1e-12


def test_repeated_argument_vanishes():
    mats = [rmat(5), rmat(5), rmat(5)]
    mats.append(mats[0])
    for method in ("direct", "restricted", "halved"):
        out = gen_commutator(mats, method)
        assert rel(np.linalg.norm(out, 2), mats) < 1e-12


@pytest.mark.parametrize("arity,size", [(2, 5), (4, 4), (4, 6), (6, 4), (6, 5)])
def test_methods_agree(arity, size):
    mats = [rmat(size) for _ in range(arity)]
    d = gen_commutator(mats, "direct")
    r = gen_commutator(mats, "restricted")
    h = gen_commutator(mats, "halved")
    assert rel(np.linalg.norm(d - r, 2), mats) < 1e-12
    assert rel(np.linalg.norm(d - h, 2), mats) < 1e-12


def test_standard_identity_amitsur_levitzki():
    # s_{2N}(A_1,...,A_2N) = 0 for N x N matrices: an independent oracle
    mats2 = [rmat(2) for _ in range(4)]
    assert rel(np.linalg.norm(gen_commutator(mats2, "direct"), 2), mats2) < 1e-12
    mats3 = [rmat(3) for _ in range(6)]
    assert rel(np.linalg.norm(gen_commutator(mats3, "restricted"), 2), mats3) < 1e-12


def test_gen_commutator_errors():
    with pytest.raises(ValueError):
        gen_commutator([rmat(3)] * 3)
    with pytest.raises(ValueError):
        gen_commutator([rmat(3)] * 8)
    with pytest.raises(ValueError):
        gen_commutator([rmat(3), rmat(4)])
    with pytest.raises(ValueError):
        gen_commutator([rmat(3), rmat(3)], "magic")


def test_comm4_expand_trivial():
    a, b, c = rmat(4), rmat(4), rmat(4)
    out = comm4_expand(a, b, np.eye(4), c)
    assert rel(np.linalg.norm(out, 2), [a, b, np.eye(4), c]) < 1e-12
    diags = [np.diag(rng.standard_normal(4)) for _ in range(4)]
    assert np.linalg.norm(comm4_expand(*diags), 2) < 1e-12


def test_comm4_expand_matches_permutation_sum():
    mats = [rmat(5) for _ in range(4)]
    d = gen_commutator(mats, "direct")
    e = comm4_expand(*mats)
    assert rel(np.linalg.norm(d - e, 2), mats) < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2), st.integers(1, 3), st.integers(0, 10**6))
def test_gen_commutator_alternating_multilinear(size, i, j, seed):
    lrng = np.random.default_rng(seed)
    mats = [
        lrng.standard_normal((size, size)) + 1j * lrng.standard_normal((size, size))
        for _ in range(4)
    ]
    j = i + j if i + j < 4 else (i + j) % 4
    if i == j:
        j = (i + 1) % 4
    swapped = list(mats)
    swapped[i], swapped[j] = swapped[j], swapped[i]
    d1 = gen_commutator(mats, "restricted")
    d2 = gen_commutator(swapped, "restricted")
    assert rel(np.linalg.norm(d1 + d2, 2), mats) < 1e-12
    # linearity in slot i
    scaled = list(mats)
    scaled[i] = 2.5 * mats[i]
    d3 = gen_commutator(scaled, "restricted")
    assert rel(np.linalg.norm(d3 - 2.5 * d1, 2), mats) < 1e-12


# ---------------------------------------------------------------------------
# structured operators
# ---------------------------------------------------------------------------


def test_direct_sum_norm_is_max():
    blocks = [rmat(3), rmat(4), rmat(5)]
    ds = direct_sum3(*blocks)
    assert abs(op_norm(ds).value - max(np.linalg.norm(b, 2) for b in blocks)) < 1e-12
    assert np.allclose(
        ds.to_dense()[3:7, 3:7], blocks[1]
    )


def test_kron_norm_is_product():
    mats = [rmat(3), rmat(2), rmat(4)]
    x = kron3(*mats)
    expected = float(np.prod([np.linalg.norm(m, 2) for m in mats]))
    assert abs(op_norm(x).value - expected) < 1e-10 * expected
    dense = np.linalg.norm(x.to_dense(), 2)
    assert abs(op_norm(x).value - dense) < 1e-10 * dense


def test_kron_matvec_matches_dense_on_basis_vectors():
    mats = [rmat(2), rmat(3), rmat(4)]
    x = kron3(*mats)
    dense = x.to_dense()
    for col in (0, 5, 17, 23):
        e = np.zeros(24, dtype=complex)
        e[col] = 1.0
        assert np.allclose(x.matvec(e), dense[:, col], atol=1e-12)


def test_kron_commutator_trivial_cases():
    mats = [rmat(3) for _ in range(3)]
    x = kron3(*mats)
    zero = kron_commutator(x, x)
    assert np.linalg.norm(zero.to_dense(), 2) < 1e-10
    eye = kron3(np.eye(3), np.eye(3), np.eye(3))
    assert np.linalg.norm(kron_commutator(eye, eye).to_dense(), 2) < 1e-12


def test_kron_commutator_dense_oracle():
    x = kron3(rmat(3), rmat(3), rmat(3))
    y = kron3(rmat(3), rmat(3), rmat(3))
    kc = kron_commutator(x, y)
    assert kc.n_terms == 4
    dense = commutator(x.to_dense(), y.to_dense())
    scale = max(np.linalg.norm(dense, 2), 1.0)
    assert np.linalg.norm(kc.to_dense() - dense, 2) / scale < 1e-12


def test_kron_product():
    eye = kron3(np.eye(2), np.eye(2), np.eye(2))
    x = kron3(rmat(2), rmat(2), rmat(2))
    prod = kron_product(x, eye)
    assert prod.n_terms == 1
    assert np.allclose(prod.to_dense(), x.to_dense(), atol=1e-12)
    a = kron_commutator(x, kron3(rmat(2), rmat(2), rmat(2)))
    b = kron_commutator(kron3(rmat(2), rmat(2), rmat(2)), x)
    ab = kron_product(a, b)
    assert ab.n_terms == 16
    dense = a.to_dense() @ b.to_dense()
    assert np.linalg.norm(ab.to_dense() - dense, 2) < 1e-10 * max(
        np.linalg.norm(dense, 2), 1.0
    )


def test_kron_comm4_matches_dense():
    xs = [kron3(rmat(2), rmat(2), rmat(2)) for _ in range(4)]
    kc4 = kron_comm4(xs)
    assert kc4.n_terms <= 96
    dense = gen_commutator([x.to_dense() for x in xs], "direct")
    scale = max(np.linalg.norm(dense, 2), 1.0)
    assert np.linalg.norm(kc4.to_dense() - dense, 2) / scale < 1e-10


def test_kron_simplify_merges_duplicates():
    a, b, c = rmat(2), rmat(2), rmat(2)
    x = KronSum([(1.0, (a, b, c)), (2.0, (a, b, c)), (-3.0, (a, b, c))])
    merged = x.simplify()
    assert merged.n_terms == 1
    assert np.linalg.norm(merged.to_dense(), 2) < 1e-12


def test_three_factor_inequality():
    # |M1 x M2 x M3 - N1 x N2 x N3| <= |M1-N1||M2-N2||M3-N3|
    #   + |M1-N1||M2||N3| + |M1||N2||M3-N3| + |N1||M2-N2||M3|
    for _ in range(5):
        ms = [rmat(3) for _ in range(3)]
        ns = [rmat(3) for _ in range(3)]
        lhs = np.linalg.norm(kron3(*ms).to_dense() - kron3(*ns).to_dense(), 2)
        d = [np.linalg.norm(m - n, 2) for m, n in zip(ms, ns)]
        nm = [np.linalg.norm(m, 2) for m in ms]
        nn = [np.linalg.norm(n, 2) for n in ns]
        rhs = d[0] * d[1] * d[2] + d[0] * nm[1] * nn[2] + nm[0] * nn[1] * d[2] + nn[0] * d[1] * nm[2]
        assert lhs <= rhs * (1 + 1e-12)


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


def test_op_norm_dense_trivial():
    assert op_norm(np.eye(7)).value == pytest.approx(1.0, abs=1e-14)
    assert op_norm(np.diag([3.0, -1.0])).value == pytest.approx(3.0, abs=1e-14)


def test_op_norm_kron_sum_vs_dense():
    x = KronSum([(1.0, (rmat(3), rmat(3), rmat(3))), (0.5j, (rmat(3), rmat(3), rmat(3)))])
    est = op_norm(x, tol=1e-10)
    dense = np.linalg.norm(x.to_dense(), 2)
    assert est.converged
    assert est.iterations > 0
    assert abs(est.value - dense) < 1e-7 * dense


def test_op_norm_moderate_kron_vs_dense():
    # cross-check path: structured norm equals the dense norm when materializable
    terms = [(rng.standard_normal() + 1j * rng.standard_normal(),
              (rmat(12), rmat(12), rmat(12))) for _ in range(3)]
    x = KronSum(terms)
    est = op_norm(x, tol=1e-9)
    dense = np.linalg.norm(x.to_dense(), 2)
    assert abs(est.value - dense) < 1e-6 * dense


def test_op_norm_zero_operator():
    z = KronSum([(0.0, (np.zeros((3, 3)), np.zeros((3, 3)), np.zeros((3, 3)))),
                 (1.0, (np.zeros((3, 3)), np.eye(3), np.eye(3)))])
    assert op_norm(x=z).value == pytest.approx(0.0, abs=1e-14)


def test_op_norm_nonconvergence_reported():
    x = KronSum([(1.0, (rmat(4), rmat(4), rmat(4))),
                 (1.0, (rmat(4), rmat(4), rmat(4)))])
    est = op_norm(x, tol=1e-14, maxiter=2)
    assert isinstance(est, NormEstimate)
    assert not est.converged
    assert est.value > 0


def test_op_norm_bad_tol():
    with pytest.raises(ValueError):
        op_norm(np.eye(2), tol=0.0)


def test_hs_norm_matches_dense():
    x = KronSum([(1.0, (rmat(3), rmat(2), rmat(3))), (2.0 - 1j, (rmat(3), rmat(2), rmat(3)))])
    assert abs(hs_norm(x) - np.linalg.norm(x.to_dense(), "fro")) < 1e-9
    ds = direct_sum3(rmat(2), rmat(3), rmat(4))
    assert abs(hs_norm(ds) - np.linalg.norm(ds.to_dense(), "fro")) < 1e-12


# ---------------------------------------------------------------------------
# dumps and wrappers
# ---------------------------------------------------------------------------


def test_matrix_bin_roundtrip(tmp_path):
    m = rmat(6)
    path = tmp_path / "m.bin"
    save_matrix_bin(path, m)
    back = load_matrix_bin(path)
    # complex64 storage
    assert np.max(np.abs(m - back)) < 1e-5
    raw = path.read_bytes()
    assert len(raw) == 8 + 6 * 6 * 8
    assert int.from_bytes(raw[:8], "little") == 6


def test_matrix_csv_roundtrip(tmp_path):
    m = rmat(5)
    path = tmp_path / "m.csv"
    save_matrix_csv(path, m)
    back = load_matrix_csv(path)
    assert np.array_equal(m, back)


def test_dense_operator_validation():
    op = DenseOperator(np.eye(3), label="identity", level=4)
    assert op.n == 3
    with pytest.raises(ValueError):
        DenseOperator(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        DenseOperator(np.array([[np.inf, 0], [0, 1]]))


def test_kron_sum_validation():
    with pytest.raises(ValueError):
        KronSum([])
    with pytest.raises(ValueError):
        KronSum([(1.0, (np.eye(2), np.eye(2)))])
    with pytest.raises(ValueError):
        KronSum([(1.0, (np.eye(2), np.eye(2), np.eye(2))),
                 (1.0, (np.eye(3), np.eye(2), np.eye(2)))])
