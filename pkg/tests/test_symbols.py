"""Symbol algebra: exact products, derivatives, brackets, and their invariants."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nambulab.symbols import (
    ConstantSymplecticForm,
    FourierSymbol,
    VolumeDensity,
    bracket4_hyp,
    bracket4_r,
    form_volume_density,
    hyperkahler_forms,
    hyperkahler_volume_density,
    nambu_bracket_det,
    nambu_bracket_pairwise,
    partial_derivative,
    poisson_bracket,
    random_symbol,
    standard_t2_form,
    sup_norm,
    sym_mul,
    symbol_preset,
)

TWO_PI = 2.0 * math.pi


def rel_diff(a, b):
    scale = max(a.coeff_scale(), b.coeff_scale(), 1.0)
    return a.max_coeff_diff(b) / scale


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------


def test_mul_identity():
    g = random_symbol(3, 2, 2)
    one = FourierSymbol.constant(2)
    assert sym_mul(one, g) == g
    assert sym_mul(g, one) == g


def test_mul_inverse_frequencies():
    f = FourierSymbol.monomial(2, (1, 0))
    g = FourierSymbol.monomial(2, (-1, 0))
    assert sym_mul(f, g) == FourierSymbol.constant(2)


def test_mul_cos_squared():
    f = FourierSymbol.cos(2, 1)
    p = sym_mul(f, f)
    expected = FourierSymbol(2, {(0, 0): 0.5, (2, 0): 0.25, (-2, 0): 0.25})
    assert p.isclose(expected, 1e-14)
    # independent oracle: pointwise evaluation on a grid
    n = 16
    grid_vals = p.eval_grid(n)
    factor_vals = f.eval_grid(n)
    assert np.max(np.abs(grid_vals - factor_vals**2)) < 1e-12


def test_mul_dimension_mismatch():
    with pytest.raises(ValueError):
        sym_mul(FourierSymbol.cos(2, 1), FourierSymbol.cos(4, 1))


@settings(max_examples=25, deadline=None)
@given(
    st.dictionaries(
        st.tuples(st.integers(-2, 2), st.integers(-2, 2)),
        st.tuples(st.floats(-2, 2), st.floats(-2, 2)),
        max_size=6,
    ),
    st.dictionaries(
        st.tuples(st.integers(-2, 2), st.integers(-2, 2)),
        st.tuples(st.floats(-2, 2), st.floats(-2, 2)),
        max_size=6,
    ),
)
def test_mul_pointwise_oracle(fc, gc):
    f = FourierSymbol(2, {m: complex(*c) for m, c in fc.items()})
    g = FourierSymbol(2, {m: complex(*c) for m, c in gc.items()})
    p = sym_mul(f, g)
    pts = np.array([[0.0, 0.0], [0.31, 0.77], [0.5, 0.25], [0.9, 0.1]])
    lhs = p.evaluate(pts)
    rhs = f.evaluate(pts) * g.evaluate(pts)
    scale = max(1.0, float(np.max(np.abs(rhs))))
    assert np.max(np.abs(lhs - rhs)) < 1e-10 * scale


# ---------------------------------------------------------------------------
# derivatives
# ---------------------------------------------------------------------------


def test_derivative_constant():
    assert partial_derivative(FourierSymbol.constant(2, 3.0), 1) == FourierSymbol.zero(2)


def test_derivative_sin():
    d = partial_derivative(FourierSymbol.sin(2, 1), 1)
    assert d.isclose(TWO_PI * FourierSymbol.cos(2, 1), 1e-14)


def test_derivative_finite_difference_oracle():
    f = random_symbol(11, 2, 2)
    d = partial_derivative(f, 2)
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 1, size=(20, 2))
    h = 1e-5
    up = pts.copy()
    up[:, 1] += h
    dn = pts.copy()
    dn[:, 1] -= h
    fd = (f.evaluate(up) - f.evaluate(dn)) / (2 * h)
    scale = max(1.0, float(np.max(np.abs(fd))))
    assert np.max(np.abs(fd - d.evaluate(pts))) < 1e-6 * scale


def test_derivative_axis_out_of_range():
    with pytest.raises(ValueError):
        partial_derivative(FourierSymbol.cos(2, 1), 3)


# ---------------------------------------------------------------------------
# Poisson bracket
# ---------------------------------------------------------------------------


def test_poisson_constant_slot():
    form = standard_t2_form()
    f = random_symbol(5, 2, 2)
    assert poisson_bracket(f, FourierSymbol.constant(2), form) == FourierSymbol.zero(2)


def test_poisson_t2_oracle():
    # {cos 2pi x, cos 2pi y} = 2pi sin(2pi x) sin(2pi y) for omega = 2pi dx^dy
    form = standard_t2_form()
    pb = poisson_bracket(FourierSymbol.cos(2, 1), FourierSymbol.cos(2, 2), form)
    expected = TWO_PI * sym_mul(FourierSymbol.sin(2, 1), FourierSymbol.sin(2, 2))
    assert rel_diff(pb, expected) < 1e-14


def test_poisson_antisymmetry():
    form = standard_t2_form()
    f, g = random_symbol(7, 2, 2), random_symbol(8, 2, 2)
    assert rel_diff(poisson_bracket(f, g, form), -poisson_bracket(g, f, form)) < 1e-13


def test_poisson_jacobi():
    form = standard_t2_form()
    for seed in (1, 2, 3):
        a, b, c = (random_symbol(seed * 10 + j, 2, 2) for j in range(3))
        jac = (
            poisson_bracket(a, poisson_bracket(b, c, form), form)
            + poisson_bracket(b, poisson_bracket(c, a, form), form)
            + poisson_bracket(c, poisson_bracket(a, b, form), form)
        )
        scale = poisson_bracket(a, poisson_bracket(b, c, form), form).coeff_scale()
        assert jac.coeff_scale() < 1e-10 * max(scale, 1.0)


# ---------------------------------------------------------------------------
# Nambu brackets
# ---------------------------------------------------------------------------


def test_nambu_det_constant_slot():
    dens = hyperkahler_volume_density()
    fs = [random_symbol(20 + j, 4, 2) for j in range(3)] + [FourierSymbol.constant(4)]
    assert nambu_bracket_det(fs, dens) == FourierSymbol.zero(4)


def test_nambu_det_repeated_argument():
    dens = hyperkahler_volume_density()
    fs = [random_symbol(30 + j, 4, 2) for j in range(3)]
    fs.append(fs[1])
    out = nambu_bracket_det(fs, dens)
    inputs_scale = max(
        nambu_bracket_det(
            fs[:3] + [random_symbol(99, 4, 2)], dens
        ).coeff_scale(),
        1.0,
    )
    assert out.coeff_scale() < 1e-12 * inputs_scale


def test_nambu_det_vs_pairwise_20_seeds():
    form1 = hyperkahler_forms()[0]
    dens1 = VolumeDensity(4, form1.pfaffian_top())
    for seed in range(20):
        fs = [random_symbol(100 + 7 * seed + j, 4, 2) for j in range(4)]
        det = nambu_bracket_det(fs, dens1)
        pw = nambu_bracket_pairwise(fs, form1)
        assert rel_diff(det, pw) < 1e-10


def test_nambu_pairwise_reduces_to_poisson():
    form = standard_t2_form()
    f, g = random_symbol(41, 2, 2), random_symbol(42, 2, 2)
    pw = nambu_bracket_pairwise([f, g], form)
    assert rel_diff(pw, poisson_bracket(f, g, form)) < 1e-13


def test_nambu_pairwise_three_term_formula():
    # n = 2: {f1,f2}{f3,f4} - {f1,f3}{f2,f4} + {f1,f4}{f2,f3}
    form = hyperkahler_forms()[0]
    fs = [random_symbol(50 + j, 4, 2) for j in range(4)]
    pb = lambda i, j: poisson_bracket(fs[i], fs[j], form)
    expected = (
        sym_mul(pb(0, 1), pb(2, 3))
        - sym_mul(pb(0, 2), pb(1, 3))
        + sym_mul(pb(0, 3), pb(1, 2))
    )
    assert rel_diff(nambu_bracket_pairwise(fs, form), expected) < 1e-13


def test_nambu_arity_mismatch():
    dens = hyperkahler_volume_density()
    with pytest.raises(ValueError):
        nambu_bracket_det([random_symbol(1, 4, 1)] * 3, dens)
    with pytest.raises(ValueError):
        nambu_bracket_pairwise([random_symbol(1, 2, 1)] * 4, standard_t2_form())


# ---------------------------------------------------------------------------
# hyperkahler 4-brackets
# ---------------------------------------------------------------------------


def test_bracket4_constant_argument():
    fs = [random_symbol(60 + j, 4, 2) for j in range(3)]
    out = bracket4_r(fs[0], fs[1], fs[2], FourierSymbol.constant(4, 2.0), 2)
    assert out == FourierSymbol.zero(4)
    assert bracket4_hyp(FourierSymbol.constant(4), *fs) == FourierSymbol.zero(4)


def test_bracket4_r4_scalings():
    # {.}_r = 6 {.} and {.}_hyp = 18 {.} = 3 {.}_r on the flat hyperkahler torus
    dens = hyperkahler_volume_density()
    assert dens.mus == (6.0, 6.0, 6.0)
    assert abs(dens.rho - 6.0 * TWO_PI**2) < 1e-10
    for seed in (70, 71):
        fs = [random_symbol(seed * 5 + j, 4, 2) for j in range(4)]
        det = nambu_bracket_det(fs, dens)
        brs = [bracket4_r(*fs, r) for r in (1, 2, 3)]
        for br in brs:
            assert rel_diff(br, 6.0 * det) < 1e-12
        hyp = bracket4_hyp(*fs)
        assert rel_diff(hyp, 18.0 * det) < 1e-12
        assert rel_diff(hyp, 3.0 * brs[0]) < 1e-12


def test_bracket4_leibniz():
    fs = [random_symbol(80 + j, 4, 2) for j in range(4)]
    s = random_symbol(85, 4, 2)
    for bracket in (
        lambda *a: bracket4_r(*a, 1),
        bracket4_hyp,
        lambda *a: nambu_bracket_det(a, hyperkahler_volume_density()),
    ):
        lhs = bracket(fs[0], fs[1], fs[2], sym_mul(fs[3], s))
        rhs = sym_mul(fs[3], bracket(fs[0], fs[1], fs[2], s)) + sym_mul(
            bracket(*fs), s
        )
        assert rel_diff(lhs, rhs) < 1e-12


def test_bracket4_r_out_of_range():
    fs = [random_symbol(90 + j, 4, 1) for j in range(4)]
    with pytest.raises(ValueError):
        bracket4_r(*fs, 4)


def test_bracket_antisymmetry_50_transpositions():
    rng = np.random.default_rng(123)
    dens = hyperkahler_volume_density()
    form = hyperkahler_forms()[1]
    for trial in range(25):
        fs = [random_symbol(500 + 11 * trial + j, 4, 2) for j in range(4)]
        i, j = sorted(rng.choice(4, size=2, replace=False))
        sw = list(fs)
        sw[i], sw[j] = sw[j], sw[i]
        # two bracket flavors per trial = 50 transposition checks
        a1, a2 = bracket4_r(*fs, 2), bracket4_r(*sw, 2)
        assert rel_diff(a1, -a2) < 1e-12
        b1 = nambu_bracket_det(fs, dens)
        b2 = nambu_bracket_det(sw, dens)
        assert rel_diff(b1, -b2) < 1e-12


def test_fundamental_identity_det_bracket():
    # Nambu bracket of a volume form on the 4-torus satisfies the FI
    dens = hyperkahler_volume_density()
    for seed in (1, 2, 3):
        fs = [random_symbol(700 + seed * 13 + j, 4, 2) for j in range(3)]
        gs = [random_symbol(800 + seed * 13 + j, 4, 2) for j in range(4)]
        inner = nambu_bracket_det(gs, dens)
        lhs = nambu_bracket_det(fs + [inner], dens)
        rhs = FourierSymbol.zero(4)
        for slot in range(4):
            args = list(gs)
            args[slot] = nambu_bracket_det(fs + [gs[slot]], dens)
            rhs = rhs + nambu_bracket_det(args, dens)
        scale = max(lhs.coeff_scale(), rhs.coeff_scale(), 1.0)
        assert lhs.max_coeff_diff(rhs) / scale < 1e-9


# ---------------------------------------------------------------------------
# sup norm
# ---------------------------------------------------------------------------


def test_sup_norm_constant():
    assert sup_norm(FourierSymbol.constant(2, -2.5 + 0j)) == 2.5


def test_sup_norm_cos():
    assert abs(sup_norm(FourierSymbol.cos(2, 1)) - 1.0) < 1e-6


def test_sup_norm_nondecreasing_refinement():
    f = random_symbol(31, 2, 2)
    vals = [float(np.max(np.abs(f.eval_grid(n)))) for n in (12, 24, 48, 96)]
    assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))
    assert sup_norm(f) >= vals[-1] - 1e-12


def test_sup_norm_grid_precondition():
    f = random_symbol(32, 2, 2)
    with pytest.raises(ValueError):
        sup_norm(f, grid_n=8)


# ---------------------------------------------------------------------------
# random symbols, records, presets
# ---------------------------------------------------------------------------


def test_random_symbol_deterministic():
    assert random_symbol(77, 4, 2) == random_symbol(77, 4, 2)


def test_random_symbol_distinct_seeds():
    assert random_symbol(1, 2, 2) != random_symbol(2, 2, 2)


def test_random_symbol_real_flag():
    f = random_symbol(9, 2, 2)
    assert f.is_real
    vals = f.eval_grid(16)
    assert np.max(np.abs(vals.imag)) < 1e-12 * max(1.0, np.max(np.abs(vals)))
    g = random_symbol(9, 2, 2, real_valued=False)
    assert not g.is_real


def test_random_symbol_unit_disc():
    f = random_symbol(13, 2, 3)
    assert all(abs(c) <= 1.0 + 1e-12 for c in f.coeffs.values())
    assert f.max_freq == 3


def test_records_roundtrip():
    f = random_symbol(21, 4, 1)
    g = FourierSymbol.from_records(4, f.to_records())
    assert f.isclose(g, 1e-15)


def test_symbol_presets():
    assert symbol_preset("one", 2) == FourierSymbol.constant(2)
    assert symbol_preset("cos1", 2) == FourierSymbol.cos(2, 1)
    assert symbol_preset("sin3", 4) == FourierSymbol.sin(4, 3)
    with pytest.raises(ValueError):
        symbol_preset("sin3", 2)
    with pytest.raises(ValueError):
        symbol_preset("gaussian", 2)


def test_canonical_form_prunes_zeros():
    f = FourierSymbol(2, {(1, 0): 1.0, (0, 1): 0.0})
    assert (0, 1) not in f.coeffs
    assert len(f) == 1
    g = f - f
    assert g == FourierSymbol.zero(2)
    assert g.max_freq == 0


def test_form_validation():
    with pytest.raises(ValueError):
        ConstantSymplecticForm(np.eye(2))
    with pytest.raises(ValueError):
        ConstantSymplecticForm(np.zeros((2, 2)))
    form = standard_t2_form()
    assert np.allclose(form.matrix @ form.inverse, np.eye(2), atol=1e-12)
    assert abs(form_volume_density(form).rho - TWO_PI) < 1e-12
