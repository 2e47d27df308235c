"""Residuals of the semiclassical bracket-commutator correspondences over k-sweeps.

Every theorem in scope gets a residual function (an operator norm at a single
level k) plus an entry in the THEOREMS registry that knows its geometry, its
expected decay power (1/k or 1/k^2), the slope threshold for the log-log fit
and the default level sweep.

Test tuples: seeded symbols built from coordinate cosines with random
amplitudes, random signs and random constant offsets.  Amplitudes factor out
of every residual by multilinearity, sign flips are exact half-period magnetic
translations, and constant offsets drop out of all brackets and commutators,
so each seed probes the same decay exponent while exercising different
numbers.  Spectral concentration on frequency-1 modes matters: higher-
frequency content carries Toeplitz norm suppression exp(-pi |m|^2 / 2k) that
relaxes as k grows and masks the decay at the accessible levels.
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import operators as ops
from .symbols import (
    FourierSymbol,
    bracket4_hyp,
    bracket4_r,
    form_volume_density,
    nambu_bracket_det,
    poisson_bracket,
    sup_norm,
    sym_mul,
)
from .hilbert import build_theta_basis, get_geometry, quantize_triple, toeplitz_matrix

log = logging.getLogger(__name__)

RESIDUAL_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# experiment tuples
# ---------------------------------------------------------------------------


def _slot_symbol(rng, dim, axes):
    coeffs = {(0,) * dim: complex(rng.uniform(-1.0, 1.0))}
    for a in axes:
        m = [0] * dim
        m[a - 1] = 1
        m = tuple(m)
        rho = 0.5 * math.sqrt(rng.uniform(0.2, 1.0))
        if rng.uniform() < 0.5:
            rho = -rho
        coeffs[m] = complex(rho)
        coeffs[tuple(-v for v in m)] = complex(rho)
    return FourierSymbol(dim, coeffs)


_SLOT_AXES = {
    (2, "single"): ([1, 2],),
    (2, "pair"): ([1, 2], [1, 2]),
    (2, "pair_product"): ([1, 2], [1, 2]),
    (2, "pair_disjoint"): ([1], [2]),
    (4, "single"): ([1, 2, 3, 4],),
    (4, "pair"): ([1], [2, 3, 4]),
    (4, "pair_product"): ([1, 2], [1, 2]),
    (4, "pair_disjoint"): ([1], [2, 3, 4]),
    (4, "quad"): ([1], [2], [3], [4]),
}


def experiment_symbols(seed, dim, kind):
    """Deterministic real test tuple for one experiment (see module docstring).

    kind selects the support layout: 'single' (one symbol spanning all axes),
    'pair' (two symbols; overlapping supports on the 2-torus so that product
    residuals carry recovery-free (m, -m) mode pairs), 'pair_disjoint', or
    'quad' (one symbol per axis).
    """
    axes = _SLOT_AXES.get((dim, kind))
    if axes is None:
        raise ValueError(f"no tuple design for dim={dim}, kind={kind!r}")
    rng = np.random.default_rng(1_000_003 * seed + 977 * len(kind) + dim)
    return [_slot_symbol(rng, dim, ax) for ax in axes]


# ---------------------------------------------------------------------------
# sign auto-detection
# ---------------------------------------------------------------------------

_SIGN_CACHE = {}
_SIGN_LOCK = threading.Lock()


def detect_ik_sign(geometry, r, k=None):
    """Pick the sign s in s*ik[T_f,T_g] - T_{f,g} minimizing the residual.

    Evaluated once per (geometry, structure) at the smallest default level and
    cached; the harness reports the choice.
    """
    key = (geometry.name, int(r))
    with _SIGN_LOCK:
        if key in _SIGN_CACHE:
            return _SIGN_CACHE[key]
    if k is None:
        k = 8 if geometry.dim == 2 else 4
    f, g = experiment_symbols(901, geometry.dim, "pair")
    basis = build_theta_basis(geometry, r, k)
    tf = toeplitz_matrix(f, basis)
    tg = toeplitz_matrix(g, basis)
    tbr = toeplitz_matrix(poisson_bracket(f, g, geometry.form(r)), basis)
    comm = tf @ tg - tg @ tf
    plus = np.linalg.norm(1j * k * comm - tbr, 2)
    minus = np.linalg.norm(-1j * k * comm - tbr, 2)
    sign = 1 if plus <= minus else -1
    log.info(
        "ik sign for %s r=%d: %+d (residuals %+.3e / %+.3e)",
        geometry.name, r, sign, plus, minus,
    )
    with _SIGN_LOCK:
        _SIGN_CACHE[key] = sign
    return sign


# ---------------------------------------------------------------------------
# residual functions (dense geometries)
# ---------------------------------------------------------------------------


def resid_bt_commutator(f, g, geometry, r, k, sign=1):
    """|| s*ik [T_f, T_g] - T_{{f,g}_r} || on structure r."""
    basis = build_theta_basis(geometry, r, k)
    tf = toeplitz_matrix(f, basis)
    tg = toeplitz_matrix(g, basis)
    tbr = toeplitz_matrix(poisson_bracket(f, g, geometry.form(r)), basis)
    return float(np.linalg.norm(sign * 1j * k * (tf @ tg - tg @ tf) - tbr, 2))


def resid_bt_product(f, g, geometry, r, k):
    """|| T_f T_g - T_{fg} ||."""
    basis = build_theta_basis(geometry, r, k)
    tf = toeplitz_matrix(f, basis)
    tg = toeplitz_matrix(g, basis)
    tfg = toeplitz_matrix(sym_mul(f, g), basis)
    return float(np.linalg.norm(tf @ tg - tfg, 2))


_SUP_CACHE = {}


def _sup(f):
    key = f.fingerprint()
    hit = _SUP_CACHE.get(key)
    if hit is None:
        hit = sup_norm(f)
        _SUP_CACHE[key] = hit
    return hit


def resid_norm_bound(f, geometry, r, k):
    """(upper_gap, lower_gap) for |f|_inf - C/k <= ||T_f|| <= |f|_inf."""
    basis = build_theta_basis(geometry, r, k)
    tnorm = float(np.linalg.norm(toeplitz_matrix(f, basis), 2))
    sup = _sup(f)
    return tnorm - sup, sup - tnorm


def _volume_bracket(symbols, geometry):
    """Nambu bracket of Omega = omega_1^n / n! (the volume-form quantization)."""
    return nambu_bracket_det(symbols, form_volume_density(geometry.form(1)))


def resid_volform(symbols, geometry, k, sign=1):
    """|| (s*ik)^n/n! [T_f1,...,T_f2n] - T_{{f1,...,f2n}} || with r=1 operators."""
    n = geometry.dim // 2
    basis = build_theta_basis(geometry, 1, k)
    ts = [toeplitz_matrix(f, basis) for f in symbols]
    tbr = toeplitz_matrix(_volume_bracket(symbols, geometry), basis)
    pref = (sign * 1j * k) ** n / math.factorial(n)
    comm = ops.gen_commutator(ts, "restricted")
    return float(np.linalg.norm(pref * comm - tbr, 2))


def resid_nambu_commute(symbols, geometry, r, k):
    """|| [T_f1, ..., T_f2n] || (no prefactor, no target)."""
    basis = build_theta_basis(geometry, r, k)
    ts = [toeplitz_matrix(f, basis) for f in symbols]
    return float(np.linalg.norm(ops.gen_commutator(ts, "restricted"), 2))


def resid_hyp_fourfn(f, g, h, t, geometry, r, k):
    """|| -(k^2/2)[T_f, T_g, T_h, T_t] - T_{{f,g,h,t}_r} || on structure r."""
    basis = build_theta_basis(geometry, r, k)
    ts = [toeplitz_matrix(x, basis) for x in (f, g, h, t)]
    tbr = toeplitz_matrix(bracket4_r(f, g, h, t, r), basis)
    comm4 = ops.gen_commutator(ts, "restricted")
    return float(np.linalg.norm(-(k**2) / 2.0 * comm4 - tbr, 2))


def _per_structure_blocks(symbols, geometry, k, target):
    """Blocks -(k^2/2) comm4_r - target_r for r = 1, 2, 3."""
    blocks = []
    for r in (1, 2, 3):
        basis = build_theta_basis(geometry, r, k)
        ts = [toeplitz_matrix(x, basis) for x in symbols]
        comm4 = ops.gen_commutator(ts, "restricted")
        blocks.append(-(k**2) / 2.0 * comm4 - target(r, basis))
    return blocks


def resid_directsum(f, g, h, t, geometry, k):
    """Direct-sum residual: block-diagonal norm over the three structures."""
    def target(r, basis):
        return toeplitz_matrix(bracket4_r(f, g, h, t, r), basis)
    blocks = _per_structure_blocks((f, g, h, t), geometry, k, target)
    return ops.op_norm(ops.DirectSum(blocks)).value


def resid_directsum_commute(symbols, geometry, k):
    """|| [bold T_f1, ..., bold T_f4] || = max_r || [T_f1;r, ..., T_f4;r] ||."""
    blocks = []
    for r in (1, 2, 3):
        basis = build_theta_basis(geometry, r, k)
        ts = [toeplitz_matrix(x, basis) for x in symbols]
        blocks.append(ops.gen_commutator(ts, "restricted"))
    return ops.op_norm(ops.DirectSum(blocks)).value


def resid_dim4(f, g, h, t, geometry, k):
    """|| -(k^2/2)[bold T...] - bold T_{{f,g,h,t}} bold T_mu || on the 4-torus."""
    br = nambu_bracket_det((f, g, h, t), geometry.volume)
    mus = geometry.volume.mus

    def target(r, basis):
        tbr = toeplitz_matrix(br, basis)
        tmu = toeplitz_matrix(FourierSymbol.constant(4, mus[r - 1]), basis)
        return tbr @ tmu

    blocks = _per_structure_blocks((f, g, h, t), geometry, k, target)
    return ops.op_norm(ops.DirectSum(blocks)).value


def dim4_best_c(f, g, h, t, geometry, k):
    """Empirical constant c minimizing || -c k^2 [bold T...] - bold T_{hyp} ||."""
    br_hyp = bracket4_hyp(f, g, h, t)
    comms, targets = [], []
    for r in (1, 2, 3):
        basis = build_theta_basis(geometry, r, k)
        ts = [toeplitz_matrix(x, basis) for x in (f, g, h, t)]
        comms.append(ops.gen_commutator(ts, "restricted"))
        targets.append(toeplitz_matrix(br_hyp, basis))

    def objective(c):
        return max(
            np.linalg.norm(-c * k**2 * cm - tg, 2) for cm, tg in zip(comms, targets)
        )

    res = minimize_scalar(objective, bounds=(0.05, 10.0), method="bounded",
                          options={"xatol": 1e-8})
    return float(res.x)


# ---------------------------------------------------------------------------
# tensor-product residuals
# ---------------------------------------------------------------------------

TENSOR_LEVEL_CAP = 8


def _check_tensor_level(k):
    if k > TENSOR_LEVEL_CAP:
        raise ValueError(f"tensor experiments support k <= {TENSOR_LEVEL_CAP}, got {k}")


def _triple(f, geometry, k):
    return quantize_triple(f, geometry, k)


def assemble_w_operator(symbols, geometry, k):
    """The 21-term tensor target for the 4-ary tensor commutator statement.

    Three 'diagonal' terms carrying a 4-bracket quantization in one factor and
    the 4-fold product elsewhere, plus a signed sum over the pairings
    (1,2,3,4), (1,3,2,4), (1,4,2,3) of six cross terms each.
    """
    f1, f2, f3, f4 = symbols
    p4 = sym_mul(sym_mul(f1, f2), sym_mul(f3, f4))
    tp4 = _triple(p4, geometry, k)
    terms = []
    for r in (1, 2, 3):
        br = bracket4_r(f1, f2, f3, f4, r)
        tbr = toeplitz_matrix(br, build_theta_basis(geometry, r, k))
        factors = list(tp4)
        factors[r - 1] = tbr
        terms.append((1.0, tuple(factors)))
    forms = geometry.forms
    for (i, j, m, l), sgn in (((0, 1, 2, 3), 1.0), ((0, 2, 1, 3), -1.0), ((0, 3, 1, 2), 1.0)):
        fi, fj, fm, fl = (symbols[i], symbols[j], symbols[m], symbols[l])
        fifj = sym_mul(fi, fj)
        fmfl = sym_mul(fm, fl)
        a_syms = [sym_mul(fifj, poisson_bracket(fm, fl, forms[r])) for r in range(3)]
        b_syms = [sym_mul(fmfl, poisson_bracket(fi, fj, forms[r])) for r in range(3)]
        ta = [toeplitz_matrix(a_syms[r], build_theta_basis(geometry, r + 1, k)) for r in range(3)]
        tb = [toeplitz_matrix(b_syms[r], build_theta_basis(geometry, r + 1, k)) for r in range(3)]
        terms.extend(
            [
                (sgn, (ta[0], tb[1], tp4[2])),
                (sgn, (ta[0], tp4[1], tb[2])),
                (sgn, (tb[0], ta[1], tp4[2])),
                (sgn, (tb[0], tp4[1], ta[2])),
                (sgn, (tp4[0], ta[1], tb[2])),
                (sgn, (tp4[0], tb[1], ta[2])),
            ]
        )
    return ops.KronSum(terms)


def tensor_residual_operator(symbols, geometry, k, which, sign=1):
    """Residual KronSum for one tensor-product statement (not yet normed)."""
    _check_tensor_level(k)
    forms = geometry.forms
    if which == "triple_comm":
        f, g = symbols
        tf = _triple(f, geometry, k)
        tg = _triple(g, geometry, k)
        comms = [tf[r] @ tg[r] - tg[r] @ tf[r] for r in range(3)]
        brs = [
            toeplitz_matrix(poisson_bracket(f, g, forms[r]), build_theta_basis(geometry, r + 1, k))
            for r in range(3)
        ]
        pref = (sign * 1j * k) ** 3
        return ops.kron3(*comms, coef=pref) + ops.kron3(*brs, coef=-1.0)
    if which in ("comm", "comm2"):
        f, g = symbols
        tf = ops.kron3(*_triple(f, geometry, k))
        tg = ops.kron3(*_triple(g, geometry, k))
        comm = ops.kron_commutator(tf, tg)
        if which == "comm2":
            return comm
        fg = sym_mul(f, g)
        tfg = _triple(fg, geometry, k)
        brs = [
            toeplitz_matrix(poisson_bracket(f, g, forms[r]), build_theta_basis(geometry, r + 1, k))
            for r in range(3)
        ]
        out = comm.scale(sign * 1j * k)
        for r in range(3):
            factors = list(tfg)
            factors[r] = brs[r]
            out = out + ops.kron3(*factors, coef=-1.0)
        return out
    if which in ("comm4", "prop4", "W"):
        if len(symbols) != 4:
            raise ValueError(f"tensor statement {which!r} needs 4 symbols")
        triples = [ops.kron3(*_triple(f, geometry, k)) for f in symbols]
        if which == "comm4":
            return ops.kron_comm4(triples)
        if which == "W":
            w = assemble_w_operator(symbols, geometry, k)
            return ops.kron_comm4(triples).scale(-(k**2) / 2.0) + w.scale(-1.0)
        # prop4: Kronecker triple of per-structure 4-brackets
        comm_factors, br_factors = [], []
        for r in (1, 2, 3):
            basis = build_theta_basis(geometry, r, k)
            ts = [toeplitz_matrix(x, basis) for x in symbols]
            comm_factors.append(ops.gen_commutator(ts, "restricted"))
            br_factors.append(toeplitz_matrix(bracket4_r(*symbols, r), basis))
        return ops.kron3(*comm_factors, coef=-(k**6) / 8.0) + ops.kron3(
            *br_factors, coef=-1.0
        )
    raise ValueError(f"unknown tensor statement {which!r}")


def resid_tensor(symbols, geometry, k, which, sign=1, norm_tol=1e-6):
    """Structured-norm residual of a tensor statement; returns (value, converged)."""
    op = tensor_residual_operator(symbols, geometry, k, which, sign=sign)
    est = ops.op_norm(op, tol=norm_tol)
    if not est.converged:
        log.warning(
            "tensor norm for %s at k=%d not converged after %d iterations "
            "(partial estimate %.6e)", which, k, est.iterations, est.value,
        )
    return est.value, est.converged


# ---------------------------------------------------------------------------
# rate fitting
# ---------------------------------------------------------------------------


def fit_rate(ks, residuals, floor=RESIDUAL_FLOOR):
    """Least squares of log(residual) vs log(k); returns (slope, intercept, R^2).

    Residuals at or below the floor are excluded (exact zeros carry no rate
    information); at least 4 usable points are required.
    """
    pairs = [(k, r) for k, r in zip(ks, residuals) if r > floor]
    if len(pairs) < 4:
        raise ValueError(f"need >= 4 usable points for a rate fit, got {len(pairs)}")
    lk = np.log([p[0] for p in pairs])
    lr = np.log([p[1] for p in pairs])
    A = np.vstack([lk, np.ones_like(lk)]).T
    sol, *_ = np.linalg.lstsq(A, lr, rcond=None)
    pred = A @ sol
    ss_res = float(np.sum((lr - pred) ** 2))
    ss_tot = float(np.sum((lr - np.mean(lr)) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(sol[0]), float(sol[1]), r2


@dataclass
class ResidualSeries:
    """One theorem, one tuple, one structure index, over a k-sweep."""

    theorem_id: str
    geometry: str
    r: int
    seed: int
    ks: list
    residuals: list
    k_power: int
    slope_threshold: float
    slope: float = math.nan
    intercept: float = math.nan
    r2: float = math.nan
    excluded_ks: list = field(default_factory=list)
    converged: bool = True
    extra: dict = field(default_factory=dict)

    @property
    def scaled_residuals(self):
        return [r * k**self.k_power for k, r in zip(self.ks, self.residuals)]

    def fit(self, drop_first=True):
        """Fit the decay rate; the smallest level is pre-asymptotic and dropped."""
        ks = list(self.ks)
        rs = list(self.residuals)
        if drop_first and len(ks) > 4:
            ks, rs = ks[1:], rs[1:]
        self.excluded_ks = [k for k, r in zip(ks, rs) if r <= RESIDUAL_FLOOR]
        self.slope, self.intercept, self.r2 = fit_rate(ks, rs)
        return self

    @property
    def passed(self):
        return (
            self.converged
            and self.slope <= self.slope_threshold
            and self.r2 >= 0.9
        )


# ---------------------------------------------------------------------------
# theorem registry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TheoremSpec:
    theorem_id: str
    description: str
    geometries: tuple
    arity: int
    k_power: int
    slope_threshold: float
    per_structure: bool = False
    tensor: bool = False
    sign_sensitive: bool = False


THEOREMS = {
    t.theorem_id: t
    for t in (
        TheoremSpec("bt_commutator", "ik[T_f,T_g] -> T_{f,g}", ("t2", "t4"), 2, 1, -0.7,
                    per_structure=False, sign_sensitive=True),
        TheoremSpec("bt_product", "T_f T_g -> T_fg", ("t2", "t4"), 2, 1, -0.7),
        TheoremSpec("norm_bound", "|f|_inf - C/k <= |T_f| <= |f|_inf", ("t2", "t4"), 1, 1, -0.7),
        TheoremSpec("volform", "(ik)^n/n! [T..] -> T_{vol bracket}", ("t2", "t4"),
                    0, 1, -0.7, sign_sensitive=True),
        TheoremSpec("nambu_commute", "|[T_f1,...,T_f2n]| -> 0", ("t2", "t4"), 0, 0, -0.7),
        TheoremSpec("hyp_fourfn", "-(k^2/2)[T..] -> T_{4-bracket_r}", ("t4",), 4, 1, -0.7,
                    per_structure=True),
        TheoremSpec("directsum", "direct-sum 4-bracket correspondence", ("t4",), 4, 1, -0.7),
        TheoremSpec("directsum_commute", "|[bold T...]| = O(1/k^2)", ("t4",), 4, 2, -1.6),
        TheoremSpec("dim4", "-(k^2/2)[bold T..] -> bold T_bracket bold T_mu", ("t4",), 4, 1, -0.7),
        TheoremSpec("tensor_triple_comm", "(ik)^3 tensor of commutators", ("t4",), 2, 1, -0.7,
                    tensor=True, sign_sensitive=True),
        TheoremSpec("tensor_comm", "ik[T_f (x) ..., T_g (x) ...] -> 3-term sum", ("t4",), 2, 1,
                    -0.7, tensor=True, sign_sensitive=True),
        TheoremSpec("tensor_comm2", "|[tensor T_f, tensor T_g]| = O(1/k)", ("t4",), 2, 1, -0.7,
                    tensor=True),
        TheoremSpec("tensor_comm4", "|[tensor T x4]| = O(1/k^2)", ("t4",), 4, 2, -1.6,
                    tensor=True),
        TheoremSpec("tensor_prop4", "-(k^6/8) Kron of 4-brackets", ("t4",), 4, 2, -1.6,
                    tensor=True),
        TheoremSpec("tensor_W", "-(k^2/2)[tensor T x4] -> W", ("t4",), 4, 1, -0.7, tensor=True),
    )
}

DEFAULT_KS = {"t2": (8, 12, 16, 24, 32), "t4": (4, 6, 8, 10, 12), "tensor": (2, 3, 4, 5, 6)}


def default_ks_for(theorem_id, geometry_name):
    spec = THEOREMS[theorem_id]
    if spec.tensor:
        return DEFAULT_KS["tensor"]
    if theorem_id == "nambu_commute" and geometry_name == "t2":
        # the pairwise commutator norm needs slightly deeper levels before its
        # 1/k decay dominates the Toeplitz norm recovery
        return (12, 16, 24, 32, 48)
    return DEFAULT_KS[geometry_name]


def _series_arity(spec, dim):
    return spec.arity if spec.arity else dim


def _tuple_kind(spec, theorem_id, dim):
    arity = _series_arity(spec, dim)
    if arity == 1:
        return "single"
    if arity == 4:
        return "quad"
    if theorem_id == "nambu_commute":
        return "pair_disjoint"
    if theorem_id == "bt_product":
        return "pair_product"
    return "pair"


def evaluate_residual(theorem_id, symbols, geometry, r, k, sign=1, norm_tol=1e-6):
    """Dispatch a single residual evaluation; returns (value, converged)."""
    spec = THEOREMS[theorem_id]
    if spec.tensor:
        which = {
            "tensor_triple_comm": "triple_comm",
            "tensor_comm": "comm",
            "tensor_comm2": "comm2",
            "tensor_comm4": "comm4",
            "tensor_prop4": "prop4",
            "tensor_W": "W",
        }[theorem_id]
        return resid_tensor(symbols, geometry, k, which, sign=sign, norm_tol=norm_tol)
    if theorem_id == "bt_commutator":
        return resid_bt_commutator(symbols[0], symbols[1], geometry, r, k, sign=sign), True
    if theorem_id == "bt_product":
        return resid_bt_product(symbols[0], symbols[1], geometry, r, k), True
    if theorem_id == "norm_bound":
        upper, lower = resid_norm_bound(symbols[0], geometry, r, k)
        return max(lower, 0.0), True
    if theorem_id == "volform":
        return resid_volform(symbols, geometry, k, sign=sign), True
    if theorem_id == "nambu_commute":
        return resid_nambu_commute(symbols, geometry, r, k), True
    if theorem_id == "hyp_fourfn":
        return resid_hyp_fourfn(*symbols, geometry, r, k), True
    if theorem_id == "directsum":
        return resid_directsum(*symbols, geometry, k), True
    if theorem_id == "directsum_commute":
        return resid_directsum_commute(symbols, geometry, k), True
    if theorem_id == "dim4":
        return resid_dim4(*symbols, geometry, k), True
    raise ValueError(f"unknown theorem id {theorem_id!r}")


def run_sweep(theorem_id, geometry_preset, seeds=(1, 2, 3), ks=None, norm_tol=1e-6,
              progress=None, symbols_factory=None):
    """Run a theorem over its level sweep for each seeded tuple.

    Returns a list of fitted ResidualSeries (one per tuple, and per structure
    index for the per-structure statements).  symbols_factory(seed, dim, arity)
    overrides the default tuple design when given.
    """
    spec = THEOREMS[theorem_id]
    geometry, default_r = get_geometry(geometry_preset)
    if geometry.name not in spec.geometries:
        raise ValueError(f"theorem {theorem_id!r} does not apply to {geometry_preset!r}")
    ks = list(ks) if ks is not None else list(default_ks_for(theorem_id, geometry.name))
    if not ks:
        raise ValueError("empty level sweep")
    kind = _tuple_kind(spec, theorem_id, geometry.dim)
    arity = _series_arity(spec, geometry.dim)

    nk = spec.k_power if spec.k_power else geometry.dim // 2
    threshold = spec.slope_threshold
    if theorem_id == "nambu_commute":
        threshold = -0.7 if geometry.dim == 2 else -1.6

    spans_all = spec.tensor or theorem_id in ("directsum", "directsum_commute", "dim4")
    r_values = (1, 2, 3) if spec.per_structure else (default_r,)
    out = []
    for seed in seeds:
        if symbols_factory is not None:
            symbols = list(symbols_factory(seed, geometry.dim, arity))
            if len(symbols) != arity:
                raise ValueError(
                    f"theorem {theorem_id!r} needs {arity} symbols, got {len(symbols)}"
                )
        else:
            symbols = experiment_symbols(seed, geometry.dim, kind)
        sign = 1
        if spec.sign_sensitive:
            sign = detect_ik_sign(geometry, default_r)
        for r in r_values:
            residuals = []
            all_conv = True
            for k in ks:
                val, conv = evaluate_residual(
                    theorem_id, symbols, geometry, r, k, sign=sign, norm_tol=norm_tol
                )
                residuals.append(val)
                all_conv = all_conv and conv
                if progress is not None:
                    progress(theorem_id, seed, r, k, val)
            series = ResidualSeries(
                theorem_id=theorem_id,
                geometry=geometry_preset,
                r=0 if spans_all else r,
                seed=seed,
                ks=ks,
                residuals=residuals,
                k_power=nk,
                slope_threshold=threshold,
                converged=all_conv,
                extra={"sign": sign},
            )
            if theorem_id == "dim4":
                series.extra["c_fit"] = dim4_best_c(*symbols, geometry, ks[-1])
            series.fit()
            out.append(series)
    return out
