"""Holomorphic section spaces on flat tori and Berezin-Toeplitz compression.

Geometry presets: the square 2-torus with its standard complex structure, and
the flat hyperkahler 4-torus R^4/Z^4 whose three complex structures J_1, J_2,
J_3 act as left quaternion multiplication by i, j, k (so J_1 J_2 = J_3).  The
metric carries a uniform 2*pi scaling, making every Kahler form omega_r equal
to 2*pi times an integer form.

For each structure the level-k section space is realized concretely by theta
functions with characteristics.  Each J_r pairs the coordinates into
holomorphic variables w_l = x_p + i x_q with block modulus tau = i, so a basis
section is a product of one-variable Gaussian lattice sums

    theta_a(w) = sum_n exp(-pi k (n + a/k)^2 + 2 pi i k (n + a/k) w),  a = 0..k-1,

quasi-periodic under x_p -> x_p + 1 (trivially) and x_q -> x_q + 1 (with an
explicit multiplier), with hermitian weight exp(-phi_k), phi_k = 2 pi k sum_l
(x_{q_l})^2.  Inner products and Toeplitz matrices are computed by uniform
quadrature of the weighted densities, which converges spectrally because the
integrands are smooth and periodic; correctness is pinned by testable
invariants (quasi-periodicity, periodic density, curvature of the weight,
T_1 = I) rather than trusted formulas.
"""

from __future__ import annotations

import hashlib
import math
import os
import threading
from dataclasses import dataclass

import numpy as np

from .symbols import (
    VolumeDensity,
    hyperkahler_forms,
    hyperkahler_volume_density,
    standard_t2_form,
)

TWO_PI = 2.0 * math.pi

# Lattice sums keep Gaussian terms down to exp(-_THETA_LOG_CUT) of the peak.
_THETA_LOG_CUT = 40.0


# ---------------------------------------------------------------------------
# geometries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TorusGeometry:
    """Flat torus R^d/Z^d with one (d=2) or three (d=4) compatible complex structures."""

    name: str
    dim: int
    complex_structures: tuple
    forms: tuple
    volume: VolumeDensity

    @property
    def n_structures(self):
        return len(self.complex_structures)

    def structure(self, r):
        if not 1 <= r <= self.n_structures:
            raise ValueError(f"structure index r={r} out of range for {self.name}")
        return self.complex_structures[r - 1]

    def form(self, r):
        if not 1 <= r <= self.n_structures:
            raise ValueError(f"structure index r={r} out of range for {self.name}")
        return self.forms[r - 1]

    def coordinate_pairs(self, r):
        """Holomorphic coordinate pairing of J_r: w_l = x_p + i x_q, 0-based axes.

        Each J here is a signed permutation with J^2 = -I; for every 2-orbit
        exactly one ordering (p, q) satisfies J e_p = +e_q, and that ordering
        makes the block modulus equal to i.
        """
        J = self.structure(r)
        pairs = []
        used = set()
        for a in range(self.dim):
            if a in used:
                continue
            col = J[:, a]
            b = int(np.argmax(np.abs(col)))
            sign = int(round(col[b]))
            if sign == 1:
                p, q = a, b
            else:
                p, q = b, a
            if round(J[q, p]) != 1 or round(J[p, q]) != -1:
                raise ValueError("complex structure is not a compatible signed permutation")
            pairs.append((p, q))
            used.update((p, q))
        return tuple(pairs)


_J_T2 = np.array([[0, -1], [1, 0]], dtype=float)

# Left quaternion multiplication by i, j, k on (1, i, j, k) = (e1, e2, e3, e4).
_J_T4 = (
    np.array([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]], dtype=float),
    np.array([[0, 0, -1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]], dtype=float),
    np.array([[0, 0, 0, -1], [0, 0, -1, 0], [0, 1, 0, 0], [1, 0, 0, 0]], dtype=float),
)


def _t2_geometry():
    form = standard_t2_form()
    vol = VolumeDensity(dim=2, rho=form.pfaffian_top(), mus=(1.0,))
    return TorusGeometry("t2", 2, (_J_T2,), (form,), vol)


def _t4_geometry():
    return TorusGeometry(
        "t4", 4, _J_T4, hyperkahler_forms(), hyperkahler_volume_density()
    )


_GEOMS = {"t2": _t2_geometry(), "t4": _t4_geometry()}


def get_geometry(preset):
    """Resolve a preset name to (geometry, default structure index r).

    Accepted names: 't2', 't4', 't4-r1', 't4-r2', 't4-r3'.
    """
    name = preset.strip().lower()
    if name == "t2":
        return _GEOMS["t2"], 1
    if name == "t4":
        return _GEOMS["t4"], 1
    if name.startswith("t4-r"):
        try:
            r = int(name[4:])
        except ValueError:
            r = -1
        if r in (1, 2, 3):
            return _GEOMS["t4"], r
    raise ValueError(f"unknown geometry preset {preset!r}")


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureGrid:
    """Uniform product grid on [0,1)^d; trapezoidal weights collapse to (1/n)^d."""

    nodes_per_axis: int
    dim: int

    def __post_init__(self):
        if self.nodes_per_axis < 2:
            raise ValueError("need at least 2 nodes per axis")

    @property
    def nodes(self):
        return np.arange(self.nodes_per_axis) / self.nodes_per_axis

    @property
    def weight(self):
        return (1.0 / self.nodes_per_axis) ** self.dim


def default_grid_n(k, max_freq=0):
    """Per-axis node count: theta densities live at scale 1/sqrt(k); resolve f too."""
    return max(8 * k + 4 * max_freq, 32)


# ---------------------------------------------------------------------------
# theta bases
# ---------------------------------------------------------------------------


class ThetaBasis:
    """Level-k holomorphic section basis for one complex structure of a torus.

    Sections are indexed by characteristic tuples a = (a_1, ..., a_m) with
    a_l in {0, ..., k-1}, flattened in C order; N = k^m.
    """

    def __init__(self, geometry, r, k):
        if k < 1:
            raise ValueError("level k must be >= 1")
        self.geometry = geometry
        self.r = int(r)
        self.k = int(k)
        self.pairs = geometry.coordinate_pairs(r)
        self.m = len(self.pairs)
        self.N = k**self.m
        self._axis_cache = {}
        self._block_cache = {}
        self._gram_cache = {}
        self._lock = threading.Lock()

    # ---- one-variable building blocks ----

    def _n_range(self, vmax):
        R = math.sqrt(_THETA_LOG_CUT / (math.pi * self.k))
        lo = int(math.floor(-vmax - 1 - R)) - 1
        hi = int(math.ceil(R)) + 1
        return np.arange(lo, hi + 1)

    def axis_weighted_values(self, u, v):
        """psi_a(u, v) = exp(-pi k v^2) theta_a(u + i v) on the product grid u x v.

        Returns an array of shape (k, len(u), len(v)).  The weighted form is
        bounded, so no overflow for any level.
        """
        k = self.k
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        ns = self._n_range(float(np.max(v, initial=0.0)))
        a = np.arange(k)
        c = a / k
        # amp[a, n, v] = exp(-pi k (n + c + v)^2)
        base = ns[None, :, None] + c[:, None, None] + v[None, None, :]
        amp = np.exp(-math.pi * k * base**2)
        # phase[a, n, u] = exp(2 pi i (k n + a) u)
        freq = k * ns[None, :, None] + a[:, None, None]
        phase = np.exp(2j * math.pi * freq * u[None, None, :])
        return np.einsum("anv,anu->auv", amp, phase)

    def axis_section_values(self, points_u, points_v):
        """Unweighted theta_a(u + i v) at paired point lists (same length)."""
        k = self.k
        pu = np.asarray(points_u, dtype=float)
        pv = np.asarray(points_v, dtype=float)
        ns = self._n_range(float(np.max(np.abs(pv), initial=0.0)) + 1.0)
        c = (np.arange(k) / k)[:, None, None]
        n = ns[None, :, None]
        expo = (
            -math.pi * k * (n + c) ** 2
            - TWO_PI * k * (n + c) * pv[None, None, :]
            + 2j * math.pi * (k * n + c * k) * pu[None, None, :]
        )
        return np.exp(expo).sum(axis=1)

    # ---- sections on the torus ----

    def _char_tuples(self):
        grids = np.meshgrid(*([np.arange(self.k)] * self.m), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def section_values(self, points):
        """Raw section values s_A(x), shape (N, P), for points of shape (P, d).

        Overflows for very large k * |Im w|; intended for invariant tests at
        moderate levels.
        """
        pts = np.asarray(points, dtype=float)
        per_axis = []
        for p, q in self.pairs:
            per_axis.append(self.axis_section_values(pts[:, p], pts[:, q]))
        chars = self._char_tuples()
        out = np.ones((self.N, pts.shape[0]), dtype=complex)
        for l in range(self.m):
            out = out * per_axis[l][chars[:, l]]
        return out

    def weight_phi(self, points):
        """Kahler weight exponent phi_k(x) = 2 pi k sum_l (x_{q_l})^2."""
        pts = np.asarray(points, dtype=float)
        tot = np.zeros(pts.shape[:-1])
        for _, q in self.pairs:
            tot = tot + pts[..., q] ** 2
        return TWO_PI * self.k * tot

    def lattice_multiplier(self, axis, points):
        """Multiplier m(x) with s(x + e_axis) = m(x) s(x), per section, shape (N, P).

        Unit translations along a 'real' pair coordinate have multiplier 1;
        along an 'imaginary' coordinate x_q the multiplier is
        exp(pi k - 2 pi i k w_l(x)), independent of the characteristic.
        """
        pts = np.asarray(points, dtype=float)
        P = pts.shape[0]
        for p, q in self.pairs:
            if axis == p:
                return np.ones((self.N, P), dtype=complex)
            if axis == q:
                w = pts[:, p] + 1j * pts[:, q]
                mult = np.exp(math.pi * self.k - 2j * math.pi * self.k * w)
                return np.broadcast_to(mult, (self.N, P)).copy()
        raise ValueError(f"axis {axis} out of range")

    def curvature_matrix_fd(self, h=1e-4, base_point=None):
        """(1/2)(J^T H - H J) for the finite-difference Hessian H of phi_k.

        For the shipped quadratic weights this reproduces k * omega_r exactly
        up to O(round-off); the invariant test compares it with k times the
        form matrix.
        """
        d = self.geometry.dim
        x0 = np.full(d, 0.234) if base_point is None else np.asarray(base_point, float)
        H = np.zeros((d, d))
        for i in range(d):
            for l in range(d):
                pp = x0.copy(); pp[i] += h; pp[l] += h
                pm = x0.copy(); pm[i] += h; pm[l] -= h
                mp = x0.copy(); mp[i] -= h; mp[l] += h
                mm = x0.copy(); mm[i] -= h; mm[l] -= h
                vals = self.weight_phi(np.stack([pp, pm, mp, mm]))
                H[i, l] = (vals[0] - vals[1] - vals[2] + vals[3]) / (4 * h * h)
        J = self.geometry.structure(self.r)
        return 0.5 * (J.T @ H - H @ J)

    # ---- quadrature building blocks ----

    def _axis_psi(self, ng):
        key = int(ng)
        with self._lock:
            hit = self._axis_cache.get(key)
        if hit is not None:
            return hit
        nodes = np.arange(ng) / ng
        psi = self.axis_weighted_values(nodes, nodes)
        with self._lock:
            self._axis_cache[key] = psi
        return psi

    def axis_mode_blocks(self, ng, F):
        """B[mu, mv, a, b] = (1/ng^2) sum_grid conj(psi_a) psi_b e^{2 pi i(mu u + mv v)}.

        mu, mv run over -F..F (axis 0/1 of the output, offset by F).  Computed
        by 2-D inverse FFTs of the sampled sesquilinear density, chunked over
        sections to bound memory.  Blocks for smaller F are sliced out of any
        cached larger block.
        """
        if ng <= 2 * F:
            raise ValueError(f"grid too coarse: ng={ng} cannot resolve frequency {F}")
        ng, F = int(ng), int(F)
        with self._lock:
            cached = self._block_cache.get(ng)
        if cached is not None:
            Fc = (cached.shape[0] - 1) // 2
            if Fc >= F:
                sl = slice(Fc - F, Fc + F + 1)
                return cached[sl, sl]
        psi = self._axis_psi(ng)
        k = self.k
        modes = np.arange(-F, F + 1) % ng
        block = np.empty((2 * F + 1, 2 * F + 1, k, k), dtype=complex)
        chunk = max(1, int(3e8 // (k * ng * ng * 16)))
        for a0 in range(0, k, chunk):
            a1 = min(k, a0 + chunk)
            dens = np.conj(psi[a0:a1, None]) * psi[None, :]
            full = np.fft.ifft2(dens, axes=(2, 3))
            sel = full[:, :, modes][:, :, :, modes]
            block[:, :, a0:a1, :] = sel.transpose(2, 3, 0, 1)
        with self._lock:
            prev = self._block_cache.get(ng)
            if prev is None or (prev.shape[0] - 1) // 2 < F:
                self._block_cache[ng] = block
        return block

    # ---- Gram and orthonormalization ----

    def gram(self, ng=None):
        """Gram matrix of the raw sections under quadrature at ng nodes per axis."""
        ng = int(ng) if ng is not None else default_grid_n(self.k)
        with self._lock:
            hit = self._gram_cache.get(ng)
        if hit is not None:
            return hit[0]
        G, C = self._gram_and_chol(ng)
        return G

    def orthonormalizer(self, ng=None):
        """Upper-triangular C with C* G C = I (inverse Cholesky of the Gram matrix)."""
        ng = int(ng) if ng is not None else default_grid_n(self.k)
        with self._lock:
            hit = self._gram_cache.get(ng)
        if hit is not None:
            return hit[1]
        G, C = self._gram_and_chol(ng)
        return C

    def _gram_and_chol(self, ng):
        axis_grams = []
        for l in range(self.m):
            B = self.axis_mode_blocks(ng, 0)
            axis_grams.append(B[0, 0])
        G = axis_grams[0]
        for g_next in axis_grams[1:]:
            G = np.kron(G, g_next)
        G = 0.5 * (G + G.conj().T)
        L = np.linalg.cholesky(G)
        C = np.linalg.inv(L).conj().T
        with self._lock:
            self._gram_cache[ng] = (G, C)
        return G, C


_BASIS_CACHE = {}
_BASIS_LOCK = threading.Lock()


def build_theta_basis(geometry, r, k):
    """Construct (or fetch from the cache) the level-k basis for structure r."""
    key = (geometry.name, int(r), int(k))
    with _BASIS_LOCK:
        b = _BASIS_CACHE.get(key)
        if b is None:
            b = ThetaBasis(geometry, r, k)
            _BASIS_CACHE[key] = b
    return b


def clear_caches():
    """Drop all cached bases and Toeplitz matrices (mainly for tests)."""
    with _BASIS_LOCK:
        _BASIS_CACHE.clear()
    with _TOEPLITZ_LOCK:
        _TOEPLITZ_CACHE.clear()


# ---------------------------------------------------------------------------
# Toeplitz compression
# ---------------------------------------------------------------------------

_TOEPLITZ_CACHE = {}
_TOEPLITZ_LOCK = threading.Lock()


def _symbol_key(f):
    h = hashlib.sha256()
    h.update(repr(f.dim).encode())
    h.update(repr(f._F).encode())
    h.update(f._box.tobytes())
    return h.hexdigest()


def _resolve_ng(f, basis, grid):
    if grid is None:
        return default_grid_n(basis.k, f.max_freq)
    if isinstance(grid, QuadratureGrid):
        return grid.nodes_per_axis
    return int(grid)


def toeplitz_raw(f, basis, ng):
    """Raw-frame Toeplitz matrix M_ab = <s_a, f s_b> under quadrature (no orthonormalization)."""
    if f.dim != basis.geometry.dim:
        raise ValueError("symbol dimension does not match the geometry")
    F = f.max_freq
    k = basis.k
    box = f._padded(F)
    if basis.m == 1:
        B = basis.axis_mode_blocks(ng, F)
        p, q = basis.pairs[0]
        order = (p, q)
        cbox = np.transpose(box, order).reshape(-1)
        Bf = B.reshape(-1, k, k)
        return np.tensordot(cbox, Bf, axes=1)
    # two pair blocks on the 4-torus; both share the same one-variable model
    (p1, q1), (p2, q2) = basis.pairs
    cbox = np.transpose(box, (p1, q1, p2, q2)).reshape((2 * F + 1) ** 2, (2 * F + 1) ** 2)
    B1 = basis.axis_mode_blocks(ng, F).reshape(-1, k, k)
    B2 = B1
    D = np.tensordot(cbox, B2, axes=([1], [0]))  # (K1, a2, b2)
    M4 = np.tensordot(B1, D, axes=([0], [0]))  # (a1, b1, a2, b2)
    return np.ascontiguousarray(M4.transpose(0, 2, 1, 3)).reshape(basis.N, basis.N)


def toeplitz_matrix(f, basis, grid=None):
    """Berezin-Toeplitz matrix of f on the orthonormalized level-k section frame.

    T_f = C* M_f C where M is the raw quadrature matrix of multiplication by f
    and C is the inverse Cholesky factor of the Gram matrix.  Results are
    cached per (geometry, structure, level, grid, symbol); set NAMBU_CACHE_DIR
    to also persist them on disk.
    """
    ng = _resolve_ng(f, basis, grid)
    key = (basis.geometry.name, basis.r, basis.k, ng, _symbol_key(f))
    with _TOEPLITZ_LOCK:
        hit = _TOEPLITZ_CACHE.get(key)
    if hit is not None:
        return hit
    cached = _disk_cache_load(key)
    if cached is not None:
        with _TOEPLITZ_LOCK:
            _TOEPLITZ_CACHE[key] = cached
        return cached
    M = toeplitz_raw(f, basis, ng)
    C = basis.orthonormalizer(default_grid_n(basis.k))
    T = C.conj().T @ M @ C
    with _TOEPLITZ_LOCK:
        _TOEPLITZ_CACHE[key] = T
    _disk_cache_store(key, T)
    return T


def quantize_triple(f, geometry, k, grid=None):
    """The three level-k Toeplitz matrices of f, one per complex structure of the 4-torus."""
    if geometry.dim != 4:
        raise ValueError("quantize_triple requires the 4-torus geometry")
    out = []
    for r in (1, 2, 3):
        basis = build_theta_basis(geometry, r, k)
        out.append(toeplitz_matrix(f, basis, grid=grid))
    return tuple(out)


# ---------------------------------------------------------------------------
# optional on-disk cache
# ---------------------------------------------------------------------------


def _disk_cache_path(key):
    root = os.environ.get("NAMBU_CACHE_DIR")
    if not root:
        return None
    h = hashlib.sha256(repr(key).encode()).hexdigest()[:32]
    return os.path.join(root, f"toeplitz_{h}.npy")


def _disk_cache_load(key):
    path = _disk_cache_path(key)
    if path is None or not os.path.exists(path):
        return None
    try:
        return np.load(path)
    except Exception:
        return None


def _disk_cache_store(key, matrix):
    path = _disk_cache_path(key)
    if path is None:
        return
    os.makedirs(os.path.dirname(path), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        np.save(fh, matrix)
    os.replace(tmp, path)
