"""Exact algebra of trigonometric polynomials on the d-torus and the classical brackets built from them.

Symbols are finite Fourier sums f(x) = sum_m c_m exp(2*pi*i m.x) with m in Z^d,
so products, derivatives and all brackets stay inside the class and are computed
exactly (up to float round-off).  The bracket zoo: Poisson brackets of constant
symplectic forms, the volume-form Nambu bracket (Jacobian determinant over a
density), its pairwise-product expansion, and the three hyperkahler 4-brackets
on the 4-torus together with their sum.

Coefficients are stored on a dense centered box over the support cube; the box
is trimmed to the actual max frequency and entries below 1e-15 relative to the
largest coefficient are pruned, which keeps the representation canonical.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

TWO_PI = 2.0 * math.pi

# Pruning threshold, relative to the largest stored coefficient magnitude.
PRUNE_TOL = 1e-15


def _boxify(dim, F, coeffs):
    box = np.zeros((2 * F + 1,) * dim, dtype=complex)
    for m, c in coeffs:
        box[tuple(v + F for v in m)] += c
    return box


class FourierSymbol:
    """A trigonometric polynomial on T^d, stored as a centered coefficient box.

    box[i_1,...,i_d] is the coefficient of frequency m = (i_1 - F, ..., i_d - F)
    where F = max_freq and the box has shape (2F+1)^d.
    """

    __slots__ = ("dim", "_F", "_box")

    def __init__(self, dim, coeffs=None):
        if dim not in (2, 4):
            raise ValueError(f"dim must be 2 or 4, got {dim}")
        self.dim = int(dim)
        items = []
        if coeffs is not None:
            raw = coeffs.items() if hasattr(coeffs, "items") else coeffs
            for m, c in raw:
                m = tuple(int(v) for v in m)
                if len(m) != self.dim:
                    raise ValueError(f"frequency {m} has wrong length for dim {self.dim}")
                items.append((m, complex(c)))
        F = max((max(abs(v) for v in m) for m, _ in items), default=0)
        self._F = F
        self._box = _boxify(self.dim, F, items)
        self._canonicalize()

    @classmethod
    def _from_box(cls, dim, box):
        obj = cls.__new__(cls)
        obj.dim = dim
        obj._box = np.asarray(box, dtype=complex)
        obj._F = (obj._box.shape[0] - 1) // 2
        obj._canonicalize()
        return obj

    def _canonicalize(self):
        box = self._box
        mags = np.abs(box)
        amax = float(mags.max()) if box.size else 0.0
        if amax == 0.0:
            self._F = 0
            self._box = np.zeros((1,) * self.dim, dtype=complex)
            return
        box[mags <= PRUNE_TOL * max(1.0, amax)] = 0.0
        # trim to the bounding cube of the surviving support; products usually
        # fill their box, so first test the (cheap) boundary shells
        F = self._F
        newF = F
        while newF > 0:
            shell_occupied = False
            for ax in range(self.dim):
                lo = box[tuple(slice(None) if a != ax else F - newF for a in range(self.dim))]
                hi = box[tuple(slice(None) if a != ax else F + newF for a in range(self.dim))]
                if np.any(lo) or np.any(hi):
                    shell_occupied = True
                    break
            if shell_occupied:
                break
            newF -= 1
        if not np.any(box):
            self._F = 0
            self._box = np.zeros((1,) * self.dim, dtype=complex)
            return
        if newF < F:
            sl = tuple(slice(F - newF, F + newF + 1) for _ in range(self.dim))
            self._box = np.ascontiguousarray(box[sl])
            self._F = newF

    # ---- constructors ----

    @classmethod
    def zero(cls, dim):
        return cls(dim)

    @classmethod
    def constant(cls, dim, value=1.0):
        return cls(dim, {(0,) * dim: complex(value)})

    @classmethod
    def monomial(cls, dim, m, coeff=1.0):
        """exp(2*pi*i m.x) scaled by coeff."""
        return cls(dim, {tuple(m): complex(coeff)})

    @classmethod
    def cos(cls, dim, axis, freq=1):
        """cos(2*pi*freq*x_axis); axis is 1-based."""
        m = [0] * dim
        m[axis - 1] = freq
        return cls(dim, {tuple(m): 0.5, tuple(-v for v in m): 0.5})

    @classmethod
    def sin(cls, dim, axis, freq=1):
        """sin(2*pi*freq*x_axis); axis is 1-based."""
        m = [0] * dim
        m[axis - 1] = freq
        return cls(dim, {tuple(m): -0.5j, tuple(-v for v in m): 0.5j})

    @classmethod
    def from_records(cls, dim, records):
        """Build from config-file records [{'m': [...], 're': a, 'im': b}, ...]."""
        coeffs = []
        for rec in records:
            m = tuple(int(v) for v in rec["m"])
            coeffs.append((m, complex(float(rec.get("re", 0.0)), float(rec.get("im", 0.0)))))
        return cls(dim, coeffs)

    def to_records(self):
        return [
            {"m": list(m), "re": float(c.real), "im": float(c.imag)}
            for m, c in sorted(self.coeffs.items())
        ]

    # ---- basic queries ----

    @property
    def coeffs(self):
        """Frequency -> coefficient map of the stored (nonzero) modes."""
        F = self._F
        nz = np.nonzero(self._box)
        out = {}
        for flat in zip(*nz):
            out[tuple(int(i) - F for i in flat)] = complex(self._box[flat])
        return out

    @property
    def max_freq(self):
        """Largest |m_i| over the stored support (0 for the zero symbol)."""
        return self._F if np.any(self._box) else 0

    @property
    def support_size(self):
        return int(np.count_nonzero(self._box))

    @property
    def is_real(self):
        """True when c_{-m} = conj(c_m) for every stored frequency (up to round-off)."""
        rev = self._box[(slice(None, None, -1),) * self.dim]
        scale = max(1.0, float(np.max(np.abs(self._box))))
        return bool(np.max(np.abs(rev.conj() - self._box)) <= 1e-12 * scale)

    def __len__(self):
        return self.support_size

    def __eq__(self, other):
        if not isinstance(other, FourierSymbol):
            return NotImplemented
        return (
            self.dim == other.dim
            and self._F == other._F
            and np.array_equal(self._box, other._box)
        )

    def __hash__(self):
        return hash((self.dim, self._F, self._box.tobytes()))

    def max_coeff_diff(self, other):
        """Largest |c_m(self) - c_m(other)| over the union of supports."""
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        F = max(self._F, other._F)
        return float(np.max(np.abs(self._padded(F) - other._padded(F))))

    def isclose(self, other, tol=1e-12):
        return self.max_coeff_diff(other) <= tol

    def coeff_scale(self):
        """Largest coefficient magnitude (0 for the zero symbol)."""
        return float(np.max(np.abs(self._box)))

    def fingerprint(self):
        """Stable identity key for caches, derived from the canonical coefficient map."""
        return (self.dim, self._F, self._box.tobytes())

    def __repr__(self):
        return (
            f"FourierSymbol(dim={self.dim}, terms={self.support_size}, "
            f"max_freq={self.max_freq})"
        )

    def _padded(self, F):
        if F == self._F:
            return self._box
        out = np.zeros((2 * F + 1,) * self.dim, dtype=complex)
        sl = tuple(slice(F - self._F, F + self._F + 1) for _ in range(self.dim))
        out[sl] = self._box
        return out

    # ---- arithmetic ----

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = FourierSymbol.constant(self.dim, other)
        if not isinstance(other, FourierSymbol):
            return NotImplemented
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        F = max(self._F, other._F)
        return FourierSymbol._from_box(self.dim, self._padded(F) + other._padded(F))

    __radd__ = __add__

    def __neg__(self):
        return FourierSymbol._from_box(self.dim, -self._box)

    def __sub__(self, other):
        if isinstance(other, (int, float, complex)):
            other = FourierSymbol.constant(self.dim, other)
        if not isinstance(other, FourierSymbol):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, complex)):
            return FourierSymbol._from_box(self.dim, self._box * other)
        if isinstance(other, FourierSymbol):
            return sym_mul(self, other)
        return NotImplemented

    __rmul__ = __mul__

    def conj(self):
        rev = self._box[(slice(None, None, -1),) * self.dim]
        return FourierSymbol._from_box(self.dim, rev.conj())

    def derivative(self, axis):
        """Partial derivative along a 1-based axis: c_m -> 2*pi*i*m_axis*c_m."""
        if not 1 <= axis <= self.dim:
            raise ValueError(f"axis {axis} out of range for dim {self.dim}")
        F = self._F
        m = np.arange(-F, F + 1)
        shape = [1] * self.dim
        shape[axis - 1] = 2 * F + 1
        return FourierSymbol._from_box(
            self.dim, self._box * (TWO_PI * 1j * m.reshape(shape))
        )

    # ---- evaluation ----

    def _modes_and_coeffs(self):
        F = self._F
        nz = np.nonzero(self._box)
        modes = np.stack(nz, axis=-1).astype(float) - F
        cvec = self._box[nz]
        return modes, cvec

    def evaluate(self, points):
        """Evaluate at points of shape (..., d); returns complex values of shape (...)."""
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != self.dim:
            raise ValueError("points have wrong trailing dimension")
        if not np.any(self._box):
            return np.zeros(pts.shape[:-1], dtype=complex)
        modes, cvec = self._modes_and_coeffs()
        phases = np.exp(2j * math.pi * (pts @ modes.T))
        return phases @ cvec

    def eval_grid(self, n):
        """Values on the uniform n^d grid x = t/n via FFT; requires n >= 2*max_freq + 1."""
        F = self.max_freq
        if n < 2 * F + 1:
            raise ValueError(f"grid n={n} too coarse for max_freq {F}")
        C = np.zeros((n,) * self.dim, dtype=complex)
        idx = np.ix_(*[np.arange(-self._F, self._F + 1) % n] * self.dim)
        C[idx] = self._box
        return np.fft.ifftn(C) * (n**self.dim)


def sym_mul(f, g):
    """Exact product of two symbols (coefficient convolution)."""
    if not isinstance(f, FourierSymbol) or not isinstance(g, FourierSymbol):
        raise TypeError("sym_mul expects FourierSymbol arguments")
    if f.dim != g.dim:
        raise ValueError("dimension mismatch")
    if not np.any(f._box) or not np.any(g._box):
        return FourierSymbol.zero(f.dim)
    if f._F == 0 or g._F == 0:
        a, b = (f, g) if f._F == 0 else (g, f)
        return FourierSymbol._from_box(f.dim, b._box * a._box.reshape(()))
    box = fftconvolve(f._box, g._box)
    return FourierSymbol._from_box(f.dim, box)


def partial_derivative(f, axis):
    return f.derivative(axis)


# ---------------------------------------------------------------------------
# constant symplectic forms and volume densities
# ---------------------------------------------------------------------------


class ConstantSymplecticForm:
    """omega = (1/2) A_ij dx_i ^ dx_j with A constant, antisymmetric, invertible."""

    def __init__(self, matrix):
        A = np.array(matrix, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] % 2:
            raise ValueError("form matrix must be square of even size")
        if not np.allclose(A, -A.T, atol=1e-12):
            raise ValueError("form matrix must be antisymmetric")
        self.matrix = A
        self.inverse = np.linalg.inv(A)
        if not np.allclose(A @ self.inverse, np.eye(A.shape[0]), atol=1e-12):
            raise ValueError("form matrix is numerically singular")

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def poisson_tensor(self):
        """P with {f,g} = sum P_il d_i f d_l g; sign fixed by the Darboux-block convention."""
        return -self.inverse

    def pfaffian_top(self):
        """Coefficient rho of omega^n / n! = rho dx_1^...^dx_d."""
        A = self.matrix
        if self.dim == 2:
            return A[0, 1]
        return A[0, 1] * A[2, 3] - A[0, 2] * A[1, 3] + A[0, 3] * A[1, 2]


@dataclass(frozen=True)
class VolumeDensity:
    """Omega = rho dx_1^...^dx_d, with per-form densities mu_r = Omega / (omega_r^n / n!)."""

    dim: int
    rho: float
    mus: tuple = ()

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("volume density must be positive")


def standard_t2_form():
    """omega = 2*pi dx^dy on the 2-torus."""
    return ConstantSymplecticForm(TWO_PI * np.array([[0.0, 1.0], [-1.0, 0.0]]))


# Kahler forms of the flat hyperkahler 4-torus, uniformly scaled by 2*pi so that
# omega_r / (2*pi) is an integer form.  With J_r acting as left quaternion
# multiplication by i, j, k these are omega_r = g(J_r ., .), each a positive
# (1,1)-form for J_r, and (1/2) omega_r^2 = (2*pi)^2 dx1234 for every r.
_T4_RAW = (
    np.array([[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]], dtype=float),
    np.array([[0, 0, 1, 0], [0, 0, 0, -1], [-1, 0, 0, 0], [0, 1, 0, 0]], dtype=float),
    np.array([[0, 0, 0, 1], [0, 0, 1, 0], [0, -1, 0, 0], [-1, 0, 0, 0]], dtype=float),
)


def hyperkahler_forms():
    """The three scaled Kahler forms (omega_1, omega_2, omega_3) of the flat 4-torus."""
    return tuple(ConstantSymplecticForm(TWO_PI * A) for A in _T4_RAW)


def hyperkahler_volume_density():
    """Omega = sum_r omega_r ^ omega_r = 6 (2*pi)^2 dx1234; mu_1 = mu_2 = mu_3 = 6."""
    forms = hyperkahler_forms()
    halves = [f.pfaffian_top() for f in forms]  # (1/2) omega_r^2 coefficients
    rho = 2.0 * sum(halves)
    mus = tuple(rho / h for h in halves)
    return VolumeDensity(dim=4, rho=rho, mus=mus)


def form_volume_density(form):
    """Volume density of Omega = omega^n / n! for a single form."""
    rho = form.pfaffian_top()
    if rho <= 0:
        raise ValueError("form is negatively oriented; omega^n/n! is not a positive volume")
    return VolumeDensity(dim=form.dim, rho=rho, mus=(1.0,))


# ---------------------------------------------------------------------------
# brackets
# ---------------------------------------------------------------------------


def poisson_bracket(f, g, form):
    """{f, g} = sum_il P_il d_i f d_l g with P = -A^{-1}.

    The sign is pinned so that for the Darboux block A = 2*pi*[[0,1],[-1,0]]
    one gets {f,g} = (1/2pi)(f_x g_y - f_y g_x).
    """
    if f.dim != g.dim or f.dim != form.dim:
        raise ValueError("dimension mismatch")
    P = form.poisson_tensor
    dfs = [f.derivative(i) for i in range(1, f.dim + 1)]
    dgs = [g.derivative(i) for i in range(1, f.dim + 1)]
    out = FourierSymbol.zero(f.dim)
    scale = np.max(np.abs(P))
    for i in range(f.dim):
        for l in range(f.dim):
            if abs(P[i, l]) > 1e-14 * scale:
                out = out + P[i, l] * sym_mul(dfs[i], dgs[l])
    return out


def nambu_bracket_det(symbols, density):
    """Volume-form Nambu bracket: det(d f_i / d x_l) / rho for Omega = rho dx_1..dx_d."""
    symbols = list(symbols)
    d = symbols[0].dim
    if len(symbols) != d:
        raise ValueError(f"need exactly {d} arguments, got {len(symbols)}")
    if any(s.dim != d for s in symbols):
        raise ValueError("dimension mismatch")
    rho = density.rho if isinstance(density, VolumeDensity) else float(density)
    J = [[s.derivative(l) for l in range(1, d + 1)] for s in symbols]
    if d == 2:
        det = sym_mul(J[0][0], J[1][1]) - sym_mul(J[0][1], J[1][0])
    else:
        # Laplace expansion along the first two rows against the last two.
        det = FourierSymbol.zero(d)
        for i, j in itertools.combinations(range(4), 2):
            rest = [c for c in range(4) if c not in (i, j)]
            top = sym_mul(J[0][i], J[1][j]) - sym_mul(J[0][j], J[1][i])
            bot = sym_mul(J[2][rest[0]], J[3][rest[1]]) - sym_mul(J[2][rest[1]], J[3][rest[0]])
            det = det + ((-1) ** (i + j + 3)) * sym_mul(top, bot)
    return (1.0 / rho) * det


def _perm_sign(perm):
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        length = 0
        j = i
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def nambu_bracket_pairwise(symbols, form):
    """Pairwise expansion (1 / (2^n n!)) sum_sigma sign(sigma) prod_j {f_s(2j-1), f_s(2j)}."""
    symbols = list(symbols)
    d = symbols[0].dim
    if len(symbols) != d or form.dim != d:
        raise ValueError("arity must equal the dimension")
    n = d // 2
    pb = {}
    for i, j in itertools.combinations(range(d), 2):
        pb[(i, j)] = poisson_bracket(symbols[i], symbols[j], form)
    prod_cache = {}
    total = FourierSymbol.zero(d)
    for sigma in itertools.permutations(range(d)):
        sign = _perm_sign(sigma)
        pairs = []
        for j in range(n):
            p, q = sigma[2 * j], sigma[2 * j + 1]
            if p > q:
                p, q = q, p
                sign = -sign
            pairs.append((p, q))
        key = tuple(sorted(pairs))
        if key not in prod_cache:
            acc = pb[key[0]]
            for pq in key[1:]:
                acc = sym_mul(acc, pb[pq])
            prod_cache[key] = acc
        total = total + sign * prod_cache[key]
    return (1.0 / (2**n * math.factorial(n))) * total


def bracket4_r(f, g, h, t, r, forms=None):
    """{f,g,h,t}_r = {f,g}_r {h,t}_r - {f,h}_r {g,t}_r + {f,t}_r {g,h}_r on the 4-torus."""
    if r not in (1, 2, 3):
        raise ValueError(f"r must be 1, 2 or 3, got {r}")
    if forms is None:
        forms = hyperkahler_forms()
    form = forms[r - 1]
    if f.dim != 4:
        raise ValueError("hyperkahler 4-brackets require dim 4")
    fg = poisson_bracket(f, g, form)
    ht = poisson_bracket(h, t, form)
    fh = poisson_bracket(f, h, form)
    gt = poisson_bracket(g, t, form)
    ft = poisson_bracket(f, t, form)
    gh = poisson_bracket(g, h, form)
    return sym_mul(fg, ht) - sym_mul(fh, gt) + sym_mul(ft, gh)


def bracket4_hyp(f, g, h, t, forms=None):
    """{f,g,h,t}_hyp = sum_{r=1..3} {f,g,h,t}_r."""
    if forms is None:
        forms = hyperkahler_forms()
    out = FourierSymbol.zero(4)
    for r in (1, 2, 3):
        out = out + bracket4_r(f, g, h, t, r, forms=forms)
    return out


# ---------------------------------------------------------------------------
# sup norm and random symbols
# ---------------------------------------------------------------------------

_FULL_GRID_POINT_CAP = 1 << 22


def sup_norm(f, grid_n=None):
    """Lower estimate of |f|_inf = sup |f| by grid search plus local zoom refinement.

    The estimate is the running max over all evaluated points, so it is
    non-decreasing under refinement.  Refinement stops once improvements fall
    below 1e-9 (absolute and relative).
    """
    if not np.any(f._box):
        return 0.0
    F = f.max_freq
    if F == 0:
        return abs(complex(f._box.reshape(())))
    n_min = 4 * (F + 1)
    if grid_n is None:
        n = n_min
    else:
        if grid_n < n_min:
            raise ValueError(f"grid_n={grid_n} below the required 4*(max_freq+1)={n_min}")
        n = int(grid_n)

    vals = np.abs(f.eval_grid(n))
    best = float(vals.max())
    idx = np.unravel_index(int(vals.argmax()), vals.shape)
    x0 = np.array(idx, dtype=float) / n
    # full-grid doubling while affordable
    while (2 * n) ** f.dim <= _FULL_GRID_POINT_CAP:
        n *= 2
        vals = np.abs(f.eval_grid(n))
        new = float(vals.max())
        if new > best:
            best = new
            idx = np.unravel_index(int(vals.argmax()), vals.shape)
            x0 = np.array(idx, dtype=float) / n
        if new <= best * (1 + 1e-12) and n >= 4 * n_min:
            break
    # local zoom around the best grid point
    h = 1.5 / n
    stencil = 9 if f.dim == 2 else 5
    shrink = 3.0 if f.dim == 2 else 2.0
    axes1d = np.linspace(-1.0, 1.0, stencil)
    offs_unit = np.stack(np.meshgrid(*([axes1d] * f.dim), indexing="ij"), axis=-1).reshape(
        -1, f.dim
    )
    stall = 0
    for _ in range(60):
        pts = (x0 + h * offs_unit) % 1.0
        vals = np.abs(f.evaluate(pts))
        j = int(vals.argmax())
        new = float(vals[j])
        if new > best + 1e-9 * max(1.0, best):
            stall = 0
        else:
            stall += 1
        if new > best:
            best = new
            x0 = pts[j]
        if stall >= 2:
            break
        h /= shrink
    return best


def random_symbol(seed, dim, max_freq, real_valued=True):
    """Deterministic random symbol with coefficients in the closed unit disc.

    All frequencies with |m_i| <= max_freq are populated.  When real_valued,
    c_{-m} = conj(c_m) is enforced exactly.
    """
    if max_freq < 1:
        raise ValueError("max_freq must be >= 1")
    rng = np.random.default_rng(seed)
    modes = sorted(itertools.product(range(-max_freq, max_freq + 1), repeat=dim))
    coeffs = []

    def draw():
        radius = math.sqrt(rng.uniform())
        angle = rng.uniform(0.0, 2.0 * math.pi)
        return radius * complex(math.cos(angle), math.sin(angle))

    for m in modes:
        if real_valued:
            if m == (0,) * dim:
                coeffs.append((m, complex(rng.uniform(-1.0, 1.0))))
            else:
                first = next(v for v in m if v != 0)
                if first > 0:
                    c = draw()
                    coeffs.append((m, c))
                    coeffs.append((tuple(-v for v in m), c.conjugate()))
        else:
            coeffs.append((m, draw()))
    return FourierSymbol(dim, coeffs)


# ---------------------------------------------------------------------------
# named symbol presets for config files
# ---------------------------------------------------------------------------


def symbol_preset(name, dim):
    """Resolve a named symbol preset like 'one', 'cos1', 'sin3'."""
    name = name.strip().lower()
    if name == "one":
        return FourierSymbol.constant(dim)
    for kind, maker in (("cos", FourierSymbol.cos), ("sin", FourierSymbol.sin)):
        if name.startswith(kind):
            try:
                axis = int(name[len(kind):])
            except ValueError:
                break
            if not 1 <= axis <= dim:
                raise ValueError(f"preset {name!r}: axis out of range for dim {dim}")
            return maker(dim, axis)
    raise ValueError(f"unknown symbol preset {name!r}")
