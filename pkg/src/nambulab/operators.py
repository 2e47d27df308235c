"""Finite-dimensional operator algebra: generalized commutators and structured operators.

The Nambu generalized commutator [A_1,...,A_2n] = sum_{sigma} sign(sigma)
A_s(1)...A_s(2n) is provided in three equivalent evaluation orders (the plain
permutation sum, the restricted pairing factorization, and the halved full
factorization), together with the explicit 6-product expansion for arity 4.

Structured operators cover the two ways three level-k quantizations combine:
block-diagonal direct sums and sums of Kronecker triples.  Kronecker sums are
never materialized; their spectral norm comes from Lanczos iteration on X*X
with mode-wise matvecs.
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass

import numpy as np

_MAX_DIRECT_ARITY = 6


@dataclass
class DenseOperator:
    """A dense complex matrix with optional bookkeeping metadata."""

    matrix: np.ndarray
    label: str = ""
    level: int | None = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError("DenseOperator expects a square matrix")
        if not np.all(np.isfinite(self.matrix.view(float))):
            raise ValueError("matrix has non-finite entries")

    @property
    def n(self):
        return self.matrix.shape[0]


def as_matrix(op):
    """Accept either an ndarray or a DenseOperator."""
    if isinstance(op, DenseOperator):
        return op.matrix
    return np.asarray(op, dtype=complex)


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


def commutator(a, b):
    a = as_matrix(a)
    b = as_matrix(b)
    return a @ b - b @ a


def gen_commutator(ops, method="restricted"):
    """Nambu generalized commutator of an even tuple of equally sized matrices.

    method: 'direct' sums sign(sigma) A_s(1)...A_s(2n) over all (2n)! permutations;
    'restricted' sums products of pairwise commutators over pairings with
    sigma(2j-1) < sigma(2j); 'halved' takes the full pairwise-product sum divided
    by 2^n.  All three agree exactly.
    """
    mats = [as_matrix(op) for op in ops]
    arity = len(mats)
    if arity % 2 or not 2 <= arity <= _MAX_DIRECT_ARITY:
        raise ValueError(f"arity must be even and within 2..{_MAX_DIRECT_ARITY}, got {arity}")
    n0 = mats[0].shape[0]
    if any(m.shape != (n0, n0) for m in mats):
        raise ValueError("all operators must share the same size")
    if method not in ("direct", "restricted", "halved"):
        raise ValueError(f"unknown method {method!r}")

    if method == "direct":
        out = np.zeros((n0, n0), dtype=complex)
        for sigma in itertools.permutations(range(arity)):
            prod = mats[sigma[0]]
            for idx in sigma[1:]:
                prod = prod @ mats[idx]
            out += _perm_sign(sigma) * prod
        return out

    # pairwise commutators, filled by antisymmetry
    comms = {}
    for i, j in itertools.combinations(range(arity), 2):
        comms[(i, j)] = commutator(mats[i], mats[j])

    def pair_comm(i, j):
        return comms[(i, j)] if i < j else -comms[(j, i)]

    n = arity // 2
    out = np.zeros((n0, n0), dtype=complex)
    for sigma in itertools.permutations(range(arity)):
        if method == "restricted" and any(
            sigma[2 * j] > sigma[2 * j + 1] for j in range(n)
        ):
            continue
        prod = pair_comm(sigma[0], sigma[1])
        for j in range(1, n):
            prod = prod @ pair_comm(sigma[2 * j], sigma[2 * j + 1])
        out += _perm_sign(sigma) * prod
    if method == "halved":
        out /= 2**n
    return out


def comm4_expand(a, b, c, d):
    """Arity-4 generalized commutator via its six products of pairwise commutators."""
    a, b, c, d = (as_matrix(m) for m in (a, b, c, d))
    ab = commutator(a, b)
    cd = commutator(c, d)
    ac = commutator(a, c)
    bd = commutator(b, d)
    ad = commutator(a, d)
    bc = commutator(b, c)
    return ab @ cd - ac @ bd + ad @ bc + cd @ ab - bd @ ac + bc @ ad


# ---------------------------------------------------------------------------
# structured operators
# ---------------------------------------------------------------------------


class KronSum:
    """sum_t c_t A_t (x) B_t (x) C_t acting on C^{N1 N2 N3}, never materialized."""

    def __init__(self, terms):
        self.terms = []
        self._stack_cache = None
        shape = None
        for coef, factors in terms:
            if len(factors) != 3:
                raise ValueError("each Kronecker term needs exactly 3 factors")
            mats = tuple(as_matrix(f) for f in factors)
            sizes = tuple(m.shape[0] for m in mats)
            for m, n in zip(mats, sizes):
                if m.shape != (n, n):
                    raise ValueError("Kronecker factors must be square")
            if shape is None:
                shape = sizes
            elif sizes != shape:
                raise ValueError("all Kronecker terms must share factor sizes")
            self.terms.append((complex(coef), mats))
        if shape is None:
            raise ValueError("KronSum needs at least one term")
        self.factor_shape = shape

    @property
    def n_terms(self):
        return len(self.terms)

    @property
    def n(self):
        n1, n2, n3 = self.factor_shape
        return n1 * n2 * n3

    def _stacks(self):
        if self._stack_cache is None:
            coefs = np.array([c for c, _ in self.terms])
            A = np.stack([f[0] for _, f in self.terms])
            B = np.stack([f[1] for _, f in self.terms])
            C = np.ascontiguousarray(
                np.stack([f[2] for _, f in self.terms]).transpose(0, 2, 1)
            )
            self._stack_cache = (coefs, A, B, C)
        return self._stack_cache

    def matvec(self, x):
        """Apply to a vector of length N1*N2*N3 (or tensor of that shape)."""
        n1, n2, n3 = self.factor_shape
        xt = np.asarray(x, dtype=complex).reshape(n1, n2, n3)
        coefs, A, B, Ct = self._stacks()
        t = len(self.terms)
        # mode-1: (t,n1,n1) @ (n1, n2*n3)
        y = (A @ xt.reshape(n1, n2 * n3)).reshape(t, n1, n2, n3)
        # mode-2: bring n2 forward, (t,n2,n2) @ (t,n2,n1*n3)
        y = np.ascontiguousarray(y.transpose(0, 2, 1, 3)).reshape(t, n2, n1 * n3)
        y = (B @ y).reshape(t, n2, n1, n3).transpose(0, 2, 1, 3)
        # mode-3: right-multiply by C^T
        y = np.ascontiguousarray(y).reshape(t, n1 * n2, n3) @ Ct
        out = np.tensordot(coefs, y.reshape(t, n1, n2, n3), axes=1)
        return out.reshape(np.asarray(x).shape)

    def adjoint(self):
        return KronSum(
            [
                (np.conj(c), tuple(f.conj().T for f in fs))
                for c, fs in self.terms
            ]
        )

    def scale(self, alpha):
        return KronSum([(alpha * c, fs) for c, fs in self.terms])

    def __add__(self, other):
        if not isinstance(other, KronSum):
            return NotImplemented
        if other.factor_shape != self.factor_shape:
            raise ValueError("factor size mismatch")
        return KronSum(self.terms + other.terms)

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def simplify(self):
        """Merge terms with byte-identical factor triples; drop zero coefficients."""
        merged = {}
        order = []
        for c, fs in self.terms:
            key = tuple(f.tobytes() for f in fs)
            if key in merged:
                prev_c, _ = merged[key]
                merged[key] = (prev_c + c, fs)
            else:
                merged[key] = (c, fs)
                order.append(key)
        terms = [merged[k] for k in order if abs(merged[k][0]) > 0.0]
        if not terms:
            n1, n2, n3 = self.factor_shape
            terms = [
                (0.0, (np.zeros((n1, n1)), np.zeros((n2, n2)), np.zeros((n3, n3))))
            ]
        return KronSum(terms)

    def to_dense(self):
        out = None
        for c, (a, b, cc) in self.terms:
            t = c * np.kron(np.kron(a, b), cc)
            out = t if out is None else out + t
        return out


class DirectSum:
    """Block-diagonal operator given by a list of dense blocks."""

    def __init__(self, blocks):
        self.blocks = [as_matrix(b) for b in blocks]
        if not self.blocks:
            raise ValueError("DirectSum needs at least one block")
        for b in self.blocks:
            if b.ndim != 2 or b.shape[0] != b.shape[1]:
                raise ValueError("blocks must be square")

    @property
    def n(self):
        return sum(b.shape[0] for b in self.blocks)

    def matvec(self, x):
        x = np.asarray(x, dtype=complex)
        out = np.empty_like(x)
        pos = 0
        for b in self.blocks:
            m = b.shape[0]
            out[pos : pos + m] = b @ x[pos : pos + m]
            pos += m
        return out

    def to_dense(self):
        n = self.n
        out = np.zeros((n, n), dtype=complex)
        pos = 0
        for b in self.blocks:
            m = b.shape[0]
            out[pos : pos + m, pos : pos + m] = b
            pos += m
        return out


def direct_sum3(a, b, c):
    return DirectSum([a, b, c])


def kron3(a, b, c, coef=1.0):
    return KronSum([(coef, (a, b, c))])


def _single_term(x):
    if not isinstance(x, KronSum) or x.n_terms != 1:
        raise ValueError("expected a single-term KronSum")
    return x.terms[0]


def kron_commutator(x, y):
    """[A1 (x) A2 (x) A3, B1 (x) B2 (x) B3] as an exact 4-term KronSum.

    [A1A2A3, B1B2B3] = [A1,B1](x)[A2,B2](x)[A3,B3] + [A1,B1](x)B2A2(x)A3B3
                       + A1B1(x)[A2,B2](x)B3A3 + B1A1(x)A2B2(x)[A3,B3].
    """
    cx, (a1, a2, a3) = _single_term(x)
    cy, (b1, b2, b3) = _single_term(y)
    if x.factor_shape != y.factor_shape:
        raise ValueError("factor size mismatch")
    c = cx * cy
    c12 = commutator(a1, b1)
    c22 = commutator(a2, b2)
    c32 = commutator(a3, b3)
    return KronSum(
        [
            (c, (c12, c22, c32)),
            (c, (c12, b2 @ a2, a3 @ b3)),
            (c, (a1 @ b1, c22, b3 @ a3)),
            (c, (b1 @ a1, a2 @ b2, c32)),
        ]
    )


def kron_product(x, y):
    """Product of two KronSums: factorwise matrix products, distributed over terms."""
    if not isinstance(x, KronSum) or not isinstance(y, KronSum):
        raise TypeError("kron_product expects KronSum arguments")
    if x.factor_shape != y.factor_shape:
        raise ValueError("factor size mismatch")
    terms = []
    for cx, (a1, a2, a3) in x.terms:
        for cy, (b1, b2, b3) in y.terms:
            terms.append((cx * cy, (a1 @ b1, a2 @ b2, a3 @ b3)))
    return KronSum(terms)


def kron_comm4(xs):
    """Arity-4 generalized commutator of four single-term KronSums.

    Expands the six pairwise-commutator products, each through the 4-term
    tensor commutator identity, for at most 6 * 16 = 96 Kronecker terms.
    """
    if len(xs) != 4:
        raise ValueError("kron_comm4 expects exactly 4 operators")
    pair = {}
    for i, j in itertools.combinations(range(4), 2):
        pair[(i, j)] = kron_commutator(xs[i], xs[j])
    out = None
    for (i, j, m, l), sign in (
        ((0, 1, 2, 3), 1.0),
        ((0, 2, 1, 3), -1.0),
        ((0, 3, 1, 2), 1.0),
        ((2, 3, 0, 1), 1.0),
        ((1, 3, 0, 2), -1.0),
        ((1, 2, 0, 3), 1.0),
    ):
        term = kron_product(pair[(i, j)], pair[(m, l)]).scale(sign)
        out = term if out is None else out + term
    return out


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


@dataclass
class NormEstimate:
    """Operator-norm estimate with iteration diagnostics."""

    value: float
    iterations: int = 0
    converged: bool = True

    def __float__(self):
        return float(self.value)


def _lanczos_norm(matvec, n, tol, maxiter, seed):
    """Largest singular value via Lanczos on the Hermitian Gram operator.

    matvec must apply X*X.  Full reorthogonalization; deterministic start
    vector.  Converged once two successive singular-value estimates agree to
    tol relatively AND the Ritz residual of the top eigenpair is below
    2*tol*lambda (the successive-difference test alone stalls on plateaus).
    """
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    q /= np.linalg.norm(q)
    Q = [q]
    alphas = []
    betas = []
    prev = None
    est = 0.0
    for it in range(1, maxiter + 1):
        w = matvec(Q[-1])
        a = float(np.real(np.vdot(Q[-1], w)))
        alphas.append(max(a, 0.0))
        w = w - a * Q[-1]
        if len(Q) > 1:
            w = w - betas[-1] * Q[-2]
        # full reorthogonalization (sizes are modest)
        qm = np.stack(Q, axis=0)
        w = w - qm.T @ (qm.conj() @ w)
        T = np.diag(alphas)
        if betas:
            T += np.diag(betas, 1) + np.diag(betas, -1)
        evals, evecs = np.linalg.eigh(T)
        lam = float(evals[-1])
        est = np.sqrt(max(lam, 0.0))
        b = float(np.linalg.norm(w))
        ritz = b * abs(evecs[-1, -1])
        small_diff = prev is not None and abs(est - prev) <= tol * max(est, 1e-300)
        tight = ritz <= 2.0 * tol * max(lam, 1e-300)
        if small_diff and tight:
            return NormEstimate(est, it, True)
        prev = est
        if b <= 1e-14 * max(1.0, est):
            # invariant subspace exhausted: the estimate is exact
            return NormEstimate(est, it, True)
        betas.append(b)
        Q.append(w / b)
    return NormEstimate(est, maxiter, False)


def op_norm(x, tol=1e-6, maxiter=500, seed=7):
    """Spectral norm of a dense matrix, DirectSum, or KronSum.

    Dense inputs use the exact SVD.  Direct sums take the max over blocks.
    Single-term Kronecker products use the norm product identity; general
    KronSums run seeded Lanczos iteration on X*X and report the iteration
    count and a convergence flag.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if isinstance(x, (np.ndarray, DenseOperator)):
        m = as_matrix(x)
        return NormEstimate(float(np.linalg.norm(m, 2)), 0, True)
    if isinstance(x, DirectSum):
        return NormEstimate(
            max(float(np.linalg.norm(b, 2)) for b in x.blocks), 0, True
        )
    if isinstance(x, KronSum):
        if x.n_terms == 1:
            c, fs = x.terms[0]
            val = abs(c) * float(np.prod([np.linalg.norm(f, 2) for f in fs]))
            return NormEstimate(val, 0, True)
        xh = x.adjoint()

        def gram(v):
            return xh.matvec(x.matvec(v))

        return _lanczos_norm(gram, x.n, tol, maxiter, seed)
    raise TypeError(f"unsupported operand type {type(x)!r}")


def hs_norm(x):
    """Hilbert-Schmidt (Frobenius) norm; exact for KronSums via factor Gram traces."""
    if isinstance(x, (np.ndarray, DenseOperator)):
        return float(np.linalg.norm(as_matrix(x), "fro"))
    if isinstance(x, DirectSum):
        return float(np.sqrt(sum(np.linalg.norm(b, "fro") ** 2 for b in x.blocks)))
    if isinstance(x, KronSum):
        total = 0.0j
        for cs, fs in x.terms:
            for ct, gt in x.terms:
                prod = np.conj(cs) * ct
                for f, g in zip(fs, gt):
                    prod *= np.trace(f.conj().T @ g)
                total += prod
        return float(np.sqrt(max(total.real, 0.0)))
    raise TypeError(f"unsupported operand type {type(x)!r}")


# ---------------------------------------------------------------------------
# dump formats
# ---------------------------------------------------------------------------

matmul = np.matmul  # re-export convenience for callers composing operators


def save_matrix_bin(path, matrix):
    """Little-endian dump: uint64 N, then N*N complex64 entries row-major."""
    m = as_matrix(matrix)
    n = m.shape[0]
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", n))
        fh.write(np.ascontiguousarray(m.astype(np.complex64)).tobytes())


def load_matrix_bin(path):
    with open(path, "rb") as fh:
        (n,) = struct.unpack("<Q", fh.read(8))
        data = np.frombuffer(fh.read(8 * n * n), dtype="<c8")
    if data.size != n * n:
        raise ValueError("truncated matrix dump")
    return data.astype(complex).reshape(n, n)


def save_matrix_csv(path, matrix):
    """Inspection dump: one 'i,j,re,im' line per entry, row-major."""
    m = as_matrix(matrix)
    n = m.shape[0]
    with open(path, "w") as fh:
        fh.write("i,j,re,im\n")
        for i in range(n):
            for j in range(n):
                fh.write(f"{i},{j},{float(m[i, j].real)!r},{float(m[i, j].imag)!r}\n")


def load_matrix_csv(path):
    rows = []
    with open(path) as fh:
        header = fh.readline()
        if header.strip() != "i,j,re,im":
            raise ValueError("unrecognized matrix CSV header")
        for line in fh:
            i, j, re, im = line.strip().split(",")
            rows.append((int(i), int(j), float(re), float(im)))
    n = max(i for i, _, _, _ in rows) + 1
    out = np.zeros((n, n), dtype=complex)
    for i, j, re, im in rows:
        out[i, j] = complex(re, im)
    return out
