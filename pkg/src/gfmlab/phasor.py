"""Complex αβ phasor algebra.

Balanced three-phase signals are carried as a single complex number
x = x_alpha + j*x_beta obtained from the power-preserving Clarke transform.
Real state vectors interleave (re, im) pairs; a real 2x2 block

    [ a  b]
    [-b  a]

acts on a pair exactly like multiplication by the complex scalar (a - j*b).
The embedding matrix N (one row per pair, entries 1 and j) converts a real
paired vector to its complex coefficients, and the structured inner product

    <p, q> = Re{(N p)^H (N q)}

is the inner product under which all energy bookkeeping in this package is
done.  It is degenerate on R^{2n} (its kernel is the anti-structured part),
which is deliberate: it ignores features that live purely in the internal
reference frame.
"""

from __future__ import annotations

import numpy as np

from .errors import BalanceViolation, DimensionError

_SQ23 = np.sqrt(2.0 / 3.0)
_SQ32 = np.sqrt(3.0) / 2.0

# Power-preserving Clarke matrix (alpha, beta, zero rows).
CLARKE_MATRIX = _SQ23 * np.array(
    [
        [1.0, -0.5, -0.5],
        [0.0, -_SQ32, _SQ32],
        [1.0 / np.sqrt(2.0)] * 3,
    ]
)

BALANCE_TOL = 1e-9


def clarke(a: float, b: float, c: float) -> complex:
    """Map a balanced three-phase triple to its complex αβ phasor.

    Raises BalanceViolation if a+b+c exceeds the balance tolerance: states in
    this package are constructed balanced, so a violation indicates a bug
    upstream rather than data to be accommodated.
    """
    s = a + b + c
    if abs(s) > BALANCE_TOL:
        raise BalanceViolation(f"three-phase sum {s!r} exceeds tolerance {BALANCE_TOL}")
    alpha = _SQ23 * (a - 0.5 * b - 0.5 * c)
    beta = _SQ23 * _SQ32 * (c - b)
    return complex(alpha, beta)


def inv_clarke(x: complex) -> tuple[float, float, float]:
    """Inverse Clarke transform restricted to balanced signals (zero sequence 0)."""
    # The 2x3 balanced block of CLARKE_MATRIX is a scaled isometry; its
    # pseudo-inverse is the transpose.
    a = _SQ23 * x.real
    b = _SQ23 * (-0.5 * x.real - _SQ32 * x.imag)
    c = _SQ23 * (-0.5 * x.real + _SQ32 * x.imag)
    return (a, b, c)


def embedding_matrix(n_pairs: int) -> np.ndarray:
    """The complex embedding N: row r has 1 at column 2r and j at column 2r+1."""
    n = np.zeros((n_pairs, 2 * n_pairs), dtype=complex)
    for r in range(n_pairs):
        n[r, 2 * r] = 1.0
        n[r, 2 * r + 1] = 1j
    return n


def pairs_to_complex(p: np.ndarray) -> np.ndarray:
    """Equivalent to N @ p for a real paired vector (or batch, last axis paired)."""
    p = np.asarray(p)
    if p.shape[-1] % 2:
        raise DimensionError(f"paired vector must have even length, got {p.shape[-1]}")
    return p[..., 0::2] + 1j * p[..., 1::2]


def complex_to_pairs(z: np.ndarray) -> np.ndarray:
    """Interleave a complex coefficient vector back into (re, im) pairs."""
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],))
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def structured_inner(p: np.ndarray, q: np.ndarray) -> float:
    """<p, q> = Re{(N p)^H (N q)} for real paired vectors p, q."""
    zp = pairs_to_complex(p)
    zq = pairs_to_complex(q)
    if zp.shape != zq.shape:
        raise DimensionError(f"shape mismatch {zp.shape} vs {zq.shape}")
    return float(np.real(np.vdot(zp, zq)))


def complex_to_block(z: complex) -> np.ndarray:
    """The 2x2 real block [a, b; -b, a] that acts on pairs as the scalar a - j*b.

    Note the conjugation: block [a, b; -b, a] applied to the pair of a complex
    number w yields the pair of (a - j*b) * w.
    """
    return np.array([[z.real, z.imag], [-z.imag, z.real]])


def block_expand(u: np.ndarray) -> np.ndarray:
    """Expand a complex m x n matrix into its real 2m x 2n block-structured form.

    Entry u[r, c] = a + j*b becomes the block [a, -b; b, a]... careful: the
    convention here is chosen so that block_expand(u) acting on pairs equals
    elementwise complex multiplication by u, i.e.
    pairs_to_complex(block_expand(u) @ p) == u @ pairs_to_complex(p).
    """
    u = np.asarray(u, dtype=complex)
    m, n = u.shape
    out = np.zeros((2 * m, 2 * n))
    out[0::2, 0::2] = u.real
    out[0::2, 1::2] = -u.imag
    out[1::2, 0::2] = u.imag
    out[1::2, 1::2] = u.real
    return out


def block_contract(U: np.ndarray) -> np.ndarray:
    """Inverse of block_expand; requires U to have the complex structure."""
    U = np.asarray(U, dtype=float)
    if U.shape[0] % 2 or U.shape[1] % 2:
        raise DimensionError(f"block matrix must have even dims, got {U.shape}")
    return U[0::2, 0::2] + 1j * U[1::2, 0::2]


def is_complex_structure(U: np.ndarray, tol: float = 1e-12) -> bool:
    """True if the real matrix U consists of 2x2 blocks of the form [a, b; -b, a]."""
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[0] % 2 or U.shape[1] % 2:
        return False
    a = U[0::2, 0::2]
    d = U[1::2, 1::2]
    b = U[0::2, 1::2]
    c = U[1::2, 0::2]
    return bool(np.all(np.abs(a - d) <= tol) and np.all(np.abs(b + c) <= tol))


def structured_adjoint(U: np.ndarray) -> np.ndarray:
    """The adjoint U* with respect to the structured inner product.

    For a complex-structure U this is the block expansion of the conjugate
    transpose of its complex contraction.
    """
    return block_expand(block_contract(U).conj().T)


def rotate_pairs(p: np.ndarray, tau: float) -> np.ndarray:
    """Apply the global rotation e^{j tau} to every pair of p."""
    return complex_to_pairs(np.exp(1j * tau) * pairs_to_complex(p))
