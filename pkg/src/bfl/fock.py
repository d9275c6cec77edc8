"""Occupation-number basis for n bosons on two single-particle levels.

Basis states are labeled by m = number of bosons in level 1 (level 2 holds
n - m), so the Hilbert-space dimension is n + 1.  The module builds exact
dense matrix representations of normal-ordered ladder-operator monomials

    (a1+)^r (a2+)^(k-r) (a1)^s (a2)^(k-s) / (N_r N_s),

the building blocks of rank-k number-conserving interactions.  Each monomial
shifts the level-1 occupation by exactly r - s, so its matrix has a single
nonzero diagonal band at offset r - s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = ["FockSpace", "MonomialSpec", "normalization", "monomial_matrix"]


@dataclass(frozen=True)
class FockSpace:
    """Fixed-n Fock space of n bosons on two levels (dimension n + 1)."""

    n: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"particle count must be non-negative, got {self.n}")

    @property
    def dim(self) -> int:
        """Hilbert-space dimension N = n + 1."""
        return self.n + 1


@dataclass(frozen=True)
class MonomialSpec:
    """Exponents of a normal-ordered two-mode ladder monomial.

    r creation and s annihilation operators act on level 1; level 2 receives
    the complementary k - r and k - s operators.  The monomial moves r - s
    bosons from level 2 to level 1.
    """

    k: int
    r: int
    s: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"interaction rank must be >= 1, got k={self.k}")
        if not 0 <= self.r <= self.k:
            raise ValueError(f"need 0 <= r <= k, got r={self.r}, k={self.k}")
        if not 0 <= self.s <= self.k:
            raise ValueError(f"need 0 <= s <= k, got s={self.s}, k={self.k}")

    @property
    def shift(self) -> int:
        """Net change of the level-1 occupation."""
        return self.r - self.s


def _sqrt_bigint(p: int) -> float:
    """Square root of an exact non-negative integer as a float.

    Handles integers far beyond float range by rescaling with powers of two;
    raises OverflowError only if the *result* exceeds the float64 range.
    """
    if p < 0:
        raise ValueError("negative argument")
    if p.bit_length() <= 1000:
        return math.sqrt(p)
    shift = p.bit_length() - 968
    shift += shift & 1
    return math.ldexp(math.sqrt(p >> shift), shift // 2)


def normalization(r: int, n: int) -> float:
    """State normalization sqrt(r! (n-r)!).

    Factorials are evaluated as exact arbitrary-precision integers, so no
    intermediate overflow occurs for any n; only a result beyond float64
    range raises OverflowError.
    """
    if not 0 <= r <= n:
        raise ValueError(f"need 0 <= r <= n, got r={r}, n={n}")
    return _sqrt_bigint(math.factorial(r) * math.factorial(n - r))


def _falling(a: int, steps: int) -> int:
    """Falling factorial a (a-1) ... (a-steps+1) as an exact integer."""
    out = 1
    for i in range(steps):
        out *= a - i
    return out


@lru_cache(maxsize=None)
def _monomial_cached(n: int, k: int, r: int, s: int) -> np.ndarray:
    # Matrix elements follow from the bosonic commutation relations: acting on
    # |m', n-m'> the annihilators require m' >= s and n-m' >= k-s, and the
    # amplitude is a product of four falling factorials (at most k consecutive
    # integers each, never a full factorial of n), evaluated exactly before
    # the square root.
    dim = n + 1
    mat = np.zeros((dim, dim))
    norm = normalization(r, k) * normalization(s, k)
    for col in range(dim):
        if col < s or n - col < k - s:
            continue
        row = col + r - s
        if not 0 <= row <= n:
            continue
        amp2 = (
            _falling(col, s)
            * _falling(n - col, k - s)
            * _falling(row, r)
            * _falling(n - row, k - r)
        )
        mat[row, col] = _sqrt_bigint(amp2) / norm
    mat.flags.writeable = False
    return mat


def monomial_matrix(space: FockSpace, spec: MonomialSpec) -> np.ndarray:
    """Dense matrix of the normalized monomial on the fixed-n space.

    The returned (n+1, n+1) real matrix is banded at offset r - s and maps
    the fixed-n space into itself (total boson number is conserved).
    """
    if spec.k > space.n:
        raise ValueError(f"interaction rank k={spec.k} exceeds particle count n={space.n}")
    return _monomial_cached(space.n, spec.k, spec.r, spec.s).copy()
