"""Random k-body coupling tables and their embedding into Fock space.

A rank-k interaction is specified by a Hermitian (k+1) x (k+1) table of
Gaussian amplitudes v[r, s] multiplying the normalized ladder monomials of
:mod:`bfl.fock`.  Dyson index beta = 1 selects real symmetric tables
(time-reversal invariant), beta = 2 Hermitian complex ones.  The module also
evaluates the analytic mean-square spectral width of the embedded operator
and its empirical single-realization counterpart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from bfl.fock import FockSpace, _monomial_cached

__all__ = [
    "CouplingMatrix",
    "EmbeddedHamiltonian",
    "WidthModel",
    "sample_couplings",
    "embed",
    "lambda_eig",
    "spectral_width",
    "empirical_width",
    "interaction_norm",
]

COUPLING_CONVENTIONS = ("standard", "uniform")
WIDTH_MODES = ("as-defined", "sqrt")


@dataclass(frozen=True)
class CouplingMatrix:
    """Hermitian table of k-body amplitudes v[r, s] with symmetry class beta."""

    k: int
    beta: int
    v: np.ndarray
    v0: float = 1.0

    def __post_init__(self):
        if self.beta not in (1, 2):
            raise ValueError(f"beta must be 1 or 2, got {self.beta}")
        v = np.asarray(self.v)
        if v.shape != (self.k + 1, self.k + 1):
            raise ValueError(f"coupling table must be ({self.k + 1}, {self.k + 1}), got {v.shape}")
        if not np.allclose(v, v.conj().T, atol=1e-12):
            raise ValueError("coupling table must be Hermitian")
        if self.beta == 1 and np.iscomplexobj(v) and np.abs(v.imag).max() > 1e-12:
            raise ValueError("beta=1 coupling table must be real")
        object.__setattr__(self, "v", v)

    @property
    def diagonal(self) -> np.ndarray:
        """Real r = s amplitudes (these alone feed the embedded diagonal)."""
        return self.v.diagonal().real.copy()

    def with_diagonal(self, diag: np.ndarray) -> "CouplingMatrix":
        """Copy with the r = s entries replaced (off-diagonal part untouched)."""
        v = self.v.copy()
        np.fill_diagonal(v, np.asarray(diag, dtype=float))
        return replace(self, v=v)


@dataclass(frozen=True)
class EmbeddedHamiltonian:
    """N x N Hermitian embedding of a coupling table, split by diagonal."""

    n: int
    k: int
    beta: int
    full: np.ndarray
    diag: np.ndarray
    offdiag: np.ndarray


@dataclass(frozen=True)
class WidthModel:
    """Analytic ensemble-averaged mean-square spectral width of rank k."""

    n: int
    k: int
    beta: int
    value: float


def sample_couplings(
    k: int,
    beta: int,
    rng: np.random.Generator,
    v0: float = 1.0,
    convention: str = "standard",
) -> CouplingMatrix:
    """Draw a Gaussian coupling table with zero mean and base variance v0^2.

    Under the ``standard`` convention the table is a GOE (beta=1) or GUE
    (beta=2) member: off-diagonal variance v0^2 and, for beta=1, doubled
    diagonal variance 2 v0^2.  ``uniform`` keeps every independent entry at
    variance v0^2 (it differs from ``standard`` only for the beta=1
    diagonal).  Entries are consumed from ``rng`` in a fixed order, so the
    result is deterministic given the stream state.
    """
    if k < 1:
        raise ValueError(f"interaction rank must be >= 1, got k={k}")
    if beta not in (1, 2):
        raise ValueError(f"beta must be 1 or 2, got {beta}")
    if convention not in COUPLING_CONVENTIONS:
        raise ValueError(f"unknown coupling convention {convention!r}")
    m = k + 1
    iu = np.triu_indices(m, 1)
    if beta == 1:
        v = np.zeros((m, m))
        v[iu] = rng.standard_normal(iu[0].size)
        v = v + v.T
        dscale = math.sqrt(2.0) if convention == "standard" else 1.0
        v[np.diag_indices(m)] = dscale * rng.standard_normal(m)
    else:
        v = np.zeros((m, m), dtype=complex)
        off = rng.standard_normal(iu[0].size) + 1j * rng.standard_normal(iu[0].size)
        v[iu] = off / math.sqrt(2.0)
        v = v + v.conj().T
        v[np.diag_indices(m)] = rng.standard_normal(m)
    return CouplingMatrix(k=k, beta=beta, v=v * v0, v0=v0)


def embed(c: CouplingMatrix, space: FockSpace) -> EmbeddedHamiltonian:
    """Embed a coupling table into the fixed-n Fock space.

    full = sum_{r,s} v[r, s] * monomial(k, r, s); Hermiticity of the table
    and the adjoint pairing of the monomials make the result Hermitian
    (real symmetric for beta=1).
    """
    n = space.n
    if c.k > n:
        raise ValueError(f"interaction rank k={c.k} exceeds particle count n={n}")
    dim = space.dim
    dtype = float if c.beta == 1 else complex
    full = np.zeros((dim, dim), dtype=dtype)
    for r in range(c.k + 1):
        for s in range(c.k + 1):
            coeff = c.v[r, s]
            if coeff == 0:
                continue
            full += coeff * _monomial_cached(n, c.k, r, s)
    diag = full.diagonal().real.copy()
    offdiag = full - np.diag(diag).astype(dtype)
    return EmbeddedHamiltonian(n=n, k=c.k, beta=c.beta, full=full, diag=diag, offdiag=offdiag)


def lambda_eig(s: int, kk: int, n: int) -> float:
    """Correlation-matrix eigenvalue C(n-s, kk) * C(n+s+1, kk).

    Binomials are evaluated exactly in arbitrary precision before the float
    conversion.
    """
    if not 0 <= s <= n:
        raise ValueError(f"need 0 <= s <= n, got s={s}, n={n}")
    if not 0 <= kk <= n - s:
        raise ValueError(f"need 0 <= kk <= n - s, got kk={kk}, n-s={n - s}")
    return float(math.comb(n - s, kk) * math.comb(n + s + 1, kk))


def spectral_width(k: int, n: int, beta: int) -> WidthModel:
    """Ensemble-averaged (1/N) tr H_k^2 of the embedded rank-k operator.

    For beta=1 the time-reversal pairing adds (1/N) sum_{s<=k} of the
    correlation eigenvalues evaluated at rank n - k.
    """
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if beta not in (1, 2):
        raise ValueError(f"beta must be 1 or 2, got {beta}")
    value = lambda_eig(0, k, n)
    if beta == 1:
        value += sum(lambda_eig(s, n - k, n) for s in range(k + 1)) / (n + 1)
    return WidthModel(n=n, k=k, beta=beta, value=value)


def interaction_norm(k: int, n: int, beta: int, width_mode: str = "sqrt") -> float:
    """Normalization applied to a rank-k interaction term.

    The default divides by the spectral width as an energy scale, i.e. the
    square root of the mean-square trace; ``as-defined`` divides by the
    mean-square trace itself.  Both conventions are exposed because only the
    relative scale of terms matters once times are measured in Heisenberg
    units, except for the particle-number scaling of the freeze plateau,
    which requires the energy-scale reading.
    """
    if width_mode not in WIDTH_MODES:
        raise ValueError(f"unknown width mode {width_mode!r}")
    w = spectral_width(k, n, beta).value
    return math.sqrt(w) if width_mode == "sqrt" else w


def empirical_width(h: EmbeddedHamiltonian | np.ndarray) -> float:
    """(1/N) tr(H^2) of a single realization (Frobenius norm squared)."""
    full = h.full if isinstance(h, EmbeddedHamiltonian) else np.asarray(h)
    return float(np.linalg.norm(full, "fro") ** 2) / full.shape[0]
