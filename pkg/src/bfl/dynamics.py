"""Reference/perturbed Hamiltonians and exact fidelity traces.

The reference Hamiltonian is diagonal in the occupation basis: a fixed
one-body term plus the diagonal part of the rank-k interaction, each scaled
by its spectral-width normalization (the k-body part additionally by the
perturbation strength).  The perturbed Hamiltonian adds the traceless
off-diagonal remainder of the same rank-k realization.  Time evolution is
exact: one Hermitian eigendecomposition of the perturbed matrix, diagonal
phases for the reference, no time stepping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from bfl.ensemble import CouplingMatrix, embed, interaction_norm
from bfl.fock import FockSpace, _monomial_cached
from bfl.kernels import phase_correlation_trace

__all__ = [
    "CouplingMismatchError",
    "DegenerateSpectrumError",
    "EigendecompositionError",
    "ReferenceHamiltonian",
    "PerturbedHamiltonian",
    "FidelityTrace",
    "build_reference",
    "build_perturbed",
    "heisenberg_time",
    "random_state",
    "fidelity_trace",
]

EIG_RESIDUAL_TOL = 1e-8


class DegenerateSpectrumError(ValueError):
    """The reference spectrum is fully degenerate; no level spacing exists."""


class CouplingMismatchError(ValueError):
    """Perturbation built from a different realization than the reference."""


class EigendecompositionError(RuntimeError):
    """Hermitian eigendecomposition failed its residual check."""


@dataclass(frozen=True)
class ReferenceHamiltonian:
    """Diagonal reference Hamiltonian in the occupation basis.

    diag_values[m] = (v11*m + v00*(n-m)) / w_one + lam * kdiag[m] / w_k,
    where kdiag collects the r = s monomial diagonals weighted by the rank-k
    coupling diagonal.
    """

    n: int
    k: int
    lam: float
    diag_values: np.ndarray
    one_body: CouplingMatrix
    kbody_diag: np.ndarray
    w_one: float
    w_k: float
    width_mode: str


@dataclass(frozen=True)
class PerturbedHamiltonian:
    """Reference plus the scaled traceless off-diagonal rank-k remainder."""

    reference: ReferenceHamiltonian
    residual: np.ndarray
    full: np.ndarray


@dataclass(frozen=True)
class FidelityTrace:
    """Fidelity amplitude and fidelity on a grid in Heisenberg-time units."""

    times: np.ndarray
    amplitudes: np.ndarray
    fidelities: np.ndarray
    heisenberg_time: float
    mean_spacing: float


def build_reference(
    one_body: CouplingMatrix,
    kbody: CouplingMatrix,
    lam: float,
    space: FockSpace,
    width_mode: str = "sqrt",
) -> ReferenceHamiltonian:
    """Assemble the diagonal reference from fixed one-body and k-body draws.

    Only the diagonals of both coupling tables enter; the one-body
    off-diagonal amplitudes are discarded entirely.
    """
    if one_body.k != 1:
        raise ValueError(f"one-body term must have k=1, got k={one_body.k}")
    if kbody.k > space.n:
        raise ValueError(f"interaction rank k={kbody.k} exceeds particle count n={space.n}")
    if one_body.beta != kbody.beta:
        raise ValueError("one-body and k-body tables must share the symmetry class")
    if lam < 0:
        raise ValueError(f"perturbation strength must be >= 0, got {lam}")

    n = space.n
    w_one = interaction_norm(1, n, one_body.beta, width_mode)
    w_k = interaction_norm(kbody.k, n, kbody.beta, width_mode)

    m = np.arange(n + 1, dtype=float)
    v00 = one_body.v[0, 0].real
    v11 = one_body.v[1, 1].real
    one_body_diag = v11 * m + v00 * (n - m)

    kdiag = np.zeros(n + 1)
    for r, vrr in enumerate(kbody.diagonal):
        if vrr != 0:
            kdiag += vrr * _monomial_cached(n, kbody.k, r, r).diagonal()

    diag_values = one_body_diag / w_one + lam * kdiag / w_k
    return ReferenceHamiltonian(
        n=n,
        k=kbody.k,
        lam=float(lam),
        diag_values=diag_values,
        one_body=one_body,
        kbody_diag=kbody.diagonal,
        w_one=w_one,
        w_k=w_k,
        width_mode=width_mode,
    )


def build_perturbed(
    ref: ReferenceHamiltonian,
    kbody: CouplingMatrix,
    space: FockSpace,
) -> PerturbedHamiltonian:
    """Add the scaled off-diagonal part of the same k-body realization.

    The k-body diagonal must be identical to the one baked into the
    reference; anything else means the perturbation comes from a different
    realization.
    """
    if space.n != ref.n:
        raise ValueError(f"space has n={space.n}, reference has n={ref.n}")
    if kbody.k != ref.k:
        raise CouplingMismatchError(f"reference built for k={ref.k}, got k={kbody.k}")
    if not np.array_equal(kbody.diagonal, ref.kbody_diag):
        raise CouplingMismatchError("k-body diagonal differs from the reference realization")

    emb = embed(kbody, space)
    residual = (ref.lam / ref.w_k) * emb.offdiag
    full = residual + np.diag(ref.diag_values).astype(residual.dtype)
    return PerturbedHamiltonian(reference=ref, residual=residual, full=full)


def heisenberg_time(ref: ReferenceHamiltonian) -> tuple[float, float]:
    """Mean level spacing d and Heisenberg time 2*pi/d (hbar = 1).

    d is the spectral span over N - 1: robust for the nearly uniform
    reference spectra produced by the dominant linear one-body term.
    """
    diag = ref.diag_values
    if diag.size < 2:
        raise ValueError("need at least two levels for a spacing")
    d = (float(diag.max()) - float(diag.min())) / (diag.size - 1)
    if d == 0.0:
        raise DegenerateSpectrumError("reference spectrum is fully degenerate")
    return d, 2.0 * np.pi / d


def random_state(N: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform random unit vector (normalized complex Gaussian)."""
    if N < 1:
        raise ValueError(f"dimension must be >= 1, got {N}")
    z = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    return z / np.linalg.norm(z)


def _checked_eigh(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    evals, evecs = np.linalg.eigh(h)
    scale = np.linalg.norm(h, "fro")
    if scale > 0:
        residual = np.linalg.norm(h @ evecs - evecs * evals, "fro")
        if residual > EIG_RESIDUAL_TOL * scale:
            raise EigendecompositionError(
                f"eigendecomposition residual {residual:.3e} exceeds {EIG_RESIDUAL_TOL:.0e} * |H|"
            )
    return evals, evecs


def amplitudes_at(
    ref: ReferenceHamiltonian,
    pert: PerturbedHamiltonian,
    psi0: np.ndarray,
    t_phys: np.ndarray,
) -> np.ndarray:
    """Raw overlap <psi0| U_ref(-t) U_pert(t) |psi0> at physical times."""
    evals, evecs = _checked_eigh(pert.full)
    a = evecs.conj().T @ psi0
    overlap = np.conj(psi0)[:, None] * evecs * a[None, :]
    return phase_correlation_trace(overlap, ref.diag_values, evals, t_phys)


def fidelity_trace(
    ref: ReferenceHamiltonian,
    pert: PerturbedHamiltonian,
    psi0: np.ndarray,
    grid: np.ndarray,
) -> FidelityTrace:
    """Fidelity amplitude/fidelity over a grid in Heisenberg-time units.

    The perturbed matrix is diagonalized once; every grid point then costs
    one phase contraction.  The trace is normalized by the t = 0 overlap
    (equal to |psi0|^2 up to rounding), which pins F(0) = 1 exactly.
    """
    grid = np.asarray(grid, dtype=float)
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != ref.diag_values.shape:
        raise ValueError(f"state has dimension {psi0.size}, expected {ref.diag_values.size}")
    if grid.size == 0 or grid[0] != 0.0:
        raise ValueError("time grid must start at 0")
    if grid.size > 1 and not np.all(np.diff(grid) > 0):
        raise ValueError("time grid must be strictly increasing")

    d, t_h = heisenberg_time(ref)
    f = amplitudes_at(ref, pert, psi0, grid * t_h)
    f = f / f[0].real
    f[0] = 1.0  # exact by definition once normalized; drops ~1e-17 rounding noise
    return FidelityTrace(
        times=grid,
        amplitudes=f,
        fidelities=np.abs(f) ** 2,
        heisenberg_time=t_h,
        mean_spacing=d,
    )
