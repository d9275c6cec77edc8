"""Hot kernel of the fidelity evaluation, with compiled/NumPy dual backends.

Given the spectral overlap table B[m, j] = conj(psi0[m]) V[m, j] a[j] and the
reference/perturbed eigenvalues, every grid point of a fidelity trace is the
phase-correlation sum

    f[g] = sum_{m,j} B[m, j] * exp(i * (e_ref[m] - e_pert[j]) * t[g]),

an O(N^2) contraction per time point that dominates ensemble runs.  The
backend is chosen once at import: the Cython extension ``bfl._kernels`` when
it built, otherwise the chunked NumPy implementation below.  Setting
BFL_NO_EXT=1 in the environment forces the NumPy path (used by the
benchmark and the cross-backend tests).
"""

from __future__ import annotations

import os

import numpy as np

try:
    from bfl import _kernels as _compiled
except ImportError:  # extension not built; pure-Python install
    _compiled = None

HAVE_COMPILED = _compiled is not None

__all__ = [
    "HAVE_COMPILED",
    "active_backend",
    "phase_correlation_trace",
    "phase_correlation_trace_numpy",
]


def active_backend() -> str:
    if _compiled is not None and os.environ.get("BFL_NO_EXT") != "1":
        return "compiled"
    return "numpy"


def _validate(B, e_ref, e_pert, times):
    B = np.ascontiguousarray(B, dtype=np.complex128)
    e_ref = np.ascontiguousarray(e_ref, dtype=np.float64)
    e_pert = np.ascontiguousarray(e_pert, dtype=np.float64)
    times = np.ascontiguousarray(times, dtype=np.float64)
    if B.ndim != 2 or B.shape[0] != e_ref.size or B.shape[1] != e_pert.size:
        raise ValueError(f"shape mismatch: B {B.shape}, e_ref {e_ref.size}, e_pert {e_pert.size}")
    return B, e_ref, e_pert, times


def phase_correlation_trace_numpy(B, e_ref, e_pert, times, block: int = 1024) -> np.ndarray:
    """NumPy backend: explicit phase matrices contracted blockwise.

    Blocks bound the G x N phase-matrix memory; results are independent of
    the block size.
    """
    B, e_ref, e_pert, times = _validate(B, e_ref, e_pert, times)
    out = np.empty(times.size, dtype=np.complex128)
    for lo in range(0, times.size, block):
        t = times[lo : lo + block, None]
        p = np.exp(1j * (t * e_ref[None, :]))
        q = np.exp(-1j * (t * e_pert[None, :]))
        out[lo : lo + block] = ((p @ B) * q).sum(axis=1)
    return out


def phase_correlation_trace(B, e_ref, e_pert, times) -> np.ndarray:
    """Evaluate the phase-correlation sum on the active backend."""
    if active_backend() == "compiled":
        B, e_ref, e_pert, times = _validate(B, e_ref, e_pert, times)
        return _compiled.phase_correlation_trace(B, e_ref, e_pert, times)
    return phase_correlation_trace_numpy(B, e_ref, e_pert, times)
