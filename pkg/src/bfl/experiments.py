"""Ensemble-averaged fidelity experiments and observable extraction.

Implements the fixed-diagonal averaging protocol: one frozen one-body draw
and (optionally) one frozen k-body diagonal define the reference; each
realization then contributes fresh off-diagonal couplings, its own initial
state, and a fidelity trace.  Realization i consumes streams derived from
(master_seed, lane, i), so results are bit-identical regardless of execution
order or worker count.  Extraction routines measure the freeze plateau, the
freeze-end time, power-law scalings, and (fractional) revival periods.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.ndimage import median_filter

from bfl.dynamics import (
    FidelityTrace,
    build_perturbed,
    build_reference,
    fidelity_trace,
    random_state,
)
from bfl.ensemble import (
    COUPLING_CONVENTIONS,
    WIDTH_MODES,
    CouplingMatrix,
    sample_couplings,
)
from bfl.fock import FockSpace

__all__ = [
    "TimeGrid",
    "EnsembleRunConfig",
    "EnsembleResult",
    "PlateauStats",
    "RevivalReport",
    "ScalingFit",
    "FreezeEndScan",
    "EnsembleRunError",
    "FreezeNotEndedError",
    "run_ensemble",
    "realize_member",
    "detect_plateau",
    "detect_freeze_end",
    "find_freeze_end",
    "fit_scaling",
    "detect_revival_period",
    "dominated_perturbation",
]

DIAGONAL_POLICIES = ("fixed", "resampled")
STATE_POLICIES = ("per-realization", "shared")

# stream lanes derived from the master seed
_LANE_ONE_BODY = 0
_LANE_KBODY_BASE = 1
_LANE_SHARED_STATE = 2
_LANE_COUPLINGS = 3
_LANE_STATE = 4


class EnsembleRunError(RuntimeError):
    """More than the tolerated fraction of realizations failed."""

    def __init__(self, message: str, failures: list[tuple[int, str]]):
        super().__init__(message)
        self.failures = failures


class FreezeNotEndedError(ValueError):
    """No persistent crossing found; the freeze outlasts the trace."""

    def __init__(self, lower_bound: float):
        super().__init__(f"freeze has not ended by t = {lower_bound:g} (lower bound)")
        self.lower_bound = lower_bound


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, t_max] in Heisenberg-time units."""

    t_max: float = 6.0
    points_per_unit: int = 2048

    def __post_init__(self):
        if self.t_max <= 0 or self.points_per_unit < 1:
            raise ValueError("grid needs t_max > 0 and points_per_unit >= 1")

    def times(self) -> np.ndarray:
        count = int(round(self.t_max * self.points_per_unit)) + 1
        return np.linspace(0.0, self.t_max, count)


@dataclass(frozen=True)
class EnsembleRunConfig:
    """Full description of one ensemble-averaged fidelity experiment."""

    n: int
    k: int
    beta: int
    lam: float
    realizations: int = 1000
    master_seed: int = 0
    diagonal_policy: str = "fixed"
    state_policy: str = "per-realization"
    grid: TimeGrid = field(default_factory=TimeGrid)
    coupling_convention: str = "standard"
    width_mode: str = "sqrt"
    v0: float = 1.0
    dominant_c: int | None = None
    boost: float = 100.0
    threads: int = 1
    keep_traces: bool = False

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ValueError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        if self.beta not in (1, 2):
            raise ValueError(f"beta must be 1 or 2, got {self.beta}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.realizations < 1:
            raise ValueError("need at least one realization")
        if self.diagonal_policy not in DIAGONAL_POLICIES:
            raise ValueError(f"diagonal_policy must be one of {DIAGONAL_POLICIES}")
        if self.state_policy not in STATE_POLICIES:
            raise ValueError(f"state_policy must be one of {STATE_POLICIES}")
        if self.coupling_convention not in COUPLING_CONVENTIONS:
            raise ValueError(f"coupling_convention must be one of {COUPLING_CONVENTIONS}")
        if self.width_mode not in WIDTH_MODES:
            raise ValueError(f"width_mode must be one of {WIDTH_MODES}")
        if self.dominant_c is not None and not 1 <= self.dominant_c <= self.k:
            raise ValueError(f"need 1 <= dominant_c <= k, got {self.dominant_c}")
        if self.boost < 1:
            raise ValueError(f"boost must be >= 1, got {self.boost}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass(frozen=True)
class EnsembleResult:
    config: EnsembleRunConfig
    times: np.ndarray
    mean_f: np.ndarray
    std_f: np.ndarray
    n_realizations: int
    heisenberg_time: float
    failures: list[tuple[int, str]]
    per_realization_f: np.ndarray | None = None


@dataclass(frozen=True)
class PlateauStats:
    plateau_level: float
    window: tuple[float, float]
    freeze_end: float | None
    plateau_se: float | None = None


@dataclass(frozen=True)
class RevivalReport:
    period: float
    c: int
    confidence: float


@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    prefactor: float
    residual: float


@dataclass(frozen=True)
class FreezeEndScan:
    freeze_ends: list[float]
    fit: ScalingFit


def _rng(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=key))


def dominated_perturbation(base: CouplingMatrix, c: int, boost: float) -> CouplingMatrix:
    """Boost every |r - s| = c amplitude, emulating a dominated k-body term.

    Hermitian pairs are scaled together and r = s entries are never touched,
    so the embedded diagonal (and with it the reference Hamiltonian) is
    unchanged.
    """
    if not 1 <= c <= base.k:
        raise ValueError(f"need 1 <= c <= k, got c={c}, k={base.k}")
    if boost < 1:
        raise ValueError(f"boost must be >= 1, got {boost}")
    v = base.v.copy()
    for r in range(base.k + 1):
        for s in range(base.k + 1):
            if abs(r - s) == c:
                v[r, s] *= boost
    return replace(base, v=v)


def _member_inputs(cfg: EnsembleRunConfig, index: int):
    """Couplings and initial state of realization `index` (pure given cfg)."""
    one_body = sample_couplings(
        1, cfg.beta, _rng(cfg.master_seed, _LANE_ONE_BODY), cfg.v0, cfg.coupling_convention
    )
    kbody = sample_couplings(
        cfg.k, cfg.beta, _rng(cfg.master_seed, _LANE_COUPLINGS, index), cfg.v0, cfg.coupling_convention
    )
    if cfg.diagonal_policy == "fixed":
        base = sample_couplings(
            cfg.k, cfg.beta, _rng(cfg.master_seed, _LANE_KBODY_BASE), cfg.v0, cfg.coupling_convention
        )
        kbody = kbody.with_diagonal(base.diagonal)
    if cfg.dominant_c is not None:
        kbody = dominated_perturbation(kbody, cfg.dominant_c, cfg.boost)
    if cfg.state_policy == "shared":
        psi0 = random_state(cfg.n + 1, _rng(cfg.master_seed, _LANE_SHARED_STATE))
    else:
        psi0 = random_state(cfg.n + 1, _rng(cfg.master_seed, _LANE_STATE, index))
    return one_body, kbody, psi0


def realize_member(cfg: EnsembleRunConfig, index: int = 0) -> FidelityTrace:
    """Fidelity trace of a single ensemble member (used by the trace CLI)."""
    space = FockSpace(cfg.n)
    one_body, kbody, psi0 = _member_inputs(cfg, index)
    ref = build_reference(one_body, kbody, cfg.lam, space, cfg.width_mode)
    pert = build_perturbed(ref, kbody, space)
    return fidelity_trace(ref, pert, psi0, cfg.grid.times())


@dataclass
class _Moments:
    """Mergeable running moments (count, mean, M2) per grid point."""

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def from_sample(cls, values: np.ndarray) -> "_Moments":
        return cls(1, values.astype(float, copy=True), np.zeros_like(values, dtype=float))

    def merge(self, other: "_Moments") -> "_Moments":
        total = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / total)
        m2 = self.m2 + other.m2 + delta**2 * (self.count * other.count / total)
        return _Moments(total, mean, m2)


class _PairwiseReducer:
    """Streaming pairwise merge of moments in realization-index order.

    Maintains a stack of partial aggregates whose sizes are powers of two,
    merging equals as they appear; the reduction tree therefore depends only
    on the number of samples, never on timing or worker count.
    """

    def __init__(self):
        self._stack: list[_Moments] = []

    def push(self, values: np.ndarray) -> None:
        node = _Moments.from_sample(values)
        while self._stack and self._stack[-1].count == node.count:
            node = self._stack.pop().merge(node)
        self._stack.append(node)

    def result(self) -> _Moments:
        if not self._stack:
            raise ValueError("no samples accumulated")
        node = self._stack.pop()
        while self._stack:
            node = self._stack.pop().merge(node)
        return node


def run_ensemble(cfg: EnsembleRunConfig) -> EnsembleResult:
    """Ensemble-averaged fidelity under the fixed-diagonal protocol.

    Realizations are independent work items on a thread pool (the heavy
    eigensolver and kernel calls release the GIL); accumulation consumes
    results in index order through a deterministic pairwise reduction, so
    the output is bitwise independent of `threads`.
    """
    space = FockSpace(cfg.n)
    times = cfg.grid.times()

    def one(index: int) -> tuple[np.ndarray, float]:
        one_body, kbody, psi0 = _member_inputs(cfg, index)
        ref = build_reference(one_body, kbody, cfg.lam, space, cfg.width_mode)
        pert = build_perturbed(ref, kbody, space)
        trace = fidelity_trace(ref, pert, psi0, times)
        return trace.fidelities, trace.heisenberg_time

    reducer = _PairwiseReducer()
    failures: list[tuple[int, str]] = []
    kept = [] if cfg.keep_traces else None
    t_h = math.nan
    max_failures = 0.01 * cfg.realizations

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        futures = [pool.submit(one, i) for i in range(cfg.realizations)]
        for i, future in enumerate(futures):
            try:
                fid, member_th = future.result()
            except (ValueError, RuntimeError) as exc:
                failures.append((i, str(exc)))
                if len(failures) > max_failures:
                    for pending in futures[i + 1 :]:
                        pending.cancel()
                    raise EnsembleRunError(
                        f"{len(failures)} of {cfg.realizations} realizations failed "
                        f"(> 1% tolerated); first: {failures[0][1]}",
                        failures,
                    ) from exc
                continue
            if math.isnan(t_h):
                t_h = member_th
            reducer.push(fid)
            if kept is not None:
                kept.append(fid)

    moments = reducer.result()
    if moments.count > 1:
        std_f = np.sqrt(moments.m2 / (moments.count - 1))
    else:
        std_f = np.zeros_like(moments.mean)
    return EnsembleResult(
        config=cfg,
        times=times,
        mean_f=moments.mean,
        std_f=std_f,
        n_realizations=moments.count,
        heisenberg_time=t_h,
        failures=failures,
        per_realization_f=np.array(kept) if kept is not None else None,
    )


def _coverage(times: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return (times >= lo) & (times <= hi)


def find_freeze_end(
    times: np.ndarray,
    one_minus_f: np.ndarray,
    plateau_level: float,
    *,
    start: float = 2.0,
    factor: float = 3.0,
    persistence: float = 0.5,
    median_window: float = 0.1,
) -> float:
    """First time after `start` where the running median of 1 - <F> stays
    above `factor` * plateau for `persistence` Heisenberg times.

    Raises FreezeNotEndedError (carrying the testable lower bound) when the
    trace ends still frozen.
    """
    dt = times[1] - times[0]
    # window floors keep the estimator meaningful on coarse long-run grids
    med_pts = max(int(round(median_window / dt)) | 1, 15)
    need = max(int(round(persistence / dt)), 15)
    smooth = median_filter(one_minus_f, size=med_pts, mode="nearest")
    above = smooth > factor * plateau_level
    begin = int(np.searchsorted(times, start, side="right"))
    run = 0
    for i in range(begin, above.size):
        run = run + 1 if above[i] else 0
        if run >= need:
            return float(times[i - need + 1])
    raise FreezeNotEndedError(float(times[-1] - persistence))


def detect_revival_period(
    times: np.ndarray,
    fidelities: np.ndarray,
    window: tuple[float, float],
    *,
    min_periods: int = 8,
    factor: float = 3.0,
    min_fraction: float = 0.05,
) -> RevivalReport | None:
    """Dominant periodicity of 1 - F inside `window` via autocorrelation.

    The period is the smallest autocorrelation-peak lag within 80% of the
    tallest peak (guards against landing on a higher harmonic).  A peak only
    counts when it exceeds `factor` times the aperiodic background and
    carries at least `min_fraction` of the window variance.  The background
    is the largest autocorrelation value expected from the measurement noise
    alone (noise variance from robust first differences, scaled by the
    extreme-value factor for the number of candidate lags); smooth periodic
    signals therefore score high confidence even though their
    autocorrelation is structured at every lag.  Returns None when nothing
    qualifies.
    """
    t_a, t_b = window
    mask = _coverage(times, t_a, t_b)
    if mask.sum() < 16:
        raise ValueError(f"window [{t_a}, {t_b}] has too few grid points")
    tw = times[mask]
    dt = times[1] - times[0]
    g = 1.0 - fidelities[mask]
    # mean and linear-trend removal: slow drifts otherwise masquerade as
    # long-period structure
    g = g - np.polyval(np.polyfit(tw, g, 1), tw)
    npts = g.size
    span = tw[-1] - tw[0]
    max_lag = int(math.floor(span / min_periods / dt))
    min_lag = 4
    if max_lag <= min_lag:
        raise ValueError("window too short for the requested minimum period count")

    nfft = 1 << int(np.ceil(np.log2(2 * npts)))
    spec = np.abs(np.fft.rfft(g, nfft)) ** 2
    ac = np.fft.irfft(spec, nfft)[: max_lag + 2]
    ac /= np.arange(npts, npts - max_lag - 2, -1)  # unbiased normalization
    if ac[0] <= 0:
        return None

    diffs = np.diff(g)
    # robust white-noise variance: diff of iid noise is N(0, 2 sigma^2) and
    # the median of chi^2_1 is 0.4549, hence the calibration factor
    noise_var = float(np.median(diffs**2)) / (2.0 * 0.4549) if diffs.size else 0.0
    n_candidates = max(max_lag - min_lag + 1, 3)
    background = noise_var * math.sqrt(2.0 * math.log(n_candidates) / npts)
    background = max(background, 1e-12 * ac[0])

    peaks = [
        lag
        for lag in range(min_lag, max_lag + 1)
        if ac[lag] > ac[lag - 1]
        and ac[lag] >= ac[lag + 1]
        and ac[lag] >= factor * background
        and ac[lag] >= min_fraction * ac[0]
    ]
    if not peaks:
        return None
    tallest = max(ac[lag] for lag in peaks)
    lag = min(p for p in peaks if ac[p] >= 0.8 * tallest)
    period = lag * dt
    return RevivalReport(
        period=float(period),
        c=max(1, round(1.0 / period)),
        confidence=float(ac[lag] / background),
    )


def detect_plateau(
    times: np.ndarray,
    mean_f: np.ndarray,
    *,
    std_f: np.ndarray | None = None,
    n_realizations: int | None = None,
    exclusion_halfwidth: float = 0.05,
) -> PlateauStats:
    """Freeze-plateau height of 1 - <F> (median over the freeze window).

    Two passes: a rough median over [1.5, 4.5] seeds the freeze-end guess,
    which then caps the final window at 0.5 * t_e; grid points within
    `exclusion_halfwidth` of integer multiples of the revival period are
    dropped so the revival dips do not bias the median.
    """
    if times[0] > 1.0 or times[-1] < 5.0:
        raise ValueError("plateau detection needs the trace to cover t in [1, 5]")
    g = 1.0 - mean_f

    rough_mask = _coverage(times, 1.5, 4.5)
    rough = float(np.median(g[rough_mask]))
    try:
        t_e_guess: float | None = find_freeze_end(times, g, rough)
    except FreezeNotEndedError:
        t_e_guess = None

    hi = 4.5 if t_e_guess is None else min(4.5, 0.5 * t_e_guess)
    if hi <= 1.5 + 0.25:  # degenerate freeze window; fall back to the rough one
        hi = 4.5
    window = (1.5, hi)

    # exclusion grid: detected revival period if measurable, else the
    # generic Heisenberg-time periodicity
    try:
        report = detect_revival_period(times, mean_f, window, min_periods=3)
    except ValueError:
        report = None
    period = report.period if report is not None else 1.0

    mask = _coverage(times, *window)
    phase = times / period
    near_revival = np.abs(phase - np.round(phase)) * period <= exclusion_halfwidth
    keep = mask & ~near_revival
    if not keep.any():
        keep = mask
    plateau = float(np.median(g[keep]))

    plateau_se = None
    if std_f is not None and n_realizations and n_realizations > 1:
        se_points = std_f[keep] / math.sqrt(n_realizations)
        plateau_se = float(np.median(se_points))

    freeze_end: float | None
    try:
        freeze_end = find_freeze_end(times, g, plateau)
    except FreezeNotEndedError:
        freeze_end = None
    return PlateauStats(
        plateau_level=plateau, window=window, freeze_end=freeze_end, plateau_se=plateau_se
    )


def fit_scaling(points: Sequence[tuple[float, float]]) -> ScalingFit:
    """Power-law fit y = prefactor * x^exponent by least squares in log-log.

    Needs at least two distinct positive abscissas (three or more for a
    meaningful residual).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two (x, y) points")
    x, y = pts[:, 0], pts[:, 1]
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs strictly positive coordinates")
    if np.unique(x).size != x.size:
        raise ValueError("abscissas must be distinct")
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    resid = np.log(y) - (slope * np.log(x) + intercept)
    return ScalingFit(
        exponent=float(slope),
        prefactor=float(np.exp(intercept)),
        residual=float(np.sqrt(np.mean(resid**2))),
    )


def detect_freeze_end(
    entries: Sequence[tuple[float, np.ndarray, np.ndarray]],
) -> FreezeEndScan:
    """Freeze-end times for a family of (lambda, times, mean_f) traces plus
    the fitted power-law exponent of t_e versus lambda."""
    lams, ends = [], []
    for lam, times, mean_f in entries:
        stats = detect_plateau(times, mean_f)
        t_e = stats.freeze_end
        if t_e is None:
            raise FreezeNotEndedError(float(times[-1]))
        lams.append(lam)
        ends.append(t_e)
    fit = fit_scaling(list(zip(lams, ends)))
    return FreezeEndScan(freeze_ends=ends, fit=fit)
