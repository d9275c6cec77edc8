"""One-off calibration sweep for the acceptance parameters (dev tool)."""

import time

import numpy as np

from bfl.experiments import (
    EnsembleRunConfig,
    TimeGrid,
    detect_plateau,
    detect_revival_period,
    fit_scaling,
    run_ensemble,
)

SEED = 20260810


def cfg(**kw):
    base = dict(
        n=128, k=2, beta=1, lam=1e-6, realizations=100, master_seed=SEED,
        grid=TimeGrid(6.0, 2048), threads=2,
    )
    base.update(kw)
    return EnsembleRunConfig(**base)


def report_plateau(tag, result):
    stats = detect_plateau(result.times, result.mean_f, std_f=result.std_f,
                           n_realizations=result.n_realizations)
    print(f"[{tag}] plateau={stats.plateau_level:.4e} se={stats.plateau_se:.2e} "
          f"window={stats.window} t_e={stats.freeze_end}", flush=True)
    return stats


def main():
    t0 = time.time()

    # --- run A: n=128, lam=1e-6 (quadratic, revival, shared sweep point)
    a = run_ensemble(cfg())
    print(f"run A done {time.time()-t0:.0f}s", flush=True)
    g = 1 - a.mean_f
    mask = (a.times >= 0.02) & (a.times <= 0.3)
    fit = fit_scaling(list(zip(a.times[mask], g[mask])))
    print(f"[quadratic] exponent={fit.exponent:.3f} residual={fit.residual:.3f}", flush=True)
    stats_a = report_plateau("A plateau", a)
    w = (a.times >= 0.5) & (a.times <= 1.5)
    i = np.argmax(a.mean_f[w]) + np.nonzero(w)[0][0]
    print(f"[revival] argmax t={a.times[i]:.6f} 1-F={g[i]:.3e} plateau/5={stats_a.plateau_level/5:.3e}", flush=True)
    rep = detect_revival_period(a.times, a.mean_f, (1.5, 5.5))
    print(f"[A period] {rep}", flush=True)

    # --- lambda sweep
    plateaus = {1e-6: stats_a.plateau_level}
    for lam in (2e-6, 4e-6):
        r = run_ensemble(cfg(lam=lam))
        plateaus[lam] = report_plateau(f"lam={lam}", r).plateau_level
    fit = fit_scaling([(lam, p) for lam, p in plateaus.items()])
    print(f"[lambda^2] exponent={fit.exponent:.3f}", flush=True)

    # --- n sweep
    nplat = {128: stats_a.plateau_level}
    for n in (64, 256):
        r = run_ensemble(cfg(n=n))
        nplat[n] = report_plateau(f"n={n}", r).plateau_level
    fit = fit_scaling([(n, p) for n, p in nplat.items()])
    print(f"[n^2] exponent={fit.exponent:.3f}  ({time.time()-t0:.0f}s)", flush=True)

    # --- Fig 0: fixed vs resampled diagonal
    r = run_ensemble(cfg(diagonal_policy="resampled"))
    stats_r = report_plateau("resampled", r)
    diff = abs(stats_r.plateau_level - stats_a.plateau_level)
    sigma = np.hypot(stats_a.plateau_se, stats_r.plateau_se)
    print(f"[fig0] diff={diff:.3e} 2*sigma={2*sigma:.3e} ok={diff <= 2*sigma}", flush=True)

    # --- fractional revivals
    for (k, c, beta) in [(2, 2, 1), (3, 2, 1), (3, 3, 1), (2, 2, 2), (3, 2, 2), (3, 3, 2)]:
        r = run_ensemble(cfg(k=k, beta=beta, realizations=50, dominant_c=c,
                             grid=TimeGrid(6.0, 512)))
        rep = detect_revival_period(r.times, r.mean_f, (1.5, 5.5))
        print(f"[revival k={k} c={c} beta={beta}] {rep}", flush=True)
    print(f"revivals done {time.time()-t0:.0f}s", flush=True)

    # --- freeze end family (t_e ~ 0.37 / lambda under sqrt widths)
    ends = []
    for lam in (1e-4, 2e-4, 4e-4):
        t_max = 1.0 / lam
        r = run_ensemble(cfg(n=64, lam=lam, realizations=50,
                             grid=TimeGrid(t_max, 3)))
        stats = detect_plateau(r.times, r.mean_f)
        print(f"[freeze lam={lam}] plateau={stats.plateau_level:.3e} t_e={stats.freeze_end} "
              f"({time.time()-t0:.0f}s)", flush=True)
        ends.append((lam, stats.freeze_end))
    fit = fit_scaling(ends)
    print(f"[t_e ~ lambda^-1] exponent={fit.exponent:.3f}", flush=True)
    print(f"TOTAL {time.time()-t0:.0f}s", flush=True)


if __name__ == "__main__":
    main()
