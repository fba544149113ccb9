"""Monte-Carlo harness: phase transitions, noise and oversampling sweeps,
and empirical near-isometry diagnostics.

Every experiment is a pure function of its specification and a base seed:
per-trial seeds derive from (base_seed, experiment tag, cell, trial), cells
are independent work items, and tables reduce in a fixed cell order, so
serial and parallel runs produce identical results.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .linop import apply_forward_rank1, lifted_distance
from .seeding import derive_rng, derive_seed_sequence
from .signal_model import (
    DimensionError,
    GroundTruth,
    coherence_profile,
    make_instance_1d,
    sample_ground_truth,
    synthesize_measurements,
)
from .solver import (
    SolveOptions,
    initialize,
    initialize_batch,
    relative_error,
    run_gradient_descent_batch,
)

__all__ = [
    "PhaseGrid",
    "SweepTable",
    "RipReport",
    "run_phase_transition",
    "run_noise_sweep",
    "run_oversampling_sweep",
    "empirical_rip_check",
    "default_worker_count",
]

_RIP_QUANTILES = (0.01, 0.05, 0.25, 0.50, 0.75, 0.95, 0.99)


@dataclass
class PhaseGrid:
    """Success counts of end-to-end recovery over a 2D dimension grid."""

    x_name: str
    x_values: list
    y_name: str
    y_values: list
    fixed: dict
    trials: int
    threshold: float
    success_counts: np.ndarray  # (len(y), len(x)) int
    valid: np.ndarray  # (len(y), len(x)) bool

    def success_rate(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.where(self.valid, self.success_counts / self.trials, np.nan)

    def region_size(self, rate: float = 0.95) -> int:
        """Number of valid cells at or above a success rate."""
        return int(np.sum(self.valid & (self.success_counts >= rate * self.trials)))


@dataclass
class SweepTable:
    """Mean log10 relative error along one swept parameter."""

    abscissa_name: str
    abscissa: list
    mean_log_error: list
    trials: int

    def geometric_mean_error(self) -> np.ndarray:
        return 10.0 ** np.asarray(self.mean_log_error)


@dataclass
class RipReport:
    """Distribution of ||A(D)||^2 / ||D||_F^2 over neighborhood samples."""

    samples: int
    max_deviation: float
    mean_ratio: float
    quantiles: dict
    fraction_within_half: float  # share of ratios inside [0.5, 1.5]
    rejection_exhausted: bool


def default_worker_count() -> int:
    env = os.environ.get("MODDECONV_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def _trial_seed(base_seed: int, *tags) -> int:
    ss = derive_seed_sequence(base_seed, *tags)
    return int(ss.generate_state(1, np.uint64)[0] & 0x7FFFFFFFFFFFFFFF)


def _cell_dims(fixed: dict, overrides: dict) -> dict:
    dims = {"L": None, "Q": None, "M": None, "K": None, "N": 1}
    dims.update(fixed)
    dims.update(overrides)
    missing = [k for k, v in dims.items() if v is None]
    if missing:
        raise DimensionError(f"phase grid is missing dimensions {missing}")
    return {k: int(v) for k, v in dims.items()}


def _dims_valid(dims: dict) -> bool:
    if min(dims.values()) < 1:
        return False
    if dims["L"] < max(dims["Q"], dims["M"]):
        return False
    if dims["Q"] < dims["K"]:
        return False
    return True


def _solve_cell(dims: dict, trials: int, base_seed: int, tag_indices: tuple,
                options: SolveOptions, threshold: float) -> int:
    """Run `trials` independent end-to-end recoveries; return success count."""
    instances, measurements, truths, targets = [], [], [], []
    for t in range(trials):
        seed = _trial_seed(base_seed, "phase", *tag_indices, t)
        inst = make_instance_1d(dims["L"], dims["Q"], dims["M"], dims["K"],
                                dims["N"], seed=seed)
        truth = sample_ground_truth(dims["M"], dims["K"], dims["N"], seed=seed)
        meas = synthesize_measurements(inst, truth, sigma=0.0, seed=seed)
        prof = coherence_profile(inst, truth.h0, truth.x0)
        instances.append(inst)
        measurements.append(meas)
        truths.append(truth)
        targets.append((prof.mu2, prof.nu2))
    inits = initialize_batch(instances, measurements, targets=targets)
    results = run_gradient_descent_batch(instances, measurements, inits, options,
                                         truths=truths, targets=targets)
    count = 0
    for inst, res, truth in zip(instances, results, truths):
        err = relative_error(res.u, res.v, truth.h0, truth.x0)
        if err < threshold:
            count += 1
    return count


def _phase_cell_worker(args):
    (xi, yi, dims, trials, base_seed, options, threshold) = args
    return xi, yi, _solve_cell(dims, trials, base_seed, (xi, yi), options, threshold)


def run_phase_transition(x_axis: tuple, y_axis: tuple, fixed: dict, trials: int,
                         base_seed: int, threshold: float = 1e-2,
                         options: SolveOptions | None = None,
                         workers: int | None = None) -> PhaseGrid:
    """Success-probability table over a 2D grid of problem dimensions.

    x_axis and y_axis are (name, values) pairs naming dimensions among
    L, Q, M, K, N; `fixed` assigns the rest. Each cell runs `trials`
    independent draws solved end-to-end (initialization plus descent); a
    trial succeeds when the relative error falls below `threshold`.
    Dimensionally impossible cells are marked invalid rather than zero.
    """
    x_name, x_values = x_axis
    y_name, y_values = y_axis
    if options is None:
        options = SolveOptions(max_iters=3000, error_stop=threshold / 10.0)
    counts = np.zeros((len(y_values), len(x_values)), dtype=int)
    valid = np.zeros_like(counts, dtype=bool)
    work = []
    for yi, yv in enumerate(y_values):
        for xi, xv in enumerate(x_values):
            dims = _cell_dims(fixed, {x_name: xv, y_name: yv})
            if _dims_valid(dims):
                valid[yi, xi] = True
                work.append((xi, yi, dims, trials, base_seed, options, threshold))
    nworkers = workers if workers is not None else default_worker_count()
    if nworkers > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=nworkers) as pool:
            for xi, yi, count in pool.map(_phase_cell_worker, work, chunksize=1):
                counts[yi, xi] = count
    else:
        for item in work:
            xi, yi, count = _phase_cell_worker(item)
            counts[yi, xi] = count
    return PhaseGrid(x_name=x_name, x_values=list(x_values), y_name=y_name,
                     y_values=list(y_values), fixed=dict(fixed), trials=trials,
                     threshold=threshold, success_counts=counts, valid=valid)


def _sweep_errors(dims: dict, sigma: float, trials: int, base_seed: int,
                  tag: tuple, options: SolveOptions) -> np.ndarray:
    instances, measurements, truths, targets = [], [], [], []
    for t in range(trials):
        seed = _trial_seed(base_seed, *tag, t)
        inst = make_instance_1d(dims["L"], dims["Q"], dims["M"], dims["K"],
                                dims["N"], seed=seed)
        truth = sample_ground_truth(dims["M"], dims["K"], dims["N"], seed=seed)
        meas = synthesize_measurements(inst, truth, sigma=sigma, seed=seed)
        prof = coherence_profile(inst, truth.h0, truth.x0)
        instances.append(inst)
        measurements.append(meas)
        truths.append(truth)
        targets.append((prof.mu2, prof.nu2))
    inits = initialize_batch(instances, measurements, targets=targets)
    results = run_gradient_descent_batch(instances, measurements, inits, options,
                                         truths=truths, targets=targets)
    return np.array([relative_error(r.u, r.v, t.h0, t.x0)
                     for r, t in zip(results, truths)])


def run_noise_sweep(dims: dict, snr_db_list, trials: int, base_seed: int,
                    options: SolveOptions | None = None) -> SweepTable:
    """Mean log10 relative error vs measurement SNR in dB.

    The noise scale follows sigma = 10^(-SNR/20), so the expected noise
    energy matches the requested SNR under the measurement noise law.
    """
    if options is None:
        options = SolveOptions(max_iters=2000)
    means = []
    for si, snr in enumerate(snr_db_list):
        sigma = 10.0 ** (-float(snr) / 20.0)
        errs = _sweep_errors(dims, sigma, trials, base_seed, ("noise", si), options)
        means.append(float(np.mean(np.log10(np.maximum(errs, 1e-16)))))
    return SweepTable(abscissa_name="snr_db", abscissa=list(snr_db_list),
                      mean_log_error=means, trials=trials)


def run_oversampling_sweep(template: dict, ratios, trials: int, base_seed: int,
                           options: SolveOptions | None = None) -> SweepTable:
    """Mean log10 relative error vs oversampling ratio L/(KN+M), noiseless.

    For each ratio r the measurement length is L = Q = round(r * (KN+M))
    with N = 1 channels.
    """
    if options is None:
        options = SolveOptions(max_iters=3000, error_stop=1e-6)
    if any(r < 1 for r in ratios):
        raise DimensionError("oversampling ratios must be >= 1")
    K, M = int(template["K"]), int(template["M"])
    N = int(template.get("N", 1))
    means = []
    for ri, ratio in enumerate(ratios):
        L = max(int(round(ratio * (K * N + M))), max(K, M), 2)
        dims = {"L": L, "Q": L, "M": M, "K": K, "N": N}
        errs = _sweep_errors(dims, 0.0, trials, base_seed, ("oversampling", ri), options)
        means.append(float(np.mean(np.log10(np.maximum(errs, 1e-16)))))
    return SweepTable(abscissa_name="oversampling_ratio", abscissa=list(ratios),
                      mean_log_error=means, trials=trials)


def empirical_rip_check(instance, truth: GroundTruth, samples: int,
                        base_seed: int, max_draws_per_sample: int = 10**4) -> RipReport:
    """Sample the ratio ||A(h x^T - h0 x0^T)||^2 / ||h x^T - h0 x0^T||_F^2
    over coherence-bounded neighborhoods of the truth.

    Pairs (h, x) are drawn by rejection: Gaussian directions with norms up
    to 2 sqrt(d0), accepted when their transform-domain peaks respect four
    times the ground-truth coherences.
    """
    prof = coherence_profile(instance, truth.h0, truth.x0)
    root_d0 = np.sqrt(truth.d0)
    cap_h = 4.0 * np.sqrt(prof.mu2) * root_d0
    cap_x = 4.0 * np.sqrt(prof.nu2) * root_d0
    y0 = apply_forward_rank1(instance, truth.h0, truth.x0)
    ratios = np.empty(samples)
    exhausted = False
    for i in range(samples):
        rng = derive_rng(base_seed, "rip-sample", i)
        got = False
        for _ in range(max_draws_per_sample):
            h = rng.standard_normal(instance.M) + 1j * rng.standard_normal(instance.M)
            x = rng.standard_normal(instance.kn) + 1j * rng.standard_normal(instance.kn)
            h *= rng.uniform(0.2, 2.0) * root_d0 / np.linalg.norm(h)
            x *= rng.uniform(0.2, 2.0) * root_d0 / np.linalg.norm(x)
            peak_h = np.sqrt(instance.L) * np.max(
                np.abs(instance.transform.filter_spectrum(h)))
            if peak_h > cap_h:
                continue
            peak_x = np.sqrt(instance.Q * instance.N) * np.max(
                np.abs(instance.basis.apply(instance.x_blocks(x))))
            if peak_x > cap_x:
                continue
            denom = lifted_distance(h, x, truth.h0, truth.x0) ** 2
            if denom < 1e-12 * truth.d0 ** 2:
                continue
            num = np.linalg.norm(apply_forward_rank1(instance, h, x) - y0) ** 2
            ratios[i] = num / denom
            got = True
            break
        if not got:
            exhausted = True
            ratios[i] = np.nan
    clean = ratios[np.isfinite(ratios)]
    qs = {f"q{int(q * 100):02d}": float(np.quantile(clean, q)) for q in _RIP_QUANTILES}
    within = float(np.mean((clean >= 0.5) & (clean <= 1.5)))
    return RipReport(samples=int(clean.size),
                     max_deviation=float(np.max(np.abs(clean - 1.0))),
                     mean_ratio=float(np.mean(clean)),
                     quantiles=qs,
                     fraction_within_half=within,
                     rejection_exhausted=exhausted)
