"""Acceptance suite: every criterion at its stated tolerance.

Run with `pytest tests/test_acceptance.py -s` to see one pass/fail line per
criterion as it completes. The full suite (criterion 9's four 10x10 phase
grids at 50 trials per cell dominate) takes roughly half an hour on two
cores; MODDECONV_THREADS caps the harness parallelism.
"""

import time

import numpy as np
import pytest

from moddeconv import (
    GroundTruth,
    RegularizerParams,
    SolveOptions,
    apply_adjoint,
    apply_forward_general,
    apply_forward_rank1,
    chaos_oracle,
    coherence_profile,
    deblur_demo,
    dense_measurement_oracle,
    empirical_rip_check,
    frobenius_block_distance,
    grad_F,
    grad_G,
    initialize,
    lifted_outer,
    loss_F,
    make_instance_1d,
    neighborhood_flags,
    regularizer_G,
    relative_error,
    run_gradient_descent_batch,
    run_noise_sweep,
    run_oversampling_sweep,
    run_phase_transition,
    sample_ground_truth,
    synthesize_measurements,
)
from moddeconv.experiments import default_worker_count
from moddeconv.imaging import synthetic_cell_images
from moddeconv.seeding import derive_rng

_RESULTS = []


def _report(num, name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:>2} ({name}): {detail}"
    print("\n" + line)
    _RESULTS.append(line)
    assert ok, line


def _crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _desk_instance(rng, max_L=64):
    K = int(rng.integers(2, 7))
    M = int(rng.integers(2, 9))
    q_hi = min(32, max_L - 1)
    Q = int(rng.integers(K, q_hi + 1))
    L = int(rng.integers(max(Q, M), max_L + 1))
    N = int(rng.integers(1, 3))
    inst = make_instance_1d(L, Q, M, K, N, seed=int(rng.integers(2**31)))
    return inst


def test_criterion_01_adjoint_identity():
    t0 = time.time()
    worst = 0.0
    for i in range(100):
        rng = derive_rng(1001, "acc-adjoint", i)
        inst = _desk_instance(rng)
        X = _crandn(rng, inst.M, inst.kn)
        y = _crandn(rng, inst.L * inst.N)
        gap = abs(np.vdot(y, apply_forward_general(inst, X))
                  - np.vdot(apply_adjoint(inst, y), X))
        worst = max(worst, gap / (np.linalg.norm(X) * np.linalg.norm(y)))
    elapsed = time.time() - t0
    _report(1, "adjoint identity", worst <= 1e-10 and elapsed < 5.0,
            f"worst normalized gap {worst:.2e} over 100 instances, {elapsed:.1f}s")


def test_criterion_02_oracle_equivalence():
    t0 = time.time()
    worst_fwd = worst_chaos = 0.0
    for i in range(20):
        rng = derive_rng(1002, "acc-oracle", i)
        inst = _desk_instance(rng, max_L=24)
        X = _crandn(rng, inst.M, inst.kn)
        fft_path = apply_forward_general(inst, X)
        dense = dense_measurement_oracle(inst, X)
        worst_fwd = max(worst_fwd, float(np.max(np.abs(fft_path - dense))))
        h0, x0 = _crandn(rng, inst.M), _crandn(rng, inst.kn)
        h1, x1 = _crandn(rng, inst.M), _crandn(rng, inst.kn)
        c = chaos_oracle(inst, h1, x1, h0, x0)
        f = np.linalg.norm(apply_forward_rank1(inst, h1, x1)
                           - apply_forward_rank1(inst, h0, x0)) ** 2
        worst_chaos = max(worst_chaos, abs(c - f) / max(abs(f), 1e-300))
    elapsed = time.time() - t0
    _report(2, "oracle equivalence",
            worst_fwd <= 1e-10 and worst_chaos <= 1e-8 and elapsed < 10.0,
            f"forward gap {worst_fwd:.2e}, chaos rel gap {worst_chaos:.2e}, "
            f"{elapsed:.1f}s")


def test_criterion_03_frobenius_identity():
    worst = 0.0
    for i in range(20):
        rng = derive_rng(1003, "acc-frob", i)
        inst = _desk_instance(rng, max_L=24)
        h0, x0 = _crandn(rng, inst.M), _crandn(rng, inst.kn)
        h1, x1 = _crandn(rng, inst.M), _crandn(rng, inst.kn)
        lhs = frobenius_block_distance(inst, h1, x1, h0, x0)
        rhs = np.linalg.norm(lifted_outer(h1, x1) - lifted_outer(h0, x0))
        worst = max(worst, abs(lhs - rhs) / max(rhs, 1e-300))
    _report(3, "frobenius identity", worst <= 1e-10,
            f"worst relative gap {worst:.2e} over 20 instances")


def test_criterion_04_gradient_correctness():
    checked = 0
    worst = 0.0
    i = 0
    while checked < 100 and i < 400:
        rng = derive_rng(1004, "acc-grad", i)
        i += 1
        inst = _desk_instance(rng, max_L=32)
        truth = sample_ground_truth(inst.M, inst.K, inst.N,
                                    seed=int(rng.integers(2**31)))
        meas = synthesize_measurements(inst, truth, sigma=0.1,
                                       seed=int(rng.integers(2**31)))
        prof = coherence_profile(inst, truth.h0, truth.x0)
        params = RegularizerParams(rho=1.1, d=0.45, mu2=prof.mu2 / 2,
                                   nu2=prof.nu2 / 2)
        h = 1.4 * _crandn(rng, inst.M)
        x = 1.4 * _crandn(rng, inst.kn)
        if _kink_band(params, inst, h, x):
            continue
        gf = grad_F(inst, meas, h, x)
        gg = grad_G(params, inst, h, x)
        dh, dx = _crandn(rng, inst.M), _crandn(rng, inst.kn)
        eps = 1e-6

        def f_only(a, b):
            return loss_F(inst, meas, a, b)

        def g_only(a, b):
            return regularizer_G(params, inst, a, b)

        for fn, gr in ((f_only, gf), (g_only, gg),
                       (lambda a, b: f_only(a, b) + g_only(a, b),
                        (gf.grad_h + gg.grad_h, gf.grad_x + gg.grad_x))):
            gh, gx = (gr.grad_h, gr.grad_x) if hasattr(gr, "grad_h") else gr
            num = (fn(h + eps * dh, x + eps * dx)
                   - fn(h - eps * dh, x - eps * dx)) / (2 * eps)
            ana = 2 * np.real(np.vdot(dh, gh) + np.vdot(dx, gx))
            ref = max(abs(num), abs(ana))
            if ref > 1e-8:  # zero-gradient branches carry no information
                worst = max(worst, abs(num - ana) / ref)
        checked += 1
    _report(4, "gradient correctness", checked >= 100 and worst <= 1e-6,
            f"worst relative FD gap {worst:.2e} at {checked} points")


def _kink_band(params, inst, h, x, band=0.05):
    ghat = inst.transform.filter_spectrum(h)
    sx = inst.basis.apply(inst.x_blocks(x))
    zs = np.concatenate([
        [np.linalg.norm(h) ** 2 / (2 * params.d),
         np.linalg.norm(x) ** 2 / (2 * params.d)],
        (inst.L * np.abs(ghat) ** 2 / (8 * params.d * params.mu2)).ravel(),
        (inst.Q * inst.N * np.abs(sx) ** 2 / (8 * params.d * params.nu2)).ravel(),
    ])
    return bool(np.any(np.abs(zs - 1.0) < band))


def test_criterion_05_expected_energy_concentration():
    t0 = time.time()
    truth = sample_ground_truth(6, 4, 1, seed=1005)
    total = 0.0
    draws = 10_000
    for k in range(draws):
        inst = make_instance_1d(32, 24, 6, 4, 1, seed=k)
        total += np.linalg.norm(apply_forward_rank1(inst, truth.h0, truth.x0)) ** 2
    mean = total / draws / truth.d0 ** 2
    elapsed = time.time() - t0
    _report(5, "energy concentration", 0.95 <= mean <= 1.05 and elapsed < 60.0,
            f"mean ratio {mean:.4f} over {draws} fresh modulation draws, "
            f"{elapsed:.1f}s")


def test_criterion_06_local_rip():
    inst = make_instance_1d(128, 128, 8, 8, 1, seed=1006)  # QN = 8(K+M)
    truth = sample_ground_truth(8, 8, 1, seed=1006)
    report = empirical_rip_check(inst, truth, samples=1000, base_seed=1006)
    ok = (report.fraction_within_half >= 0.99 and not report.rejection_exhausted)
    _report(6, "empirical local RIP", ok,
            f"{100 * report.fraction_within_half:.1f}% of 1000 ratios in "
            f"[0.5, 1.5]; mean {report.mean_ratio:.3f}")


@pytest.fixture(scope="module")
def desk_recovery_runs():
    """100 seeded end-to-end solves at L = Q = 400, K = M = 30 (criteria 7, 8)."""
    outcomes = []
    chunk = 10
    for lo in range(0, 100, chunk):
        t0 = time.time()
        instances, measurements, inits, truths, targets = [], [], [], [], []
        for t in range(lo, lo + chunk):
            inst = make_instance_1d(400, 400, 30, 30, 1, seed=20_000 + t)
            truth = sample_ground_truth(30, 30, 1, seed=20_000 + t)
            meas = synthesize_measurements(inst, truth, sigma=0.0, seed=20_000 + t)
            prof = coherence_profile(inst, truth.h0, truth.x0)
            init = initialize(inst, meas, mu2=prof.mu2, nu2=prof.nu2)
            instances.append(inst)
            measurements.append(meas)
            inits.append(init)
            truths.append(truth)
            targets.append((prof.mu2, prof.nu2))
        options = SolveOptions(max_iters=2000, error_stop=1e-3)
        results = run_gradient_descent_batch(instances, measurements, inits,
                                             options, truths=truths,
                                             targets=targets)
        per_trial = (time.time() - t0) / chunk
        for res, truth in zip(results, truths):
            err = relative_error(res.u, res.v, truth.h0, truth.x0)
            outcomes.append((err, res.loss_trace, per_trial))
    return outcomes


def test_criterion_07_noiseless_recovery(desk_recovery_runs):
    errs = np.array([o[0] for o in desk_recovery_runs])
    successes = int(np.sum(errs < 1e-2))
    slowest = max(o[2] for o in desk_recovery_runs)
    _report(7, "noiseless recovery", successes >= 95 and slowest < 10.0,
            f"{successes}/100 trials below 1e-2 "
            f"(median error {np.median(errs):.1e}); "
            f"slowest amortized trial {slowest:.2f}s")


def test_criterion_08_monotone_descent(desk_recovery_runs):
    violations = 0
    for _, trace, _ in desk_recovery_runs:
        diffs = np.diff(trace)
        if np.any(diffs > 1e-12 * np.maximum(trace[:-1], 1e-30)):
            violations += 1
    _report(8, "monotone descent", violations == 0,
            f"{violations}/100 trials with any loss increase")


def test_criterion_09_phase_transition_trend():
    t0 = time.time()
    k_vals = list(range(8, 81, 8))
    m_vals = list(range(8, 81, 8))
    workers = default_worker_count()
    regions = {}
    grids = {}
    for q in (80, 160, 240, 320):
        grid = run_phase_transition(
            x_axis=("K", k_vals), y_axis=("M", m_vals),
            fixed={"L": 320, "Q": q, "N": 1}, trials=50, base_seed=1009,
            threshold=1e-2, workers=workers)
        grids[q] = grid
        regions[q] = grid.region_size(0.95)
    elapsed = time.time() - t0
    qs = sorted(regions)
    monotone = all(regions[qs[i]] <= regions[qs[i + 1]] for i in range(len(qs) - 1))
    # at Q = L, every cell with L >= 3(K+M) must succeed in >= 90% of trials
    g = grids[320]
    rule_ok = True
    worst_cell = ""
    for yi, m in enumerate(m_vals):
        for xi, k in enumerate(k_vals):
            if 320 >= 3 * (k + m) and g.valid[yi, xi]:
                rate = g.success_counts[yi, xi] / g.trials
                if rate < 0.9:
                    rule_ok = False
                    worst_cell = f" (cell K={k}, M={m} at {100 * rate:.0f}%)"
    ok = monotone and rule_ok and elapsed < 1800.0
    _report(9, "phase-transition trend", ok,
            f"region sizes {[regions[q] for q in qs]} for Q={qs}; "
            f"Q=L rule {'holds' if rule_ok else 'violated' + worst_cell}; "
            f"{elapsed / 60:.1f} min at 50 trials/cell")


def test_criterion_10_oversampling_knee():
    # K = M = 160: at desk iteration budgets the failure side of the knee
    # only separates cleanly once K + M is in the few-hundreds range
    table = run_oversampling_sweep({"K": 160, "M": 160},
                                   [1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 6.0, 8.0],
                                   trials=20, base_seed=1010)
    errs = table.geometric_mean_error()
    ratios = np.asarray(table.abscissa)
    low_ok = bool(np.all(errs[ratios <= 1.5] > 1e-1))
    high_ok = bool(np.all(errs[ratios >= 3.0] < 1e-2))
    _report(10, "oversampling knee", low_ok and high_ok,
            "mean errors " + ", ".join(f"{r:g}x:{e:.1e}"
                                       for r, e in zip(ratios, errs)))


def test_criterion_11_noise_stability():
    snrs = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0]
    table = run_noise_sweep({"L": 200, "Q": 200, "M": 15, "K": 15, "N": 1},
                            snrs, trials=20, base_seed=1011,
                            options=SolveOptions(max_iters=1500))
    errs = table.geometric_mean_error()
    monotone = bool(np.all(np.diff(errs) < 0))
    # 10 dB steps scale sigma by sqrt(10); error must track within factor 2
    sigma_step = np.sqrt(10.0)
    ratio_ok = all(sigma_step / 2 <= errs[i] / errs[i + 1] <= sigma_step * 2
                   for i in range(len(errs) - 1))
    _report(11, "noise stability", monotone and ratio_ok,
            "errors " + ", ".join(f"{s:.0f}dB:{e:.1e}" for s, e in zip(snrs, errs)))


def test_criterion_12_initialization_quality():
    # Stated regime: 8x oversampling (L = Q = 8(K+M), N = 1), Gaussian truths,
    # d within 10% of d0 and all four 1/sqrt(3)-scaled flags (eps = 1/15) in
    # >= 90/100 trials. The closeness constant is not desk-attainable; the
    # breakdown below isolates which component fails and at what rate.
    K = M = 10
    L = Q = 8 * (K + M)
    scale = 1 / np.sqrt(3)

    def run(trials, flat):
        d_ok = struct_ok = eps_ok = composite = 0
        e0s = []
        for t in range(trials):
            inst = make_instance_1d(L, Q, M, K, 1, seed=30_000 + t)
            if flat:
                h0 = np.zeros(M, complex)
                h0[0] = 1.0
                x0 = np.zeros(K, complex)
                x0[0] = 1.0
                truth = GroundTruth(h0=h0, x0=x0, d0=1.0)
            else:
                truth = sample_ground_truth(M, K, 1, seed=30_000 + t)
            meas = synthesize_measurements(inst, truth, 0.0, seed=30_000 + t)
            prof = coherence_profile(inst, truth.h0, truth.x0)
            init = initialize(inst, meas, mu2=prof.mu2, nu2=prof.nu2)
            fl = neighborhood_flags(inst, init.u0, init.v0, truth,
                                    prof.mu2, prof.nu2, eps=1 / 15, scale=scale)
            d_in = 0.9 * truth.d0 <= init.d <= 1.1 * truth.d0
            struct = fl.in_nd0 and fl.in_nmu and fl.in_nnu
            d_ok += d_in
            struct_ok += struct
            eps_ok += fl.in_neps
            composite += d_in and struct and fl.in_neps
            e0s.append(relative_error(init.u0, init.v0, truth.h0, truth.x0))
        return d_ok, struct_ok, eps_ok, composite, float(np.median(e0s))

    d_ok, struct_ok, eps_ok, composite, med = run(100, flat=False)
    fd, fs, fe, fc, fmed = run(100, flat=True)
    detail = (f"composite {composite}/100 (need >= 90); components: "
              f"d in [0.9,1.1] {d_ok}/100, structural flags {struct_ok}/100, "
              f"closeness at eps=1/15 {eps_ok}/100, median rank-1 error {med:.2f}; "
              f"minimum-coherence truths: d {fd}/100, structural {fs}/100, "
              f"closeness {fe}/100, median error {fmed:.2f}")
    _report(12, "initialization quality", composite >= 90, detail)


def test_criterion_13_deblur_demo():
    t0 = time.time()
    images = synthetic_cell_images(64, 64, 3, seed=1013)
    result = deblur_demo(images, blur_size=5, blur_sigma=1.5,
                         K=int(round(0.15 * 64 * 64)), seed=1013)
    elapsed = time.time() - t0
    ok = result.image_mse < 0.1 and result.kernel_mse < 1e-2
    _report(13, "deblur demo", ok,
            f"image relative MSE {result.image_mse:.3e}, "
            f"kernel relative MSE {result.kernel_mse:.2e}, "
            f"subspace truncation {result.subspace_truncation:.1e}, "
            f"{elapsed:.0f}s")


@pytest.fixture(scope="module", autouse=True)
def _summary():
    yield
    if _RESULTS:
        print("\n" + "=" * 72)
        print("acceptance summary:")
        for line in _RESULTS:
            print("  " + line)
        print("=" * 72)
