"""Built-in numerical self-checks, runnable from the CLI.

Each suite exercises an exact identity of the measurement operator or the
objective on small random instances and reports one pass/fail line; the
command exits nonzero if any suite fails.
"""

from __future__ import annotations

import numpy as np

from .linop import (
    apply_adjoint,
    apply_forward_general,
    apply_forward_rank1,
    chaos_oracle,
    dense_measurement_oracle,
    frobenius_block_distance,
    lifted_outer,
)
from .objective import RegularizerParams, grad_F, grad_G, loss_F, regularizer_G
from .seeding import derive_rng
from .signal_model import (
    coherence_profile,
    make_instance_1d,
    sample_ground_truth,
    synthesize_measurements,
)

__all__ = ["run_selftest"]


def _random_sizes(rng):
    K = int(rng.integers(2, 5))
    M = int(rng.integers(2, 6))
    Q = int(rng.integers(K, 9))
    L = int(rng.integers(max(Q, M), 14))
    N = int(rng.integers(1, 3))
    return L, Q, M, K, N


def _crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _suite_adjoint(seed, rounds=20):
    worst = 0.0
    for i in range(rounds):
        rng = derive_rng(seed, "selftest-adjoint", i)
        L, Q, M, K, N = _random_sizes(rng)
        inst = make_instance_1d(L, Q, M, K, N, seed=int(rng.integers(2**31)))
        X = _crandn(rng, M, K * N)
        y = _crandn(rng, L * N)
        lhs = np.vdot(y, apply_forward_general(inst, X))
        rhs = np.vdot(apply_adjoint(inst, y), X)
        worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(X) * np.linalg.norm(y)))
    return worst, 1e-10


def _suite_oracle(seed, rounds=20):
    worst = 0.0
    for i in range(rounds):
        rng = derive_rng(seed, "selftest-oracle", i)
        L, Q, M, K, N = _random_sizes(rng)
        inst = make_instance_1d(L, Q, M, K, N, seed=int(rng.integers(2**31)))
        X = _crandn(rng, M, K * N)
        a = apply_forward_general(inst, X)
        b = dense_measurement_oracle(inst, X)
        worst = max(worst, float(np.max(np.abs(a - b))) / max(np.linalg.norm(X), 1e-300))
    return worst, 1e-10


def _suite_chaos(seed, rounds=10):
    worst = 0.0
    for i in range(rounds):
        rng = derive_rng(seed, "selftest-chaos", i)
        L, Q, M, K, N = _random_sizes(rng)
        inst = make_instance_1d(L, Q, M, K, N, seed=int(rng.integers(2**31)))
        h0, x0 = _crandn(rng, M), _crandn(rng, K * N)
        h1, x1 = _crandn(rng, M), _crandn(rng, K * N)
        c = chaos_oracle(inst, h1, x1, h0, x0)
        f = np.linalg.norm(apply_forward_rank1(inst, h1, x1)
                           - apply_forward_rank1(inst, h0, x0)) ** 2
        worst = max(worst, abs(c - f) / max(abs(f), 1e-300))
    return worst, 1e-8


def _suite_frobenius(seed, rounds=10):
    worst = 0.0
    for i in range(rounds):
        rng = derive_rng(seed, "selftest-frobenius", i)
        L, Q, M, K, N = _random_sizes(rng)
        inst = make_instance_1d(L, Q, M, K, N, seed=int(rng.integers(2**31)))
        h0, x0 = _crandn(rng, M), _crandn(rng, K * N)
        h1, x1 = _crandn(rng, M), _crandn(rng, K * N)
        lhs = frobenius_block_distance(inst, h1, x1, h0, x0)
        rhs = np.linalg.norm(lifted_outer(h1, x1) - lifted_outer(h0, x0), "fro")
        worst = max(worst, abs(lhs - rhs) / max(rhs, 1e-300))
    return worst, 1e-10


def _suite_gradients(seed, rounds=20):
    worst = 0.0
    for i in range(rounds):
        rng = derive_rng(seed, "selftest-gradients", i)
        L, Q, M, K, N = _random_sizes(rng)
        inst = make_instance_1d(L, Q, M, K, N, seed=int(rng.integers(2**31)))
        truth = sample_ground_truth(M, K, N, seed=int(rng.integers(2**31)))
        meas = synthesize_measurements(inst, truth, sigma=0.1,
                                       seed=int(rng.integers(2**31)))
        prof = coherence_profile(inst, truth.h0, truth.x0)
        params = RegularizerParams(rho=1.0, d=0.5, mu2=prof.mu2, nu2=prof.nu2)
        h = _crandn(rng, M)
        x = _crandn(rng, K * N)
        gf = grad_F(inst, meas, h, x)
        gg = grad_G(params, inst, h, x)
        dh, dx = _crandn(rng, M), _crandn(rng, K * N)
        eps = 1e-6

        def total(h_, x_):
            return loss_F(inst, meas, h_, x_) + regularizer_G(params, inst, h_, x_)

        num = (total(h + eps * dh, x + eps * dx)
               - total(h - eps * dh, x - eps * dx)) / (2 * eps)
        ana = 2 * np.real(np.vdot(dh, gf.grad_h + gg.grad_h)
                          + np.vdot(dx, gf.grad_x + gg.grad_x))
        worst = max(worst, abs(num - ana) / max(abs(num), 1e-300))
    return worst, 1e-6


_SUITES = [
    ("adjoint identity", _suite_adjoint),
    ("dense oracle equivalence", _suite_oracle),
    ("chaos identity", _suite_chaos),
    ("frobenius identity", _suite_frobenius),
    ("gradient finite differences", _suite_gradients),
]


def run_selftest(seed: int = 0, verbose: bool = True) -> bool:
    """Run all suites; returns True when every one passes its tolerance."""
    all_ok = True
    for name, fn in _SUITES:
        worst, tol = fn(seed)
        ok = worst <= tol
        all_ok &= ok
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: "
                  f"worst deviation {worst:.3e} (tolerance {tol:.0e})")
    return all_ok
