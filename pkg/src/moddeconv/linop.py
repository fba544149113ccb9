"""The measurement map A, its adjoint, and dense brute-force oracles.

A sends an M x KN matrix X to LN Fourier-domain samples; on the rank-1
pairing of a filter h and coefficients x it reduces to the fast path

    block_n( A(h, x) ) = (F_M h) o (sqrt(L) F_Q R_n C x_n),

computed with FFTs. The lifted pairing used throughout is the plain outer
product h x^T (no conjugation on x): measurements are linear in exactly
that matrix, and the adjoint, error metrics, and oracles below all share
the convention. Dense oracles materialize the defining row vectors
explicitly (no FFT) and are guarded to small sizes.
"""

from __future__ import annotations

import warnings

import numpy as np

from .signal_model import DimensionError, DomainError, ProblemInstance
from .seeding import derive_rng

__all__ = [
    "DENSE_GUARD",
    "lifted_outer",
    "lifted_distance",
    "apply_forward_rank1",
    "apply_forward_general",
    "apply_adjoint",
    "operator_norm_estimate",
    "dense_measurement_oracle",
    "dense_operator_matrix",
    "chaos_oracle",
    "frobenius_block_distance",
]

# dense oracles refuse problems with L*N*M*K*N beyond this
DENSE_GUARD = 10**7


def lifted_outer(h: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Rank-1 lifted matrix h x^T (the pairing A is linear in)."""
    return np.outer(h, x)


def lifted_distance(u, v, h, x) -> float:
    """|| u v^T - h x^T ||_F without materializing the matrices."""
    cross = np.vdot(h, u) * np.vdot(x, v)
    n2 = (np.linalg.norm(u) ** 2 * np.linalg.norm(v) ** 2
          + np.linalg.norm(h) ** 2 * np.linalg.norm(x) ** 2
          - 2.0 * np.real(cross))
    return float(np.sqrt(max(n2, 0.0)))


def _check_vec(instance, h, x):
    h = np.asarray(h, dtype=complex)
    x = np.asarray(x, dtype=complex)
    if h.shape != (instance.M,):
        raise DimensionError(f"filter shape {h.shape} != ({instance.M},)")
    if x.shape != (instance.kn,):
        raise DimensionError(f"coefficient shape {x.shape} != ({instance.kn},)")
    return h, x


def apply_forward_rank1(instance: ProblemInstance, h: np.ndarray, x: np.ndarray) -> np.ndarray:
    """A on the rank-1 pair (h, x); returns the stacked LN-vector."""
    h, x = _check_vec(instance, h, x)
    ghat = instance.transform.filter_spectrum(h)
    mod = instance.modulated_input(x)  # (N, Q)
    b = instance.transform.input_spectrum_scaled(mod)  # (N, L)
    return (ghat[None, :] * b).ravel()


def _modulated_basis_spectra(instance, n: int) -> np.ndarray:
    """(K, L) array with row k = sqrt(L) F_Q (r_n o C e_k)."""
    cols = instance.basis.apply(np.eye(instance.K))  # (K, Q) rows = columns of C
    mod = instance.modulations.signs[n][None, :] * cols
    return instance.transform.input_spectrum_scaled(mod)


def apply_forward_general(instance: ProblemInstance, X: np.ndarray) -> np.ndarray:
    """A on a general M x KN matrix."""
    X = np.asarray(X, dtype=complex)
    if X.shape != (instance.M, instance.kn):
        raise DimensionError(f"matrix shape {X.shape} != ({instance.M}, {instance.kn})")
    K, L = instance.K, instance.L
    out = np.empty((instance.N, L), dtype=complex)
    for n in range(instance.N):
        Xn = X[:, n * K:(n + 1) * K]
        fx = instance.transform.filter_spectrum(Xn.T)  # (K, L)
        bn = _modulated_basis_spectra(instance, n)  # (K, L)
        out[n] = np.einsum("kl,kl->l", fx, bn)
    return out.ravel()


def apply_adjoint(instance: ProblemInstance, y: np.ndarray) -> np.ndarray:
    """A^*(y) as an M x KN matrix; satisfies <A(X), y> = <X, A*(y)>."""
    y = np.asarray(y, dtype=complex)
    ln = instance.L * instance.N
    if y.shape != (ln,):
        raise DimensionError(f"measurement shape {y.shape} != ({ln},)")
    yb = y.reshape(instance.N, instance.L)
    fcols = instance.transform.filter_spectrum(np.eye(instance.M))  # (M, L)
    out = np.empty((instance.M, instance.kn), dtype=complex)
    K = instance.K
    for n in range(instance.N):
        w = yb[n][None, :] * fcols.conj()  # (M, L)
        v = instance.transform.input_spectrum_scaled_adjoint(w)  # (M, Q)
        rows = instance.basis.adjoint(instance.modulations.signs[n][None, :] * v)
        out[:, n * K:(n + 1) * K] = rows
    return out


def operator_norm_estimate(instance: ProblemInstance, max_iters: int = 500,
                           tol: float = 1e-8, seed: int = 0) -> float:
    """||A||_{2->2} by power iteration on A^* A over M x KN matrices.

    Starts from a fixed-seed Gaussian matrix; warns (and returns the best
    estimate) if the relative change has not dropped below tol.
    """
    if max_iters < 1:
        raise DomainError("max_iters must be >= 1")
    rng = derive_rng(seed, "operator-norm-start")
    shape = (instance.M, instance.kn)
    X = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    X /= np.linalg.norm(X)
    lam = 0.0
    for _ in range(max_iters):
        Z = apply_adjoint(instance, apply_forward_general(instance, X))
        zn = np.linalg.norm(Z)
        if zn == 0.0:
            return 0.0
        lam_new = zn  # Rayleigh-style estimate of lambda_max(A*A), ||X|| = 1
        X = Z / zn
        if abs(lam_new - lam) <= tol * lam_new:
            return float(np.sqrt(lam_new))
        lam = lam_new
    warnings.warn("operator norm power iteration did not converge; returning best estimate")
    return float(np.sqrt(lam))


def _guard_dense(instance):
    cost = instance.L * instance.N * instance.M * instance.kn
    if cost > DENSE_GUARD:
        raise DimensionError(
            f"dense oracle size guard exceeded: L*N*M*K*N = {cost} > {DENSE_GUARD}"
        )


def _dense_factors(instance):
    """Explicit F_M (L x M) and per-channel sqrt(L) F_Q R_n C (L x K), no FFT."""
    W = instance.transform.dense_dft_matrix()
    emb_f = instance.transform.embed_filter(np.eye(instance.M))  # (M, L)
    fsup = np.argmax(np.abs(emb_f), axis=1)
    emb_q = instance.transform.embed_input(np.eye(instance.Q))  # (Q, L)
    qsup = np.argmax(np.abs(emb_q), axis=1)
    FM = W[:, fsup]
    C = instance.basis.entries
    B = []
    for n in range(instance.N):
        RC = instance.modulations.signs[n][:, None] * C
        B.append(np.sqrt(instance.L) * (W[:, qsup] @ RC))
    return FM, B


def dense_measurement_oracle(instance: ProblemInstance, X: np.ndarray) -> np.ndarray:
    """Literal entrywise evaluation of A with materialized row vectors."""
    _guard_dense(instance)
    X = np.asarray(X, dtype=complex)
    if X.shape != (instance.M, instance.kn):
        raise DimensionError(f"matrix shape {X.shape} != ({instance.M}, {instance.kn})")
    FM, B = _dense_factors(instance)
    K = instance.K
    out = np.empty((instance.N, instance.L), dtype=complex)
    for n in range(instance.N):
        Xn = X[:, n * K:(n + 1) * K]
        out[n] = np.einsum("lm,mk,lk->l", FM, Xn, B[n])
    return out.ravel()


def dense_operator_matrix(instance: ProblemInstance) -> np.ndarray:
    """The LN x (M*KN) matrix of A acting on row-major vectorized X."""
    _guard_dense(instance)
    FM, B = _dense_factors(instance)
    L, M, K, N = instance.L, instance.M, instance.K, instance.N
    A = np.zeros((L * N, M * K * N), dtype=complex)
    for n in range(N):
        blk = np.einsum("lm,lk->lmk", FM, B[n])  # (L, M, K)
        cols = (np.arange(M)[:, None] * (K * N) + n * K + np.arange(K)[None, :]).ravel()
        A[n * L:(n + 1) * L][:, cols] = blk.reshape(L, M * K)
    return A


def _circulant_blocks(instance, h):
    """circ(h) as an L x Q matrix on the model grid (dense, no FFT)."""
    emb = instance.transform.embed_filter(np.asarray(h, dtype=complex))
    shape = instance.transform.shape
    grid = emb.reshape(shape)
    emb_q = instance.transform.embed_input(np.eye(instance.Q))  # (Q, L)
    qsup = np.argmax(np.abs(emb_q), axis=1)
    cols = np.empty((instance.L, instance.Q), dtype=complex)
    for j, flat in enumerate(qsup):
        shift = np.unravel_index(flat, shape)
        cols[:, j] = np.roll(grid, shift, axis=tuple(range(len(shape)))).ravel()
    return cols


def chaos_oracle(instance: ProblemInstance, h, x, truth_h, truth_x) -> float:
    """|| (H_h X_x - H_h0 X_x0) r ||_2^2 with explicitly materialized
    circulant and diagonal blocks; equals the squared residual norm of the
    FFT path for the same sign realization.
    """
    _guard_dense(instance)
    h, x = _check_vec(instance, h, x)
    h0, x0 = _check_vec(instance, truth_h, truth_x)
    ch, c0 = _circulant_blocks(instance, h), _circulant_blocks(instance, h0)
    sx = instance.basis.apply(instance.x_blocks(x))  # (N, Q)
    s0 = instance.basis.apply(instance.x_blocks(x0))
    total = 0.0
    for n in range(instance.N):
        Sn = ch * sx[n][None, :] - c0 * s0[n][None, :]
        total += float(np.linalg.norm(Sn @ instance.modulations.signs[n]) ** 2)
    return total


def frobenius_block_distance(instance: ProblemInstance, h, x, truth_h, truth_x) -> float:
    """|| H_h X_x - H_h0 X_x0 ||_F from the materialized blocks."""
    _guard_dense(instance)
    h, x = _check_vec(instance, h, x)
    h0, x0 = _check_vec(instance, truth_h, truth_x)
    ch, c0 = _circulant_blocks(instance, h), _circulant_blocks(instance, h0)
    sx = instance.basis.apply(instance.x_blocks(x))
    s0 = instance.basis.apply(instance.x_blocks(x0))
    total = 0.0
    for n in range(instance.N):
        Sn = ch * sx[n][None, :] - c0 * s0[n][None, :]
        total += float(np.linalg.norm(Sn, "fro") ** 2)
    return float(np.sqrt(total))
