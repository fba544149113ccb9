"""Spectral initialization and regularized Wirtinger gradient descent.

Initialization takes the leading singular triple of A*(yhat) and projects
the scaled singular vectors onto coherence balls (an infinity-norm cap in
the transform domain) by Dykstra's alternating projections. Descent then
takes simultaneous fixed-step Wirtinger steps in (u, v), with optional
halving backtracking that keeps the loss trace non-increasing.

The descent core is written over a leading trial axis: a single solve is a
batch of one, and Monte-Carlo harnesses batch all trials of a cell into one
vectorized run. Trials in a batch share dimensions and basis but have their
own modulations, measurements, step sizes, and stopping state.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .objective import g0_penalty
from .signal_model import (
    DimensionError,
    DomainError,
    GroundTruth,
    MeasurementSet,
    ProblemInstance,
)

__all__ = [
    "Initialization",
    "SolveOptions",
    "SolveResult",
    "NeighborhoodFlags",
    "coherence_projection",
    "initialize",
    "run_gradient_descent",
    "run_gradient_descent_batch",
    "solve_blind",
    "relative_error",
    "neighborhood_flags",
]


@dataclass(frozen=True)
class Initialization:
    """Scale estimate d and projected spectral initializers."""

    d: float
    u0: np.ndarray
    v0: np.ndarray


@dataclass(frozen=True)
class SolveOptions:
    """Gradient-descent hyperparameters.

    eta: "auto" uses 1 / (eta_scale * d * ||A||^2) with halving backtracking
    on any increase of the loss; a float fixes the step directly.
    rho: "auto" uses d^2 * (1 + sigma^2); a float fixes it; ignored when
    use_regularizer is False. mu2/nu2 default to the coherence targets
    supplied at initialization time.
    """

    eta: object = "auto"
    eta_scale: float = 1.0
    rho: object = "auto"
    max_iters: int = 5000
    grad_tol: float = 1e-7
    use_regularizer: bool = True
    mu2: float | None = None
    nu2: float | None = None
    seed: int = 0
    error_stop: float | None = None
    opnorm_iters: int = 30
    opnorm_tol: float = 1e-2

    def __post_init__(self):
        if self.max_iters < 1:
            raise DomainError("max_iters must be >= 1")
        if self.eta != "auto" and not float(self.eta) > 0:
            raise DomainError("fixed eta must be positive")


@dataclass
class SolveResult:
    """Final iterates, traces, and termination status of one solve."""

    u: np.ndarray
    v: np.ndarray
    iterations: int
    loss_trace: np.ndarray
    error_trace: np.ndarray | None
    status: str  # "converged" | "max-iters" | "diverged"
    d: float
    eta_final: float


@dataclass(frozen=True)
class NeighborhoodFlags:
    """Membership in the norm / coherence / closeness neighborhoods."""

    in_nd0: bool
    in_nmu: bool
    in_nnu: bool
    in_neps: bool
    eps: float


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------

def coherence_projection(target, apply_t, adjoint_t, col_norm_sq, bound,
                         tol: float = 1e-9, max_iters: int = 200):
    """Euclidean projection of `target` onto {z : ||T z||_inf <= bound}.

    T must have orthogonal columns with squared norm col_norm_sq, so that
    range-space projection is T T^H / col_norm_sq. Dykstra's scheme
    alternates between the range of T and the infinity-norm ball in the
    transform domain; on exit the iterate is rescaled if needed so the
    constraint holds exactly.
    """
    if bound <= 0:
        raise DomainError("bound must be positive")
    w = apply_t(target)
    if np.max(np.abs(w)) <= bound:
        return np.asarray(target, dtype=complex).copy()
    x = w.copy()
    p = np.zeros_like(w)
    q = np.zeros_like(w)
    converged = False
    for _ in range(max_iters):
        y = apply_t(adjoint_t(x + p) / col_norm_sq)
        p = x + p - y
        s = y + q
        mag = np.abs(s)
        xn = np.where(mag > bound, s * (bound / np.maximum(mag, 1e-300)), s)
        q = s - xn
        delta = np.linalg.norm(xn - x)
        x = xn
        if delta <= tol * max(1.0, np.linalg.norm(x)):
            converged = True
            break
    if not converged:
        warnings.warn("coherence projection did not converge; clipping to feasibility")
    z = adjoint_t(x) / col_norm_sq
    peak = float(np.max(np.abs(apply_t(z))))
    if peak > bound:
        z = z * (bound / peak)
    return z


def _filter_ops(instance):
    root = np.sqrt(instance.L)
    return (lambda h: root * instance.transform.filter_spectrum(h),
            lambda w: root * instance.transform.filter_spectrum_adjoint(w),
            float(instance.L))


def _coeff_ops(instance):
    root = np.sqrt(instance.Q * instance.N)

    def fwd(x):
        return (root * instance.basis.apply(instance.x_blocks(x))).ravel()

    def adj(w):
        wb = w.reshape(instance.N, instance.Q)
        return (root * instance.basis.adjoint(wb)).ravel()

    return fwd, adj, float(instance.Q * instance.N)


# ---------------------------------------------------------------------------
# batched kernels (leading axis = trials)
# ---------------------------------------------------------------------------

class _CellBatch:
    """Shared-structure batch: same (L, Q, M, K, N, basis, transform),
    per-trial modulations / measurements / scales."""

    def __init__(self, instances, measurements):
        first = instances[0]
        for inst in instances[1:]:
            if (inst.L, inst.Q, inst.M, inst.K, inst.N) != (
                    first.L, first.Q, first.M, first.K, first.N):
                raise DimensionError("batched instances must share dimensions")
            if inst.transform != first.transform:
                raise DimensionError("batched instances must share the transform")
            if inst.basis is not first.basis and inst.basis.kind != first.basis.kind:
                raise DimensionError("batched instances must share the basis kind")
        self.proto = first
        self.T = len(instances)
        self.instances = list(instances)
        self.signs = np.stack([inst.modulations.signs for inst in instances])  # (T,N,Q)
        self.yhat = np.stack([m.blocks(first.N) for m in measurements])  # (T,N,L)
        self.sigma = np.array([m.sigma for m in measurements])
        self._bspec = None

    def take(self, idx):
        """Restrict the batch to a subset of trials (in place)."""
        self.T = len(idx)
        self.instances = [self.instances[i] for i in idx]
        self.signs = self.signs[idx]
        self.yhat = self.yhat[idx]
        self.sigma = self.sigma[idx]
        if self._bspec is not None:
            self._bspec = self._bspec[idx]

    def basis_apply(self, x):  # (..., K) -> (..., Q)
        return self.proto.basis.apply(x)

    def basis_adjoint(self, v):
        return self.proto.basis.adjoint(v)

    @property
    def bspec_bytes(self) -> int:
        return 16 * self.T * self.proto.N * self.proto.K * self.proto.L

    @property
    def bspec(self):
        """(T, N, K, L): per-trial spectra of the modulated basis columns."""
        if self._bspec is None:
            cols = self.basis_apply(np.eye(self.proto.K))  # (K, Q)
            mod = self.signs[:, :, None, :] * cols[None, None, :, :]
            self._bspec = self.proto.transform.input_spectrum_scaled(mod)
        return self._bspec

    def forward_matrix(self, X):
        """A on (T, N, K, M) lifted matrices -> (T, N, L)."""
        fx = self.proto.transform.filter_spectrum(X)  # (T,N,K,L)
        return np.einsum("tnkl,tnkl->tnl", fx, self.bspec)

    def adjoint_matrix(self, y):
        """A* on (T, N, L) -> (T, N, K, M)."""
        w = y[:, :, None, :] * self.bspec.conj()
        return self.proto.transform.filter_spectrum_adjoint(w)

    def opnorm_sq(self, max_iters=60, tol=1e-3, seed=0):
        """Batched power iteration for ||A||^2, one value per trial."""
        from .seeding import derive_rng
        rng = derive_rng(seed, "operator-norm-start")
        shape = (self.T, self.proto.N, self.proto.K, self.proto.M)
        X = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        lam = np.zeros(self.T)
        for _ in range(max_iters):
            Z = self.adjoint_matrix(self.forward_matrix(X))
            zn = np.sqrt(np.sum(np.abs(Z) ** 2, axis=(1, 2, 3)))
            xn = np.sqrt(np.sum(np.abs(X) ** 2, axis=(1, 2, 3)))
            lam_new = zn / np.maximum(xn, 1e-300)
            X = Z / np.maximum(zn, 1e-300)[:, None, None, None]
            if np.all(np.abs(lam_new - lam) <= tol * np.maximum(lam_new, 1e-300)):
                return lam_new
            lam = lam_new
        return lam

    def opnorm_sq_upper_bound(self, chunk: int = 64):
        """Cheap upper bound on ||A||^2: max over rows (l, n) of the squared
        row norm sum_k |B_n[l, k]|^2, streamed in column chunks. Used when
        the spectra cache would not fit in memory; overestimating ||A||^2
        only shrinks the auto step, which backtracking tolerates."""
        K = self.proto.K
        best = np.zeros((self.T, self.proto.N, self.proto.L))
        for lo in range(0, K, chunk):
            cols = self.basis_apply(np.eye(K)[lo:lo + chunk])  # (c, Q)
            mod = self.signs[:, :, None, :] * cols[None, None, :, :]
            spec = self.proto.transform.input_spectrum_scaled(mod)
            best += np.sum(np.abs(spec) ** 2, axis=2)
        return best.max(axis=(1, 2))

    def loss_grad(self, u, v, reg):
        """F~ and Wirtinger gradients for iterates u (T,M), v (T,N,K).

        reg is None or a dict with per-trial arrays rho, d, mu2, nu2.
        """
        tf = self.proto.transform
        ghat = tf.filter_spectrum(u)  # (T,L)
        sx = self.basis_apply(v)  # (T,N,Q)
        b = tf.input_spectrum_scaled(self.signs * sx)  # (T,N,L)
        res = ghat[:, None, :] * b - self.yhat
        total = np.sum(np.abs(res) ** 2, axis=(1, 2))
        # arguments of the two adjoint transforms; regularizer terms are
        # folded in before transforming (both maps are linear)
        gh_arg = (b.conj() * res).sum(axis=1)  # (T,L)
        gx_arg = self.signs * tf.input_spectrum_scaled_adjoint(
            ghat.conj()[:, None, :] * res)  # (T,N,Q)
        gh_extra = gx_extra = None
        if reg is not None:
            L, Q, N = self.proto.L, self.proto.Q, self.proto.N
            d = reg["d"]
            rho = reg["rho"]
            mu2 = reg["mu2"]
            nu2 = reg["nu2"]
            zn_h = np.sum(np.abs(u) ** 2, axis=1) / (2 * d)
            zn_x = np.sum(np.abs(v) ** 2, axis=(1, 2)) / (2 * d)
            zh = L * np.abs(ghat) ** 2 / (8 * d * mu2)[:, None]
            zx = Q * N * np.abs(sx) ** 2 / (8 * d * nu2)[:, None, None]
            vh, dh = g0_penalty(zn_h)
            vx, dx = g0_penalty(zn_x)
            vzh, dzh = g0_penalty(zh)
            vzx, dzx = g0_penalty(zx)
            total = total + rho * (vh + vx + vzh.sum(axis=1) + vzx.sum(axis=(1, 2)))
            scale = rho / (2 * d)
            gh_arg = gh_arg + (scale * L / (4 * mu2))[:, None] * (dzh * ghat)
            gx_arg = gx_arg + (scale * Q * N / (4 * nu2))[:, None, None] * (dzx * sx)
            gh_extra = (scale * dh)[:, None] * u
            gx_extra = (scale * dx)[:, None, None] * v
        gh = tf.filter_spectrum_adjoint(gh_arg)
        gx = self.basis_adjoint(gx_arg)
        if gh_extra is not None:
            gh = gh + gh_extra
            gx = gx + gx_extra
        return total, gh, gx


def _batch_relative_error(u, v, h0, x0):
    """(T,) relative rank-1 errors; v and x0 are (T, N, K)."""
    t = u.shape[0]
    uv = np.sqrt(np.sum(np.abs(u) ** 2, axis=1) * np.sum(np.abs(v) ** 2, axis=(1, 2)))
    d0 = np.sqrt(np.sum(np.abs(h0) ** 2, axis=1) * np.sum(np.abs(x0) ** 2, axis=(1, 2)))
    cross = (np.einsum("tm,tm->t", u, h0.conj())
             * np.einsum("tnk,tnk->t", v, x0.conj()))
    n2 = uv ** 2 + d0 ** 2 - 2 * np.real(cross)
    return np.sqrt(np.maximum(n2, 0.0)) / np.maximum(d0, 1e-300)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def relative_error(u, v, h0, x0) -> float:
    """|| u v^T - h0 x0^T ||_F / ||h0 x0^T||_F (scale ambiguity quotiented)."""
    from .linop import lifted_distance

    denom = np.linalg.norm(h0) * np.linalg.norm(x0)
    if denom == 0:
        raise DomainError("relative error undefined for zero ground truth")
    return lifted_distance(u, v, h0, x0) / denom


def neighborhood_flags(instance: ProblemInstance, h, x, truth: GroundTruth,
                       mu2: float, nu2: float, eps: float,
                       scale: float = 1.0) -> NeighborhoodFlags:
    """Membership predicates of the norm/coherence/closeness neighborhoods.

    scale multiplies the norm and coherence caps (scale = 1/sqrt(3) gives
    the shrunken sets used to qualify initializers); eps is the relative
    closeness radius of the fourth set.
    """
    h = np.asarray(h, dtype=complex)
    x = np.asarray(x, dtype=complex)
    root_d0 = np.sqrt(truth.d0)
    in_nd0 = (np.linalg.norm(h) <= 2 * root_d0 * scale
              and np.linalg.norm(x) <= 2 * root_d0 * scale)
    peak_h = np.sqrt(instance.L) * np.max(np.abs(instance.transform.filter_spectrum(h)))
    in_nmu = bool(peak_h <= 4 * np.sqrt(mu2) * root_d0 * scale)
    peak_x = np.sqrt(instance.Q * instance.N) * np.max(
        np.abs(instance.basis.apply(instance.x_blocks(x))))
    in_nnu = bool(peak_x <= 4 * np.sqrt(nu2) * root_d0 * scale)
    from .linop import lifted_distance

    in_neps = bool(lifted_distance(h, x, truth.h0, truth.x0) <= eps * truth.d0)
    return NeighborhoodFlags(in_nd0=bool(in_nd0), in_nmu=in_nmu, in_nnu=in_nnu,
                             in_neps=in_neps, eps=float(eps))


def initialize(instance: ProblemInstance, measurements: MeasurementSet,
               mu2: float | None = None, nu2: float | None = None,
               projection_tol: float = 1e-9,
               projection_iters: int = 200) -> Initialization:
    """Spectral initialization with coherence projections.

    d, h_hat, x_hat are the leading singular triple of A*(yhat); u0 and v0
    are the Euclidean projections of sqrt(d) h_hat and sqrt(d) x_hat onto
    the coherence balls with caps 2 sqrt(d) mu and 2 sqrt(d) nu. When mu2
    or nu2 is omitted it is estimated from the raw singular vectors (blind
    mode).
    """
    from .linop import apply_adjoint

    if not np.any(measurements.yhat):
        raise DomainError("cannot initialize from all-zero measurements")
    ay = apply_adjoint(instance, measurements.yhat)
    if ay.size > 2 * 10**6:  # large K*N: top triple by power iteration
        un, sv, vh = _power_svd(ay)
    else:
        try:
            un, sv, vh = np.linalg.svd(ay, full_matrices=False)
        except np.linalg.LinAlgError:  # pragma: no cover - extremely rare
            warnings.warn("dense SVD failed; falling back to power iteration")
            un, sv, vh = _power_svd(ay)
    d = float(sv[0])
    h_hat = un[:, 0]
    x_hat = vh[0]  # pairs with h_hat so that d * (h_hat x_hat^T) ~ A*(yhat)
    if mu2 is None:
        peak = np.max(np.abs(instance.transform.filter_spectrum(h_hat)))
        mu2 = float(instance.L * peak ** 2)
    if nu2 is None:
        peak = np.max(np.abs(instance.basis.apply(instance.x_blocks(x_hat))))
        nu2 = float(instance.Q * instance.N * peak ** 2)
    fwd_h, adj_h, cn_h = _filter_ops(instance)
    u0 = coherence_projection(np.sqrt(d) * h_hat, fwd_h, adj_h, cn_h,
                              2 * np.sqrt(d * mu2),
                              tol=projection_tol, max_iters=projection_iters)
    fwd_x, adj_x, cn_x = _coeff_ops(instance)
    v0 = coherence_projection(np.sqrt(d) * x_hat, fwd_x, adj_x, cn_x,
                              2 * np.sqrt(d * nu2),
                              tol=projection_tol, max_iters=projection_iters)
    return Initialization(d=d, u0=u0, v0=v0)


def _dykstra_batch(targets, apply_t, adjoint_t, col_norm_sq, bounds,
                   tol=1e-9, max_iters=200):
    """Lockstep Dykstra projections for a stack of targets with per-item
    bounds; already-feasible targets pass through untouched."""
    targets = np.asarray(targets, dtype=complex)
    w = apply_t(targets)
    bcol = np.asarray(bounds, dtype=float)[:, None]
    skip = np.max(np.abs(w), axis=-1) <= bounds
    x = w.copy()
    p = np.zeros_like(w)
    q = np.zeros_like(w)
    for _ in range(max_iters):
        y = apply_t(adjoint_t(x + p) / col_norm_sq)
        p = x + p - y
        s = y + q
        mag = np.abs(s)
        xn = np.where(mag > bcol, s * (bcol / np.maximum(mag, 1e-300)), s)
        q = s - xn
        delta = np.linalg.norm(xn - x, axis=-1)
        x = xn
        if np.all(delta <= tol * np.maximum(1.0, np.linalg.norm(x, axis=-1))):
            break
    z = adjoint_t(x) / col_norm_sq
    peak = np.max(np.abs(apply_t(z)), axis=-1)
    over = peak > bounds
    if np.any(over):
        z[over] *= (bounds[over] / peak[over])[:, None]
    z[skip] = targets[skip]
    return z


def initialize_batch(instances, measurements, targets=None,
                     projection_tol: float = 1e-9,
                     projection_iters: int = 200) -> list:
    """Spectral initialization for a cell batch (shared structure).

    targets optionally gives per-trial (mu2, nu2); omitted entries fall back
    to blind estimates from the raw singular vectors. Matches initialize()
    trial by trial up to floating-point batching differences.
    """
    batch = _CellBatch(instances, measurements)
    proto = batch.proto
    T, N, K, M = batch.T, proto.N, proto.K, proto.M
    if not np.all(np.any(batch.yhat.reshape(T, -1), axis=1)):
        raise DomainError("cannot initialize from all-zero measurements")
    ay = batch.adjoint_matrix(batch.yhat)  # (T,N,K,M)
    d = np.empty(T)
    hhat = np.empty((T, M), dtype=complex)
    xhat = np.empty((T, N * K), dtype=complex)
    for t in range(T):
        mat = np.ascontiguousarray(np.moveaxis(ay[t], -1, 0)).reshape(M, N * K)
        un, sv, vh = np.linalg.svd(mat, full_matrices=False)
        d[t] = sv[0]
        hhat[t] = un[:, 0]
        xhat[t] = vh[0]
    mu2 = np.empty(T)
    nu2 = np.empty(T)
    for t in range(T):
        if targets is not None and targets[t] is not None:
            mu2[t], nu2[t] = targets[t]
        else:
            peak_h = np.max(np.abs(proto.transform.filter_spectrum(hhat[t])))
            mu2[t] = proto.L * peak_h ** 2
            peak_x = np.max(np.abs(batch.basis_apply(xhat[t].reshape(N, K))))
            nu2[t] = proto.Q * N * peak_x ** 2
    root = np.sqrt(proto.L)

    def fwd_h(hs):
        return root * proto.transform.filter_spectrum(hs)

    def adj_h(ws):
        return root * proto.transform.filter_spectrum_adjoint(ws)

    rootx = np.sqrt(proto.Q * N)

    def fwd_x(xs):
        return (rootx * batch.basis_apply(xs.reshape(-1, N, K))).reshape(len(xs), N * proto.Q)

    def adj_x(ws):
        return (rootx * batch.basis_adjoint(ws.reshape(-1, N, proto.Q))).reshape(len(ws), N * K)

    u0 = _dykstra_batch(np.sqrt(d)[:, None] * hhat, fwd_h, adj_h, float(proto.L),
                        2 * np.sqrt(d * mu2), tol=projection_tol,
                        max_iters=projection_iters)
    v0 = _dykstra_batch(np.sqrt(d)[:, None] * xhat, fwd_x, adj_x,
                        float(proto.Q * N), 2 * np.sqrt(d * nu2),
                        tol=projection_tol, max_iters=projection_iters)
    return [Initialization(d=float(d[t]), u0=u0[t], v0=v0[t]) for t in range(T)]


def _power_svd(ay, iters=200, tol=1e-10):
    rng = np.random.default_rng(12345)
    v = rng.standard_normal(ay.shape[1]) + 1j * rng.standard_normal(ay.shape[1])
    v /= np.linalg.norm(v)
    s = 0.0
    for _ in range(iters):
        u = ay @ v
        s_new = np.linalg.norm(u)
        u /= max(s_new, 1e-300)
        v = ay.conj().T @ u
        v /= max(np.linalg.norm(v), 1e-300)
        if abs(s_new - s) <= tol * s_new:
            break
        s = s_new
    return u[:, None], np.array([s_new]), v.conj()[None, :]


def run_gradient_descent(instance: ProblemInstance, measurements: MeasurementSet,
                         init: Initialization, options: SolveOptions,
                         truth: GroundTruth | None = None) -> SolveResult:
    """Simultaneous Wirtinger gradient descent from an initialization."""
    return run_gradient_descent_batch([instance], [measurements], [init], options,
                                      None if truth is None else [truth])[0]


def run_gradient_descent_batch(instances, measurements, inits, options: SolveOptions,
                               truths=None, targets=None) -> list[SolveResult]:
    """Vectorized descent over a batch of trials sharing one cell structure.

    targets optionally supplies per-trial (mu2, nu2) regularizer goals,
    overriding the scalar options.mu2/options.nu2.
    """
    batch = _CellBatch(instances, measurements)
    T = batch.T
    proto = batch.proto
    N, K, M = proto.N, proto.K, proto.M

    u = np.stack([np.asarray(i.u0, dtype=complex) for i in inits])  # (T,M)
    v = np.stack([np.asarray(i.v0, dtype=complex).reshape(N, K) for i in inits])
    d = np.array([float(i.d) for i in inits])
    if np.any(d <= 0):
        raise DomainError("initialization scale d must be positive")

    reg = None
    if options.use_regularizer:
        if targets is not None:
            mu2s = np.array([t[0] for t in targets], dtype=float)
            nu2s = np.array([t[1] for t in targets], dtype=float)
        elif options.mu2 is not None and options.nu2 is not None:
            mu2s = np.full(T, float(options.mu2))
            nu2s = np.full(T, float(options.nu2))
        else:
            raise DomainError("regularized solves need mu2 and nu2 targets")
        rho = (d ** 2 * (1.0 + batch.sigma ** 2) if options.rho == "auto"
               else np.full(T, float(options.rho)))
        reg = {"rho": rho, "d": d, "mu2": mu2s, "nu2": nu2s}

    if options.eta == "auto":
        if batch.bspec_bytes > 512 * 2**20:  # spectra cache would not fit
            op2 = batch.opnorm_sq_upper_bound()
        else:
            op2 = batch.opnorm_sq(max_iters=options.opnorm_iters,
                                  tol=options.opnorm_tol, seed=options.seed)
        eta = 1.0 / (options.eta_scale * d * np.maximum(op2, 1e-300))
    else:
        eta = np.full(T, float(options.eta))

    h0 = x0 = None
    if truths is not None:
        h0 = np.stack([t.h0 for t in truths])
        x0 = np.stack([t.x0.reshape(N, K) for t in truths])

    loss, gh, gx = batch.loss_grad(u, v, reg)
    loss_traces = [[float(f)] for f in loss]
    err_traces = None
    if truths is not None:
        e = _batch_relative_error(u, v, h0, x0)
        err_traces = [[float(x)] for x in e]

    # full-size bookkeeping indexed by original trial; working arrays may be
    # compacted to the live subset as trials finish
    status = np.array(["max-iters"] * T, dtype=object)
    iterations = np.zeros(T, dtype=int)
    final_u = [None] * T
    final_v = [None] * T
    final_eta = np.array(eta, dtype=float)
    final_d = np.array(d, dtype=float)
    orig = np.arange(T)
    live = np.ones(T, dtype=bool)

    def retire(mask, verdict):
        nonlocal live
        idx = np.flatnonzero(mask)
        for i in idx:
            t = orig[i]
            status[t] = verdict
            final_u[t] = u[i].copy()
            final_v[t] = v[i].copy()
            final_eta[t] = eta[i]
        live[idx] = False

    for it in range(options.max_iters):
        if not np.any(live):
            break
        un = u - eta[:, None] * gh
        vn = v - eta[:, None, None] * gx
        loss_new, gh_new, gx_new = batch.loss_grad(un, vn, reg)
        finite = np.isfinite(loss_new)
        accept = live & finite & (loss_new <= loss)
        reject = live & ~accept
        u[accept] = un[accept]
        v[accept] = vn[accept]
        loss[accept] = loss_new[accept]
        gh[accept] = gh_new[accept]
        gx[accept] = gx_new[accept]
        eta[reject] *= 0.5
        stalled = reject & (eta < 1e-18)
        retire(stalled & ~finite, "diverged")
        retire(stalled & finite, "converged")
        iterations[orig[live]] = it + 1
        for i in np.flatnonzero(live):
            loss_traces[orig[i]].append(float(loss[i]))
        gnorm = np.sqrt(np.sum(np.abs(gh) ** 2, axis=1)
                        + np.sum(np.abs(gx) ** 2, axis=(1, 2)))
        done = live & (gnorm <= options.grad_tol * d)
        if truths is not None:
            e = _batch_relative_error(u, v, h0, x0)
            for i in np.flatnonzero(live):
                err_traces[orig[i]].append(float(e[i]))
            if options.error_stop is not None:
                done |= live & (e < options.error_stop)
        retire(done, "converged")

        n_live = int(np.sum(live))
        if n_live and n_live <= len(orig) // 2 and it % 32 == 31:
            sel = np.flatnonzero(live)
            batch.take(sel)
            u, v, loss, gh, gx, eta, d = (
                u[sel], v[sel], loss[sel], gh[sel], gx[sel], eta[sel], d[sel])
            if reg is not None:
                reg = {k: val[sel] for k, val in reg.items()}
            if truths is not None:
                h0, x0 = h0[sel], x0[sel]
            orig = orig[sel]
            live = np.ones(len(sel), dtype=bool)

    for i in np.flatnonzero(live):  # still running at the iteration cap
        t = orig[i]
        final_u[t] = u[i].copy()
        final_v[t] = v[i].copy()
        final_eta[t] = eta[i]

    results = []
    for t in range(T):
        results.append(SolveResult(
            u=final_u[t],
            v=final_v[t].reshape(-1),
            iterations=int(iterations[t]),
            loss_trace=np.asarray(loss_traces[t]),
            error_trace=None if err_traces is None else np.asarray(err_traces[t]),
            status=str(status[t]),
            d=float(final_d[t]),
            eta_final=float(final_eta[t]),
        ))
    return results


def solve_blind(instance: ProblemInstance, measurements: MeasurementSet,
                options: SolveOptions, truth: GroundTruth | None = None) -> SolveResult:
    """Initialization followed by gradient descent (Algorithm 2 then 1)."""
    init = initialize(instance, measurements, mu2=options.mu2, nu2=options.nu2)
    opts = options
    if options.use_regularizer and (options.mu2 is None or options.nu2 is None):
        # blind mode: adopt the initializer's coherences as targets
        from dataclasses import replace

        mu2 = options.mu2
        nu2 = options.nu2
        if mu2 is None:
            peak = np.max(np.abs(instance.transform.filter_spectrum(init.u0)))
            mu2 = float(instance.L * peak ** 2 / max(np.linalg.norm(init.u0) ** 2, 1e-300))
        if nu2 is None:
            cx = instance.basis.apply(instance.x_blocks(init.v0))
            nu2 = float(instance.Q * instance.N * np.max(np.abs(cx)) ** 2
                        / max(np.linalg.norm(init.v0) ** 2, 1e-300))
        opts = replace(options, mu2=mu2, nu2=nu2)
    return run_gradient_descent(instance, measurements, init, opts, truth=truth)
