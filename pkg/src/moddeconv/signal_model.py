"""Problem construction: subspace bases, random modulations, ground truths,
and synthetic Fourier-domain measurements.

The measurement model is an L-point circular convolution of an unknown
length-M filter with N modulated inputs. Each input lives in a known
K-dimensional subspace (s_n = C x_n with C a tall orthonormal-column
matrix) and is multiplied pointwise by a +-1 sign sequence before the
convolution. Measurements are taken in the Fourier domain,

    yhat_n = sqrt(L) * (F_M h0) o (F_Q R_n C x0_n) + noise_n,

with F the unitary DFT, R_n = diag(signs_n), and o the Hadamard product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .errors import DimensionError, DomainError
from .seeding import derive_rng
from .transforms import TransformDescriptor, dft_1d

__all__ = [
    "DimensionError",
    "DomainError",
    "SubspaceBasis",
    "ModulationSet",
    "GroundTruth",
    "MeasurementSet",
    "CoherenceProfile",
    "ProblemInstance",
    "build_dct_subspace",
    "build_fourier_subspace",
    "build_dct2_mask_subspace",
    "sample_modulations",
    "sample_ground_truth",
    "synthesize_measurements",
    "coherence_profile",
    "make_instance_1d",
]


def _complex_transform(fn, z, **kw):
    # scipy's DCT routines are real transforms; apply to both parts.
    if np.iscomplexobj(z):
        return fn(z.real, **kw) + 1j * fn(z.imag, **kw)
    return fn(z, **kw)


class SubspaceBasis:
    """Orthonormal-column basis C (Q x K) for the unknown inputs.

    kind is one of "dct-columns", "fourier-columns", "dct2-mask", "custom".
    The dct2-mask kind is applied functionally (separable DCT transforms);
    its entries are materialized only on demand.
    """

    def __init__(self, kind, q, k, entries=None, shape2d=None, mask_indices=None):
        self.kind = kind
        self.q = int(q)
        self.k = int(k)
        self._entries = entries
        self.shape2d = shape2d
        self.mask_indices = None if mask_indices is None else np.asarray(mask_indices)
        self._max_entry_sq = None
        if self.k < 1 or self.q < 1 or self.k > self.q:
            raise DimensionError(f"need 1 <= K <= Q, got K={k}, Q={q}")
        if entries is not None and entries.shape != (self.q, self.k):
            raise DimensionError(f"entries shape {entries.shape} != ({q}, {k})")

    @property
    def entries(self) -> np.ndarray:
        """The Q x K basis matrix (materialized lazily for dct2-mask)."""
        if self._entries is None:
            eye = np.eye(self.k)
            self._entries = self.apply(eye).T.copy()
        return self._entries

    def apply(self, x: np.ndarray) -> np.ndarray:
        """C x for x of shape (..., K); returns (..., Q)."""
        x = np.asarray(x)
        if x.shape[-1] != self.k:
            raise DimensionError(f"coefficient length {x.shape[-1]} != K={self.k}")
        if self.kind == "dct2-mask":
            hgt, wid = self.shape2d
            coeffs = np.zeros(x.shape[:-1] + (self.q,), dtype=np.result_type(x, float))
            coeffs[..., self.mask_indices] = x
            grids = coeffs.reshape(x.shape[:-1] + (hgt, wid))
            out = _complex_transform(sfft.idctn, grids, axes=(-2, -1), norm="ortho")
            return out.reshape(x.shape[:-1] + (self.q,))
        return x @ self._entries.T

    def adjoint(self, v: np.ndarray) -> np.ndarray:
        """C^H v for v of shape (..., Q); returns (..., K)."""
        v = np.asarray(v)
        if v.shape[-1] != self.q:
            raise DimensionError(f"signal length {v.shape[-1]} != Q={self.q}")
        if self.kind == "dct2-mask":
            hgt, wid = self.shape2d
            grids = v.reshape(v.shape[:-1] + (hgt, wid))
            coeffs = _complex_transform(sfft.dctn, grids, axes=(-2, -1), norm="ortho")
            return coeffs.reshape(v.shape[:-1] + (self.q,))[..., self.mask_indices]
        return v @ self._entries.conj()

    def max_entry_sq(self) -> float:
        """max_{q,j} |C[q, j]|^2 (enters the nu_max coherence)."""
        if self._max_entry_sq is None:
            if self.kind == "dct2-mask" and self._entries is None:
                m = 0.0
                for j in range(self.k):
                    col = self.apply(np.eye(self.k)[j])
                    m = max(m, float(np.max(np.abs(col)) ** 2))
                self._max_entry_sq = m
            else:
                self._max_entry_sq = float(np.max(np.abs(self.entries)) ** 2)
        return self._max_entry_sq

    def gram_defect(self) -> float:
        """Entrywise deviation of C^H C from the identity."""
        gram = self.adjoint(self.apply(np.eye(self.k)))
        return float(np.max(np.abs(gram - np.eye(self.k))))


def build_dct_subspace(Q: int, K: int, selector="first-K") -> SubspaceBasis:
    """Orthonormal DCT-II columns.

    Parameters
    ----------
    Q, K : int
        Signal length and subspace dimension, 1 <= K <= Q.
    selector : "first-K" or sequence of int
        Which DCT coefficients span the subspace; indices must be distinct
        and lie in [0, Q).
    """
    if selector == "first-K":
        idx = np.arange(K)
    else:
        idx = np.asarray(list(selector), dtype=int)
    if len(idx) != K or len(np.unique(idx)) != K:
        raise DimensionError("selector must give exactly K distinct indices")
    if K > Q or idx.min() < 0 or idx.max() >= Q:
        raise DimensionError("selector indices out of range")
    eye = np.zeros((Q, K))
    eye[idx, np.arange(K)] = 1.0
    entries = sfft.idct(eye, axis=0, norm="ortho")
    return SubspaceBasis("dct-columns", Q, K, entries=entries)


def build_fourier_subspace(Q: int, K: int, frequencies) -> SubspaceBasis:
    """K columns of the normalized Q x Q DFT matrix, selected by frequency.

    Frequencies are interpreted modulo Q and must be distinct mod Q.
    """
    freqs = np.mod(np.asarray(list(frequencies), dtype=int), Q)
    if len(freqs) != K or len(np.unique(freqs)) != K:
        raise DimensionError("frequencies must give exactly K distinct values mod Q")
    if K > Q:
        raise DimensionError("K > Q")
    q = np.arange(Q)
    entries = np.exp(-2j * np.pi * np.outer(q, freqs) / Q) / np.sqrt(Q)
    return SubspaceBasis("fourier-columns", Q, K, entries=entries)


def build_dct2_mask_subspace(height: int, width: int, mask) -> SubspaceBasis:
    """2D-DCT subspace: column j is the vectorized inverse 2D DCT of the
    j-th selected coefficient.

    mask is either a boolean (height x width) array or a sequence of flat
    coefficient indices; it must select at least one coefficient.
    """
    Q = height * width
    mask = np.asarray(mask)
    if mask.dtype == bool:
        if mask.shape != (height, width):
            raise DimensionError("boolean mask shape mismatch")
        idx = np.flatnonzero(mask.ravel())
    else:
        idx = np.asarray(mask, dtype=int).ravel()
    if idx.size == 0:
        raise DimensionError("empty coefficient mask")
    if len(np.unique(idx)) != len(idx) or idx.min() < 0 or idx.max() >= Q:
        raise DimensionError("mask indices must be distinct and in range")
    return SubspaceBasis(
        "dct2-mask", Q, len(idx), shape2d=(height, width), mask_indices=np.sort(idx)
    )


@dataclass(frozen=True)
class ModulationSet:
    """N Rademacher sign vectors of length Q, reproducible from a seed."""

    signs: np.ndarray  # (N, Q), entries exactly +-1
    seed: int

    def __post_init__(self):
        if self.signs.ndim != 2:
            raise DimensionError("signs must be an (N, Q) array")
        if not np.all(np.abs(self.signs) == 1.0):
            raise DomainError("modulation entries must be exactly +-1")

    @property
    def n(self) -> int:
        return self.signs.shape[0]

    @property
    def q(self) -> int:
        return self.signs.shape[1]


def sample_modulations(Q: int, N: int, seed: int) -> ModulationSet:
    """Draw N iid Rademacher sign vectors of length Q."""
    if Q < 1 or N < 1:
        raise DimensionError("Q and N must be >= 1")
    rng = derive_rng(seed, "modulations")
    signs = rng.choice(np.array([-1.0, 1.0]), size=(N, Q))
    return ModulationSet(signs=signs, seed=seed)


@dataclass(frozen=True)
class GroundTruth:
    """True filter h0, coefficients x0 (N stacked K-blocks), and scale d0."""

    h0: np.ndarray
    x0: np.ndarray
    d0: float

    def __post_init__(self):
        if self.d0 <= 0:
            raise DomainError("d0 must be positive")
        root = np.sqrt(self.d0)
        for name, v in (("h0", self.h0), ("x0", self.x0)):
            if abs(np.linalg.norm(v) - root) > 1e-12 * root:
                raise DomainError(f"||{name}|| must equal sqrt(d0)")

    def x_blocks(self, n_channels: int) -> np.ndarray:
        return self.x0.reshape(n_channels, -1)


def sample_ground_truth(M: int, K: int, N: int, d0: float = 1.0, seed: int = 0,
                        real: bool = False) -> GroundTruth:
    """Gaussian ground truth rescaled so ||h0|| = ||x0|| = sqrt(d0).

    Complex by default; real=True draws real Gaussians (deblur demo).
    """
    if d0 <= 0:
        raise DomainError("d0 must be positive")
    rng = derive_rng(seed, "ground-truth")
    if real:
        h0 = rng.standard_normal(M)
        x0 = rng.standard_normal(K * N)
    else:
        h0 = rng.standard_normal(M) + 1j * rng.standard_normal(M)
        x0 = rng.standard_normal(K * N) + 1j * rng.standard_normal(K * N)
    h0 = h0.astype(complex) * (np.sqrt(d0) / np.linalg.norm(h0))
    x0 = x0.astype(complex) * (np.sqrt(d0) / np.linalg.norm(x0))
    return GroundTruth(h0=h0, x0=x0, d0=float(d0))


@dataclass(frozen=True)
class MeasurementSet:
    """Fourier-domain observations, N stacked length-L blocks."""

    yhat: np.ndarray  # (L*N,)
    sigma: float
    noise: np.ndarray  # realized noise, kept for diagnostics
    seed: int

    def blocks(self, n_channels: int) -> np.ndarray:
        return self.yhat.reshape(n_channels, -1)


@dataclass(frozen=True)
class CoherenceProfile:
    """Dispersion measures of (h, x) under the instance's transforms."""

    mu2: float
    nu2: float
    nu_max2: float


@dataclass(frozen=True)
class ProblemInstance:
    """Dimensions, basis, modulations and transform defining the linear map."""

    L: int
    Q: int
    M: int
    K: int
    N: int
    basis: SubspaceBasis
    modulations: ModulationSet
    transform: TransformDescriptor

    def __post_init__(self):
        if min(self.L, self.Q, self.M, self.K, self.N) < 1:
            raise DimensionError("all dimensions must be >= 1")
        if self.L < max(self.Q, self.M):
            raise DimensionError("need L >= max(Q, M)")
        if self.Q < self.K:
            raise DimensionError("need Q >= K")
        if (self.basis.q, self.basis.k) != (self.Q, self.K):
            raise DimensionError("basis shape does not match (Q, K)")
        if (self.modulations.n, self.modulations.q) != (self.N, self.Q):
            raise DimensionError("modulations shape does not match (N, Q)")
        if (self.transform.size, self.transform.filter_size,
                self.transform.input_size) != (self.L, self.M, self.Q):
            raise DimensionError("transform geometry does not match (L, M, Q)")

    @property
    def kn(self) -> int:
        return self.K * self.N

    def x_blocks(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape[-1] != self.kn:
            raise DimensionError(f"coefficient length {x.shape[-1]} != K*N={self.kn}")
        return x.reshape(x.shape[:-1] + (self.N, self.K))

    def modulated_input(self, x: np.ndarray) -> np.ndarray:
        """r_n o (C x_n) for all channels; x is (..., K*N) -> (..., N, Q)."""
        xb = self.x_blocks(x)
        return self.modulations.signs * self.basis.apply(xb)


def make_instance_1d(L, Q, M, K, N, seed, selector="first-K") -> ProblemInstance:
    """Convenience constructor: DCT subspace, fresh modulations, 1D DFT."""
    return ProblemInstance(
        L=L, Q=Q, M=M, K=K, N=N,
        basis=build_dct_subspace(Q, K, selector),
        modulations=sample_modulations(Q, N, seed),
        transform=dft_1d(L, M, Q),
    )


def synthesize_measurements(instance: ProblemInstance, truth: GroundTruth,
                            sigma: float = 0.0, seed: int = 0) -> MeasurementSet:
    """Forward measurements of the ground truth plus complex Gaussian noise.

    The noise law puts per-entry variance sigma^2 d0^2 / (LN), split evenly
    between real and imaginary parts, so E||noise||^2 = sigma^2 d0^2.
    """
    from .linop import apply_forward_rank1

    if truth.h0.shape != (instance.M,) or truth.x0.shape != (instance.kn,):
        raise DimensionError("ground truth does not match instance dimensions")
    if sigma < 0:
        raise DomainError("sigma must be >= 0")
    clean = apply_forward_rank1(instance, truth.h0, truth.x0)
    ln = clean.size
    if sigma == 0.0:
        noise = np.zeros(ln, dtype=complex)
    else:
        rng = derive_rng(seed, "measurement-noise")
        scale = sigma * truth.d0 / np.sqrt(2 * ln)
        noise = scale * (rng.standard_normal(ln) + 1j * rng.standard_normal(ln))
    return MeasurementSet(yhat=clean + noise, sigma=float(sigma), noise=noise, seed=seed)


def coherence_profile(instance: ProblemInstance, h: np.ndarray, x: np.ndarray) -> CoherenceProfile:
    """Coherences of (h, x): peak-to-energy dispersion of the filter spectrum
    (mu^2), of the subspace coefficients (nu^2), and of the basis (nu_max^2).
    """
    h = np.asarray(h)
    x = np.asarray(x)
    hn2 = float(np.linalg.norm(h) ** 2)
    xn2 = float(np.linalg.norm(x) ** 2)
    if hn2 == 0.0 or xn2 == 0.0:
        raise DomainError("coherences are undefined for zero vectors")
    mu2 = instance.L * float(np.max(np.abs(instance.transform.filter_spectrum(h))) ** 2) / hn2
    cx = instance.basis.apply(instance.x_blocks(x))
    nu2 = instance.Q * instance.N * float(np.max(np.abs(cx)) ** 2) / xn2
    nu_max2 = instance.Q * instance.basis.max_entry_sq()
    return CoherenceProfile(mu2=mu2, nu2=nu2, nu_max2=nu_max2)
