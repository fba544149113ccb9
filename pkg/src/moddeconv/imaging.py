"""Grayscale image I/O and the random-mask deblurring demo.

The demo mimics an acquisition chain in which each of N scenes is
pixelwise multiplied by its own +-1 mask and then blurred by one shared,
unknown point-spread function. All N observations are deconvolved jointly:
the blur plays the filter role and each masked scene is a modulated input
constrained to a 2D-DCT subspace estimated from conventionally blurred
snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .seeding import derive_rng
from .signal_model import (
    DimensionError,
    GroundTruth,
    MeasurementSet,
    ModulationSet,
    ProblemInstance,
    build_dct2_mask_subspace,
    coherence_profile,
)
from .solver import SolveOptions, SolveResult, initialize, run_gradient_descent
from .transforms import dft_2d

__all__ = [
    "GrayImage",
    "PgmFormatError",
    "read_pgm",
    "write_pgm",
    "gaussian_kernel2d",
    "synthetic_cell_images",
    "DeblurResult",
    "deblur_demo",
]


class PgmFormatError(ValueError):
    """Malformed or unsupported PGM data."""


@dataclass(frozen=True)
class GrayImage:
    """Row-major grayscale image with intensities in [0, 1]."""

    height: int
    width: int
    pixels: np.ndarray  # (height*width,) float
    maxval: int = 255

    def __post_init__(self):
        if self.height * self.width != self.pixels.size:
            raise DimensionError("pixel count does not match height*width")

    def as_array(self) -> np.ndarray:
        return self.pixels.reshape(self.height, self.width)


def _read_token(buf: bytes, pos: int):
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PgmFormatError("truncated PGM header")
    return buf[start:pos], pos


def read_pgm(path) -> GrayImage:
    """Read a binary (P5) PGM file; maxval 255 or 65535."""
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, pos = _read_token(buf, 0)
    if magic == b"P2":
        raise PgmFormatError("ASCII (P2) PGM is not supported; use binary P5")
    if magic != b"P5":
        raise PgmFormatError(f"not a PGM file (magic {magic!r})")
    fields = []
    for _ in range(3):
        tok, pos = _read_token(buf, pos)
        if not tok.isdigit():
            raise PgmFormatError(f"malformed PGM header token {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if maxval not in (255, 65535):
        raise PgmFormatError(f"unsupported maxval {maxval}")
    pos += 1  # single whitespace after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    raw = buf[pos:pos + count * dtype.itemsize]
    if len(raw) < count * dtype.itemsize:
        raise PgmFormatError("truncated PGM payload")
    data = np.frombuffer(raw, dtype=dtype).astype(float) / maxval
    return GrayImage(height=height, width=width, pixels=data, maxval=maxval)


def write_pgm(image: GrayImage, path, maxval: int | None = None) -> None:
    """Write a binary (P5) PGM file at the image's stored bit depth."""
    maxval = image.maxval if maxval is None else int(maxval)
    if maxval not in (255, 65535):
        raise PgmFormatError(f"unsupported maxval {maxval}")
    data = np.clip(np.round(image.pixels * maxval), 0, maxval)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.width} {image.height}\n{maxval}\n".encode("ascii"))
        fh.write(data.astype(dtype).tobytes())


def gaussian_kernel2d(size: int, sigma: float) -> np.ndarray:
    """size x size Gaussian kernel with standard deviation sigma, unit sum."""
    if size < 1 or sigma <= 0:
        raise DimensionError("kernel size must be >= 1 and sigma > 0")
    t = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(t ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def synthetic_cell_images(height: int, width: int, count: int, seed: int) -> list:
    """Smooth synthetic scenes (random Gaussian blobs) scaled into [0.1, 0.9]."""
    rng = derive_rng(seed, "synthetic-images")
    yy, xx = np.mgrid[0:height, 0:width]
    out = []
    for _ in range(count):
        img = np.zeros((height, width))
        for _ in range(10):
            cy, cx = rng.uniform(0, height), rng.uniform(0, width)
            s = rng.uniform(0.06, 0.22) * max(height, width)
            img += rng.uniform(0.3, 1.0) * np.exp(
                -((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
        img -= img.min()
        img /= max(img.max(), 1e-12)
        out.append(0.1 + 0.8 * img)
    return out


@dataclass
class DeblurResult:
    """Recovered scenes, kernel estimate, and relative mean-squared errors."""

    images: list  # recovered scenes as (H, W) float arrays
    kernel: np.ndarray  # (size, size), normalized to unit sum
    image_mse: float
    kernel_mse: float
    solve: SolveResult
    subspace_truncation: float  # energy fraction lost to the DCT mask


def _as_arrays(images):
    arrays = []
    for im in images:
        if isinstance(im, GrayImage):
            arrays.append(im.as_array().astype(float))
        else:
            arrays.append(np.asarray(im, dtype=float))
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise DimensionError("all images must have the same shape")
    return arrays


def deblur_demo(images, blur_size: int, blur_sigma: float, K: int,
                options: SolveOptions | None = None, seed: int = 0) -> DeblurResult:
    """Joint blind deblurring of N randomly masked images.

    Applies one +-1 mask per image, blurs all with the same size x size
    Gaussian kernel (std blur_sigma), then recovers the kernel and the
    scenes by spectral initialization plus gradient descent. The image
    subspace is the span of the K largest-magnitude 2D-DCT coefficients
    pooled over the conventionally blurred inputs; the global scale
    ambiguity is fixed by normalizing the kernel estimate to unit sum.
    """
    arrays = _as_arrays(images)
    hgt, wid = arrays[0].shape
    n_ch = len(arrays)
    L = hgt * wid
    if blur_size > min(hgt, wid):
        raise DimensionError("blur support exceeds image size")
    if not 1 <= K <= L:
        raise DimensionError("need 1 <= K <= pixel count")

    kernel = gaussian_kernel2d(blur_size, blur_sigma)
    M = blur_size * blur_size
    transform = dft_2d(hgt, wid, blur_size, blur_size)
    khat = transform.filter_spectrum(kernel.ravel().astype(complex))  # F_M h0

    # subspace from conventionally blurred snapshots (top-K pooled 2D-DCT)
    pool = np.zeros((hgt, wid))
    kf_full = np.fft.fft2(np.asarray(
        transform.embed_filter(kernel.ravel().astype(complex))).reshape(hgt, wid))
    for img in arrays:
        blurred = np.real(np.fft.ifft2(kf_full * np.fft.fft2(img)))
        pool += np.abs(sfft.dctn(blurred, norm="ortho"))
    mask_idx = np.argsort(pool.ravel())[::-1][:K]
    basis = build_dct2_mask_subspace(hgt, wid, mask_idx)

    rng = derive_rng(seed, "deblur-masks")
    signs = rng.choice(np.array([-1.0, 1.0]), size=(n_ch, L))
    instance = ProblemInstance(
        L=L, Q=L, M=M, K=K, N=n_ch,
        basis=basis,
        modulations=ModulationSet(signs=signs, seed=seed),
        transform=transform,
    )

    # physical observations: mask, then blur the true scenes
    yhat = np.empty((n_ch, L), dtype=complex)
    for n in range(n_ch):
        masked = signs[n] * arrays[n].ravel()
        yhat[n] = khat * transform.input_spectrum_scaled(masked.astype(complex))
    measurements = MeasurementSet(yhat=yhat.ravel(), sigma=0.0,
                                  noise=np.zeros(n_ch * L, dtype=complex), seed=seed)

    # best subspace representation of the truth (for coherence targets and traces)
    x_best = np.stack([basis.adjoint(a.ravel().astype(complex)) for a in arrays])
    total_energy = float(sum(np.linalg.norm(a) ** 2 for a in arrays))
    resid_energy = float(sum(
        np.linalg.norm(arrays[n].ravel() - np.real(basis.apply(x_best[n]))) ** 2
        for n in range(n_ch)))
    h0 = kernel.ravel().astype(complex)
    nh, nx = np.linalg.norm(h0), np.linalg.norm(x_best)
    bal = np.sqrt(nx / nh)
    truth = GroundTruth(h0=h0 * bal, x0=(x_best / bal).ravel(), d0=float(nh * nx))
    prof = coherence_profile(instance, truth.h0, truth.x0)

    if options is None:
        options = SolveOptions(max_iters=5000, eta_scale=0.3, grad_tol=1e-9)
    init = initialize(instance, measurements, mu2=prof.mu2, nu2=prof.nu2)
    from dataclasses import replace

    opts = replace(options, mu2=prof.mu2, nu2=prof.nu2)
    result = run_gradient_descent(instance, measurements, init, opts, truth=truth)

    ksum = complex(np.sum(result.u))
    if abs(ksum) < 1e-12:
        ksum = 1.0
    kernel_est = np.real(result.u / ksum).reshape(blur_size, blur_size)
    kernel_mse = float(np.linalg.norm(kernel_est - kernel) ** 2
                       / np.linalg.norm(kernel) ** 2)
    v_blocks = result.v.reshape(n_ch, K)
    recovered = []
    err_energy = 0.0
    for n in range(n_ch):
        est = np.real(basis.apply(v_blocks[n] * ksum)).reshape(hgt, wid)
        recovered.append(est)
        err_energy += float(np.linalg.norm(est - arrays[n]) ** 2)
    image_mse = err_energy / total_energy
    return DeblurResult(images=recovered, kernel=kernel_est,
                        image_mse=image_mse, kernel_mse=kernel_mse,
                        solve=result, subspace_truncation=resid_energy / total_energy)
