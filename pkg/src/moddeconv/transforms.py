"""DFT descriptors for the measurement model.

A transform descriptor fixes the grid on which circular convolution is
diagonalized: a length-L DFT for 1D problems, or a separable H x W DFT for
the 2D deblurring setup (L = H*W, with the filter occupying a small corner
block). The DFT is unitary, F[w, n] = exp(-2*pi*i*w*n/L)/sqrt(L); explicit
sqrt(L) factors of the measurement model are applied by callers.

All primitives accept stacked inputs: the model axis is the last axis, any
leading axes are treated as a batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

__all__ = ["TransformDescriptor", "dft_1d", "dft_2d"]


@dataclass(frozen=True)
class TransformDescriptor:
    """Grid geometry of the circular-convolution model.

    kind is "dft1d" or "dft2d". For "dft1d", shape = (L,), the filter
    occupies indices [0, M) and the modulated input indices [0, Q). For
    "dft2d", shape = (H, W), L = H*W, the filter occupies the top-left
    filter_shape block, and the modulated input spans the full grid (Q = L).
    """

    kind: str
    shape: tuple
    filter_shape: tuple
    input_shape: tuple

    def __post_init__(self):
        if self.kind not in ("dft1d", "dft2d"):
            raise ValueError(f"unknown transform kind {self.kind!r}")
        for name, sub in (("filter_shape", self.filter_shape), ("input_shape", self.input_shape)):
            if len(self.shape) != len(sub):
                raise DimensionError(f"shape and {name} rank mismatch")
            if any(f > s for f, s in zip(sub, self.shape)):
                raise DimensionError(f"{name} support exceeds the transform grid")
        if self.kind == "dft2d" and self.input_shape != self.shape:
            raise DimensionError("2D modulated inputs must cover the full grid")
        object.__setattr__(self, "size", int(np.prod(self.shape)))
        object.__setattr__(self, "filter_size", int(np.prod(self.filter_shape)))
        object.__setattr__(self, "input_size", int(np.prod(self.input_shape)))
        object.__setattr__(self, "_root", float(np.sqrt(self.size)))

    # -- unitary DFT over the model grid (last axis = flattened grid) --

    def dft(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "dft1d":
            return np.fft.fft(z, axis=-1) / self._root
        batch = z.shape[:-1]
        zz = z.reshape(batch + self.shape)
        out = np.fft.fft2(zz, axes=(-2, -1)) / self._root
        return out.reshape(batch + (self.size,))

    def idft(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "dft1d":
            return np.fft.ifft(z, axis=-1) * self._root
        batch = z.shape[:-1]
        zz = z.reshape(batch + self.shape)
        out = np.fft.ifft2(zz, axes=(-2, -1)) * self._root
        return out.reshape(batch + (self.size,))

    # -- zero-padded embeddings --

    def embed_filter(self, h: np.ndarray) -> np.ndarray:
        if h.shape[-1] != self.filter_size:
            raise DimensionError(f"filter length {h.shape[-1]} != {self.filter_size}")
        batch = h.shape[:-1]
        out = np.zeros(batch + (self.size,), dtype=np.result_type(h, np.complex128))
        if self.kind == "dft1d":
            out[..., : self.filter_size] = h
            return out
        grid = out.reshape(batch + self.shape)
        bh, bw = self.filter_shape
        grid[..., :bh, :bw] = h.reshape(batch + self.filter_shape)
        return out

    def extract_filter(self, z: np.ndarray) -> np.ndarray:
        batch = z.shape[:-1]
        if self.kind == "dft1d":
            return z[..., : self.filter_size]
        grid = z.reshape(batch + self.shape)
        bh, bw = self.filter_shape
        return grid[..., :bh, :bw].reshape(batch + (self.filter_size,))

    def embed_input(self, s: np.ndarray) -> np.ndarray:
        if s.shape[-1] != self.input_size:
            raise DimensionError(f"input length {s.shape[-1]} != {self.input_size}")
        if self.input_size == self.size:
            return s.astype(np.result_type(s, np.complex128), copy=False)
        batch = s.shape[:-1]
        out = np.zeros(batch + (self.size,), dtype=np.result_type(s, np.complex128))
        out[..., : self.input_size] = s
        return out

    def extract_input(self, z: np.ndarray) -> np.ndarray:
        if self.input_size == self.size:
            return z
        return z[..., : self.input_size]

    # -- composed maps used by the measurement operator --

    def filter_spectrum(self, h: np.ndarray) -> np.ndarray:
        """F_M h: unitary spectrum of the zero-padded filter."""
        if self.kind == "dft1d":
            if h.shape[-1] != self.filter_size:
                raise DimensionError(f"filter length {h.shape[-1]} != {self.filter_size}")
            return np.fft.fft(h, n=self.size, axis=-1) / self._root
        return self.dft(self.embed_filter(h))

    def filter_spectrum_adjoint(self, z: np.ndarray) -> np.ndarray:
        """F_M^H z."""
        return self.extract_filter(self.idft(z))

    def input_spectrum_scaled(self, s: np.ndarray) -> np.ndarray:
        """sqrt(L) F_Q s: unnormalized spectrum of the zero-padded input."""
        if self.kind == "dft1d":
            if s.shape[-1] != self.input_size:
                raise DimensionError(f"input length {s.shape[-1]} != {self.input_size}")
            return np.fft.fft(s, n=self.size, axis=-1)
        return self.dft(self.embed_input(s)) * self._root

    def input_spectrum_scaled_adjoint(self, z: np.ndarray) -> np.ndarray:
        """(sqrt(L) F_Q)^H z."""
        return self.extract_input(self.idft(z)) * self._root

    def dense_dft_matrix(self) -> np.ndarray:
        """Explicit unitary DFT matrix (no FFT); guarded small sizes only."""
        L = self.size
        if L * L > 10**7:
            raise DimensionError("dense DFT matrix too large")
        if self.kind == "dft1d":
            idx = np.arange(L)
            return np.exp(-2j * np.pi * np.outer(idx, idx) / L) / np.sqrt(L)
        H, W = self.shape
        fh = np.exp(-2j * np.pi * np.outer(np.arange(H), np.arange(H)) / H)
        fw = np.exp(-2j * np.pi * np.outer(np.arange(W), np.arange(W)) / W)
        return np.kron(fh, fw) / np.sqrt(L)


def dft_1d(L: int, M: int, Q: int) -> TransformDescriptor:
    """1D descriptor: length-L DFT, filter on [0, M), input on [0, Q)."""
    return TransformDescriptor("dft1d", (int(L),), (int(M),), (int(Q),))


def dft_2d(height: int, width: int, filter_height: int, filter_width: int) -> TransformDescriptor:
    """2D descriptor: H x W DFT, filter on the top-left block, input on the grid."""
    return TransformDescriptor(
        "dft2d",
        (int(height), int(width)),
        (int(filter_height), int(filter_width)),
        (int(height), int(width)),
    )
