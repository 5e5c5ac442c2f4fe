"""
Discrete Fourier transform over any subset of axes, any extents.

Power-of-two lengths use an iterative radix-2 Cooley-Tukey transform; other
lengths go through Bluestein's chirp-z algorithm on a padded power-of-two
convolution. Normalization convention: forward unnormalized, inverse scaled
by 1/N (the numpy convention), so ifft(fft(x)) == x.
"""

from functools import lru_cache
from typing import Optional, Sequence

import numpy as np


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@lru_cache(maxsize=64)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _fft_radix2(a: np.ndarray) -> np.ndarray:
    """Forward transform of every row of a [M, n] array, n a power of two."""
    rows, n = a.shape
    a = a[:, _bit_reversal(n)]
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(rows, n // size, size)
        even = blocks[..., :half]
        odd = blocks[..., half:] * twiddle
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(rows, n)
        size *= 2
    return a


@lru_cache(maxsize=64)
def _chirp(n: int):
    k = np.arange(n, dtype=np.int64)
    # k^2 mod 2n keeps the phase argument small and exact for large k
    w = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    m = 1
    while m < 2 * n - 1:
        m *= 2
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(w)
    b[m - n + 1:] = np.conj(w[1:])[::-1]
    return w, m, _fft_radix2(b[None, :])[0]


def _fft_bluestein(a: np.ndarray) -> np.ndarray:
    rows, n = a.shape
    w, m, b_hat = _chirp(n)
    padded = np.zeros((rows, m), dtype=np.complex128)
    padded[:, :n] = a * w
    spectrum = _fft_radix2(padded) * b_hat
    conv = np.conj(_fft_radix2(np.conj(spectrum))) / m
    return conv[:, :n] * w


def _fft_rows(a: np.ndarray) -> np.ndarray:
    n = a.shape[1]
    if n == 1:
        return a.copy()
    if _is_power_of_two(n):
        return _fft_radix2(a)
    return _fft_bluestein(a)


def _fft_axis(x: np.ndarray, axis: int) -> np.ndarray:
    moved = np.moveaxis(x, axis, -1)
    shape = moved.shape
    out = _fft_rows(np.ascontiguousarray(moved).reshape(-1, shape[-1]))
    return np.moveaxis(out.reshape(shape), -1, axis)


def fft_nd(x, inverse: bool = False, axes: Optional[Sequence[int]] = None) -> np.ndarray:
    """Forward or inverse DFT of a complex (or real) grid along `axes` (default: all)."""
    data = np.asarray(x, dtype=np.complex128)
    axes = tuple(range(data.ndim)) if axes is None else tuple(ax % data.ndim for ax in axes)
    if inverse:
        data = np.conj(data)
    for axis in axes:
        data = _fft_axis(data, axis)
    if inverse:
        count = int(np.prod([data.shape[ax] for ax in axes])) if axes else 1
        data = np.conj(data) / count
    return data


def ifft_nd(x, axes: Optional[Sequence[int]] = None) -> np.ndarray:
    return fft_nd(x, inverse=True, axes=axes)
