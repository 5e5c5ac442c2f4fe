"""
MRI acquisition artifacts. Each transform takes a single-channel sample;
compose() runs them channel by channel.

bias_field works in the image domain (multiplicative exp of a random
polynomial). motion, ghosting and spike edit the spectrum from
core.fft_nd and keep the real part of the inverse transform.
"""

import itertools
import math
from typing import Optional, Sequence

import numpy as np

from medpatch.augment.plan import Sample, check_axes, draw, grouped
from medpatch.core import fft_nd, ifft_nd
from medpatch.decorators import augmentation
from medpatch.errors import ConfigError, ContractError


def _single(sample: Sample, kind: str) -> np.ndarray:
    if sample.image.shape[0] != 1:
        raise ContractError(f"{kind} takes one channel, got {sample.image.shape[0]}")
    return sample.image[0]


def _to_sample(sample: Sample, spectrum: np.ndarray) -> Sample:
    return sample.with_image(ifft_nd(spectrum).real[np.newaxis])


def _monomials(dims: int, order: int):
    return [e for e in itertools.product(range(order + 1), repeat=dims) if sum(e) <= order]


@augmentation("bias_field")
@grouped("kspace")
def bias_field(sample: Sample, rng: np.random.Generator, order: int = 3, coefficients: float = 0.5) -> Sample:
    """Multiply by exp(P(x)), P a polynomial of total degree <= order over [-1, 1] coordinates."""
    values = _single(sample, "bias_field")
    if order < 0:
        raise ConfigError(f"bias_field order must be >= 0, got {order}")
    if coefficients < 0:
        raise ConfigError(f"bias_field coefficients bound must be >= 0, got {coefficients}")
    axes = [np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(1) for n in values.shape]
    grid = np.meshgrid(*axes, indexing="ij")
    field = np.zeros(values.shape)
    for exponents in _monomials(values.ndim, order):
        c = rng.uniform(-coefficients, coefficients)
        term = np.ones(values.shape)
        for g, e in zip(grid, exponents):
            if e:
                term = term * g ** e
        field += c * term
    return sample.with_image((values * np.exp(field))[np.newaxis])


def _frequencies(shape: Sequence[int]):
    return np.meshgrid(*[np.fft.fftfreq(n) for n in shape], indexing="ij")


@augmentation("motion")
@grouped("kspace")
def motion(sample: Sample, rng: np.random.Generator, num_transforms=2, max_shift=2.0) -> Sample:
    """
    The subject moved during acquisition: spectra of rigidly translated
    copies (phase ramps) replace contiguous bands of axis-0 lines, taken in
    centred frequency order. The band holding DC keeps the original.
    """
    values = _single(sample, "motion")
    count = int(round(draw(num_transforms, rng, "num_transforms")))
    if count < 1:
        raise ConfigError(f"motion needs num_transforms >= 1, got {count}")
    span = max_shift if isinstance(max_shift, (list, tuple)) else (-max_shift, max_shift)
    shifts = [np.array([draw(span, rng, "max_shift") for _ in range(values.ndim)]) for _ in range(count)]
    if not any(s.any() for s in shifts):
        return sample

    spectrum = fft_nd(values)
    freqs = _frequencies(values.shape)
    copies = [spectrum * np.exp(-2j * math.pi * sum(f * t for f, t in zip(freqs, shift))) for shift in shifts]

    bands = np.array_split(np.fft.fftshift(np.arange(values.shape[0])), count + 1)
    dc_band = next(i for i, band in enumerate(bands) if 0 in band)
    others = iter(copies)
    out = spectrum.copy()
    for i, band in enumerate(bands):
        if i != dc_band:
            out[band] = next(others)[band]
    return _to_sample(sample, out)


@augmentation("ghosting")
@grouped("kspace")
def ghosting(sample: Sample, rng: np.random.Generator, num_ghosts=(4, 10), axis: int = 0,
             intensity=(0.5, 1.0)) -> Sample:
    """Attenuate every k-th plane (DC excluded) along an axis by (1 - intensity)."""
    values = _single(sample, "ghosting")
    (axis,) = check_axes([axis], values.ndim)
    k = int(round(draw(num_ghosts, rng, "num_ghosts")))
    if k < 2:
        raise ConfigError(f"ghosting needs num_ghosts >= 2, got {k}")
    strength = draw(intensity, rng, "intensity")
    if not 0 <= strength <= 1:
        raise ConfigError(f"ghosting intensity must be in [0, 1], got {strength}")
    if strength == 0:
        return sample

    spectrum = fft_nd(values)
    planes = [i for i in range(k, values.shape[axis], k)]
    index = [slice(None)] * values.ndim
    index[axis] = planes
    spectrum[tuple(index)] *= 1.0 - strength
    return _to_sample(sample, spectrum)


@augmentation("spike")
@grouped("kspace")
def spike(sample: Sample, rng: np.random.Generator, num_spikes: int = 1, intensity=(0.1, 0.5),
          positions: Optional[Sequence[Sequence[int]]] = None) -> Sample:
    """
    Inject high-magnitude k-space points. A spike of intensity s adds s * N
    to the coefficient at p, split evenly with its mirror -p so the image
    stays real: in the image domain it is a cosine grating of amplitude s
    (a constant s when p is the origin).
    """
    values = _single(sample, "spike")
    shape = values.shape
    if positions is None:
        positions = [tuple(int(rng.integers(0, n)) for n in shape) for _ in range(int(num_spikes))]
    strengths = [draw(intensity, rng, "intensity") for _ in positions]
    if not any(strengths):
        return sample

    spectrum = fft_nd(values)
    total = float(np.prod(shape))
    for position, s in zip(positions, strengths):
        if len(position) != len(shape):
            raise ConfigError(f"spike position {tuple(position)} does not match {len(shape)} axes")
        p = tuple(int(i) % n for i, n in zip(position, shape))
        mirror = tuple(-i % n for i, n in zip(p, shape))
        if p == mirror:
            spectrum[p] += s * total
        else:
            spectrum[p] += 0.5 * s * total
            spectrum[mirror] += 0.5 * s * total
    return _to_sample(sample, spectrum)
