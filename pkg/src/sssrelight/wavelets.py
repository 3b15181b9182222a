"""2D wavelet transforms over power-of-two grids and nonlinear truncation.

Two transforms are provided: an orthonormal Haar (used on the light-transport
axis, where exact Parseval bookkeeping matters) and the biorthogonal CDF 9/7
lifting scheme (used on the spatial axis, where smoothness matters more than
exact energy preservation). Both run the full dyadic pyramid down to a single
DC coefficient and both accept a single (s, s) grid or a batch (B, s, s).

Truncation operates on flattened coefficient vectors and records total vs
kept energy; for the 9/7 the "energy" is coefficient-space energy, which is
only approximately signal energy (biorthogonality).
"""

from dataclasses import dataclass

import numpy as np

from . import _accel

_k = _accel.get_kernels()

CDF97_LIFT_CONSTANTS = {
    "alpha": _k.CDF97_ALPHA,
    "beta": _k.CDF97_BETA,
    "gamma": _k.CDF97_GAMMA,
    "delta": _k.CDF97_DELTA,
    "zeta": _k.CDF97_ZETA,
}


def _check_side(side: int, minimum: int = 1) -> None:
    if side < minimum or side & (side - 1):
        raise ValueError(f"grid side must be a power of two >= {minimum}, got {side}")


def _as_batch(grid):
    a = np.asarray(grid, dtype=np.float64)
    if a.ndim == 2:
        return a[None, :, :], True
    if a.ndim == 3:
        return a, False
    raise ValueError("expected (s, s) grid or (B, s, s) batch")


def _run(kernel, grid, minimum_side):
    batch, single = _as_batch(grid)
    if batch.shape[-1] != batch.shape[-2]:
        raise ValueError("grid must be square")
    _check_side(batch.shape[-1], 1)
    if batch.shape[-1] < minimum_side:
        raise ValueError(f"grid side must be >= {minimum_side}")
    out = kernel(np.ascontiguousarray(batch))
    return out[0] if single else out


def haar2d(grid):
    """Forward full-pyramid orthonormal Haar transform."""
    return _run(_k.haar2d_fwd_batch, grid, 1)


def haar2d_inverse(grid):
    """Exact adjoint of haar2d."""
    return _run(_k.haar2d_inv_batch, grid, 1)


def cdf97(grid):
    """Forward full-pyramid CDF 9/7 transform (whole-sample symmetric ends)."""
    return _run(_k.cdf97_fwd_batch, grid, 2)


def cdf97_inverse(grid):
    return _run(_k.cdf97_inv_batch, grid, 2)


@dataclass(frozen=True)
class SparseSpectrum:
    """Truncated coefficient vector over a flat domain of `size` entries.

    indices are unique, sorted, uint32; energies are sums of squared
    coefficients (kept over the retained entries, total over all of them).
    """

    indices: np.ndarray
    values: np.ndarray
    size: int
    total_energy: float
    kept_energy: float

    def __post_init__(self):
        if self.indices.shape != self.values.shape:
            raise ValueError("index/value length mismatch")
        if self.indices.size:
            if int(self.indices[-1]) >= self.size:
                raise ValueError("coefficient index out of range")
            if np.any(np.diff(self.indices.astype(np.int64)) <= 0):
                raise ValueError("indices must be strictly increasing")

    @property
    def count(self) -> int:
        return int(self.indices.size)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.size, np.float64)
        dense[self.indices] = self.values
        return dense


def _flat_coeffs(spectrum) -> np.ndarray:
    a = np.asarray(spectrum, dtype=np.float64)
    return a.reshape(-1)


def _make_spectrum(flat, order, kept):
    idx = np.sort(order[:kept]).astype(np.uint32)
    vals = flat[idx]
    total = float(np.sum(flat * flat))
    # summation order differs between the two, so clamp against ulp noise
    kept_e = min(float(np.sum(vals * vals)), total)
    return SparseSpectrum(
        indices=idx,
        values=vals,
        size=flat.size,
        total_energy=total,
        kept_energy=kept_e,
    )


def compress_top_n(spectrum, n: int) -> SparseSpectrum:
    """Keep the n largest-magnitude coefficients (ties: lower flat index)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    flat = _flat_coeffs(spectrum)
    n = min(n, flat.size)
    # stable sort on -|c| keeps lower indices first among ties
    order = np.argsort(-np.abs(flat), kind="stable")
    return _make_spectrum(flat, order, n)


def compress_energy(spectrum, fraction: float) -> SparseSpectrum:
    """Keep the shortest magnitude-ordered prefix reaching the energy fraction."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must be in [0, 1]")
    flat = _flat_coeffs(spectrum)
    order = np.argsort(-np.abs(flat), kind="stable")
    sq = flat[order] ** 2
    cum = np.cumsum(sq)
    total = cum[-1] if cum.size else 0.0
    if fraction == 0.0 or total == 0.0:
        kept = 0
    else:
        kept = int(np.searchsorted(cum, fraction * total, side="left")) + 1
        kept = min(kept, int(np.count_nonzero(flat)))
    return _make_spectrum(flat, order, kept)


def sparse_dot(a: SparseSpectrum, b: SparseSpectrum) -> float:
    """Inner product over shared indices.

    Exact for Haar spectra of the underlying signals (Parseval); for 9/7
    spectra it is the coefficient-space product, not the signal product.
    """
    if a.size != b.size:
        raise ValueError("spectra live on different domains")
    if a.count == 0 or b.count == 0:
        return 0.0
    pos = np.searchsorted(a.indices, b.indices)
    pos = np.minimum(pos, a.count - 1)
    match = a.indices[pos] == b.indices
    return float(np.dot(a.values[pos[match]], b.values[match]))
