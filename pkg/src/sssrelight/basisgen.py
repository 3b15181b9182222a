"""PCA factorization of the dipole response into radial bases.

The sampled family R_d(r; sigma) over a bounded log-log box of
(sigma_s', sigma_a) pairs is assembled into a matrix (one row per material,
quadrature-weighted along r so the SVD optimizes the continuous L2 error),
then factored. The top right singular vectors are the radial bases b_k; for
any material the weights s_k fall out of a plain weighted projection, no
linear solve, because the bases are orthonormal under the r-quadrature.
"""

from dataclasses import dataclass, field

import numpy as np

from .dipole import DipoleDerived, OpticalMaterial, derive_dipole, derive_dipole_raw, eval_rd

DEFAULT_SIGMA_BOX = (0.1, 10.0, 0.001, 1.0)  # sp_min, sp_max, sa_min, sa_max (mm^-1)
DEFAULT_N_R = 512
DEFAULT_SIGMA_LATTICE = 32  # per axis; N_sigma = lattice^2
R_TRUNCATION = 1e-9  # R_d(r_max)/R_d(0) target
_R_FIRST_POSITIVE = 1e-3  # first nonzero radial node, mm


@dataclass(frozen=True)
class GridConfig:
    sigma_box: tuple = DEFAULT_SIGMA_BOX
    n_r: int = DEFAULT_N_R
    sigma_lattice: int = DEFAULT_SIGMA_LATTICE
    eta: float = 1.3
    g: float = 0.0


@dataclass(frozen=True)
class SampleGrid:
    r_nodes: np.ndarray  # ascending, r_nodes[0] == 0, mm
    sigma_nodes: np.ndarray  # (N_sigma, 2) of (sigma_s', sigma_a)
    eta: float
    g: float
    sigma_box: tuple

    @property
    def r_weights(self) -> np.ndarray:
        return trapezoid_weights(self.r_nodes)

    @property
    def r_max(self) -> float:
        return float(self.r_nodes[-1])


@dataclass(frozen=True)
class ScatterSampleMatrix:
    values: np.ndarray  # (N_sigma, N_r), sqrt(w_j)-weighted R_d samples
    grid: SampleGrid


@dataclass(frozen=True)
class DiffusionBasis:
    """Top-K radial bases (stored quadrature-unweighted) plus singular values."""

    r_nodes: np.ndarray
    bases: np.ndarray  # (K, N_r)
    singular_values: np.ndarray  # full descending spectrum
    eta: float
    g: float
    sigma_box: tuple

    @property
    def K(self) -> int:
        return int(self.bases.shape[0])

    @property
    def r_weights(self) -> np.ndarray:
        return trapezoid_weights(self.r_nodes)

    @property
    def r_max(self) -> float:
        return float(self.r_nodes[-1])

    def contains_sigma(self, sp: float, sa: float) -> bool:
        lo_p, hi_p, lo_a, hi_a = self.sigma_box
        return lo_p <= sp <= hi_p and lo_a <= sa <= hi_a


@dataclass(frozen=True)
class MaterialWeights:
    s: np.ndarray  # (3, K) per-channel projection coefficients
    material: OpticalMaterial = field(repr=False, default=None)


def trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    w = np.empty_like(nodes)
    w[0] = (nodes[1] - nodes[0]) / 2.0
    w[-1] = (nodes[-1] - nodes[-2]) / 2.0
    w[1:-1] = (nodes[2:] - nodes[:-2]) / 2.0
    return w


def find_r_max(derived: DipoleDerived, ratio: float = R_TRUNCATION) -> float:
    """Smallest radius where R_d has decayed below ratio * R_d(0), by bisection."""
    rd0 = eval_rd(derived, 0.0)
    lo, hi = 0.0, 1.0
    while eval_rd(derived, hi) >= ratio * rd0:
        hi *= 2.0
        if hi > 1e9:
            raise RuntimeError("R_d failed to decay; material out of supported range")
    for _ in range(128):
        mid = 0.5 * (lo + hi)
        if eval_rd(derived, mid) < ratio * rd0:
            hi = mid
        else:
            lo = mid
    return hi


def build_sample_grid(config: GridConfig = GridConfig()) -> SampleGrid:
    sp_min, sp_max, sa_min, sa_max = config.sigma_box
    if not (0.0 < sp_min < sp_max and 0.0 < sa_min < sa_max):
        raise ValueError("sigma box must be positive and properly ordered")
    if config.n_r < 4 or config.sigma_lattice < 1:
        raise ValueError("grid too small")
    # the most translucent corner decays slowest and sets the truncation radius
    corner = derive_dipole_raw(sp_min, sa_min, config.eta)
    r_max = find_r_max(corner)
    r_nodes = np.concatenate([[0.0], np.geomspace(_R_FIRST_POSITIVE, r_max, config.n_r - 1)])
    sp = np.geomspace(sp_min, sp_max, config.sigma_lattice)
    sa = np.geomspace(sa_min, sa_max, config.sigma_lattice)
    nodes = np.stack(np.meshgrid(sp, sa, indexing="ij"), axis=-1).reshape(-1, 2)
    return SampleGrid(
        r_nodes=r_nodes,
        sigma_nodes=nodes,
        eta=config.eta,
        g=config.g,
        sigma_box=tuple(config.sigma_box),
    )


def assemble_matrix(grid: SampleGrid) -> ScatterSampleMatrix:
    sqrt_w = np.sqrt(grid.r_weights)
    rows = np.empty((grid.sigma_nodes.shape[0], grid.r_nodes.shape[0]))
    for i, (sp, sa) in enumerate(grid.sigma_nodes):
        rows[i] = eval_rd(derive_dipole_raw(sp, sa, grid.eta), grid.r_nodes) * sqrt_w
    return ScatterSampleMatrix(values=rows, grid=grid)


def decompose(matrix: ScatterSampleMatrix, K: int) -> DiffusionBasis:
    values = matrix.values
    max_k = min(values.shape)
    if not 1 <= K <= max_k:
        raise ValueError(f"K must lie in [1, {max_k}]")
    try:
        _, s, vh = np.linalg.svd(values, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("SVD failed to converge on the sample matrix") from exc
    weighted = vh[:K]
    # fix the sign so serialized bases are reproducible across LAPACK builds
    for row in weighted:
        nz = np.flatnonzero(np.abs(row) > 1e-12 * np.abs(row).max())
        if nz.size and row[nz[0]] < 0.0:
            row *= -1.0
    grid = matrix.grid
    unweighted = weighted / np.sqrt(grid.r_weights)
    return DiffusionBasis(
        r_nodes=grid.r_nodes.copy(),
        bases=unweighted,
        singular_values=s,
        eta=grid.eta,
        g=grid.g,
        sigma_box=grid.sigma_box,
    )


def _project_row(basis: DiffusionBasis, sp: float, sa: float, eta: float) -> np.ndarray:
    w = basis.r_weights
    rd = eval_rd(derive_dipole_raw(sp, sa, eta), basis.r_nodes)
    return (basis.bases * w) @ rd


def project_material(basis: DiffusionBasis, material: OpticalMaterial, channel=None):
    """Weights s_k = <R_d(.; sigma), b_k>_w, per channel or for one channel.

    O(K * N_r) per channel; no linear system because the weighted bases are
    orthonormal. Uses the material's eta (the bases were sampled at a fixed
    eta, but the projection tracks edits; only the radial shapes are frozen).
    """
    if channel is not None:
        sp, sa = material.channel(channel)
        return _project_row(basis, sp, sa, material.eta)
    s = np.stack([
        _project_row(basis, *material.channel(c), material.eta) for c in range(3)
    ])
    return MaterialWeights(s=s, material=material)


def eval_basis(basis: DiffusionBasis, k: int, r):
    """Continuous lookup of basis k: linear interpolation, zero past r_max."""
    if not 0 <= k < basis.K:
        raise ValueError("basis index out of range")
    r = np.asarray(r, dtype=np.float64)
    out = np.interp(r, basis.r_nodes, basis.bases[k], right=0.0)
    return float(out) if out.ndim == 0 else out


def reconstruct(basis: DiffusionBasis, weights: np.ndarray) -> np.ndarray:
    """Radial profile sum_k s_k b_k on the basis nodes."""
    return weights @ basis.bases


def error_report(basis: DiffusionBasis, matrix: ScatterSampleMatrix, k_list):
    """Truncated-reconstruction errors over the full grid for each K.

    Returns a list of dicts with keys K, l2rel, linfabs, linfrel; the grid
    metric is the quadrature-weighted one used by the factorization.
    """
    grid = matrix.grid
    sqrt_w = np.sqrt(grid.r_weights)
    weighted_bases = basis.bases * sqrt_w  # back to the SVD's orthonormal rows
    coeffs = matrix.values @ weighted_bases.T  # (N_sigma, K)
    unweighted = matrix.values / sqrt_w
    norm_all = np.linalg.norm(matrix.values)
    rows = []
    for k in sorted(k_list):
        if not 1 <= k <= basis.K:
            raise ValueError(f"K={k} outside the decomposition size {basis.K}")
        resid_w = matrix.values - coeffs[:, :k] @ weighted_bases[:k]
        resid_abs = np.abs(resid_w / sqrt_w)
        rows.append({
            "K": int(k),
            "l2rel": float(np.linalg.norm(resid_w) / norm_all),
            "linfabs": float(resid_abs.max()),
            "linfrel": float((resid_abs / np.abs(unweighted).max(axis=1, keepdims=True)).max()),
        })
    return rows
