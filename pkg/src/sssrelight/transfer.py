"""Per-basis scattering-transfer precompute and two-step compression.

Step 1 walks every receiver sample and basis, builds the transfer row
b_k(|x_i - x_o|) * A_i over all source samples, Haar-transforms it over the
atlas (transport domain, w0) and keeps the top-n coefficients per row; the
truncated spectra stream to a spill file because the untruncated data does
not fit memory at production scale. Step 2 gathers each retained transport
coefficient across receivers (zero where a row dropped it), transforms that
spatial signal with the CDF 9/7 (w1) and keeps a fixed energy fraction per
column. The result is, per basis k, a sparse operator mapping w0 irradiance
coefficients to w1 response coefficients.

Ambient light folds the precomputed visibility matrix into the same stores:
T'_k = T_k composed with (w0 . V . w2^-1), producing per-k operators that map
Haar cubemap coefficients (w2) straight to w1 response coefficients.
"""

import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from . import _accel
from .basisgen import DiffusionBasis
from .lighting import RayAccelerator, visibility_weights
from .surface import QuadtreeAtlas, SurfaceSamples
from .wavelets import SparseSpectrum, compress_energy, compress_top_n, haar2d

_k = _accel.get_kernels()

DEFAULT_STEP1_KEEP = 0.01  # fraction of w0 coefficients kept per row
DEFAULT_STEP2_FRACTION = 0.95  # energy kept per spatial column
DEFAULT_FOLD_FRACTION = 0.9999  # energy kept per folded ambient column
TRANSFER_BLOCK = 64  # receiver samples per kernel batch

_RECORD_HEAD = struct.Struct("<III d")  # k, out, count, total_energy


@dataclass(frozen=True)
class TransferRow:
    """One uncompressed operator row: response at out_sample for basis k."""

    out_sample: int
    k: int
    values: np.ndarray  # (N,) b_k(distance) * area, zero past r_max


@dataclass
class TransferOperator:
    """Sparse w_in -> w1 operator for one basis (CSC over retained columns)."""

    cols: np.ndarray  # sorted retained input-coefficient ids, uint32
    colptr: np.ndarray  # int64, len(cols) + 1
    rowidx: np.ndarray  # uint32 into the w1 flat domain
    vals: np.ndarray  # float64
    kept_energy: float
    total_energy: float
    step1_entries: int  # entries entering step 2 (compression-ratio ledger)

    @property
    def nnz(self) -> int:
        return int(self.rowidx.size)

    def apply(self, x_idx: np.ndarray, x_val: np.ndarray, out_len: int) -> np.ndarray:
        return _k.csc_apply(
            self.cols, self.colptr, self.rowidx, self.vals,
            np.ascontiguousarray(x_idx, np.uint32),
            np.ascontiguousarray(x_val, np.float64), out_len,
        )


@dataclass
class CompressedTransfer:
    operators: list  # K TransferOperator, input domain = w0 (m * side^2)
    k_count: int
    step1_keep: float
    step2_fraction: float
    domain_size: int  # m * side^2

    @property
    def nnz(self) -> int:
        return sum(op.nnz for op in self.operators)

    @property
    def step1_entries(self) -> int:
        return sum(op.step1_entries for op in self.operators)

    def compression_ratio(self) -> float:
        """Stored entries relative to the step-1 spectra feeding step 2."""
        s1 = self.step1_entries
        return self.nnz / s1 if s1 else 1.0


@dataclass
class FoldedTransfer:
    """Ambient-ready operators: w2 cubemap coefficients -> w1 response."""

    operators: list
    k_count: int
    face_side: int
    eta: float
    fraction: float
    domain_size: int  # 6 * face_side^2


@dataclass
class VisibilityMatrix:
    matrix: np.ndarray  # (N, 6*s*s) in [0, 1]
    face_side: int

    @property
    def direction_count(self) -> int:
        return 6 * self.face_side * self.face_side


# ---------------------------------------------------------------------------
# atlas helpers shared with the runtime
# ---------------------------------------------------------------------------

def atlas_flat_cells(atlas: QuadtreeAtlas) -> np.ndarray:
    """Per-sample index into the concatenated (m * side^2) flat domain."""
    return (atlas.part_of.astype(np.int64) * atlas.cells_per_part
            + atlas.cell_of.astype(np.int64))


def scatter_to_grids(atlas: QuadtreeAtlas, values: np.ndarray,
                     flat_cells: np.ndarray) -> np.ndarray:
    grids = np.zeros(atlas.part_count * atlas.cells_per_part, np.float64)
    grids[flat_cells] = values
    return grids.reshape(atlas.part_count, atlas.grid_side, atlas.grid_side)


def gather_from_grids(atlas: QuadtreeAtlas, grids: np.ndarray,
                      flat_cells: np.ndarray) -> np.ndarray:
    return grids.reshape(-1)[flat_cells]


def w0_forward(atlas: QuadtreeAtlas, values: np.ndarray,
               flat_cells: np.ndarray) -> np.ndarray:
    """Per-sample signal -> concatenated per-part Haar coefficients."""
    grids = scatter_to_grids(atlas, values, flat_cells)
    return _k.haar2d_fwd_batch(grids).reshape(-1)


def w1_inverse(atlas: QuadtreeAtlas, coeffs: np.ndarray,
               flat_cells: np.ndarray) -> np.ndarray:
    """Concatenated per-part 9/7 coefficients -> per-sample signal."""
    grids = coeffs.reshape(atlas.part_count, atlas.grid_side, atlas.grid_side)
    return gather_from_grids(atlas, _k.cdf97_inv_batch(grids), flat_cells)


# ---------------------------------------------------------------------------
# precompute
# ---------------------------------------------------------------------------

def _basis_slopes(basis: DiffusionBasis) -> np.ndarray:
    return (basis.bases[:, 1:] - basis.bases[:, :-1]) / np.diff(basis.r_nodes)


def transfer_rows_block(samples: SurfaceSamples, basis: DiffusionBasis,
                        out_ids: np.ndarray) -> np.ndarray:
    """(B, K, N) raw transfer rows for a block of receiver samples."""
    slopes = _basis_slopes(basis)
    return _k.transfer_block(
        np.ascontiguousarray(samples.positions[out_ids], np.float64),
        np.ascontiguousarray(samples.positions, np.float64),
        np.ascontiguousarray(samples.area, np.float64),
        basis.r_nodes, np.ascontiguousarray(basis.bases), np.ascontiguousarray(slopes),
    )


def precompute_transfer(samples: SurfaceSamples, atlas: QuadtreeAtlas,
                        basis: DiffusionBasis):
    """Yield TransferRow for every (receiver, basis) pair, in atlas order."""
    for lo in range(0, samples.count, TRANSFER_BLOCK):
        ids = np.arange(lo, min(lo + TRANSFER_BLOCK, samples.count))
        block = transfer_rows_block(samples, basis, ids)
        for b, out in enumerate(ids):
            for k in range(basis.K):
                yield TransferRow(out_sample=int(out), k=k, values=block[b, k])


def compress_step1(row_values: np.ndarray, atlas: QuadtreeAtlas, n: int,
                   flat_cells: np.ndarray = None) -> SparseSpectrum:
    """Haar the row over the atlas and keep its n largest coefficients."""
    if n < 1:
        raise ValueError("step-1 n must be >= 1")
    if flat_cells is None:
        flat_cells = atlas_flat_cells(atlas)
    return compress_top_n(w0_forward(atlas, row_values, flat_cells), n)


def _write_record(fh, k: int, out: int, spec: SparseSpectrum) -> None:
    fh.write(_RECORD_HEAD.pack(k, out, spec.count, spec.total_energy))
    fh.write(np.ascontiguousarray(spec.indices, np.uint32).tobytes())
    fh.write(np.ascontiguousarray(spec.values, np.float32).tobytes())


def _row_spectra_blocks(samples, atlas, basis, flat_cells):
    """Iterate (sample ids, (B, K, domain) Haar spectra of their rows)."""
    domain = atlas.part_count * atlas.cells_per_part
    for lo in range(0, samples.count, TRANSFER_BLOCK):
        ids = np.arange(lo, min(lo + TRANSFER_BLOCK, samples.count))
        block = transfer_rows_block(samples, basis, ids)
        nb = len(ids)
        buf = np.zeros((nb * basis.K, domain))
        buf[:, flat_cells] = block.reshape(nb * basis.K, samples.count)
        coeffs = _k.haar2d_fwd_batch(
            buf.reshape(-1, atlas.grid_side, atlas.grid_side)
        ).reshape(nb, basis.K, domain)
        yield ids, coeffs


def run_step1(samples: SurfaceSamples, atlas: QuadtreeAtlas, basis: DiffusionBasis,
              keep_fraction: float, spill_path, progress=None) -> int:
    """Stream step-1 spectra for all rows to the spill file; returns n."""
    domain = atlas.part_count * atlas.cells_per_part
    n = max(int(round(keep_fraction * domain)), 1)
    flat_cells = atlas_flat_cells(atlas)
    with open(spill_path, "wb") as fh:
        for ids, coeffs in _row_spectra_blocks(samples, atlas, basis, flat_cells):
            for b, out in enumerate(ids):
                for k in range(basis.K):
                    spec = compress_top_n(coeffs[b, k], n)
                    _write_record(fh, k, int(out), spec)
            if progress:
                progress(int(ids[-1]) + 1, samples.count)
    return n


def step1_unions(spill_path, k_count: int, domain: int) -> np.ndarray:
    """Per-k union of the retained w0 indices across all receiver rows."""
    masks = np.zeros((k_count, domain), bool)
    head = _RECORD_HEAD
    with open(spill_path, "rb") as fh:
        while True:
            raw = fh.read(head.size)
            if not raw:
                break
            k, _, count, _ = head.unpack(raw)
            idx = np.frombuffer(fh.read(4 * count), np.uint32)
            fh.seek(4 * count, os.SEEK_CUR)
            masks[k, idx.astype(np.int64)] = True
    return masks


def compress_step2(spill_path, samples: SurfaceSamples, atlas: QuadtreeAtlas,
                   basis: DiffusionBasis, fraction: float,
                   step1_keep: float) -> CompressedTransfer:
    """Gather union columns densely, 9/7 them spatially, threshold by energy.

    The spill only fixes WHICH w0 indices survive (union of the per-row
    top-n); the column values are re-derived exactly in a second streaming
    pass so each spatial column is a dense smooth field rather than a
    zero-punched one. Rows whose top-n dropped an index still contribute
    their true coefficient there.
    """
    domain = atlas.part_count * atlas.cells_per_part
    flat_cells = atlas_flat_cells(atlas)
    k_count = basis.K
    masks = step1_unions(spill_path, k_count, domain)
    col_ids = [np.flatnonzero(masks[k]).astype(np.int64) for k in range(k_count)]
    step1_entries = _spill_entry_count(spill_path, k_count)

    # pass 2: gather the true coefficients at the union indices, grouping
    # bases so the dense column buffers stay within a fixed memory budget
    budget = 64 << 20  # floats
    groups = []
    cur, cur_cost = [], 0
    for k in range(k_count):
        cost = col_ids[k].size * samples.count
        if cur and cur_cost + cost > budget:
            groups.append(cur)
            cur, cur_cost = [], 0
        cur.append(k)
        cur_cost += cost
    if cur:
        groups.append(cur)

    columns = {}
    operators = [None] * k_count
    for group in groups:
        for k in group:
            columns[k] = np.zeros((col_ids[k].size, samples.count), np.float32)
        for ids, coeffs in _row_spectra_blocks(samples, atlas, basis, flat_cells):
            for k in group:
                columns[k][:, ids] = coeffs[:, k, col_ids[k]].T
        for k in group:
            operators[k] = _threshold_columns(
                columns.pop(k), col_ids[k], atlas, flat_cells, fraction,
                step1_entries[k])
    return CompressedTransfer(
        operators=operators,
        k_count=k_count,
        step1_keep=step1_keep,
        step2_fraction=fraction,
        domain_size=domain,
    )


def _threshold_columns(column_values, cols, atlas, flat_cells, fraction,
                       step1_entries) -> TransferOperator:
    domain = atlas.part_count * atlas.cells_per_part
    col_specs = []
    chunk = 256
    for c0 in range(0, cols.size, chunk):
        c1 = min(c0 + chunk, cols.size)
        nb = c1 - c0
        batch = np.zeros((nb, domain))
        batch[:, flat_cells] = column_values[c0:c1].astype(np.float64)
        grids = batch.reshape(nb * atlas.part_count, atlas.grid_side, atlas.grid_side)
        spectral = _k.cdf97_fwd_batch(grids).reshape(nb, domain)
        for ci in range(nb):
            col_specs.append(compress_energy(spectral[ci], fraction))

    colptr = np.zeros(cols.size + 1, np.int64)
    for ci, spec in enumerate(col_specs):
        colptr[ci + 1] = colptr[ci] + spec.count
    rowidx = (np.concatenate([s.indices for s in col_specs])
              if col_specs else np.empty(0, np.uint32))
    vals_out = (np.concatenate([s.values for s in col_specs])
                if col_specs else np.empty(0))
    return TransferOperator(
        cols=cols.astype(np.uint32),
        colptr=colptr,
        rowidx=rowidx.astype(np.uint32),
        vals=vals_out.astype(np.float64),
        kept_energy=float(sum(s.kept_energy for s in col_specs)),
        total_energy=float(sum(s.total_energy for s in col_specs)),
        step1_entries=step1_entries,
    )


def _spill_entry_count(spill_path, k_count: int):
    counts = [0] * k_count
    head = _RECORD_HEAD
    with open(spill_path, "rb") as fh:
        while True:
            raw = fh.read(head.size)
            if not raw:
                break
            k, _, count, _ = head.unpack(raw)
            counts[k] += count
            fh.seek(8 * count, os.SEEK_CUR)
    return counts


def precompute_compressed(samples: SurfaceSamples, atlas: QuadtreeAtlas,
                          basis: DiffusionBasis, step1_keep: float = DEFAULT_STEP1_KEEP,
                          step2_fraction: float = DEFAULT_STEP2_FRACTION,
                          spill_dir=None, progress=None) -> CompressedTransfer:
    """Full two-step pipeline with the intermediate spectra spilled to disk."""
    fd, spill = tempfile.mkstemp(suffix=".spill", dir=spill_dir)
    os.close(fd)
    try:
        run_step1(samples, atlas, basis, step1_keep, spill, progress=progress)
        return compress_step2(spill, samples, atlas, basis, step2_fraction, step1_keep)
    finally:
        os.unlink(spill)


# ---------------------------------------------------------------------------
# visibility and ambient folding
# ---------------------------------------------------------------------------

def precompute_visibility(samples: SurfaceSamples, accel: RayAccelerator,
                          face_side: int = 16) -> VisibilityMatrix:
    """Binary upper-hemisphere visibility over the cubemap direction set."""
    from .envmap import face_directions

    dirs = face_directions(face_side).reshape(-1, 3)
    n, d = samples.count, dirs.shape[0]
    vis = np.zeros((n, d), np.float64)
    origins = samples.positions + accel.ray_offset * samples.normals
    cos = samples.normals @ dirs.T  # (N, D)
    far = 4.0 * accel.bbox_diagonal + 1.0
    for d0 in range(0, d, 64):  # chunk directions to bound ray-batch memory
        d1 = min(d0 + 64, d)
        sel = cos[:, d0:d1] > 0.0
        si, di = np.nonzero(sel)
        if si.size == 0:
            continue
        hits = accel.any_hit(origins[si], dirs[d0 + di],
                             np.full(si.size, far))
        block = np.zeros((n, d1 - d0))
        block[si, di] = ~hits
        vis[:, d0:d1] = block
    return VisibilityMatrix(matrix=vis, face_side=face_side)


def fold_visibility(compressed: CompressedTransfer, vis: VisibilityMatrix,
                    samples: SurfaceSamples, atlas: QuadtreeAtlas, eta: float,
                    fraction: float = DEFAULT_FOLD_FRACTION) -> FoldedTransfer:
    """Compose the transfer operators with the weighted visibility.

    Produces per-k operators taking w2 (Haar cubemap) coefficients straight
    to w1 response coefficients, compressed per column at the given energy
    fraction.
    """
    if vis.matrix.shape[0] != samples.count:
        raise ValueError("visibility and samples disagree on the sample count")
    side = vis.face_side
    d = vis.direction_count
    domain = compressed.domain_size
    weights = visibility_weights(samples, vis.matrix, side, eta)  # (N, D)
    # w2 over the direction axis: per-face Haar of every row
    w2 = _k.haar2d_fwd_batch(
        np.ascontiguousarray(weights.reshape(samples.count * 6, side, side))
    ).reshape(samples.count, d)
    # w0 over the sample axis: flatten + Haar each direction-coefficient column
    flat_cells = atlas_flat_cells(atlas)
    buf = np.zeros((d, domain))
    buf[:, flat_cells] = w2.T
    v_tilde = _k.haar2d_fwd_batch(
        buf.reshape(d * atlas.part_count, atlas.grid_side, atlas.grid_side)
    ).reshape(d, domain).T  # (w0 domain, D)

    operators = []
    for op in compressed.operators:
        dense = np.zeros((domain, op.cols.size))
        for ci in range(op.cols.size):
            sl = slice(op.colptr[ci], op.colptr[ci + 1])
            dense[op.rowidx[sl].astype(np.int64), ci] = op.vals[sl]
        folded = dense @ v_tilde[op.cols.astype(np.int64), :]  # (w1, D)
        col_specs = [compress_energy(folded[:, e], fraction) for e in range(d)]
        cols = np.flatnonzero([s.count for s in col_specs]).astype(np.uint32)
        colptr = np.zeros(cols.size + 1, np.int64)
        keep = [col_specs[int(c)] for c in cols]
        for ci, spec in enumerate(keep):
            colptr[ci + 1] = colptr[ci] + spec.count
        operators.append(TransferOperator(
            cols=cols,
            colptr=colptr,
            rowidx=(np.concatenate([s.indices for s in keep])
                    if keep else np.empty(0, np.uint32)),
            vals=(np.concatenate([s.values for s in keep])
                  if keep else np.empty(0)),
            kept_energy=float(sum(s.kept_energy for s in col_specs)),
            total_energy=float(sum(s.total_energy for s in col_specs)),
            step1_entries=int(np.count_nonzero(folded)),
        ))
    return FoldedTransfer(
        operators=operators,
        k_count=compressed.k_count,
        face_side=side,
        eta=eta,
        fraction=fraction,
        domain_size=d,
    )
