"""Binary persistence for precomputed scattering data ("PRTS1" format).

Little-endian chunked layout, documented bit-exactly in docs/format.md:
a fixed header carrying the mesh hash and global counts, then tagged
chunks: BASIS, ATLAS, one TRANSFER per basis, optional VIS, optional FOLD
per basis, and a trailing JSON META. Transfer coefficient values are f32;
radial bases, nodes, and energy bookkeeping are f64.
"""

import hashlib
import json
import struct

import numpy as np

from .basisgen import DiffusionBasis
from .surface import PAD, QuadtreeAtlas
from .transfer import CompressedTransfer, FoldedTransfer, TransferOperator, VisibilityMatrix

MAGIC = b"PRTS1\x00\x00\x00"
VERSION = 1

_HEADER = struct.Struct("<8sII32sIIIIII")  # magic, version, flags, hash, N,K,m,n, reserved x2
_CHUNK_HEAD = struct.Struct("<8sQ")


class ContainerError(ValueError):
    pass


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return _CHUNK_HEAD.pack(tag.ljust(8, b" "), len(payload)) + payload


def _pack_basis(basis: DiffusionBasis) -> bytes:
    parts = [struct.pack("<III", basis.r_nodes.size, basis.K, basis.singular_values.size)]
    parts.append(struct.pack("<dd", basis.eta, basis.g))
    parts.append(struct.pack("<4d", *basis.sigma_box))
    parts.append(np.ascontiguousarray(basis.r_nodes, "<f8").tobytes())
    parts.append(np.ascontiguousarray(basis.bases, "<f8").tobytes())
    parts.append(np.ascontiguousarray(basis.singular_values, "<f8").tobytes())
    return b"".join(parts)


def _unpack_basis(buf: bytes) -> DiffusionBasis:
    n_r, k, n_sv = struct.unpack_from("<III", buf, 0)
    eta, g = struct.unpack_from("<dd", buf, 12)
    box = struct.unpack_from("<4d", buf, 28)
    off = 60
    r_nodes = np.frombuffer(buf, "<f8", n_r, off).copy()
    off += 8 * n_r
    bases = np.frombuffer(buf, "<f8", k * n_r, off).reshape(k, n_r).copy()
    off += 8 * k * n_r
    sv = np.frombuffer(buf, "<f8", n_sv, off).copy()
    return DiffusionBasis(r_nodes=r_nodes, bases=bases, singular_values=sv,
                          eta=eta, g=g, sigma_box=tuple(box))


def _pack_atlas(atlas: QuadtreeAtlas) -> bytes:
    # one u32 per sample: part in the top byte, cell index in the low 24 bits
    if atlas.cells_per_part > 1 << 24 or atlas.part_count > 255:
        raise ContainerError("atlas exceeds the 8/24-bit record layout")
    records = (atlas.part_of.astype(np.uint32) << np.uint32(24)) | atlas.cell_of
    head = struct.pack("<III", atlas.part_count, atlas.grid_side, atlas.sample_count)
    return head + records.astype("<u4").tobytes()


def _unpack_atlas(buf: bytes) -> QuadtreeAtlas:
    m, side, n = struct.unpack_from("<III", buf, 0)
    records = np.frombuffer(buf, "<u4", n, 12)
    part_of = (records >> 24).astype(np.uint32)
    cell_of = (records & 0xFFFFFF).astype(np.uint32)
    inverse = np.full((m, side, side), PAD, np.uint32)
    rows = cell_of // side
    cols = cell_of % side
    inverse[part_of, rows, cols] = np.arange(n, dtype=np.uint32)
    return QuadtreeAtlas(part_count=int(m), grid_side=int(side),
                         part_of=part_of, cell_of=cell_of, inverse=inverse)


def _pack_operator(op: TransferOperator, head: bytes) -> bytes:
    parts = [head]
    parts.append(struct.pack("<IQ", op.cols.size, op.rowidx.size))
    parts.append(struct.pack("<ddq", op.kept_energy, op.total_energy, op.step1_entries))
    parts.append(np.ascontiguousarray(op.cols, "<u4").tobytes())
    parts.append(np.ascontiguousarray(op.colptr, "<i8").tobytes())
    parts.append(np.ascontiguousarray(op.rowidx, "<u4").tobytes())
    parts.append(np.ascontiguousarray(op.vals, "<f4").tobytes())
    return b"".join(parts)


def _unpack_operator(buf: bytes, off: int) -> TransferOperator:
    n_cols, nnz = struct.unpack_from("<IQ", buf, off)
    off += 12
    kept, total, s1 = struct.unpack_from("<ddq", buf, off)
    off += 24
    cols = np.frombuffer(buf, "<u4", n_cols, off).copy()
    off += 4 * n_cols
    colptr = np.frombuffer(buf, "<i8", n_cols + 1, off).copy()
    off += 8 * (n_cols + 1)
    rowidx = np.frombuffer(buf, "<u4", nnz, off).copy()
    off += 4 * nnz
    vals = np.frombuffer(buf, "<f4", nnz, off).astype(np.float64)
    off += 4 * nnz
    return TransferOperator(cols=cols, colptr=colptr, rowidx=rowidx, vals=vals,
                            kept_energy=kept, total_energy=total,
                            step1_entries=int(s1)), off


def save_container(path, basis: DiffusionBasis, atlas: QuadtreeAtlas,
                   compressed: CompressedTransfer, mesh_hash: bytes,
                   visibility: VisibilityMatrix = None,
                   folded: FoldedTransfer = None, metadata: dict = None) -> None:
    if len(mesh_hash) != 32:
        raise ContainerError("mesh hash must be 32 bytes (sha256)")
    out = [_HEADER.pack(MAGIC, VERSION, 0, mesh_hash, atlas.sample_count,
                        compressed.k_count, atlas.part_count,
                        int(np.log2(atlas.grid_side)) if atlas.grid_side > 1 else 0,
                        0, 0)]
    out.append(_chunk(b"BASIS", _pack_basis(basis)))
    out.append(_chunk(b"ATLAS", _pack_atlas(atlas)))
    for k, op in enumerate(compressed.operators):
        head = struct.pack("<Idd", k, compressed.step1_keep, compressed.step2_fraction)
        out.append(_chunk(b"TRANSFER", _pack_operator(op, head)))
    if visibility is not None:
        head = struct.pack("<III", visibility.face_side, visibility.matrix.shape[0],
                           visibility.matrix.shape[1])
        payload = head + (visibility.matrix > 0.5).astype("<u1").tobytes()
        out.append(_chunk(b"VIS", payload))
    if folded is not None:
        for k, op in enumerate(folded.operators):
            head = struct.pack("<IIdd", k, folded.face_side, folded.eta, folded.fraction)
            out.append(_chunk(b"FOLD", _pack_operator(op, head)))
    meta = dict(metadata or {})
    out.append(_chunk(b"META", json.dumps(meta, sort_keys=True).encode("utf-8")))
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


class Container:
    def __init__(self, basis, atlas, compressed, mesh_hash, visibility=None,
                 folded=None, metadata=None):
        self.basis = basis
        self.atlas = atlas
        self.compressed = compressed
        self.mesh_hash = mesh_hash
        self.visibility = visibility
        self.folded = folded
        self.metadata = metadata or {}

    def save(self, path) -> None:
        save_container(path, self.basis, self.atlas, self.compressed,
                       self.mesh_hash, self.visibility, self.folded, self.metadata)


def load_container(path, expected_mesh_hash: bytes = None) -> Container:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise ContainerError(f"{path}: truncated header")
    magic, version, _flags, mesh_hash, n, k_count, m, level, _, _ = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ContainerError(f"{path}: not a PRTS1 container")
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported version {version}")
    if expected_mesh_hash is not None and mesh_hash != expected_mesh_hash:
        raise ContainerError(f"{path}: container was precomputed for a different mesh")

    basis = atlas = visibility = None
    transfer_ops = {}
    fold_ops = {}
    fold_info = {}
    step1_keep = step2_fraction = None
    metadata = {}
    off = _HEADER.size
    while off < len(data):
        if off + _CHUNK_HEAD.size > len(data):
            raise ContainerError(f"{path}: truncated chunk header")
        tag, length = _CHUNK_HEAD.unpack_from(data, off)
        off += _CHUNK_HEAD.size
        if off + length > len(data):
            raise ContainerError(f"{path}: truncated {tag.strip().decode()} chunk")
        payload = data[off:off + length]
        off += length
        tag = tag.rstrip(b" ")
        if tag == b"BASIS":
            basis = _unpack_basis(payload)
        elif tag == b"ATLAS":
            atlas = _unpack_atlas(payload)
        elif tag == b"TRANSFER":
            k, keep, fraction = struct.unpack_from("<Idd", payload, 0)
            op, _ = _unpack_operator(payload, 20)
            transfer_ops[k] = op
            step1_keep, step2_fraction = keep, fraction
        elif tag == b"VIS":
            side, rows, cols = struct.unpack_from("<III", payload, 0)
            mat = np.frombuffer(payload, "<u1", rows * cols, 12)
            visibility = VisibilityMatrix(
                matrix=mat.reshape(rows, cols).astype(np.float64), face_side=int(side))
        elif tag == b"FOLD":
            k, side, eta, fraction = struct.unpack_from("<IIdd", payload, 0)
            op, _ = _unpack_operator(payload, 24)
            fold_ops[k] = op
            fold_info = {"face_side": int(side), "eta": eta, "fraction": fraction}
        elif tag == b"META":
            metadata = json.loads(payload.decode("utf-8"))
        else:
            raise ContainerError(f"{path}: unknown chunk {tag!r}")

    if basis is None or atlas is None or len(transfer_ops) != k_count:
        raise ContainerError(f"{path}: missing required chunks")
    if atlas.sample_count != n or atlas.part_count != m or atlas.level != level:
        raise ContainerError(f"{path}: header/chunk disagreement")
    compressed = CompressedTransfer(
        operators=[transfer_ops[k] for k in range(k_count)],
        k_count=k_count,
        step1_keep=step1_keep,
        step2_fraction=step2_fraction,
        domain_size=atlas.part_count * atlas.cells_per_part,
    )
    folded = None
    if fold_ops:
        if len(fold_ops) != k_count:
            raise ContainerError(f"{path}: incomplete FOLD chunks")
        folded = FoldedTransfer(
            operators=[fold_ops[k] for k in range(k_count)],
            k_count=k_count,
            face_side=fold_info["face_side"],
            eta=fold_info["eta"],
            fraction=fold_info["fraction"],
            domain_size=6 * fold_info["face_side"] ** 2,
        )
    return Container(basis=basis, atlas=atlas, compressed=compressed,
                     mesh_hash=mesh_hash, visibility=visibility, folded=folded,
                     metadata=metadata)


BASIS_MAGIC = b"PRTB1\x00\x00\x00"


def save_basis(path, basis: DiffusionBasis, metadata: dict = None) -> None:
    """Standalone radial-basis file: header + BASIS + META chunks."""
    out = [BASIS_MAGIC, struct.pack("<I", VERSION)]
    out.append(_chunk(b"BASIS", _pack_basis(basis)))
    out.append(_chunk(b"META", json.dumps(metadata or {}, sort_keys=True).encode()))
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


def load_basis(path) -> DiffusionBasis:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:8] != BASIS_MAGIC:
        raise ContainerError(f"{path}: not a radial-basis file")
    version = struct.unpack_from("<I", data, 8)[0]
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported version {version}")
    off = 12
    basis = None
    while off < len(data):
        tag, length = _CHUNK_HEAD.unpack_from(data, off)
        off += _CHUNK_HEAD.size
        payload = data[off:off + length]
        off += length
        if tag.rstrip(b" ") == b"BASIS":
            basis = _unpack_basis(payload)
    if basis is None:
        raise ContainerError(f"{path}: missing BASIS chunk")
    return basis


def mesh_sha256(mesh) -> bytes:
    return mesh.content_hash()


def file_sha256(path) -> bytes:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.digest()
