"""On-disk block storage for row-partitioned SPD matrices.

Layout under one directory:

    manifest.bin   magic "UQPB", format version u32 LE, n u64 LE, m u64 LE,
                   then per block its size d_i (u64 LE) followed by d_i row
                   indices (u64 LE); then one CRC32 (u32 LE) per block file;
                   then an inverse-CRC count (u32 LE, 0 or m) and that many
                   CRC32s for the inverse files.
    block_<i>.bin  d_i * n float64 LE, the block's rows of P in row-major
                   order, followed by the d_i entries of q restricted to the
                   block.
    inv_<i>.bin    d_i * d_i float64 LE, the inverse of P_{pi_i pi_i}
                   (written by precompute_inverses, possibly into a separate
                   cache directory).

Every block file's CRC32 is validated when the store is opened; inverse
files are validated when loaded. Counters on the handle (access_counter,
bytes_read, peak_resident_rows) let tests audit that solvers really touch
one block per iteration; residency uses a single-slot model where each
fetch evicts the previous one, matching how the solvers hold blocks.
"""

from __future__ import annotations

import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from uqpkit import linalg
from uqpkit.errors import ChecksumError, IndexOutOfRange, InvalidShape, IoError
from uqpkit.partition import Partition

MAGIC = b"UQPB"
FORMAT_VERSION = 1


class BlockInverses:
    """All per-block inverses, plus the packed views the score kernel wants."""

    def __init__(self, part: Partition, invs: list[np.ndarray]):
        if len(invs) != part.m:
            raise InvalidShape(f"{len(invs)} inverses for {part.m} blocks")
        self.partition = part
        self.invs = invs
        self.idx = part.concat()
        sizes = part.sizes
        self.blk_ptr = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
        self.inv_ptr = np.concatenate(
            ([0], np.cumsum(sizes * sizes))).astype(np.int64)
        self.inv_flat = np.concatenate([inv.ravel() for inv in invs])


class BlockStore:
    """Handle to one on-disk store. Use open() or write_store()."""

    def __init__(self, root, partition: Partition, block_crcs, inv_crcs,
                 cache_dir=None):
        self.root = Path(root)
        self.cache_dir = Path(cache_dir) if cache_dir is not None else self.root
        self.partition = partition
        self.n = partition.n
        self.m = partition.m
        self._block_crcs = list(block_crcs)
        self._inv_crcs = list(inv_crcs)
        self.access_counter = 0
        self.bytes_read = 0
        self.current_resident_rows = 0
        self.peak_resident_rows = 0

    # -- construction -------------------------------------------------------

    @classmethod
    def open(cls, root, cache_dir=None) -> "BlockStore":
        root = Path(root)
        try:
            raw = (root / "manifest.bin").read_bytes()
        except OSError as exc:
            raise IoError(f"cannot read manifest: {exc}") from exc
        part, block_crcs, inv_crcs = _parse_manifest(raw)
        store = cls(root, part, block_crcs, inv_crcs, cache_dir)
        for i in range(store.m):
            data = store._read_file(store._block_path(i))
            expected = store._block_nbytes(i)
            if len(data) != expected:
                raise ChecksumError(
                    f"block {i}: {len(data)} bytes on disk, expected {expected}")
            if zlib.crc32(data) != block_crcs[i]:
                raise ChecksumError(f"block {i}: CRC32 mismatch")
        return store

    @property
    def has_inverses(self) -> bool:
        return len(self._inv_crcs) == self.m and self.m > 0

    # -- fetching ------------------------------------------------------------

    def fetch_block(self, i: int):
        """Rows of P for block i plus q restricted to it: ((d_i, n), (d_i,))."""
        self._check_block(i)
        data = self._read_file(self._block_path(i))
        d = self.partition.blocks[i].size
        self.access_counter += 1
        self.bytes_read += len(data)
        self.current_resident_rows = d
        self.peak_resident_rows = max(self.peak_resident_rows, d)
        flat = np.frombuffer(data, dtype="<f8")
        rows = flat[:d * self.n].reshape(d, self.n).copy()
        q_sub = flat[d * self.n:].copy()
        return rows, q_sub

    def fetch_rows(self, indices):
        """Arbitrary rows of P by global index, seek-reading each one.

        Returns (rows, blocks_touched). This is the non-contiguous access
        path: each row costs a seek, access_counter advances once per
        distinct block touched, and checksums are not rechecked (they were
        validated at open).
        """
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size and (indices.min() < 0 or indices.max() >= self.n):
            raise IndexOutOfRange(f"row indices outside [0, {self.n})")
        locator = self._row_locator()
        rows = np.empty((indices.size, self.n), dtype=np.float64)
        touched = set()
        nbytes = 0
        for out_r, gi in enumerate(indices):
            blk, local = locator[gi]
            touched.add(blk)
            path = self._block_path(blk)
            try:
                with open(path, "rb") as fh:
                    fh.seek(local * self.n * 8)
                    data = fh.read(self.n * 8)
            except OSError as exc:
                raise IoError(f"cannot read rows from {path}: {exc}") from exc
            if len(data) != self.n * 8:
                raise IoError(f"short read of row {gi} in block {blk}")
            rows[out_r] = np.frombuffer(data, dtype="<f8")
            nbytes += len(data)
        self.access_counter += len(touched)
        self.bytes_read += nbytes
        self.current_resident_rows = indices.size
        self.peak_resident_rows = max(self.peak_resident_rows, indices.size)
        return rows, len(touched)

    def assemble_q(self) -> np.ndarray:
        """The full right-hand side, reading only each block file's tail."""
        q = np.empty(self.n, dtype=np.float64)
        for i, blk in enumerate(self.partition.blocks):
            d = blk.size
            path = self._block_path(i)
            try:
                with open(path, "rb") as fh:
                    fh.seek(d * self.n * 8)
                    data = fh.read(d * 8)
            except OSError as exc:
                raise IoError(f"cannot read q from {path}: {exc}") from exc
            q[blk] = np.frombuffer(data, dtype="<f8")
        return q

    def assemble_dense(self) -> np.ndarray:
        """Materialize the full matrix (desk scale only; O(n^2) memory)."""
        p = np.empty((self.n, self.n), dtype=np.float64)
        for i, blk in enumerate(self.partition.blocks):
            rows, _ = self.fetch_block(i)
            p[blk] = rows
        return p

    def diagonal(self) -> np.ndarray:
        diag = np.empty(self.n, dtype=np.float64)
        for i, blk in enumerate(self.partition.blocks):
            rows, _ = self.fetch_block(i)
            diag[blk] = rows[np.arange(blk.size), blk]
        return diag

    def reset_counters(self) -> None:
        self.access_counter = 0
        self.bytes_read = 0
        self.current_resident_rows = 0
        self.peak_resident_rows = 0

    # -- inverse cache -------------------------------------------------------

    def precompute_inverses(self, n_workers: int = 1) -> None:
        """Factor and store P_{pi pi}^-1 for every block.

        Embarrassingly parallel across blocks; each block's bytes do not
        depend on scheduling, so any worker count yields identical files.
        A no-op when valid inverse files already exist.
        """
        if self.has_inverses and self._inverses_valid():
            return
        if n_workers <= 1:
            crcs = [self._compute_one_inverse(i) for i in range(self.m)]
        else:
            with ThreadPoolExecutor(max_workers=n_workers) as pool:
                crcs = list(pool.map(self._compute_one_inverse, range(self.m)))
        self._inv_crcs = crcs
        _write_manifest(self.root, self.partition, self._block_crcs, crcs)

    def load_inverses(self) -> BlockInverses:
        """Read all inverse files (sum of d_i^2 floats, O(n d) total)."""
        if not self.has_inverses:
            raise IoError("store has no precomputed inverses")
        invs = []
        for i, blk in enumerate(self.partition.blocks):
            data = self._read_file(self._inv_path(i))
            d = blk.size
            if len(data) != d * d * 8:
                raise ChecksumError(
                    f"inverse {i}: {len(data)} bytes on disk, expected {d * d * 8}")
            if zlib.crc32(data) != self._inv_crcs[i]:
                raise ChecksumError(f"inverse {i}: CRC32 mismatch")
            invs.append(np.frombuffer(data, dtype="<f8").reshape(d, d).copy())
        return BlockInverses(self.partition, invs)

    def _compute_one_inverse(self, i: int) -> int:
        blk = self.partition.blocks[i]
        data = self._read_file(self._block_path(i))
        rows = np.frombuffer(data, dtype="<f8")[:blk.size * self.n].reshape(
            blk.size, self.n)
        sub = np.ascontiguousarray(rows[:, blk])
        inv = linalg.spd_invert(sub)
        payload = np.ascontiguousarray(inv, dtype="<f8").tobytes()
        try:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            self._inv_path(i).write_bytes(payload)
        except OSError as exc:
            raise IoError(f"cannot write inverse {i}: {exc}") from exc
        return zlib.crc32(payload)

    def _inverses_valid(self) -> bool:
        for i, blk in enumerate(self.partition.blocks):
            path = self._inv_path(i)
            if not path.is_file():
                return False
            data = path.read_bytes()
            if len(data) != blk.size * blk.size * 8:
                return False
            if zlib.crc32(data) != self._inv_crcs[i]:
                return False
        return True

    # -- helpers -------------------------------------------------------------

    def _block_path(self, i: int) -> Path:
        return self.root / f"block_{i}.bin"

    def _inv_path(self, i: int) -> Path:
        return self.cache_dir / f"inv_{i}.bin"

    def _block_nbytes(self, i: int) -> int:
        d = self.partition.blocks[i].size
        return d * self.n * 8 + d * 8

    def _check_block(self, i: int) -> None:
        if not 0 <= i < self.m:
            raise IndexOutOfRange(f"block {i} outside [0, {self.m})")

    def _row_locator(self):
        if not hasattr(self, "_locator"):
            loc = np.empty((self.n, 2), dtype=np.int64)
            for b, blk in enumerate(self.partition.blocks):
                loc[blk, 0] = b
                loc[blk, 1] = np.arange(blk.size)
            self._locator = loc
        return self._locator

    @staticmethod
    def _read_file(path: Path) -> bytes:
        try:
            return path.read_bytes()
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc


def write_store(prob, part: Partition, root, cache_dir=None) -> BlockStore:
    """Write an in-memory problem to disk under the given partition.

    Overwrites any store already in root (stale block/inverse files are
    removed first so reruns are byte-identical).
    """
    if not isinstance(prob.p, np.ndarray):
        raise InvalidShape("write_store needs an in-memory problem")
    if part.n != prob.n:
        raise InvalidShape(f"partition covers {part.n}, problem has {prob.n}")
    root = Path(root)
    try:
        root.mkdir(parents=True, exist_ok=True)
        for stale in root.glob("block_*.bin"):
            stale.unlink()
        for stale in root.glob("inv_*.bin"):
            stale.unlink()
        block_crcs = []
        for i, blk in enumerate(part.blocks):
            payload = (np.ascontiguousarray(prob.p[blk, :], dtype="<f8").tobytes()
                       + np.ascontiguousarray(prob.q[blk], dtype="<f8").tobytes())
            (root / f"block_{i}.bin").write_bytes(payload)
            block_crcs.append(zlib.crc32(payload))
        _write_manifest(root, part, block_crcs, [])
    except OSError as exc:
        raise IoError(f"cannot write store to {root}: {exc}") from exc
    return BlockStore(root, part, block_crcs, [], cache_dir)


def _write_manifest(root: Path, part: Partition, block_crcs, inv_crcs) -> None:
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<I", FORMAT_VERSION)
    buf += struct.pack("<QQ", part.n, part.m)
    for blk in part.blocks:
        buf += struct.pack("<Q", blk.size)
        buf += blk.astype("<u8").tobytes()
    for crc in block_crcs:
        buf += struct.pack("<I", crc)
    buf += struct.pack("<I", len(inv_crcs))
    for crc in inv_crcs:
        buf += struct.pack("<I", crc)
    try:
        (root / "manifest.bin").write_bytes(bytes(buf))
    except OSError as exc:
        raise IoError(f"cannot write manifest: {exc}") from exc


def _parse_manifest(raw: bytes):
    view = memoryview(raw)
    if len(raw) < 24 or bytes(view[:4]) != MAGIC:
        raise IoError("not a block store: bad magic")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != FORMAT_VERSION:
        raise IoError(f"unsupported store format version {version}")
    n, m = struct.unpack_from("<QQ", raw, 8)
    pos = 24
    blocks = []
    try:
        for _ in range(m):
            (d,) = struct.unpack_from("<Q", raw, pos)
            pos += 8
            idx = np.frombuffer(raw, dtype="<u8", count=d, offset=pos)
            pos += d * 8
            blocks.append(idx.astype(np.int64))
        block_crcs = list(struct.unpack_from(f"<{m}I", raw, pos)) if m else []
        pos += 4 * m
        (n_inv,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        inv_crcs = list(struct.unpack_from(f"<{n_inv}I", raw, pos)) if n_inv else []
    except struct.error as exc:
        raise IoError(f"truncated manifest: {exc}") from exc
    return Partition(blocks, int(n)), block_crcs, inv_crcs
