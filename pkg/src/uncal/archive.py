"""Logit archives: the interchange unit between training and calibration.

An archive stores, for each of ``n`` inputs, the stack of ``N`` stochastic
logit vectors produced by Monte Carlo dropout plus the true label. The binary
file layout is:

    magic    b"UCAL"           4 bytes
    version  u16 little-endian
    n, N, C  u32 little-endian each
    labels   u32[n] little-endian
    logits   f64[n * N * C] little-endian, input-major, sample-second,
             class-minor (C order of the (n, N, C) array)

Total length is exactly 4 + 2 + 12 + 4n + 8nNC bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArchiveFormatError, InvalidInputError

MAGIC = b"UCAL"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sHIII")


@dataclass
class LogitArchive:
    """Per-input stacks of stochastic logits with true labels.

    logits has shape (n, N, C) float64; labels has shape (n,) with values in
    {0, ..., C-1}.
    """

    logits: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.logits.ndim != 3:
            raise InvalidInputError("logits must have shape (n, N, C)")
        n, _, c = self.logits.shape
        if c < 2:
            raise InvalidInputError("archive needs at least 2 classes")
        if self.labels.shape != (n,):
            raise InvalidInputError("labels length must match number of inputs")
        if not np.all(np.isfinite(self.logits)):
            raise InvalidInputError("archive logits must be finite")
        if n > 0 and (self.labels.min() < 0 or self.labels.max() >= c):
            raise InvalidInputError("labels must lie in {0..C-1}")

    @property
    def n(self) -> int:
        return self.logits.shape[0]

    @property
    def n_samples(self) -> int:
        """Number of MC passes per input."""
        return self.logits.shape[1]

    @property
    def n_classes(self) -> int:
        return self.logits.shape[2]

    def __eq__(self, other) -> bool:
        if not isinstance(other, LogitArchive):
            return NotImplemented
        return (
            self.logits.shape == other.logits.shape
            and np.array_equal(self.logits, other.logits)
            and np.array_equal(self.labels, other.labels)
        )


def write_archive(archive: LogitArchive, path) -> None:
    """Serialize an archive to the versioned binary layout."""
    n, n_mc, c = archive.logits.shape
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, n, n_mc, c)
    labels = archive.labels.astype("<u4").tobytes()
    logits = archive.logits.astype("<f8").tobytes(order="C")
    Path(path).write_bytes(header + labels + logits)


def read_archive(path) -> LogitArchive:
    """Read and validate an archive file; bit-exact inverse of write_archive."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ArchiveFormatError("file shorter than header", len(data))
    magic, version, n, n_mc, c = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise ArchiveFormatError(f"bad magic {magic!r}", 0)
    if version != FORMAT_VERSION:
        raise ArchiveFormatError(f"unsupported format version {version}", 4)
    labels_off = _HEADER.size
    logits_off = labels_off + 4 * n
    expected = logits_off + 8 * n * n_mc * c
    if len(data) != expected:
        raise ArchiveFormatError(
            f"file length {len(data)} != expected {expected}", min(len(data), expected)
        )
    if c < 2:
        raise ArchiveFormatError(f"class count {c} < 2", 12)
    labels = np.frombuffer(data, dtype="<u4", count=n, offset=labels_off)
    if n > 0 and labels.max() >= c:
        bad = int(np.argmax(labels >= c))
        raise ArchiveFormatError(
            f"label {int(labels[bad])} >= class count {c}", labels_off + 4 * bad
        )
    logits = np.frombuffer(data, dtype="<f8", count=n * n_mc * c, offset=logits_off)
    if not np.all(np.isfinite(logits)):
        bad = int(np.argmax(~np.isfinite(logits)))
        raise ArchiveFormatError("non-finite logit value", logits_off + 8 * bad)
    return LogitArchive(
        logits=logits.reshape(n, n_mc, c).copy(),
        labels=labels.astype(np.int64),
    )
