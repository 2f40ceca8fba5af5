"""IQF1 waveform files.

Layout (little-endian)::

    8s   magic  b"ACWAVEIQ"
    u32  version (1)
    u32  reserved (0)
    f64  sample_rate_hz
    u64  sample count N
    N x (f32 I, f32 Q)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import BadMagicError, BadVersionError, UnreadableFileError
from .signal import Waveform

MAGIC = b"ACWAVEIQ"
VERSION = 1
_HEADER = struct.Struct("<8sIIdQ")


def write_iqf(path, w: Waveform) -> None:
    x = np.asarray(w.samples)
    iq = np.empty((len(x), 2), dtype="<f4")
    iq[:, 0] = x.real
    iq[:, 1] = x.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, 0, float(w.sample_rate_hz), len(x)))
        fh.write(iq.tobytes())


def read_iqf(path) -> Waveform:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise UnreadableFileError(f"{path}: truncated header")
    magic, version, _, rate, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise BadVersionError(f"{path}: unsupported IQF version {version}")
    body = raw[_HEADER.size:]
    if len(body) != 8 * count:
        raise UnreadableFileError(f"{path}: expected {count} samples, found {len(body) / 8:g}")
    iq = np.frombuffer(body, dtype="<f4").reshape(count, 2)
    x = np.empty(count, dtype=np.complex64)
    x.real, x.imag = iq[:, 0], iq[:, 1]
    try:
        return Waveform(x, rate, path.stem)
    except ValueError as exc:
        raise UnreadableFileError(f"{path}: {exc}") from exc
