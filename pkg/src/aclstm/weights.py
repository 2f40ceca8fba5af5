"""ACW1 weight container.

A UTF-8 text header followed by raw little-endian arrays::

    ACW1
    key=value              (architecture, normalization, precision, seed, ...)
    array=<name> <f4|f8> <d0>x<d1>...
    end_header
    <array bytes, in header order>

Neural models store their parameter layout; polynomial models store the
complex coefficients as a real (n, 2) array under ``model=mp|gmp``.
"""

from __future__ import annotations

from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .errors import BadMagicError, ShapeMismatchError, UnreadableFileError
from .nn_core import ModelSpec, NetworkParams, param_shapes
from .poly import MpSpec
from .signal import NormStats

MAGIC = "ACW1"


def _fmt(v) -> str:
    if isinstance(v, (tuple, list)):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _dump(path, header: dict, arrays: dict[str, np.ndarray]) -> None:
    lines = [MAGIC] + [f"{k}={_fmt(v)}" for k, v in header.items()]
    blobs = []
    for name, a in arrays.items():
        code = "f4" if a.dtype == np.float32 else "f8"
        a = np.ascontiguousarray(a, dtype="<" + code)
        lines.append(f"array={name} {code} {'x'.join(map(str, a.shape)) or 'scalar'}")
        blobs.append(a.tobytes())
    lines.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode())
        for b in blobs:
            fh.write(b)


def _load(path) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from exc
    if not raw.startswith((MAGIC + "\n").encode()):
        raise BadMagicError(f"{path}: not an ACW1 file")
    end = raw.find(b"\nend_header\n")
    if end < 0:
        raise UnreadableFileError(f"{path}: missing end_header")
    header, specs = {}, []
    for line in raw[:end].decode().splitlines()[1:]:
        k, _, v = line.partition("=")
        if k == "array":
            name, code, dims = v.split(" ")
            shape = () if dims == "scalar" else tuple(int(d) for d in dims.split("x"))
            specs.append((name, code, shape))
        else:
            header[k] = v
    pos = end + len(b"\nend_header\n")
    arrays = {}
    for name, code, shape in specs:
        n = int(np.prod(shape)) * int(code[1])
        if pos + n > len(raw):
            raise UnreadableFileError(f"{path}: truncated array {name}")
        arrays[name] = np.frombuffer(raw[pos:pos + n], dtype="<" + code).reshape(shape).copy()
        pos += n
    if pos != len(raw):
        raise UnreadableFileError(f"{path}: {len(raw) - pos} trailing bytes")
    return header, arrays


def _norm_header(prefix, st: NormStats | None) -> dict:
    if st is None:
        return {}
    return {f"{prefix}.{k}": v for k, v in asdict(st).items()}


def _norm_from(header, prefix) -> NormStats | None:
    keys = [f"{prefix}.{k}" for k in ("mean_i", "mean_q", "std_i", "std_q")]
    if not all(k in header for k in keys):
        return None
    return NormStats(*(float(header[k]) for k in keys))


def save_network(path, params: NetworkParams, norm_in=None, norm_out=None, seed: int = 0) -> None:
    precision = "f32" if params.dtype == np.float32 else "f64"
    header = {"model": params.spec.family}
    header.update({f"spec.{f.name}": getattr(params.spec, f.name) for f in fields(ModelSpec)})
    header.update(precision=precision, seed=seed)
    header.update(_norm_header("norm_in", norm_in))
    header.update(_norm_header("norm_out", norm_out))
    _dump(path, header, params.arrays)


def _spec_from(header) -> ModelSpec:
    kw = {}
    for f in fields(ModelSpec):
        v = header[f"spec.{f.name}"]
        kw[f.name] = int(v) if isinstance(f.default, int) else v
    return ModelSpec(**kw)


def load_network(path):
    """Returns (params, norm_in, norm_out, header)."""
    header, arrays = _load(path)
    if header.get("model") not in ("aclstm", "lstm", "arvtdnn"):
        raise ShapeMismatchError(f"{path}: model {header.get('model')!r} is not a neural network")
    try:
        spec = _spec_from(header)
    except (KeyError, ValueError) as exc:
        raise ShapeMismatchError(f"{path}: bad architecture header: {exc}") from exc
    expected = param_shapes(spec)
    if list(arrays) != list(expected):
        raise ShapeMismatchError(f"{path}: array names/order do not match the architecture")
    for name, shape in expected.items():
        if arrays[name].shape != shape:
            raise ShapeMismatchError(f"{path}: {name} has shape {arrays[name].shape}, expected {shape}")
    return NetworkParams(spec, arrays), _norm_from(header, "norm_in"), _norm_from(header, "norm_out"), header


def save_poly(path, spec: MpSpec, coeffs: np.ndarray) -> None:
    header = {"model": spec.kind}
    header.update({f"spec.{f.name}": getattr(spec, f.name) for f in fields(MpSpec)})
    c = np.asarray(coeffs, dtype=complex)
    _dump(path, header, {"coeffs": np.stack([c.real, c.imag], axis=1)})


def load_poly(path):
    header, arrays = _load(path)
    if header.get("model") not in ("mp", "gmp"):
        raise ShapeMismatchError(f"{path}: model {header.get('model')!r} is not polynomial")

    def tup(v):
        return tuple(int(x) for x in v.split(",") if x)

    spec = MpSpec(int(header["spec.memory_depth"]), int(header["spec.order"]),
                  header["spec.odd_only"] == "True", tup(header["spec.lagging"]),
                  tup(header["spec.leading"]), int(header["spec.cross_memory"]),
                  tup(header["spec.cross_orders"]))
    c = arrays.get("coeffs")
    if c is None or c.shape != (spec.n_coeffs, 2):
        raise ShapeMismatchError(f"{path}: coefficient array does not match the spec")
    return spec, c[:, 0] + 1j * c[:, 1]
