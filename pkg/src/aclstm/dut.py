"""Synthetic device under test and train/val/test dataset handling."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, LengthMismatchError, UnreadableFileError
from .iqf import read_iqf
from .signal import NormStats, Waveform, apply_norm, fit_norm


@dataclass(frozen=True)
class SynthDutSpec:
    """Wiener-Hammerstein cascade: FIR -> Saleh AM/AM + AM/PM -> FIR, plus noise floor."""

    pre_fir: tuple = (1.0, 0.10 - 0.05j, 0.02j)
    saleh_alpha_a: float = 2.0
    saleh_beta_a: float = 1.0
    saleh_alpha_p: float = np.pi / 3
    saleh_beta_p: float = 1.0
    post_fir: tuple = (1.0, -0.08 + 0.03j)
    noise_dbc: float = -80.0

    def __post_init__(self):
        if not self.saleh_beta_a > 0:
            raise ConfigError("saleh_beta_a must be positive")
        for name in ("pre_fir", "post_fir"):
            taps = getattr(self, name)
            if not 1 <= len(taps) <= 5 or taps[0] == 0:
                raise ConfigError(f"{name} needs 1-5 taps with a nonzero first tap")
        if self.noise_dbc > -60 and np.isfinite(self.noise_dbc):
            raise ConfigError("noise_dbc must be <= -60 dBc or -inf")

    @property
    def saturation_modulus(self) -> float:
        return 1.0 / np.sqrt(self.saleh_beta_a)


def saleh(u: np.ndarray, spec: SynthDutSpec) -> np.ndarray:
    r2 = np.abs(u) ** 2
    gain = spec.saleh_alpha_a / (1 + spec.saleh_beta_a * r2)
    phase = spec.saleh_alpha_p * r2 / (1 + spec.saleh_beta_p * r2)
    return u * gain * np.exp(1j * phase)


def synth_dut_forward(spec: SynthDutSpec, x: Waveform, seed: int = 0) -> Waveform:
    u = np.asarray(x.samples, dtype=complex)
    u = lfilter(np.asarray(spec.pre_fir, dtype=complex), [1.0], u)
    v = lfilter(np.asarray(spec.post_fir, dtype=complex), [1.0], saleh(u, spec))
    if np.isfinite(spec.noise_dbc):
        rng = np.random.default_rng(seed)
        p = np.mean(np.abs(v) ** 2) * 10 ** (spec.noise_dbc / 10)
        v = v + np.sqrt(p / 2) * (rng.standard_normal(len(v)) + 1j * rng.standard_normal(len(v)))
    return x.with_samples(v, label="dut")


def drive_scale(x: Waveform, spec: SynthDutSpec, mean_modulus: float = 0.5) -> float:
    """Gain putting the mean input modulus at ``mean_modulus`` x the Saleh saturation point."""
    m = np.mean(np.abs(np.asarray(x.samples)))
    if m == 0:
        raise ConfigError("cannot set drive level of an all-zero waveform")
    return float(mean_modulus * spec.saturation_modulus / m)


@dataclass(frozen=True)
class Dataset:
    input: Waveform
    output: Waveform
    split_bounds: tuple[int, int]
    norm_in: NormStats
    norm_out: NormStats
    meta: dict = field(default_factory=dict, compare=False)

    def __len__(self):
        return len(self.input.samples)

    def block(self, part: str, which: str = "input", tail: int | None = None) -> np.ndarray:
        """Samples of one split (or its last ``tail`` samples).

        The only sanctioned way to read dataset samples.
        """
        lo, hi = self.bounds(part)
        if tail is not None:
            lo = max(lo, hi - tail)
        src = self.input if which == "input" else self.output
        return np.asarray(src.samples[lo:hi])

    def bounds(self, part: str) -> tuple[int, int]:
        train_end, val_end = self.split_bounds
        try:
            return {"train": (0, train_end), "val": (train_end, val_end), "test": (val_end, len(self))}[part]
        except KeyError:
            raise ConfigError(f"unknown split {part!r}") from None


def split_bounds(n: int, fractions=(0.8, 0.1, 0.1)) -> tuple[int, int]:
    if len(fractions) != 3 or min(fractions) <= 0 or abs(sum(fractions) - 1) > 1e-9:
        raise ConfigError(f"fractions must be three positive numbers summing to 1, got {fractions}")
    train_end = int(round(n * fractions[0]))
    val_end = int(round(n * (fractions[0] + fractions[1])))
    if not 0 < train_end < val_end < n:
        raise ConfigError(f"length {n} too short for split {fractions}")
    return train_end, val_end


def make_dataset(x: Waveform, y: Waveform, fractions=(0.8, 0.1, 0.1)) -> Dataset:
    if len(x) != len(y):
        raise ConfigError(f"input/output length mismatch: {len(x)} vs {len(y)}")
    train_end, val_end = split_bounds(len(x), fractions)
    xs, ys = np.asarray(x.samples), np.asarray(y.samples)
    return Dataset(x, y, (train_end, val_end), fit_norm(xs[:train_end]), fit_norm(ys[:train_end]))


def ingest_dataset(path_in, path_out, fractions=(0.8, 0.1, 0.1)) -> Dataset:
    x, y = read_iqf(path_in), read_iqf(path_out)
    if len(x) != len(y):
        raise LengthMismatchError(f"{path_in} has {len(x)} samples, {path_out} has {len(y)}")
    if x.sample_rate_hz != y.sample_rate_hz:
        raise LengthMismatchError(f"sample rate mismatch: {x.sample_rate_hz} vs {y.sample_rate_hz}")
    ds = make_dataset(x, y, fractions)
    ds.meta.update(input=str(path_in), output=str(path_out))
    return ds


def normalized_blocks(ds: Dataset, part: str, tail: int | None = None):
    """(normalized input, normalized target, raw input) for one split."""
    x = ds.block(part, "input", tail)
    y = ds.block(part, "output", tail)
    return apply_norm(x, ds.norm_in), apply_norm(y, ds.norm_out), x


# dataset.meta: plain key=value manifest

def write_meta(path, ds: Dataset, input_path, output_path) -> None:
    lines = [
        f"input={input_path}",
        f"output={output_path}",
        f"length={len(ds)}",
        f"train_end={ds.split_bounds[0]}",
        f"val_end={ds.split_bounds[1]}",
    ]
    for tag, st in (("norm_in", ds.norm_in), ("norm_out", ds.norm_out)):
        for k in ("mean_i", "mean_q", "std_i", "std_q"):
            lines.append(f"{tag}.{k}={getattr(st, k)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_meta(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from exc
    out = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            k, _, v = line.partition("=")
            out[k.strip()] = v.strip()
    return out


def load_dataset_from_meta(path, fractions=(0.8, 0.1, 0.1)) -> Dataset:
    meta = read_meta(path)
    base = Path(path).parent
    try:
        ds = ingest_dataset(base / meta["input"], base / meta["output"], fractions)
    except KeyError as exc:
        raise UnreadableFileError(f"{path}: missing key {exc}") from None
    if ds.split_bounds != (int(meta["train_end"]), int(meta["val_end"])):
        raise ConfigError(f"{path}: split bounds disagree with the data files")
    return ds
