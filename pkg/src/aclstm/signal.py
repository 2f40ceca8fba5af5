"""Excitation waveforms: CP-OFDM generation, crest-factor reduction, PAPR and I/Q normalization."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DomainError

QAM_ORDERS = (4, 16, 64, 256)


@dataclass(frozen=True)
class Waveform:
    """Complex baseband samples plus sample-rate metadata."""

    samples: np.ndarray
    sample_rate_hz: float = 1.0
    label: str = ""

    def __post_init__(self):
        if len(self.samples) < 1:
            raise ConfigError("waveform must contain at least one sample")
        if not (np.isfinite(self.sample_rate_hz) and self.sample_rate_hz > 0):
            raise ConfigError(f"sample_rate_hz must be finite and positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(self.samples)):
            raise DomainError("waveform samples must be finite")

    def __len__(self):
        return len(self.samples)

    def with_samples(self, samples, label=None) -> "Waveform":
        return replace(self, samples=samples, label=self.label if label is None else label)


def qam_grid(order: int) -> np.ndarray:
    """Square QAM constellation scaled to unit average power."""
    if order not in QAM_ORDERS:
        raise ConfigError(f"qam_order must be one of {QAM_ORDERS}, got {order}")
    m = int(round(np.sqrt(order)))
    levels = np.arange(-(m - 1), m, 2, dtype=float)
    grid = (levels[:, None] + 1j * levels[None, :]).ravel()
    return grid / np.sqrt(2.0 * (order - 1) / 3.0)


@dataclass
class OfdmPlan:
    fft_size: int = 256
    active_subcarriers: int = 128
    cp_len: int = 16
    num_symbols: int = 74
    qam_order: int = 256
    seed: int = 0
    subcarrier_symbols: np.ndarray | None = field(default=None, repr=False)

    def validate(self):
        n = self.fft_size
        if n < 2 or n & (n - 1):
            raise ConfigError(f"fft_size must be a power of two, got {n}")
        if not 1 <= self.active_subcarriers < n:
            raise ConfigError(f"active_subcarriers must lie in [1, fft_size), got {self.active_subcarriers}")
        if self.cp_len < 0 or self.num_symbols < 1:
            raise ConfigError("cp_len must be >= 0 and num_symbols >= 1")
        grid = qam_grid(self.qam_order)
        if self.subcarrier_symbols is not None:
            s = np.asarray(self.subcarrier_symbols)
            if s.shape != (self.num_symbols, self.active_subcarriers):
                raise ConfigError(
                    f"subcarrier_symbols shape {s.shape} != ({self.num_symbols}, {self.active_subcarriers})"
                )
            if np.min(np.abs(s.ravel()[:, None] - grid[None, :]), axis=1).max() > 1e-9:
                raise ConfigError(f"subcarrier symbols off the {self.qam_order}-QAM grid")

    @property
    def occupied_fraction(self) -> float:
        return self.active_subcarriers / self.fft_size

    def with_symbols(self) -> "OfdmPlan":
        if self.subcarrier_symbols is not None:
            return self
        rng = np.random.default_rng(self.seed)
        grid = qam_grid(self.qam_order)
        idx = rng.integers(0, len(grid), size=(self.num_symbols, self.active_subcarriers))
        return replace(self, subcarrier_symbols=grid[idx])

    def symbol_len(self, oversample: int) -> int:
        return (self.fft_size + self.cp_len) * oversample


def active_bins(active: int, nfft: int) -> np.ndarray:
    """FFT bin indices for the active subcarriers, DC left empty.

    The negative side takes ``active // 2`` bins, the positive side the rest,
    ordered from most negative to most positive frequency.
    """
    n_neg = active // 2
    n_pos = active - n_neg
    freqs = np.concatenate([np.arange(-n_neg, 0), np.arange(1, n_pos + 1)])
    return freqs % nfft


def generate_ofdm(plan: OfdmPlan, oversample: int = 2, sample_rate_hz: float = 1.0) -> tuple[Waveform, OfdmPlan]:
    if oversample < 1:
        raise ConfigError(f"oversample must be >= 1, got {oversample}")
    plan = plan.with_symbols()
    plan.validate()
    nfft = plan.fft_size * oversample
    cp = plan.cp_len * oversample
    grid = np.zeros((plan.num_symbols, nfft), dtype=complex)
    grid[:, active_bins(plan.active_subcarriers, nfft)] = plan.subcarrier_symbols
    body = np.fft.ifft(grid, axis=1)
    frames = np.concatenate([body[:, nfft - cp:], body], axis=1) if cp else body
    x = frames.ravel()
    x = x / np.sqrt(np.mean(np.abs(x) ** 2))
    return Waveform(x, sample_rate_hz, "ofdm"), plan


def papr_db(w) -> float:
    x = np.asarray(getattr(w, "samples", w))
    if x.size == 0:
        raise DomainError("PAPR of an empty waveform")
    p = np.abs(x) ** 2
    mean = p.mean()
    if mean == 0:
        raise DomainError("PAPR of an all-zero waveform")
    return float(10 * np.log10(p.max() / mean))


def _bandlimit(x: np.ndarray, passband: float) -> np.ndarray:
    """Zero every FFT bin with |f| > passband/2 (normalized frequency)."""
    X = np.fft.fft(x)
    f = np.fft.fftfreq(len(x))
    X[np.abs(f) > passband / 2] = 0
    return np.fft.ifft(X)


@dataclass
class CfrResult:
    waveform: Waveform
    papr_db: float
    iterations: int
    reached: bool
    inband_nmse_db: float


def crest_factor_reduce(w: Waveform, target_papr_db: float, passband: float | None = None,
                        max_iter: int = 10, tol_db: float = 0.3) -> CfrResult:
    """Iterative clip-and-filter crest-factor reduction.

    Each pass hard-clips the envelope, removes everything outside ``passband``
    (two-sided normalized bandwidth; ``None`` keeps the full band) and restores
    the input mean power.  Filtering regrows peaks, so the clip level is walked
    down by the remaining overshoot.  The lowest-PAPR iterate is returned.
    """
    if target_papr_db <= 0:
        raise ConfigError("target_papr_db must be positive")
    x = np.asarray(w.samples, dtype=complex)
    p_in = np.mean(np.abs(x) ** 2)
    start = papr_db(x)
    ref = x if passband is None else _bandlimit(x, passband)
    if start <= target_papr_db:
        return CfrResult(w, start, 0, True, -200.0)

    best, best_papr, it = x, start, 0
    clip_db = target_papr_db
    y = x
    for it in range(1, max_iter + 1):
        thresh = np.sqrt(p_in * 10 ** (clip_db / 10))
        mag = np.abs(y)
        scale = np.minimum(1.0, thresh / np.maximum(mag, 1e-300))
        y = y * scale
        if passband is not None:
            y = _bandlimit(y, passband)
        y = y * np.sqrt(p_in / np.mean(np.abs(y) ** 2))
        cur = papr_db(y)
        if cur < best_papr:
            best, best_papr = y, cur
        if cur <= target_papr_db + tol_db / 2:
            break
        clip_db -= cur - target_papr_db

    reached = best_papr <= target_papr_db + tol_db
    if not reached:
        warnings.warn(f"CFR reached {best_papr:.2f} dB, target {target_papr_db:.2f} dB", RuntimeWarning)
    err = np.sum(np.abs(best - ref) ** 2) / np.sum(np.abs(ref) ** 2)
    nmse = float(10 * np.log10(err)) if err > 0 else -200.0
    return CfrResult(w.with_samples(best, label=w.label + "+cfr"), best_papr, it, reached, nmse)


@dataclass(frozen=True)
class NormStats:
    mean_i: float
    mean_q: float
    std_i: float
    std_q: float

    def __post_init__(self):
        if not (self.std_i > 0 and self.std_q > 0):
            raise ConfigError("normalization needs nonzero variance in both I and Q")


def fit_norm(w) -> NormStats:
    x = np.asarray(getattr(w, "samples", w))
    if x.size < 2:
        raise ConfigError("fit_norm needs at least two samples")
    i, q = x.real.astype(float), x.imag.astype(float)
    return NormStats(float(i.mean()), float(q.mean()), float(i.std()), float(q.std()))


def apply_norm(w, stats: NormStats):
    x = np.asarray(getattr(w, "samples", w))
    y = (x.real - stats.mean_i) / stats.std_i + 1j * ((x.imag - stats.mean_q) / stats.std_q)
    y = y.astype(np.result_type(x.dtype, np.complex64))
    return w.with_samples(y) if isinstance(w, Waveform) else y


def invert_norm(w, stats: NormStats):
    x = np.asarray(getattr(w, "samples", w))
    y = (x.real * stats.std_i + stats.mean_i) + 1j * (x.imag * stats.std_q + stats.mean_q)
    y = y.astype(np.result_type(x.dtype, np.complex64))
    return w.with_samples(y) if isinstance(w, Waveform) else y


def to_iq(x: np.ndarray) -> np.ndarray:
    """Complex array (...,) -> real array (..., 2) of (I, Q)."""
    return np.stack([x.real, x.imag], axis=-1)


def from_iq(iq: np.ndarray) -> np.ndarray:
    return iq[..., 0] + 1j * iq[..., 1]
