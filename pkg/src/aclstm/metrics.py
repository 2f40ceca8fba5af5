"""NMSE, software-measured ACPR over a Welch PSD, RMS EVM and the combined report."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import ConfigError, DomainError
from .signal import OfdmPlan, active_bins, papr_db

DB_FLOOR = -200.0


def _db(ratio: float) -> float:
    return float(max(10 * np.log10(ratio), DB_FLOOR)) if ratio > 0 else DB_FLOOR


def _samples(w):
    return np.asarray(getattr(w, "samples", w))


def nmse_db(y, y_hat) -> float:
    y, y_hat = _samples(y), _samples(y_hat)
    if y.shape != y_hat.shape:
        raise ConfigError(f"length mismatch {y.shape} vs {y_hat.shape}")
    ref = np.sum(y.real.astype(float) ** 2 + y.imag.astype(float) ** 2)
    if ref == 0:
        raise DomainError("NMSE reference has zero energy")
    d = y.astype(complex) - y_hat.astype(complex)
    return _db(np.sum(d.real ** 2 + d.imag ** 2) / ref)


@dataclass
class PsdEstimate:
    freqs: np.ndarray  # cycles/sample, DC-centered, ascending
    power: np.ndarray  # linear density; sum(power) * df = mean power
    segment_len: int
    overlap: int
    window_kind: str

    @property
    def df(self) -> float:
        return 1.0 / self.segment_len

    def csv(self) -> str:
        db = 10 * np.log10(np.maximum(self.power, 1e-20))
        lines = ["freq_norm,psd_db"] + [f"{f:.8f},{p:.6f}" for f, p in zip(self.freqs, db)]
        return "\n".join(lines) + "\n"


def welch_psd(w, segment_len: int = 1024, overlap_frac: float = 0.5, window_kind: str = "hann") -> PsdEstimate:
    x = _samples(w).astype(complex)
    if segment_len < 1 or segment_len & (segment_len - 1):
        raise ConfigError(f"segment_len must be a power of two, got {segment_len}")
    if segment_len > len(x):
        raise ConfigError(f"segment_len {segment_len} exceeds signal length {len(x)}")
    if not 0 <= overlap_frac < 1:
        raise ConfigError("overlap_frac must lie in [0, 1)")
    win = "boxcar" if window_kind in ("rect", "rectangular", "boxcar") else window_kind
    noverlap = int(segment_len * overlap_frac)
    f, p = sps.welch(x, fs=1.0, window=win, nperseg=segment_len, noverlap=noverlap,
                     detrend=False, return_onesided=False, scaling="density")
    return PsdEstimate(np.fft.fftshift(f), np.fft.fftshift(p), segment_len, noverlap, window_kind)


@dataclass(frozen=True)
class ChannelMask:
    main_band: tuple[float, float]
    adj_offset: float
    adj_bandwidth: float

    def __post_init__(self):
        lo, hi = self.main_band
        c = (lo + hi) / 2
        bands = [self.band("lower"), (lo, hi), self.band("upper")]
        if not lo < hi or self.adj_bandwidth <= 0:
            raise ConfigError("bands must have positive width")
        if bands[0][0] < -0.5 or bands[2][1] > 0.5:
            raise ConfigError("adjacent bands exceed the Nyquist range")
        if bands[0][1] > lo + 1e-12 or bands[2][0] < hi - 1e-12:
            raise ConfigError(f"adjacent bands overlap the main band (center {c})")

    def band(self, which: str) -> tuple[float, float]:
        lo, hi = self.main_band
        if which == "main":
            return lo, hi
        c = (lo + hi) / 2 + (self.adj_offset if which == "upper" else -self.adj_offset)
        return c - self.adj_bandwidth / 2, c + self.adj_bandwidth / 2

    @classmethod
    def for_plan(cls, plan: OfdmPlan, oversample: int) -> "ChannelMask":
        """Main band: the active subcarriers plus one spacing of guard per side.

        Adjacent channels are contiguous and equally wide.
        """
        bw = (plan.active_subcarriers + 2) / (plan.fft_size * oversample)
        return cls((-bw / 2, bw / 2), bw, bw)


def band_power(freqs, power, band) -> float:
    lo, hi = band
    # open interval: a bin sitting exactly on an edge belongs to neither band
    sel = (freqs > lo) & (freqs < hi)
    if not sel.any():
        raise ConfigError(f"band {band} contains no frequency bins")
    return float(np.sum(power[sel]))


def acpr_db(psd: PsdEstimate, mask: ChannelMask) -> tuple[float, float, float]:
    """(lower, upper, combined) adjacent/main power ratios in dB.

    Combined is the mean of the two linear ratios.
    """
    p_main = band_power(psd.freqs, psd.power, mask.band("main"))
    if p_main == 0:
        raise DomainError("no power in the main channel")
    lo = band_power(psd.freqs, psd.power, mask.band("lower")) / p_main
    hi = band_power(psd.freqs, psd.power, mask.band("upper")) / p_main
    return _db(lo), _db(hi), _db((lo + hi) / 2)


def evm_rms_percent(demod_syms, ideal_syms) -> float:
    d = np.asarray(demod_syms, dtype=complex)
    ref = np.asarray(ideal_syms, dtype=complex)
    if d.shape != ref.shape:
        raise ConfigError(f"shape mismatch {d.shape} vs {ref.shape}")
    s_ref = np.sum(ref.real ** 2 + ref.imag ** 2)
    if s_ref == 0:
        raise DomainError("ideal symbols have zero energy")
    e = d - ref
    return float(100 * np.sqrt(np.sum(e.real ** 2 + e.imag ** 2) / s_ref))


def demod_segment(x, plan: OfdmPlan, oversample: int, start: int = 0):
    """Demodulate every OFDM symbol lying wholly inside a segment.

    ``start`` is the index of the segment's first sample within the frame.
    Returns (received symbols after single-gain LS equalization, symbol indices).
    """
    if plan.subcarrier_symbols is None:
        raise ConfigError("plan carries no symbols")
    x = _samples(x).astype(complex)
    L = plan.symbol_len(oversample)
    cp = plan.cp_len * oversample
    nfft = plan.fft_size * oversample
    first = -(-start // L)
    last = min((start + len(x)) // L, plan.num_symbols)
    idx = np.arange(first, last)
    if len(idx) == 0:
        raise ConfigError("segment holds no complete OFDM symbol")
    offs = idx * L - start + cp
    body = x[offs[:, None] + np.arange(nfft)[None, :]]
    rx = np.fft.fft(body, axis=1)[:, active_bins(plan.active_subcarriers, nfft)]
    ideal = plan.subcarrier_symbols[idx]
    gain = np.vdot(ideal, rx) / np.vdot(ideal, ideal)
    if gain == 0:
        raise DomainError("received symbols are orthogonal to the ideal ones")
    return rx / gain, idx


def ofdm_demod(w, plan: OfdmPlan, oversample: int = 2) -> np.ndarray:
    n = len(_samples(w))
    if n != plan.num_symbols * plan.symbol_len(oversample):
        raise ConfigError(f"waveform length {n} does not match the plan geometry")
    syms, _ = demod_segment(w, plan, oversample)
    return syms


@dataclass
class MetricsReport:
    model: str
    nmse_db: float
    acpr_lo_db: float
    acpr_hi_db: float
    acpr_db: float
    evm_pct: float
    papr_db: float
    params: int

    HEADER = "model,nmse_db,acpr_lo_db,acpr_hi_db,acpr_db,evm_pct,papr_db,params"

    def csv_row(self) -> str:
        return (f"{self.model},{self.nmse_db:.4f},{self.acpr_lo_db:.4f},{self.acpr_hi_db:.4f},"
                f"{self.acpr_db:.4f},{self.evm_pct:.4f},{self.papr_db:.4f},{self.params}")

    def text(self) -> str:
        return (f"{self.model:>10s}  NMSE {self.nmse_db:8.2f} dB  ACPR {self.acpr_db:7.2f} dB "
                f"(L {self.acpr_lo_db:.2f} / U {self.acpr_hi_db:.2f})  EVM {self.evm_pct:6.2f} %  "
                f"PAPR {self.papr_db:5.2f} dB  params {self.params}")


def metrics_report(ds, model_output, plan: OfdmPlan | None, mask: ChannelMask, oversample: int = 2,
                   name: str = "model", params: int = 0, segment_len: int = 1024) -> MetricsReport:
    """Metrics of a de-normalized model output aligned with the dataset's TEST split."""
    measured = ds.block("test", "output")
    out = _samples(model_output)
    if len(out) != len(measured):
        raise ConfigError(f"model output has {len(out)} samples, test split has {len(measured)}")
    nmse = nmse_db(measured, out)
    nan = float("nan")
    if not np.any(out):
        # spectral and constellation metrics are undefined for a silent output
        return MetricsReport(name, nmse, nan, nan, nan, nan, nan, params)
    seg = min(segment_len, 1 << (len(out).bit_length() - 1))
    lo, hi, comb = acpr_db(welch_psd(out, seg), mask)
    evm = nan
    if plan is not None and plan.subcarrier_symbols is not None:
        rx, idx = demod_segment(out, plan, oversample, ds.bounds("test")[0])
        evm = evm_rms_percent(rx, plan.subcarrier_symbols[idx])
    return MetricsReport(name, nmse, lo, hi, comb, evm, papr_db(out), params)
