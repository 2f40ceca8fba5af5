"""End-to-end steps shared by the command line and the experiment scripts."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .config import RunConfig, stream_seed
from .dut import Dataset, drive_scale, make_dataset, synth_dut_forward
from .errors import ConfigError, UnreadableFileError
from .metrics import ChannelMask, MetricsReport, metrics_report
from .nn_core import NetworkParams, param_count
from .poly import MpSpec, mp_predict
from .signal import CfrResult, OfdmPlan, Waveform, crest_factor_reduce, from_iq, generate_ofdm, invert_norm, qam_grid
from .train import TrainConfig, evaluate_split

log = logging.getLogger(__name__)


def excitation(cfg: RunConfig) -> tuple[Waveform, OfdmPlan, CfrResult | None]:
    """OFDM excitation, crest-factor reduced inside the main channel when enabled."""
    os_ = cfg["signal.oversample"]
    w, plan = generate_ofdm(cfg.plan(), os_, cfg["signal.sample_rate_hz"])
    if not cfg["signal.cfr"]:
        return w, plan, None
    mask = ChannelMask.for_plan(plan, os_)
    lo, hi = mask.band("main")
    res = crest_factor_reduce(w, cfg["signal.target_papr_db"], passband=hi - lo)
    return res.waveform, plan, res


def capture(cfg: RunConfig, x: Waveform) -> tuple[Waveform, Waveform]:
    """Scale ``x`` to the configured drive level and pass it through the synthetic DUT.

    Returns (DUT input, DUT output).
    """
    spec = cfg.dut()
    xs = x.with_samples(np.asarray(x.samples) * drive_scale(x, spec, cfg["dut.drive_mean_modulus"]),
                        label="dut_input")
    y = synth_dut_forward(spec, xs, stream_seed(cfg["seed"], "noise"))
    return xs, y


def desk_dataset(cfg: RunConfig) -> tuple[Dataset, OfdmPlan]:
    """In-memory excitation + capture + split, without touching the disk."""
    x, plan, _ = excitation(cfg)
    xs, y = capture(cfg, x)
    return make_dataset(xs, y, cfg.fractions()), plan


def predict_test(model, ds: Dataset, tcfg: TrainConfig | None = None) -> np.ndarray:
    """De-normalized model output over the test split.

    ``model`` is NetworkParams or an (MpSpec, coeffs) pair.  Polynomial models
    see the full input record so their memory taps are filled at the split edge.
    """
    lo, hi = ds.bounds("test")
    if isinstance(model, NetworkParams):
        tcfg = tcfg or TrainConfig()
        pred, _ = evaluate_split(model, ds, "test", tcfg)
        return invert_norm(from_iq(pred.astype(float)), ds.norm_out)
    spec, coeffs = model
    if not isinstance(spec, MpSpec):
        raise ConfigError(f"cannot evaluate model of type {type(spec).__name__}")
    full = np.concatenate([ds.block(p) for p in ("train", "val", "test")])
    return mp_predict(full, spec, coeffs)[lo:hi]


def model_params(model) -> int:
    if isinstance(model, NetworkParams):
        return param_count(model.spec)
    return 2 * model[0].n_coeffs


def evaluate(model, ds: Dataset, plan: OfdmPlan | None, cfg: RunConfig, name: str) -> MetricsReport:
    os_ = cfg["signal.oversample"]
    mask = ChannelMask.for_plan(plan if plan is not None else cfg.plan(), os_)
    out = predict_test(model, ds, cfg.train_config())
    return metrics_report(ds, out, plan, mask, os_, name, model_params(model), cfg["metrics.segment_len"])


# -- plan files -------------------------------------------------------------------
# key=value lines, then one line per OFDM symbol with the QAM grid index of
# every active subcarrier.  Plain text keeps repeated runs byte-identical.

_PLAN_KEYS = ("fft_size", "active_subcarriers", "cp_len", "num_symbols", "qam_order", "seed")


def save_plan(path, plan: OfdmPlan, oversample: int) -> None:
    plan = plan.with_symbols()
    grid = qam_grid(plan.qam_order)
    idx = np.argmin(np.abs(plan.subcarrier_symbols[..., None] - grid), axis=-1)
    lines = [f"{k}={getattr(plan, k)}" for k in _PLAN_KEYS] + [f"oversample={oversample}", "symbols"]
    lines += [" ".join(map(str, row)) for row in idx]
    Path(path).write_text("\n".join(lines) + "\n")


def load_plan(path) -> tuple[OfdmPlan, int]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UnreadableFileError(f"cannot read plan {path}: {exc}") from exc
    head, sep, body = text.partition("symbols\n")
    if not sep:
        raise UnreadableFileError(f"{path}: missing symbol table")
    kv = dict(line.split("=", 1) for line in head.splitlines() if "=" in line)
    try:
        plan = OfdmPlan(*(int(kv[k]) for k in _PLAN_KEYS))
        idx = np.array([[int(v) for v in row.split()] for row in body.splitlines() if row.strip()])
        oversample = int(kv["oversample"])
    except (KeyError, ValueError) as exc:
        raise UnreadableFileError(f"{path}: malformed plan file ({exc})") from None
    grid = qam_grid(plan.qam_order)
    if idx.shape != (plan.num_symbols, plan.active_subcarriers) or idx.min() < 0 or idx.max() >= len(grid):
        raise UnreadableFileError(f"{path}: symbol table does not match the plan")
    plan.subcarrier_symbols = grid[idx]
    return plan, oversample
