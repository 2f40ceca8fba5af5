"""Scaled-down AC-LSTM vs LSTM vs memory-polynomial comparison.

One synthetic dataset (fixed signal seed), several training seeds per neural
model, one least-squares MP fit.  Everything runs in memory.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .config import RunConfig, stream_seed
from .metrics import ChannelMask, acpr_db, nmse_db, welch_psd
from .nn_core import ModelSpec, param_count
from .pipeline import desk_dataset, predict_test
from .poly import MpSpec, mp_fit
from .signal import papr_db
from .train import TrainConfig, train

log = logging.getLogger(__name__)


def matched_hidden(target: int, family: str = "lstm", layers: int = 1, search=range(1, 65)) -> int:
    """Hidden width whose parameter count is closest to ``target``."""
    return min(search, key=lambda h: abs(param_count(ModelSpec(family, hidden=h, layers=layers)) - target))


@dataclass
class DeskConfig:
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    data_seed: int = 0
    aclstm_hidden: int = 8
    film_hidden: int = 4
    # 100 epochs over a 32k-sample train block; small batches of short windows
    # give enough optimizer steps in that budget
    train: TrainConfig = field(default_factory=lambda: TrainConfig(
        epochs=100, batch_size=2, window_len=16, burn_in=8, lr0=1e-3, precision="f32"))
    mp: MpSpec = field(default_factory=lambda: MpSpec(memory_depth=4, order=9))
    segment_len: int = 1024


@dataclass
class ModelRun:
    family: str
    seed: int
    params: int
    nmse_db: float
    acpr_db: float
    seconds: float


@dataclass
class DeskResult:
    papr_db: float
    n_samples: int
    measured_acpr_db: float
    mp_nmse_db: float
    mp_acpr_db: float
    runs: list[ModelRun]

    def nmse(self, family: str) -> np.ndarray:
        return np.array([r.nmse_db for r in self.runs if r.family == family])

    def median(self, family: str) -> float:
        return float(np.median(self.nmse(family)))

    def table(self) -> str:
        lines = [f"dataset: {self.n_samples} samples, PAPR {self.papr_db:.2f} dB, "
                 f"measured ACPR {self.measured_acpr_db:.2f} dB",
                 f"{'mp':>8s}  NMSE {self.mp_nmse_db:7.2f} dB  ACPR {self.mp_acpr_db:7.2f} dB"]
        lines += [f"{r.family:>8s}  seed {r.seed}  NMSE {r.nmse_db:7.2f} dB  ACPR {r.acpr_db:7.2f} dB  "
                  f"params {r.params}  {r.seconds:5.1f} s" for r in self.runs]
        for fam in ("aclstm", "lstm"):
            if len(self.nmse(fam)):
                lines.append(f"{fam:>8s}  median NMSE {self.median(fam):.2f} dB")
        return "\n".join(lines)


def run_desk(dcfg: DeskConfig | None = None, progress=None) -> DeskResult:
    dcfg = dcfg or DeskConfig()
    cfg = RunConfig.load(overrides={"seed": str(dcfg.data_seed)})
    ds, plan = desk_dataset(cfg)
    os_ = cfg["signal.oversample"]
    mask = ChannelMask.for_plan(plan, os_)
    measured = ds.block("test", "output")

    def acpr(x):
        return acpr_db(welch_psd(x, dcfg.segment_len), mask)[2]

    fit = mp_fit(ds.block("train"), ds.block("train", "output"), dcfg.mp)
    mp_out = predict_test((dcfg.mp, fit.coeffs), ds)
    full_input = np.concatenate([ds.block(p) for p in ("train", "val", "test")])
    result = DeskResult(papr_db(full_input), len(ds), acpr(measured), nmse_db(measured, mp_out), acpr(mp_out), [])

    ac_spec = ModelSpec("aclstm", hidden=dcfg.aclstm_hidden, film_hidden=dcfg.film_hidden)
    lstm_spec = ModelSpec("lstm", hidden=matched_hidden(param_count(ac_spec)))
    for seed in dcfg.seeds:
        for spec in (ac_spec, lstm_spec):
            tcfg = replace(dcfg.train, seed=stream_seed(seed, "init"))
            t0 = time.perf_counter()
            params, _ = train(spec, ds, tcfg)
            out = predict_test(params, ds, tcfg)
            run = ModelRun(spec.family, seed, param_count(spec), nmse_db(measured, out), acpr(out),
                           time.perf_counter() - t0)
            result.runs.append(run)
            log.info("%s seed %d: NMSE %.2f dB", spec.family, seed, run.nmse_db)
            if progress is not None:
                progress(run)
    return result

