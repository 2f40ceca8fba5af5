"""Plain ``key=value`` run configuration.

One key per line, ``#`` starts a comment.  Every key has a typed default
below; unknown keys are rejected.  Each command archives the fully resolved
configuration next to its outputs.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .dut import SynthDutSpec
from .errors import ConfigError, UnreadableFileError
from .nn_core import ModelSpec
from .poly import MpSpec
from .signal import OfdmPlan
from .train import TrainConfig

DEFAULTS: dict[str, object] = {
    "seed": 0,
    "precision": "f32",
    "deterministic": False,
    # signal
    "signal.fft_size": 256,
    "signal.active_subcarriers": 128,
    "signal.cp_len": 16,
    "signal.num_symbols": 74,
    "signal.qam_order": 256,
    "signal.oversample": 2,
    "signal.sample_rate_hz": 800e6,
    "signal.target_papr_db": 8.5,
    "signal.cfr": True,
    # synthetic DUT
    "dut.pre_fir": "1, 0.10-0.05j, 0.02j",
    "dut.post_fir": "1, -0.08+0.03j",
    "dut.saleh_alpha_a": 2.0,
    "dut.saleh_beta_a": 1.0,
    "dut.saleh_alpha_p": math.pi / 3,
    "dut.saleh_beta_p": 1.0,
    "dut.noise_dbc": -80.0,
    "dut.drive_mean_modulus": 0.5,
    # dataset split
    "split.train": 0.8,
    "split.val": 0.1,
    "split.test": 0.1,
    # model
    "model.family": "aclstm",
    "model.hidden": 8,
    "model.layers": 1,
    "model.film_hidden": 4,
    "model.film_site": "candidate",
    "model.amp_source": "raw",
    "model.memory_depth": 4,
    "model.poly_order": 3,
    "model.mp_memory": 4,
    "model.mp_order": 9,
    "model.mp_odd_only": False,
    "model.gmp_lagging": "1,2",
    "model.gmp_leading": "",
    "model.gmp_cross_memory": 2,
    "model.gmp_cross_orders": "3,5,7",
    # training
    "train.epochs": 200,
    "train.batch_size": 256,
    "train.window_len": 64,
    "train.burn_in": 16,
    "train.lr0": 1e-3,
    "train.plateau_factor": 0.5,
    "train.plateau_patience": 10,
    "train.plateau_threshold": 1e-7,
    "train.min_lr": 1e-5,
    "train.adam_beta1": 0.9,
    "train.adam_beta2": 0.999,
    "train.adam_eps": 1e-8,
    "train.checkpoint_every": 0,
    # metrics
    "metrics.segment_len": 1024,
    "metrics.overlap": 0.5,
    "metrics.window": "hann",
    # gradient check
    "gradcheck.tolerance": 1e-6,
    "gradcheck.seeds": 5,
    "gradcheck.corrupt": False,
    # files, relative to --out unless absolute
    "paths.excitation": "excitation.iqf",
    "paths.plan": "plan.txt",
    "paths.dut_input": "dut_input.iqf",
    "paths.measured": "measured.iqf",
    "paths.meta": "dataset.meta",
    "paths.weights": "weights.acw",
    "paths.history": "history.csv",
    "paths.metrics": "metrics.csv",
}


def _coerce(key: str, text: str):
    default = DEFAULTS[key]
    t = text.strip()
    try:
        if isinstance(default, bool):
            if t.lower() in ("1", "true", "yes", "on"):
                return True
            if t.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(t)
        if isinstance(default, int):
            return int(t)
        if isinstance(default, float):
            return float(t)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {type(default).__name__}") from None
    return t


class RunConfig(dict):
    """Resolved configuration: DEFAULTS overlaid with file and command-line values.

    ``explicit`` records the keys given by a file or override rather than defaulted.
    """

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        self.explicit: set[str] = set()

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        cfg = cls(DEFAULTS)
        if path is not None:
            try:
                text = Path(path).read_text()
            except OSError as exc:
                raise UnreadableFileError(f"cannot read config {path}: {exc}") from exc
            cfg.update_text(text)
        for k, v in (overrides or {}).items():
            cfg.set(k, v)
        return cfg

    def set(self, key, value):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key: {key}")
        self[key] = _coerce(key, value) if isinstance(value, str) else value
        self.explicit.add(key)

    def update_text(self, text: str):
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {n}: expected key=value, got {line!r}")
            k, _, v = line.partition("=")
            self.set(k.strip(), v)

    def dump(self) -> str:
        return "".join(f"{k}={self[k]!r}\n" if isinstance(self[k], float) else f"{k}={self[k]}\n"
                       for k in DEFAULTS)

    # -- typed views ------------------------------------------------------------

    def plan(self) -> OfdmPlan:
        return OfdmPlan(self["signal.fft_size"], self["signal.active_subcarriers"], self["signal.cp_len"],
                        self["signal.num_symbols"], self["signal.qam_order"], stream_seed(self["seed"], "signal"))

    def dut(self) -> SynthDutSpec:
        return SynthDutSpec(
            parse_complex_list(self["dut.pre_fir"]), self["dut.saleh_alpha_a"], self["dut.saleh_beta_a"],
            self["dut.saleh_alpha_p"], self["dut.saleh_beta_p"], parse_complex_list(self["dut.post_fir"]),
            self["dut.noise_dbc"])

    def fractions(self):
        return self["split.train"], self["split.val"], self["split.test"]

    def model_spec(self) -> ModelSpec:
        return ModelSpec(self["model.family"], self["model.hidden"], self["model.layers"],
                         self["model.film_hidden"], self["model.film_site"], self["model.amp_source"],
                         self["model.memory_depth"], self["model.poly_order"])

    def poly_spec(self) -> MpSpec:
        fam = self["model.family"]
        base = dict(memory_depth=self["model.mp_memory"], order=self["model.mp_order"],
                    odd_only=self["model.mp_odd_only"])
        if fam == "mp":
            return MpSpec(**base)
        if fam == "gmp":
            return MpSpec(**base, lagging=_ints(self["model.gmp_lagging"]), leading=_ints(self["model.gmp_leading"]),
                          cross_memory=self["model.gmp_cross_memory"],
                          cross_orders=_ints(self["model.gmp_cross_orders"]))
        raise ConfigError(f"model.family={fam} is not polynomial")

    def train_config(self) -> TrainConfig:
        kw = {k.split(".", 1)[1]: self[k] for k in DEFAULTS
              if k.startswith("train.") and k != "train.checkpoint_every"}
        return TrainConfig(seed=stream_seed(self["seed"], "init"), precision=self["precision"], **kw)


STREAMS = {"signal": 1, "init": 2, "shuffle": 3, "noise": 4}


def stream_seed(seed: int, stream: str) -> int:
    """Independent integer seed for one named random sub-stream."""
    return int(np.random.SeedSequence([seed, STREAMS[stream]]).generate_state(1)[0])


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v)


def parse_complex_list(text: str) -> tuple:
    try:
        return tuple(complex(v.replace(" ", "")) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"cannot parse complex tap list {text!r}") from None
