"""Batch command line: gen, capture, train, eval, gradcheck.

Every command reads ``--config`` (key=value), applies ``--seed``,
``--precision`` and ``--set KEY=VALUE`` overrides, writes its outputs under
``--out`` and archives the resolved configuration there as ``<command>.config``.

Exit codes: 0 success, 1 gradient check failed, 2 configuration error,
3 numeric failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from pathlib import Path

from .config import RunConfig, stream_seed
from .dut import Dataset, load_dataset_from_meta, make_dataset, write_meta
from .errors import ConfigError, DomainError, FileFormatError, NumericError
from .iqf import read_iqf, write_iqf
from .metrics import ChannelMask, MetricsReport, metrics_report, welch_psd
from .nn_core import ModelSpec, param_count
from .pipeline import capture, excitation, load_plan, model_params, predict_test, save_plan
from .poly import mp_fit
from .signal import papr_db
from .train import grad_check, history_csv, train
from .weights import load_network, load_poly, save_network, save_poly

log = logging.getLogger("aclstm")

NEURAL = ("aclstm", "lstm", "arvtdnn")
POLY = ("mp", "gmp")


class Run:
    """Resolved config plus output-directory helpers for one command."""

    def __init__(self, cfg: RunConfig, out: Path, command: str):
        self.cfg, self.out, self.command = cfg, out, command
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{command}.config").write_text(cfg.dump())

    def path(self, key: str) -> Path:
        p = Path(self.cfg[key])
        return p if p.is_absolute() else self.out / p

    def dataset(self) -> Dataset:
        return load_dataset_from_meta(self.path("paths.meta"), self.cfg.fractions())


def cmd_gen(run: Run) -> int:
    cfg = run.cfg
    w, plan, res = excitation(cfg)
    write_iqf(run.path("paths.excitation"), w)
    save_plan(run.path("paths.plan"), plan, cfg["signal.oversample"])
    print(f"samples {len(w)}  PAPR {papr_db(w):.2f} dB" +
          (f"  (CFR {res.iterations} iterations, in-band NMSE {res.inband_nmse_db:.1f} dB)" if res else ""))
    return 0


def cmd_capture(run: Run) -> int:
    x = read_iqf(run.path("paths.excitation"))
    xs, y = capture(run.cfg, x)
    write_iqf(run.path("paths.dut_input"), xs)
    write_iqf(run.path("paths.measured"), y)
    # reload so the split statistics come from the stored float32 samples
    ds = make_dataset(read_iqf(run.path("paths.dut_input")), read_iqf(run.path("paths.measured")),
                      run.cfg.fractions())
    meta = run.path("paths.meta")
    write_meta(meta, ds, _rel(run.path("paths.dut_input"), meta), _rel(run.path("paths.measured"), meta))
    print(f"captured {len(ds)} samples, split at {ds.split_bounds}")
    return 0


def _rel(p: Path, meta: Path) -> str:
    try:
        return str(p.relative_to(meta.parent))
    except ValueError:
        return str(p.resolve())


def cmd_train(run: Run) -> int:
    cfg = run.cfg
    ds = run.dataset()
    fam = cfg["model.family"]
    weights = run.path("paths.weights")
    if fam in POLY:
        spec = cfg.poly_spec()
        fit = mp_fit(ds.block("train"), ds.block("train", "output"), spec)
        save_poly(weights, spec, fit.coeffs)
        print(f"{fam}: {spec.n_coeffs} coefficients, rank {fit.rank}, "
              f"train residual NMSE {fit.residual_nmse_db:.2f} dB")
        return 0
    if fam not in NEURAL:
        raise ConfigError(f"unknown model.family {fam!r}")
    spec = cfg.model_spec()
    tcfg = cfg.train_config()
    every = cfg["train.checkpoint_every"]
    history_path = run.path("paths.history")

    def checkpoint(epoch, params, history):
        log.info("epoch %d  train %.3e  val %.3e  lr %.1e", epoch, history[-1].train_mse,
                 history[-1].val_mse, history[-1].lr)
        if every and epoch % every == 0:
            save_network(weights.with_name(f"{weights.stem}.epoch{epoch:04d}{weights.suffix}"),
                         params, ds.norm_in, ds.norm_out, cfg["seed"])
            history_path.write_text(history_csv(history))

    try:
        params, history = train(spec, ds, tcfg, callback=checkpoint)
    except NumericError as exc:
        hist = getattr(exc, "history", None)
        if hist:
            history_path.write_text(history_csv(hist))
        raise
    save_network(weights, params, ds.norm_in, ds.norm_out, cfg["seed"])
    history_path.write_text(history_csv(history))
    best = min((r.val_mse for r in history), default=float("nan"))
    print(f"{fam}: {param_count(spec)} parameters, {len(history)} epochs, best val MSE {best:.4e}")
    return 0


def _load_model(path: Path):
    with path.open("rb") as fh:
        head = fh.read(256)
    if b"model=mp\n" in head or b"model=gmp\n" in head:
        return load_poly(path), None
    params, _, _, header = load_network(path)
    return params, header


def cmd_eval(run: Run, weights: str | None) -> int:
    cfg = run.cfg
    ds = run.dataset()
    plan_path = run.path("paths.plan")
    plan = load_plan(plan_path)[0] if plan_path.exists() else None
    os_ = cfg["signal.oversample"]
    mask = ChannelMask.for_plan(plan if plan is not None else cfg.plan(), os_)
    seg = cfg["metrics.segment_len"]
    measured = ds.block("test", "output")
    rows = [metrics_report(ds, measured, plan, mask, os_, "measured", 0, seg)]
    if weights == "identity":
        out, name, n_params = measured, "identity", 0
    else:
        model, header = _load_model(Path(weights) if weights else run.path("paths.weights"))
        name = header["model"] if header else model[0].kind
        out, n_params = predict_test(model, ds, cfg.train_config()), model_params(model)
    rows.append(metrics_report(ds, out, plan, mask, os_, name, n_params, seg))
    run.path("paths.metrics").write_text(
        MetricsReport.HEADER + "\n" + "".join(r.csv_row() + "\n" for r in rows))
    win, ov = cfg["metrics.window"], cfg["metrics.overlap"]
    seg = min(seg, 1 << (len(measured).bit_length() - 1))
    (run.out / "psd_measured.csv").write_text(welch_psd(measured, seg, ov, win).csv())
    (run.out / f"psd_{name}.csv").write_text(welch_psd(out, seg, ov, win).csv())
    for r in rows:
        print(r.text())
    return 0


def cmd_gradcheck(run: Run) -> int:
    cfg = run.cfg
    if "precision" in cfg.explicit and cfg["precision"] != "f64":
        raise ConfigError("gradcheck runs in f64 only; finite differences are meaningless in f32")
    specs = [ModelSpec(fam, hidden=4, layers=layers, film_hidden=3, film_site=site, memory_depth=2, poly_order=3)
             for layers in (1, 2)
             for fam, site in (("aclstm", "candidate"), ("aclstm", "forget"), ("lstm", "candidate"))]
    specs.append(ModelSpec("arvtdnn", hidden=4, memory_depth=2, poly_order=3))
    lines, ok = [], True
    for spec in specs:
        for k in range(cfg["gradcheck.seeds"]):
            rep = grad_check(spec, stream_seed(cfg["seed"], "init") + k, cfg["gradcheck.tolerance"],
                             corrupt=cfg["gradcheck.corrupt"])
            line = f"layers={spec.layers} " + rep.line()
            lines.append(line)
            print(line)
            ok &= rep.passed
    lines.append("PASS" if ok else "FAIL")
    (run.out / "gradcheck.txt").write_text("\n".join(lines) + "\n")
    print(lines[-1])
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key=value configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--precision", choices=("f32", "f64"))
    common.add_argument("--deterministic", action="store_true",
                        help="single-threaded numerics for bit-exact reruns")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    common.add_argument("-v", "--verbose", action="count", default=0)
    ap = argparse.ArgumentParser(prog="aclstm", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="generate the OFDM excitation")
    sub.add_parser("capture", parents=[common], help="run the synthetic DUT and write the dataset")
    sub.add_parser("train", parents=[common], help="train or fit the configured model")
    ev = sub.add_parser("eval", parents=[common], help="test-split metrics and PSD curves")
    ev.add_argument("--weights", help="weights file, or 'identity' to score the measured output itself")
    sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    return ap


def resolve_config(args) -> RunConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, _, v = item.partition("=")
        overrides[k.strip()] = v
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.precision is not None:
        overrides["precision"] = args.precision
    if args.deterministic:
        overrides["deterministic"] = "true"
    return RunConfig.load(args.config, overrides)


def _dispatch(args) -> int:
    cfg = resolve_config(args)
    run = Run(cfg, args.out, args.command)
    if args.command == "gen":
        return cmd_gen(run)
    if args.command == "capture":
        return cmd_capture(run)
    if args.command == "train":
        return cmd_train(run)
    if args.command == "eval":
        return cmd_eval(run, args.weights)
    return cmd_gradcheck(run)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        with _single_thread() if args.deterministic else contextlib.nullcontext():
            return _dispatch(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, DomainError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (FileFormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4


def _single_thread():
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=1)


if __name__ == "__main__":
    sys.exit(main())
