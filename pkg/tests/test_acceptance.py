"""Acceptance criteria, each at its stated tolerance and time budget.

Every test records one PASS/FAIL line, repeated in the terminal summary.
The desk experiment takes about ten minutes on one core.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from aclstm.cli import main
from aclstm.config import RunConfig
from aclstm.experiment import DeskConfig, run_desk
from aclstm.metrics import (
    DB_FLOOR,
    ChannelMask,
    PsdEstimate,
    acpr_db,
    evm_rms_percent,
    nmse_db,
    ofdm_demod,
    welch_psd,
)
from aclstm.nn_core import ModelSpec, forward_batch, init_params, param_count
from aclstm.pipeline import desk_dataset
from aclstm.poly import MpSpec, mp_fit, mp_predict
from aclstm.signal import OfdmPlan, fit_norm, generate_ofdm
from aclstm.train import TrainConfig, backward, train
from guards import GuardedDataset


# -- 1. gradient exactness --------------------------------------------------------------------------


def test_c1_gradient_exactness(tmp_path, criterion):
    t0 = time.perf_counter()
    code = main(["gradcheck", "--out", str(tmp_path)])
    dt = time.perf_counter() - t0
    lines = (tmp_path / "gradcheck.txt").read_text().splitlines()
    worst = max(float(line.split("max_rel_err=")[1].split()[0]) for line in lines[:-1])
    families = {line.split()[2] for line in lines[:-1]}
    ok = (code == 0 and lines[-1] == "PASS" and len(lines) == 36 and worst < 1e-6 and dt < 30
          and families == {"aclstm/candidate", "aclstm/forget", "lstm", "arvtdnn"})
    criterion("1 gradient exactness", ok, f"5 seeds x 7 models, worst rel err {worst:.2e}, {dt:.1f} s")


# -- 2. neutral FiLM equivalence -------------------------------------------------------------------------


def test_c2_neutral_film_equivalence(criterion):
    t0 = time.perf_counter()
    H, layers = 8, 2
    ac = init_params(ModelSpec("aclstm", hidden=H, layers=layers, film_hidden=4), 11)
    ls = init_params(ModelSpec("lstm", hidden=H, layers=layers), 0)
    rng = np.random.default_rng(12)
    for name in ls.arrays:
        ac.arrays[name][...] += 0.3 * rng.standard_normal(ac[name].shape)
        ls.arrays[name][...] = ac[name]
    for k in range(layers):
        ac.arrays[f"layer{k}.film.w2"][:] = 0
        ac.arrays[f"layer{k}.film.b2"][:] = np.r_[np.ones(H), np.zeros(H)]
    x = rng.standard_normal((2, 256, 2))
    a = np.hypot(x[..., 0], x[..., 1])
    t = rng.standard_normal((2, 256, 2))
    fwd = np.abs(forward_batch(ac, x, a)[0] - forward_batch(ls, x, a)[0]).max()
    ga, gl = backward(ac, x, t, a)[1], backward(ls, x, t, a)[1]
    bwd = max(np.abs(ga[n] - gl[n]).max() for n in gl)
    dt = time.perf_counter() - t0
    ok = fwd <= 1e-12 and bwd <= 1e-10 and dt < 5
    criterion("2 neutral-FiLM equivalence", ok, f"forward {fwd:.1e}, backward {bwd:.1e}, {dt:.2f} s")


# -- 3. metric oracles -------------------------------------------------------------------------------------


def _fft_band_acpr(x, mask):
    n = len(x)
    p = np.abs(np.fft.fftshift(np.fft.fft(x))) ** 2
    f = (np.arange(n) - n // 2) / n
    bands = {b: p[(f > mask.band(b)[0]) & (f < mask.band(b)[1])].sum() for b in ("main", "lower", "upper")}
    lo, hi = bands["lower"] / bands["main"], bands["upper"] / bands["main"]
    return np.array([10 * np.log10(lo), 10 * np.log10(hi), 10 * np.log10((lo + hi) / 2)])


def test_c3_metric_oracles(criterion):
    rng = np.random.default_rng(0)
    y = rng.standard_normal(500) + 1j * rng.standard_normal(500)
    checks = {
        "nmse identical": nmse_db(y, y) == DB_FLOOR,
        "nmse zero": abs(nmse_db(y, 0 * y)) < 1e-12,
        "nmse half": abs(nmse_db(y, 0.5 * y) - 10 * np.log10(0.25)) < 1e-12,
    }
    n = 256
    tone = welch_psd(np.exp(2j * np.pi * 9 * np.arange(n) / n), n, 0.0, "rect")
    checks["tone bin"] = tone.power.max() / tone.power.sum() >= 0.999
    f = (np.arange(1000) - 500) / 1000
    p = np.where(np.abs(f) < 0.1, 1.0, 0.0)
    p[(np.abs(f) > 0.1) & (np.abs(f) < 0.3)] = 0.01
    mask = ChannelMask((-0.1, 0.1), 0.2, 0.2)
    checks["acpr -20"] = np.allclose(acpr_db(PsdEstimate(f, p, 1000, 0, "rect"), mask), -20, atol=1e-12)
    p[np.abs(f) > 0.1] = 0
    checks["acpr floor"] = acpr_db(PsdEstimate(f, p, 1000, 0, "rect"), mask) == (DB_FLOOR,) * 3
    ideal = (rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8)))
    v = 0.1 + 0.05j
    hand = 100 * np.sqrt(32 * abs(v) ** 2 / np.sum(np.abs(ideal) ** 2))
    checks["evm zero"] = evm_rms_percent(ideal, ideal) == 0
    checks["evm 10%"] = abs(evm_rms_percent(1.1 * ideal, ideal) - 10) < 1e-12
    checks["evm offset"] = abs(evm_rms_percent(ideal + v, ideal) - hand) < 1e-12
    w, plan = generate_ofdm(OfdmPlan(fft_size=64, active_subcarriers=32, cp_len=8, num_symbols=10, qam_order=16), 2)
    checks["demod round trip"] = np.abs(ofdm_demod(w, plan, 2) - plan.subcarrier_symbols).max() < 1e-9
    rot = ofdm_demod(w.samples * 0.7 * np.exp(1j * np.pi / 5), plan, 2)
    checks["demod gain removal"] = evm_rms_percent(rot, plan.subcarrier_symbols) < 1e-6

    ds, plan = desk_dataset(RunConfig.load())
    mask = ChannelMask.for_plan(plan, 2)
    out = ds.output.samples
    diff = np.abs(np.array(acpr_db(welch_psd(out), mask)) - _fft_band_acpr(out, mask)).max()
    checks["acpr vs single-FFT oracle"] = diff < 0.1
    failed = [k for k, v in checks.items() if not v]
    criterion("3 metric oracles", not failed,
              f"{len(checks) - len(failed)}/{len(checks)} checks, ACPR oracle gap {diff:.3f} dB"
              + (f", failed: {failed}" if failed else ""))


# -- 4. polynomial identification ---------------------------------------------------------------------------


def test_c4_polynomial_identification(criterion):
    t0 = time.perf_counter()
    spec = MpSpec(2, 3)
    rng = np.random.default_rng(4)
    c = rng.standard_normal(spec.n_coeffs) + 1j * rng.standard_normal(spec.n_coeffs)
    x = 0.5 * (rng.standard_normal(10_000) + 1j * rng.standard_normal(10_000))
    fit = mp_fit(x, mp_predict(x, spec, c), spec)
    rel = np.max(np.abs(fit.coeffs - c) / np.abs(c))
    dt = time.perf_counter() - t0
    ok = rel < 1e-8 and fit.residual_nmse_db < -120 and dt < 10
    criterion("4 polynomial identification", ok,
              f"coeff rel err {rel:.1e}, residual {fit.residual_nmse_db:.1f} dB, {dt:.2f} s")


# -- 5/6. desk-scale experiment ------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def desk():
    t0 = time.perf_counter()
    res = run_desk(DeskConfig())
    return res, time.perf_counter() - t0


@pytest.mark.slow
def test_c5_setup(desk, criterion):
    res, dt = desk
    ac = ModelSpec("aclstm", hidden=8, film_hidden=4)
    n_ls = next(r.params for r in res.runs if r.family == "lstm")
    match = abs(n_ls - param_count(ac)) / param_count(ac)
    ok = (res.n_samples >= 40_000 and 8.0 <= res.papr_db <= 8.8 and match <= 0.05 and dt < 20 * 60
          and len(res.nmse("aclstm")) == len(res.nmse("lstm")) == 5)
    criterion("5 setup", ok, f"{res.n_samples} samples, PAPR {res.papr_db:.2f} dB, params {param_count(ac)} "
                             f"vs {n_ls} ({100 * match:.1f}%), runtime {dt / 60:.1f} min")


@pytest.mark.slow
def test_c5a_both_below_minus_30(desk, criterion):
    res, _ = desk
    worst = max(res.nmse("aclstm").max(), res.nmse("lstm").max())
    criterion("5a test NMSE <= -30 dB", worst <= -30, f"worst run {worst:.2f} dB")


@pytest.mark.slow
def test_c5b_aclstm_non_inferior(desk, criterion):
    res, _ = desk
    ac, ls = res.median("aclstm"), res.median("lstm")
    criterion("5b AC-LSTM median <= LSTM median", ac <= ls, f"{ac:.2f} vs {ls:.2f} dB ({ac - ls:+.2f})")


@pytest.mark.slow
def test_c5c_both_beat_mp_by_3db(desk, criterion):
    res, _ = desk
    margins = {f: res.mp_nmse_db - res.median(f) for f in ("aclstm", "lstm")}
    ok = all(m >= 3 for m in margins.values())
    criterion("5c both >= 3 dB better than MP", ok,
              f"MP {res.mp_nmse_db:.2f} dB, margins AC-LSTM {margins['aclstm']:+.2f} / LSTM {margins['lstm']:+.2f} dB")


@pytest.mark.slow
def test_c6_spectral_fidelity(desk, criterion):
    res, _ = desk
    gaps = [r.acpr_db - res.measured_acpr_db for r in res.runs if r.family == "aclstm"]
    worst = max(abs(g) for g in gaps)
    criterion("6 AC-LSTM ACPR within 1.5 dB of DUT", worst <= 1.5,
              f"DUT {res.measured_acpr_db:.2f} dB, worst gap {worst:.2f} dB over {len(gaps)} seeds")


# -- 7. reproducibility ----------------------------------------------------------------------------------------


def _pipeline(out: Path):
    small = ["--set", "model.hidden=4", "--set", "model.film_hidden=2", "--set", "train.epochs=2",
             "--set", "train.batch_size=32", "--set", "train.window_len=16", "--set", "train.burn_in=4",
             "--set", "train.checkpoint_every=1"]
    codes = [
        main(["gen", "--deterministic", "--out", str(out)]),
        main(["capture", "--deterministic", "--out", str(out)]),
        main(["train", "--deterministic", "--out", str(out), *small]),
        main(["eval", "--deterministic", "--out", str(out), *small]),
        main(["train", "--deterministic", "--out", str(out), "--set", "model.family=gmp",
              "--set", "paths.weights=gmp.acw"]),
        main(["eval", "--deterministic", "--out", str(out), "--weights", str(out / "gmp.acw"),
              "--set", "paths.metrics=metrics_gmp.csv"]),
        main(["gradcheck", "--deterministic", "--out", str(out), "--set", "gradcheck.seeds=1"]),
    ]
    return codes, {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_c7_reproducibility(tmp_path, criterion):
    codes_a, files_a = _pipeline(tmp_path / "a")
    codes_b, files_b = _pipeline(tmp_path / "b")
    differing = sorted(k for k in files_a if files_a[k] != files_b.get(k))
    kinds = {Path(k).suffix for k in files_a}
    ok = (codes_a == codes_b == [0] * 7 and files_a.keys() == files_b.keys() and not differing
          and {".csv", ".acw", ".iqf"} <= kinds)
    criterion("7 deterministic reruns byte-identical", ok,
              f"{len(files_a)} files compared" + (f", differing: {differing}" if differing else ""))


# -- 8. leakage audit --------------------------------------------------------------------------------------------


def test_c8_no_leakage(criterion):
    ds, _ = desk_dataset(RunConfig.load())
    train_end, val_end = ds.split_bounds
    norm_ok = (ds.norm_in == fit_norm(ds.input.samples[:train_end])
               and ds.norm_out == fit_norm(ds.output.samples[:train_end])
               and ds.norm_out != fit_norm(ds.output.samples))
    reached = 0
    for fam in ("aclstm", "lstm", "arvtdnn"):
        guarded = GuardedDataset(ds)
        cfg = TrainConfig(epochs=1, batch_size=64, window_len=16, burn_in=4, precision="f64")
        train(ModelSpec(fam, hidden=4, film_hidden=2, memory_depth=2), guarded, cfg)
        reached = max(reached, max(hi for _, hi in guarded.touched))
    ok = norm_ok and reached <= val_end
    criterion("8 no leakage", ok, f"highest index read {reached} <= test start {val_end}; train-block norms {norm_ok}")
