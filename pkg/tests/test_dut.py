import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aclstm.dut import (
    Dataset,
    SynthDutSpec,
    drive_scale,
    ingest_dataset,
    load_dataset_from_meta,
    make_dataset,
    normalized_blocks,
    split_bounds,
    synth_dut_forward,
    write_meta,
)
from aclstm.errors import ConfigError, LengthMismatchError
from aclstm.iqf import write_iqf
from aclstm.signal import Waveform, fit_norm

STATIC = dict(pre_fir=(1.0,), post_fir=(1.0,), noise_dbc=-np.inf)


def wf(x, rate=1.0):
    return Waveform(np.asarray(x, dtype=complex), rate)


def random_wave(seed, n=300, scale=0.5):
    rng = np.random.default_rng(seed)
    return wf(scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n)))


def test_zero_in_zero_out():
    y = synth_dut_forward(SynthDutSpec(noise_dbc=-np.inf), wf(np.zeros(50)))
    assert not np.any(y.samples)


def test_linear_limit():
    spec = SynthDutSpec(saleh_alpha_a=2.0, saleh_beta_a=1e-30, saleh_alpha_p=0.0, **STATIC)
    x = random_wave(1)
    np.testing.assert_allclose(synth_dut_forward(spec, x).samples, 2 * x.samples, rtol=0, atol=1e-12)


def test_single_sample_saleh():
    spec = SynthDutSpec(saleh_alpha_a=2.0, saleh_beta_a=1.0, saleh_alpha_p=np.pi / 3, saleh_beta_p=1.0, **STATIC)
    y = synth_dut_forward(spec, wf([0.5])).samples[0]
    r2 = 0.25
    assert abs(y) == pytest.approx(2 * 0.5 / (1 + r2), abs=1e-15)
    assert abs(y) == pytest.approx(0.8, abs=1e-15)
    assert np.angle(y) == pytest.approx((np.pi / 3 * r2) / (1 + r2), abs=1e-15)


def test_memory_taps_are_applied_in_order():
    # impulse through linearized DUT returns the convolution of both FIRs
    spec = SynthDutSpec(pre_fir=(1, 0.5), post_fir=(1, -0.25j), saleh_alpha_a=1.0, saleh_beta_a=1e-30,
                        saleh_alpha_p=0.0, noise_dbc=-np.inf)
    y = synth_dut_forward(spec, wf([1e-3, 0, 0, 0])).samples / 1e-3
    np.testing.assert_allclose(y, [1, 0.5 - 0.25j, -0.125j, 0], atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 299))
def test_causality(seed, n):
    spec = SynthDutSpec(noise_dbc=-np.inf)
    x = random_wave(seed)
    full = synth_dut_forward(spec, x).samples
    head = synth_dut_forward(spec, wf(x.samples[:n])).samples
    assert np.array_equal(full[:n], head)


def test_static_am_am_and_am_pm_depend_only_on_modulus():
    spec = SynthDutSpec(**STATIC)
    r = np.linspace(0.01, 2.0, 40)
    rng = np.random.default_rng(0)
    out = []
    for _ in range(3):
        phi = rng.uniform(-np.pi, np.pi, len(r))
        x = r * np.exp(1j * phi)
        y = synth_dut_forward(spec, wf(x)).samples
        out.append((np.abs(y), np.angle(y * np.conj(x))))
    for mod, dphi in out[1:]:
        np.testing.assert_allclose(mod, out[0][0], atol=1e-12)
        np.testing.assert_allclose(dphi, out[0][1], atol=1e-12)
    assert np.argmax(out[0][0]) == np.argmin(np.abs(r - spec.saturation_modulus))


def test_noise_is_seeded_and_at_requested_level():
    spec = SynthDutSpec(noise_dbc=-70.0)
    x = random_wave(3, n=20_000)
    a = synth_dut_forward(spec, x, seed=5).samples
    b = synth_dut_forward(spec, x, seed=5).samples
    c = synth_dut_forward(spec, x, seed=6).samples
    clean = synth_dut_forward(SynthDutSpec(noise_dbc=-np.inf), x).samples
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    ratio = np.mean(np.abs(a - clean) ** 2) / np.mean(np.abs(clean) ** 2)
    assert 10 * np.log10(ratio) == pytest.approx(-70.0, abs=0.2)


@pytest.mark.parametrize("kw", [dict(saleh_beta_a=0.0), dict(pre_fir=(0, 1)), dict(post_fir=()),
                                dict(pre_fir=(1,) * 6), dict(noise_dbc=-30.0)])
def test_spec_invariants(kw):
    with pytest.raises(ConfigError):
        SynthDutSpec(**kw)


def test_drive_scale_sets_mean_modulus():
    spec = SynthDutSpec(saleh_beta_a=4.0)
    x = random_wave(2)
    g = drive_scale(x, spec, 0.5)
    assert np.mean(np.abs(g * x.samples)) == pytest.approx(0.5 * 0.5, rel=1e-12)
    with pytest.raises(ConfigError):
        drive_scale(wf(np.zeros(4)), spec)


# -- datasets ----------------------------------------------------------------------------


@pytest.mark.parametrize("n,bounds", [(10, (8, 9)), (1000, (800, 900)), (200_000, (160_000, 180_000))])
def test_split_bounds(n, bounds):
    assert split_bounds(n) == bounds


@settings(max_examples=60, deadline=None)
@given(st.integers(30, 100_000))
def test_split_fractions_within_one_sample(n):
    tr, va = split_bounds(n)
    assert abs(tr - 0.8 * n) <= 1 and abs(va - tr - 0.1 * n) <= 1 and abs(n - va - 0.1 * n) <= 1


@pytest.mark.parametrize("fr", [(0.8, 0.2), (0.8, 0.1, 0.2), (1.0, 0.0, 0.0), (0.9, 0.1, -0.0)])
def test_bad_fractions(fr):
    with pytest.raises(ConfigError):
        split_bounds(100, fr)


def test_make_dataset_length_mismatch():
    with pytest.raises(ConfigError):
        make_dataset(random_wave(0, 50), random_wave(1, 51))


def test_norm_uses_train_block_only():
    x, y = random_wave(0, 200), random_wave(1, 200)
    ds = make_dataset(x, y)
    assert ds.norm_in == fit_norm(x.samples[:160])
    assert ds.norm_out == fit_norm(y.samples[:160])
    xs, ys = x.samples.copy(), y.samples.copy()
    xs[160:] *= 50
    ys[180:] = 7 - 3j
    ds2 = make_dataset(wf(xs), wf(ys))
    assert (ds2.norm_in, ds2.norm_out) == (ds.norm_in, ds.norm_out)


def test_blocks_are_contiguous_and_ordered():
    x = wf(np.arange(20) + 1j * (np.arange(20) % 3))
    ds = make_dataset(x, x)
    parts = [ds.block(p) for p in ("train", "val", "test")]
    assert np.array_equal(np.concatenate(parts), x.samples)
    assert np.array_equal(ds.block("val", tail=1), x.samples[17:18])
    assert np.array_equal(ds.block("train", tail=100), x.samples[:16])
    with pytest.raises(ConfigError):
        ds.block("holdout")


def test_normalized_blocks_match_stats():
    ds = make_dataset(random_wave(0, 400), random_wave(1, 400))
    xn, yn, xraw = normalized_blocks(ds, "train")
    assert abs(xn.real.mean()) < 1e-12 and abs(yn.imag.std() - 1) < 1e-12
    assert np.array_equal(xraw, ds.block("train"))


def test_ingest_and_meta_roundtrip(tmp_path):
    x = Waveform(random_wave(0, 1000).samples.astype(np.complex64), 800e6)
    y = Waveform(random_wave(1, 1000).samples.astype(np.complex64), 800e6)
    write_iqf(tmp_path / "in.iqf", x)
    write_iqf(tmp_path / "out.iqf", y)
    ds = ingest_dataset(tmp_path / "in.iqf", tmp_path / "out.iqf")
    assert ds.split_bounds == (800, 900)
    assert ds.input.samples.tobytes() == x.samples.tobytes()
    assert ds.output.samples.tobytes() == y.samples.tobytes()
    write_meta(tmp_path / "dataset.meta", ds, "in.iqf", "out.iqf")
    again = load_dataset_from_meta(tmp_path / "dataset.meta")
    assert again.split_bounds == ds.split_bounds and again.norm_in == ds.norm_in


def test_ingest_rejects_mismatched_files(tmp_path):
    write_iqf(tmp_path / "a.iqf", wf(np.ones(100), 1e6))
    write_iqf(tmp_path / "b.iqf", wf(np.ones(99), 1e6))
    write_iqf(tmp_path / "c.iqf", wf(np.ones(100), 2e6))
    with pytest.raises(LengthMismatchError):
        ingest_dataset(tmp_path / "a.iqf", tmp_path / "b.iqf")
    with pytest.raises(LengthMismatchError):
        ingest_dataset(tmp_path / "a.iqf", tmp_path / "c.iqf")


def test_dataset_is_immutable():
    ds = make_dataset(random_wave(0, 50), random_wave(1, 50))
    with pytest.raises(AttributeError):
        ds.split_bounds = (1, 2)
    assert isinstance(ds, Dataset)
