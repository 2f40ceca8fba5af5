import math

import pytest

from aclstm.config import DEFAULTS, STREAMS, RunConfig, parse_complex_list, stream_seed
from aclstm.errors import ConfigError, UnreadableFileError
from aclstm.experiment import matched_hidden
from aclstm.nn_core import ModelSpec, param_count


def test_defaults_resolve_to_typed_views():
    cfg = RunConfig.load()
    assert cfg.model_spec() == ModelSpec("aclstm", hidden=8, film_hidden=4)
    assert cfg.dut().pre_fir == (1, 0.1 - 0.05j, 0.02j)
    assert cfg.fractions() == (0.8, 0.1, 0.1)
    tc = cfg.train_config()
    assert (tc.epochs, tc.batch_size, tc.window_len, tc.lr0) == (200, 256, 64, 1e-3)
    assert tc.seed == stream_seed(0, "init")


def test_text_parsing_and_comments(tmp_path):
    p = tmp_path / "run.config"
    p.write_text("# header\nseed = 7\nmodel.family=lstm  # trailing\n\ndut.noise_dbc=-inf\nsignal.cfr=off\n")
    cfg = RunConfig.load(p)
    assert cfg["seed"] == 7 and cfg["model.family"] == "lstm"
    assert cfg["dut.noise_dbc"] == -math.inf and cfg["signal.cfr"] is False
    assert cfg.explicit == {"seed", "model.family", "dut.noise_dbc", "signal.cfr"}


def test_dump_round_trip(tmp_path):
    cfg = RunConfig.load(overrides={"seed": "3", "train.lr0": "0.1", "dut.post_fir": "1, 0.2j"})
    p = tmp_path / "a.config"
    p.write_text(cfg.dump())
    again = RunConfig.load(p)
    assert dict(again) == dict(cfg)
    assert again.dump() == cfg.dump()
    assert len(cfg.dump().splitlines()) == len(DEFAULTS)


@pytest.mark.parametrize("text", ["unknown.key=1", "seed=abc", "signal.cfr=maybe", "no equals sign"])
def test_rejects_bad_lines(text):
    with pytest.raises(ConfigError):
        RunConfig.load(overrides=None).update_text(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(UnreadableFileError):
        RunConfig.load(tmp_path / "none.config")


def test_poly_views():
    assert RunConfig.load(overrides={"model.family": "mp"}).poly_spec().n_coeffs == 45
    assert RunConfig.load(overrides={"model.family": "gmp"}).poly_spec().n_coeffs == 63
    with pytest.raises(ConfigError):
        RunConfig.load().poly_spec()


def test_stream_seeds_are_distinct_and_stable():
    seeds = {stream_seed(s, k) for s in range(5) for k in STREAMS}
    assert len(seeds) == 5 * len(STREAMS)
    assert stream_seed(0, "init") == stream_seed(0, "init")


def test_complex_list_parsing():
    assert parse_complex_list("1, -0.08+0.03j") == (1, -0.08 + 0.03j)
    with pytest.raises(ConfigError):
        parse_complex_list("1, x")


def test_matched_hidden():
    target = param_count(ModelSpec("aclstm", hidden=8, film_hidden=4))
    h = matched_hidden(target)
    assert h == 9 and abs(param_count(ModelSpec("lstm", hidden=h)) - target) / target <= 0.05
