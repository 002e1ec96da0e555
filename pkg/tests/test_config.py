import pytest

from hybkan.config import build_run_config, parse_config_text, read_config_file
from hybkan.tensor import ConfigError

SAMPLE = """
# desk run
variant = hybrid1
size = toy
epochs = 2          # alias for total_epochs
lr = 0.002
betas = 0.9, 0.99
grid_size = 7
spline.scale_noise = 0.2
wavelet.pruning_ratio = 0.25
decomposition_levels = 3
grid_range = -2, 2
eval_ema = true
"""


def test_parse_and_route(tmp_path):
    (tmp_path / "run.cfg").write_text(SAMPLE)
    rc = build_run_config(read_config_file(tmp_path / "run.cfg"))
    assert rc.run.variant == "hybrid1" and rc.run.eval_ema is True
    assert rc.model.ffn_kind == "wavkan" and rc.model.head_kind == "effkan"
    assert rc.optimizer.total_epochs == 2 and rc.optimizer.lr_base == 0.002
    assert (rc.optimizer.beta1, rc.optimizer.beta2) == (0.9, 0.99)
    assert rc.model.spline.grid_size == 7 and rc.model.spline.scale_noise == 0.2
    assert (rc.model.spline.grid_range_lo, rc.model.spline.grid_range_hi) == (-2.0, 2.0)
    assert rc.model.wavelet.pruning_ratio == 0.25 and rc.model.wavelet.decomposition_levels == 3


def test_overrides_win_and_none_falls_through():
    raw = parse_config_text("lr = 0.1\nbatch_size = 8")
    rc = build_run_config(raw, lr_base=0.5, batch_size=None)
    assert rc.optimizer.lr_base == 0.5
    assert rc.optimizer.batch_size == 8


@pytest.mark.parametrize("text,needle", [
    ("dim = abc", "'dim'"),
    ("heads = 0", "'heads'"),
    ("eval_ema = maybe", "'eval_ema'"),
    ("wavelet.pruning_ratio = 1.5", "'pruning_ratio'"),
    ("grid_range = 2, -2", "'grid_range'"),
    ("number_of_grids = 9", "'number_of_grids'"),
    ("bogus = 1", "'bogus'"),
    ("scale_noise = 0.1", "ambiguous"),
])
def test_named_key_errors(text, needle):
    with pytest.raises(ConfigError, match=needle):
        build_run_config(parse_config_text(text))


def test_grammar_errors():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config_text("a = 1\na = 2")
    with pytest.raises(ConfigError, match=":2:"):
        parse_config_text("a = 1\njust words")


def test_number_of_grids_consistent():
    rc = build_run_config(parse_config_text("number_of_grids = 8"))
    assert rc.model.spline.number_of_grids == 8
