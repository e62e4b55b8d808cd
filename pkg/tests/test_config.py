import pytest

from vltok.config import (
    PRESETS,
    RunConfig,
    TrackerConfig,
    format_config,
    load_config,
    parse_config_text,
    save_config,
)


def test_presets():
    toy, full = PRESETS["toy"].tracker, PRESETS["full"].tracker
    assert (toy.template_size, toy.search_size, toy.patch_size, toy.bins) == (32, 64, 8, 100)
    assert (full.template_size, full.search_size, full.channels, full.model_dim, full.bins) == (192, 384, 768, 256, 1000)


def test_optimiser_defaults():
    o = RunConfig().optim
    assert (o.learning_rate, o.beta1, o.beta2, o.eps, o.weight_decay) == (3e-4, 0.9, 0.999, 1e-8, 1e-4)


def test_parse_comments_and_blanks():
    text = "# header\nbins = 50  # coarse\n\nbox_format=center\n"
    assert parse_config_text(text) == {"bins": "50", "box_format": "center"}


def test_malformed_line():
    with pytest.raises(ValueError):
        parse_config_text("bins 50")


def test_unknown_key():
    with pytest.raises(KeyError):
        RunConfig.from_flat({"colour": "red"})


def test_type_errors():
    with pytest.raises(ValueError):
        RunConfig.from_flat({"bins": "many"})
    with pytest.raises(ValueError):
        RunConfig().with_overrides(bins=2.5)


def test_validation():
    with pytest.raises(ValueError):
        TrackerConfig(model_dim=60, dec_heads=8)
    with pytest.raises(ValueError):
        TrackerConfig(search_size=60)
    with pytest.raises(ValueError):
        TrackerConfig(query_mode="both")


def test_file_round_trip(tmp_path):
    run = RunConfig().with_overrides(bins=500, box_format="center", learning_rate=1e-3, steps=7, train_data="d")
    save_config(run, tmp_path / "run.cfg")
    assert load_config(tmp_path / "run.cfg") == run
    assert format_config(load_config(tmp_path / "run.cfg")) == format_config(run)


def test_file_over_base(tmp_path):
    (tmp_path / "c.cfg").write_text("bins = 1000\n")
    run = load_config(tmp_path / "c.cfg", base=PRESETS["full"])
    assert run.tracker.bins == 1000 and run.tracker.channels == 768
