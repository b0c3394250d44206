import pytest

from resf_enhance.config import ConfigError, PipelineConfig, load_config, parse_config


def test_defaults():
    cfg = PipelineConfig()
    assert cfg.sample_rate == 16000
    assert cfg.geometry.window_len == 32640
    assert cfg.ffr.bins(cfg.stft.n_fft, cfg.sample_rate) == (1, 11)


def test_round_trip():
    cfg = parse_config("[ffr]\nhigh_hz = 500.0\n[losses]\nw_gan = 0.1\n")
    again = parse_config(cfg.to_toml())
    assert again == cfg
    assert again.digest() == cfg.digest()
    assert cfg.digest() != PipelineConfig().digest()


@pytest.mark.parametrize(
    "text",
    [
        "[stft]\nnfft = 512\n",
        "[bogus]\nx = 1\n",
        "top_level = 1\n",
        "[stream]\nbuffer_ms = 170\nwindow = 4\n",
    ],
)
def test_unknown_keys_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


@pytest.mark.parametrize(
    "text, match",
    [
        ("[stft]\nhop = 200\n", "overlap-add"),
        ("[ffr]\nhigh_hz = 9000.0\n", "Nyquist"),
        ("[asr]\ncommand = \"whisper x.wav\"\n", "audio"),
        ("[stream]\nbuffer_ms = 0.03\n", "whole number"),
        ("[stft\n", "<config>"),
    ],
)
def test_invalid_values(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_load(tmp_path):
    (tmp_path / "c.toml").write_text("[toy]\nepochs = 7\n")
    assert load_config(tmp_path / "c.toml").toy.epochs == 7
    assert load_config(None) == PipelineConfig()
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.toml")
