"""Pipeline configuration: one TOML file, unknown keys rejected."""

from __future__ import annotations

import hashlib
from pathlib import Path

import tomli
import tomli_w
from pydantic import Field, ValidationError, model_validator

from ._base import StrictModel
from .dsp import DEFAULT_SAMPLE_RATE, StftConfig
from .evaluation import AUDIO_PLACEHOLDER
from .losses import LossWeights
from .simulate import FfrBand, SubtractionConfig
from .stream import StreamGeometry
from .twomask import ToyHyper


class ConfigError(ValueError):
    pass


class AudioSection(StrictModel):
    sample_rate: int = Field(DEFAULT_SAMPLE_RATE, gt=0)


class StreamSection(StrictModel):
    buffer_ms: float = Field(170.0, gt=0)
    buffers_per_block: int = Field(3, ge=1)
    blocks_per_window: int = Field(4, ge=1)
    crossfade_ms: float = Field(0.0, ge=0)


class ModelSection(StrictModel):
    path: str = ""


class AsrSection(StrictModel):
    command: str = ""

    @model_validator(mode="after")
    def _check(self):
        if self.command and AUDIO_PLACEHOLDER not in self.command:
            raise ValueError(f"asr.command must contain {AUDIO_PLACEHOLDER}")
        return self


class PipelineConfig(StrictModel):
    audio: AudioSection = AudioSection()
    stft: StftConfig = StftConfig()
    ffr: FfrBand = FfrBand()
    subtraction: SubtractionConfig = SubtractionConfig()
    losses: LossWeights = LossWeights()
    stream: StreamSection = StreamSection()
    toy: ToyHyper = ToyHyper()
    model: ModelSection = ModelSection()
    asr: AsrSection = AsrSection()

    @model_validator(mode="after")
    def _check(self):
        sr = self.audio.sample_rate
        if self.ffr.high_hz > sr / 2:
            raise ValueError(f"ffr.high_hz {self.ffr.high_hz} exceeds Nyquist ({sr / 2} Hz)")
        self.ffr.bins(self.stft.n_fft, sr)
        self.geometry.buffer_len  # noqa: B018 - raises on fractional buffers
        return self

    @property
    def sample_rate(self) -> int:
        return self.audio.sample_rate

    @property
    def geometry(self) -> StreamGeometry:
        return StreamGeometry(sample_rate=self.audio.sample_rate, **self.stream.model_dump())

    def to_toml(self) -> str:
        return tomli_w.dumps(self.model_dump(mode="json"))

    def digest(self) -> str:
        return hashlib.sha256(self.to_toml().encode()).hexdigest()


def parse_config(text: str, source: str = "<config>") -> PipelineConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    try:
        return PipelineConfig.model_validate(data)
    except (ValidationError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))
