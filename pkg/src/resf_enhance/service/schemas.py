from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


class _Request(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SessionCreate(_Request):
    generator: Literal["identity", "toy"] = "identity"
    model_path: Optional[str] = None
    crossfade_ms: float = Field(0.0, ge=0)


class SessionInfo(BaseModel):
    session_id: str
    sample_rate: int
    buffer_len: int
    block_len: int
    window_len: int
    generator: str


class BufferIn(_Request):
    samples: list[float]


class BlockOut(BaseModel):
    emitted: bool
    samples: Optional[list[float]] = None
    blocks_done: int
    buffers_in: int
    pending: int


class WerRequest(_Request):
    reference: str
    hypothesis: str


class WerResponse(BaseModel):
    wer: float
    reference_tokens: list[str]
    hypothesis_tokens: list[str]


class AggregateRequest(_Request):
    wers: list[float] = Field(min_length=1)
    ids: Optional[list[str]] = None


class AggregateResponse(BaseModel):
    mean: float
    std: float
    pct_le_20: float
    per_file: list[tuple[str, float]]


class QualityRequest(_Request):
    estimate: list[float]
    reference: list[float]


class QualityResponse(BaseModel):
    quality: float
    segmental_snr_db: float


class EnhanceRequest(_Request):
    samples: list[float]
    generator: Literal["identity", "toy"] = "identity"
    model_path: Optional[str] = None
    streaming: bool = False


class EnhanceResponse(BaseModel):
    samples: list[float]
    streaming: bool
