"""Generator and discriminator losses, plus a PESQ-style quality proxy.

Each differentiable loss comes with an analytic gradient so the training
code never needs autodiff. Gradients with respect to complex spectrograms
are returned as ``dL/dRe + 1j * dL/dIm``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
from pydantic import model_validator

from ._base import StrictModel
from .dsp import DEFAULT_SAMPLE_RATE, StftConfig, mel_project, stft


class LossError(ValueError):
    pass


class LossWeights(StrictModel):
    w_mag: float = 0.9
    w_ri: float = 0.1
    w_time: float = 0.2
    w_gan: float = 0.05
    # segmental-SNR range mapped linearly onto quality [0, 1]
    quality_floor_db: float = -10.0
    quality_ceiling_db: float = 35.0

    @model_validator(mode="after")
    def _check(self):
        weights = (self.w_mag, self.w_ri, self.w_time, self.w_gan)
        if any(w < 0 for w in weights):
            raise ValueError("loss weights must be non-negative")
        if not any(w > 0 for w in weights):
            raise ValueError("at least one loss weight must be positive")
        if self.quality_floor_db >= self.quality_ceiling_db:
            raise ValueError("quality_floor_db must be below quality_ceiling_db")
        return self


def _same_shape(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise LossError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def loss_tf(est, ref, w: LossWeights | None = None) -> float:
    """Weighted magnitude MSE plus real and imaginary MSE."""
    w = w or LossWeights()
    est, ref = _same_shape(est, ref)
    mag = np.mean((np.abs(est) - np.abs(ref)) ** 2)
    ri = np.mean((est.real - ref.real) ** 2) + np.mean((est.imag - ref.imag) ** 2)
    return float(w.w_mag * mag + w.w_ri * ri)


def loss_tf_grad(est, ref, w: LossWeights | None = None) -> np.ndarray:
    """Gradient of :func:`loss_tf` in ``est``. Zero-magnitude bins take the
    zero subgradient for the magnitude term."""
    w = w or LossWeights()
    est, ref = _same_shape(est, ref)
    n = est.size
    a = np.abs(est)
    unit = np.divide(est, a, out=np.zeros_like(est, dtype=np.complex128), where=a > 0)
    g = 2 * w.w_mag * (a - np.abs(ref)) * unit / n
    g = g + 2 * w.w_ri * (est - ref) / n
    return g


def loss_time(est, ref) -> float:
    est, ref = _same_shape(est, ref)
    return float(np.mean(np.abs(est - ref)))


def loss_time_grad(est, ref) -> np.ndarray:
    est, ref = _same_shape(est, ref)
    return np.sign(est - ref) / est.size


def _check_unit(value: float, what: str) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0 or not np.isfinite(value):
        raise LossError(f"{what} must lie in [0, 1], got {value}")
    return value


def loss_gan(d_score: float) -> float:
    d = _check_unit(d_score, "discriminator score")
    return (d - 1.0) ** 2


class DiscriminatorScorer(Protocol):
    def score(self, x_mel: np.ndarray, x_hat_mel: np.ndarray) -> float: ...


@dataclass
class ConstantScorer:
    value: float

    def score(self, x_mel, x_hat_mel) -> float:
        return self.value


def loss_discriminator(d: DiscriminatorScorer, x_mel, x_hat_mel, q: float) -> float:
    """Least-squares metric-discriminator loss.

    The clean pair ``(x_mel, x_mel)`` is pushed to score 1 and the
    clean/enhanced pair to the normalised quality ``q``.
    """
    _same_shape(x_mel, x_hat_mel)
    q = _check_unit(q, "quality score")
    clean = d.score(x_mel, x_mel)
    enhanced = d.score(x_mel, x_hat_mel)
    for value in (clean, enhanced):
        if not np.isfinite(value) or not 0.0 <= value <= 1.0:
            raise LossError(f"discriminator returned {value}, outside [0, 1]")
    return float((clean - 1.0) ** 2 + (enhanced - q) ** 2)


def segmental_snr_db(
    est,
    ref,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    stft_cfg: StftConfig | None = None,
    n_mels: int = 128,
    floor_db: float = -10.0,
    ceiling_db: float = 35.0,
    gamma: float = 0.2,
) -> float:
    """Frequency-weighted segmental SNR over mel bands.

    Per frame, each band's SNR (clean mel magnitude over the magnitude
    difference) is clamped to ``[floor_db, ceiling_db]`` and averaged with
    weights ``|X_b| ** gamma``; frames where the reference is silent are
    skipped.
    """
    stft_cfg = stft_cfg or StftConfig()
    est, ref = _same_shape(np.asarray(est, dtype=np.float64), np.asarray(ref, dtype=np.float64))
    ref_mel = np.sqrt(mel_project(np.abs(stft(ref, stft_cfg)), sample_rate, n_mels))
    est_mel = np.sqrt(mel_project(np.abs(stft(est, stft_cfg)), sample_rate, n_mels))
    weights = ref_mel**gamma
    frame_w = weights.sum(axis=1)
    active = frame_w > 0
    if not np.any(active):
        raise LossError("reference is silent")
    err = (ref_mel - est_mel) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        band_snr = 10 * np.log10(ref_mel**2 / err)
    band_snr = np.nan_to_num(band_snr, nan=floor_db, posinf=ceiling_db, neginf=floor_db)
    band_snr = np.clip(band_snr, floor_db, ceiling_db)
    per_frame = np.sum(weights * band_snr, axis=1)[active] / frame_w[active]
    return float(np.mean(per_frame))


def quality_proxy(
    est,
    ref,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    w: LossWeights | None = None,
    stft_cfg: StftConfig | None = None,
) -> float:
    """Normalised quality in [0, 1] standing in for a PESQ score."""
    w = w or LossWeights()
    lo, hi = w.quality_floor_db, w.quality_ceiling_db
    snr = segmental_snr_db(est, ref, sample_rate, stft_cfg, floor_db=lo, ceiling_db=hi)
    return float(np.clip((snr - lo) / (hi - lo), 0.0, 1.0))


@dataclass(frozen=True)
class LossParts:
    """Unweighted loss components."""

    mag: float
    ri: float
    time: float
    gan: float

    @classmethod
    def compute(cls, est_spec, ref_spec, est_wave, ref_wave, d_score: float) -> LossParts:
        est_spec, ref_spec = _same_shape(est_spec, ref_spec)
        mag = float(np.mean((np.abs(est_spec) - np.abs(ref_spec)) ** 2))
        diff = est_spec - ref_spec
        ri = float(np.mean(diff.real**2) + np.mean(diff.imag**2))
        return cls(mag, ri, loss_time(est_wave, ref_wave), loss_gan(d_score))


def combined_generator_loss(parts: LossParts, w: LossWeights | None = None) -> float:
    w = w or LossWeights()
    values = (parts.mag, parts.ri, parts.time, parts.gan)
    if not all(np.isfinite(v) for v in values):
        raise LossError("component losses must be finite")
    return float(w.w_mag * parts.mag + w.w_ri * parts.ri + w.w_time * parts.time + w.w_gan * parts.gan)
