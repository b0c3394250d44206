"""Compensate-then-denoise mask pair and the generators that produce it.

A :class:`MaskPair` holds an additive compensation mask, non-zero only in
the fundamental-frequency band, and a multiplicative gain mask in [0, 1].
The enhanced magnitude is ``(|Y| + irm1) * irm2``; the noisy phase is reused.
The addition comes first because a bin that oversubtraction drove to zero
stays zero under any gain.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np
from pydantic import Field

from ._base import StrictModel
from .dsp import DEFAULT_SAMPLE_RATE, decompose, recompose
from .simulate import FfrBand

EPS = 1e-8


class MaskError(ValueError):
    pass


class ToyTrainingError(RuntimeError):
    pass


class ModelFormatError(ValueError):
    pass


def band_mask(ffr: FfrBand, n_bins: int, sample_rate: int = DEFAULT_SAMPLE_RATE) -> np.ndarray:
    return ffr.bin_mask(2 * (n_bins - 1), sample_rate)


@dataclass(frozen=True)
class MaskPair:
    irm1: np.ndarray
    irm2: np.ndarray

    @property
    def shape(self):
        return self.irm1.shape

    def validate(self, band: np.ndarray, shape=None) -> None:
        if self.irm1.shape != self.irm2.shape:
            raise MaskError(f"mask shapes differ: {self.irm1.shape} vs {self.irm2.shape}")
        if shape is not None and self.irm1.shape != tuple(shape):
            raise MaskError(f"mask shape {self.irm1.shape} does not match spectrogram {tuple(shape)}")
        if not (np.all(np.isfinite(self.irm1)) and np.all(np.isfinite(self.irm2))):
            raise MaskError("masks contain non-finite values")
        if np.any(self.irm1 < 0):
            raise MaskError("compensation mask has negative entries")
        if np.any(self.irm1[..., ~band] != 0):
            raise MaskError("compensation mask is non-zero outside the FFR")
        if np.any(self.irm2 < 0) or np.any(self.irm2 > 1):
            raise MaskError("denoising mask leaves [0, 1]")


class MaskGenerator(Protocol):
    def generate(self, mag: np.ndarray) -> MaskPair: ...


def enhance_magnitude(mag, masks: MaskPair) -> np.ndarray:
    return (mag + masks.irm1) * masks.irm2


def apply_two_mask(
    spec,
    masks: MaskPair,
    ffr: FfrBand,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> np.ndarray:
    spec = np.asarray(spec)
    masks.validate(band_mask(ffr, spec.shape[-1], sample_rate), spec.shape)
    mag, phase = decompose(spec)
    return recompose(enhance_magnitude(mag, masks), phase)


def oracle_masks(
    noisy_mag,
    clean_mag,
    ffr: FfrBand,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    eps: float = EPS,
) -> MaskPair:
    """Minimal compensation plus a clipped ratio gain that maps ``noisy_mag``
    onto ``clean_mag`` wherever that is reachable."""
    y = np.asarray(noisy_mag, dtype=np.float64)
    s = np.asarray(clean_mag, dtype=np.float64)
    if y.shape != s.shape:
        raise MaskError(f"shape mismatch: {y.shape} vs {s.shape}")
    if np.any(y < 0) or np.any(s < 0):
        raise MaskError("magnitudes must be non-negative")
    band = band_mask(ffr, y.shape[-1], sample_rate)
    irm1 = np.zeros_like(y)
    irm1[..., band] = np.maximum(0.0, s[..., band] - y[..., band])
    irm2 = np.minimum(1.0, s / (y + irm1 + eps))
    return MaskPair(irm1, irm2)


class IdentityGenerator:
    def generate(self, mag: np.ndarray) -> MaskPair:
        return MaskPair(np.zeros_like(mag), np.ones_like(mag))


@dataclass
class OracleGenerator:
    clean_mag: np.ndarray
    ffr: FfrBand = field(default_factory=FfrBand)
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def generate(self, mag: np.ndarray) -> MaskPair:
        return oracle_masks(mag, self.clean_mag, self.ffr, self.sample_rate)


# -- toy linear generator ---------------------------------------------------


class ToyHyper(StrictModel):
    lr: float = Field(0.5, gt=0, le=1)
    epochs: int = Field(200, ge=1)
    seed: int = Field(0, ge=0)
    ridge: float = Field(1e-4, ge=0)
    max_frames: int = Field(20000, ge=1)


@dataclass(frozen=True)
class ToyGeneratorModel:
    """Per-FFR-bin linear map from a frame's HFR magnitudes (plus bias) to
    that bin's compensation, and one denoising gain per bin.

    ``weights`` has shape ``(n_ffr, n_hfr + 1)``; the last column is the bias.
    The FFR spans bins ``k_low..k_high`` and the HFR every bin above it.
    """

    weights: np.ndarray
    gains: np.ndarray
    k_low: int
    k_high: int

    def __post_init__(self):
        n_bins = len(self.gains)
        if not 0 <= self.k_low <= self.k_high < n_bins - 1:
            raise ModelFormatError("FFR bin range must leave at least one HFR bin")
        expected = (self.k_high - self.k_low + 1, n_bins - self.k_high)
        if self.weights.shape != expected:
            raise ModelFormatError(f"weights shape {self.weights.shape}, expected {expected}")

    @property
    def n_bins(self) -> int:
        return len(self.gains)

    @property
    def n_hfr(self) -> int:
        return self.n_bins - self.k_high - 1

    @classmethod
    def zeros(cls, n_bins: int, k_low: int, k_high: int, gain: float = 1.0) -> ToyGeneratorModel:
        n_ffr = k_high - k_low + 1
        return cls(np.zeros((n_ffr, n_bins - k_high)), np.full(n_bins, gain), k_low, k_high)

    def band(self) -> np.ndarray:
        mask = np.zeros(self.n_bins, dtype=bool)
        mask[self.k_low : self.k_high + 1] = True
        return mask

    def features(self, mag: np.ndarray) -> np.ndarray:
        hfr = mag[:, self.k_high + 1 :]
        return np.hstack([hfr, np.ones((len(mag), 1))])


def toy_generate(model: ToyGeneratorModel, mag) -> MaskPair:
    mag = np.asarray(mag, dtype=np.float64)
    if mag.ndim != 2 or mag.shape[1] != model.n_bins:
        raise MaskError(f"magnitude shape {mag.shape} does not match model with {model.n_bins} bins")
    irm1 = np.zeros_like(mag)
    irm1[:, model.k_low : model.k_high + 1] = np.maximum(0.0, model.features(mag) @ model.weights.T)
    irm2 = np.broadcast_to(np.clip(model.gains, 0.0, 1.0), mag.shape).copy()
    return MaskPair(irm1, irm2)


@dataclass
class ToyGenerator:
    model: ToyGeneratorModel

    def generate(self, mag: np.ndarray) -> MaskPair:
        return toy_generate(self.model, mag)


def toy_loss(model: ToyGeneratorModel, pairs: Iterable[tuple[np.ndarray, np.ndarray]]) -> float:
    """Mean squared magnitude error of the model's clamped masks."""
    total, count = 0.0, 0
    for y, s in pairs:
        out = enhance_magnitude(y, toy_generate(model, y))
        total += float(np.sum((out - s) ** 2))
        count += s.size
    return total / count


def toy_train(
    pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    ffr: FfrBand,
    hyper: ToyHyper | None = None,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    on_epoch: Callable[[int, float], None] | None = None,
) -> tuple[ToyGeneratorModel, list[float]]:
    """Fit the toy generator to (distorted, clean) magnitude pairs.

    Alternates a Newton-preconditioned gradient step on the compensation
    weights (gains fixed) with one on the gains (weights fixed). Both blocks
    are convex quadratics during training, where the compensation is left
    unclamped, so every step with ``lr <= 1`` is a descent step and the
    returned per-epoch losses never increase. The clamp to non-negative
    compensation applies at inference only.
    """
    hyper = hyper or ToyHyper()
    if not pairs:
        raise ToyTrainingError("empty training set")
    n_bins = pairs[0][0].shape[1]
    for y, s in pairs:
        if y.shape != s.shape or y.ndim != 2 or y.shape[1] != n_bins:
            raise ToyTrainingError("inconsistent magnitude shapes in training set")
    k_low, k_high = ffr.bins(2 * (n_bins - 1), sample_rate)
    model = ToyGeneratorModel.zeros(n_bins, k_low, k_high)

    Y = np.vstack([y for y, _ in pairs])
    S = np.vstack([s for _, s in pairs])
    rng = np.random.default_rng(hyper.seed)
    if len(Y) > hyper.max_frames:
        keep = np.sort(rng.choice(len(Y), hyper.max_frames, replace=False))
        Y, S = Y[keep], S[keep]
    n, f = Y.shape
    ffr_idx = slice(k_low, k_high + 1)

    X = model.features(Y)
    scale = np.sqrt(np.mean(X * X, axis=0))
    scale[scale == 0] = 1.0
    Xs = X / scale
    gram = Xs.T @ Xs
    ridge = np.full(Xs.shape[1], hyper.ridge)
    ridge[-1] = 0.0  # bias is not penalised

    V = np.zeros_like(model.weights)  # weights in standardised feature space
    G = model.gains.copy()
    norm = 1.0 / (n * f)
    # outside the FFR the output is Y * G, so per-bin sums determine the loss
    outside = np.ones(f, dtype=bool)
    outside[ffr_idx] = False
    yy = np.sum(Y * Y, axis=0)
    ys = np.sum(Y * S, axis=0)
    ss = np.sum(S * S, axis=0)
    Y_ffr, S_ffr = Y[:, ffr_idx], S[:, ffr_idx]

    def objective(V, G):
        Z = Y_ffr + Xs @ V.T
        R = Z * G[ffr_idx] - S_ffr
        g = G[outside]
        rest = np.sum(g * g * yy[outside] - 2 * g * ys[outside] + ss[outside])
        return norm * (float(np.sum(R * R)) + float(rest)) + float(np.sum(ridge * V * V))

    losses: list[float] = []
    prev = objective(V, G)
    for epoch in range(1, hyper.epochs + 1):
        V_new, G_new = V.copy(), G.copy()
        # compensation weights, one FFR bin at a time
        g_ffr = G[ffr_idx]
        R = (Y_ffr + Xs @ V.T) * g_ffr - S_ffr
        grads = 2 * norm * (R * g_ffr).T @ Xs + 2 * ridge * V
        for j, g in enumerate(g_ffr):
            hess = 2 * norm * g * g * gram + np.diag(2 * ridge + 1e-12)
            V_new[j] -= hyper.lr * np.linalg.solve(hess, grads[j])
        # denoising gains, exact curvature per bin
        Z = Y_ffr + Xs @ V_new.T
        zz, zs = yy.copy(), ys.copy()
        zz[ffr_idx] = np.sum(Z * Z, axis=0)
        zs[ffr_idx] = np.sum(Z * S_ffr, axis=0)
        grad = 2 * norm * (zz * G - zs)
        curv = 2 * norm * zz
        step = np.divide(grad, curv, out=np.zeros_like(grad), where=curv > 0)
        G_new = np.clip(G - hyper.lr * step, 0.0, 1.0)

        loss = objective(V_new, G_new)
        if not np.isfinite(loss):
            raise ToyTrainingError(f"non-finite loss at epoch {epoch}")
        # rounding near the optimum can nudge the loss up by ~1e-18
        if loss <= prev:
            V, G, prev = V_new, G_new, loss
        losses.append(prev)
        if on_epoch is not None:
            on_epoch(epoch, prev)

    weights = V / scale
    return ToyGeneratorModel(weights, G, k_low, k_high), losses


# -- persistence --------------------------------------------------------------

MAGIC = b"TMSKTOY\0"
VERSION = 1
_HEADER = struct.Struct("<8sIIIII")


def save_model(model: ToyGeneratorModel, path) -> None:
    """Header (magic, version, F, F_hfr, k_low, k_high), then little-endian
    float64 weights (row-major) and gains."""
    header = _HEADER.pack(MAGIC, VERSION, model.n_bins, model.n_hfr, model.k_low, model.k_high)
    body = model.weights.astype("<f8").tobytes() + model.gains.astype("<f8").tobytes()
    Path(path).write_bytes(header + body)


def load_model(path) -> ToyGeneratorModel:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ModelFormatError(f"{path}: truncated header")
    magic, version, n_bins, n_hfr, k_low, k_high = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ModelFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ModelFormatError(f"{path}: unsupported version {version}")
    if n_hfr != n_bins - k_high - 1:
        raise ModelFormatError(f"{path}: inconsistent HFR count")
    n_ffr = k_high - k_low + 1
    n_w = n_ffr * (n_hfr + 1)
    expected = _HEADER.size + 8 * (n_w + n_bins)
    if len(data) != expected:
        raise ModelFormatError(f"{path}: size {len(data)} bytes, expected {expected}")
    arr = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    weights = arr[:n_w].reshape(n_ffr, n_hfr + 1).astype(np.float64)
    gains = arr[n_w:].astype(np.float64)
    return ToyGeneratorModel(weights, gains, int(k_low), int(k_high))
