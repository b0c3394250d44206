"""Time-frequency analysis and synthesis primitives.

Spectrograms are complex numpy arrays of shape ``(frames, bins)`` with
``bins = n_fft // 2 + 1``. Frames are not centred: frame ``t`` covers samples
``[t * hop, t * hop + n_fft)``. Use :func:`padded_stft` / :func:`padded_istft`
when every input sample must be reconstructible.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np
from pydantic import model_validator

from ._base import StrictModel

DEFAULT_SAMPLE_RATE = 16000


class DspError(ValueError):
    pass


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise DspError(f"waveform must be mono, got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise DspError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise DspError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


class StftConfig(StrictModel):
    n_fft: int = 400
    hop: int = 100
    window: Literal["hann", "sqrt_hann", "rect"] = "hann"
    # 1.0 disables power-law magnitude compression
    magnitude_exponent: float = 1.0

    @model_validator(mode="after")
    def _check(self):
        if self.n_fft < 2 or self.hop < 1:
            raise ValueError("n_fft must be >= 2 and hop >= 1")
        if self.hop > self.n_fft:
            raise ValueError(f"hop ({self.hop}) exceeds n_fft ({self.n_fft})")
        if not 0 < self.magnitude_exponent <= 1:
            raise ValueError("magnitude_exponent must lie in (0, 1]")
        if not is_cola(self.window, self.n_fft, self.hop):
            raise ValueError(
                f"{self.window} window with n_fft={self.n_fft}, hop={self.hop} "
                "does not satisfy constant overlap-add"
            )
        return self

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1


@lru_cache(maxsize=32)
def _window(kind: str, n_fft: int) -> np.ndarray:
    if kind == "rect":
        w = np.ones(n_fft)
    else:
        # periodic Hann
        w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n_fft) / n_fft)
        if kind == "sqrt_hann":
            w = np.sqrt(w)
    w.setflags(write=False)
    return w


def get_window(cfg: StftConfig) -> np.ndarray:
    return _window(cfg.window, cfg.n_fft)


def is_cola(kind: str, n_fft: int, hop: int, rtol: float = 1e-10) -> bool:
    """True when the squared window overlap-adds to a constant at this hop.

    Synthesis reuses the analysis window, so the product window ``w**2`` is
    the one that has to sum to a constant.
    """
    if n_fft % hop:
        return False
    w2 = _window(kind, n_fft) ** 2
    total = w2.reshape(-1, hop).sum(axis=0)
    return bool(np.ptp(total) <= rtol * total.max())


def n_frames(n_samples: int, cfg: StftConfig) -> int:
    return 1 + (n_samples - cfg.n_fft) // cfg.hop


def stft(x, cfg: StftConfig) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DspError("stft expects a 1-D signal")
    if len(x) < cfg.n_fft:
        raise DspError(f"waveform too short: {len(x)} < n_fft={cfg.n_fft}")
    if not np.all(np.isfinite(x)):
        raise DspError("waveform contains non-finite samples")
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.n_fft)[:: cfg.hop]
    return np.fft.rfft(frames * get_window(cfg), axis=1)


def istft(spec, cfg: StftConfig, length: int | None = None) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`stft`.

    Output length is ``(T - 1) * hop + n_fft`` unless ``length`` is given, in
    which case the result is cropped or zero-extended. Samples with no window
    support (e.g. sample 0 under a periodic Hann window) come back as zero.
    """
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[1] != cfg.n_bins:
        raise DspError(f"spectrogram shape {spec.shape} does not match n_fft={cfg.n_fft}")
    if not is_cola(cfg.window, cfg.n_fft, cfg.hop):
        raise DspError("istft requires a COLA-satisfying configuration")
    w = get_window(cfg)
    t = spec.shape[0]
    out_len = (t - 1) * cfg.hop + cfg.n_fft if t else 0
    frames = np.fft.irfft(spec, n=cfg.n_fft, axis=1) * w
    out = np.zeros(out_len)
    norm = np.zeros(out_len)
    w2 = w * w
    for i in range(t):
        start = i * cfg.hop
        out[start : start + cfg.n_fft] += frames[i]
        norm[start : start + cfg.n_fft] += w2
    nz = norm > 1e-10 * w2.max()
    out[nz] /= norm[nz]
    out[~nz] = 0.0
    if length is not None:
        if length <= out_len:
            out = out[:length]
        else:
            out = np.concatenate([out, np.zeros(length - out_len)])
    return out


def interior(n_samples: int, cfg: StftConfig) -> slice:
    """Sample range covered by the full ``n_fft / hop`` overlap of frames."""
    t = n_frames(n_samples, cfg)
    return slice(cfg.n_fft - cfg.hop, (t - 1) * cfg.hop + cfg.hop)


def padded_stft(x, cfg: StftConfig) -> np.ndarray:
    """STFT of ``x`` zero-padded so every sample sits in the frame interior."""
    x = np.asarray(x, dtype=np.float64)
    pad = cfg.n_fft
    tail = (-(len(x) + 2 * pad - cfg.n_fft)) % cfg.hop
    return stft(np.concatenate([np.zeros(pad), x, np.zeros(pad + tail)]), cfg)


def padded_istft(spec, cfg: StftConfig, length: int) -> np.ndarray:
    """Inverse of :func:`padded_stft`, returning exactly ``length`` samples."""
    y = istft(spec, cfg)
    return y[cfg.n_fft : cfg.n_fft + length]


def decompose(spec) -> tuple[np.ndarray, np.ndarray]:
    """Split a complex spectrogram into magnitude and phase.

    Zero bins get phase 0; ``np.arctan2(0, 0)`` already returns 0 but ``-0.0``
    imaginary parts would give ``pi``, so the convention is enforced here.
    """
    spec = np.asarray(spec)
    if not np.all(np.isfinite(spec)):
        raise DspError("spectrogram contains non-finite entries")
    real, imag = spec.real, spec.imag
    mag = np.hypot(real, imag)
    phase = np.arctan2(imag, real)
    phase[mag == 0] = 0.0
    # arctan2 returns -pi for (negative, -0.0); fold onto the principal range
    phase[phase <= -np.pi] = np.pi
    return mag, phase


def recompose(mag, phase) -> np.ndarray:
    mag = np.asarray(mag, dtype=np.float64)
    phase = np.asarray(phase, dtype=np.float64)
    if mag.shape != phase.shape:
        raise DspError(f"shape mismatch: magnitude {mag.shape} vs phase {phase.shape}")
    if np.any(mag < 0):
        raise DspError("magnitudes must be non-negative")
    out = np.empty(mag.shape, dtype=np.complex128)
    out.real = mag * np.cos(phase)
    out.imag = mag * np.sin(phase)
    return out


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=16)
def _mel_filterbank(sample_rate: int, n_fft: int, n_mels: int) -> np.ndarray:
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb.setflags(write=False)
    return fb


def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int = 128) -> np.ndarray:
    """HTK-scale triangular filters, peak height 1, shape ``(n_mels, bins)``."""
    if n_mels < 1:
        raise DspError("n_mels must be >= 1")
    if sample_rate <= 0:
        raise DspError("sample_rate must be positive")
    return _mel_filterbank(int(sample_rate), int(n_fft), int(n_mels))


def mel_project(mag, sample_rate: int = DEFAULT_SAMPLE_RATE, n_mels: int = 128) -> np.ndarray:
    """Project a magnitude spectrogram's power onto the mel filterbank."""
    mag = np.asarray(mag, dtype=np.float64)
    if not np.all(np.isfinite(mag)) or np.any(mag < 0):
        raise DspError("magnitudes must be finite and non-negative")
    n_fft = 2 * (mag.shape[-1] - 1)
    fb = mel_filterbank(sample_rate, n_fft, n_mels)
    return (mag * mag) @ fb.T
