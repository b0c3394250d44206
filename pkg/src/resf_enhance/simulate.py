"""Ego-speech spectral subtraction simulator and global-SNR mixing.

The simulator reproduces the distortion a robot ego-speech filter leaves in
the detected human speech: a known ego waveform is spectrally subtracted
from the mixture with an inflated subtraction factor inside the
fundamental-frequency band, which drives low harmonics to the floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from pydantic import model_validator

from ._base import StrictModel
from .dsp import StftConfig, Waveform, decompose, padded_istft, padded_stft, recompose

NINE_SNRS_DB = (40.0, 35.0, 30.0, 25.0, 20.0, 15.0, 10.0, 5.0, 0.0)
TILE_CROSSFADE_S = 0.010


class SimulationError(ValueError):
    pass


class FfrBand(StrictModel):
    low_hz: float = 50.0
    high_hz: float = 450.0

    @model_validator(mode="after")
    def _check(self):
        if not 0 <= self.low_hz < self.high_hz:
            raise ValueError(f"need 0 <= low_hz < high_hz, got [{self.low_hz}, {self.high_hz}]")
        return self

    def bins(self, n_fft: int, sample_rate: int) -> tuple[int, int]:
        """Inclusive STFT bin range ``(k_low, k_high)`` of the band."""
        if self.high_hz > sample_rate / 2:
            raise SimulationError(f"FFR upper edge {self.high_hz} Hz exceeds Nyquist")
        # round half up, so 1.5 -> 2 regardless of Python's banker's rounding
        k_low = math.floor(self.low_hz * n_fft / sample_rate + 0.5)
        k_high = math.floor(self.high_hz * n_fft / sample_rate + 0.5)
        if k_high < k_low:
            raise SimulationError("FFR bin range is empty")
        return k_low, k_high

    def bin_mask(self, n_fft: int, sample_rate: int) -> np.ndarray:
        k_low, k_high = self.bins(n_fft, sample_rate)
        mask = np.zeros(n_fft // 2 + 1, dtype=bool)
        mask[k_low : k_high + 1] = True
        return mask


class SubtractionConfig(StrictModel):
    oversubtraction_factor: float = 3.0
    base_factor: float = 1.0
    spectral_floor: float = 0.002

    @model_validator(mode="after")
    def _check(self):
        if self.oversubtraction_factor < 1:
            raise ValueError("oversubtraction_factor must be >= 1")
        if self.base_factor < 0:
            raise ValueError("base_factor must be >= 0")
        if not 0 <= self.spectral_floor < 1:
            raise ValueError("spectral_floor must lie in [0, 1)")
        if self.oversubtraction_factor < self.base_factor:
            raise ValueError("oversubtraction_factor must be >= base_factor")
        return self


@dataclass(frozen=True)
class Triplet:
    distortion: Waveform
    target: Waveform
    mixture: Waveform

    def __post_init__(self):
        rates = {self.distortion.sample_rate, self.target.sample_rate, self.mixture.sample_rate}
        if len(rates) != 1:
            raise SimulationError("triplet members must share a sample rate")
        if len(self.distortion) != len(self.target):
            raise SimulationError("distortion and target must have equal length")


def rms(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(np.mean(x * x))) if len(x) else 0.0


def fit_length(noise, n: int, sample_rate: int) -> np.ndarray:
    """Crop ``noise`` to ``n`` samples from offset 0, or tile it with crossfades."""
    noise = np.asarray(noise, dtype=np.float64)
    if len(noise) >= n:
        return noise[:n].copy()
    fade = min(int(round(TILE_CROSSFADE_S * sample_rate)), len(noise) // 2)
    if fade == 0:
        return np.resize(noise, n)
    ramp = 0.5 - 0.5 * np.cos(np.pi * (np.arange(fade) + 0.5) / fade)
    out = noise.copy()
    while len(out) < n:
        joined = out[-fade:] * ramp[::-1] + noise[:fade] * ramp
        out = np.concatenate([out[:-fade], joined, noise[fade:]])
    return out[:n]


def noise_gain(speech, noise, snr_db: float) -> float:
    rs, rn = rms(speech), rms(noise)
    if rn == 0:
        raise SimulationError("noise is silent (RMS = 0)")
    if rs == 0:
        raise SimulationError("speech is silent (RMS = 0)")
    return rs / rn * 10.0 ** (-snr_db / 20.0)


def global_snr_db(speech, scaled_noise) -> float:
    s = np.asarray(speech, dtype=np.float64)
    d = np.asarray(scaled_noise, dtype=np.float64)
    return float(10.0 * np.log10(np.sum(s * s) / np.sum(d * d)))


def scale_noise(speech: Waveform, noise: Waveform, snr_db: float) -> np.ndarray:
    """Noise fitted to the speech length and scaled to hit ``snr_db``."""
    if speech.sample_rate != noise.sample_rate:
        raise SimulationError("speech and noise sample rates differ")
    fitted = fit_length(noise.samples, len(speech), speech.sample_rate)
    return noise_gain(speech.samples, fitted, snr_db) * fitted


def mix_at_snr(speech: Waveform, noise: Waveform, snr_db: float) -> Waveform:
    return Waveform(speech.samples + scale_noise(speech, noise, snr_db), speech.sample_rate)


def subtraction_factors(cfg: SubtractionConfig, ffr: FfrBand, n_fft: int, sample_rate: int) -> np.ndarray:
    alpha = np.full(n_fft // 2 + 1, cfg.base_factor)
    alpha[ffr.bin_mask(n_fft, sample_rate)] = cfg.oversubtraction_factor
    return alpha


def subtract_magnitudes(mix_mag, ego_mag, alpha, floor: float) -> np.ndarray:
    return np.maximum(mix_mag - alpha * ego_mag, floor * mix_mag)


def spectral_subtract(
    mixture: Waveform,
    ego_estimate: Waveform,
    cfg: SubtractionConfig | None = None,
    ffr: FfrBand | None = None,
    stft_cfg: StftConfig | None = None,
) -> Waveform:
    cfg = cfg or SubtractionConfig()
    ffr = ffr or FfrBand()
    stft_cfg = stft_cfg or StftConfig()
    if len(mixture) != len(ego_estimate):
        raise SimulationError(f"length mismatch: mixture {len(mixture)} vs ego {len(ego_estimate)}")
    if mixture.sample_rate != ego_estimate.sample_rate:
        raise SimulationError("mixture and ego estimate sample rates differ")
    mix_mag, mix_phase = decompose(padded_stft(mixture.samples, stft_cfg))
    ego_mag = np.abs(padded_stft(ego_estimate.samples, stft_cfg))
    alpha = subtraction_factors(cfg, ffr, stft_cfg.n_fft, mixture.sample_rate)
    out_mag = subtract_magnitudes(mix_mag, ego_mag, alpha, cfg.spectral_floor)
    y = padded_istft(recompose(out_mag, mix_phase), stft_cfg, len(mixture))
    return Waveform(y, mixture.sample_rate)


def make_triplet(
    human: Waveform,
    ego: Waveform,
    snr_db: float,
    cfg: SubtractionConfig | None = None,
    ffr: FfrBand | None = None,
    stft_cfg: StftConfig | None = None,
) -> Triplet:
    """Overlap ego speech onto human speech at ``snr_db`` and subtract it back out.

    The ego waveform is scaled exactly as in the mixture, so the subtraction
    stage has oracle knowledge of the ego spectrum. If ``ego`` is silent the
    mixture is the human speech itself.
    """
    if rms(ego.samples) == 0:
        mixture = Waveform(human.samples.copy(), human.sample_rate)
        scaled = np.zeros(len(human))
    else:
        scaled = scale_noise(human, ego, snr_db)
        mixture = Waveform(human.samples + scaled, human.sample_rate)
    distortion = spectral_subtract(mixture, Waveform(scaled, human.sample_rate), cfg, ffr, stft_cfg)
    return Triplet(distortion=distortion, target=human, mixture=mixture)


def band_energy(x, band: np.ndarray, stft_cfg: StftConfig | None = None) -> float:
    """Spectral energy of ``x`` inside the boolean bin mask ``band``."""
    stft_cfg = stft_cfg or StftConfig()
    mag = np.abs(padded_stft(np.asarray(x, dtype=np.float64), stft_cfg))
    return float(np.sum(mag[:, band] ** 2))


def band_energy_ratio(x, reference, band: np.ndarray, stft_cfg: StftConfig | None = None) -> float:
    ref = band_energy(reference, band, stft_cfg)
    if ref == 0:
        raise SimulationError("reference has no energy in the band")
    return band_energy(x, band, stft_cfg) / ref
