"""Mono 16-bit PCM WAV reading and writing."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .dsp import DEFAULT_SAMPLE_RATE, Waveform


class WavFormatError(ValueError):
    pass


def read_wav(path, expected_rate: int | None = DEFAULT_SAMPLE_RATE) -> Waveform:
    """Read a mono 16-bit WAV, scaled to [-1, 1) by dividing by 32768.

    Files at any rate other than ``expected_rate`` are rejected; nothing is
    resampled.
    """
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as f:
            channels, width, rate = f.getnchannels(), f.getsampwidth(), f.getframerate()
            raw = f.readframes(f.getnframes())
    except (wave.Error, EOFError) as exc:
        raise WavFormatError(f"{path}: not a readable PCM WAV ({exc})") from exc
    if channels != 1:
        raise WavFormatError(f"{path}: expected mono, got {channels} channels")
    if width != 2:
        raise WavFormatError(f"{path}: expected 16-bit samples, got {8 * width}-bit")
    if expected_rate is not None and rate != expected_rate:
        raise WavFormatError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    pcm = np.frombuffer(raw, dtype="<i2")
    return Waveform(pcm.astype(np.float64) / 32768.0, rate)


def quantize(samples) -> np.ndarray:
    """Saturate to [-1, 1] and round to int16 PCM."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    return np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")


def write_wav(path, wav: Waveform) -> None:
    path = Path(path)
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(wav.sample_rate)
        f.writeframes(quantize(wav.samples).tobytes())
