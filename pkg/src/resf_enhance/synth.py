"""Synthetic voiced-speech and ego-speech generators for tests and demos."""

from __future__ import annotations

import numpy as np

from .dsp import DEFAULT_SAMPLE_RATE, Waveform


def harmonic_utterance(
    rng: np.random.Generator,
    duration_s: float = 2.04,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    f0_range: tuple[float, float] = (100.0, 300.0),
    n_harmonics: int = 5,
    level: float = 0.1,
) -> Waveform:
    """Voiced utterance: a gliding F0 with ``n_harmonics`` partials at 1/h
    amplitude, gated into syllables by a smooth envelope."""
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    f0_start = rng.uniform(*f0_range)
    f0_end = np.clip(f0_start * rng.uniform(0.9, 1.1), *f0_range)
    f0 = np.linspace(f0_start, f0_end, n) * (1 + 0.01 * np.sin(2 * np.pi * 5.0 * t))
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    x = sum(np.sin(h * phase + rng.uniform(0, 2 * np.pi)) / h for h in range(1, n_harmonics + 1))
    n_syll = max(1, int(duration_s * rng.uniform(2.0, 4.0)))
    env = np.zeros(n)
    for centre in rng.uniform(0.1, duration_s - 0.1, n_syll):
        width = rng.uniform(0.08, 0.2)
        env += np.exp(-0.5 * ((t - centre) / width) ** 2)
    env = np.minimum(env, 1.0)
    x = x * env
    return Waveform(level * x / np.max(np.abs(x)), sample_rate)


def ego_voice(
    rng: np.random.Generator,
    duration_s: float = 2.04,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    level: float = 0.1,
) -> Waveform:
    """Robot-like ego speech: a steady low F0 harmonic buzz plus low-passed
    noise, so the FFR is densely covered."""
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    f0 = rng.uniform(90.0, 140.0)
    x = sum(np.sin(2 * np.pi * h * f0 * t + rng.uniform(0, 2 * np.pi)) / h**2 for h in range(1, 5))
    noise = rng.standard_normal(n)
    spec = np.fft.rfft(noise)
    freqs = np.fft.rfftfreq(n, 1 / sample_rate)
    spec /= 1 + (freqs / 300.0) ** 12
    x = x + 2.0 * np.fft.irfft(spec, n) / np.std(np.fft.irfft(spec, n))
    return Waveform(level * x / np.max(np.abs(x)), sample_rate)


def white_noise(rng: np.random.Generator, n: int, sample_rate: int = DEFAULT_SAMPLE_RATE, level: float = 0.05) -> Waveform:
    return Waveform(level * rng.standard_normal(n), sample_rate)
