"""Waveform-level enhancement: STFT, mask pair, recombination with the
noisy phase, inverse STFT. Drives either fixed segments or the stream."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .dsp import DEFAULT_SAMPLE_RATE, StftConfig, decompose, padded_istft, padded_stft, recompose
from .simulate import FfrBand
from .stream import StreamGeometry, stream_signal, stream_windows
from .twomask import MaskGenerator, OracleGenerator, band_mask, enhance_magnitude


class MaskEnhancer:
    """Window enhancer backed by a mask generator.

    With ``magnitude_exponent`` below 1 the masks operate on compressed
    magnitudes, which are expanded again before recombination.
    """

    def __init__(
        self,
        generator: MaskGenerator,
        stft_cfg: StftConfig | None = None,
        ffr: FfrBand | None = None,
        sample_rate: int = DEFAULT_SAMPLE_RATE,
    ):
        self.generator = generator
        self.stft_cfg = stft_cfg or StftConfig()
        self.ffr = ffr or FfrBand()
        self.sample_rate = sample_rate

    def masks_for(self, mag: np.ndarray):
        return self.generator.generate(mag)

    def enhance(self, window: np.ndarray) -> np.ndarray:
        cfg = self.stft_cfg
        mag, phase = decompose(padded_stft(window, cfg))
        p = cfg.magnitude_exponent
        mag_c = mag**p if p != 1 else mag
        masks = self.masks_for(mag_c)
        masks.validate(band_mask(self.ffr, mag.shape[1], self.sample_rate), mag.shape)
        out = enhance_magnitude(mag_c, masks)
        if p != 1:
            out = out ** (1.0 / p)
        return padded_istft(recompose(out, phase), cfg, len(window))


class OracleEnhancer(MaskEnhancer):
    """Uses oracle masks against clean reference windows consumed in order,
    one per ``enhance`` call."""

    def __init__(self, targets: Iterator[np.ndarray], stft_cfg=None, ffr=None, sample_rate=DEFAULT_SAMPLE_RATE):
        super().__init__(None, stft_cfg, ffr, sample_rate)
        self.targets = iter(targets)

    def masks_for(self, mag):
        try:
            target = next(self.targets)
        except StopIteration:
            raise RuntimeError("oracle enhancer ran out of reference windows") from None
        clean = np.abs(padded_stft(target, self.stft_cfg)) ** self.stft_cfg.magnitude_exponent
        return OracleGenerator(clean, self.ffr, self.sample_rate).generate(mag)


def segment_windows(x, segment_len: int) -> Iterator[np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    for start in range(0, len(x), segment_len):
        seg = x[start : start + segment_len]
        yield np.concatenate([seg, np.zeros(segment_len - len(seg))])


def enhance_segments(x, enhancer, segment_len: int) -> np.ndarray:
    """Enhance consecutive fixed-length segments independently, without
    context carried between them; the last segment is zero-padded."""
    x = np.asarray(x, dtype=np.float64)
    out = [enhancer.enhance(seg) for seg in segment_windows(x, segment_len)]
    return np.concatenate(out)[: len(x)] if out else np.zeros(0)


def enhance_signal(x, enhancer, geometry: StreamGeometry | None = None, streaming: bool = False) -> np.ndarray:
    geometry = geometry or StreamGeometry()
    if streaming:
        return stream_signal(x, enhancer, geometry)
    return enhance_segments(x, enhancer, geometry.window_len)


def oracle_enhance(
    distorted,
    target,
    geometry: StreamGeometry | None = None,
    streaming: bool = False,
    stft_cfg: StftConfig | None = None,
    ffr: FfrBand | None = None,
) -> np.ndarray:
    geometry = geometry or StreamGeometry()
    distorted = np.asarray(distorted, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if len(distorted) != len(target):
        raise ValueError(f"length mismatch: input {len(distorted)} vs target {len(target)}")
    if streaming:
        windows = stream_windows(target, geometry)
    else:
        windows = segment_windows(target, geometry.window_len)
    enhancer = OracleEnhancer(windows, stft_cfg, ffr, geometry.sample_rate)
    return enhance_signal(distorted, enhancer, geometry, streaming)
