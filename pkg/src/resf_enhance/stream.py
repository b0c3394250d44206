"""Incremental processing of streamed audio buffers.

Buffers of 170 ms are grouped three at a time into 510 ms blocks. Each
completed block is appended to a four-block (2,040 ms) context window
whose missing history is zero, the earliest block is evicted, the enhancer
runs on the whole window, and the window's final block is emitted.
"""

from __future__ import annotations

from collections import deque
from typing import Callable, Iterator, Protocol

import numpy as np
from pydantic import Field

from ._base import StrictModel
from .dsp import DEFAULT_SAMPLE_RATE


class StreamError(ValueError):
    pass


class StreamGeometry(StrictModel):
    sample_rate: int = Field(DEFAULT_SAMPLE_RATE, gt=0)
    buffer_ms: float = Field(170.0, gt=0)
    buffers_per_block: int = Field(3, ge=1)
    blocks_per_window: int = Field(4, ge=1)
    # 0 disables the crossfade between consecutive emitted blocks
    crossfade_ms: float = Field(0.0, ge=0)

    @property
    def buffer_len(self) -> int:
        n = self.sample_rate * self.buffer_ms / 1000.0
        if abs(n - round(n)) > 1e-9:
            raise StreamError(f"{self.buffer_ms} ms is not a whole number of samples")
        return int(round(n))

    @property
    def block_len(self) -> int:
        return self.buffer_len * self.buffers_per_block

    @property
    def window_len(self) -> int:
        return self.block_len * self.blocks_per_window

    @property
    def crossfade_len(self) -> int:
        n = int(round(self.sample_rate * self.crossfade_ms / 1000.0))
        if n >= self.block_len:
            raise StreamError("crossfade must be shorter than a block")
        return n


class Enhancer(Protocol):
    def enhance(self, window: np.ndarray) -> np.ndarray: ...


class IdentityEnhancer:
    def enhance(self, window: np.ndarray) -> np.ndarray:
        return window


class FunctionEnhancer:
    def __init__(self, fn: Callable[[np.ndarray], np.ndarray]):
        self.fn = fn

    def enhance(self, window: np.ndarray) -> np.ndarray:
        return self.fn(window)


class StreamState:
    """Single-writer incremental-processing state machine.

    ``push_buffer`` and ``flush`` must be serialised per instance; separate
    instances share nothing.
    """

    def __init__(self, geometry: StreamGeometry | None = None):
        self.geometry = geometry or StreamGeometry()
        g = self.geometry
        zero = np.zeros(g.block_len)
        self._ring: deque[np.ndarray] = deque([zero] * g.blocks_per_window, maxlen=g.blocks_per_window)
        self._pending: list[np.ndarray] = []
        self.blocks_done = 0
        self.buffers_in = 0
        self.samples_out = 0
        self._held: np.ndarray | None = None  # crossfade tail not yet emitted

    @property
    def pending(self) -> int:
        return len(self._pending)

    def assemble_window(self) -> np.ndarray:
        return np.concatenate(list(self._ring))

    def _ingest(self, block: np.ndarray, enhancer: Enhancer) -> np.ndarray:
        g = self.geometry
        self._ring.append(block)
        self.blocks_done += 1
        window = self.assemble_window()
        out = np.asarray(enhancer.enhance(window.copy()), dtype=np.float64)
        if out.shape != window.shape:
            raise StreamError(f"enhancer changed window length {len(window)} -> {out.shape}")
        return self._emit(out, g.block_len)

    def _emit(self, enhanced: np.ndarray, n_new: int) -> np.ndarray:
        fade = self.geometry.crossfade_len
        new = enhanced[len(enhanced) - n_new :]
        if fade == 0:
            return new.copy()
        # the current window re-enhances the last `fade` samples of the
        # previous block; blend them with the held-back earlier estimate
        overlap = enhanced[len(enhanced) - n_new - fade : len(enhanced) - n_new]
        ramp = 0.5 - 0.5 * np.cos(np.pi * (np.arange(fade) + 0.5) / fade)
        head = np.empty(0) if self._held is None else self._held * (1 - ramp) + overlap * ramp
        self._held = new[-fade:].copy()
        return np.concatenate([head, new[:-fade]])

    def push_buffer(self, buf, enhancer: Enhancer) -> np.ndarray | None:
        g = self.geometry
        buf = np.asarray(buf, dtype=np.float64)
        if buf.ndim != 1 or len(buf) != g.buffer_len:
            raise StreamError(f"buffer must hold exactly {g.buffer_len} samples, got {buf.shape}")
        self._pending.append(buf.copy())
        self.buffers_in += 1
        if len(self._pending) < g.buffers_per_block:
            return None
        block = np.concatenate(self._pending)
        self._pending = []
        out = self._ingest(block, enhancer)
        self.samples_out += len(out)
        return out

    def flush(self, enhancer: Enhancer) -> np.ndarray | None:
        """Process any partial block, zero-padded, and release held samples.

        The returned audio is trimmed so that total output length equals
        total input length.
        """
        g = self.geometry
        parts = []
        if self._pending:
            real = sum(len(b) for b in self._pending)
            block = np.concatenate(self._pending + [np.zeros(g.block_len - real)])
            self._pending = []
            parts.append(self._ingest(block, enhancer))
            pad = g.block_len - real
        else:
            pad = 0
        if self._held is not None:
            parts.append(self._held)
            self._held = None
        if not parts:
            return None
        out = np.concatenate(parts)
        out = out[: len(out) - pad]
        self.samples_out += len(out)
        return out if len(out) else None


def iter_buffers(x, geometry: StreamGeometry) -> Iterator[np.ndarray]:
    """Slice a signal into whole buffers followed by one short remainder."""
    x = np.asarray(x, dtype=np.float64)
    n = geometry.buffer_len
    for start in range(0, len(x), n):
        yield x[start : start + n]


def stream_signal(x, enhancer: Enhancer, geometry: StreamGeometry | None = None) -> np.ndarray:
    """Drive a fresh :class:`StreamState` over ``x`` and concatenate emissions.

    A trailing partial buffer is zero-padded to a full buffer before being
    pushed; flush then trims the padding away.
    """
    geometry = geometry or StreamGeometry()
    state = StreamState(geometry)
    n = geometry.buffer_len
    outputs = []
    tail = 0
    for buf in iter_buffers(x, geometry):
        if len(buf) < n:
            tail = n - len(buf)
            buf = np.concatenate([buf, np.zeros(tail)])
        out = state.push_buffer(buf, enhancer)
        if out is not None:
            outputs.append(out)
    last = state.flush(enhancer)
    if last is not None:
        outputs.append(last)
    y = np.concatenate(outputs) if outputs else np.zeros(0)
    return y[: len(y) - tail] if tail else y


def stream_windows(x, geometry: StreamGeometry | None = None) -> Iterator[np.ndarray]:
    """Windows an enhancer sees when :func:`stream_signal` processes ``x``.

    Computed from block arithmetic alone, so a reference signal can be
    windowed in lockstep with the stream that processes its noisy twin.
    """
    geometry = geometry or StreamGeometry()
    x = np.asarray(x, dtype=np.float64)
    block = geometry.block_len
    n_blocks = -(-len(x) // block)
    padded = np.concatenate([np.zeros(geometry.window_len - block), x, np.zeros(n_blocks * block - len(x))])
    for k in range(1, n_blocks + 1):
        yield padded[(k - 1) * block : (k - 1) * block + geometry.window_len]
