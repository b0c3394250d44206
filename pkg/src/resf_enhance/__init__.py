"""Restore oversubtracted low-frequency speech with a compensate-then-denoise
mask pair, processed incrementally over streamed audio buffers."""

__version__ = "0.1.0"
