"""Bit-exact emulator of a sequential multi-precision 1D-CNN accelerator
for UAV acoustic detection: quantization, pruning, inference, cycle-level
timing, and the acoustic feature front-end, behind a batch CLI."""

__version__ = "0.1.0"
