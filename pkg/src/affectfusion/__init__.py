"""Multimodal affect decoding from facial landmarks and peripheral physiology,
fused through joint recurrence plots and recurrence-network metrics."""

__version__ = "0.1.0"
