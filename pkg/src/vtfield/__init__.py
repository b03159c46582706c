"""Visuo-tactile implicit fields for in-hand pose and extrinsic contact estimation."""

__version__ = "0.1.0"
