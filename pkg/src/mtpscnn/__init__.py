"""Photometric stereo: synthetic rendering, a least-squares baseline and a
two-stage inter/intra-frame convolutional normal estimator."""

__version__ = "0.1.0"
