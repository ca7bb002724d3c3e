"""Leaf phenotype toolkit: ingestion, shape/color indicators, LGCI
scoring, detection/segmentation evaluation, reference network kernels,
and loss functions."""

__version__ = "0.1.0"
