"""Latent-diffusion trajectory planner, desk scale."""

import os

# Single-threaded BLAS keeps training and sampling bit-reproducible across
# runs on the same machine. Must be set before numpy is first imported.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

__version__ = "0.1.0"
