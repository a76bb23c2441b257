"""Steerable shape synthesis: conditioned SDF auto-decoders over mesh populations."""

import os as _os

# the TBB layer probe warns on this image; OpenMP works everywhere we run
_os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

__version__ = "0.1.0"
