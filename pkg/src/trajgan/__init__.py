"""Multi-agent trajectory forecasting with distance-sorted social features,
dual soft attention, and an LSTM-based conditional GAN, built on a
self-contained reverse-mode autodiff engine."""

import ctypes
import ctypes.util
import os

# single-threaded BLAS keeps results bit-reproducible across runs; only
# effective if set before numpy initializes its backend
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

# keep large allocations inside the malloc arena so freed graph buffers are
# reused across training steps; first-touch page faults dominate otherwise
try:
    _libc = ctypes.CDLL(ctypes.util.find_library("c") or "libc.so.6")
    _libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD
    _libc.mallopt(-1, 1 << 30)  # M_TRIM_THRESHOLD
except (OSError, AttributeError):  # non-glibc platforms
    pass

from .autodiff import Tensor, backward  # noqa: E402
from .model import ModelConfig, TrajGanModel, make_batch, parse_mode  # noqa: E402
from .synth import SceneSpec, generate_synthetic_scene  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "Tensor", "backward", "ModelConfig", "TrajGanModel", "make_batch",
    "parse_mode", "SceneSpec", "generate_synthetic_scene", "__version__",
]
