"""Kernel backend selection.

The compiled extension is preferred when present; the pure-numpy fallback
is used otherwise. ``EASECP_BACKEND`` overrides: ``compiled`` (error if the
extension is missing), ``python``, or ``auto`` (default). Both backends
return bit-identical results, so the choice only affects speed.
"""

import os

from . import _kernels_np
from .errors import ConfigError

_MODE = os.environ.get("EASECP_BACKEND", "auto").lower()
if _MODE not in ("auto", "compiled", "python"):
    raise ConfigError(f"EASECP_BACKEND must be auto|compiled|python, got {_MODE!r}")

_impl = None
if _MODE in ("auto", "compiled"):
    try:
        from . import _kernels_cy as _impl  # type: ignore[no-redef]
    except ImportError:
        if _MODE == "compiled":
            raise ConfigError(
                "EASECP_BACKEND=compiled but the easecp._kernels_cy extension "
                "is not built; reinstall the package or use EASECP_BACKEND=python"
            ) from None
if _impl is None:
    _impl = _kernels_np

BACKEND_NAME = _impl.BACKEND_NAME

KIND_LAC = _kernels_np.KIND_LAC
KIND_APS = _kernels_np.KIND_APS
KIND_RAPS = _kernels_np.KIND_RAPS
KIND_SAPS = _kernels_np.KIND_SAPS

keyed_uniform_matrix = _impl.keyed_uniform_matrix
keyed_uniform_true = _impl.keyed_uniform_true
score_matrix = _impl.score_matrix
true_scores = _impl.true_scores
property_count = _impl.property_count
