"""Long time-series forecasting with learnable frequency filters on a transformer backbone."""

import os as _os

# SPECTRAL_FORECASTER_THREADS caps the BLAS worker pools. It must be applied
# before numpy loads its backend, which is why it lives up here; explicit
# backend-specific variables set by the user always win.
_threads = _os.environ.get("SPECTRAL_FORECASTER_THREADS")
if _threads:
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS",
                 "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"
