"""Selects the compiled kernels when built, else the numpy fallbacks.

Set ``PERMSEC_PURE=1`` to force the fallbacks.
"""

import os

from . import _dense_py, _orbits_py

if os.environ.get("PERMSEC_PURE") == "1":
    _orbits = _dense = None
else:
    try:
        from . import _dense, _orbits
    except ImportError:
        _orbits = _dense = None

BACKEND = "cython" if _orbits is not None else "numpy"
orbit_table = _orbits.orbit_table if _orbits is not None else _orbits_py.orbit_table
orbit_table_fallback = _orbits_py.orbit_table
affine = _dense.affine if _dense is not None else _dense_py.affine
affine_fallback = _dense_py.affine
