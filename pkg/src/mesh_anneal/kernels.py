"""Kernel selection: compiled extension when importable, else pure Python.

Set ``MESH_ANNEAL_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
if os.environ.get("MESH_ANNEAL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py

MeshEvaluator = _impl.MeshEvaluator
PyMeshEvaluator = _kernels_py.MeshEvaluator
