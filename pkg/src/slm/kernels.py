"""Backend selection for the GIS expectation kernel.

The compiled extension is used when it was built; otherwise, or when
``SLM_PURE_PYTHON=1`` is set, the numpy implementation is used.
"""

import os

from slm import _gis_py

python_accumulate_shard = _gis_py.accumulate_shard

try:
    from slm._gis_kernel import accumulate_shard as compiled_accumulate_shard
except ImportError:  # extension not built
    compiled_accumulate_shard = None

if compiled_accumulate_shard is not None and os.environ.get("SLM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    accumulate_shard = compiled_accumulate_shard
    BACKEND = "cython"
else:
    accumulate_shard = python_accumulate_shard
    BACKEND = "python"
