"""Attention kernel selection: compiled extension if built, numpy otherwise.

Set REVSEG_PURE=1 to force the numpy fallback (useful for benchmarking and
for debugging kernel discrepancies).
"""

from __future__ import annotations

import os

from revseg import _attention_py

if os.environ.get("REVSEG_PURE") == "1":
    _impl = _attention_py
else:
    try:
        from revseg import _attention_c as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _attention_py

attend = _impl.attend


def kernel_name() -> str:
    return "compiled" if _impl.__name__.endswith("_attention_c") else "numpy"
