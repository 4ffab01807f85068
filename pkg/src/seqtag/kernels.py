"""Backend selection for the hot loops.

The compiled extension is used when it imports; ``SEQTAG_KERNELS=python``
forces the numpy fallback.  Both modules expose the same four functions.
"""
import os

from . import _kernels_py

python_backend = _kernels_py
compiled_backend = None

try:
    from . import _kernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and os.environ.get("SEQTAG_KERNELS", "").lower() != "python":
    active = compiled_backend
else:
    active = _kernels_py

BACKEND = active.BACKEND


def available_backends():
    return [m for m in (compiled_backend, python_backend) if m is not None]


def gru_forward(*args):
    return active.gru_forward(*args)


def gru_backward(*args):
    return active.gru_backward(*args)


def crf_forward_backward(*args):
    return active.crf_forward_backward(*args)


def crf_viterbi(*args):
    return active.crf_viterbi(*args)
