"""Backend selection for the hot kernels.

The compiled module is used when it imports; setting RPMONO_NO_EXT=1 forces
the pure-Python fallback.
"""
import os

from rpmono import _fallback

BACKEND = "python"
_impl = _fallback

if not os.environ.get("RPMONO_NO_EXT"):
    try:
        from rpmono import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback

ham_apply = _impl.ham_apply
worm_run = _impl.worm_run


def get_backend(name: str | None = None):
    """Return the kernel module by name ('compiled' or 'python'); None = active."""
    if name is None:
        return _impl
    if name == "python":
        return _fallback
    if name == "compiled":
        from rpmono import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
