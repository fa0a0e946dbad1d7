"""Hot-loop kernels with runtime backend selection (see `_backend`)."""

from .. import _backend

if _backend.HAS_NUMBA:
    from . import _numba as _impl
else:
    from . import _numpy as _impl

median_blur_u8 = _impl.median_blur_u8
ppht = _impl.ppht
render_scene = _impl.render_scene

__all__ = ["median_blur_u8", "ppht", "render_scene"]
