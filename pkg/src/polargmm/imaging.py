"""Pixel-space rigid warps shared by the simulator, centering and averaging.

Coordinates: ``x`` runs along columns and ``y`` along rows, both measured
from the frame center ``(L // 2, L // 2)``. A shift ``t = (tx, ty)`` moves
content by ``tx`` columns and ``ty`` rows. A rotation by ``alpha`` is the
one under which steerable coefficients advance their phase by
``alpha * omega`` (counterclockwise on screen, with rows pointing down).
"""

import numpy as np
from scipy import ndimage


def frame_center(L):
    return L // 2


def centered_grid(L):
    """Return ``(x, y)`` pixel coordinate arrays relative to the frame center."""
    c = frame_center(L)
    ax = np.arange(L, dtype=float) - c
    x, y = np.meshgrid(ax, ax, indexing="xy")
    return x, y


def rigid_warp(image, alpha=0.0, shift=(0.0, 0.0), fill=0.0):
    """Shift ``image`` by ``shift`` and then rotate it by ``alpha``.

    The output satisfies ``out(p) = image(R(alpha) p - shift)`` with bilinear
    interpolation; samples from outside the frame take the value ``fill``
    (zero by default). This is the image-space counterpart of applying
    ``T_shift`` followed by ``R_alpha`` to a coefficient vector.
    """
    image = np.asarray(image)
    L = image.shape[-1]
    x, y = centered_grid(L)
    ca, sa = np.cos(alpha), np.sin(alpha)
    src_x = ca * x - sa * y - shift[0]
    src_y = sa * x + ca * y - shift[1]
    c = frame_center(L)
    coords = np.stack([src_y + c, src_x + c])
    if np.iscomplexobj(image):
        re = ndimage.map_coordinates(image.real, coords, order=1, mode="constant",
                                     cval=float(np.real(fill)))
        im = ndimage.map_coordinates(image.imag, coords, order=1, mode="constant",
                                     cval=float(np.imag(fill)))
        return re + 1j * im
    return ndimage.map_coordinates(image, coords, order=1, mode="constant", cval=float(fill))


def shift_image(image, shift, fill=0.0):
    return rigid_warp(image, 0.0, shift, fill)


def rotate_image(image, alpha):
    return rigid_warp(image, alpha, (0.0, 0.0))


def inverse_pose(alpha, shift):
    """Parameters ``(alpha', shift')`` of the warp undoing ``rigid_warp(., alpha, shift)``."""
    ca, sa = np.cos(alpha), np.sin(alpha)
    # undo: q = R(-alpha)(p + shift)
    sx = ca * shift[0] + sa * shift[1]
    sy = -sa * shift[0] + ca * shift[1]
    return -alpha, (-sx, -sy)
