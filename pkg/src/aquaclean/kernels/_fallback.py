"""Pure-numpy implementations of the image and matching kernels.

Every routine here fixes its floating-point operation order so that the
compiled twin in ``_ckernels.pyx`` produces bit-identical results.
"""
import numpy as np

__all__ = ["demosaic_bilinear", "median3x3", "nearest_sq"]


def demosaic_bilinear(mosaic):
    """Bilinear RGGB demosaic with mirror borders.

    Parameters
    ----------
    mosaic : ndarray, shape (H, W)
        Raw samples; H and W must be even.

    Returns
    -------
    ndarray, shape (H, W, 3)
    """
    m = np.ascontiguousarray(mosaic, dtype=np.float64)
    h, w = m.shape
    p = np.pad(m, 1, mode="reflect")
    up = p[0:h, 1:w + 1]
    down = p[2:h + 2, 1:w + 1]
    left = p[1:h + 1, 0:w]
    right = p[1:h + 1, 2:w + 2]
    ul = p[0:h, 0:w]
    ur = p[0:h, 2:w + 2]
    dl = p[2:h + 2, 0:w]
    dr = p[2:h + 2, 2:w + 2]

    cross = ((up + down) + (left + right)) * 0.25
    diag = ((ul + ur) + (dl + dr)) * 0.25
    horiz = (left + right) * 0.5
    vert = (up + down) * 0.5

    out = np.empty((h, w, 3), dtype=np.float64)
    r, g, b = out[..., 0], out[..., 1], out[..., 2]

    # R sites (even, even)
    r[0::2, 0::2] = m[0::2, 0::2]
    g[0::2, 0::2] = cross[0::2, 0::2]
    b[0::2, 0::2] = diag[0::2, 0::2]
    # G sites on R rows (even, odd)
    r[0::2, 1::2] = horiz[0::2, 1::2]
    g[0::2, 1::2] = m[0::2, 1::2]
    b[0::2, 1::2] = vert[0::2, 1::2]
    # G sites on B rows (odd, even)
    r[1::2, 0::2] = vert[1::2, 0::2]
    g[1::2, 0::2] = m[1::2, 0::2]
    b[1::2, 0::2] = horiz[1::2, 0::2]
    # B sites (odd, odd)
    r[1::2, 1::2] = diag[1::2, 1::2]
    g[1::2, 1::2] = cross[1::2, 1::2]
    b[1::2, 1::2] = m[1::2, 1::2]
    return out


def median3x3(channel):
    """3x3 median of a single channel, borders clamped to the edge pixel."""
    c = np.ascontiguousarray(channel, dtype=np.float64)
    h, w = c.shape
    p = np.pad(c, 1, mode="edge")
    stack = np.stack([p[i:i + h, j:j + w] for i in range(3) for j in range(3)])
    stack.sort(axis=0)
    return stack[4].copy()


def nearest_sq(query, matrix):
    """Index and squared Euclidean distance of the closest row.

    Squared distances accumulate feature by feature, left to right.
    Ties resolve to the lowest row index. Returns ``(-1, inf)`` for an
    empty matrix.
    """
    mat = np.asarray(matrix, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64)
    if mat.shape[0] == 0:
        return -1, float("inf")
    acc = np.zeros(mat.shape[0], dtype=np.float64)
    for j in range(mat.shape[1]):
        diff = mat[:, j] - q[j]
        acc += diff * diff
    idx = int(np.argmin(acc))
    return idx, float(acc[idx])
