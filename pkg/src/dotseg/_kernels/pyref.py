"""Pure-numpy fallback for the data-movement kernels.

Both backends must stay bit-identical: anything that multiplies and
accumulates goes through numpy's GEMM in the callers, and these kernels
only rearrange memory (plus the max/argmax scan, whose tie rule is
"first index wins" in both implementations).
"""

import numpy as np

NAME = "numpy"


def im2col3x3(x):
    """(C, H, W) -> (C*9, H*W) patch matrix for a 3x3, pad-1 convolution."""
    c, h, w = x.shape
    xp = np.zeros((c, h + 2, w + 2), dtype=x.dtype)
    xp[:, 1:-1, 1:-1] = x
    cols = np.empty((c, 9, h * w), dtype=x.dtype)
    for k in range(9):
        di, dj = divmod(k, 3)
        cols[:, k, :] = xp[:, di:di + h, dj:dj + w].reshape(c, h * w)
    return cols.reshape(c * 9, h * w)


def col2im3x3(cols, h, w):
    """Adjoint of :func:`im2col3x3`: overlap-add back to (C, H, W)."""
    c = cols.shape[0] // 9
    cols = cols.reshape(c, 9, h * w)
    xp = np.zeros((c, h + 2, w + 2), dtype=cols.dtype)
    for k in range(9):
        di, dj = divmod(k, 3)
        xp[:, di:di + h, dj:dj + w] += cols[:, k, :].reshape(c, h, w)
    return np.ascontiguousarray(xp[:, 1:-1, 1:-1])


def maxpool2x2(x):
    """2x2 stride-2 max pool.

    Returns (pooled, idx) where idx in {0,1,2,3} encodes the argmax
    corner (row-major within the window, first maximum wins ties).
    """
    c, h, w = x.shape
    win = x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4)
    win = np.ascontiguousarray(win).reshape(c, h // 2, w // 2, 4)
    idx = win.argmax(axis=3).astype(np.uint8)
    pooled = np.take_along_axis(win, idx[..., None].astype(np.intp), axis=3)
    return np.ascontiguousarray(pooled[..., 0]), idx


def maxpool2x2_scatter(dy, idx, h, w):
    """Route each pooled value back to its argmax corner; rest zero."""
    c, hh, ww = dy.shape
    buf = np.zeros((c, hh, ww, 4), dtype=dy.dtype)
    np.put_along_axis(buf, idx[..., None].astype(np.intp), dy[..., None], axis=3)
    out = buf.reshape(c, hh, ww, 2, 2).transpose(0, 1, 3, 2, 4)
    return np.ascontiguousarray(out).reshape(c, h, w)
