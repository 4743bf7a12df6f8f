"""Pure numpy versions of the hot kernels.

Used when the compiled extension is missing or explicitly deselected. Results
must match ``_ckernels`` bit for bit; the accumulation order in
``col2im3x3`` (kernel row, then kernel column) is part of that contract.
"""
import numpy as np


def im2col3x3(x):
    """Expand a C x H x W image into a (C*9) x (H*W) patch matrix.

    Row ``c*9 + ky*3 + kx`` holds input[c, y+ky-1, x+kx-1] for every output
    pixel (y, x), with zeros outside the image.
    """
    C, H, W = x.shape
    padded = np.zeros((C, H + 2, W + 2), dtype=x.dtype)
    padded[:, 1:H + 1, 1:W + 1] = x
    cols = np.empty((C, 3, 3, H, W), dtype=x.dtype)
    for ky in range(3):
        for kx in range(3):
            cols[:, ky, kx] = padded[:, ky:ky + H, kx:kx + W]
    return cols.reshape(C * 9, H * W)


def col2im3x3(cols, H, W):
    """Adjoint of :func:`im2col3x3`: scatter-add patch rows back onto the image."""
    C = cols.shape[0] // 9
    c = cols.reshape(C, 3, 3, H, W)
    padded = np.zeros((C, H + 2, W + 2), dtype=cols.dtype)
    for ky in range(3):
        for kx in range(3):
            padded[:, ky:ky + H, kx:kx + W] += c[:, ky, kx]
    return np.ascontiguousarray(padded[:, 1:H + 1, 1:W + 1])


def maxpool2x2_forward(x):
    N, C, H, W = x.shape
    Ho, Wo = H // 2, W // 2
    win = x[:, :, :2 * Ho, :2 * Wo].reshape(N, C, Ho, 2, Wo, 2)
    win = win.transpose(0, 1, 2, 4, 3, 5).reshape(N, C, Ho, Wo, 4)
    # np.argmax returns the first maximum; window order is row-major so that
    # is the lowest flat index.
    k = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, k[..., None], axis=-1)[..., 0]
    n = np.arange(N)[:, None, None, None]
    ch = np.arange(C)[None, :, None, None]
    y = 2 * np.arange(Ho)[None, None, :, None] + k // 2
    xx = 2 * np.arange(Wo)[None, None, None, :] + k % 2
    idx = ((n * C + ch) * H + y) * W + xx
    return np.ascontiguousarray(out), idx.astype(np.int64)


def maxpool2x2_backward(d_out, idx, in_shape):
    dx = np.zeros(int(np.prod(in_shape)), dtype=d_out.dtype)
    # windows never overlap, so every target index is unique
    dx[idx.ravel()] = d_out.ravel()
    return dx.reshape(in_shape)
