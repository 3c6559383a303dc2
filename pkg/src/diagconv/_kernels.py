"""Compiled inner loops.

All loops accumulate in the element type of their output and in a fixed
sequential order, with no fast-math reassociation, so results are
reproducible bit for bit and match the lowered (im2col + naive GEMM) paths.
"""

from numba import njit


@njit(cache=True)
def gemm_naive_into(a, b, out):
    # i-k-j order: each out[i, j] still sums k = 0, 1, ... in sequence
    m, kd = a.shape
    n = b.shape[1]
    for i in range(m):
        for k in range(kd):
            aik = a[i, k]
            for j in range(n):
                out[i, j] += aik * b[k, j]


@njit(cache=True)
def direct_forward(x, w, K, stride, pad, out):
    B, M, H, W = x.shape
    Ho, Wo = out.shape[2], out.shape[3]
    for b in range(B):
        for m in range(M):
            for oy in range(Ho):
                for ox in range(Wo):
                    acc = out[b, m, oy, ox]
                    for kh in range(K):
                        iy = oy * stride + kh - pad
                        if iy < 0 or iy >= H:
                            continue
                        for kw in range(K):
                            ix = ox * stride + kw - pad
                            if ix < 0 or ix >= W:
                                continue
                            acc += w[m, kh * K + kw] * x[b, m, iy, ix]
                    out[b, m, oy, ox] = acc


@njit(cache=True)
def direct_backward_input(dz, w, K, stride, pad, dx):
    # gather form: each input pixel pulls its contributions in (kh, kw) order
    B, M, H, W = dx.shape
    Ho, Wo = dz.shape[2], dz.shape[3]
    for b in range(B):
        for m in range(M):
            for iy in range(H):
                for ix in range(W):
                    acc = dx[b, m, iy, ix]
                    for kh in range(K):
                        ty = iy + pad - kh
                        if ty < 0 or ty % stride != 0:
                            continue
                        oy = ty // stride
                        if oy >= Ho:
                            continue
                        for kw in range(K):
                            tx = ix + pad - kw
                            if tx < 0 or tx % stride != 0:
                                continue
                            ox = tx // stride
                            if ox >= Wo:
                                continue
                            acc += w[m, kh * K + kw] * dz[b, m, oy, ox]
                    dx[b, m, iy, ix] = acc


@njit(cache=True)
def direct_backward_weights(x, dz, K, stride, pad, dw, scratch):
    # scratch is a length-1 array of dw's dtype, used as a typed accumulator
    B, M, H, W = x.shape
    Ho, Wo = dz.shape[2], dz.shape[3]
    for m in range(M):
        for kh in range(K):
            for kw in range(K):
                for b in range(B):
                    scratch[0] = 0
                    acc = scratch[0]
                    for oy in range(Ho):
                        iy = oy * stride + kh - pad
                        if iy < 0 or iy >= H:
                            continue
                        for ox in range(Wo):
                            ix = ox * stride + kw - pad
                            if ix < 0 or ix >= W:
                                continue
                            acc += dz[b, m, oy, ox] * x[b, m, iy, ix]
                    dw[m, kh * K + kw] += acc
