"""Z-buffered triangle rasterisation kernel. Pixel (row i, col j) is sampled at x=j, y=i."""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def rasterize(xs, ys, zs, tris, colors, near, zbuf, img):
    """Rasterise screen-space triangles with perspective-correct colour interpolation.

    ``zbuf`` (H, W) holds camera depth and must be pre-filled with +inf; ``img`` (H, W, 3) is
    written only where a triangle wins the depth test. Triangles touching the near plane are
    skipped. Ties keep the earlier triangle.
    """
    h, w = zbuf.shape
    for t in range(tris.shape[0]):
        i0 = tris[t, 0]
        i1 = tris[t, 1]
        i2 = tris[t, 2]
        z0 = zs[i0]
        z1 = zs[i1]
        z2 = zs[i2]
        if z0 <= near or z1 <= near or z2 <= near:
            continue
        x0 = xs[i0]
        y0 = ys[i0]
        x1 = xs[i1]
        y1 = ys[i1]
        x2 = xs[i2]
        y2 = ys[i2]
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if abs(area) < 1e-12:
            continue
        minx = max(int(np.ceil(min(x0, x1, x2))), 0)
        maxx = min(int(np.floor(max(x0, x1, x2))), w - 1)
        miny = max(int(np.ceil(min(y0, y1, y2))), 0)
        maxy = min(int(np.floor(max(y0, y1, y2))), h - 1)
        if minx > maxx or miny > maxy:
            continue
        inv_area = 1.0 / area
        iz0 = 1.0 / z0
        iz1 = 1.0 / z1
        iz2 = 1.0 / z2
        for py in range(miny, maxy + 1):
            for px in range(minx, maxx + 1):
                w0 = ((x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)) * inv_area
                if w0 < 0.0:
                    continue
                w1 = ((x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)) * inv_area
                if w1 < 0.0:
                    continue
                w2 = ((x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)) * inv_area
                if w2 < 0.0:
                    continue
                invz = w0 * iz0 + w1 * iz1 + w2 * iz2
                z = 1.0 / invz
                if z < zbuf[py, px]:
                    zbuf[py, px] = z
                    a = w0 * iz0 * z
                    b = w1 * iz1 * z
                    c = w2 * iz2 * z
                    for ch in range(3):
                        img[py, px, ch] = a * colors[i0, ch] + b * colors[i1, ch] + c * colors[i2, ch]


@njit(cache=True, nogil=True, inline="always")
def _sample_dir(radiance, dx, dy, dz, out, row, col):
    h = radiance.shape[0]
    w = radiance.shape[1]
    n = np.sqrt(dx * dx + dy * dy + dz * dz)
    phi = np.arctan2(dy, dx)
    theta = np.arccos(min(max(dz / n, -1.0), 1.0))
    x = (phi + np.pi) * (w / (2.0 * np.pi)) - 0.5
    y = min(max(theta * (h / np.pi) - 0.5, 0.0), h - 1.0)
    x0f = np.floor(x)
    y0f = min(np.floor(y), h - 2.0)
    fx = x - x0f
    fy = y - y0f
    x0 = int(x0f) % w
    x1 = (x0 + 1) % w
    y0 = int(y0f)
    y1 = y0 + 1
    for c in range(3):
        top = radiance[y0, x0, c] * (1.0 - fx) + radiance[y0, x1, c] * fx
        bot = radiance[y1, x0, c] * (1.0 - fx) + radiance[y1, x1, c] * fx
        out[row, col, c] = top * (1.0 - fy) + bot * fy


@njit(cache=True, nogil=True)
def fill_background(img, zbuf, radiance, map_from_camera, focal, cx, cy, scale):
    """Write scaled environment radiance into every pixel the mesh did not cover."""
    h, w = zbuf.shape
    m = map_from_camera
    for py in range(h):
        ry = (py - cy) / focal
        for px in range(w):
            if zbuf[py, px] < np.inf:
                continue
            rx = (px - cx) / focal
            dx = m[0, 0] * rx + m[0, 1] * ry + m[0, 2]
            dy = m[1, 0] * rx + m[1, 1] * ry + m[1, 2]
            dz = m[2, 0] * rx + m[2, 1] * ry + m[2, 2]
            _sample_dir(radiance, dx, dy, dz, img, py, px)
            for c in range(3):
                img[py, px, c] *= scale


@njit(cache=True, nogil=True)
def encode_lut(linear, lut, out):
    """Clip linear RGB to [0, 1] and map through an sRGB lookup table."""
    n = lut.shape[0] - 1
    h, w, _ = linear.shape
    for y in range(h):
        for x in range(w):
            for c in range(3):
                v = min(max(linear[y, x, c], 0.0), 1.0)
                out[y, x, c] = lut[int(v * n + 0.5)]
