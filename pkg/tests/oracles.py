"""Independent slow reference implementations used as test oracles."""

import math

import numpy as np


def naive_conv3d(x, w, b, stride, padding):
    """Six nested loops (plus channel sums) over a zero-padded input."""
    B, ci, D, H, W = x.shape
    co, _, kd, kh, kw = w.shape
    sd, sh, sw = stride
    pd, ph, pw = padding
    xp = np.zeros((B, ci, D + 2 * pd, H + 2 * ph, W + 2 * pw))
    xp[:, :, pd : pd + D, ph : ph + H, pw : pw + W] = x
    Do = (D + 2 * pd - kd) // sd + 1
    Ho = (H + 2 * ph - kh) // sh + 1
    Wo = (W + 2 * pw - kw) // sw + 1
    out = np.zeros((B, co, Do, Ho, Wo))
    for n in range(B):
        for o in range(co):
            for d in range(Do):
                for i in range(Ho):
                    for j in range(Wo):
                        acc = 0.0 if b is None else float(b[o])
                        for c in range(ci):
                            for a in range(kd):
                                for p in range(kh):
                                    for q in range(kw):
                                        acc += w[o, c, a, p, q] * xp[n, c, d * sd + a, i * sh + p, j * sw + q]
                        out[n, o, d, i, j] = acc
    return out


def scalar_shade(kind, albedo, spec, shininess, n, l, v=(0.0, 0.0, 1.0)):
    """Closed-form single-channel radiance, written with plain floats."""
    ndotl = sum(a * b for a, b in zip(n, l))
    if ndotl <= 0:
        return 0.0
    value = albedo * ndotl
    if kind == "phong":
        r = [2 * ndotl * ni - li for ni, li in zip(n, l)]
        value += spec * max(sum(a * b for a, b in zip(r, v)), 0.0) ** shininess
    elif kind == "blinn_phong":
        h = [li + vi for li, vi in zip(l, v)]
        norm = math.sqrt(sum(c * c for c in h))
        h = [c / norm for c in h]
        value += spec * max(sum(a * b for a, b in zip(n, h)), 0.0) ** shininess
    return value


def loop_render_lambertian_sphere(size, radius, center, albedo, lights):
    """Per-pixel loop renderer for a Lambertian sphere (rows grow downwards, y up)."""
    cx, cy = center
    q = len(lights)
    out = np.zeros((q, size, size, 3))
    for r in range(size):
        for c in range(size):
            x = (c - cx) / radius
            y = -(r - cy) / radius
            rr = x * x + y * y
            if rr >= 1.0:
                continue
            n = (x, y, math.sqrt(1.0 - rr))
            for k, l in enumerate(lights):
                s = max(n[0] * l[0] + n[1] * l[1] + n[2] * l[2], 0.0)
                for ch in range(3):
                    out[k, r, c, ch] = albedo[ch] * s
    return out


def hand_count(C, K, L, M, N):
    """Learnable scalars of the network, counted layer by layer."""
    initial = 6 * C + C
    irfe = K * (C * C * M + C)
    iafe = L * (C * C * N * N + C)
    head = (C * C + C) + (C * C + C) + (3 * C + 3)
    return initial + irfe + iafe + head


def adam_reference(w0, grad_fn, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar Adam written directly from the update equations."""
    w, m, v = w0, 0.0, 0.0
    seq = []
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1**t)
        vh = v / (1 - b2**t)
        w = w - lr * mh / (math.sqrt(vh) + eps)
        seq.append(w)
    return seq
