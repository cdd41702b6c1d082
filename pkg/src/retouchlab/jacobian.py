"""Exact derivatives of the operator pipeline via forward-mode duals.

The per-pixel map is re-expressed here as straight-line scalar code that
runs on either plain floats or Dual numbers carrying a 41-wide tangent
(3 pixel channels + 38 raw parameters). Unlike the vectorized forward
path, every step is evaluated even at parameter zero, because parameter
partials (e.g. d out / d contrast at contrast = 0) do not vanish there.

Branch points (channel argmax in HSV, clamp knees, hue wrap) use the
one-sided derivative of the branch actually taken; they form a measure-
zero set and generic evaluation points never land on them.
"""

from __future__ import annotations

import math

import numpy as np

from .imagecore import LUMA_B, LUMA_G, LUMA_R, PixelRGB
from .ops import (
    BAND_CENTERS_DEG,
    BAND_HALFWIDTH_DEG,
    HSL_GAIN,
    HUE_SWING_DEG,
    I_BLACKS,
    I_CONTRAST,
    I_EXPOSURE,
    I_HIGHLIGHTS,
    I_HSL_HUE,
    I_HSL_LUM,
    I_HSL_SAT,
    I_PARAMETRIC,
    I_SATURATION,
    I_SHADOWS,
    I_TEMPERATURE,
    I_TINT,
    I_VIBRANCE,
    I_WHITES,
    N_PARAMS,
    PARAMETRIC_CENTERS,
    PARAMETRIC_HALFWIDTH,
    PARAMETRIC_SCALE,
    SOFT_KNEE,
    TEMP_GAIN,
    TINT_G_GAIN,
    TINT_RB_GAIN,
    TONE_SCALE,
    ParamVector,
)

_LN2 = math.log(2.0)
_TANGENT = 3 + N_PARAMS


class Dual:
    """Scalar with a tangent vector; supports mixed arithmetic with floats."""

    __slots__ = ("val", "grad")

    def __init__(self, val: float, grad: np.ndarray):
        self.val = val
        self.grad = grad

    def __add__(self, o):
        if isinstance(o, Dual):
            return Dual(self.val + o.val, self.grad + o.grad)
        return Dual(self.val + o, self.grad)

    __radd__ = __add__

    def __sub__(self, o):
        if isinstance(o, Dual):
            return Dual(self.val - o.val, self.grad - o.grad)
        return Dual(self.val - o, self.grad)

    def __rsub__(self, o):
        return Dual(o - self.val, -self.grad)

    def __mul__(self, o):
        if isinstance(o, Dual):
            return Dual(self.val * o.val, self.grad * o.val + o.grad * self.val)
        return Dual(self.val * o, self.grad * o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Dual):
            inv = 1.0 / o.val
            return Dual(
                self.val * inv, (self.grad - (self.val * inv) * o.grad) * inv
            )
        return Dual(self.val / o, self.grad / o)

    def __rtruediv__(self, o):
        inv = 1.0 / self.val
        return Dual(o * inv, (-o * inv * inv) * self.grad)

    def __neg__(self):
        return Dual(-self.val, -self.grad)


def _val(x):
    return x.val if isinstance(x, Dual) else x


def _cos(x):
    if isinstance(x, Dual):
        return Dual(math.cos(x.val), -math.sin(x.val) * x.grad)
    return math.cos(x)


def _exp2(x):
    if isinstance(x, Dual):
        v = 2.0**x.val
        return Dual(v, v * _LN2 * x.grad)
    return 2.0**x


def _mod(x, m: float):
    # derivative of x mod m is 1 away from wrap points
    if isinstance(x, Dual):
        return Dual(x.val % m, x.grad)
    return x % m


def _max3(a, b, c):
    av, bv, cv = _val(a), _val(b), _val(c)
    if av >= bv and av >= cv:
        return a
    return b if bv >= cv else c


def _min3(a, b, c):
    av, bv, cv = _val(a), _val(b), _val(c)
    if av <= bv and av <= cv:
        return a
    return b if bv <= cv else c


def _luma(r, g, b):
    return LUMA_R * r + LUMA_G * g + LUMA_B * b


def _smoothstep(x, a: float, b: float):
    t = (x - a) / (b - a)
    tv = _val(t)
    if tv <= 0.0:
        return 0.0
    if tv >= 1.0:
        return 1.0
    return t * t * (3.0 - 2.0 * t)


def _soft_clamp(x):
    w = SOFT_KNEE
    xv = _val(x)
    if xv < 0.0:
        if xv < -w:
            return -w / 2.0
        return x + x * x / (2.0 * w)
    if xv > 1.0:
        if xv > 1.0 + w:
            return 1.0 + w / 2.0
        return x - (x - 1.0) * (x - 1.0) / (2.0 * w)
    return x


def _clip01(x):
    xv = _val(x)
    if xv <= 0.0:
        return 0.0
    if xv >= 1.0:
        return 1.0
    return x


def _rgb_to_hsv(r, g, b):
    v = _max3(r, g, b)
    c = v - _min3(r, g, b)
    s = c / v if _val(v) > 0.0 else 0.0
    if _val(c) <= 0.0:
        return 0.0, s, v
    if _val(v) == _val(r):
        h = 60.0 * _mod((g - b) / c, 6.0)
    elif _val(v) == _val(g):
        h = 60.0 * ((b - r) / c + 2.0)
    else:
        h = 60.0 * ((r - g) / c + 4.0)
    if _val(h) >= 360.0:
        h = h - 360.0
    return h, s, v


def _hsv_to_rgb(h, s, v):
    c = v * s
    hh = _mod(h, 360.0) / 60.0
    # x = c * (1 - |hh mod 2 - 1|); the abs needs an explicit sign branch
    t = _mod(hh, 2.0) - 1.0
    x = c * (1.0 - t) if _val(t) >= 0.0 else c * (1.0 + t)
    sector = int(_val(hh)) % 6
    table = (
        (c, x, 0.0), (x, c, 0.0), (0.0, c, x),
        (0.0, x, c), (x, 0.0, c), (c, 0.0, x),
    )
    rc, gc, bc = table[sector]
    m = v - c
    return rc + m, gc + m, bc + m


def _band_weights(h):
    weights = []
    total = 0.0
    for center in BAND_CENTERS_DEG:
        d = _mod(h - center + 180.0, 360.0) - 180.0
        if _val(d) < 0.0:
            d = -d
        if _val(d) < BAND_HALFWIDTH_DEG:
            w = 0.5 * (1.0 + _cos(math.pi * d / BAND_HALFWIDTH_DEG))
        else:
            w = 0.0
        weights.append(w)
        total = total + w
    if _val(total) > 1.0:
        weights = [w / total for w in weights]
    return weights


def _parametric_bump(lum, k: int):
    c = PARAMETRIC_CENTERS[k]
    d = lum - c
    dv = _val(d)
    if k == 0 and dv <= 0.0:
        return 1.0
    if k == len(PARAMETRIC_CENTERS) - 1 and dv >= 0.0:
        return 1.0
    if abs(dv) >= PARAMETRIC_HALFWIDTH:
        return 0.0
    ang = _cos(math.pi * d / (2.0 * PARAMETRIC_HALFWIDTH))
    return ang * ang


def eval_pixel(rgb, params, clamp_output: bool = True):
    """Straight-line evaluation of the canonical pipeline on one pixel.

    `rgb` is a 3-sequence and `params` a 38-sequence of floats or Duals.
    All steps run unconditionally so parameter partials survive at zero.
    """
    r, g, b = rgb
    p = list(params)

    def clamp3(r, g, b):
        return _soft_clamp(r), _soft_clamp(g), _soft_clamp(b)

    # temperature
    t = p[I_TEMPERATURE]
    r, g, b = clamp3(
        r * (1.0 + TEMP_GAIN * t / 100.0), g, b * (1.0 - TEMP_GAIN * t / 100.0)
    )
    # tint
    t = p[I_TINT]
    r, g, b = clamp3(
        r * (1.0 + TINT_RB_GAIN * t / 100.0),
        g * (1.0 - TINT_G_GAIN * t / 100.0),
        b * (1.0 + TINT_RB_GAIN * t / 100.0),
    )
    # exposure
    gain = _exp2(p[I_EXPOSURE])
    r, g, b = clamp3(r * gain, g * gain, b * gain)
    # contrast
    k = 1.0 + p[I_CONTRAST] / 100.0
    r, g, b = clamp3(
        0.5 + (r - 0.5) * k, 0.5 + (g - 0.5) * k, 0.5 + (b - 0.5) * k
    )
    # highlights / shadows / whites / blacks
    for idx, kind in (
        (I_HIGHLIGHTS, "highlights"),
        (I_SHADOWS, "shadows"),
        (I_WHITES, "whites"),
        (I_BLACKS, "blacks"),
    ):
        lum = _luma(r, g, b)
        if kind == "highlights":
            w = _smoothstep(lum, 0.5, 1.0)
        elif kind == "shadows":
            w = _smoothstep(1.0 - lum, 0.5, 1.0)
        elif kind == "whites":
            w = _smoothstep(lum, 0.75, 1.0)
        else:
            w = _smoothstep(1.0 - lum, 0.75, 1.0)
        off = (p[idx] / 100.0) * TONE_SCALE * w
        r, g, b = clamp3(r + off, g + off, b + off)
    # parametric tone
    lum = _luma(r, g, b)
    off = 0.0
    for k4, idx in enumerate(range(I_PARAMETRIC.start, I_PARAMETRIC.stop)):
        off = off + (p[idx] / 100.0) * PARAMETRIC_SCALE * _parametric_bump(lum, k4)
    r, g, b = clamp3(r + off, g + off, b + off)
    # HSL hue
    h, s, v = _rgb_to_hsv(r, g, b)
    w8 = _band_weights(h)
    delta = 0.0
    for i, idx in enumerate(range(I_HSL_HUE.start, I_HSL_HUE.stop)):
        delta = delta + (p[idx] / 100.0) * w8[i]
    r, g, b = clamp3(*_hsv_to_rgb(_mod(h + HUE_SWING_DEG * delta, 360.0), s, v))
    # HSL saturation
    h, s, v = _rgb_to_hsv(r, g, b)
    w8 = _band_weights(h)
    acc = 0.0
    for i, idx in enumerate(range(I_HSL_SAT.start, I_HSL_SAT.stop)):
        acc = acc + (p[idx] / 100.0) * w8[i]
    r, g, b = clamp3(*_hsv_to_rgb(h, s * (1.0 + HSL_GAIN * acc), v))
    # HSL luminance
    h, s, v = _rgb_to_hsv(r, g, b)
    w8 = _band_weights(h)
    acc = 0.0
    for i, idx in enumerate(range(I_HSL_LUM.start, I_HSL_LUM.stop)):
        acc = acc + (p[idx] / 100.0) * w8[i]
    r, g, b = clamp3(*_hsv_to_rgb(h, s, v * (1.0 + HSL_GAIN * acc)))
    # vibrance
    _, s, _ = _rgb_to_hsv(r, g, b)
    lum = _luma(r, g, b)
    gain = 1.0 + (p[I_VIBRANCE] / 100.0) * (1.0 - s)
    r, g, b = clamp3(
        lum + (r - lum) * gain, lum + (g - lum) * gain, lum + (b - lum) * gain
    )
    # saturation
    lum = _luma(r, g, b)
    gain = 1.0 + p[I_SATURATION] / 100.0
    r, g, b = clamp3(
        lum + (r - lum) * gain, lum + (g - lum) * gain, lum + (b - lum) * gain
    )
    if clamp_output:
        r, g, b = _clip01(r), _clip01(g), _clip01(b)
    return r, g, b


def pipeline_jacobian(
    params: ParamVector, p: PixelRGB
) -> tuple[np.ndarray, np.ndarray]:
    """Exact chain-rule Jacobians of the per-pixel map.

    Returns (J_pixel, J_param): the 3x3 derivative w.r.t. the input pixel
    and the 3x38 derivative w.r.t. the raw parameter values.
    """
    params.validate()

    def seeded(value: float, axis: int) -> Dual:
        grad = np.zeros(_TANGENT)
        grad[axis] = 1.0
        return Dual(value, grad)

    rgb = (seeded(p.r, 0), seeded(p.g, 1), seeded(p.b, 2))
    duals = [seeded(float(params.values[i]), 3 + i) for i in range(N_PARAMS)]
    out = eval_pixel(rgb, duals, clamp_output=True)
    rows = []
    for channel in out:
        if isinstance(channel, Dual):
            rows.append(channel.grad)
        else:  # hard-clamped constant: derivative is zero
            rows.append(np.zeros(_TANGENT))
    full = np.stack(rows)
    return full[:, :3].copy(), full[:, 3:].copy()
