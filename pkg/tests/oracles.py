"""Independent reference implementations used only by the test suite.

Everything here is deliberately written straight-line on plain Python
floats, from the documented transfer functions, without importing any of
the package's pipeline code. It is the oracle the vectorized production
path and the dual-number jacobian path are checked against.
"""

from __future__ import annotations

import math

# Parameter layout (raw units), mirroring the documented operator table.
LIGHT = [
    "Exposure2012", "Contrast2012", "Highlights2012", "Shadows2012",
    "Whites2012", "Blacks2012", "ParametricShadows", "ParametricDarks",
    "ParametricLights", "ParametricHighlights",
]
GLOBAL_COLOR = ["IncrementalTemperature", "IncrementalTint", "Vibrance", "Saturation"]
_COLORS = ["Red", "Orange", "Yellow", "Green", "Aqua", "Blue", "Purple", "Magenta"]
SPECIFIC_COLOR = (
    [f"HueAdjustment{c}" for c in _COLORS]
    + [f"SaturationAdjustment{c}" for c in _COLORS]
    + [f"LuminanceAdjustment{c}" for c in _COLORS]
)
ALL_NAMES = LIGHT + GLOBAL_COLOR + SPECIFIC_COLOR

_BAND_CENTERS = [0.0, 30.0, 60.0, 120.0, 180.0, 240.0, 280.0, 315.0]
_BUMP_CENTERS = [0.125, 0.375, 0.625, 0.875]


def _luma(r, g, b):
    return 0.2126 * r + 0.7152 * g + 0.0722 * b


def _smooth(x, a, b):
    t = (x - a) / (b - a)
    t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
    return t * t * (3.0 - 2.0 * t)


def _sc(x):
    # soft clamp: identity on [0,1], quadratic knee of width 0.05 outside
    w = 0.05
    if x < 0.0:
        return -w / 2.0 if x < -w else x + x * x / (2.0 * w)
    if x > 1.0:
        return 1.0 + w / 2.0 if x > 1.0 + w else x - (x - 1.0) ** 2 / (2.0 * w)
    return x


def _sc3(r, g, b):
    return _sc(r), _sc(g), _sc(b)


def _to_hsv(r, g, b):
    v = max(r, g, b)
    mn = min(r, g, b)
    c = v - mn
    s = c / v if v > 0.0 else 0.0
    if c <= 0.0:
        return 0.0, s, v
    if v == r:
        h = 60.0 * (((g - b) / c) % 6.0)
    elif v == g:
        h = 60.0 * ((b - r) / c + 2.0)
    else:
        h = 60.0 * ((r - g) / c + 4.0)
    if h >= 360.0:
        h -= 360.0
    return h, s, v


def _to_rgb(h, s, v):
    c = v * s
    hh = (h % 360.0) / 60.0
    x = c * (1.0 - abs(hh % 2.0 - 1.0))
    sector = int(hh) % 6
    rc, gc, bc = [
        (c, x, 0.0), (x, c, 0.0), (0.0, c, x),
        (0.0, x, c), (x, 0.0, c), (c, 0.0, x),
    ][sector]
    m = v - c
    return rc + m, gc + m, bc + m


def _bands(h):
    ws = []
    for c in _BAND_CENTERS:
        d = abs((h - c + 180.0) % 360.0 - 180.0)
        ws.append(0.5 * (1.0 + math.cos(math.pi * d / 40.0)) if d < 40.0 else 0.0)
    total = sum(ws)
    if total > 1.0:
        ws = [w / total for w in ws]
    return ws


def _bump(lum, k):
    c = _BUMP_CENTERS[k]
    if k == 0 and lum <= c:
        return 1.0
    if k == 3 and lum >= c:
        return 1.0
    d = lum - c
    if abs(d) >= 0.25:
        return 0.0
    return math.cos(math.pi * d / 0.5) ** 2


def pipeline_reference(pv: dict[str, float], rgb, clamp_output=True):
    """Straight-line per-pixel pipeline on a {name: raw value} mapping.

    Every step is applied unconditionally except when its parameters are
    all exactly zero, matching the production identity-at-zero contract.
    """
    p = {name: float(pv.get(name, 0.0)) for name in ALL_NAMES}
    r, g, b = float(rgb[0]), float(rgb[1]), float(rgb[2])

    t = p["IncrementalTemperature"]
    if t != 0.0:
        r, g, b = _sc3(r * (1.0 + 0.3 * t / 100.0), g, b * (1.0 - 0.3 * t / 100.0))
    t = p["IncrementalTint"]
    if t != 0.0:
        r, g, b = _sc3(
            r * (1.0 + 0.15 * t / 100.0),
            g * (1.0 - 0.3 * t / 100.0),
            b * (1.0 + 0.15 * t / 100.0),
        )
    e = p["Exposure2012"]
    if e != 0.0:
        k = 2.0**e
        r, g, b = _sc3(r * k, g * k, b * k)
    c = p["Contrast2012"]
    if c != 0.0:
        k = 1.0 + c / 100.0
        r, g, b = _sc3(0.5 + (r - 0.5) * k, 0.5 + (g - 0.5) * k, 0.5 + (b - 0.5) * k)
    for name, lo, hi, invert in [
        ("Highlights2012", 0.5, 1.0, False),
        ("Shadows2012", 0.5, 1.0, True),
        ("Whites2012", 0.75, 1.0, False),
        ("Blacks2012", 0.75, 1.0, True),
    ]:
        raw = p[name]
        if raw != 0.0:
            lum = _luma(r, g, b)
            w = _smooth(1.0 - lum if invert else lum, lo, hi)
            off = (raw / 100.0) * 0.5 * w
            r, g, b = _sc3(r + off, g + off, b + off)
    para = [
        p["ParametricShadows"], p["ParametricDarks"],
        p["ParametricLights"], p["ParametricHighlights"],
    ]
    if any(v != 0.0 for v in para):
        lum = _luma(r, g, b)
        off = sum((para[k] / 100.0) * 0.35 * _bump(lum, k) for k in range(4))
        r, g, b = _sc3(r + off, g + off, b + off)
    hue_raw = [p[f"HueAdjustment{c}"] for c in _COLORS]
    if any(v != 0.0 for v in hue_raw):
        h, s, v = _to_hsv(r, g, b)
        ws = _bands(h)
        delta = 30.0 * sum(hue_raw[i] / 100.0 * ws[i] for i in range(8))
        r, g, b = _sc3(*_to_rgb((h + delta) % 360.0, s, v))
    sat_raw = [p[f"SaturationAdjustment{c}"] for c in _COLORS]
    if any(v != 0.0 for v in sat_raw):
        h, s, v = _to_hsv(r, g, b)
        ws = _bands(h)
        gain = 1.0 + 0.5 * sum(sat_raw[i] / 100.0 * ws[i] for i in range(8))
        r, g, b = _sc3(*_to_rgb(h, s * gain, v))
    lum_raw = [p[f"LuminanceAdjustment{c}"] for c in _COLORS]
    if any(v != 0.0 for v in lum_raw):
        h, s, v = _to_hsv(r, g, b)
        ws = _bands(h)
        gain = 1.0 + 0.5 * sum(lum_raw[i] / 100.0 * ws[i] for i in range(8))
        r, g, b = _sc3(*_to_rgb(h, s, v * gain))
    vib = p["Vibrance"]
    if vib != 0.0:
        _, s, _ = _to_hsv(r, g, b)
        lum = _luma(r, g, b)
        gain = 1.0 + (vib / 100.0) * (1.0 - s)
        r, g, b = _sc3(
            lum + (r - lum) * gain, lum + (g - lum) * gain, lum + (b - lum) * gain
        )
    sat = p["Saturation"]
    if sat != 0.0:
        lum = _luma(r, g, b)
        gain = 1.0 + sat / 100.0
        r, g, b = _sc3(
            lum + (r - lum) * gain, lum + (g - lum) * gain, lum + (b - lum) * gain
        )
    if clamp_output:
        r = min(1.0, max(0.0, r))
        g = min(1.0, max(0.0, g))
        b = min(1.0, max(0.0, b))
    return r, g, b


# --------------------------------------------------------------------------
# Scalar metric recomputations
# --------------------------------------------------------------------------


def scalar_l1(a, b):
    total = 0.0
    n = 0
    for y in range(len(a)):
        for x in range(len(a[0])):
            for c in range(3):
                total += abs(a[y][x][c] - b[y][x][c])
                n += 1
    return total / n


def scalar_psnr(a, b):
    total = 0.0
    n = 0
    for y in range(len(a)):
        for x in range(len(a[0])):
            for c in range(3):
                d = a[y][x][c] - b[y][x][c]
                total += d * d
                n += 1
    mse = total / n
    if mse == 0.0:
        return 99.0
    return min(99.0, 10.0 * math.log10(1.0 / mse))


def _scalar_luma_map(img):
    return [
        [_luma(*img[y][x]) for x in range(len(img[0]))] for y in range(len(img))
    ]


def scalar_ssim(a, b, win=8):
    xa = _scalar_luma_map(a)
    xb = _scalar_luma_map(b)
    h, w = len(xa), len(xa[0])
    win = min(win, h, w)
    c1, c2 = 0.01**2, 0.03**2
    scores = []
    for y0 in range(h - win + 1):
        for x0 in range(w - win + 1):
            pa = [xa[y][x] for y in range(y0, y0 + win) for x in range(x0, x0 + win)]
            pb = [xb[y][x] for y in range(y0, y0 + win) for x in range(x0, x0 + win)]
            n = len(pa)
            mx = sum(pa) / n
            my = sum(pb) / n
            vx = sum(v * v for v in pa) / n - mx * mx
            vy = sum(v * v for v in pb) / n - my * my
            cov = sum(u * v for u, v in zip(pa, pb)) / n - mx * my
            scores.append(
                ((2 * mx * my + c1) * (2 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2))
            )
    return sum(scores) / len(scores)


def scalar_hist64(values):
    counts = [0] * 64
    for v in values:
        v = min(1.0, max(0.0, v))
        counts[min(int(v * 64), 63)] += 1
    total = sum(counts)
    return [c / total for c in counts]


def scalar_intersection(h1, h2):
    return sum(min(a, b) for a, b in zip(h1, h2))


def scalar_local_contrast(img):
    lum = _scalar_luma_map(img)
    h, w = len(lum), len(lum[0])
    out = []
    for y in range(h):
        for x in range(w):
            acc = 0.0
            n = 0
            for yy in range(max(0, y - 3), min(h - 1, y + 4) + 1):
                for xx in range(max(0, x - 3), min(w - 1, x + 4) + 1):
                    acc += lum[yy][xx]
                    n += 1
            d = abs(lum[y][x] - acc / n) * 4.0
            out.append(min(1.0, max(0.0, d)))
    return out


def scalar_hist_suite(a, b):
    la = [v for row in _scalar_luma_map(a) for v in row]
    lb = [v for row in _scalar_luma_map(b) for v in row]
    hl = scalar_intersection(scalar_hist64(la), scalar_hist64(lb))
    hc = scalar_intersection(
        scalar_hist64(scalar_local_contrast(a)), scalar_hist64(scalar_local_contrast(b))
    )
    sa = [_to_hsv(*a[y][x])[1] for y in range(len(a)) for x in range(len(a[0]))]
    sb = [_to_hsv(*b[y][x])[1] for y in range(len(b)) for x in range(len(b[0]))]
    hs = scalar_intersection(scalar_hist64(sa), scalar_hist64(sb))
    return hl, hc, hs, (hl + hc + hs) / 3.0


def scalar_reward_similarity(a, b, gamma):
    va = []
    vb = []
    for c in range(3):
        va.extend(scalar_hist64([a[y][x][c] for y in range(len(a)) for x in range(len(a[0]))]))
        vb.extend(scalar_hist64([b[y][x][c] for y in range(len(b)) for x in range(len(b[0]))]))
    dot = sum(p * q for p, q in zip(va, vb))
    na = math.sqrt(sum(p * p for p in va))
    nb = math.sqrt(sum(q * q for q in vb))
    cos = dot / (na * nb)
    score = gamma * cos + (1.0 - gamma) * (1.0 - scalar_l1(a, b))
    return min(1.0, max(0.0, score))


def central_difference(f, x0: list[float], i: int, h: float = 1e-5):
    """d f / d x_i by central differences; f maps a float list to a tuple."""
    hi = list(x0)
    lo = list(x0)
    hi[i] += h
    lo[i] -= h
    fh = f(hi)
    fl = f(lo)
    return [(a - b) / (2.0 * h) for a, b in zip(fh, fl)]


def rel_err(a: float, b: float, floor: float = 1e-3) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)
