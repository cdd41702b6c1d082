"""The retouching operator library: 38 parametric per-pixel operators.

Every operator is a pure, analytically differentiable map on a single
pixel, applied in one fixed canonical order:

    temperature -> tint -> exposure -> contrast -> highlights -> shadows
    -> whites -> blacks -> parametric tone -> HSL hue -> HSL saturation
    -> HSL luminance -> vibrance -> saturation

A soft clamp with a quadratic knee runs between steps so gradients stay
defined near the gamut boundary; a hard clamp to [0, 1] runs only at
pipeline output. Steps whose parameters are all exactly zero are skipped
outright, which is what makes the zero parameter vector a bit-exact
identity (formulas like contrast's 0.5 + (v - 0.5) * 1.0 would otherwise
reintroduce rounding).

Transfer functions are this package's own design; no fidelity to any
commercial tool's proprietary curves is claimed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .errors import OutOfRangeParam
from .imagecore import (
    Image,
    hsv_to_rgb_array,
    luma_array,
    rgb_to_hsv_array,
)

# --------------------------------------------------------------------------
# Operator table
# --------------------------------------------------------------------------


class OpInfo(NamedTuple):
    """One operator: JSON name, category (L/GC/SC), raw range, sampling sigma."""

    name: str
    category: str
    range_max: float
    sigma: float


_HSL_COLORS = ("Red", "Orange", "Yellow", "Green", "Aqua", "Blue", "Purple", "Magenta")

OPERATORS: tuple[OpInfo, ...] = (
    # Light
    OpInfo("Exposure2012", "L", 5.0, 0.6543),
    OpInfo("Contrast2012", "L", 100.0, 12.6789),
    OpInfo("Highlights2012", "L", 100.0, 21.5888),
    OpInfo("Shadows2012", "L", 100.0, 16.2265),
    OpInfo("Whites2012", "L", 100.0, 16.4355),
    OpInfo("Blacks2012", "L", 100.0, 15.5995),
    OpInfo("ParametricShadows", "L", 100.0, 7.2495),
    OpInfo("ParametricDarks", "L", 100.0, 15.8214),
    OpInfo("ParametricLights", "L", 100.0, 7.6688),
    OpInfo("ParametricHighlights", "L", 100.0, 9.1287),
    # Global color
    OpInfo("IncrementalTemperature", "GC", 100.0, 15.0),
    OpInfo("IncrementalTint", "GC", 100.0, 15.0),
    OpInfo("Vibrance", "GC", 100.0, 7.8137),
    OpInfo("Saturation", "GC", 100.0, 7.4315),
    # Specific color: hue, then saturation, then luminance, per band
    OpInfo("HueAdjustmentRed", "SC", 100.0, 5.8140),
    OpInfo("HueAdjustmentOrange", "SC", 100.0, 8.3549),
    OpInfo("HueAdjustmentYellow", "SC", 100.0, 15.1914),
    OpInfo("HueAdjustmentGreen", "SC", 100.0, 8.4875),
    OpInfo("HueAdjustmentAqua", "SC", 100.0, 19.8922),
    OpInfo("HueAdjustmentBlue", "SC", 100.0, 11.8419),
    OpInfo("HueAdjustmentPurple", "SC", 100.0, 10.1451),
    OpInfo("HueAdjustmentMagenta", "SC", 100.0, 19.0949),
    OpInfo("SaturationAdjustmentRed", "SC", 100.0, 19.8318),
    OpInfo("SaturationAdjustmentOrange", "SC", 100.0, 9.6656),
    OpInfo("SaturationAdjustmentYellow", "SC", 100.0, 18.2479),
    OpInfo("SaturationAdjustmentGreen", "SC", 100.0, 17.7113),
    OpInfo("SaturationAdjustmentAqua", "SC", 100.0, 7.4975),
    OpInfo("SaturationAdjustmentBlue", "SC", 100.0, 15.6967),
    OpInfo("SaturationAdjustmentPurple", "SC", 100.0, 21.7025),
    OpInfo("SaturationAdjustmentMagenta", "SC", 100.0, 27.8002),
    OpInfo("LuminanceAdjustmentRed", "SC", 100.0, 10.0289),
    OpInfo("LuminanceAdjustmentOrange", "SC", 100.0, 13.4234),
    OpInfo("LuminanceAdjustmentYellow", "SC", 100.0, 16.2116),
    OpInfo("LuminanceAdjustmentGreen", "SC", 100.0, 28.3202),
    OpInfo("LuminanceAdjustmentAqua", "SC", 100.0, 17.1250),
    OpInfo("LuminanceAdjustmentBlue", "SC", 100.0, 22.4162),
    OpInfo("LuminanceAdjustmentPurple", "SC", 100.0, 18.2913),
    OpInfo("LuminanceAdjustmentMagenta", "SC", 100.0, 25.4936),
)

N_PARAMS = len(OPERATORS)
OP_INDEX: dict[str, int] = {op.name: i for i, op in enumerate(OPERATORS)}
RANGE_MAX = np.array([op.range_max for op in OPERATORS])
SIGMAS = np.array([op.sigma for op in OPERATORS])

CATEGORY_SLICES: dict[str, slice] = {
    "L": slice(0, 10),
    "GC": slice(10, 14),
    "SC": slice(14, 38),
}

# Parameter indices used by the pipeline steps.
I_EXPOSURE, I_CONTRAST = 0, 1
I_HIGHLIGHTS, I_SHADOWS, I_WHITES, I_BLACKS = 2, 3, 4, 5
I_PARAMETRIC = slice(6, 10)  # shadows, darks, lights, highlights
I_TEMPERATURE, I_TINT, I_VIBRANCE, I_SATURATION = 10, 11, 12, 13
I_HSL_HUE = slice(14, 22)
I_HSL_SAT = slice(22, 30)
I_HSL_LUM = slice(30, 38)

# Transfer-function constants (shared with the dual-number jacobian path).
TEMP_GAIN = 0.3
TINT_G_GAIN = 0.3
TINT_RB_GAIN = 0.15
TONE_SCALE = 0.5
PARAMETRIC_SCALE = 0.35
PARAMETRIC_CENTERS = (0.125, 0.375, 0.625, 0.875)
PARAMETRIC_HALFWIDTH = 0.25
BAND_CENTERS_DEG = (0.0, 30.0, 60.0, 120.0, 180.0, 240.0, 280.0, 315.0)
BAND_HALFWIDTH_DEG = 40.0
HUE_SWING_DEG = 30.0
HSL_GAIN = 0.5
SOFT_KNEE = 0.05


# --------------------------------------------------------------------------
# Parameter vector and category masks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CategoryMask:
    """Which of the three adjustment families are active."""

    m_l: bool
    m_gc: bool
    m_sc: bool

    @classmethod
    def all_active(cls) -> "CategoryMask":
        return cls(True, True, True)

    @classmethod
    def combinations(cls) -> tuple["CategoryMask", ...]:
        """The 7 legal combinations: L, GC, SC, L+GC, L+SC, GC+SC, L+GC+SC."""
        return (
            cls(True, False, False),
            cls(False, True, False),
            cls(False, False, True),
            cls(True, True, False),
            cls(True, False, True),
            cls(False, True, True),
            cls(True, True, True),
        )

    def any(self) -> bool:
        return self.m_l or self.m_gc or self.m_sc

    def flags(self) -> tuple[bool, bool, bool]:
        return (self.m_l, self.m_gc, self.m_sc)

    def active_params(self) -> np.ndarray:
        """Boolean (38,) selector of the parameters in active categories."""
        sel = np.zeros(N_PARAMS, dtype=bool)
        for active, cat in zip(self.flags(), ("L", "GC", "SC")):
            if active:
                sel[CATEGORY_SLICES[cat]] = True
        return sel

    def to_bits(self) -> int:
        return int(self.m_l) | (int(self.m_gc) << 1) | (int(self.m_sc) << 2)

    @classmethod
    def from_bits(cls, bits: int) -> "CategoryMask":
        return cls(bool(bits & 1), bool(bits & 2), bool(bits & 4))

    def label(self) -> str:
        parts = [n for f, n in zip(self.flags(), ("L", "GC", "SC")) if f]
        return "+".join(parts) if parts else "none"


@dataclass
class ParamVector:
    """The 38 retouching parameters in raw units.

    Exposure lives in [-5, 5] stops; everything else in [-100, 100].
    The normalized view divides each entry by its range maximum.
    """

    values: np.ndarray = field(
        default_factory=lambda: np.zeros(N_PARAMS, dtype=np.float64)
    )

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (N_PARAMS,):
            raise ValueError(f"expected {N_PARAMS} parameters, got shape {v.shape}")
        self.values = v

    @classmethod
    def zeros(cls) -> "ParamVector":
        return cls()

    @classmethod
    def from_mapping(cls, mapping: dict[str, float]) -> "ParamVector":
        """Build from a {name: raw value} map; unknown keys are rejected,
        missing keys default to 0."""
        values = np.zeros(N_PARAMS, dtype=np.float64)
        for key, val in mapping.items():
            if key not in OP_INDEX:
                raise OutOfRangeParam(f"unknown operator name {key!r}")
            values[OP_INDEX[key]] = float(val)
        return cls(values)

    def to_mapping(self) -> dict[str, float]:
        return {op.name: float(self.values[i]) for i, op in enumerate(OPERATORS)}

    @classmethod
    def from_json(cls, text: str) -> "ParamVector":
        obj = json.loads(text)
        if not isinstance(obj, dict):
            raise OutOfRangeParam("parameter JSON must be an object")
        return cls.from_mapping(obj)

    def to_json(self) -> str:
        return json.dumps(self.to_mapping(), indent=2)

    def get(self, name: str) -> float:
        return float(self.values[OP_INDEX[name]])

    def set(self, name: str, value: float) -> None:
        self.values[OP_INDEX[name]] = value

    def normalized(self) -> np.ndarray:
        """(38,) view rescaled to [-1, 1]."""
        return self.values / RANGE_MAX

    @classmethod
    def from_normalized(cls, norm: np.ndarray) -> "ParamVector":
        return cls(np.asarray(norm, dtype=np.float64) * RANGE_MAX)

    def negated(self) -> "ParamVector":
        return ParamVector(-self.values)

    def masked(self, mask: CategoryMask) -> "ParamVector":
        out = self.values.copy()
        out[~mask.active_params()] = 0.0
        return ParamVector(out)

    def validate(self) -> None:
        bad = np.abs(self.values) > RANGE_MAX
        if np.any(bad):
            names = [OPERATORS[i].name for i in np.nonzero(bad)[0]]
            raise OutOfRangeParam(f"parameters out of range: {', '.join(names)}")


# --------------------------------------------------------------------------
# Shared pieces of the transfer functions
# --------------------------------------------------------------------------


def smoothstep(x: np.ndarray, a: float, b: float) -> np.ndarray:
    t = np.clip((x - a) / (b - a), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def parametric_bump(lum: np.ndarray, k: int) -> np.ndarray:
    """Raised-cosine bump k of the luma partition of unity.

    The outermost bumps saturate at 1 beyond their centers so the four
    bumps sum to exactly 1 everywhere on [0, 1].
    """
    c = PARAMETRIC_CENTERS[k]
    d = lum - c
    inside = np.abs(d) < PARAMETRIC_HALFWIDTH
    core = np.cos(np.pi * d / (2.0 * PARAMETRIC_HALFWIDTH)) ** 2
    out = np.where(inside, core, 0.0)
    if k == 0:
        out = np.where(lum <= c, 1.0, out)
    elif k == len(PARAMETRIC_CENTERS) - 1:
        out = np.where(lum >= c, 1.0, out)
    return out


def band_weights(hue_deg: np.ndarray) -> np.ndarray:
    """(..., 8) raised-cosine hue band weights, renormalized to sum <= 1."""
    h = hue_deg[..., None]
    centers = np.asarray(BAND_CENTERS_DEG)
    d = np.abs((h - centers + 180.0) % 360.0 - 180.0)
    w = np.where(
        d < BAND_HALFWIDTH_DEG,
        0.5 * (1.0 + np.cos(np.pi * d / BAND_HALFWIDTH_DEG)),
        0.0,
    )
    total = np.sum(w, axis=-1, keepdims=True)
    return w / np.maximum(total, 1.0)


def soft_clamp(x: np.ndarray) -> np.ndarray:
    """Identity on [0, 1], quadratic knee of width SOFT_KNEE outside.

    Saturates at -SOFT_KNEE/2 and 1 + SOFT_KNEE/2; C1 everywhere, so
    gradients stay defined through moderate overshoot.
    """
    lo_mask = x < 0.0
    hi_mask = x > 1.0
    if not (lo_mask.any() or hi_mask.any()):
        return x
    w = SOFT_KNEE
    lo = np.where(x < -w, -w / 2.0, x + x * x / (2.0 * w))
    hi = np.where(x > 1.0 + w, 1.0 + w / 2.0, x - (x - 1.0) ** 2 / (2.0 * w))
    return np.where(lo_mask, lo, np.where(hi_mask, hi, x))


# --------------------------------------------------------------------------
# Pipeline steps over (D, N, 3) buffers with per-draw (D, ...) parameters
# --------------------------------------------------------------------------


def _col(p):
    # lift a (D,) per-draw parameter to broadcast over (D, N)
    return np.asarray(p)[:, None]


def _step_temperature(rgb, t):
    out = rgb.copy()
    out[..., 0] = rgb[..., 0] * (1.0 + TEMP_GAIN * _col(t) / 100.0)
    out[..., 2] = rgb[..., 2] * (1.0 - TEMP_GAIN * _col(t) / 100.0)
    return out


def _step_tint(rgb, t):
    out = np.empty_like(rgb)
    out[..., 0] = rgb[..., 0] * (1.0 + TINT_RB_GAIN * _col(t) / 100.0)
    out[..., 1] = rgb[..., 1] * (1.0 - TINT_G_GAIN * _col(t) / 100.0)
    out[..., 2] = rgb[..., 2] * (1.0 + TINT_RB_GAIN * _col(t) / 100.0)
    return out


def _step_exposure(rgb, stops):
    return rgb * (2.0 ** np.asarray(stops))[:, None, None]


def _step_contrast(rgb, c):
    return 0.5 + (rgb - 0.5) * (1.0 + np.asarray(c) / 100.0)[:, None, None]


def _tone_weight(lum, kind):
    if kind == "highlights":
        return smoothstep(lum, 0.5, 1.0)
    if kind == "shadows":
        return smoothstep(1.0 - lum, 0.5, 1.0)
    if kind == "whites":
        return smoothstep(lum, 0.75, 1.0)
    if kind == "blacks":
        return smoothstep(1.0 - lum, 0.75, 1.0)
    raise ValueError(kind)


def _step_tone(rgb, raw, kind):
    w = _tone_weight(luma_array(rgb), kind)
    return rgb + ((_col(raw) / 100.0) * TONE_SCALE * w)[..., None]


def _step_parametric(rgb, raws4):
    lum = luma_array(rgb)
    offset = np.zeros_like(lum)
    for k in range(4):
        col = raws4[:, k]
        if np.any(col != 0.0):
            offset += (_col(col) / 100.0) * PARAMETRIC_SCALE * parametric_bump(lum, k)
    return rgb + offset[..., None]


def _band_mix(h, raws8):
    # per-pixel weighted sum of the 8 per-draw band strengths
    w = band_weights(h)
    return np.sum(w * (np.asarray(raws8)[:, None, :] / 100.0), axis=-1)


def _step_hsl_hue(rgb, raws8):
    h, s, v = rgb_to_hsv_array(rgb)
    delta = HUE_SWING_DEG * _band_mix(h, raws8)
    return hsv_to_rgb_array((h + delta) % 360.0, s, v)


def _step_hsl_sat(rgb, raws8):
    h, s, v = rgb_to_hsv_array(rgb)
    gain = 1.0 + HSL_GAIN * _band_mix(h, raws8)
    return hsv_to_rgb_array(h, s * gain, v)


def _step_hsl_lum(rgb, raws8):
    h, s, v = rgb_to_hsv_array(rgb)
    gain = 1.0 + HSL_GAIN * _band_mix(h, raws8)
    return hsv_to_rgb_array(h, s, v * gain)


def _step_vibrance(rgb, raw):
    _, s, _ = rgb_to_hsv_array(rgb)
    lum = luma_array(rgb)[..., None]
    gain = (1.0 + (_col(raw) / 100.0) * (1.0 - s))[..., None]
    return lum + (rgb - lum) * gain


def _step_saturation(rgb, raw):
    lum = luma_array(rgb)[..., None]
    return lum + (rgb - lum) * (1.0 + np.asarray(raw) / 100.0)[:, None, None]


def apply_pipeline_batch(
    param_rows: np.ndarray, rgb: np.ndarray, clamp_output: bool = True
) -> np.ndarray:
    """Run the canonical pipeline over D pixel groups with per-group params.

    `param_rows` is (D, 38) raw values; `rgb` is (D, N, 3). A step is
    skipped only when its parameters are zero in every group, which keeps
    the single-group path a bit-exact identity at the zero vector.
    """
    pm = np.asarray(param_rows, dtype=np.float64)
    if pm.ndim != 2 or pm.shape[1] != N_PARAMS:
        raise ValueError(f"expected (D, {N_PARAMS}) params, got {pm.shape}")
    if np.any(np.abs(pm) > RANGE_MAX):
        bad = np.nonzero(np.any(np.abs(pm) > RANGE_MAX, axis=0))[0]
        names = [OPERATORS[i].name for i in bad]
        raise OutOfRangeParam(f"parameters out of range: {', '.join(names)}")
    out = np.asarray(rgb, dtype=np.float64)

    steps = (
        (pm[:, I_TEMPERATURE], _step_temperature),
        (pm[:, I_TINT], _step_tint),
        (pm[:, I_EXPOSURE], _step_exposure),
        (pm[:, I_CONTRAST], _step_contrast),
        (pm[:, I_HIGHLIGHTS], lambda b, p: _step_tone(b, p, "highlights")),
        (pm[:, I_SHADOWS], lambda b, p: _step_tone(b, p, "shadows")),
        (pm[:, I_WHITES], lambda b, p: _step_tone(b, p, "whites")),
        (pm[:, I_BLACKS], lambda b, p: _step_tone(b, p, "blacks")),
        (pm[:, I_PARAMETRIC], _step_parametric),
        (pm[:, I_HSL_HUE], _step_hsl_hue),
        (pm[:, I_HSL_SAT], _step_hsl_sat),
        (pm[:, I_HSL_LUM], _step_hsl_lum),
        (pm[:, I_VIBRANCE], _step_vibrance),
        (pm[:, I_SATURATION], _step_saturation),
    )
    for p, fn in steps:
        active = p != 0.0 if p.ndim == 1 else np.any(p != 0.0, axis=1)
        if not np.any(active):
            continue
        candidate = soft_clamp(fn(out, p))
        if np.all(active):
            out = candidate
        else:
            # groups whose parameters are zero for this step keep their
            # buffer untouched, exactly like the single-group skip
            out = np.where(active[:, None, None], candidate, out)
    if clamp_output:
        out = np.clip(out, 0.0, 1.0)
    return out


def apply_pipeline_array(
    params: ParamVector, rgb: np.ndarray, clamp_output: bool = True
) -> np.ndarray:
    """Run the canonical pipeline over an (N, 3) float buffer.

    Steps whose parameters are all exactly zero are skipped (bit-exact
    identity); active steps are followed by the soft clamp. The hard
    clamp at the end can be suppressed for composition tests.
    """
    params.validate()
    flat = np.asarray(rgb, dtype=np.float64)
    return apply_pipeline_batch(
        params.values[None, :], flat[None, :, :], clamp_output=clamp_output
    )[0]


def apply_pipeline(params: ParamVector, img: Image) -> Image:
    """Apply all 38 operators to an image; output is hard-clamped to [0, 1]."""
    flat = apply_pipeline_array(params, img.data.reshape(-1, 3))
    return Image.from_array(flat.reshape(img.height, img.width, 3))


def apply_category(params: ParamVector, mask: CategoryMask, img: Image) -> Image:
    """apply_pipeline with every parameter outside the active categories zeroed."""
    return apply_pipeline(params.masked(mask), img)


def apply_category_array(
    params: ParamVector, mask: CategoryMask, rgb: np.ndarray
) -> np.ndarray:
    return apply_pipeline_array(params.masked(mask), rgb)


def operator_names(categories: Iterable[str] | None = None) -> list[str]:
    cats = set(categories) if categories is not None else {"L", "GC", "SC"}
    return [op.name for op in OPERATORS if op.category in cats]
