"""Histogram suite, fidelity metrics, reward functions, reasoning parser.

All functions here are pure and safe for unlimited parallel use.
Histograms are 64 bins over [0, 1]; histogram intersection of two
normalized histograms is sum(min(h1, h2)), which is 1 iff they are equal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyImage, ScorerFailure
from .imagecore import Image, luma_array, rgb_to_hsv_array, require_same_size

N_BINS = 64
PSNR_CAP_DB = 99.0

# Canonical structured-reasoning schema: 12 required tags, exact strings.
CANONICAL_TAGS: tuple[str, ...] = (
    "<content overview start>",
    "<content overview end>",
    "<problem light start>",
    "<problem light end>",
    "<problem global color start>",
    "<problem global color end>",
    "<problem specific color start>",
    "<problem specific color end>",
    "<plan start>",
    "<plan end>",
    "<retouch tokens start>",
    "<retouch tokens end>",
)

#: Critical retouch tokens keyed by task name.
RETOUCH_TOKENS: dict[str, str] = {
    "auto": "<|Auto Retouch|>",
    "style": "<|Style Retouch|>",
    "param": "<|Param Retouch|>",
}

FORMAT_PENALTY = -5.0


# --------------------------------------------------------------------------
# Histograms
# --------------------------------------------------------------------------


def histogram64(values: np.ndarray) -> np.ndarray:
    """Normalized 64-bin histogram of unit-interval values; 1.0 joins bin 63."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyImage("cannot histogram an empty value set")
    idx = np.minimum((np.clip(v, 0.0, 1.0) * N_BINS).astype(np.int64), N_BINS - 1)
    counts = np.bincount(idx, minlength=N_BINS).astype(np.float64)
    return counts / counts.sum()


def intersection(h1: np.ndarray, h2: np.ndarray) -> float:
    return float(np.minimum(h1, h2).sum())


def box_mean8(lum: np.ndarray) -> np.ndarray:
    """Truncated sliding 8x8 box mean (window rows i-3..i+4 within bounds)."""
    h, w = lum.shape
    s = np.zeros((h + 1, w + 1))
    s[1:, 1:] = lum.cumsum(axis=0).cumsum(axis=1)
    r0 = np.clip(np.arange(h) - 3, 0, None)
    r1 = np.minimum(np.arange(h) + 4, h - 1) + 1
    c0 = np.clip(np.arange(w) - 3, 0, None)
    c1 = np.minimum(np.arange(w) + 4, w - 1) + 1
    sums = (
        s[np.ix_(r1, c1)] - s[np.ix_(r0, c1)] - s[np.ix_(r1, c0)] + s[np.ix_(r0, c0)]
    )
    counts = np.outer(r1 - r0, c1 - c0)
    return sums / counts


def local_contrast(img: Image) -> np.ndarray:
    """Per-pixel |luma - box mean|, scaled x4 and clamped to [0, 1]."""
    lum = luma_array(img.data)
    return np.clip(4.0 * np.abs(lum - box_mean8(lum)), 0.0, 1.0)


@dataclass(frozen=True)
class HistScores:
    hist_l: float
    hist_c: float
    hist_s: float
    hist_m: float


def hist_suite(a: Image, b: Image) -> HistScores:
    """Histogram intersections for luminance, local contrast, saturation.

    Resolution-free: the two images may differ in size.
    """
    for img in (a, b):
        if img.width * img.height == 0:
            raise EmptyImage("histogram suite needs non-empty images")
    hl = intersection(
        histogram64(luma_array(a.data)), histogram64(luma_array(b.data))
    )
    hc = intersection(histogram64(local_contrast(a)), histogram64(local_contrast(b)))
    sa = rgb_to_hsv_array(a.data.reshape(-1, 3))[1]
    sb = rgb_to_hsv_array(b.data.reshape(-1, 3))[1]
    hs = intersection(histogram64(sa), histogram64(sb))
    return HistScores(hl, hc, hs, (hl + hc + hs) / 3.0)


# --------------------------------------------------------------------------
# Fidelity metrics
# --------------------------------------------------------------------------


def l1(a: Image, b: Image) -> float:
    require_same_size(a, b)
    return float(np.mean(np.abs(a.data - b.data)))


def psnr(a: Image, b: Image) -> float:
    """10 log10(1 / MSE) over all channels, capped at 99 dB."""
    require_same_size(a, b)
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(1.0 / mse))


def ssim(a: Image, b: Image) -> float:
    """Mean SSIM over sliding 8x8 uniform windows on luma.

    C1 = 0.01^2, C2 = 0.03^2. Images smaller than the window fall back to
    a single window covering everything.
    """
    require_same_size(a, b)
    x = luma_array(a.data)
    y = luma_array(b.data)
    win = 8
    if min(x.shape) < win:
        win = min(x.shape)
    mx = _window_means(x, win)
    my = _window_means(y, win)
    mxx = _window_means(x * x, win)
    myy = _window_means(y * y, win)
    mxy = _window_means(x * y, win)
    vx = mxx - mx * mx
    vy = myy - my * my
    cov = mxy - mx * my
    c1 = 0.01**2
    c2 = 0.03**2
    s = ((2 * mx * my + c1) * (2 * cov + c2)) / (
        (mx * mx + my * my + c1) * (vx + vy + c2)
    )
    return float(np.mean(s))


def _window_means(x: np.ndarray, win: int) -> np.ndarray:
    h, w = x.shape
    s = np.zeros((h + 1, w + 1))
    s[1:, 1:] = x.cumsum(axis=0).cumsum(axis=1)
    out = (
        s[win:, win:] - s[:-win, win:] - s[win:, :-win] + s[:-win, :-win]
    )
    return out / (win * win)


# --------------------------------------------------------------------------
# Structured-reasoning parsing and rewards
# --------------------------------------------------------------------------


@dataclass
class ReasoningDoc:
    """Tag events in document order plus presence flags."""

    events: list[tuple[str, int]] = field(default_factory=list)
    tag_presence: dict[str, bool] = field(default_factory=dict)
    token_presence: dict[str, bool] = field(default_factory=dict)

    def tags_present(self) -> int:
        return sum(self.tag_presence.values())


def parse_reasoning(text: str) -> ReasoningDoc:
    """Extract canonical tags by exact substring match, tolerant of prose."""
    events: list[tuple[str, int]] = []
    presence: dict[str, bool] = {}
    for tag in CANONICAL_TAGS:
        positions = []
        start = text.find(tag)
        while start != -1:
            positions.append(start)
            start = text.find(tag, start + 1)
        presence[tag] = bool(positions)
        events.extend((tag, pos) for pos in positions)
    events.sort(key=lambda e: e[1])
    tokens = {task: (tok in text) for task, tok in RETOUCH_TOKENS.items()}
    return ReasoningDoc(events=events, tag_presence=presence, token_presence=tokens)


def reward_format(text: str, task: str | None = None) -> float:
    """Structural-format reward: detected/required tags plus token penalty.

    With `task` given ("auto" | "style" | "param"), the -5 penalty fires
    when that task's designated token is absent; with no task, all three
    tokens are required.
    """
    doc = parse_reasoning(text)
    ratio = doc.tags_present() / len(CANONICAL_TAGS)
    if task is not None:
        if task not in RETOUCH_TOKENS:
            raise ValueError(f"unknown task {task!r}")
        missing = not doc.token_presence[task]
    else:
        missing = not all(doc.token_presence.values())
    return ratio + (FORMAT_PENALTY if missing else 0.0)


def rgb_hist_cosine(a: Image, b: Image) -> float:
    """Cosine similarity of concatenated per-channel 64-bin histograms."""
    va = np.concatenate([histogram64(a.data[:, :, c]) for c in range(3)])
    vb = np.concatenate([histogram64(b.data[:, :, c]) for c in range(3)])
    denom = float(np.linalg.norm(va) * np.linalg.norm(vb))
    return float(va @ vb) / denom


def reward_similarity(out: Image, tar: Image, gamma: float = 0.5) -> float:
    """gamma * HistSim + (1 - gamma) * (1 - L1), clamped to [0, 1]."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    require_same_size(out, tar)
    score = gamma * rgb_hist_cosine(out, tar) + (1.0 - gamma) * (1.0 - l1(out, tar))
    return min(1.0, max(0.0, score))


# Built-in stub scorers: deterministic image statistics standing in for
# learned aesthetic models behind the same plugin contract.


def mean_saturation(img: Image) -> float:
    return float(np.mean(rgb_to_hsv_array(img.data.reshape(-1, 3))[1]))


def midtone_contrast(img: Image) -> float:
    lum = luma_array(img.data)
    sel = (lum >= 0.25) & (lum <= 0.75)
    if not np.any(sel):
        return 0.0
    return min(1.0, 2.0 * float(np.std(lum[sel])))


def clipping_fraction_complement(img: Image) -> float:
    clipped = np.any((img.data <= 0.002) | (img.data >= 0.998), axis=2)
    return 1.0 - float(np.mean(clipped))


DEFAULT_SCORERS: tuple[Callable[[Image], float], ...] = (
    mean_saturation,
    midtone_contrast,
    clipping_fraction_complement,
)


def reward_aesthetic(
    out: Image,
    scorers: Sequence[Callable[[Image], float]] | None = None,
    alpha: float = 0.4,
    beta: float = 0.3,
) -> float:
    """Weighted combination of three unit-interval scorer plugins.

    Weights are (alpha, beta, 1 - alpha - beta); scorer exceptions and
    out-of-range returns surface as ScorerFailure with the scorer name.
    """
    if alpha < 0 or beta < 0 or alpha + beta > 1.0 + 1e-12:
        raise ValueError(f"bad weights alpha={alpha} beta={beta}")
    fns = tuple(scorers) if scorers is not None else DEFAULT_SCORERS
    if len(fns) != 3:
        raise ValueError(f"expected 3 scorers, got {len(fns)}")
    values = []
    for fn in fns:
        name = getattr(fn, "__name__", repr(fn))
        try:
            v = float(fn(out))
        except Exception as exc:  # plugin boundary
            raise ScorerFailure(name, exc) from exc
        if not 0.0 <= v <= 1.0 or not np.isfinite(v):
            raise ScorerFailure(name, ValueError(f"score {v} outside [0, 1]"))
        values.append(v)
    weights = (alpha, beta, 1.0 - alpha - beta)
    return float(sum(w * v for w, v in zip(weights, values)))


@dataclass
class RewardReport:
    """The three reward scores plus their component breakdown."""

    r_f: float
    r_s: float
    r_a: float
    breakdown: dict[str, float] = field(default_factory=dict)
