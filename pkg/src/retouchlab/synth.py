"""Deterministic data-synthesis pipelines.

Two generation modes share one Gaussian sampler: "auto" perturbs each
operator with its own calibrated standard deviation (degradation pairs),
"param" samples at a fixed fraction of each operator's range (parameter-
conditioned pairs). Every pair k draws from a substream derived from
(seed, k), so pairs are reproducible in isolation and generation can be
parallelized without changing a single byte of output.
"""

from __future__ import annotations

import json
import os
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptData, EmptyCorpus
from .imagecore import Image, hsv_to_rgb_array, load_image, save_image
from .ops import (
    N_PARAMS,
    OPERATORS,
    RANGE_MAX,
    SIGMAS,
    CategoryMask,
    ParamVector,
    apply_pipeline,
)
from .rng import Rng


@dataclass(frozen=True)
class StdDevTable:
    """Per-operator sampling sigmas in raw units."""

    sigmas: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigmas, dtype=np.float64)
        if s.shape != (N_PARAMS,):
            raise ValueError(f"expected {N_PARAMS} sigmas, got {s.shape}")
        if np.any(s <= 0):
            raise ValueError("sigmas must be positive")
        object.__setattr__(self, "sigmas", s)

    @classmethod
    def default(cls) -> "StdDevTable":
        return cls(SIGMAS.copy())


def sample_params(
    mask: CategoryMask,
    rng: Rng,
    mode: str = "param",
    scale: float = 0.25,
    table: StdDevTable | None = None,
) -> ParamVector:
    """Gaussian-draw the active categories' parameters, clamped to range.

    mode "auto" uses the per-operator sigma table; mode "param" uses
    scale * range_max for every operator. Inactive categories stay
    exactly zero; draws consume the stream in operator-table order.
    """
    if mode not in ("auto", "param"):
        raise ValueError(f"mode must be 'auto' or 'param', got {mode!r}")
    if scale < 0:
        raise ValueError("scale must be >= 0")
    table = table or StdDevTable.default()
    sigma = table.sigmas if mode == "auto" else scale * RANGE_MAX
    idx = np.nonzero(mask.active_params())[0]
    values = np.zeros(N_PARAMS)
    if idx.size:
        draws = rng.normals(idx.size) * sigma[idx]
        values[idx] = np.clip(draws, -RANGE_MAX[idx], RANGE_MAX[idx])
    return ParamVector(values)


def degrade(
    img: Image,
    mode: str = "auto",
    scale: float = 0.25,
    seed: int = 0,
    mask: CategoryMask | None = None,
) -> tuple[Image, ParamVector]:
    """Synthesize a pseudo-unretouched version of a good image.

    Treats `img` as the retouched target: samples parameters, applies the
    pipeline with the negated values, and returns (degraded image,
    forward parameters that approximately restore it). The pair
    (degraded -> img) is the training pair.
    """
    mask = mask or CategoryMask.all_active()
    params = sample_params(mask, Rng(seed), mode=mode, scale=scale)
    degraded = apply_pipeline(params.negated(), img)
    return degraded, params


# --------------------------------------------------------------------------
# Parameter-pair generation with a JSONL manifest
# --------------------------------------------------------------------------


@dataclass
class PairRecord:
    input: str
    target: str
    params: ParamVector
    mask: CategoryMask
    seed: int
    direction: str = "forward"

    def to_json(self) -> str:
        return json.dumps(
            {
                "input": self.input,
                "target": self.target,
                "params": self.params.to_mapping(),
                "mask": list(self.mask.flags()),
                "seed": self.seed,
                "direction": self.direction,
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "PairRecord":
        try:
            obj = json.loads(line)
            flags = obj["mask"]
            return cls(
                input=obj["input"],
                target=obj["target"],
                params=ParamVector.from_mapping(obj["params"]),
                mask=CategoryMask(bool(flags[0]), bool(flags[1]), bool(flags[2])),
                seed=int(obj["seed"]),
                direction=obj["direction"],
            )
        except (KeyError, IndexError, ValueError, json.JSONDecodeError) as exc:
            raise CorruptData(f"bad manifest row: {exc}") from exc


@dataclass
class PairManifest:
    records: list[PairRecord]

    def save(self, path: str | os.PathLike) -> None:
        text = "".join(r.to_json() + "\n" for r in self.records)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "PairManifest":
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().split("\n") if ln.strip()]
        return cls([PairRecord.from_json(ln) for ln in lines])


def list_corpus(corpus_dir: str | os.PathLike) -> list[Path]:
    paths = sorted(Path(corpus_dir).glob("*.png"))
    if not paths:
        raise EmptyCorpus(f"no PNG files in {corpus_dir}")
    return paths


def gen_param_pairs(
    corpus_dir: str | os.PathLike,
    n: int,
    masks: list[CategoryMask],
    scale: float,
    seed: int,
    out_dir: str | os.PathLike,
    threads: int = 1,
) -> PairManifest:
    """Generate n (input, target, params) pairs plus a JSONL manifest.

    Images are picked round-robin, masks cycle through the provided list,
    and pair k samples from substream derive(seed, k). Inputs are copied
    byte-for-byte; targets are rendered with the operator pipeline and
    written as 8-bit PNG. Output is byte-deterministic for a fixed seed
    regardless of thread count.
    """
    if not masks:
        raise ValueError("masks list must be non-empty")
    sources = list_corpus(corpus_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    root = Rng(seed)

    def build(k: int) -> PairRecord:
        src = sources[k % len(sources)]
        mask = masks[k % len(masks)]
        sub = root.derive(k)
        params = sample_params(mask, sub, mode="param", scale=scale)
        in_name = f"pair_{k:05d}_in.png"
        tar_name = f"pair_{k:05d}_tar.png"
        shutil.copyfile(src, out / in_name)
        target = apply_pipeline(params, load_image(out / in_name))
        save_image(target, out / tar_name, depth=8)
        return PairRecord(
            input=in_name,
            target=tar_name,
            params=params,
            mask=mask,
            seed=sub.seed,
        )

    if threads > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(build, range(n)))
    else:
        records = [build(k) for k in range(n)]
    manifest = PairManifest(records)
    manifest.save(out / "manifest.jsonl")
    return manifest


# --------------------------------------------------------------------------
# Synthetic test corpus
# --------------------------------------------------------------------------


def synth_corpus(n: int, width: int, height: int, seed: int) -> list[Image]:
    """Deterministic colorful images that jointly cover the RGB cube.

    Alternates uniform-noise fields (dense cube coverage), directional
    color ramps, full hue sweeps, and radial three-color blends. Spatial
    structure is irrelevant to a per-pixel renderer; pixel-value coverage
    is what matters for distillation.
    """
    images = []
    xs, ys = np.meshgrid(
        np.linspace(0.0, 1.0, width), np.linspace(0.0, 1.0, height)
    )
    for i in range(n):
        r = Rng(seed).derive(i)
        kind = i % 4
        if kind == 0:
            arr = r.uniforms(height * width * 3).reshape(height, width, 3)
        elif kind == 1:
            c0 = r.uniforms(3)
            c1 = r.uniforms(3)
            ang = r.uniform() * 2.0 * np.pi
            t = (np.cos(ang) * xs + np.sin(ang) * ys + 1.0) / 2.0
            arr = c0[None, None, :] + (c1 - c0)[None, None, :] * t[:, :, None]
            arr = arr + 0.08 * (
                r.uniforms(height * width * 3).reshape(height, width, 3) - 0.5
            )
        elif kind == 2:
            hue = (xs * 360.0 + r.uniform() * 360.0) % 360.0
            sat = 0.15 + 0.85 * ys
            val = 0.25 + 0.7 * r.uniforms(height * width).reshape(height, width)
            flat = hsv_to_rgb_array(hue.ravel(), sat.ravel(), val.ravel())
            arr = flat.reshape(height, width, 3)
        else:
            centers = r.uniforms(6).reshape(3, 2)
            colors = r.uniforms(9).reshape(3, 3)
            acc = np.zeros((height, width, 3))
            wsum = np.zeros((height, width, 1))
            for c, col in zip(centers, colors):
                d2 = (xs - c[0]) ** 2 + (ys - c[1]) ** 2
                w = np.exp(-4.0 * d2)[:, :, None]
                acc += w * col[None, None, :]
                wsum += w
            arr = acc / np.maximum(wsum, 1e-9)
        images.append(Image.from_array(np.clip(arr, 0.0, 1.0)))
    return images


def write_corpus(
    out_dir: str | os.PathLike, n: int, width: int, height: int, seed: int
) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(synth_corpus(n, width, height, seed)):
        p = out / f"img_{i:04d}.png"
        save_image(img, p, depth=8)
        paths.append(p)
    return paths
