"""Control latents, renderer distillation, and gradient latent inversion.

The renderer is the per-pixel MLP from `graph`, conditioned on a 96-wide
composite latent built from three 32-wide blocks (lighting, global color,
specific color) gated by binary masks. A block-diagonal parameter adapter
maps normalized operator parameters to the three blocks, each produced
only from its own category's parameters, which structurally enforces the
disentanglement the masks expect.

Distillation trains net and adapter jointly to reproduce the analytic
operator pipeline under L1 pixel loss; inversion fits a latent for one
reference pair through the frozen net. Both are bit-reproducible for a
fixed seed in single-threaded mode.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagic,
    CorruptData,
    DimensionMismatch,
    EmptyCorpus,
    NonFiniteLoss,
    ShapeMismatch,
    VersionMismatch,
)
from .graph import (
    HIDDEN_LAYERS,
    LATENT_BLOCK,
    LATENT_WIDTH,
    Adam,
    NetTensors,
    RetouchNet,
    Tape,
    Tensor,
    load_weights,
    mlp_forward,
    mlp_forward_tape,
    save_weights,
)
from .imagecore import Image
from .ops import (
    CATEGORY_SLICES,
    RANGE_MAX,
    CategoryMask,
    ParamVector,
    apply_pipeline_batch,
)
from .rng import Rng
from .synth import sample_params

ADAPTER_HIDDEN = 48
_RENDER_CHUNK = 1 << 16


# --------------------------------------------------------------------------
# Control latents
# --------------------------------------------------------------------------


@dataclass
class ControlLatent:
    """Three 32-wide latent blocks plus the category masks gating them."""

    z_l: np.ndarray
    z_gc: np.ndarray
    z_sc: np.ndarray
    masks: CategoryMask

    def __post_init__(self):
        for name in ("z_l", "z_gc", "z_sc"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.shape != (LATENT_BLOCK,):
                raise ShapeMismatch(f"{name} must have shape ({LATENT_BLOCK},)")
            setattr(self, name, v)

    @classmethod
    def zeros(cls, masks: CategoryMask | None = None) -> "ControlLatent":
        z = np.zeros(LATENT_BLOCK)
        return cls(z.copy(), z.copy(), z.copy(), masks or CategoryMask.all_active())

    def compose(self) -> np.ndarray:
        return compose_latent(self.z_l, self.z_gc, self.z_sc, self.masks)


def compose_latent(
    z_l: np.ndarray, z_gc: np.ndarray, z_sc: np.ndarray, masks: CategoryMask
) -> np.ndarray:
    """Concatenate the blocks in fixed L|GC|SC order, zeroing masked ones."""
    blocks = []
    for z, active in zip((z_l, z_gc, z_sc), masks.flags()):
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (LATENT_BLOCK,):
            raise ShapeMismatch(f"latent block must have shape ({LATENT_BLOCK},)")
        blocks.append(z if active else np.zeros(LATENT_BLOCK))
    return np.concatenate(blocks)


def mask_vector(masks: CategoryMask) -> np.ndarray:
    """96-wide 0/1 vector replicating the category masks over blocks."""
    return np.repeat(np.asarray(masks.flags(), dtype=np.float64), LATENT_BLOCK)


# --------------------------------------------------------------------------
# Parameter-to-latent adapter (block-diagonal wiring)
# --------------------------------------------------------------------------

_ADAPTER_CATS = ("L", "GC", "SC")


@dataclass
class ParamAdapter:
    """Per-category two-layer MLPs from normalized params to latent blocks.

    Block c sees only category c's parameters, so zeroing a category's
    parameters leaves that block at its bias-only output (which training
    drives toward zero). Final layers start at zero: the initial adapter
    output is exactly the zero latent.
    """

    hidden_w: list[np.ndarray]
    hidden_b: list[np.ndarray]
    out_w: list[np.ndarray]
    out_b: list[np.ndarray]

    @classmethod
    def initialize(cls, seed: int) -> "ParamAdapter":
        rng = Rng(seed).derive(0xAD47)
        hw, hb, ow, ob = [], [], [], []
        for cat in _ADAPTER_CATS:
            n_in = CATEGORY_SLICES[cat].stop - CATEGORY_SLICES[cat].start
            bound = np.sqrt(6.0 / (n_in + ADAPTER_HIDDEN))
            hw.append(
                (rng.uniforms(ADAPTER_HIDDEN * n_in) * 2.0 - 1.0).reshape(
                    ADAPTER_HIDDEN, n_in
                )
                * bound
            )
            hb.append(np.zeros(ADAPTER_HIDDEN))
            ow.append(np.zeros((LATENT_BLOCK, ADAPTER_HIDDEN)))
            ob.append(np.zeros(LATENT_BLOCK))
        return cls(hw, hb, ow, ob)

    def arrays(self) -> list[np.ndarray]:
        out = []
        for i in range(3):
            out.extend([self.hidden_w[i], self.hidden_b[i], self.out_w[i], self.out_b[i]])
        return out

    @classmethod
    def from_arrays(cls, arrays: list[np.ndarray]) -> "ParamAdapter":
        if len(arrays) != 12:
            raise ShapeMismatch(f"expected 12 adapter arrays, got {len(arrays)}")
        hw = [arrays[0], arrays[4], arrays[8]]
        hb = [arrays[1], arrays[5], arrays[9]]
        ow = [arrays[2], arrays[6], arrays[10]]
        ob = [arrays[3], arrays[7], arrays[11]]
        return cls(hw, hb, ow, ob)

    def latent_for(self, params: ParamVector, masks: CategoryMask) -> ControlLatent:
        """Inference path: normalized params -> latent blocks."""
        norm = params.normalized()
        blocks = []
        for i, cat in enumerate(_ADAPTER_CATS):
            p = norm[CATEGORY_SLICES[cat]]
            a = self.hidden_w[i] @ p + self.hidden_b[i]
            h = a / (1.0 + np.abs(a))
            blocks.append(self.out_w[i] @ h + self.out_b[i])
        return ControlLatent(blocks[0], blocks[1], blocks[2], masks)


class AdapterTensors:
    def __init__(self, adapter: ParamAdapter):
        self.hidden_w = [Tensor(w, requires=True) for w in adapter.hidden_w]
        self.hidden_b = [Tensor(b, requires=True) for b in adapter.hidden_b]
        self.out_w = [Tensor(w, requires=True) for w in adapter.out_w]
        self.out_b = [Tensor(b, requires=True) for b in adapter.out_b]

    def all(self) -> list[Tensor]:
        out = []
        for i in range(3):
            out.extend(
                [self.hidden_w[i], self.hidden_b[i], self.out_w[i], self.out_b[i]]
            )
        return out


def _adapter_forward_tape(
    tape: Tape, at: AdapterTensors, norm: np.ndarray, masks: CategoryMask
) -> Tensor:
    blocks = []
    for i, cat in enumerate(_ADAPTER_CATS):
        p = tape.leaf(norm[CATEGORY_SLICES[cat]])
        a = tape.add(tape.matvec(at.hidden_w[i], p), at.hidden_b[i])
        h = tape.rational_sigmoid(a)
        block = tape.add(tape.matvec(at.out_w[i], h), at.out_b[i])
        blocks.append(tape.mul_const(block, 1.0 if masks.flags()[i] else 0.0))
    return tape.concat(blocks)


def _adapter_forward_batch(
    tape: Tape, at: AdapterTensors, norms: np.ndarray, mask_flags: np.ndarray
) -> Tensor:
    """Adapter over D parameter rows at once -> [D, 96] masked latents."""
    blocks = []
    for i, cat in enumerate(_ADAPTER_CATS):
        p = tape.leaf(norms[:, CATEGORY_SLICES[cat]])
        a = tape.add_row(tape.linear(p, at.hidden_w[i]), at.hidden_b[i])
        h = tape.rational_sigmoid(a)
        block = tape.add_row(tape.linear(h, at.out_w[i]), at.out_b[i])
        blocks.append(tape.mul_mask(block, mask_flags[:, i : i + 1]))
    return tape.hstack(blocks)


def _mlp_forward_grouped(
    tape: Tape, nt: NetTensors, x: Tensor, z_rows: Tensor, px_per_group: int
) -> Tensor:
    """Renderer forward over D draw groups of px_per_group pixels each.

    z_rows is [D, 96]; each group's injection (b + U z_g) is one small
    GEMM, broadcast over that group's pixel block.
    """
    h = x
    for w, b, u in zip(nt.weights, nt.biases, nt.latent_proj):
        inject = tape.add_row(tape.linear(z_rows, u), b)
        a = tape.add_rows_grouped(tape.linear(h, w), inject, px_per_group)
        h = tape.rational_sigmoid(a)
    out = tape.add_row(tape.linear(h, nt.w_out), nt.b_out)
    return tape.add(x, out)


# --------------------------------------------------------------------------
# Rendering
# --------------------------------------------------------------------------


def render(
    net: RetouchNet, img: Image, latent: ControlLatent, threads: int = 1
) -> Image:
    """Per-pixel render, hard-clamped to [0, 1]. Pixel-permutation equivariant.

    Chunk boundaries are fixed regardless of thread count, so multi-
    threaded output is bit-identical to single-threaded output.
    """
    z = latent.compose()
    flat = img.data.reshape(-1, 3)
    chunks = [flat[i : i + _RENDER_CHUNK] for i in range(0, len(flat), _RENDER_CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outs = list(pool.map(lambda c: mlp_forward(net, c, z), chunks))
    else:
        outs = [mlp_forward(net, c, z) for c in chunks]
    out = np.clip(np.concatenate(outs, axis=0), 0.0, 1.0)
    return Image.from_array(out.reshape(img.height, img.width, 3))


def render_with_params(
    net: RetouchNet,
    adapter: ParamAdapter,
    img: Image,
    params: ParamVector,
    masks: CategoryMask | None = None,
    threads: int = 1,
) -> Image:
    masks = masks or CategoryMask.all_active()
    return render(net, img, adapter.latent_for(params, masks), threads=threads)


# --------------------------------------------------------------------------
# Distillation
# --------------------------------------------------------------------------


@dataclass
class DistillConfig:
    steps: int = 20000
    batch: int = 8
    crop: int = 16
    lr: float = 2e-3
    seed: int = 0
    curriculum: list[CategoryMask] | None = None
    scale: float = 0.25  # parameter sampling spread (fraction of range)
    identity_fraction: float = 0.05  # draws trained on the zero parameter vector
    draws: int = 16  # independent (mask, params) draws averaged per step
    ema: float = 0.999  # Polyak weight averaging; 0 disables
    log_every: int = 200

    def validate(self) -> None:
        if self.steps < 0 or self.batch < 1:
            raise ValueError("steps must be >= 0 and batch >= 1")
        if self.crop < 8:
            raise ValueError("crop must be >= 8")
        if self.draws < 1:
            raise ValueError("draws must be >= 1")


@dataclass
class DistillResult:
    net: RetouchNet
    adapter: ParamAdapter
    log: list[tuple[int, float]] = field(default_factory=list)


def _cosine_lr(base: float, t: int, total: int) -> float:
    # decay to 5% of the base rate over the run
    if total <= 1:
        return base
    frac = 0.5 * (1.0 + np.cos(np.pi * t / (total - 1)))
    return base * (0.05 + 0.95 * frac)


def distill(cfg: DistillConfig, corpus: list[Image]) -> DistillResult:
    """Train net + adapter to mimic the operator pipeline on random crops.

    Each step averages `draws` independent lessons: draw a category mask
    (uniform over the 7 combinations unless a curriculum is given),
    sample parameters inside the active categories, render ground truth
    with the analytic pipeline, and take L1 between the (unclamped) MLP
    output and the target. Averaging several draws per step tames the
    gradient noise of single-transform steps.
    """
    cfg.validate()
    if not corpus:
        raise EmptyCorpus("distillation corpus is empty")
    for img in corpus:
        if img.width < cfg.crop or img.height < cfg.crop:
            raise ValueError(
                f"corpus image {img.width}x{img.height} smaller than crop {cfg.crop}"
            )
    net = RetouchNet.initialize(cfg.seed)
    adapter = ParamAdapter.initialize(cfg.seed)
    nt = NetTensors(net)
    at = AdapterTensors(adapter)
    train_tensors = nt.all() + at.all()
    opt = Adam(train_tensors, lr=cfg.lr)
    shadow = [p.val.copy() for p in train_tensors] if cfg.ema > 0 else None
    combos = CategoryMask.combinations()
    root = Rng(cfg.seed)
    log: list[tuple[int, float]] = []

    crops_per_draw = max(1, cfg.batch // cfg.draws)
    px_per_draw = crops_per_draw * cfg.crop * cfg.crop
    for step in range(cfg.steps):
        r = root.derive(step)
        raw_rows = np.empty((cfg.draws, ParamVector.zeros().values.size))
        flags = np.empty((cfg.draws, 3))
        xs = []
        for di in range(cfg.draws):
            if cfg.curriculum:
                mask = cfg.curriculum[(step * cfg.draws + di) % len(cfg.curriculum)]
            else:
                mask = combos[r.randint(7)]
            if r.uniform() < cfg.identity_fraction:
                params = ParamVector.zeros()
            else:
                params = sample_params(mask, r, mode="param", scale=cfg.scale)
            crops = []
            for _ in range(crops_per_draw):
                img = corpus[r.randint(len(corpus))]
                ox = r.randint(img.width - cfg.crop + 1)
                oy = r.randint(img.height - cfg.crop + 1)
                crops.append(
                    img.data[oy : oy + cfg.crop, ox : ox + cfg.crop].reshape(-1, 3)
                )
            raw_rows[di] = params.values
            flags[di] = mask.flags()
            xs.append(np.concatenate(crops, axis=0))
        x_groups = np.stack(xs)
        t_all = apply_pipeline_batch(raw_rows, x_groups).reshape(-1, 3)
        x_all = x_groups.reshape(-1, 3)
        norms = raw_rows / RANGE_MAX

        tape = Tape()
        z_rows = _adapter_forward_batch(tape, at, norms, flags)
        out = _mlp_forward_grouped(tape, nt, tape.leaf(x_all), z_rows, px_per_draw)
        loss = tape.l1_loss(out, tape.leaf(t_all))
        loss_val = float(loss.val)
        if not np.isfinite(loss_val):
            raise NonFiniteLoss(step, loss_val)
        opt.zero_grad()
        tape.backward(loss)
        opt.step(lr=_cosine_lr(cfg.lr, step, cfg.steps))
        if shadow is not None:
            for s, p in zip(shadow, train_tensors):
                s *= cfg.ema
                s += (1.0 - cfg.ema) * p.val
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            log.append((step, loss_val))

    if shadow is not None and cfg.steps > 0:
        for s, p in zip(shadow, train_tensors):
            p.val[...] = s
    return DistillResult(net=net, adapter=adapter, log=log)


# --------------------------------------------------------------------------
# Latent inversion (the encoder substitute)
# --------------------------------------------------------------------------


@dataclass
class InversionResult:
    latent: ControlLatent
    history: list[float]
    best_loss: float
    best_iter: int


def _center_crop(img: Image, size: int) -> np.ndarray:
    cw = min(size, img.width)
    ch = min(size, img.height)
    ox = (img.width - cw) // 2
    oy = (img.height - ch) // 2
    return img.data[oy : oy + ch, ox : ox + cw].reshape(-1, 3)


def invert_latents(
    net: RetouchNet,
    ref_in: Image,
    ref_tar: Image,
    masks: CategoryMask,
    iterations: int = 500,
    lr: float = 0.05,
    crop: int = 64,
) -> InversionResult:
    """Fit a control latent so the frozen net maps ref_in to ref_tar.

    Starts from the zero latent, minimizes L1 on a fixed center crop with
    Adam over the active blocks (masked blocks stay pinned at zero), and
    returns the best-loss iterate seen.
    """
    if (ref_in.width, ref_in.height) != (ref_tar.width, ref_tar.height):
        raise DimensionMismatch(
            f"{ref_in.width}x{ref_in.height} vs {ref_tar.width}x{ref_tar.height}"
        )
    x = _center_crop(ref_in, crop)
    y = _center_crop(ref_tar, crop)
    nt = NetTensors(net)
    z = Tensor(np.zeros(LATENT_WIDTH), requires=True)
    mvec = mask_vector(masks)
    opt = Adam([z], lr=lr)
    history: list[float] = []
    best_loss = np.inf
    best_z = z.val.copy()
    best_iter = 0
    for it in range(iterations):
        tape = Tape()
        z_eff = tape.mul_mask(z, mvec)
        out = mlp_forward_tape(tape, nt, tape.leaf(x), z_eff)
        loss = tape.l1_loss(out, tape.leaf(y))
        loss_val = float(loss.val)
        if not np.isfinite(loss_val):
            raise NonFiniteLoss(it, loss_val)
        history.append(loss_val)
        if loss_val < best_loss:
            best_loss = loss_val
            best_z = z.val.copy()
            best_iter = it
        opt.zero_grad()
        tape.backward(loss)
        opt.step()
    if not history:  # zero iterations: report the initial state
        best_loss = float(np.mean(np.abs(mlp_forward(net, x, z.val * mvec) - y)))
    latent = ControlLatent(
        best_z[:LATENT_BLOCK],
        best_z[LATENT_BLOCK : 2 * LATENT_BLOCK],
        best_z[2 * LATENT_BLOCK :],
        masks,
    )
    return InversionResult(latent, history, best_loss, best_iter)


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------

_LATENT_MAGIC = b"VRLAT1"
_NET_ARRAYS = 3 * HIDDEN_LAYERS + 2


def save_latent(latent: ControlLatent, path: str) -> None:
    """Latent file: 6-byte magic, 1-byte mask bitfield, 96 LE float32."""
    blob = (
        _LATENT_MAGIC
        + bytes([latent.masks.to_bits()])
        + latent.compose().astype("<f4").tobytes()
    )
    with open(path, "wb") as fh:
        fh.write(blob)


def load_latent(path: str) -> ControlLatent:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 6 or blob[:5] != _LATENT_MAGIC[:5]:
        raise BadMagic("not a latent file")
    if blob[:6] != _LATENT_MAGIC:
        raise VersionMismatch(f"unknown latent version {blob[5:6]!r}")
    if len(blob) != 6 + 1 + 4 * LATENT_WIDTH:
        raise CorruptData(f"latent file has wrong size {len(blob)}")
    masks = CategoryMask.from_bits(blob[6])
    z = np.frombuffer(blob[7:], dtype="<f4").astype(np.float64)
    return ControlLatent(
        z[:LATENT_BLOCK], z[LATENT_BLOCK : 2 * LATENT_BLOCK], z[2 * LATENT_BLOCK :], masks
    )


def quantized(latent: ControlLatent) -> ControlLatent:
    """Round-trip the latent through its float32 file representation."""
    return ControlLatent(
        latent.z_l.astype(np.float32).astype(np.float64),
        latent.z_gc.astype(np.float32).astype(np.float64),
        latent.z_sc.astype(np.float32).astype(np.float64),
        latent.masks,
    )


def save_model(path: str, net: RetouchNet, adapter: ParamAdapter) -> None:
    """One checkpoint holds the renderer then the adapter, declared order."""
    save_weights(path, net.arrays() + adapter.arrays())


def load_model(path: str) -> tuple[RetouchNet, ParamAdapter]:
    arrays = load_weights(path)
    if len(arrays) != _NET_ARRAYS + 12:
        raise CorruptData(
            f"model checkpoint has {len(arrays)} arrays, expected {_NET_ARRAYS + 12}"
        )
    net = RetouchNet.from_arrays(arrays[:_NET_ARRAYS])
    adapter = ParamAdapter.from_arrays(arrays[_NET_ARRAYS:])
    return net, adapter
