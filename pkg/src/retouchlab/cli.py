"""Command-line surface tying the engine together.

Exit codes: 0 success, 2 usage, 3 I/O, 4 data-format, 5 numeric failure.
Machine-readable JSON reports go to stdout; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from pathlib import Path

from . import metrics, renderer, synth
from .errors import (
    CorruptData,
    EmptyCorpus,
    EmptyImage,
    IoError,
    NonFiniteLoss,
    OutOfRangeParam,
    RetouchError,
    ScorerFailure,
    ShapeMismatch,
    UnsupportedFormat,
)
from .imagecore import Image, load_image, quantize, save_image
from .ops import CategoryMask, ParamVector, apply_pipeline

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_FORMAT = 4
EXIT_NUMERIC = 5

_FRAME_RE = re.compile(r"^frame_(\d{6})\.png$")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _default_threads() -> int:
    env = os.environ.get("VERA_THREADS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def _parse_mask(text: str | None) -> CategoryMask:
    if not text:
        return CategoryMask.all_active()
    parts = {p.strip().upper() for p in re.split(r"[+,]", text) if p.strip()}
    unknown = parts - {"L", "GC", "SC"}
    if unknown:
        raise CliError(EXIT_USAGE, f"unknown mask categories: {sorted(unknown)}")
    if not parts:
        raise CliError(EXIT_USAGE, "mask must name at least one of L, GC, SC")
    return CategoryMask("L" in parts, "GC" in parts, "SC" in parts)


def _load_params(path: str) -> ParamVector:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read parameter file: {exc}") from exc
    try:
        pv = ParamVector.from_json(text)
        pv.validate()
        return pv
    except (OutOfRangeParam, json.JSONDecodeError, ValueError) as exc:
        raise CliError(EXIT_FORMAT, f"bad parameter file {path}: {exc}") from exc


def _load_model(path: str):
    return renderer.load_model(path)


def _emit(report: dict) -> None:
    sys.stdout.write(json.dumps(report, indent=2) + "\n")


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_render(args) -> int:
    net, adapter = _load_model(args.net)
    img = load_image(args.infile)
    if args.latent:
        latent = renderer.load_latent(args.latent)
        out = renderer.render(net, img, latent, threads=args.threads)
    else:
        params = _load_params(args.params)
        mask = _parse_mask(args.mask)
        out = renderer.render_with_params(
            net, adapter, img, params, mask, threads=args.threads
        )
    save_image(out, args.out, depth=args.depth)
    return EXIT_OK


def cmd_fit(args) -> int:
    net, _ = _load_model(args.net)
    ref_in = load_image(args.ref_in)
    ref_tar = load_image(args.ref_tar)
    mask = _parse_mask(args.mask)
    result = renderer.invert_latents(
        net, ref_in, ref_tar, mask,
        iterations=args.iters, lr=args.lr, crop=args.crop,
    )
    # evaluate and persist the float32-quantized latent so a later render
    # of the saved file reproduces this report bit-exactly
    latent = renderer.quantized(result.latent)
    renderer.save_latent(latent, args.out_latent)
    preview = renderer.render(net, ref_in, latent)
    report = {
        "final_loss": result.history[-1] if result.history else result.best_loss,
        "best_loss": result.best_loss,
        "best_iter": result.best_iter,
        "iterations": args.iters,
        "mask": mask.label(),
        "psnr": metrics.psnr(preview, ref_tar),
        "l1": metrics.l1(preview, ref_tar),
        "latent": args.out_latent,
    }
    if args.out_preview:
        save_image(preview, args.out_preview, depth=8)
        report["preview"] = args.out_preview
    _emit(report)
    return EXIT_OK


def cmd_video(args) -> int:
    net, _ = _load_model(args.net)
    latent = renderer.load_latent(args.latent)
    frames_dir = Path(args.frames_dir)
    if not frames_dir.is_dir():
        raise CliError(EXIT_IO, f"frames dir not found: {frames_dir}")
    indexed = {}
    for p in frames_dir.iterdir():
        m = _FRAME_RE.match(p.name)
        if m:
            indexed[int(m.group(1))] = p
    if not indexed:
        raise CliError(EXIT_FORMAT, "no frame_NNNNNN.png files found")
    lo, hi = min(indexed), max(indexed)
    gaps = [i for i in range(lo, hi + 1) if i not in indexed]
    if gaps:
        raise CliError(EXIT_FORMAT, f"missing frame indices: {gaps}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(lo, hi + 1):
        frame = load_image(indexed[i])
        out = renderer.render(net, frame, latent, threads=args.threads)
        save_image(out, out_dir / indexed[i].name, depth=args.depth)
    return EXIT_OK


def cmd_multiround(args) -> int:
    net, adapter = _load_model(args.net)
    try:
        rounds_spec = json.loads(Path(args.params_file).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read params file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_FORMAT, f"bad params file: {exc}") from exc
    if isinstance(rounds_spec, dict):
        rounds_spec = [rounds_spec]
    if not isinstance(rounds_spec, list) or not rounds_spec:
        raise CliError(EXIT_FORMAT, "params file must be an object or array")
    if len(rounds_spec) not in (1, args.rounds):
        raise CliError(
            EXIT_FORMAT,
            f"params file has {len(rounds_spec)} entries for {args.rounds} rounds",
        )
    try:
        per_round = [ParamVector.from_mapping(m) for m in rounds_spec]
        for pv in per_round:
            pv.validate()
    except (OutOfRangeParam, TypeError, AttributeError) as exc:
        raise CliError(EXIT_FORMAT, f"bad params file: {exc}") from exc
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mask = _parse_mask(args.mask)
    current = load_image(args.infile)
    for i in range(args.rounds):
        pv = per_round[i % len(per_round)]
        current = renderer.render_with_params(
            net, adapter, current, pv, mask, threads=args.threads
        )
        save_image(current, out_dir / f"round_{i + 1}.png", depth=args.depth)
    return EXIT_OK


def cmd_degrade(args) -> int:
    img = load_image(args.infile)
    degraded, params = synth.degrade(
        img, mode=args.mode, scale=args.scale, seed=args.seed
    )
    save_image(degraded, args.out, depth=args.depth)
    if args.params_out:
        Path(args.params_out).write_text(params.to_json() + "\n", encoding="utf-8")
    _emit({"out": args.out, "mode": args.mode, "params": params.to_mapping()})
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.masks:
        masks = [_parse_mask(tok) for tok in args.masks.split("/")]
    else:
        masks = list(CategoryMask.combinations())
    manifest = synth.gen_param_pairs(
        args.corpus, args.n, masks, args.scale, args.seed, args.out,
        threads=args.threads,
    )
    _emit({"pairs": len(manifest.records), "manifest": str(Path(args.out) / "manifest.jsonl")})
    return EXIT_OK


def cmd_distill(args) -> int:
    paths = synth.list_corpus(args.corpus)
    corpus = [load_image(p) for p in paths]
    cfg = renderer.DistillConfig(
        steps=args.steps,
        batch=args.batch,
        crop=args.crop,
        lr=args.lr,
        seed=args.seed,
        scale=args.scale,
        draws=args.draws,
    )
    result = renderer.distill(cfg, corpus)
    renderer.save_model(args.out_net, result.net, result.adapter)
    report = {
        "checkpoint": args.out_net,
        "steps": cfg.steps,
        "final_loss": result.log[-1][1] if result.log else None,
    }
    if args.log:
        Path(args.log).write_text(
            "".join(f"{s}\t{v}\n" for s, v in result.log), encoding="utf-8"
        )
        report["log"] = args.log
    _emit(report)
    return EXIT_OK


def _eval_pair(out_img: Image, tar_img: Image, gamma, alpha, beta) -> dict:
    hs = metrics.hist_suite(out_img, tar_img)
    return {
        "psnr": metrics.psnr(out_img, tar_img),
        "ssim": metrics.ssim(out_img, tar_img),
        "l1": metrics.l1(out_img, tar_img),
        "hist_l": hs.hist_l,
        "hist_c": hs.hist_c,
        "hist_s": hs.hist_s,
        "hist_m": hs.hist_m,
        "r_s": metrics.reward_similarity(out_img, tar_img, gamma),
        "r_a": metrics.reward_aesthetic(out_img, alpha=alpha, beta=beta),
    }


def cmd_eval(args) -> int:
    if args.manifest:
        mdir = Path(args.manifest).parent
        manifest = synth.PairManifest.load(args.manifest)
        rows = []
        for rec in manifest.records:
            stored_in = load_image(mdir / rec.input)
            stored_tar = load_image(mdir / rec.target)
            # compare in quantized space: the stored target is 8-bit
            rerender = quantize(apply_pipeline(rec.params, stored_in), depth=8)
            row = _eval_pair(stored_tar, rerender, args.gamma, args.alpha, args.beta)
            row["input"] = rec.input
            row["target"] = rec.target
            row["l1_rerender"] = metrics.l1(stored_tar, rerender)
            rows.append(row)
        _emit({"pairs": rows})
        return EXIT_OK
    out_img = load_image(args.out_image)
    tar_img = load_image(args.target)
    report = _eval_pair(out_img, tar_img, args.gamma, args.alpha, args.beta)
    if args.reasoning:
        try:
            text = Path(args.reasoning).read_text(encoding="utf-8")
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read reasoning file: {exc}") from exc
        report["r_f"] = metrics.reward_format(text, task=args.task)
    _emit(report)
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(EXIT_USAGE, message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="retouchlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    threads_default = _default_threads()

    def add_common(sp, depth=True):
        sp.add_argument("--threads", type=int, default=threads_default)
        if depth:
            sp.add_argument("--depth", type=int, choices=(8, 16), default=8)

    sp = sub.add_parser("render", help="apply a latent or parameters to an image")
    sp.add_argument("--net", required=True)
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--out", required=True)
    group = sp.add_mutually_exclusive_group(required=True)
    group.add_argument("--latent")
    group.add_argument("--params")
    sp.add_argument("--mask", default=None)
    add_common(sp)
    sp.set_defaults(run=cmd_render)

    sp = sub.add_parser("fit", help="invert a latent from a reference pair")
    sp.add_argument("--net", required=True)
    sp.add_argument("--ref-in", dest="ref_in", required=True)
    sp.add_argument("--ref-tar", dest="ref_tar", required=True)
    sp.add_argument("--mask", default=None)
    sp.add_argument("--out-latent", dest="out_latent", required=True)
    sp.add_argument("--out-preview", dest="out_preview", default=None)
    sp.add_argument("--iters", type=int, default=500)
    sp.add_argument("--lr", type=float, default=0.05)
    sp.add_argument("--crop", type=int, default=64)
    sp.set_defaults(run=cmd_fit)

    sp = sub.add_parser("video", help="apply one latent to numbered frames")
    sp.add_argument("--net", required=True)
    sp.add_argument("--latent", required=True)
    sp.add_argument("--frames-dir", dest="frames_dir", required=True)
    sp.add_argument("--out-dir", dest="out_dir", required=True)
    add_common(sp)
    sp.set_defaults(run=cmd_video)

    sp = sub.add_parser("multiround", help="chain renders output-to-input")
    sp.add_argument("--net", required=True)
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--rounds", type=int, required=True)
    sp.add_argument("--params-file", dest="params_file", required=True)
    sp.add_argument("--out-dir", dest="out_dir", required=True)
    sp.add_argument("--mask", default=None)
    add_common(sp)
    sp.set_defaults(run=cmd_multiround)

    sp = sub.add_parser("degrade", help="synthesize a pseudo-unretouched image")
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--mode", choices=("auto", "param"), default="auto")
    sp.add_argument("--scale", type=float, default=0.25)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--params-out", dest="params_out", default=None)
    add_common(sp)
    sp.set_defaults(run=cmd_degrade)

    sp = sub.add_parser("gen", help="generate parameter pairs with a manifest")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--masks", default=None, help="e.g. 'L/GC/L+GC+SC' (default: all 7)")
    sp.add_argument("--scale", type=float, default=0.25)
    sp.add_argument("--seed", type=int, default=0)
    add_common(sp, depth=False)
    sp.set_defaults(run=cmd_gen)

    sp = sub.add_parser("distill", help="train the renderer from the operator library")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out-net", dest="out_net", required=True)
    sp.add_argument("--steps", type=int, default=20000)
    sp.add_argument("--batch", type=int, default=16)
    sp.add_argument("--crop", type=int, default=16)
    sp.add_argument("--lr", type=float, default=3e-3)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--scale", type=float, default=0.25)
    sp.add_argument("--draws", type=int, default=16)
    sp.add_argument("--log", default=None)
    sp.set_defaults(run=cmd_distill)

    sp = sub.add_parser("eval", help="score an (output, target) pair or manifest")
    sp.add_argument("--out-image", dest="out_image")
    sp.add_argument("--target")
    sp.add_argument("--manifest")
    sp.add_argument("--reasoning", default=None)
    sp.add_argument("--task", choices=("auto", "style", "param"), default=None)
    sp.add_argument("--gamma", type=float, default=0.5)
    sp.add_argument("--alpha", type=float, default=0.4)
    sp.add_argument("--beta", type=float, default=0.3)
    sp.set_defaults(run=cmd_eval)

    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.run is cmd_eval and not args.manifest:
            if not (args.out_image and args.target):
                raise CliError(EXIT_USAGE, "eval needs --manifest or --out-image/--target")
        return args.run(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except IoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (UnsupportedFormat, CorruptData, OutOfRangeParam, ShapeMismatch,
            EmptyCorpus, EmptyImage, ScorerFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except NonFiniteLoss as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RetouchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
