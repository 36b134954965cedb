"""Command-line interface.

Subcommands: ``salience``, ``mask``, ``train``, ``sweep``, ``gen-synthetic``.

Every flag can also come from a ``--config`` file of ``key = value`` lines
(keys are flag names, dashes or underscores; ``#`` starts a comment).
Command-line flags win over the file, the file wins over built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from sbam import netpbm
from sbam.errors import ConfigError, SbamError
from sbam.masking import MaskingConfig, amr_ratio, generate_mask
from sbam.metrics import PERFORMANCE_HEADER, format_sweep_csv, sweep, sweep_rows
from sbam.numerics import make_rng
from sbam.salience import token_salience
from sbam.synthetic import planted_object_images
from sbam.tensorio import write_tensors
from sbam.tokenize import Image, patchify
from sbam.trainer import TrainConfig, train

log = logging.getLogger("sbam")

DEFAULTS = {
    "seed": 0,
    "patch_side": 8,
    "out": ".",
    "strategy": "sbam",
    "ratio": 0.75,
    "delta_r": 0.15,
    "delta": 0.1,
    "noise": 0.5,
    "invert_selection": False,
    "epochs": 200,
    "lr": 0.01,
    "batch": 16,
    "d_hidden": 16,
    "eps": 1e-6,
    "synthetic": 0,
    "strategies": "random,sbam",
    "ratios": "0.3,0.5,0.75,0.9",
    "pimr_reference": "observed",
    "count": 64,
    "side": 32,
    "coverage": 0.25,
    "channels": 1,
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def read_config(path) -> dict[str, str]:
    """Parse a flat ``key = value`` file into raw strings."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def _add_masking_flags(p):
    p.add_argument("--strategy", help="random | sbam | sbam-amr | salience-only")
    p.add_argument("--ratio", type=float, help="base masking ratio")
    p.add_argument("--delta-r", type=float, help="adaptive ratio half-range")
    p.add_argument("--delta", type=float, help="salience threshold for the adaptive ratio")
    p.add_argument("--noise", type=float, help="noise amplitude added to salience")
    p.add_argument(
        "--invert-selection",
        action="store_const",
        const=True,
        help="keep high-salience tokens visible instead of masking them",
    )


def _add_train_flags(p):
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--d-hidden", type=int)
    p.add_argument("--eps", type=float, help="target normalization epsilon")
    p.add_argument("--synthetic", type=int, help="generate N planted-object images instead of reading files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sbam", description=__doc__.split("\n\n")[0])
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, images=True):
        if images:
            p.add_argument("images", nargs="*", help="PGM (P5) or PPM (P6) files")
        p.add_argument("--seed", type=int)
        p.add_argument("--patch-side", type=int)
        p.add_argument("--out", help="output directory (file for sweep)")

    p = sub.add_parser("salience", help="write salience CSV and heatmap per image")
    common(p)

    p = sub.add_parser("mask", help="write mask overlays and a mask CSV")
    common(p)
    _add_masking_flags(p)

    p = sub.add_parser("train", help="train the tiny MAE, write loss curve and params")
    common(p)
    _add_masking_flags(p)
    _add_train_flags(p)

    p = sub.add_parser("sweep", help="train over strategies x ratios, write PIMR CSV")
    common(p)
    _add_masking_flags(p)
    _add_train_flags(p)
    p.add_argument("--strategies", help="comma-separated strategy list")
    p.add_argument("--ratios", help="comma-separated masking ratios (at least 2)")
    p.add_argument("--pimr-reference", choices=["observed", "lowest_ratio"])

    p = sub.add_parser("gen-synthetic", help="write planted-object PGM/PPM images")
    common(p, images=False)
    p.add_argument("--count", type=int)
    p.add_argument("--side", type=int)
    p.add_argument("--coverage", type=float, help="fraction of patches covered by the object")
    p.add_argument("--channels", type=int, choices=[1, 3])
    return parser


def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset flags from the config file, then from DEFAULTS."""
    file_values = read_config(args.config) if args.config else {}
    for key, default in DEFAULTS.items():
        if not hasattr(args, key) or getattr(args, key) is not None:
            continue
        if key not in file_values:
            setattr(args, key, default)
            continue
        raw = file_values[key]
        if isinstance(default, bool):
            if raw.lower() not in _TRUE | _FALSE:
                raise ConfigError(f"{args.config}: {key} must be a boolean, got {raw!r}")
            value = raw.lower() in _TRUE
        else:
            try:
                value = type(default)(raw)
            except ValueError:
                raise ConfigError(f"{args.config}: bad value for {key}: {raw!r}") from None
        setattr(args, key, value)
    return args


def masking_config(args) -> MaskingConfig:
    return MaskingConfig(
        base_ratio=args.ratio,
        delta_r=args.delta_r,
        delta=args.delta,
        noise_amplitude=args.noise,
        seed=args.seed,
        strategy=args.strategy,
        invert_selection=bool(args.invert_selection),
    )


def train_config(args, masking: MaskingConfig) -> TrainConfig:
    return TrainConfig(
        lr=args.lr,
        epochs=args.epochs,
        batch=args.batch,
        masking=masking,
        eps=args.eps,
        seed=args.seed,
        patch_side=args.patch_side,
        d_hidden=args.d_hidden,
    )


def load_images(paths) -> list[Image]:
    return [netpbm.read_pnm(p) for p in paths]


def _dataset(args) -> list[Image]:
    if args.images:
        return load_images(args.images)
    if args.synthetic > 0:
        images, _ = planted_object_images(args.synthetic, seed=args.seed, patch_side=args.patch_side)
        return images
    raise ConfigError("no input: pass image files or --synthetic N")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def grid_image(values, grid) -> Image:
    """A (rows, cols) grayscale image from per-token values in [0, 1]."""
    return Image(np.clip(np.asarray(values, dtype=np.float64), 0, 1).reshape(grid))


def darken_masked(image: Image, mask_row, patch_side: int, grid, factor: float = 0.25) -> Image:
    rows, cols = grid
    shade = np.where(np.asarray(mask_row).reshape(rows, cols) == 1, factor, 1.0)
    shade = np.kron(shade, np.ones((patch_side, patch_side)))[:, :, None]
    return Image(image.pixels * shade)


def cmd_salience(args) -> None:
    if not args.images:
        raise ConfigError("salience: no input images given")
    images = load_images(args.images)
    out = _outdir(args)
    for path, image in zip(args.images, images):
        x = patchify([image], args.patch_side)
        scores = token_salience(x).scores[0]
        stem = Path(path).stem
        with open(out / f"{stem}_salience.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample", "token", "score"])
            for j, s in enumerate(scores):
                w.writerow([0, j, repr(float(s))])
        netpbm.write_pnm(out / f"{stem}_salience.pgm", grid_image(scores, x.grid))
        log.info("wrote salience for %s", path)


def cmd_mask(args) -> None:
    if not args.images:
        raise ConfigError("mask: no input images given")
    cfg = masking_config(args)
    images = load_images(args.images)
    x = patchify(images, args.patch_side)
    m, s = generate_mask(x, cfg, make_rng(cfg.seed))
    scores = s.scores if s is not None else token_salience(x).scores
    # target ratio per image; the realized fraction is lower when K rounds up
    if cfg.strategy == "sbam_amr":
        targets = amr_ratio(scores, cfg)
    else:
        targets = np.full(m.shape[0], cfg.base_ratio)
    out = _outdir(args)
    with open(out / "masks.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "token", "masked", "salience", "ratio"])
        for i in range(m.shape[0]):
            for j in range(m.shape[1]):
                w.writerow([i, j, int(m.mask[i, j]), repr(float(scores[i, j])), repr(float(targets[i]))])
    for i, (path, image) in enumerate(zip(args.images, images)):
        overlay = darken_masked(image, m.mask[i], args.patch_side, x.grid)
        ext = "pgm" if image.channels == 1 else "ppm"
        netpbm.write_pnm(out / f"{Path(path).stem}_mask.{ext}", overlay)
        log.info(
            "%s: masked %d/%d tokens (target ratio %.4f)", path, m.mask[i].sum(), m.shape[1], targets[i]
        )


def cmd_train(args) -> None:
    cfg = train_config(args, masking_config(args))
    data = _dataset(args)
    params, curve = train(data, cfg)
    out = _outdir(args)
    with open(out / "loss.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(curve):
            w.writerow([epoch, repr(loss)])
    # one container per block, in TinyMaeParams field order
    write_tensors(out / "params.sbtn", params.arrays())
    if curve:
        log.info("loss %.6f -> %.6f over %d epochs", curve[0], curve[-1], len(curve))


def cmd_sweep(args) -> None:
    ratios = [float(r) for r in args.ratios.split(",") if r.strip()]
    if len(ratios) < 2:
        raise ConfigError(f"--ratios needs at least 2 values, got {args.ratios!r}")
    base = masking_config(args)
    # base_ratio is replaced per sweep ratio
    strategies = [replace(base, strategy=n.strip()) for n in args.strategies.split(",") if n.strip()]
    cfg = train_config(args, base)
    records = sweep(strategies, ratios, _dataset(args), cfg)
    text = format_sweep_csv(sweep_rows(records, args.pimr_reference))
    out = Path(args.out)
    if out.is_dir():
        out = out / "sweep.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    log.info("wrote %s (%s)", out, PERFORMANCE_HEADER.lstrip("# "))


def cmd_gen_synthetic(args) -> None:
    images, objects = planted_object_images(
        args.count,
        seed=args.seed,
        side=args.side,
        patch_side=args.patch_side,
        coverage=args.coverage,
        channels=args.channels,
    )
    out = _outdir(args)
    ext = "pgm" if args.channels == 1 else "ppm"
    width = max(4, len(str(args.count - 1)))
    for i, image in enumerate(images):
        netpbm.write_pnm(out / f"img_{i:0{width}d}.{ext}", image)
    with open(out / "objects.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image", "token", "object"])
        for i, row in enumerate(objects):
            for j, flag in enumerate(row):
                w.writerow([i, j, int(flag)])


COMMANDS = {
    "salience": cmd_salience,
    "mask": cmd_mask,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "gen-synthetic": cmd_gen_synthetic,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args = resolve(args)
        resolved = {k: v for k, v in sorted(vars(args).items()) if k != "verbose"}
        log.info("resolved config: %s", resolved)
        COMMANDS[args.command](args)
    except (SbamError, OSError) as exc:
        print(f"sbam {args.command}: error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
