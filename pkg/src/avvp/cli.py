"""Command-line entry point: ``avvp {synth,train,evaluate,analyze-attention,analyze-losses}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 internal invariant violation.
``AVVP_DATA_DIR`` supplies the default ``--data`` location.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import os
import sys
from pathlib import Path

from . import data as data_mod
from .analysis import attention_by_class, loss_mirroring
from .errors import ConfigError, ContractError, DataError, InvariantError
from .han import VARIANTS, HanVariant
from .metrics import evaluate
from .model import predict
from .objectives import SmoothingConfig, SmoothingMode
from .train import CURVE_KEYS, LossCurves, TrainConfig, fit, load_checkpoint, save_checkpoint

log = logging.getLogger("avvp")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4
DATA_ENV = "AVVP_DATA_DIR"


def _manifest_path(p: str | None) -> Path:
    if p is None:
        p = os.environ.get(DATA_ENV)
        if p is None:
            raise ConfigError(f"--data not given and ${DATA_ENV} is unset")
    path = Path(p)
    return path / "manifest.json" if path.is_dir() else path


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _fractions(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"--split must be three comma-separated numbers, got {text!r}") from None
    if len(parts) != 3:
        raise ConfigError(f"--split must have three entries, got {text!r}")
    return parts  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = data_mod.SynthConfig(
        num_videos=args.videos,
        T=args.T,
        num_classes=args.classes,
        d_a=args.d_a,
        d_v=args.d_v,
        signal_scale=args.signal_scale,
        noise=args.noise,
        p_audio_only=args.p_audio,
        p_visual_only=args.p_visual,
        p_audio_visual=args.p_av,
        max_events=args.max_events,
        audio_confusion=args.audio_confusion,
        seed=args.seed,
    )
    fractions = _fractions(args.split) if args.split else data_mod.DEFAULT_SPLIT
    ds = data_mod.synth_generate(cfg)
    train, val, test = data_mod.split(ds.records, fractions, seed=args.seed)
    path = data_mod.save_dataset(args.out, ds, {"train": train, "val": val, "test": test})
    print(f"wrote {len(train)}/{len(val)}/{len(test)} train/val/test videos -> {path}")
    return EXIT_OK


def _smoothing_from(args) -> SmoothingConfig:
    return SmoothingConfig(
        mode=SmoothingMode.parse(args.smoothing),
        delta_a=args.delta_a,
        delta_v=args.delta_v,
        K=args.K,
        positive_only=args.positive_only_bce,
    )


def _write_report(report, out: Path, stem: str, title: str) -> tuple[Path, Path]:
    js, txt = out / f"{stem}.json", out / f"{stem}.txt"
    js.write_text(report.to_json())
    txt.write_text(report.to_table(title))
    return js, txt


def cmd_train(args) -> int:
    manifest = _manifest_path(args.data)
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr0=args.lr,
        lr_decay_every=args.lr_decay_every,
        lr_decay_factor=args.lr_decay_factor,
        seed=args.seed,
        variant=HanVariant.parse(args.variant),
        smoothing=_smoothing_from(args),
        model_dim=args.model_dim,
    )
    started = _now()
    ds = data_mod.load(manifest, split=args.train_split)
    if not ds.records:
        raise DataError(f"split {args.train_split!r} is empty", path=str(manifest))
    # training never sees segment annotations, even if the manifest carries them
    train = [r.stripped() for r in ds.records]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(epoch, row, _params):
        log.info("epoch %d/%d  wsl=%.4f a=%.4f v=%.4f", epoch + 1, cfg.epochs,
                 row["l_wsl"], row["l_a"], row["l_v"])

    params, curves = fit(train, cfg, progress)
    ckpt = out / "checkpoint.bin"
    meta = {
        "train_config": cfg.to_dict(),
        "d_a": ds.d_a,
        "d_v": ds.d_v,
        "num_classes": ds.num_classes,
        "class_names": ds.class_names,
    }
    save_checkpoint(ckpt, params, meta)
    curve_path = out / "curves.csv"
    curves.write_csv(curve_path)
    run = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "effective_K": cfg.smoothing.K or ds.num_classes,
        "data": str(manifest),
        "start_time": started,
        "checkpoint": str(ckpt),
        "curves": str(curve_path),
        "losses": {k: getattr(curves, k) for k in CURVE_KEYS},
        "report": None,
    }
    test = data_mod.load(manifest, split=args.eval_split)
    if test.records and all(r.segment_gt is not None for r in test.records):
        preds = predict(params, test.records, cfg.variant)
        report = evaluate({k: p.P for k, p in preds.items()},
                          {r.id: r.segment_gt for r in test.records})
        js, _ = _write_report(report, out, "report", f"{cfg.variant.name} / {cfg.smoothing.mode.value}")
        run["report"] = str(js)
    run["end_time"] = _now()
    (out / "run.json").write_text(json.dumps(run, indent=2, sort_keys=True) + "\n")
    print(f"checkpoint -> {ckpt}\ncurves -> {curve_path}\nmanifest -> {out / 'run.json'}")
    return EXIT_OK


def _load_for_eval(args):
    params, meta = load_checkpoint(args.checkpoint)
    variant = HanVariant.parse(meta["train_config"]["variant"])
    ds = data_mod.load(_manifest_path(args.data), split=args.split)
    if not ds.records:
        raise DataError(f"split {args.split!r} has no videos")
    return params, meta, variant, ds


def cmd_evaluate(args) -> int:
    params, meta, variant, ds = _load_for_eval(args)
    missing = [r.id for r in ds.records if r.segment_gt is None]
    if missing:
        raise DataError(
            f"evaluation needs per-segment annotations; split {args.split!r} lacks them for "
            f"{len(missing)} videos (first: {missing[0]}). Use an annotated split such as val/test."
        )
    preds = predict(params, ds.records, variant)
    report = evaluate({k: p.P for k, p in preds.items()}, {r.id: r.segment_gt for r in ds.records},
                      threshold=args.threshold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    js, txt = _write_report(report, out, "report", f"{variant.name} on {args.split}")
    print(txt.read_text(), end="")
    return EXIT_OK


def cmd_analyze_attention(args) -> int:
    params, meta, variant, ds = _load_for_eval(args)
    preds = predict(params, ds.records, variant)
    audio, visual = attention_by_class(preds)
    names = meta.get("class_names") or ds.class_names
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class", "audio_mass", "visual_mass"])
        for name, a, v in zip(names, audio, visual):
            w.writerow([name, repr(float(a)), repr(float(v))])
    print(f"mean audio mass {audio.mean():.4f}, visual {visual.mean():.4f} -> {out}")
    return EXIT_OK


def cmd_analyze_losses(args) -> int:
    curves = LossCurves.read_csv(args.curves)
    if len(curves) == 0:
        raise DataError("curve file has no epochs", path=str(args.curves))
    res = loss_mirroring(curves)
    ratio = res["ratio"]
    ratio_txt = ratio if isinstance(ratio, str) else f"{ratio:.6g}"
    print(f"MSE(wsl, a) = {res['mse_wsl_a']:.6g}\nMSE(wsl, v) = {res['mse_wsl_v']:.6g}\nratio v/a = {ratio_txt}")
    if args.out:
        Path(args.out).write_text(json.dumps(res, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="avvp", description="Audio-visual video parsing with hybrid attention.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic planted-event dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--videos", type=int, default=280)
    s.add_argument("--T", type=int, default=10)
    s.add_argument("--classes", type=int, default=8)
    s.add_argument("--d-a", type=int, default=16)
    s.add_argument("--d-v", type=int, default=16)
    s.add_argument("--signal-scale", type=float, default=1.0)
    s.add_argument("--noise", type=float, default=0.5)
    s.add_argument("--p-audio", type=float, default=0.35, help="probability of an audio-only event")
    s.add_argument("--p-visual", type=float, default=0.15, help="probability of a visual-only event")
    s.add_argument("--p-av", type=float, default=0.5, help="probability of an audio-visual event")
    s.add_argument("--max-events", type=int, default=3)
    s.add_argument("--audio-confusion", type=float, default=0.0)
    s.add_argument("--split", default=None, help="train,val,test fractions (default 200/40/40 of 280)")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a model and record loss curves")
    t.add_argument("--data", default=None, help=f"manifest or dataset dir (default ${DATA_ENV})")
    t.add_argument("--out", required=True)
    t.add_argument("--variant", default="AcrossVcross", help=f"one of {', '.join(VARIANTS)}")
    t.add_argument("--smoothing", default="LSV", help="one of NoLS, LSA, LSV, LSAV")
    t.add_argument("--delta-a", type=float, default=0.1)
    t.add_argument("--delta-v", type=float, default=0.1)
    t.add_argument("--K", type=int, default=None, help="smoothing denominator (default: number of classes)")
    t.add_argument("--positive-only-bce", action="store_true", help="drop the negative BCE terms")
    t.add_argument("--epochs", type=int, default=40)
    t.add_argument("--batch-size", type=int, default=16)
    t.add_argument("--lr", type=float, default=3e-4)
    t.add_argument("--lr-decay-every", type=int, default=10)
    t.add_argument("--lr-decay-factor", type=float, default=0.1)
    t.add_argument("--model-dim", type=int, default=64)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--train-split", default="train")
    t.add_argument("--eval-split", default="test")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="segment/event F-scores of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", default=None)
    e.add_argument("--split", default="test")
    e.add_argument("--threshold", type=float, default=0.5)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("analyze-attention", help="class-wise audio/visual attention mass")
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--data", default=None)
    a.add_argument("--split", default="test")
    a.add_argument("--out", required=True, help="CSV path")
    a.set_defaults(func=cmd_analyze_attention)

    lo = sub.add_parser("analyze-losses", help="MSE between loss curves")
    lo.add_argument("--curves", required=True)
    lo.add_argument("--out", default=None, help="optional JSON path")
    lo.set_defaults(func=cmd_analyze_losses)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InvariantError, ContractError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
