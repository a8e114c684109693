"""Command line driver.

Verbs: prepare, train, search, eval, render, morph, export, serve.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, DataError, NumericError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="autofm",
        description="Design an FM synthesizer from recordings: prepare features, "
                    "train the envelope supernet, search FM algorithms, audition edits.")
    parser.add_argument("--config", help="project configuration file (JSON)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="override the config output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("prepare", help="segment the corpus, cache features, write the split manifest")

    p_train = sub.add_parser("train", help="train the envelope supernet")
    p_train.add_argument("--resume", action="store_true", help="continue from the existing checkpoint")

    p_search = sub.add_parser("search", help="evolve FM algorithm and ratios")
    p_search.add_argument("--checkpoint", default=None)
    p_search.add_argument("--interpolate-with", default=None, metavar="DIR",
                          help="second prepared project dir for timbre interpolation")
    p_search.add_argument("--fine-tune", action="store_true",
                          help="reserved: fine-tune the winning sub-model after search "
                               "(weights are extracted from the supernet as-is for now)")

    p_eval = sub.add_parser("eval", help="report Fréchet distance of a patch on one split")
    p_eval.add_argument("--patch", required=True)
    p_eval.add_argument("--checkpoint", default=None)
    p_eval.add_argument("--split", default="test", choices=("train", "val", "test"))

    p_render = sub.add_parser("render", help="render a patch with a stored performance")
    p_render.add_argument("--patch", required=True)
    p_render.add_argument("--performance", required=True)
    p_render.add_argument("--wav", required=True, help="output WAV path")

    p_morph = sub.add_parser("morph", help="A/B render a patch before and after ratio edits")
    p_morph.add_argument("--patch", required=True)
    p_morph.add_argument("--performance", required=True)
    p_morph.add_argument("--edit", action="append", default=[], metavar="ID:RATIO",
                         help="oscillator ratio edit, repeatable")
    p_morph.add_argument("--dir", required=True, help="output directory for WAVs and spectrograms")

    p_export = sub.add_parser("export", help="build the render-service store")
    p_export.add_argument("--patch", action="append", default=[], required=True)
    p_export.add_argument("--checkpoint", default=None)
    p_export.add_argument("--store", default=None)

    p_serve = sub.add_parser("serve", help="run the HTTP render service")
    p_serve.add_argument("--store", required=True)
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--host", default="127.0.0.1")
    return parser


def _project(args):
    from .pipeline import load_project_config

    if not args.config:
        raise ConfigError("--config is required for this command")
    return load_project_config(args.config, seed=args.seed, output_dir=args.out)


def _parse_edits(raw_edits):
    edits = []
    for raw in raw_edits:
        try:
            osc_id, ratio = raw.split(":")
            edits.append((int(osc_id), float(ratio)))
        except ValueError as exc:
            raise ConfigError(f"bad --edit {raw!r}, expected ID:RATIO") from exc
    return edits


def run(args) -> int:
    from . import pipeline

    if args.command == "prepare":
        manifest = pipeline.cmd_prepare(_project(args))
        counts = manifest["counts"]
        print(f"prepared {len(manifest['segments'])} segments "
              f"(train {counts['train']} / val {counts['val']} / test {counts['test']}, "
              f"cache hits {manifest['cache_hits']})")
    elif args.command == "train":
        config = _project(args)
        _, ckpt = pipeline.cmd_train(config, resume=args.resume)
        print(f"checkpoint written to {ckpt}")
    elif args.command == "search":
        config = _project(args)
        if args.fine_tune:
            raise ConfigError("--fine-tune is reserved for a future extension; "
                              "search currently extracts sub-model weights directly")
        extra = None
        if args.interpolate_with:
            other = pipeline.ProjectConfig(corpus=[], output_dir=args.interpolate_with,
                                           supernet=config.supernet)
            extra = pipeline.real_stats_for(other, "train")
        ranked = pipeline.cmd_search(config, checkpoint=args.checkpoint, extra_stats=extra)
        best = ranked[0]
        print(f"best score {best.score:.6f}; results in {config.out / 'search_results.json'}")
    elif args.command == "eval":
        report = pipeline.cmd_eval(_project(args), args.patch,
                                   checkpoint=args.checkpoint, split=args.split)
        print(json.dumps(report, indent=2, sort_keys=True))
    elif args.command == "render":
        wave = pipeline.cmd_render(args.patch, args.performance, args.wav)
        print(f"wrote {args.wav} ({wave.duration:.2f} s, peak {abs(wave.samples).max():.3f})")
    elif args.command == "morph":
        paths = pipeline.cmd_morph(args.patch, _parse_edits(args.edit), args.performance, args.dir)
        print(json.dumps(paths, indent=2, sort_keys=True))
    elif args.command == "export":
        config = _project(args)
        listing = pipeline.cmd_export(config, args.patch, checkpoint=args.checkpoint,
                                      store_dir=args.store)
        print(json.dumps(listing, indent=2, sort_keys=True))
    elif args.command == "serve":
        import uvicorn

        from .service import create_app

        store = Path(args.store)
        app = create_app(store, store / "checkpoint.npz" if (store / "checkpoint.npz").exists() else None)
        uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
