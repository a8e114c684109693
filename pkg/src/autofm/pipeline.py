"""End-to-end driver: dataset preparation, supernet training, algorithm
search, evaluation, rendering, morph edits, and store export for the HTTP
service. Commands are deterministic given (config, seed) and idempotent with
respect to their output directory."""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import features as ft
from . import fileio
from .errors import ConfigError, DataError, EmptyCorpus, IllegalEdit
from .fm import (
    FrequencyRatio,
    OscillatorSpec,
    PatchTopology,
    Performance,
    Waveform,
    render,
    validate_topology,
)
from .model import (
    SupernetConfig,
    SupernetModel,
    infer_performance,
    load_checkpoint,
    save_checkpoint,
    train_supernet,
)
from .search import (
    FitnessEvaluator,
    SearchConfig,
    SearchContext,
    SearchSpace,
    decode,
    evolve,
)

MANIFEST_VERSION = 1
DEFAULT_SPLIT = (0.75, 0.125, 0.125)


@dataclass
class ProjectConfig:
    corpus: list
    output_dir: str
    seed: int = 0
    split: tuple = DEFAULT_SPLIT
    segment_seconds: float = ft.SEGMENT_SECONDS
    silence_db_floor: float = ft.SILENCE_DB_FLOOR
    supernet: SupernetConfig = field(default_factory=SupernetConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    space: SearchSpace = field(default_factory=lambda: SearchSpace((2, 2, 2), (3, 3, 3)))

    @property
    def out(self) -> Path:
        return Path(self.output_dir)


def load_project_config(path, seed=None, output_dir=None) -> ProjectConfig:
    """Parse and validate the JSON project configuration."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        supernet = SupernetConfig.from_json(json.dumps(raw.get("supernet", {}))) \
            if "supernet" in raw and "trunk" in raw.get("supernet", {}) else SupernetConfig(
                **{k: v for k, v in raw.get("supernet", {}).items() if k != "trunk"})
        search_raw = dict(raw.get("search", {}))
        space = SearchSpace(
            layer_sizes=tuple(search_raw.pop("layer_sizes", (2, 2, 2))),
            ratio_counts=tuple(search_raw.pop("ratio_counts", (3, 3, 3))),
            granularity=search_raw.pop("granularity", supernet.granularity),
        )
        search = SearchConfig(**search_raw)
        config = ProjectConfig(
            corpus=list(raw["corpus"]),
            output_dir=str(output_dir or raw["output_dir"]),
            seed=int(seed if seed is not None else raw.get("seed", 0)),
            split=tuple(raw.get("split", DEFAULT_SPLIT)),
            segment_seconds=float(raw.get("segment_seconds", ft.SEGMENT_SECONDS)),
            silence_db_floor=float(raw.get("silence_db_floor", ft.SILENCE_DB_FLOOR)),
            supernet=supernet,
            search=search,
            space=space,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad config {path}: {exc}") from exc
    validate_project_config(config)
    return config


def validate_project_config(config: ProjectConfig):
    if abs(sum(config.split) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios {config.split} do not sum to 1")
    if len(config.split) != 3:
        raise ConfigError("split needs exactly (train, val, test) ratios")
    for path in config.corpus:
        if not Path(path).exists():
            raise ConfigError(f"corpus path {path} does not exist")


def _corpus_files(config: ProjectConfig) -> list:
    files = []
    for entry in config.corpus:
        p = Path(entry)
        if p.is_dir():
            files.extend(sorted(p.glob("*.wav")))
        else:
            files.append(p)
    return files


def split_counts(n: int, split) -> tuple:
    """(train, val, test) sizes; train takes the rounding remainder."""
    n_val = int(np.floor(n * split[1]))
    n_test = int(np.floor(n * split[2]))
    return n - n_val - n_test, n_val, n_test


# ---------------------------------------------------------------------------
# prepare
# ---------------------------------------------------------------------------

def cmd_prepare(config: ProjectConfig) -> dict:
    """Segment the corpus, extract and cache features, write the split manifest."""
    out = config.out
    feat_dir = out / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)

    segments = []
    for path in _corpus_files(config):
        wave = ft.load_audio(path)
        for chunk in ft.segment_corpus([wave], config.segment_seconds, config.silence_db_floor):
            segments.append((fileio.content_hash(chunk), chunk, str(path)))
    if not segments:
        raise EmptyCorpus("no non-silent segments in the corpus")

    cache_hits = 0
    entries = {}
    for seg_hash, chunk, source in segments:
        record = feat_dir / f"{seg_hash}.npz"
        if record.exists():
            cache_hits += 1
            feats, _ = fileio.load_features(record)
        else:
            feats = ft.extract_features(chunk)
            fileio.save_features(record, feats, chunk)
        voiced_f0 = feats.f0[feats.voiced]
        entries[seg_hash] = {
            "hash": seg_hash,
            "source": source,
            "frames": int(feats.n_frames),
            "f0_median": float(np.median(voiced_f0)) if voiced_f0.size else 0.0,
        }

    ordered = sorted(entries)       # content-hash order, then seeded shuffle
    rng = np.random.default_rng(config.seed)
    permuted = [ordered[i] for i in rng.permutation(len(ordered))]
    n_train, n_val, n_test = split_counts(len(permuted), config.split)
    for i, seg_hash in enumerate(permuted):
        entries[seg_hash]["split"] = ("train" if i < n_train
                                      else "val" if i < n_train + n_val else "test")

    manifest = {
        "version": MANIFEST_VERSION,
        "seed": config.seed,
        "split_ratios": list(config.split),
        "counts": {"train": n_train, "val": n_val, "test": n_test},
        "segments": [entries[h] for h in ordered],
        "settings": {
            "segment_seconds": config.segment_seconds,
            "silence_db_floor": config.silence_db_floor,
            "frame_size": ft.FRAME_SIZE,
            "hop_size": ft.HOP_SIZE,
            "sample_rate": ft.SAMPLE_RATE,
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return {**manifest, "cache_hits": cache_hits}   # hit count is run telemetry, not manifest content


def load_manifest(config: ProjectConfig) -> dict:
    path = config.out / "manifest.json"
    if not path.exists():
        raise DataError(f"no manifest at {path}; run prepare first")
    return json.loads(path.read_text())


def load_split(config: ProjectConfig, split: str, manifest=None) -> list:
    """(FrameFeatures, audio) pairs of one split, in manifest order."""
    manifest = manifest or load_manifest(config)
    items = []
    for entry in manifest["segments"]:
        if entry["split"] == split:
            items.append(fileio.load_features(config.out / "features" / f"{entry['hash']}.npz"))
    return items


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(config: ProjectConfig, resume: bool = False):
    """Train the supernet on the train split; returns (model, checkpoint path)."""
    manifest = load_manifest(config)
    train_items = load_split(config, "train", manifest)
    val_items = load_split(config, "val", manifest)
    ckpt = config.out / "checkpoint.npz"
    state = None
    if resume and ckpt.exists():
        _, saved_config, state = load_checkpoint(ckpt)
        if saved_config.to_json() != config.supernet.to_json():
            raise ConfigError("checkpoint config differs from project config; cannot resume")
    log_path = config.out / "train_log.jsonl"
    mode = "a" if state is not None else "w"
    with open(log_path, mode) as log_file:
        def log(entry):
            log_file.write(json.dumps(entry, sort_keys=True) + "\n")

        model, state = train_supernet(train_items, config.supernet, val_items, state=state, log=log)
    save_checkpoint(ckpt, config.supernet, state)
    return model, ckpt


# ---------------------------------------------------------------------------
# search
# ---------------------------------------------------------------------------

def real_stats_for(config: ProjectConfig, split: str = "train", manifest=None):
    items = load_split(config, split, manifest)
    if not items:
        raise DataError(f"split {split!r} is empty")
    return ft.embed([audio for _, audio in items])


def cmd_search(config: ProjectConfig, checkpoint=None, search_config: SearchConfig = None,
               tag: str = "", extra_stats=None) -> list:
    """Evolve FM configurations against the trained supernet.

    Writes ranked results plus one decoded patch file per top genome;
    returns the ranked FitnessRecord list. In interpolation mode
    ``extra_stats`` supplies the second target corpus's statistics.
    """
    manifest = load_manifest(config)
    ckpt = Path(checkpoint) if checkpoint else config.out / "checkpoint.npz"
    if not ckpt.exists():
        raise DataError(f"no checkpoint at {ckpt}; run train first")
    model, _, _ = load_checkpoint(ckpt)

    val_items = load_split(config, "val", manifest)
    if not val_items:
        raise DataError("validation split is empty")
    mode = config.search.fitness_mode
    real_stats = real_stats_for(config, "train", manifest)
    if mode == "interpolation":
        if extra_stats is None:
            raise ConfigError("interpolation mode needs a second corpus (extra_stats)")
        real_stats = (real_stats, extra_stats)
    evaluator = FitnessEvaluator(
        model,
        [feats for feats, _ in val_items],
        real_stats,
        mode=mode,
    )
    search_config = search_config or config.search
    suffix = f"_{tag}" if tag else ""
    log_path = config.out / f"search_log{suffix}.jsonl"
    with open(log_path, "w") as log_file:
        def log(entry):
            log_file.write(json.dumps(entry, sort_keys=True) + "\n")

        ranked = evolve(search_config, SearchContext(config.space, evaluator, log=log))

    patches_dir = config.out / "patches"
    patches_dir.mkdir(exist_ok=True)
    results = []
    for rank, record in enumerate(ranked[:20], start=1):
        entry = {
            "rank": rank,
            "score": record.score if np.isfinite(record.score) else None,
            "ratios": list(record.individual.ratios),
            "connections": [c if c is None or isinstance(c, str) else int(c)
                            for c in record.individual.connections],
        }
        if np.isfinite(record.score):
            topo = decode(record.individual, config.space)
            patch_path = patches_dir / f"rank_{rank:04d}{suffix}.json"
            fileio.save_patch(patch_path, topo, ft.SAMPLE_RATE)
            entry["patch"] = patch_path.name
        results.append(entry)
    (config.out / f"search_results{suffix}.json").write_text(
        json.dumps(results, indent=2, sort_keys=True) + "\n")
    return ranked


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(config: ProjectConfig, patch_path, checkpoint=None, split: str = "test") -> dict:
    """Render a split with the patch and shared heads and report the Fréchet
    distance against the train-split statistics. No fine-tuning."""
    from .search import frechet_distance

    manifest = load_manifest(config)
    ckpt = Path(checkpoint) if checkpoint else config.out / "checkpoint.npz"
    model, _, _ = load_checkpoint(ckpt)
    topology, _ = fileio.load_patch(patch_path)
    items = load_split(config, split, manifest)
    if not items:
        raise DataError(f"split {split!r} is empty")
    rendered = []
    for feats, _ in items:
        perf = infer_performance(model, feats, topology)
        rendered.append(render(topology, perf).samples)
    fad = frechet_distance(real_stats_for(config, "train", manifest), ft.embed(rendered))
    report = {
        "patch": str(patch_path),
        "split": split,
        "fad": fad,
        "segments": {name: manifest["counts"][name] for name in ("train", "val", "test")},
    }
    (config.out / f"eval_report_{split}.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


# ---------------------------------------------------------------------------
# render / morph
# ---------------------------------------------------------------------------

def cmd_render(patch_path, performance_path, out_path) -> Waveform:
    topology, _ = fileio.load_patch(patch_path)
    performance = fileio.load_performance(performance_path)
    wave = render(topology, performance)
    fileio.write_wav(out_path, wave)
    return wave


def apply_ratio_edits(topology: PatchTopology, edits) -> PatchTopology:
    """New topology with (oscillator id -> new ratio value) edits applied."""
    by_id = topology.by_id()
    for osc_id, _ in edits:
        if osc_id not in by_id:
            raise IllegalEdit(f"no oscillator {osc_id} in patch")
    updated = []
    edit_map = dict(edits)
    for osc in topology.oscillators:
        if osc.id in edit_map:
            granularity = osc.ratio.granularity
            try:
                ratio = FrequencyRatio.from_value(float(edit_map[osc.id]), granularity)
            except ValueError as exc:
                raise IllegalEdit(str(exc)) from exc
            osc = OscillatorSpec(osc.id, osc.layer, ratio, osc.target)
        updated.append(osc)
    edited = PatchTopology(tuple(updated), topology.layer_sizes)
    violations = validate_topology(edited)
    if violations:
        raise IllegalEdit("; ".join(v.message for v in violations))
    return edited


def spectrogram_png(path, samples, sample_rate, fft_size: int = 2048):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    mags = ft.stft_magnitudes(np.asarray(samples, dtype=np.float64), fft_size)
    log_mag = 20.0 * np.log10(mags.T + 1e-6)
    fig, ax = plt.subplots(figsize=(8, 4))
    extent = (0, len(samples) / sample_rate, 0, sample_rate / 2)
    ax.imshow(log_mag, origin="lower", aspect="auto", cmap="viridis", extent=extent,
              vmin=log_mag.max() - 90, vmax=log_mag.max())
    ax.set_xlabel("time [s]")
    ax.set_ylabel("frequency [Hz]")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def cmd_morph(patch_path, edits, performance_path, out_dir) -> dict:
    """Render a patch before and after ratio edits with identical envelopes.

    Writes before/after WAVs and spectrogram PNGs; returns their paths.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    topology, _ = fileio.load_patch(patch_path)
    performance = fileio.load_performance(performance_path)
    edited = apply_ratio_edits(topology, edits)

    before = render(topology, performance)
    after = render(edited, performance)
    paths = {
        "before_wav": out / "before.wav",
        "after_wav": out / "after.wav",
        "before_png": out / "before.png",
        "after_png": out / "after.png",
    }
    fileio.write_wav(paths["before_wav"], before)
    fileio.write_wav(paths["after_wav"], after)
    spectrogram_png(paths["before_png"], before.samples, before.sample_rate)
    spectrogram_png(paths["after_png"], after.samples, after.sample_rate)
    fileio.save_patch(out / "after_patch.json", edited, performance.sample_rate)
    return {name: str(p) for name, p in paths.items()}


# ---------------------------------------------------------------------------
# export (store for the render service)
# ---------------------------------------------------------------------------

def cmd_export(config: ProjectConfig, patch_paths, checkpoint=None, store_dir=None) -> dict:
    """Copy patches, cached segments, and the checkpoint into a service store."""
    store = Path(store_dir) if store_dir else config.out / "store"
    (store / "patches").mkdir(parents=True, exist_ok=True)
    (store / "segments").mkdir(exist_ok=True)
    (store / "performances").mkdir(exist_ok=True)

    manifest = load_manifest(config)
    for entry in manifest["segments"]:
        src = config.out / "features" / f"{entry['hash']}.npz"
        shutil.copyfile(src, store / "segments" / src.name)
    for patch_path in patch_paths:
        topology, sr = fileio.load_patch(patch_path)   # validates the document
        shutil.copyfile(patch_path, store / "patches" / Path(patch_path).name)
    ckpt = Path(checkpoint) if checkpoint else config.out / "checkpoint.npz"
    if ckpt.exists():
        shutil.copyfile(ckpt, store / "checkpoint.npz")
    listing = {
        "patches": sorted(p.stem for p in (store / "patches").glob("*.json")),
        "segments": sorted(p.stem for p in (store / "segments").glob("*.npz")),
        "checkpoint": ckpt.exists(),
    }
    (store / "store.json").write_text(json.dumps(listing, indent=2, sort_keys=True) + "\n")
    return listing
