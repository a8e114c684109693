#!/usr/bin/env python3
"""Searching for a timbre between two targets (takes ~4 minutes, or seconds
if demo 04 already ran).

Fitness becomes d_a + d_b + |d_a - d_b|: the sum pulls the candidate close to
both corpora, the absolute difference pins it midway. The supernet trained on
corpus A supplies the envelopes; corpus B only contributes its embedding
statistics.

Outputs land in demos/output/06/.
"""

from pathlib import Path

from autofm.features import embed, load_audio, segment_corpus
from autofm.fm import nested_fm_patch
from autofm.model import SupernetConfig, TrunkConfig, load_checkpoint
from autofm.pipeline import ProjectConfig, cmd_prepare, cmd_train, load_split, real_stats_for
from autofm.search import (
    FitnessEvaluator,
    SearchConfig,
    SearchContext,
    SearchSpace,
    decode,
    evolve,
)
from autofm.synthdata import write_note_corpus

OUT = Path(__file__).parent / "output" / "06"
OUT.mkdir(parents=True, exist_ok=True)
space = SearchSpace(layer_sizes=(2, 2, 2), ratio_counts=(3, 3, 3))
motif = [440.0 * 2 ** ((m - 69) / 12) for m in (64, 67, 71, 74)]

# corpus A + supernet: reuse demo 04's project when available
project_dir = Path(__file__).parent / "output" / "04" / "project"
if not (project_dir / "checkpoint.npz").exists():
    corpus_dir = OUT / "corpus_a"
    write_note_corpus(corpus_dir, nested_fm_patch(1, 2, 3), [motif * 4] * 4,
                      note_seconds=1.0, jitter_seed=7)
    config = ProjectConfig(
        corpus=[str(corpus_dir)], output_dir=str(OUT / "project_a"), seed=0,
        supernet=SupernetConfig(
            carrier_ratios=3, mod1_ratios=3, mod2_ratios=3,
            trunk=TrunkConfig(context_radius=3, hidden_width=32, depth=2),
            learning_rate=1e-3, batch_size=4, total_steps=3000,
            crop_frames=250, val_every=500, log_every=500, seed=0),
        space=space)
    cmd_prepare(config)
    cmd_train(config)
    project_dir = config.out
else:
    config = ProjectConfig(corpus=[], output_dir=str(project_dir), seed=0, space=space)
    print("reusing demo 04's trained project")

# corpus B: a different generator, only its statistics are needed
corpus_b = OUT / "corpus_b"
if not corpus_b.exists():
    write_note_corpus(corpus_b, nested_fm_patch(1, 3, 2), [motif * 4] * 4, note_seconds=1.0,
                      env_scales={0: (0.9, 1.0), 1: (1.7, 1.3), 2: (1.2, 1.8)}, jitter_seed=9)
stats_b = embed(segment_corpus([load_audio(p) for p in sorted(corpus_b.glob("*.wav"))]))
stats_a = real_stats_for(config, "train")

model, _, _ = load_checkpoint(project_dir / "checkpoint.npz")
val_features = [f for f, _ in load_split(config, "val")]
evaluator = FitnessEvaluator(model, val_features, (stats_a, stats_b), mode="interpolation")
ranked = evolve(SearchConfig(population=30, max_iterations=20, seed=0, active_count=3),
                SearchContext(space, evaluator))

print("\nclosest-to-both configurations (score = d_a + d_b + |d_a - d_b|):")
for i, record in enumerate(ranked[:5], start=1):
    topo = decode(record.individual, space)
    print(f"  {i}. score {record.score:9.2f}  d_a {record.d_v:8.2f}  d_b {record.d_a:8.2f}  "
          f"ratios {tuple(o.ratio.steps for o in topo.oscillators)}")
best = ranked[0]
print(f"\nwinner sits {best.d_v:.1f} from corpus A and {best.d_a:.1f} from corpus B")
