#!/usr/bin/env python3
"""Training the envelope supernet (takes about a minute).

One shared trunk reads windowed (pitch, loudness) frames; one bounded head
per (layer, ratio) candidate predicts that oscillator's envelope. Every step
renders a fixed three-layer proxy chain with freshly sampled ratios and
backpropagates the multi-scale spectral loss through the synthesis chain.

Outputs land in demos/output/03/.
"""

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from autofm.features import extract_features
from autofm.fm import nested_fm_patch, render
from autofm.model import SupernetConfig, TrunkConfig, predict_envelopes, train_supernet
from autofm.synthdata import DEFAULT_ENV_SCALES, notes_performance

OUT = Path(__file__).parent / "output" / "03"
OUT.mkdir(parents=True, exist_ok=True)

# --- a small corpus from a known generator patch ----------------------------

generator = nested_fm_patch(1, 2, 3)
motif = [330.0, 392.0, 494.0, 587.0]
items = []
performances = []
for take in range(3):
    perf = notes_performance(generator, motif, note_seconds=1.0, jitter_seed=40 + take)
    audio = render(generator, perf).samples
    items.append((extract_features(audio), audio))
    performances.append(perf)

config = SupernetConfig(
    carrier_ratios=3, mod1_ratios=3, mod2_ratios=3,
    trunk=TrunkConfig(context_radius=3, hidden_width=32, depth=2),
    learning_rate=1e-3, batch_size=2, total_steps=1000,
    crop_frames=250, val_every=200, log_every=200, seed=0,
)

model, state = train_supernet(items[:2], config, val_dataset=items[2:],
                              log=lambda e: print(f"  step {e['step']:4d}  "
                                                  f"train {e['train_loss']:6.2f}  "
                                                  f"val {e['val_loss']}"))

fig, ax = plt.subplots(figsize=(8, 3.5))
ax.plot(np.arange(1, len(state.loss_history) + 1), state.loss_history, lw=0.6)
steps, losses = zip(*state.val_history)
ax.plot(steps, losses, "o-", label="validation")
ax.set_xlabel("step")
ax.set_ylabel("spectral loss")
ax.legend()
fig.tight_layout()
fig.savefig(OUT / "loss_curve.png", dpi=110)

# --- predicted envelopes vs the generator's script --------------------------

feats, _ = items[2]
heads = [(0, 1), (1, 2), (2, 3)]        # the generator's (layer, ratio) pairs
env = predict_envelopes(model, feats, heads)
truth = performances[2].envelopes

fig, axes = plt.subplots(3, 1, figsize=(9, 7), sharex=True)
t = np.arange(feats.n_frames) * feats.hop_size / feats.sample_rate
for ax, (osc_id, head, col) in zip(axes, ((0, "(layer 0, ratio 1)", 0),
                                          (1, "(layer 1, ratio 2)", 1),
                                          (2, "(layer 2, ratio 3)", 2))):
    ax.plot(t, truth[osc_id][: feats.n_frames], label="scripted", lw=1.5)
    ax.plot(t, env[:, col], label="predicted", lw=1.0)
    ax.set_ylabel(head)
axes[0].legend()
axes[2].set_xlabel("time [s]")
fig.tight_layout()
fig.savefig(OUT / "envelopes.png", dpi=110)
print(f"best validation loss {state.best_val:.2f} at step {state.best_step}; figures in {OUT}")

# --- the point of the supernet: the right ratio combo fits best --------------
# The mixed training loss plateaus because most sampled combos cannot match
# the corpus no matter what their envelopes do; rank every combo on the
# held-out phrase and the generator's (1, 2, 3) should win.

from autofm import model as model_internals

item = model_internals.prepare_item(feats, items[2][1], config)
ranking = []
for rc in range(1, 4):
    for r1 in range(1, 4):
        for r2 in range(1, 4):
            loss = model_internals._item_loss_grad(
                model, model.params, item, (rc, r1, r2), None, 1.0, False)
            ranking.append((loss, (rc, r1, r2)))
ranking.sort()
print("\nreconstruction loss per ratio combo (best five of 27):")
for loss, combo in ranking[:5]:
    marker = "  <- generator" if combo == (1, 2, 3) else ""
    print(f"  {combo}: {loss:6.2f}{marker}")
