"""Layered FM patch topologies and the deterministic audio renderer.

A patch is a DAG of sine oscillators arranged in layers. Layer 0 holds the
carriers, whose outputs sum into the audio signal; layers 1 and 2 hold
modulators that phase-modulate oscillators exactly one layer below. Each
oscillator runs at a rational multiple of the fundamental (its frequency
ratio) and is shaped by a frame-rate envelope: amplitude for carriers,
modulation index for modulators. Feedback edges cannot be expressed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import EmptyInput, EmptyPatch, EnvelopeMissing, LengthMismatch

OUTPUT = "output"           # target sentinel: oscillator feeds the audio output
GRANULARITIES = (1.0, 0.1, 0.01)
CARRIER_MAX_LEVEL = 1.0     # amplitude bound for layer-0 envelopes
MODULATOR_MAX_LEVEL = 2.0   # modulation-index bound for layers >= 1

Target = Union[int, str, None]


class AliasingRiskWarning(UserWarning):
    """An oscillator frequency exceeds a quarter of the sample rate."""


def max_level_for_layer(layer: int) -> float:
    return CARRIER_MAX_LEVEL if layer == 0 else MODULATOR_MAX_LEVEL


@dataclass(frozen=True, order=True)
class FrequencyRatio:
    """Frequency as a positive integer count of granularity steps times f0.

    Keeping the step count integral means ratios never drift: two genomes
    with the same steps are the same ratio, bit for bit.
    """

    steps: int
    granularity: float = 1.0

    def __post_init__(self):
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"granularity must be one of {GRANULARITIES}, got {self.granularity}")
        if self.steps < 1:
            raise ValueError(f"ratio must be positive, got {self.steps} steps")

    @property
    def value(self) -> float:
        return self.steps * self.granularity

    @classmethod
    def from_value(cls, value: float, granularity: float = 1.0) -> "FrequencyRatio":
        steps = int(round(value / granularity))
        if abs(value - steps * granularity) > 1e-9:
            raise ValueError(f"{value} is not a multiple of granularity {granularity}")
        return cls(steps, granularity)


@dataclass(frozen=True)
class OscillatorSpec:
    id: int
    layer: int
    ratio: FrequencyRatio
    target: Target

    @property
    def max_level(self) -> float:
        return max_level_for_layer(self.layer)


@dataclass(frozen=True)
class PatchTopology:
    """Ordered oscillators plus the per-layer candidate counts of the space
    they were drawn from."""

    oscillators: tuple
    layer_sizes: tuple

    def __post_init__(self):
        object.__setattr__(self, "oscillators", tuple(self.oscillators))
        object.__setattr__(self, "layer_sizes", tuple(self.layer_sizes))

    def by_id(self) -> dict:
        return {osc.id: osc for osc in self.oscillators}

    def modulators_of(self, osc_id: int) -> list:
        return [o for o in self.oscillators if o.target == osc_id]

    def output_carriers(self) -> list:
        return [o for o in self.oscillators if o.layer == 0 and o.target == OUTPUT]


@dataclass
class Performance:
    """Frame-rate control data driving a render.

    All sequences share one length; ``envelopes`` maps oscillator id to a
    non-negative frame sequence bounded by that oscillator's max level.
    """

    f0: np.ndarray
    loudness: np.ndarray
    envelopes: dict
    hop_size: int
    sample_rate: int
    voiced: Optional[np.ndarray] = None

    @property
    def n_frames(self) -> int:
        return len(self.f0)


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class Violation:
    oscillator_id: Optional[int]
    rule: str
    message: str


# ---------------------------------------------------------------------------
# Topology validation and pruning
# ---------------------------------------------------------------------------

def validate_topology(topology: PatchTopology) -> list:
    """Check the layer rules; an empty list means the topology is valid.

    Rule 1: an oscillator may only modulate the layer directly below it
    (carriers may not modulate anything). Rule 2: only carriers may feed the
    output. Structural checks (duplicate ids, dangling targets, layer range,
    no carrier reaching the output) are reported with their own rule names.
    """
    violations = []
    n_layers = len(topology.layer_sizes)
    seen = set()
    ids = {o.id for o in topology.oscillators}

    for osc in topology.oscillators:
        if osc.id in seen:
            violations.append(Violation(osc.id, "duplicate-id", f"oscillator id {osc.id} appears twice"))
        seen.add(osc.id)
        if not (0 <= osc.layer < n_layers):
            violations.append(Violation(osc.id, "bad-layer", f"layer {osc.layer} outside 0..{n_layers - 1}"))
            continue
        if osc.target is None or osc.target == OUTPUT:
            if osc.target == OUTPUT and osc.layer != 0:
                violations.append(Violation(
                    osc.id, "rule-2", f"oscillator {osc.id} in layer {osc.layer} targets the output; only carriers may"))
            continue
        # target is an oscillator id
        if osc.target not in ids:
            violations.append(Violation(osc.id, "unknown-target", f"oscillator {osc.id} targets missing id {osc.target}"))
            continue
        target = topology.by_id()[osc.target]
        if target.layer != osc.layer - 1:
            violations.append(Violation(
                osc.id, "rule-1",
                f"oscillator {osc.id} (layer {osc.layer}) targets layer {target.layer}; only the layer below is allowed"))

    if not any(o.layer == 0 and o.target == OUTPUT for o in topology.oscillators):
        violations.append(Violation(None, "no-output", "no carrier targets the output"))
    return violations


def _reachable_ids(topology: PatchTopology) -> set:
    """Ids of oscillators with a directed path to the output."""
    reach = set()
    for osc in sorted(topology.oscillators, key=lambda o: o.layer):
        if osc.layer == 0:
            if osc.target == OUTPUT:
                reach.add(osc.id)
        elif isinstance(osc.target, int) and osc.target in reach:
            reach.add(osc.id)
    return reach


def prune_disconnected(topology: PatchTopology) -> PatchTopology:
    """Drop every oscillator without a path to the output.

    Idempotent; raises EmptyPatch when nothing reaches the output.
    """
    reach = _reachable_ids(topology)
    if not reach:
        raise EmptyPatch("no oscillator reaches the output")
    kept = tuple(o for o in topology.oscillators if o.id in reach)
    return PatchTopology(kept, topology.layer_sizes)


def structural_signature(topology: PatchTopology):
    """Order-independent fingerprint of the audible part of a topology.

    Two patches with equal signatures render identical audio whenever
    envelopes are shared by (layer, ratio), because the signature is the
    multiset of carrier modulation trees. Unreachable oscillators are
    ignored; an empty signature means nothing reaches the output.
    """
    reach = _reachable_ids(topology)

    def subtree(osc):
        children = sorted(subtree(m) for m in topology.modulators_of(osc.id) if m.id in reach)
        return (osc.ratio.steps, tuple(children))

    carriers = [o for o in topology.oscillators if o.id in reach and o.layer == 0 and o.target == OUTPUT]
    return tuple(sorted(subtree(c) for c in carriers))


# ---------------------------------------------------------------------------
# Envelope upsampling
# ---------------------------------------------------------------------------

def envelope_interp_indices(n_frames: int, hop_size: int):
    """Index/weight arrays for linear interpolation between frame centers.

    Frames are extracted centered, so frame f's center falls exactly on
    sample f*hop_size; every frame value is therefore attained exactly at
    its center sample, and samples past the last center hold its value.
    Returns (i0, i1, w) with output[n] = frames[i0[n]]*(1-w[n]) + frames[i1[n]]*w[n]
    and output length n_frames*hop_size. Shared by the renderer and by the
    training code's adjoint so forward and backward stay exactly consistent.
    """
    pos = np.arange(n_frames * hop_size, dtype=np.float64)
    t = pos / hop_size
    i0 = np.minimum(t.astype(np.int64), n_frames - 1)
    w = t - i0
    above = i0 >= n_frames - 1
    i1 = np.minimum(i0 + 1, n_frames - 1)
    w[above] = 0.0
    return i0, i1, w


def upsample_envelope(frames, hop_size: int) -> np.ndarray:
    """Linearly interpolate a frame sequence to one value per sample."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.size == 0:
        raise EmptyInput("cannot upsample an empty frame sequence")
    if hop_size < 1:
        raise ValueError(f"hop_size must be >= 1, got {hop_size}")
    i0, i1, w = envelope_interp_indices(len(frames), hop_size)
    return frames[i0] * (1.0 - w) + frames[i1] * w


def fill_unvoiced(f0: np.ndarray, voiced: Optional[np.ndarray]) -> np.ndarray:
    """Replace unvoiced-frame f0 values by interpolating the voiced ones."""
    f0 = np.asarray(f0, dtype=np.float64)
    if voiced is None:
        return f0
    voiced = np.asarray(voiced, dtype=bool)
    if voiced.all() or not voiced.any():
        return f0
    idx = np.arange(len(f0))
    return np.interp(idx, idx[voiced], f0[voiced])


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def render(topology: PatchTopology, performance: Performance) -> Waveform:
    """Synthesize audio from a valid, pruned topology.

    Each oscillator accumulates instantaneous phase from the (upsampled) f0
    track, so pitch glides stay continuous:

        x_i[n] = a_i[n] * sin(ratio_i * phi[n] + sum of modulator outputs)
        phi[n] = 2*pi * cumsum(f0_up)[n] / sample_rate

    The output is the sum of the carriers wired to the output. Identical
    inputs give bit-identical samples.
    """
    frames = performance.n_frames
    if len(performance.loudness) != frames:
        raise LengthMismatch("f0 and loudness frame counts differ")
    for osc_id, env in performance.envelopes.items():
        if len(env) != frames:
            raise LengthMismatch(f"envelope for oscillator {osc_id} has {len(env)} frames, expected {frames}")

    f0 = fill_unvoiced(performance.f0, performance.voiced)
    sr = performance.sample_rate
    hop = performance.hop_size
    f0_up = upsample_envelope(f0, hop)
    phase = 2.0 * np.pi * np.cumsum(f0_up) / sr

    f0_max = f0.max() if frames else 0.0
    for osc in topology.oscillators:
        if osc.ratio.value * f0_max > sr / 4:
            warnings.warn(
                f"oscillator {osc.id} reaches {osc.ratio.value * f0_max:.0f} Hz "
                f"(> sample_rate/4 = {sr / 4:.0f} Hz); expect audible aliasing",
                AliasingRiskWarning,
                stacklevel=2,
            )

    signals = {}
    for osc in sorted(topology.oscillators, key=lambda o: -o.layer):
        env = performance.envelopes.get(osc.id)
        if env is None:
            raise EnvelopeMissing(osc.id)
        amp = upsample_envelope(env, hop)
        mod = np.zeros_like(phase)
        for m in topology.modulators_of(osc.id):
            mod += signals[m.id]
        signals[osc.id] = amp * np.sin(osc.ratio.value * phase + mod)

    out = np.zeros_like(phase)
    for carrier in topology.output_carriers():
        out += signals[carrier.id]
    return Waveform(out, sr)


def check_performance(performance: Performance, topology: PatchTopology) -> list:
    """Report envelope problems (missing, wrong length, out of bounds)."""
    problems = []
    frames = performance.n_frames
    for osc in topology.oscillators:
        env = performance.envelopes.get(osc.id)
        if env is None:
            problems.append(f"oscillator {osc.id}: envelope missing")
            continue
        env = np.asarray(env)
        if len(env) != frames:
            problems.append(f"oscillator {osc.id}: envelope length {len(env)} != {frames}")
        if env.size and (env.min() < 0 or env.max() > osc.max_level):
            problems.append(
                f"oscillator {osc.id}: envelope outside [0, {osc.max_level}] "
                f"(min {env.min():.3g}, max {env.max():.3g})")
    return problems


# ---------------------------------------------------------------------------
# Classic algorithm builders (the four textbook FM topologies)
# ---------------------------------------------------------------------------

def single_fm_patch(carrier_ratio=1, modulator_ratio=1, granularity=1.0) -> PatchTopology:
    """One carrier modulated by one oscillator."""
    g = granularity
    return PatchTopology((
        OscillatorSpec(0, 0, FrequencyRatio(carrier_ratio, g), OUTPUT),
        OscillatorSpec(1, 1, FrequencyRatio(modulator_ratio, g), 0),
    ), (1, 1))


def nested_fm_patch(carrier_ratio=1, mod1_ratio=1, mod2_ratio=1, granularity=1.0) -> PatchTopology:
    """A three-deep chain: modulator of a modulator of the carrier."""
    g = granularity
    return PatchTopology((
        OscillatorSpec(0, 0, FrequencyRatio(carrier_ratio, g), OUTPUT),
        OscillatorSpec(1, 1, FrequencyRatio(mod1_ratio, g), 0),
        OscillatorSpec(2, 2, FrequencyRatio(mod2_ratio, g), 1),
    ), (1, 1, 1))


def double_fm_patch(carrier_ratio=1, mod1_ratio=1, mod2_ratio=2, granularity=1.0) -> PatchTopology:
    """One carrier with two parallel modulators."""
    g = granularity
    return PatchTopology((
        OscillatorSpec(0, 0, FrequencyRatio(carrier_ratio, g), OUTPUT),
        OscillatorSpec(1, 1, FrequencyRatio(mod1_ratio, g), 0),
        OscillatorSpec(2, 1, FrequencyRatio(mod2_ratio, g), 0),
    ), (1, 2))


def formant_fm_patch(carrier1_ratio=1, carrier2_ratio=2, modulator_ratio=1, granularity=1.0) -> PatchTopology:
    """Two carriers driven by one modulator signal.

    Expressed with two same-ratio modulators, one per carrier: envelope
    sharing by (layer, ratio) makes their signals identical, so this is the
    exact two-carrier/one-modulator formant configuration.
    """
    g = granularity
    return PatchTopology((
        OscillatorSpec(0, 0, FrequencyRatio(carrier1_ratio, g), OUTPUT),
        OscillatorSpec(1, 0, FrequencyRatio(carrier2_ratio, g), OUTPUT),
        OscillatorSpec(2, 1, FrequencyRatio(modulator_ratio, g), 0),
        OscillatorSpec(3, 1, FrequencyRatio(modulator_ratio, g), 1),
    ), (2, 2))
