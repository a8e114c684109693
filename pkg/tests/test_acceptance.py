"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The desk-scale experiments (recovery, dominance, evolve-vs-brute-force) share
two synthetic corpora and their trained supernets via module-scoped fixtures;
every tolerance and budget is asserted exactly as stated.
"""

import io
import json
import time

import numpy as np
import pytest
from scipy.io import wavfile
from scipy.special import jv

from autofm import model as model_mod
from autofm import fileio
from autofm.features import EmbeddingStats, SAMPLE_RATE, n_frames_for
from autofm.fm import (
    OUTPUT,
    FrequencyRatio,
    OscillatorSpec,
    PatchTopology,
    Performance,
    nested_fm_patch,
    render,
    single_fm_patch,
)
from autofm.model import (
    SupernetConfig,
    SupernetModel,
    TrunkConfig,
    infer_performance,
    load_checkpoint,
    loss_and_gradients,
)
from autofm.pipeline import (
    ProjectConfig,
    cmd_morph,
    cmd_prepare,
    cmd_search,
    cmd_train,
    split_counts,
)
from autofm.search import (
    FitnessEvaluator,
    SearchConfig,
    SearchContext,
    SearchSpace,
    canonicalize,
    encode,
    enumerate_canonical_individuals,
    evolve,
    frechet_distance,
    interpolation_score,
)
from autofm.synthdata import write_note_corpus

HOP = 64
SPACE = SearchSpace(layer_sizes=(2, 2, 2), ratio_counts=(3, 3, 3))
MOTIF = [440.0 * 2 ** ((m - 69) / 12) for m in (64, 67, 71, 74)]
GENERATOR_A = nested_fm_patch(1, 2, 3)
GENERATOR_B = nested_fm_patch(1, 3, 2)

FIXED_TOPOLOGIES = {
    "nested": dict(fixed_connections=(OUTPUT, None, 0, None, 2, None)),
    "formant": dict(fixed_connections=(OUTPUT, OUTPUT, 0, 1, None, None), ratio_ties=((2, 3),)),
    "double": dict(fixed_connections=(OUTPUT, None, 0, 0, None, None)),
    "single+": dict(fixed_connections=(OUTPUT, OUTPUT, 1, None, None, None)),
}


def report(name, passed, detail=""):
    print(f"\n[ACCEPTANCE] {name}: {'PASS' if passed else 'FAIL'}  {detail}")
    assert passed, f"{name}: {detail}"


def desk_supernet_config():
    return SupernetConfig(
        carrier_ratios=3, mod1_ratios=3, mod2_ratios=3,
        trunk=TrunkConfig(context_radius=3, hidden_width=32, depth=2),
        learning_rate=1e-3, batch_size=4, total_steps=3000,
        crop_frames=250, val_every=500, log_every=1000, seed=0,
    )


def build_trained_project(root, generator, env_scales, jitter_seed):
    """60 s corpus from a known nested patch, prepared and trained."""
    corpus_dir = root / "corpus"
    write_note_corpus(corpus_dir, generator, [MOTIF * 4] * 4, note_seconds=1.0,
                      env_scales=env_scales, jitter_seed=jitter_seed)
    config = ProjectConfig(corpus=[str(corpus_dir)], output_dir=str(root / "out"),
                           seed=0, supernet=desk_supernet_config(), space=SPACE)
    prepare_elapsed = time.time()
    cmd_prepare(config)
    cmd_train(config)
    return config, time.time() - prepare_elapsed


@pytest.fixture(scope="module")
def project_a(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus_a")
    config, elapsed = build_trained_project(root, GENERATOR_A, None, jitter_seed=100)
    return config, elapsed


@pytest.fixture(scope="module")
def project_b(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus_b")
    config, elapsed = build_trained_project(
        root, GENERATOR_B, {0: (0.9, 1.0), 1: (1.7, 1.3), 2: (1.2, 1.8)}, jitter_seed=300)
    return config, elapsed


def search_once(config, seed, tag, **fixed):
    sc = SearchConfig(population=30, max_iterations=20, seed=seed,
                      active_count=None if fixed else 3, **fixed)
    return cmd_search(config, search_config=sc, tag=tag)


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def test_bessel_spectrum_oracle():
    """Single FM sidebands match |J_n(I)| within 5% for |n| <= 5."""
    started = time.time()
    # modulator ratio 0.5 keeps all |n| <= 5 sidebands at distinct positive
    # frequencies, so each line is directly comparable to |J_n(I)|
    topology = single_fm_patch(carrier_ratio=40, modulator_ratio=5, granularity=0.1)
    frames = 4 * SAMPLE_RATE // HOP
    worst = 0.0
    for index in (0.5, 1.0, 2.0):
        perf = Performance(np.full(frames, 100.0), np.zeros(frames),
                           {0: np.full(frames, 1.0), 1: np.full(frames, index)}, HOP, SAMPLE_RATE)
        wave = render(topology, perf)
        spec = np.abs(np.fft.rfft(wave.samples))
        n = len(wave.samples)
        for order in range(-5, 6):
            freq = 400.0 + order * 50.0
            bin_index = int(round(freq * n / SAMPLE_RATE))
            measured = 2.0 * spec[bin_index] / n
            expected = abs(jv(order, index))
            rel = abs(measured - expected) / expected
            worst = max(worst, rel)
    elapsed = time.time() - started
    report("bessel-spectrum-oracle", worst <= 0.05 and elapsed < 5.0,
           f"worst relative error {worst:.3%}, {elapsed:.1f}s")


def test_gradient_check():
    """Analytic gradients match central finite differences (h=1e-4)."""
    from test_model import gradient_check_instance

    started = time.time()
    cfg = SupernetConfig(carrier_ratios=2, mod1_ratios=2, mod2_ratios=2,
                         trunk=TrunkConfig(context_radius=2, hidden_width=4, depth=2))
    net, batch, ratios = gradient_check_instance(cfg, seconds=1.0, f0_hz=500.0)
    _, grad = loss_and_gradients(net, batch, ratios)
    items = [model_mod.prepare_item(f, a, cfg) for f, a in batch]
    h = 1e-4
    fd = np.zeros(net.n_params)
    for i in range(net.n_params):
        p = net.params.copy()
        p[i] += h
        up, _ = model_mod._batch_loss_grad(net, p, items, ratios, want_grad=False)
        p[i] -= 2 * h
        down, _ = model_mod._batch_loss_grad(net, p, items, ratios, want_grad=False)
        fd[i] = (up - down) / (2 * h)
    ok = np.abs(grad - fd) <= np.maximum(1e-3 * np.abs(fd), 1e-6)
    elapsed = time.time() - started
    report("gradient-check", ok.mean() >= 0.99 and elapsed < 120.0,
           f"{ok.mean():.1%} of {net.n_params} coordinates, {elapsed:.0f}s")


def test_frechet_closed_forms():
    started = time.time()

    def stats(mu, var):
        return EmbeddingStats(np.array([float(mu)]), np.array([[float(var)]]), 10)

    mean_shift = frechet_distance(stats(0, 1), stats(1, 1))
    variance_gap = frechet_distance(stats(0, 1), stats(0, 4))
    rng = np.random.default_rng(0)
    a = EmbeddingStats.from_frames(rng.normal(0, 1, (50, 6)))
    b = EmbeddingStats.from_frames(rng.normal(1, 2, (40, 6)))
    symmetric = abs(frechet_distance(a, b) - frechet_distance(b, a))
    self_zero = frechet_distance(a, a)
    elapsed = time.time() - started
    passed = (abs(mean_shift - 1.0) <= 1e-8 and abs(variance_gap - 1.0) <= 1e-8
              and symmetric <= 1e-8 and self_zero <= 1e-10 and elapsed < 1.0)
    report("frechet-closed-forms", passed,
           f"shift {mean_shift:.12f}, var-gap {variance_gap:.12f}, "
           f"asym {symmetric:.2e}, self {self_zero:.2e}, {elapsed:.2f}s")


def test_known_patch_recovery(project_a):
    """prepare -> train -> search recovers the generator in >= 8/10 seeds."""
    config, setup_elapsed = project_a
    started = time.time()
    expected = encode(GENERATOR_A, SPACE)
    hits = 0
    for seed in range(10):
        ranked = search_once(config, seed, tag=f"recovery{seed}")
        hits += canonicalize(ranked[0].individual, SPACE) == expected
    elapsed = setup_elapsed + (time.time() - started)
    report("known-patch-recovery", hits >= 8 and elapsed < 1800.0,
           f"{hits}/10 seeds recovered exact topology+ratios, {elapsed:.0f}s total")


def test_universal_space_dominance(project_a, project_b):
    """Universal search never loses to any fixed-topology search."""
    config_a, elapsed_a = project_a
    config_b, elapsed_b = project_b
    started = time.time()
    wins = {}
    for label, (config, _) in (("A", project_a), ("B", project_b)):
        wins[label] = 0
        for seed in range(10):
            universal = search_once(config, seed, tag=f"uni{seed}")[0].score
            fixed_scores = []
            for name, kw in FIXED_TOPOLOGIES.items():
                ranked = search_once(config, seed, tag=f"{name}{seed}", **kw)
                fixed_scores.append(ranked[0].score)
            wins[label] += universal <= min(fixed_scores) + 1e-6
    elapsed = elapsed_a + elapsed_b + (time.time() - started)
    passed = wins["A"] >= 8 and wins["B"] >= 8 and elapsed < 3600.0
    report("universal-space-dominance", passed,
           f"corpus A {wins['A']}/10, corpus B {wins['B']}/10, {elapsed:.0f}s total")


def test_evolve_vs_brute_force(project_a):
    """Evolution finds the exhaustive optimum in >= 9/10 seeds."""
    config, _ = project_a
    started = time.time()
    model, _, _ = load_checkpoint(config.out / "checkpoint.npz")
    from autofm.pipeline import load_split, real_stats_for
    val_features = [f for f, _ in load_split(config, "val")]
    real = real_stats_for(config, "train")

    genomes = enumerate_canonical_individuals(SPACE, active_count=3)
    assert len(genomes) <= 5000
    brute_evaluator = FitnessEvaluator(model, val_features, real)
    brute_best = min(brute_evaluator(g, SPACE).score for g in genomes)

    hits = 0
    for seed in range(10):
        evaluator = FitnessEvaluator(model, val_features, real)
        ranked = evolve(SearchConfig(population=30, max_iterations=20, seed=seed, active_count=3),
                        SearchContext(SPACE, evaluator))
        hits += abs(ranked[0].score - brute_best) <= 1e-9
    elapsed = time.time() - started
    report("evolve-vs-brute-force", hits >= 9 and elapsed < 1200.0,
           f"{hits}/10 seeds reached brute-force optimum {brute_best:.4f} "
           f"over {len(genomes)} genomes, {elapsed:.0f}s")


def _upper_formant_centroid(wav_path, f0, lower_cut=5.0):
    """Power-weighted spectral centroid above lower_cut*f0 (power weighting
    keeps the dominant formant dominant against quantization noise)."""
    sr, samples = wavfile.read(wav_path)
    x = samples.astype(np.float64) / 32768.0
    power = np.square(np.abs(np.fft.rfft(x)))
    freqs = np.fft.rfftfreq(len(x), 1.0 / sr)
    mask = freqs >= lower_cut * f0
    return float((freqs[mask] * power[mask]).sum() / power[mask].sum())


def test_morphing_check(tmp_path):
    """Carrier ratio 7 -> 10 moves the upper formant from 7 f0 to 10 f0."""
    started = time.time()
    f0 = 200.0
    # two sub-trees: single FM (carrier 3 <- mod 1) plus a carrier-7 double FM
    # with one extra nested modulator (ratios 7, 1, 2 and 1)
    patch = PatchTopology((
        OscillatorSpec(0, 0, FrequencyRatio(3), OUTPUT),
        OscillatorSpec(1, 1, FrequencyRatio(1), 0),
        OscillatorSpec(2, 0, FrequencyRatio(7), OUTPUT),
        OscillatorSpec(3, 1, FrequencyRatio(1), 2),
        OscillatorSpec(4, 1, FrequencyRatio(2), 2),
        OscillatorSpec(5, 2, FrequencyRatio(1), 3),
    ), (2, 3, 1))
    frames = 2 * SAMPLE_RATE // HOP
    performance = Performance(
        f0=np.full(frames, f0), loudness=np.zeros(frames),
        envelopes={0: np.full(frames, 0.35), 1: np.full(frames, 0.7),
                   2: np.full(frames, 0.9), 3: np.full(frames, 0.5),
                   4: np.full(frames, 0.4), 5: np.full(frames, 0.3)},
        hop_size=HOP, sample_rate=SAMPLE_RATE)
    patch_path = tmp_path / "trumpet.json"
    perf_path = tmp_path / "perf.npz"
    fileio.save_patch(patch_path, patch, SAMPLE_RATE)
    fileio.save_performance(perf_path, performance)

    cmd_morph(patch_path, [(2, 10.0)], perf_path, tmp_path / "morph")
    before = _upper_formant_centroid(tmp_path / "morph" / "before.wav", f0)
    after = _upper_formant_centroid(tmp_path / "morph" / "after.wav", f0)
    elapsed = time.time() - started
    passed = (abs(before - 7 * f0) <= 0.5 * f0 and abs(after - 10 * f0) <= 0.5 * f0
              and elapsed < 10.0)
    report("morphing-check", passed,
           f"centroid {before:.0f} Hz -> {after:.0f} Hz (targets 1400/2000 +- 100), {elapsed:.1f}s")


def test_interpolation_fitness_algebra():
    started = time.time()
    six = interpolation_score(2.0, 3.0)
    doubles = all(interpolation_score(x, x) == pytest.approx(2 * x) for x in (0.0, 1.3, 7.5))
    elapsed = time.time() - started
    report("interpolation-fitness-algebra",
           six == pytest.approx(6.0) and doubles and elapsed < 1.0,
           f"score(2,3)={six}, score(x,x)=2x holds, {elapsed:.3f}s")


def test_data_prep_conformance(project_a):
    config, _ = project_a
    frames_ok = n_frames_for(4 * SAMPLE_RATE, 64) == 1000
    manifest = json.loads((config.out / "manifest.json").read_text())
    manifest_ok = all(entry["frames"] == 1000 for entry in manifest["segments"])
    split_ok = split_counts(8, (0.75, 0.125, 0.125)) == (6, 1, 1)
    report("data-prep-conformance", frames_ok and manifest_ok and split_ok,
           f"4 s @ 16 kHz hop 64 -> 1000 frames ({frames_ok}), 8 segments -> 6/1/1 ({split_ok})")
