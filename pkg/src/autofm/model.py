"""The envelope supernet: a shared trunk over windowed (pitch, loudness)
frames with one bounded readout head per (layer, ratio) candidate oscillator.

Training runs the heads through a fixed proxy chain (carrier, modulator,
nested modulator, ratios resampled uniformly every step), renders audio, and
minimizes the multi-scale spectral distance to the recording. Gradients are
reverse-mode, written out by hand: spectral loss -> STFT magnitudes ->
overlap-added frames -> the sin/phase chain -> linear envelope upsampling ->
sigmoid heads -> tanh trunk. Everything is float64 and deterministic given
the seed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from .errors import EmptyDataset, LengthMismatch, NonFiniteLoss, UnknownHead
from .features import MSS_EPS, MSS_FFT_SIZES, FrameFeatures, _hann, stft_hop
from .fm import (
    FrequencyRatio,
    PatchTopology,
    Performance,
    envelope_interp_indices,
    fill_unvoiced,
    max_level_for_layer,
)

CHECKPOINT_VERSION = 1
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrunkConfig:
    context_radius: int = 8
    hidden_width: int = 128
    depth: int = 4


@dataclass
class SupernetConfig:
    carrier_ratios: int = 15
    mod1_ratios: int = 5
    mod2_ratios: int = 5
    granularity: float = 1.0
    trunk: TrunkConfig = field(default_factory=TrunkConfig)
    learning_rate: float = 3e-4
    decay_factor: float = 0.98
    decay_every: int = 10_000
    batch_size: int = 16
    total_steps: int = 1000
    crop_frames: Optional[int] = None   # None trains on full segments
    log_every: int = 100
    val_every: int = 250
    val_proxy_draws: int = 4
    seed: int = 0

    @property
    def head_count(self) -> int:
        return self.carrier_ratios + self.mod1_ratios + self.mod2_ratios

    def heads(self) -> list:
        """(layer, ratio_steps) for every head, in storage order."""
        out = [(0, s) for s in range(1, self.carrier_ratios + 1)]
        out += [(1, s) for s in range(1, self.mod1_ratios + 1)]
        out += [(2, s) for s in range(1, self.mod2_ratios + 1)]
        return out

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SupernetConfig":
        raw = json.loads(text)
        raw["trunk"] = TrunkConfig(**raw["trunk"])
        return cls(**raw)


def learning_rate_at(config: SupernetConfig, step: int) -> float:
    """Staircase decay: multiplied by the factor once per decay interval."""
    return config.learning_rate * config.decay_factor ** (step // config.decay_every)


# ---------------------------------------------------------------------------
# Model container: a flat float64 parameter vector with named views
# ---------------------------------------------------------------------------

class SupernetModel:
    def __init__(self, config: SupernetConfig, params: Optional[np.ndarray] = None):
        self.config = config
        self.in_dim = (2 * config.trunk.context_radius + 1) * 2
        self._layout = {}
        offset = 0
        width = config.trunk.hidden_width
        fan_in = self.in_dim
        for l in range(config.trunk.depth):
            for name, shape in ((f"trunk_w{l}", (fan_in, width)), (f"trunk_b{l}", (width,))):
                size = int(np.prod(shape))
                self._layout[name] = (slice(offset, offset + size), shape)
                offset += size
            fan_in = width
        for name, shape in (("heads_w", (width, config.head_count)), ("heads_b", (config.head_count,))):
            size = int(np.prod(shape))
            self._layout[name] = (slice(offset, offset + size), shape)
            offset += size
        self.n_params = offset
        self.params = np.zeros(offset) if params is None else np.asarray(params, dtype=np.float64)
        if self.params.shape != (offset,):
            raise ValueError(f"expected {offset} parameters, got {self.params.shape}")
        self.head_index = {head: i for i, head in enumerate(config.heads())}
        self.head_bounds = np.array([max_level_for_layer(layer) for layer, _ in config.heads()])

    def view(self, name: str, params: Optional[np.ndarray] = None) -> np.ndarray:
        sl, shape = self._layout[name]
        return (self.params if params is None else params)[sl].reshape(shape)

    def head_column(self, layer: int, ratio_steps: int) -> int:
        try:
            return self.head_index[(layer, ratio_steps)]
        except KeyError:
            raise UnknownHead(layer, ratio_steps) from None

    @classmethod
    def initialize(cls, config: SupernetConfig, rng: np.random.Generator) -> "SupernetModel":
        """Uniform init in [-k, k] with k = 1/sqrt(fan_in), head biases at 0."""
        model = cls(config)
        for l in range(config.trunk.depth):
            w = model.view(f"trunk_w{l}")
            k = 1.0 / np.sqrt(w.shape[0])
            w[:] = rng.uniform(-k, k, size=w.shape)
            model.view(f"trunk_b{l}")[:] = rng.uniform(-k, k, size=w.shape[1])
        hw = model.view("heads_w")
        k = 1.0 / np.sqrt(hw.shape[0])
        hw[:] = rng.uniform(-k, k, size=hw.shape)
        model.view("heads_b")[:] = 0.0
        return model


# ---------------------------------------------------------------------------
# Feature windowing
# ---------------------------------------------------------------------------

def _hz_to_unit(f0: np.ndarray) -> np.ndarray:
    midi = np.where(f0 > 0, 12.0 * np.log2(np.maximum(f0, 1e-6) / 440.0) + 69.0, 0.0)
    return midi / 127.0


def feature_matrix(features: FrameFeatures, context_radius: int) -> np.ndarray:
    """(T, (2R+1)*2) windowed trunk input, edge frames clamped."""
    f0 = fill_unvoiced(features.f0, features.voiced)
    base = np.stack([_hz_to_unit(f0), (np.asarray(features.loudness) + 80.0) / 80.0], axis=1)
    padded = np.pad(base, ((context_radius, context_radius), (0, 0)), mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, 2 * context_radius + 1, axis=0)
    return windows.transpose(0, 2, 1).reshape(base.shape[0], -1)


# ---------------------------------------------------------------------------
# Forward passes
# ---------------------------------------------------------------------------

def _trunk_forward(model: SupernetModel, params: np.ndarray, x: np.ndarray) -> list:
    acts = [x]
    for l in range(model.config.trunk.depth):
        z = acts[-1] @ model.view(f"trunk_w{l}", params) + model.view(f"trunk_b{l}", params)
        acts.append(np.tanh(z))
    return acts


def _heads_forward(model: SupernetModel, params: np.ndarray, hidden: np.ndarray, cols):
    w = model.view("heads_w", params)[:, cols]
    b = model.view("heads_b", params)[cols]
    sig = expit(hidden @ w + b)
    return model.head_bounds[cols] * sig, sig


def predict_envelopes(model: SupernetModel, features: FrameFeatures, heads) -> np.ndarray:
    """(T, len(heads)) envelopes for the requested (layer, ratio_steps) pairs.

    Oscillators sharing a (layer, ratio) share a head, so equal requests get
    identical envelopes; values stay within the head's bound by construction.
    """
    cols = [model.head_column(layer, steps) for layer, steps in heads]
    x = feature_matrix(features, model.config.trunk.context_radius)
    hidden = _trunk_forward(model, model.params, x)[-1]
    env, _ = _heads_forward(model, model.params, hidden, cols)
    return env


def infer_performance(model: SupernetModel, features: FrameFeatures,
                      topology: PatchTopology) -> Performance:
    """Performance whose envelopes come from the supernet's shared heads."""
    heads = []
    for osc in topology.oscillators:
        if abs(osc.ratio.granularity - model.config.granularity) > 1e-12:
            raise UnknownHead(osc.layer, osc.ratio.steps)
        heads.append((osc.layer, osc.ratio.steps))
    env = predict_envelopes(model, features, heads)
    return Performance(
        f0=np.asarray(features.f0, dtype=np.float64),
        loudness=np.asarray(features.loudness, dtype=np.float64),
        envelopes={osc.id: env[:, i] for i, osc in enumerate(topology.oscillators)},
        hop_size=features.hop_size,
        sample_rate=features.sample_rate,
        voiced=features.voiced,
    )


def sample_proxy_ratios(rng: np.random.Generator, config: SupernetConfig):
    """Independent uniform ratio steps for the proxy chain's three layers."""
    r_c = int(rng.integers(1, config.carrier_ratios + 1))
    r_m1 = int(rng.integers(1, config.mod1_ratios + 1))
    r_m2 = int(rng.integers(1, config.mod2_ratios + 1))
    return r_c, r_m1, r_m2


# ---------------------------------------------------------------------------
# Loss and hand-written gradients
# ---------------------------------------------------------------------------

_INTERP_CACHE = {}


def _interp(n_frames: int, hop: int):
    key = (n_frames, hop)
    if key not in _INTERP_CACHE:
        _INTERP_CACHE[key] = envelope_interp_indices(n_frames, hop)
    return _INTERP_CACHE[key]


def _upsample(frames: np.ndarray, hop: int) -> np.ndarray:
    i0, i1, w = _interp(len(frames), hop)
    return frames[i0] * (1.0 - w) + frames[i1] * w


def _upsample_adjoint(d_samples: np.ndarray, n_frames: int, hop: int) -> np.ndarray:
    i0, i1, w = _interp(n_frames, hop)
    return (np.bincount(i0, weights=d_samples * (1.0 - w), minlength=n_frames)
            + np.bincount(i1, weights=d_samples * w, minlength=n_frames))


def _mss_forward_backward(y: np.ndarray, target: np.ndarray, want_grad: bool):
    """Multi-scale spectral loss and (optionally) its gradient w.r.t. y."""
    loss = 0.0
    dy = np.zeros_like(y) if want_grad else None
    for size in MSS_FFT_SIZES:
        if len(y) < size:
            continue
        hop = stft_hop(size)
        n_frames = 1 + (len(y) - size) // hop
        win = _hann(size)
        frames_y = np.lib.stride_tricks.sliding_window_view(y, size)[::hop][:n_frames] * win
        frames_t = np.lib.stride_tricks.sliding_window_view(target, size)[::hop][:n_frames] * win
        spec = np.fft.rfft(frames_y, axis=1)
        mag = np.abs(spec)
        mag_t = np.abs(np.fft.rfft(frames_t, axis=1))
        count = mag.size
        diff = mag - mag_t
        log_diff = np.log(mag + MSS_EPS) - np.log(mag_t + MSS_EPS)
        loss += np.abs(diff).mean() + np.abs(log_diff).mean()
        if not want_grad:
            continue
        dmag = (np.sign(diff) + np.sign(log_diff) / (mag + MSS_EPS)) / count
        safe = np.where(mag > 0, mag, 1.0)
        dspec = dmag * spec / safe
        # adjoint of rfft on real frames: halve the shared interior bins
        dspec[:, 1:-1] *= 0.5
        dframes = np.fft.irfft(dspec, n=size, axis=1) * size * win
        # overlap-add the frame gradients back onto y (size = 4*hop)
        segments = dframes.reshape(n_frames, size // hop, hop)
        acc = np.zeros((n_frames + size // hop, hop))
        for m in range(size // hop):
            acc[m : m + n_frames] += segments[:, m]
        covered = (n_frames - 1) * hop + size
        dy[:covered] += acc.reshape(-1)[:covered]
    return loss, dy


@dataclass
class _PreparedItem:
    x: np.ndarray           # (T, in_dim) trunk input
    f0_frames: np.ndarray   # (T,) filled f0 in Hz
    audio: np.ndarray       # (T*hop,) target samples
    hop: int
    sample_rate: int

    @property
    def n_frames(self) -> int:
        return len(self.f0_frames)

    def crop(self, start: int, length: int) -> "_PreparedItem":
        return _PreparedItem(
            x=self.x[start : start + length],
            f0_frames=self.f0_frames[start : start + length],
            audio=self.audio[start * self.hop : (start + length) * self.hop],
            hop=self.hop,
            sample_rate=self.sample_rate,
        )


def prepare_item(features: FrameFeatures, audio: np.ndarray, config: SupernetConfig) -> _PreparedItem:
    audio = np.asarray(audio, dtype=np.float64)
    frames = min(features.n_frames, len(audio) // features.hop_size)
    if frames < 1:
        raise LengthMismatch("audio shorter than one frame hop")
    return _PreparedItem(
        x=feature_matrix(features, config.trunk.context_radius)[:frames],
        f0_frames=fill_unvoiced(features.f0, features.voiced)[:frames],
        audio=audio[: frames * features.hop_size],
        hop=features.hop_size,
        sample_rate=features.sample_rate,
    )


def _item_loss_grad(model, params, item: _PreparedItem, ratio_steps, grad, scale, want_grad):
    """Loss of one item through the proxy chain; accumulates param gradients
    scaled by `scale` into `grad` when requested."""
    cfg = model.config
    cols = [model.head_column(layer, steps) for layer, steps in
            zip((0, 1, 2), ratio_steps)]
    acts = _trunk_forward(model, params, item.x)
    env, sig = _heads_forward(model, params, acts[-1], cols)

    hop = item.hop
    n_frames = item.n_frames
    f0_up = _upsample(item.f0_frames, hop)
    phase = 2.0 * np.pi * np.cumsum(f0_up) / item.sample_rate
    g = cfg.granularity
    phi0 = (ratio_steps[0] * g) * phase
    phi1 = (ratio_steps[1] * g) * phase
    phi2 = (ratio_steps[2] * g) * phase

    amp = _upsample(env[:, 0], hop)
    idx1 = _upsample(env[:, 1], hop)
    idx2 = _upsample(env[:, 2], hop)
    sin2 = np.sin(phi2)
    x2 = idx2 * sin2
    arg1 = phi1 + x2
    sin1 = np.sin(arg1)
    x1 = idx1 * sin1
    arg0 = phi0 + x1
    sin0 = np.sin(arg0)
    y = amp * sin0

    loss, dy = _mss_forward_backward(y, item.audio, want_grad)
    if not want_grad:
        return loss

    d_amp = dy * sin0
    dx1 = dy * amp * np.cos(arg0)
    d_idx1 = dx1 * sin1
    dx2 = dx1 * idx1 * np.cos(arg1)
    d_idx2 = dx2 * sin2

    d_env = np.stack([
        _upsample_adjoint(d_amp, n_frames, hop),
        _upsample_adjoint(d_idx1, n_frames, hop),
        _upsample_adjoint(d_idx2, n_frames, hop),
    ], axis=1)

    dz = d_env * model.head_bounds[cols] * sig * (1.0 - sig)
    model.view("heads_w", grad)[:, cols] += scale * (acts[-1].T @ dz)
    model.view("heads_b", grad)[cols] += scale * dz.sum(axis=0)
    dh = dz @ model.view("heads_w", params)[:, cols].T
    for l in reversed(range(cfg.trunk.depth)):
        dzl = dh * (1.0 - np.square(acts[l + 1]))
        model.view(f"trunk_w{l}", grad)[:] += scale * (acts[l].T @ dzl)
        model.view(f"trunk_b{l}", grad)[:] += scale * dzl.sum(axis=0)
        dh = dzl @ model.view(f"trunk_w{l}", params).T
    return loss


def _batch_loss_grad(model, params, items, ratio_steps, want_grad=True):
    grad = np.zeros_like(params) if want_grad else None
    total = 0.0
    scale = 1.0 / len(items)
    for item in items:
        total += scale * _item_loss_grad(model, params, item, ratio_steps, grad, scale, want_grad)
    if not np.isfinite(total):
        raise NonFiniteLoss(f"batch loss is {total}")
    return total, grad


def loss_and_gradients(model: SupernetModel, batch, proxy_ratios):
    """Mean reconstruction loss over a batch and its parameter gradient.

    Batch items are (FrameFeatures, target samples) pairs; the render uses
    the fixed proxy chain with the given (carrier, mod1, mod2) ratio steps.
    """
    if not batch:
        raise EmptyDataset("empty batch")
    items = [prepare_item(features, audio, model.config) for features, audio in batch]
    return _batch_loss_grad(model, model.params, items, tuple(proxy_ratios))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainState:
    params: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray
    step: int
    rng_state: dict
    best_val: float
    best_params: np.ndarray
    best_step: int
    loss_history: list
    val_history: list       # (step, val_loss) pairs


def _adam_update(params, grad, state: TrainState, lr: float):
    state.adam_m = ADAM_BETA1 * state.adam_m + (1.0 - ADAM_BETA1) * grad
    state.adam_v = ADAM_BETA2 * state.adam_v + (1.0 - ADAM_BETA2) * np.square(grad)
    m_hat = state.adam_m / (1.0 - ADAM_BETA1 ** state.step)
    v_hat = state.adam_v / (1.0 - ADAM_BETA2 ** state.step)
    params -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def train_supernet(dataset, config: SupernetConfig, val_dataset=(), state: Optional[TrainState] = None,
                   log=None):
    """Train (or keep training) the supernet; returns (best model, state).

    ``dataset``/``val_dataset`` hold (FrameFeatures, audio) pairs. Fresh
    proxy ratios are drawn each step; validation always uses the same fixed
    ratio draws so checkpoints are comparable across steps. The returned
    model carries the best-validation parameters (final parameters when
    there is no validation split).
    """
    if not dataset:
        raise EmptyDataset("no training segments")
    model = SupernetModel(config)
    items = [prepare_item(f, a, config) for f, a in dataset]
    val_items = [prepare_item(f, a, config) for f, a in val_dataset]
    val_rng = np.random.default_rng(np.random.SeedSequence((config.seed, 0x5EED)))
    val_ratios = [sample_proxy_ratios(val_rng, config) for _ in range(config.val_proxy_draws)]

    if state is None:
        rng = np.random.default_rng(config.seed)
        model = SupernetModel.initialize(config, rng)
        state = TrainState(
            params=model.params,
            adam_m=np.zeros(model.n_params),
            adam_v=np.zeros(model.n_params),
            step=0,
            rng_state=rng.bit_generator.state,
            best_val=np.inf,
            best_params=model.params.copy(),
            best_step=0,
            loss_history=[],
            val_history=[],
        )
    else:
        model.params = state.params
        rng = np.random.default_rng(config.seed)
        rng.bit_generator.state = state.rng_state

    def validate(step):
        if not val_items:
            return None
        total = 0.0
        for ratios in val_ratios:
            loss, _ = _batch_loss_grad(model, state.params, val_items, ratios, want_grad=False)
            total += loss
        val_loss = total / len(val_ratios)
        state.val_history.append((step, val_loss))
        if val_loss < state.best_val:
            state.best_val = val_loss
            state.best_params = state.params.copy()
            state.best_step = step
        return val_loss

    crop = config.crop_frames
    while state.step < config.total_steps:
        state.step += 1
        picks = rng.integers(0, len(items), size=config.batch_size)
        batch = []
        for pick in picks:
            item = items[int(pick)]
            if crop and item.n_frames > crop:
                start = int(rng.integers(0, item.n_frames - crop + 1))
                batch.append(item.crop(start, crop))
            else:
                batch.append(item)
        ratios = sample_proxy_ratios(rng, config)
        loss, grad = _batch_loss_grad(model, state.params, batch, ratios)
        lr = learning_rate_at(config, state.step - 1)
        _adam_update(state.params, grad, state, lr)
        state.loss_history.append(loss)

        is_val_step = state.step % config.val_every == 0 or state.step == config.total_steps
        val_loss = validate(state.step) if is_val_step else None
        if log is not None and (state.step % config.log_every == 0 or state.step == config.total_steps):
            log({"step": state.step, "lr": lr, "train_loss": loss, "val_loss": val_loss})

    state.rng_state = rng.bit_generator.state
    if not val_items:
        state.best_params = state.params.copy()
        state.best_step = state.step
    best = SupernetModel(config, state.best_params.copy())
    return best, state


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, config: SupernetConfig, state: TrainState):
    val_steps = np.array([s for s, _ in state.val_history], dtype=np.int64)
    val_losses = np.array([v for _, v in state.val_history])
    with open(path, "wb") as fh:
        np.savez(
            fh,
            version=np.int64(CHECKPOINT_VERSION),
            config_json=np.frombuffer(config.to_json().encode(), dtype=np.uint8),
            params=state.params,
            adam_m=state.adam_m,
            adam_v=state.adam_v,
            step=np.int64(state.step),
            rng_state_json=np.frombuffer(json.dumps(state.rng_state, sort_keys=True).encode(), dtype=np.uint8),
            best_val=np.float64(state.best_val),
            best_params=state.best_params,
            best_step=np.int64(state.best_step),
            loss_history=np.array(state.loss_history),
            val_steps=val_steps,
            val_losses=val_losses,
            seed=np.int64(config.seed),
        )


def load_checkpoint(path):
    """Returns (best model, config, TrainState)."""
    with np.load(path) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        config = SupernetConfig.from_json(bytes(data["config_json"]).decode())
        state = TrainState(
            params=data["params"].copy(),
            adam_m=data["adam_m"].copy(),
            adam_v=data["adam_v"].copy(),
            step=int(data["step"]),
            rng_state=json.loads(bytes(data["rng_state_json"]).decode()),
            best_val=float(data["best_val"]),
            best_params=data["best_params"].copy(),
            best_step=int(data["best_step"]),
            loss_history=data["loss_history"].tolist(),
            val_history=list(zip(data["val_steps"].tolist(), data["val_losses"].tolist())),
        )
    model = SupernetModel(config, state.best_params.copy())
    return model, config, state
