"""Series encoder architecture: reversible instance normalization, patching,
patch/mask embedding, positional signals, a bias-free pre-norm transformer
stack with bucketed relative attention bias, and the task heads.

All forward functions accept a single series ([T] / [N,P]) or a batch
([B,T] / [B,N,P]); internally everything runs batched. Normalized-space
tensors flow through the autodiff engine; inference helpers return ndarrays.
"""

import json
import math
import os
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from . import numcore as nc
from .errors import ConfigError, EmptySeriesError, NumericError, ShapeError

# ------------------------------------------------------------------ configuration


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; defaults give the desk-scale tiny encoder."""

    seq_len: int = 512
    patch_len: int = 8
    d_model: int = 32
    n_layers: int = 1
    n_heads: int = 4
    d_ff: int = 64
    n_rel_buckets: int = 32
    rel_max_distance: int = 128
    revin_eps: float = 1e-5

    def __post_init__(self):
        for field in ("seq_len", "patch_len", "d_model", "n_heads", "d_ff",
                      "n_rel_buckets", "rel_max_distance"):
            if getattr(self, field) <= 0:
                raise ConfigError(f"{field} must be positive, got {getattr(self, field)}")
        if self.n_layers < 0:
            raise ConfigError(f"n_layers must be >= 0, got {self.n_layers}")
        if self.seq_len % self.patch_len != 0:
            raise ConfigError(
                f"seq_len {self.seq_len} must be divisible by patch_len {self.patch_len}"
            )
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} must be divisible by n_heads {self.n_heads}"
            )
        if self.revin_eps <= 0:
            raise ConfigError("revin_eps must be positive")

    @property
    def n_patches(self):
        return self.seq_len // self.patch_len


NAMED_CONFIGS = {
    "tiny": dict(n_layers=1, d_model=32, n_heads=4, d_ff=64),
    "small": dict(n_layers=2, d_model=64, n_heads=4, d_ff=128),
    "base": dict(n_layers=4, d_model=128, n_heads=8, d_ff=256),
}


def named_config(name, **overrides):
    """Build one of the desk-scale configs: tiny, small, base."""
    if name not in NAMED_CONFIGS:
        raise ConfigError(f"unknown config {name!r}; choose from {sorted(NAMED_CONFIGS)}")
    fields = dict(NAMED_CONFIGS[name])
    fields.update(overrides)
    return ModelConfig(**fields)


# ------------------------------------------------------------------ normalization


@dataclass
class RevinStats:
    """Per-instance mean/std over observed timesteps; kept for denormalization."""

    mean: np.ndarray
    std: np.ndarray


def _promote(values, observed=None):
    v = np.asarray(values, dtype=np.float32)
    single = v.ndim == 1
    if single:
        v = v[None, :]
    if observed is None:
        obs = np.ones(v.shape, dtype=bool)
    else:
        obs = np.asarray(observed, dtype=bool)
        if obs.ndim == 1:
            obs = obs[None, :]
    if obs.shape != v.shape:
        raise ShapeError(f"observed mask shape {obs.shape} != values shape {v.shape}")
    return v, obs, single


def revin_normalize(values, observed=None, eps=1e-5):
    """Center/scale each instance by its observed-timestep statistics.

    Observed entries become (x - mu) / max(sigma, eps) with population sigma;
    unobserved entries pass through as 0. Returns (normalized, RevinStats).
    """
    v, obs, single = _promote(values, observed)
    counts = obs.sum(axis=1)
    if np.any(counts == 0):
        raise EmptySeriesError("revin_normalize needs at least one observed timestep")
    v64 = np.where(obs, v.astype(np.float64), 0.0)
    mu = v64.sum(axis=1) / counts
    var = np.where(obs, np.square(v64 - mu[:, None]), 0.0).sum(axis=1) / counts
    sigma = np.maximum(np.sqrt(var), eps)
    mu32 = mu.astype(np.float32)
    sg32 = sigma.astype(np.float32)
    out = (v - mu32[:, None]) / sg32[:, None]
    out = np.where(obs, out, np.float32(0.0))
    stats = RevinStats(mean=mu32, std=sg32)
    if single:
        return out[0], stats
    return out, stats


def revin_denormalize(values, stats):
    """Inverse transform: y * sigma + mu, elementwise per instance."""
    v = np.asarray(values, dtype=np.float32)
    single = v.ndim == 1
    if single:
        v = v[None, :]
    out = v * stats.std[:, None] + stats.mean[:, None]
    return out[0] if single else out


# ------------------------------------------------------------------ patching


def patchify(values, patch_len):
    """Split a length-T vector (or [B,T] batch) into disjoint length-P patches."""
    v = np.asarray(values, dtype=np.float32)
    t = v.shape[-1]
    if t % patch_len != 0:
        raise ShapeError(
            f"length {t} not divisible by patch length {patch_len}; left-pad first"
        )
    return v.reshape(v.shape[:-1] + (t // patch_len, patch_len))


def left_pad(values, target_len, observed=None):
    """Prepend zeros up to target_len; the padded prefix is marked unobserved."""
    v = np.asarray(values, dtype=np.float32)
    if v.ndim != 1:
        raise ShapeError(f"left_pad expects a 1-D series, got shape {v.shape}")
    if len(v) > target_len:
        raise ShapeError(
            f"series of length {len(v)} exceeds window {target_len}; sub-sample first"
        )
    obs = np.ones(len(v), dtype=bool) if observed is None else np.asarray(observed, dtype=bool)
    if obs.shape != v.shape:
        raise ShapeError(f"observed mask shape {obs.shape} != series shape {v.shape}")
    pad = target_len - len(v)
    out = np.concatenate([np.zeros(pad, dtype=np.float32), v])
    mask = np.concatenate([np.zeros(pad, dtype=bool), obs])
    return out, mask


@dataclass
class PatchMaskPlan:
    """Per-patch indicator: 1 = observed (linear projection), 0 = masked token."""

    observed: np.ndarray

    def __post_init__(self):
        self.observed = np.asarray(self.observed).astype(np.uint8)
        if self.observed.ndim != 1:
            raise ShapeError("a patch mask plan is a 1-D per-patch indicator")

    @classmethod
    def from_observed_mask(cls, observed, patch_len):
        """A patch counts as observed only if every timestep in it is observed."""
        return cls(patch_observed_indicator(observed, patch_len))

    def combine(self, other):
        """Intersection: observed only where both plans agree."""
        return PatchMaskPlan(self.observed & np.asarray(other.observed, dtype=np.uint8))

    @property
    def n_masked(self):
        return int((self.observed == 0).sum())

    def __len__(self):
        return len(self.observed)


def patch_observed_indicator(observed, patch_len):
    """uint8 per-patch indicator ([N] or [B,N]): 1 iff all timesteps observed."""
    obs = np.asarray(observed, dtype=bool)
    t = obs.shape[-1]
    if t % patch_len != 0:
        raise ShapeError(f"mask length {t} not divisible by patch length {patch_len}")
    grouped = obs.reshape(obs.shape[:-1] + (t // patch_len, patch_len))
    return grouped.all(axis=-1).astype(np.uint8)


# ------------------------------------------------------------------ positions


def sinusoidal_pe(n_positions, d_model):
    """Absolute sinusoidal positional table [n_positions, d_model]."""
    if d_model % 2 != 0:
        raise ConfigError(f"sinusoidal positions need an even d_model, got {d_model}")
    pos = np.arange(n_positions, dtype=np.float64)[:, None]
    i = np.arange(0, d_model, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, i / d_model)
    pe = np.zeros((n_positions, d_model), dtype=np.float32)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


def relative_bucket(rel_pos, n_buckets=32, max_distance=128):
    """Bidirectional bucket id for a relative offset (key position - query position).

    Half the buckets serve each sign; small offsets get exact buckets, larger
    ones log-spaced buckets up to max_distance, clamped beyond.
    """
    half = n_buckets // 2
    bucket = half if rel_pos > 0 else 0
    n = abs(int(rel_pos))
    max_exact = half // 2
    if n < max_exact:
        return bucket + n
    log_val = max_exact + int(
        math.log(n / max_exact) / math.log(max_distance / max_exact) * (half - max_exact)
    )
    return bucket + min(log_val, half - 1)


@lru_cache(maxsize=8)
def _bucket_index_matrix(n_patches, n_buckets, max_distance):
    idx = np.empty((n_patches, n_patches), dtype=np.int64)
    for i in range(n_patches):
        for j in range(n_patches):
            idx[i, j] = relative_bucket(j - i, n_buckets, max_distance)
    idx.setflags(write=False)
    return idx


# ------------------------------------------------------------------ weights


class ModelWeights:
    """Named parameter tensors plus the config they were built for."""

    def __init__(self, config, params, horizon=None):
        self.config = config
        self.params = params
        self.horizon = horizon

    def parameters(self, head_only=None):
        """Dict of parameters; head_only='reconstruction'/'forecast' filters."""
        if head_only is None:
            return dict(self.params)
        prefix = {"reconstruction": "recon_head.", "forecast": "forecast_head."}.get(head_only)
        if prefix is None:
            raise ConfigError(f"unknown head kind {head_only!r}")
        return {k: v for k, v in self.params.items() if k.startswith(prefix)}

    def n_params(self):
        return sum(p.data.size for p in self.params.values())


def expected_param_shapes(config, horizon=None):
    """Canonical parameter name -> shape map for a config (insertion-ordered)."""
    p, d, ff = config.patch_len, config.d_model, config.d_ff
    shapes = {
        "patch_embed.weight": (p, d),
        "patch_embed.bias": (d,),
        "mask_token": (d,),
    }
    for i in range(config.n_layers):
        shapes[f"layers.{i}.norm1.gamma"] = (d,)
        shapes[f"layers.{i}.attn.wq"] = (d, d)
        shapes[f"layers.{i}.attn.wk"] = (d, d)
        shapes[f"layers.{i}.attn.wv"] = (d, d)
        shapes[f"layers.{i}.attn.wo"] = (d, d)
        shapes[f"layers.{i}.attn.rel_bias"] = (config.n_rel_buckets, config.n_heads)
        shapes[f"layers.{i}.norm2.gamma"] = (d,)
        shapes[f"layers.{i}.ff.w1"] = (d, ff)
        shapes[f"layers.{i}.ff.w2"] = (ff, d)
    shapes["recon_head.weight"] = (d, p)
    shapes["recon_head.bias"] = (p,)
    if horizon is not None:
        shapes["forecast_head.weight"] = (config.n_patches * d, horizon)
        shapes["forecast_head.bias"] = (horizon,)
    return shapes


def init_weights(config, seed=0, horizon=None):
    """Fresh weights: fan-in scaled-uniform matrices, unit gammas, zero biases,
    standard-normal mask token."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in expected_param_shapes(config, horizon).items():
        if name == "mask_token":
            arr = rng.standard_normal(shape).astype(np.float32)
        elif name.endswith(("gamma",)):
            arr = np.ones(shape, dtype=np.float32)
        elif name.endswith(("bias", "rel_bias")):
            arr = np.zeros(shape, dtype=np.float32)
        else:
            bound = 1.0 / math.sqrt(shape[0])
            arr = rng.uniform(-bound, bound, size=shape).astype(np.float32)
        params[name] = nc.Tensor(arr, requires_grad=True)
    return ModelWeights(config, params, horizon=horizon)


def attach_forecast_head(weights, horizon, seed=0):
    """Add (or replace) the flatten-and-project forecasting head for horizon H."""
    if horizon < 1:
        raise ConfigError(f"horizon must be positive, got {horizon}")
    rng = np.random.default_rng(seed)
    nd = weights.config.n_patches * weights.config.d_model
    bound = 1.0 / math.sqrt(nd)
    weights.params["forecast_head.weight"] = nc.Tensor(
        rng.uniform(-bound, bound, size=(nd, horizon)).astype(np.float32),
        requires_grad=True,
    )
    weights.params["forecast_head.bias"] = nc.Tensor(
        np.zeros(horizon, dtype=np.float32), requires_grad=True
    )
    weights.horizon = int(horizon)
    return weights


# ------------------------------------------------------------------ forward pass


def _plan_array(plan):
    arr = plan.observed if isinstance(plan, PatchMaskPlan) else np.asarray(plan)
    return arr.astype(np.float32)


def embed_patches(patches, plan, weights):
    """Project observed patches linearly; substitute the mask token elsewhere.

    patches: [N,P] or [B,N,P]; plan: matching per-patch indicator. The blend
    multiplies the projection by the indicator, so masked rows equal the mask
    token bit-exactly and raw values under a mask cannot influence anything.
    """
    x = np.asarray(patches, dtype=np.float32)
    single = x.ndim == 2
    if single:
        x = x[None]
    b, n, p = x.shape
    plan_f = _plan_array(plan).reshape(b, n, 1)
    w = weights.params["patch_embed.weight"]
    bias = weights.params["patch_embed.bias"]
    mask_tok = weights.params["mask_token"]
    proj = nc.add(nc.matmul(nc.Tensor(x.reshape(b * n, p)), w), bias)
    proj = nc.reshape(proj, (b, n, w.data.shape[1]))
    keep = nc.Tensor(plan_f)
    drop = nc.Tensor(1.0 - plan_f)
    out = nc.add(nc.mul(proj, keep), nc.mul(nc.reshape(mask_tok, (1, 1, -1)), drop))
    return nc.reshape(out, (n, -1)) if single else out


def encoder_forward(embeddings, weights, attn_sink=None):
    """Pre-norm residual stack: x + Attn(norm(x)), then x + FF(norm(x)).

    Attention logits are scaled by 1/sqrt(d_head) and receive a per-head
    additive relative-position bias before the softmax. attn_sink, when a
    list, collects each layer's attention weights as an ndarray.
    """
    cfg = weights.config
    x = embeddings if isinstance(embeddings, nc.Tensor) else nc.Tensor(embeddings)
    single = x.ndim == 2
    if single:
        x = nc.reshape(x, (1,) + x.shape)
    b, n, d = x.shape
    if d != cfg.d_model:
        raise ShapeError(f"embedding dim {d} != d_model {cfg.d_model}")
    heads = cfg.n_heads
    dh = d // heads
    scale = nc.Tensor(np.float32(1.0 / math.sqrt(dh)))
    idx = _bucket_index_matrix(n, cfg.n_rel_buckets, cfg.rel_max_distance)

    def fold(v):
        return nc.reshape(v, (b * n, d))

    def unfold(v):
        return nc.reshape(v, (b, n, d))

    def split_heads(v):
        return nc.transpose(nc.reshape(v, (b, n, heads, dh)), (0, 2, 1, 3))

    for i in range(cfg.n_layers):
        lp = lambda name: weights.params[f"layers.{i}.{name}"]
        normed = nc.scale_norm(x, lp("norm1.gamma"))
        q = split_heads(unfold(nc.matmul(fold(normed), lp("attn.wq"))))
        k = split_heads(unfold(nc.matmul(fold(normed), lp("attn.wk"))))
        v = split_heads(unfold(nc.matmul(fold(normed), lp("attn.wv"))))
        scores = nc.mul(nc.matmul(q, nc.transpose(k, (0, 1, 3, 2))), scale)
        bias = nc.transpose(nc.gather_rows(lp("attn.rel_bias"), idx), (2, 0, 1))
        attn = nc.softmax_lastdim(nc.add(scores, bias))
        if attn_sink is not None:
            attn_sink.append(attn.data)
        ctx = nc.reshape(nc.transpose(nc.matmul(attn, v), (0, 2, 1, 3)), (b * n, d))
        x = nc.add(x, unfold(nc.matmul(ctx, lp("attn.wo"))))
        normed2 = nc.scale_norm(x, lp("norm2.gamma"))
        ff = nc.matmul(nc.relu(nc.matmul(fold(normed2), lp("ff.w1"))), lp("ff.w2"))
        x = nc.add(x, unfold(ff))
        if not np.all(np.isfinite(x.data)):
            raise NumericError(f"non-finite activation after layer {i}")
    return nc.reshape(x, (n, d)) if single else x


def reconstruction_head(hidden, weights):
    """Per-patch linear map D -> P; patches concatenated back to length T."""
    h = hidden if isinstance(hidden, nc.Tensor) else nc.Tensor(hidden)
    single = h.ndim == 2
    if single:
        h = nc.reshape(h, (1,) + h.shape)
    b, n, d = h.shape
    w = weights.params["recon_head.weight"]
    bias = weights.params["recon_head.bias"]
    out = nc.add(nc.matmul(nc.reshape(h, (b * n, d)), w), bias)
    out = nc.reshape(out, (b, n * w.data.shape[1]))
    return nc.reshape(out, (out.shape[1],)) if single else out


def forecasting_head(hidden, weights):
    """Flatten the N x D patch embeddings row-major and project to horizon H."""
    if weights.horizon is None or "forecast_head.weight" not in weights.params:
        raise ConfigError("forecasting head not attached")
    h = hidden if isinstance(hidden, nc.Tensor) else nc.Tensor(hidden)
    single = h.ndim == 2
    if single:
        h = nc.reshape(h, (1,) + h.shape)
    b, n, d = h.shape
    w = weights.params["forecast_head.weight"]
    if n * d != w.data.shape[0]:
        raise ConfigError(
            f"forecasting head expects flattened dim {w.data.shape[0]}, got {n * d}"
        )
    out = nc.add(nc.matmul(nc.reshape(h, (b, n * d)), w), weights.params["forecast_head.bias"])
    return nc.reshape(out, (out.shape[1],)) if single else out


def model_forward(weights, x_norm, plan, attn_sink=None):
    """Normalized window(s) -> (hidden Tensor, reconstruction Tensor).

    x_norm: [T] or [B,T] in normalized space; plan: per-patch indicator(s).
    """
    cfg = weights.config
    patches = patchify(x_norm, cfg.patch_len)
    single = patches.ndim == 2
    plan_arr = _plan_array(plan)
    if single:
        patches = patches[None]
        plan_arr = plan_arr.reshape(1, -1)
    if plan_arr.shape != patches.shape[:2]:
        raise ShapeError(f"plan shape {plan_arr.shape} != patch grid {patches.shape[:2]}")
    e = embed_patches(patches, plan_arr, weights)
    pe = nc.Tensor(sinusoidal_pe(cfg.n_patches, cfg.d_model)[None])
    h = encoder_forward(nc.add(e, pe), weights, attn_sink=attn_sink)
    recon = reconstruction_head(h, weights)
    if single:
        return nc.reshape(h, h.shape[1:]), nc.reshape(recon, (recon.shape[1],))
    return h, recon


def sequence_representation(hidden, include):
    """Mean of the selected (non-padded) patch rows; [N,D]->[D] or [B,N,D]->[B,D]."""
    h = hidden.data if isinstance(hidden, nc.Tensor) else np.asarray(hidden)
    inc = np.asarray(include, dtype=bool)
    single = h.ndim == 2
    if single:
        h = h[None]
        inc = inc.reshape(1, -1)
    counts = inc.sum(axis=1)
    if np.any(counts == 0):
        raise EmptySeriesError("sequence representation needs at least one non-padded patch")
    rep = (h * inc[:, :, None]).sum(axis=1) / counts[:, None]
    rep = rep.astype(np.float32)
    return rep[0] if single else rep


def nonpadded_patches(observed, patch_len):
    """Patches with at least one observed timestep ([N] or [B,N] bool)."""
    obs = np.asarray(observed, dtype=bool)
    t = obs.shape[-1]
    if t % patch_len != 0:
        raise ShapeError(f"mask length {t} not divisible by patch length {patch_len}")
    return obs.reshape(obs.shape[:-1] + (t // patch_len, patch_len)).any(axis=-1)


# ------------------------------------------------------------------ checkpoints


def save_checkpoint(weights, path):
    """Write a JSON manifest at `path` and the f32 blob at `path` + '.bin'."""
    manifest = {"config": asdict(weights.config), "params": {}}
    manifest["config"]["forecast_horizon"] = weights.horizon
    chunks = []
    offset = 0
    for name, p in weights.params.items():
        raw = np.ascontiguousarray(p.data, dtype="<f4").tobytes()
        manifest["params"][name] = {
            "shape": list(p.data.shape),
            "offset": offset,
            "length": len(raw),
        }
        chunks.append(raw)
        offset += len(raw)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(blob_path(path), "wb") as fh:
        fh.write(b"".join(chunks))
    return path


def blob_path(manifest_path):
    return str(manifest_path) + ".bin"


def load_checkpoint(path):
    """Load and shape-validate a checkpoint written by save_checkpoint."""
    if not os.path.exists(path):
        raise ConfigError(f"checkpoint manifest not found: {path}")
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    cfg_fields = dict(manifest["config"])
    horizon = cfg_fields.pop("forecast_horizon", None)
    try:
        config = ModelConfig(**cfg_fields)
    except TypeError as exc:
        raise ConfigError(f"checkpoint config invalid: {exc}") from None
    expected = expected_param_shapes(config, horizon)
    listed = manifest["params"]
    if set(listed) != set(expected):
        missing = sorted(set(expected) - set(listed))
        extra = sorted(set(listed) - set(expected))
        raise ConfigError(f"checkpoint parameters mismatch: missing {missing}, extra {extra}")
    with open(blob_path(path), "rb") as fh:
        blob = fh.read()
    params = {}
    for name in expected:
        entry = listed[name]
        shape = tuple(entry["shape"])
        if shape != expected[name]:
            raise ConfigError(
                f"checkpoint shape for {name!r} is {shape}, expected {expected[name]}"
            )
        count = int(np.prod(shape)) if shape else 1
        if entry["length"] != count * 4:
            raise ConfigError(f"checkpoint byte length for {name!r} inconsistent with shape")
        arr = np.frombuffer(
            blob, dtype="<f4", count=count, offset=entry["offset"]
        ).reshape(shape)
        params[name] = nc.Tensor(arr.copy(), requires_grad=True)
    return ModelWeights(config, params, horizon=horizon)
