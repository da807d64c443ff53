"""Inference-time task adapters over a pretrained masked-series model:
gap imputation, anomaly scoring, zero-shot and head-based forecasting, and
SVM classification over sequence representations.

All adapters are pure functions of the weights and inputs, so they are safe
to parallelize across series.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .baselines import RbfSvm
from .data import Series, downsample, fit_to_window
from .errors import (
    ConfigError,
    EmptySeriesError,
    HorizonError,
    ShapeError,
    StratificationError,
)
from .model import (
    PatchMaskPlan,
    forecasting_head,
    left_pad,
    model_forward,
    nonpadded_patches,
    patch_observed_indicator,
    revin_denormalize,
    revin_normalize,
    sequence_representation,
)

# ------------------------------------------------------------------ task specs

IMPUTE_RATIOS = (0.125, 0.25, 0.375, 0.5)


@dataclass(frozen=True)
class ImputationSpec:
    """Block-masking protocol for imputation evaluation: hide contiguous,
    non-overlapping, patch-aligned blocks of `block_len` timesteps."""

    ratio: float = 0.25
    block_len: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.ratio not in IMPUTE_RATIOS:
            raise ConfigError(
                f"masking ratio must be one of {IMPUTE_RATIOS}, got {self.ratio}"
            )
        if self.block_len < 1:
            raise ConfigError(f"block length must be >= 1, got {self.block_len}")


def sample_block_mask(spec, length):
    """Observed-mask with floor(ratio * n_blocks) (at least 1) blocks hidden,
    chosen uniformly without replacement on the aligned block grid."""
    if length % spec.block_len != 0:
        raise ShapeError(
            f"length {length} not divisible by block length {spec.block_len}"
        )
    n_blocks = length // spec.block_len
    n_hidden = max(1, int(spec.ratio * n_blocks))
    rng = np.random.default_rng(spec.seed)
    hidden = rng.choice(n_blocks, size=n_hidden, replace=False)
    observed = np.ones(length, dtype=bool)
    for b in hidden:
        observed[b * spec.block_len:(b + 1) * spec.block_len] = False
    return observed


def apply_block_mask(x, spec):
    """Hide additional blocks of an (otherwise observed) series for evaluation."""
    mask = sample_block_mask(spec, len(x))
    return replace(x, observed=x.observed & mask)


@dataclass(frozen=True)
class AnomalySpec:
    """Anomaly-scoring protocol: window length, downsampling rule, and the
    pointwise squared-error score."""

    window: int = 512
    downsample_threshold: int = 2560
    downsample_factor: int = 10
    mask_rounds: int = 4  # ceil(1 / 0.3): disjoint groups tiling every patch
    score: str = "squared_error"

    def __post_init__(self):
        if self.score != "squared_error":
            raise ConfigError(f"unsupported score kind {self.score!r}")
        if self.window < 1 or self.mask_rounds < 1:
            raise ConfigError("window and mask_rounds must be positive")


FORECAST_MODES = ("zero-shot", "probed-head")


@dataclass(frozen=True)
class ForecastSpec:
    """Forecasting protocol: lookback window, horizon, and head mode."""

    horizon: int
    lookback: int = 512
    mode: str = "zero-shot"

    def __post_init__(self):
        if self.mode not in FORECAST_MODES:
            raise ConfigError(f"mode must be one of {FORECAST_MODES}, got {self.mode!r}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")


# ------------------------------------------------------------------ windowing


def _window_grid(values, observed, window):
    """Chunk a series into ceil(n/window) consecutive windows; the last one is
    left-padded. Returns (values [W,window], observed [W,window], spans) where
    spans[w] = (lo, hi, pad) maps window w back to series positions."""
    n = len(values)
    n_win = max(1, math.ceil(n / window))
    vs = np.zeros((n_win, window), dtype=np.float32)
    obs = np.zeros((n_win, window), dtype=bool)
    spans = []
    for w in range(n_win):
        lo = w * window
        hi = min(n, lo + window)
        v, o = left_pad(values[lo:hi], window, observed[lo:hi])
        vs[w], obs[w] = v, o
        spans.append((lo, hi, window - (hi - lo)))
    return vs, obs, spans


# ------------------------------------------------------------------ imputation


def zero_shot_impute(weights, x):
    """Fill missing entries from the denormalized masked-patch reconstruction.

    A patch counts as observed only when every one of its timesteps is
    observed; partially observed patches are reconstructed wholesale, but
    observed entries are always returned bit-for-bit unchanged.
    """
    cfg = weights.config
    if x.observed.all():
        return x
    vs, obs, spans = _window_grid(x.values, x.observed, cfg.seq_len)
    pobs = patch_observed_indicator(obs, cfg.patch_len)
    for w in range(len(vs)):
        if pobs[w].sum() == 0:
            raise EmptySeriesError(
                f"series {x.name!r}: window {w} has no fully observed patch"
            )
    norm, stats = revin_normalize(vs, obs)
    _, recon = model_forward(weights, norm, pobs)
    filled = revin_denormalize(recon.data, stats)
    out = x.values.copy()
    for w, (lo, hi, pad) in enumerate(spans):
        missing = ~x.observed[lo:hi]
        out[lo:hi][missing] = filled[w, pad:][missing]
    return replace(x, values=out, observed=np.ones(len(x), dtype=bool))


# ------------------------------------------------------------------ anomalies


@dataclass
class AnomalyResult:
    """Per-timestep scores aligned with `series` (the processed series, which
    is the input itself unless the downsampling rule fired)."""

    scores: np.ndarray
    series: Series


def detect_anomalies(weights, x, spec=None):
    """Score every timestep by squared reconstruction error under a masking
    sweep: patches are hidden in `mask_rounds` disjoint rounds so each patch
    is reconstructed while masked exactly once."""
    spec = spec if spec is not None else AnomalySpec(window=weights.config.seq_len)
    if spec.window != weights.config.seq_len:
        raise ConfigError(
            f"spec window {spec.window} != model window {weights.config.seq_len}"
        )
    proc = downsample(x, spec.downsample_threshold, spec.downsample_factor)
    cfg = weights.config
    vs, obs, spans = _window_grid(proc.values, proc.observed, cfg.seq_len)
    norm, stats = revin_normalize(vs, obs)
    pobs = patch_observed_indicator(obs, cfg.patch_len)
    patch_group = np.arange(cfg.n_patches) % spec.mask_rounds
    recon_full = np.zeros_like(vs)
    for j in range(spec.mask_rounds):
        group = patch_group == j
        if not group.any():
            continue
        plan = pobs & ~group[None, :].astype(np.uint8)
        _, recon = model_forward(weights, norm, plan)
        denorm = revin_denormalize(recon.data, stats)
        cols = np.repeat(group, cfg.patch_len)
        recon_full[:, cols] = denorm[:, cols]
    sq = np.where(obs, np.square(vs - recon_full), np.float32(0.0))
    scores = np.zeros(len(proc), dtype=np.float32)
    for w, (lo, hi, pad) in enumerate(spans):
        scores[lo:hi] = sq[w, pad:]
    return AnomalyResult(scores=scores, series=proc)


# ------------------------------------------------------------------ forecasting


def zero_shot_short_forecast(weights, history, horizon):
    """Forecast by appending masked patches: the trailing ceil(H/P) patches of
    a window are masked, the preceding region holds the most recent history
    (left-padded if short), and the reconstruction of the masked tail —
    denormalized with statistics from the history region only — is returned."""
    cfg = weights.config
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    if horizon > cfg.seq_len // 2:
        raise HorizonError(
            f"horizon {horizon} exceeds half the window ({cfg.seq_len // 2}); "
            f"use a probed forecasting head for longer horizons"
        )
    n_tail = math.ceil(horizon / cfg.patch_len)
    context = cfg.seq_len - n_tail * cfg.patch_len
    if context < 1:
        raise HorizonError(f"masked tail of {n_tail} patches leaves no history context")
    hist_v, hist_o = left_pad(
        history.values[-context:], context, history.observed[-context:]
    )
    window = np.concatenate([hist_v, np.zeros(n_tail * cfg.patch_len, dtype=np.float32)])
    observed = np.concatenate([hist_o, np.zeros(n_tail * cfg.patch_len, dtype=bool)])
    norm, stats = revin_normalize(window, observed)
    plan = PatchMaskPlan.from_observed_mask(observed, cfg.patch_len)
    _, recon = model_forward(weights, norm, plan)
    denorm = revin_denormalize(recon.data, stats)
    return Series(
        values=denorm[context:context + horizon],
        name=history.name,
        freq=history.freq,
    )


def long_forecast(weights, history, horizon):
    """Forecast with the attached linear forecasting head: normalize the most
    recent lookback window, encode, project to the horizon, denormalize."""
    cfg = weights.config
    if weights.horizon is None:
        raise ConfigError("forecasting head not attached")
    if weights.horizon != horizon:
        raise ConfigError(
            f"forecasting head horizon {weights.horizon} != requested {horizon}"
        )
    values, observed = left_pad(
        history.values[-cfg.seq_len:], cfg.seq_len, history.observed[-cfg.seq_len:]
    )
    norm, stats = revin_normalize(values, observed)
    plan = PatchMaskPlan.from_observed_mask(observed, cfg.patch_len)
    hidden, _ = model_forward(weights, norm, plan)
    fc = forecasting_head(hidden, weights)
    denorm = revin_denormalize(fc.data, stats)
    return Series(values=denorm, name=history.name, freq=history.freq)


# ------------------------------------------------------------------ classification

SVM_C_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4)


def embed_series(weights, collection):
    """Sequence representations for a list of series. Receives series only —
    labels never enter the embedding stage."""
    if len(collection) == 0:
        raise EmptySeriesError("cannot embed an empty collection")
    cfg = weights.config
    fitted = [fit_to_window(s, cfg.seq_len) for s in collection]
    vals = np.stack([f.values for f in fitted])
    obs = np.stack([f.observed for f in fitted])
    norm, _ = revin_normalize(vals, obs)
    plan = patch_observed_indicator(obs, cfg.patch_len)
    hidden, _ = model_forward(weights, norm, plan)
    return sequence_representation(hidden, nonpadded_patches(obs, cfg.patch_len))


def _stratified_holdout(labels, val_frac=0.2, seed=13):
    """Per-class seeded 80/20 split; singleton classes stay fully in train."""
    rng = np.random.default_rng(seed)
    train_idx, val_idx = [], []
    for cls in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        n_val = 0
        if len(idx) >= 2:
            n_val = min(max(1, int(val_frac * len(idx))), len(idx) - 1)
        val_idx.extend(idx[:n_val])
        train_idx.extend(idx[n_val:])
    return np.sort(train_idx), np.sort(val_idx)


@dataclass
class ClassificationResult:
    accuracy: float
    predictions: np.ndarray
    best_c: float
    val_accuracy: float


def classify_by_representation(
    weights, train, train_labels, test, test_labels, c_grid=SVM_C_GRID, seed=13
):
    """Fit an RBF-SVM on frozen sequence representations, selecting C on a
    stratified validation split of the training set, and score the test set."""
    train_labels = np.asarray(train_labels)
    test_labels = np.asarray(test_labels)
    if len(train) != len(train_labels):
        raise ShapeError(f"{len(train)} train series but {len(train_labels)} labels")
    if len(test) != len(test_labels):
        raise ShapeError(f"{len(test)} test series but {len(test_labels)} labels")
    classes = np.unique(train_labels)
    if len(classes) < 2:
        raise StratificationError("training split must contain at least 2 classes")
    missing = sorted(set(np.unique(test_labels)) - set(classes))
    if missing:
        raise StratificationError(
            f"classes absent from the training split: {missing}"
        )
    train_reps = embed_series(weights, train)
    test_reps = embed_series(weights, test)
    fit_idx, val_idx = _stratified_holdout(train_labels, seed=seed)
    best = None
    if len(val_idx) > 0:
        for c in c_grid:
            model = RbfSvm(C=c).fit(train_reps[fit_idx], train_labels[fit_idx])
            acc = float(np.mean(model.predict(train_reps[val_idx]) == train_labels[val_idx]))
            if best is None or acc > best[0]:
                best = (acc, c)
    best_c = best[1] if best is not None else 1.0
    final = RbfSvm(C=best_c).fit(train_reps, train_labels)
    predictions = final.predict(test_reps)
    accuracy = float(np.mean(predictions == test_labels))
    return ClassificationResult(
        accuracy=accuracy,
        predictions=predictions,
        best_c=best_c,
        val_accuracy=best[0] if best is not None else float("nan"),
    )
