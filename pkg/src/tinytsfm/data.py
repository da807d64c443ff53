"""Dataset handling: the Series record, CSV ingestion, deterministic splits,
window fitting, long-series downsampling, and synthetic sinusoid generators."""

import csv
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ParseError, ShapeError
from .model import left_pad

# ------------------------------------------------------------------ record


@dataclass
class Series:
    """A univariate series with an observation mask and optional metadata."""

    values: np.ndarray
    observed: np.ndarray = None
    name: str = ""
    freq: str = None
    label: object = None
    anomalies: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 1:
            raise ShapeError(f"series values must be 1-D, got shape {self.values.shape}")
        if self.observed is None:
            self.observed = np.ones(len(self.values), dtype=bool)
        else:
            self.observed = np.asarray(self.observed).astype(bool)
        if self.observed.shape != self.values.shape:
            raise ShapeError(
                f"observed mask length {self.observed.shape} != values {self.values.shape}"
            )
        if self.anomalies is not None:
            raw = np.asarray(self.anomalies)
            if not np.isin(raw, (0, 1)).all():
                raise ShapeError("anomaly labels must be binary")
            self.anomalies = raw.astype(bool)
            if self.anomalies.shape != self.values.shape:
                raise ShapeError(
                    f"anomaly labels length {self.anomalies.shape} != values "
                    f"{self.values.shape}"
                )

    def __len__(self):
        return len(self.values)

    def slice(self, start, stop):
        """Contiguous sub-series keeping metadata; labels are sliced along."""
        return replace(
            self,
            values=self.values[start:stop],
            observed=self.observed[start:stop],
            anomalies=None if self.anomalies is None else self.anomalies[start:stop],
        )


@dataclass
class SplitSpec:
    """Train/val/test fractions with the shared shuffle seed."""

    fractions: tuple = (0.6, 0.1, 0.3)
    seed: int = 13
    mode: str = "horizontal"

    def __post_init__(self):
        if len(self.fractions) != 3 or any(f < 0 for f in self.fractions):
            raise ConfigError(f"need three non-negative fractions, got {self.fractions}")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigError(f"fractions must sum to 1, got {self.fractions}")
        if self.mode not in ("horizontal", "by_series"):
            raise ConfigError(f"unknown split mode {self.mode!r}")


# ------------------------------------------------------------------ csv i/o


def load_csv(path):
    """Read a header + one-row-per-timestep CSV into one Series per column.

    Empty fields are missing values (observed=0, value 0.0). Ragged rows and
    non-numeric cells raise ParseError naming the offending line (1-based,
    counting the header as line 1).
    """
    if not os.path.exists(path):
        raise ParseError(f"csv file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        names = [h.strip() for h in header]
        columns = [[] for _ in names]
        masks = [[] for _ in names]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                row = [""] * len(names)  # a blank line is a fully missing row
            if len(row) != len(names):
                raise ParseError(
                    f"{path} line {lineno}: expected {len(names)} fields, got {len(row)}"
                )
            for j, cell in enumerate(row):
                token = cell.strip()
                if token == "":
                    columns[j].append(0.0)
                    masks[j].append(False)
                    continue
                try:
                    columns[j].append(float(token))
                except ValueError:
                    raise ParseError(
                        f"{path} line {lineno}: could not parse {token!r} as a number"
                    ) from None
                masks[j].append(True)
    if not columns[0]:
        raise ParseError(f"{path}: no data rows")
    return [
        Series(values=np.array(col, dtype=np.float32), observed=np.array(mask), name=name)
        for name, col, mask in zip(names, columns, masks)
    ]


def save_csv(path, collection):
    """Write equal-length series as CSV columns; unobserved cells go out empty."""
    if not collection:
        raise ShapeError("nothing to save")
    length = len(collection[0])
    if any(len(s) != length for s in collection):
        raise ShapeError("all series in one csv must have equal length")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([s.name for s in collection])
        for t in range(length):
            writer.writerow(
                [repr(float(s.values[t])) if s.observed[t] else "" for s in collection]
            )
    return path


def load_labels(path, n_expected=None):
    """Read `<name>.labels.csv`: one binary per row, aligned to csv data rows."""
    if not os.path.exists(path):
        raise ParseError(f"labels file not found: {path}")
    labels = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[0].strip():
                continue
            token = row[0].strip()
            if token not in ("0", "1"):
                raise ParseError(f"{path} line {lineno}: labels must be 0 or 1, got {token!r}")
            labels.append(token == "1")
    arr = np.array(labels, dtype=bool)
    if n_expected is not None and len(arr) != n_expected:
        raise ParseError(f"{path}: {len(arr)} labels for {n_expected} timesteps")
    return arr


def load_classes(path):
    """Read `<name>.classes.csv` rows of (series_name, class) into a dict."""
    if not os.path.exists(path):
        raise ParseError(f"classes file not found: {path}")
    mapping = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[0].strip():
                continue
            if len(row) < 2:
                raise ParseError(f"{path} line {lineno}: expected series_name,class")
            name, cls = row[0].strip(), row[1].strip()
            try:
                mapping[name] = int(cls)
            except ValueError:
                mapping[name] = cls
    return mapping


# ------------------------------------------------------------------ splits


def split_horizontal(x, spec=None):
    """Contiguous prefix/middle/suffix split; boundaries floor the cumulative
    fractions so the remainder lands in test."""
    spec = spec or SplitSpec()
    n = len(x)
    if n < 10:
        raise ShapeError(f"series too short to split horizontally: length {n}")
    f1, f2, _ = spec.fractions
    i1 = math.floor(f1 * n)
    i2 = math.floor((f1 + f2) * n)
    return x.slice(0, i1), x.slice(i1, i2), x.slice(i2, n)


def split_by_series(collection, spec=None):
    """Seeded uniform shuffle, then whole series go 60/10/30 by count."""
    spec = spec or SplitSpec(mode="by_series")
    n = len(collection)
    if n < 3:
        raise ShapeError(f"need at least 3 series to split, got {n}")
    order = np.random.default_rng(spec.seed).permutation(n)
    f1, f2, _ = spec.fractions
    i1 = math.floor(f1 * n)
    i2 = math.floor((f1 + f2) * n)
    train = [collection[i] for i in order[:i1]]
    val = [collection[i] for i in order[i1:i2]]
    test = [collection[i] for i in order[i2:]]
    return train, val, test


# ------------------------------------------------------------------ windowing


def fit_to_window(x, window=512):
    """Resize a series to exactly `window` steps.

    Longer inputs are sub-sampled at stride ceil(L/window) counting back from
    the final element (so the most recent observation stays last), shorter
    ones are left-padded with unobserved zeros.
    """
    n = len(x)
    if n == 0:
        raise ShapeError("cannot window an empty series")
    if n > window:
        stride = math.ceil(n / window)
        idx = np.arange(n - 1, -1, -stride)[::-1]
        idx = idx[-window:]
        x = replace(
            x,
            values=x.values[idx],
            observed=x.observed[idx],
            anomalies=None if x.anomalies is None else x.anomalies[idx],
        )
        n = len(x)
    if n < window:
        values, observed = left_pad(x.values, window, x.observed)
        anomalies = None
        if x.anomalies is not None:
            anomalies = np.concatenate(
                [np.zeros(window - n, dtype=bool), x.anomalies]
            )
        x = replace(x, values=values, observed=observed, anomalies=anomalies)
    return x


def downsample(x, threshold=2560, factor=10):
    """Keep every factor-th point of very long series; anomaly labels survive
    by logical-OR over each dropped group."""
    n = len(x)
    if n <= threshold:
        return x
    idx = np.arange(0, n, factor)
    anomalies = None
    if x.anomalies is not None:
        groups = [x.anomalies[i:i + factor].any() for i in idx]
        anomalies = np.array(groups, dtype=bool)
    return replace(
        x,
        values=x.values[idx],
        observed=x.observed[idx],
        anomalies=anomalies,
    )


# ------------------------------------------------------------------ synthesis

SINE_KINDS = ("trend", "amplitude", "frequency", "baseline", "phase")


def synth_sine(kind, c, length=512, noise=0.1, seed=0, name=None):
    """Synthetic probe series controlled by a single factor c.

    trend: (t/T)^c; amplitude: c*sin(2*pi*8*t/T); frequency: sin(2*pi*c*t/T);
    baseline: sin(2*pi*8*t/T)+c; phase: sin(2*pi*8*t/T+c). Additive noise is
    N(0, noise^2), drawn only when noise > 0 so noiseless output is exact.
    """
    t = np.arange(length, dtype=np.float64) / length
    if kind == "trend":
        base = t**c
    elif kind == "amplitude":
        base = c * np.sin(2 * np.pi * 8 * t)
    elif kind == "frequency":
        base = np.sin(2 * np.pi * c * t)
    elif kind == "baseline":
        base = np.sin(2 * np.pi * 8 * t) + c
    elif kind == "phase":
        base = np.sin(2 * np.pi * 8 * t + c)
    else:
        raise ConfigError(f"unknown sine kind {kind!r}; choose from {SINE_KINDS}")
    if noise > 0:
        base = base + np.random.default_rng(seed).normal(0.0, noise, size=length)
    return Series(
        values=base.astype(np.float32),
        name=name if name is not None else f"{kind}_c{c:g}_s{seed}",
    )
