"""Datasets: CSV I/O, synthetic generation, masking, splitting.

Every seeded operation draws from numpy's Philox generator (Philox-4x64-10, a
named 64-bit counter-based algorithm), so results are reproducible across
platforms for a given seed. Draw order is documented per function and is part
of the reproducibility contract.

CSV format: comma-delimited UTF-8, LF line endings, '.' decimal separator,
one header row. The columns named ``label`` (int) and ``sensitive`` (int, or
empty string when masked) are reserved; every other column is a float feature,
in file order. Floats are written with shortest round-trip precision, so a
write/read cycle reproduces a dataset exactly.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "MASKED",
    "LabeledDataset",
    "SynthConfig",
    "synthesize_biased",
    "mask_sensitive",
    "split",
    "load_csv",
    "save_csv",
]

# Sentinel for a masked (unobserved) sensitive attribute.
MASKED = -1


@dataclass
class LabeledDataset:
    features: np.ndarray  # (N, d) float64
    labels: np.ndarray  # (N,) int64 in [0, m)
    sensitive: np.ndarray  # (N,) int64 in [0, k), or MASKED
    m: int
    k: int

    def __post_init__(self):
        self.features = np.array(self.features, dtype=np.float64, order="C")
        self.labels = np.array(self.labels, dtype=np.int64)
        self.sensitive = np.array(self.sensitive, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValidationError(
                f"features must be (N, d), got shape {self.features.shape}"
            )
        n = self.features.shape[0]
        if n < 1:
            raise ValidationError("dataset must contain at least one sample")
        if self.labels.shape != (n,):
            raise ValidationError(
                f"labels must have shape ({n},), got {self.labels.shape}"
            )
        if self.sensitive.shape != (n,):
            raise ValidationError(
                f"sensitive must have shape ({n},), got {self.sensitive.shape}"
            )
        if self.m < 2 or self.k < 2:
            raise ValidationError(f"need m >= 2 and k >= 2, got m={self.m}, k={self.k}")
        if np.any((self.labels < 0) | (self.labels >= self.m)):
            i = int(np.argmax((self.labels < 0) | (self.labels >= self.m)))
            raise ValidationError(
                f"label {int(self.labels[i])} at row {i} out of range [0, {self.m})"
            )
        bad = (self.sensitive != MASKED) & (
            (self.sensitive < 0) | (self.sensitive >= self.k)
        )
        if np.any(bad):
            i = int(np.argmax(bad))
            raise ValidationError(
                f"sensitive value {int(self.sensitive[i])} at row {i} "
                f"out of range [0, {self.k})"
            )

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    @property
    def observed(self):
        """Boolean mask of rows whose sensitive attribute is known."""
        return self.sensitive != MASKED

    def take(self, indices):
        return LabeledDataset(
            self.features[indices],
            self.labels[indices],
            self.sensitive[indices],
            self.m,
            self.k,
        )


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the biased synthetic binary task.

    ``bias_strength`` (alpha >= 0) controls how strongly the sensitive group
    leaks into both the features and the label; ``group_balance`` is
    P(s = 1); ``noise_sd`` scales the label noise.
    """

    n: int
    d: int
    bias_strength: float
    group_balance: float
    noise_sd: float
    seed: int

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"n must be >= 1, got {self.n}")
        if self.d < 1:
            raise ValidationError(f"d must be >= 1, got {self.d}")
        if not self.bias_strength >= 0:
            raise ValidationError(f"bias_strength must be >= 0, got {self.bias_strength}")
        if not 0 < self.group_balance < 1:
            raise ValidationError(
                f"group_balance must lie in (0, 1), got {self.group_balance}"
            )
        if not self.noise_sd > 0:
            raise ValidationError(f"noise_sd must be > 0, got {self.noise_sd}")


def base_direction(d):
    """The fixed unit vector defining the synthetic task's true boundary."""
    return np.full(d, 1.0 / math.sqrt(d))


def synthesize_biased(config):
    """Draw the synthetic task: group membership shifts the last feature and
    the label boundary by ``bias_strength``.

        s ~ Bernoulli(group_balance)
        x ~ N(0, I_d), then x[d-1] += bias_strength * s
        y = 1{ w0.x + bias_strength * s + noise_sd * eps > 0 },  eps ~ N(0, 1)

    with w0 the fixed unit direction above. Draw order from Philox(seed):
    s, then x, then eps.
    """
    rng = np.random.Generator(np.random.Philox(config.seed))
    n, d = config.n, config.d
    s = (rng.random(n) < config.group_balance).astype(np.int64)
    x = rng.standard_normal((n, d))
    x[:, d - 1] += config.bias_strength * s
    eps = rng.standard_normal(n)
    margin = x @ base_direction(d) + config.bias_strength * s + config.noise_sd * eps
    y = (margin > 0).astype(np.int64)
    return LabeledDataset(x, y, s, m=2, k=2)


def mask_sensitive(dataset, fraction, seed):
    """Mask exactly floor(fraction * N) uniformly chosen rows.

    The masked index set is the first floor(fraction*N) entries of a
    Philox(seed) permutation of [0, N).
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValidationError(f"fraction must lie in [0, 1], got {fraction}")
    n_mask = int(math.floor(fraction * dataset.n))
    rng = np.random.Generator(np.random.Philox(seed))
    idx = rng.permutation(dataset.n)[:n_mask]
    sensitive = dataset.sensitive.copy()
    sensitive[idx] = MASKED
    return LabeledDataset(
        dataset.features.copy(), dataset.labels.copy(), sensitive,
        dataset.m, dataset.k,
    )


def split(dataset, test_fraction, seed):
    """Disjoint, exhaustive (train, test) split via a Philox(seed) shuffle;
    the test side gets floor(test_fraction * N) samples."""
    if not 0.0 <= test_fraction <= 1.0:
        raise ValidationError(f"test_fraction must lie in [0, 1], got {test_fraction}")
    n_test = int(math.floor(test_fraction * dataset.n))
    if n_test == 0 or n_test == dataset.n:
        raise ValidationError(
            f"split of {dataset.n} samples at test_fraction={test_fraction} "
            f"leaves an empty side"
        )
    perm = np.random.Generator(np.random.Philox(seed)).permutation(dataset.n)
    return dataset.take(perm[n_test:]), dataset.take(perm[:n_test])


def _format_float(v):
    return repr(float(v))


def save_csv(dataset, path):
    """Write features (f0..f{d-1}), label, sensitive; masked rows get an
    empty sensitive field."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"f{j}" for j in range(dataset.d)] + ["label", "sensitive"])
        for i in range(dataset.n):
            row = [_format_float(v) for v in dataset.features[i]]
            row.append(str(int(dataset.labels[i])))
            s = int(dataset.sensitive[i])
            row.append("" if s == MASKED else str(s))
            writer.writerow(row)


def _parse_int(text, what, row):
    try:
        return int(text)
    except ValueError:
        raise ValidationError(f"bad {what} {text!r} at data row {row}") from None


def load_csv(path, m=None, k=None):
    """Read a dataset; ``label`` and ``sensitive`` are reserved header names,
    all other columns are features. m and k default to max(2, max index + 1)
    over the file (observed values only, for k)."""
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path} is empty") from None
        if len(set(header)) != len(header):
            raise ValidationError(f"duplicate column names in header: {header}")
        if "label" not in header:
            raise ValidationError("header is missing the reserved 'label' column")
        if "sensitive" not in header:
            raise ValidationError("header is missing the reserved 'sensitive' column")
        label_col = header.index("label")
        sens_col = header.index("sensitive")
        feat_cols = [i for i in range(len(header)) if i not in (label_col, sens_col)]
        if not feat_cols:
            raise ValidationError("no feature columns in header")
        features, labels, sensitive = [], [], []
        for row_num, row in enumerate(reader):
            if len(row) != len(header):
                raise ValidationError(
                    f"data row {row_num} has {len(row)} fields, header has {len(header)}"
                )
            try:
                features.append([float(row[i]) for i in feat_cols])
            except ValueError:
                bad = next(i for i in feat_cols if not _is_float(row[i]))
                raise ValidationError(
                    f"non-numeric feature {row[bad]!r} in column "
                    f"{header[bad]!r} at data row {row_num}"
                ) from None
            labels.append(_parse_int(row[label_col], "label", row_num))
            s_text = row[sens_col]
            sensitive.append(
                MASKED if s_text == "" else _parse_int(s_text, "sensitive value", row_num)
            )
    if not features:
        raise ValidationError(f"{path} contains a header but no data rows")
    labels = np.array(labels, dtype=np.int64)
    sensitive = np.array(sensitive, dtype=np.int64)
    if np.any(labels < 0):
        i = int(np.argmax(labels < 0))
        raise ValidationError(f"negative label {int(labels[i])} at data row {i}")
    if np.any((sensitive < 0) & (sensitive != MASKED)):
        i = int(np.argmax((sensitive < 0) & (sensitive != MASKED)))
        raise ValidationError(
            f"negative sensitive value {int(sensitive[i])} at data row {i}"
        )
    if m is None:
        m = max(2, int(labels.max()) + 1)
    observed = sensitive[sensitive != MASKED]
    if k is None:
        k = max(2, int(observed.max()) + 1 if observed.size else 2)
    return LabeledDataset(np.array(features), labels, sensitive, m=m, k=k)


def _is_float(text):
    try:
        float(text)
        return True
    except ValueError:
        return False
