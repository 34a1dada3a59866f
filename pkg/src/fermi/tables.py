"""Empirical joint probability tables of soft predictions and sensitive groups.

The central object is the m x k table whose (j, r) entry is the dataset
average of (soft probability assigned to output class j) x (indicator that
the sensitive attribute equals r):

    table[j, r] = (1/N) * sum_i probs[i, j] * onehot[i, r]

Soft model outputs populate the table, so it is differentiable in the model
parameters; all fairness functionals in :mod:`fermi.divergences` consume it.

Everything is float64. Tables are renormalized exactly at construction (inputs
are only required to be row-stochastic to 1e-6), and their arrays are frozen
so a validated table stays valid. Conditional-table class weights are kept as
integer counts so that the "weights sum to one" identity is exact.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMarginalError, ValidationError

__all__ = [
    "SUM_TOL",
    "ROW_SUM_TOL",
    "JointTable",
    "Marginals",
    "ConditionalTables",
    "empirical_joint",
    "marginals",
    "positive_marginals",
    "conditional_joints",
    "validate",
]

# Total mass of a stored table must be 1 within this tolerance.
SUM_TOL = 1e-9
# Input prediction rows must sum to 1 within this (looser) tolerance.
ROW_SUM_TOL = 1e-6


def _frozen_f64(a):
    out = np.array(a, dtype=np.float64, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class JointTable:
    """An m x k joint probability table; rows index output classes (m >= 2),
    columns index sensitive groups (k >= 2)."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries)
        if entries.ndim != 2:
            raise ValidationError(
                f"joint table must be 2-dimensional, got shape {entries.shape}"
            )
        object.__setattr__(self, "entries", _frozen_f64(entries))

    @property
    def m(self):
        return self.entries.shape[0]

    @property
    def k(self):
        return self.entries.shape[1]


@dataclass(frozen=True, eq=False)
class Marginals:
    """Row and column marginals of a joint table: output-class distribution
    (length m) and sensitive-group distribution (length k)."""

    pred: np.ndarray
    group: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pred", _frozen_f64(self.pred))
        object.__setattr__(self, "group", _frozen_f64(self.group))


@dataclass(frozen=True, eq=False)
class ConditionalTables:
    """One joint table per conditioning class, plus integer class counts.

    ``classes[c]`` is the label value of the c-th table, ``counts[c]`` the
    number of samples that produced it. Weights are the rationals
    counts/sum(counts); :meth:`weights` evaluates them in float64, where the
    total sum(counts)/sum(counts) is exactly 1.0.
    """

    classes: tuple
    tables: tuple
    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "classes", tuple(int(c) for c in self.classes))
        object.__setattr__(self, "tables", tuple(self.tables))
        object.__setattr__(self, "counts", counts)

    @property
    def weights(self):
        total = int(self.counts.sum())
        return self.counts / total

    def mixture(self):
        """The count-weighted mixture (1/N) * sum_c counts[c] * table_c,
        which reproduces the unconditional empirical joint exactly up to
        float rounding."""
        total = int(self.counts.sum())
        acc = np.zeros_like(self.tables[0].entries)
        for n_c, tab in zip(self.counts, self.tables):
            acc += int(n_c) * tab.entries
        return JointTable(acc / total)


def _check_prediction_rows(model_probs):
    probs = np.asarray(model_probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ValidationError(
            f"model probabilities must be an (N, m) array, got shape {probs.shape}"
        )
    n, m = probs.shape
    if n == 0:
        raise ValidationError("empty input: no samples")
    if m < 2:
        raise ValidationError(f"need at least 2 output classes, got m={m}")
    if np.any(probs < 0):
        i, j = np.argwhere(probs < 0)[0]
        raise ValidationError(
            f"negative probability at sample {i}, class {j}: {probs[i, j]!r}"
        )
    row_sums = probs.sum(axis=1)
    bad = np.abs(row_sums - 1.0) > ROW_SUM_TOL
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ValidationError(
            f"prediction row {i} sums to {row_sums[i]!r}, not 1 within {ROW_SUM_TOL}"
        )
    return probs


def _check_onehot_rows(sensitive_onehot, n_expected):
    onehot = np.asarray(sensitive_onehot, dtype=np.float64)
    if onehot.ndim != 2:
        raise ValidationError(
            f"sensitive one-hot must be an (N, k) array, got shape {onehot.shape}"
        )
    n, k = onehot.shape
    if n != n_expected:
        raise ValidationError(
            f"sample count mismatch: {n_expected} prediction rows vs {n} sensitive rows"
        )
    if k < 2:
        raise ValidationError(f"need at least 2 sensitive groups, got k={k}")
    if not np.all((onehot == 0.0) | (onehot == 1.0)):
        i, j = np.argwhere((onehot != 0.0) & (onehot != 1.0))[0]
        raise ValidationError(
            f"sensitive entry at row {i}, column {j} is {onehot[i, j]!r}, not 0 or 1"
        )
    row_sums = onehot.sum(axis=1)
    if not np.all(row_sums == 1.0):
        i = int(np.argmax(row_sums != 1.0))
        raise ValidationError(f"sensitive row {i} is not one-hot (sum {row_sums[i]!r})")
    return onehot


def empirical_joint(model_probs, sensitive_onehot):
    """Build the empirical joint table from soft predictions and one-hot groups.

    ``model_probs`` is (N, m) row-stochastic (to 1e-6), ``sensitive_onehot``
    is (N, k) exactly one-hot. The result is renormalized to total mass 1.
    """
    probs = _check_prediction_rows(model_probs)
    onehot = _check_onehot_rows(sensitive_onehot, probs.shape[0])
    n = probs.shape[0]
    entries = probs.T @ onehot
    entries /= entries.sum()
    table = JointTable(entries)
    msg = validate(table)
    if msg is not None:
        raise ValidationError(f"constructed table invalid: {msg}")
    return table


def marginals(table):
    """Row sums (output-class marginal) and column sums (group marginal)."""
    return Marginals(table.entries.sum(axis=1), table.entries.sum(axis=0))


def positive_marginals(table):
    """Like :func:`marginals`, but raise if any marginal entry is nonpositive
    (ratios of the form p(j,r)/p(j) or 1/sqrt(p(r)) would be undefined)."""
    marg = marginals(table)
    if np.any(marg.pred <= 0):
        j = int(np.argmax(marg.pred <= 0))
        raise DegenerateMarginalError(f"output class {j} has zero marginal probability")
    if np.any(marg.group <= 0):
        r = int(np.argmax(marg.group <= 0))
        raise DegenerateMarginalError(f"sensitive group {r} has zero marginal probability")
    return marg


def conditional_joints(model_probs, sensitive_onehot, labels, class_set):
    """Per-label-class empirical joints, with integer class counts as weights.

    ``class_set`` selects which label values get a table (ascending order in
    the result). Raises if a selected class has no samples, and raises
    :class:`DegenerateMarginalError` if some sensitive group has zero count
    inside a selected class (its conditional marginal would be zero).
    """
    probs = _check_prediction_rows(model_probs)
    onehot = _check_onehot_rows(sensitive_onehot, probs.shape[0])
    labels = np.asarray(labels)
    if labels.shape != (probs.shape[0],):
        raise ValidationError(
            f"labels must be a length-{probs.shape[0]} vector, got shape {labels.shape}"
        )
    classes = sorted({int(c) for c in class_set})
    if not classes:
        raise ValidationError("class_set is empty")
    tables = []
    counts = []
    for c in classes:
        sel = labels == c
        n_c = int(np.count_nonzero(sel))
        if n_c == 0:
            raise ValidationError(f"conditioning class {c} has no samples")
        group_counts = onehot[sel].sum(axis=0)
        if np.any(group_counts == 0):
            r = int(np.argmax(group_counts == 0))
            raise DegenerateMarginalError(
                f"sensitive group {r} has zero count within conditioning class {c}"
            )
        tables.append(empirical_joint(probs[sel], onehot[sel]))
        counts.append(n_c)
    return ConditionalTables(tuple(classes), tuple(tables), np.array(counts))


def _validate_joint(table):
    e = table.entries
    if table.m < 2:
        return f"table has m={table.m} output classes, need >= 2"
    if table.k < 2:
        return f"table has k={table.k} sensitive groups, need >= 2"
    if np.any(e < 0):
        j, r = np.argwhere(e < 0)[0]
        return f"negative entry at ({j}, {r}): {e[j, r]!r}"
    total = float(e.sum())
    if abs(total - 1.0) > SUM_TOL:
        return f"entries sum to {total!r}, not 1 within {SUM_TOL}"
    return None


def validate(table):
    """Return None if the table satisfies its invariants, else the first
    violation as a message naming the offending index and value."""
    if isinstance(table, JointTable):
        return _validate_joint(table)
    if isinstance(table, ConditionalTables):
        if not (len(table.classes) == len(table.tables) == len(table.counts)):
            return (
                f"length mismatch: {len(table.classes)} classes, "
                f"{len(table.tables)} tables, {len(table.counts)} counts"
            )
        if np.any(table.counts <= 0):
            c = int(np.argmax(table.counts <= 0))
            return f"class {table.classes[c]} has nonpositive count {int(table.counts[c])}"
        shape = table.tables[0].entries.shape
        for c, tab in zip(table.classes, table.tables):
            if tab.entries.shape != shape:
                return f"class {c} table has shape {tab.entries.shape}, expected {shape}"
            msg = _validate_joint(tab)
            if msg is not None:
                return f"class {c}: {msg}"
        return None
    raise TypeError(f"cannot validate object of type {type(table).__name__}")
