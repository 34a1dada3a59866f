"""Test-set evaluation, the naive randomized baseline, and parameter sweeps.

Evaluation is over hard argmax predictions (ties to the lower class index):
the violation metrics are defined on predicted labels, while training uses
soft probabilities. The naive baseline (replace the prediction with the
majority label with probability p) is derandomized: its joint tables are
exact convex mixtures and its gap metrics scale exactly by (1 - p), so the
curve carries no sampling noise.
"""

import csv
import time
from dataclasses import dataclass, replace

import numpy as np

from .data import split
from .divergences import (
    DivergenceReport,
    divergence_report,
    dp_conditional_linf,
    eo_conditional_linf,
)
from .errors import DegenerateMarginalError, ValidationError
from .model import LinearSoftmaxModel, predict_proba
from .solver import sgda_train
from .tables import JointTable, conditional_joints, empirical_joint

__all__ = [
    "FairnessReport",
    "SweepRow",
    "SweepResult",
    "evaluate",
    "hard_predictions",
    "majority_label",
    "naive_baseline_curve",
    "sweep",
]


@dataclass(frozen=True)
class FairnessReport:
    """Accuracy and violation metrics of one model on one dataset. The
    divergence block is computed on the hard-prediction joint table."""

    accuracy: float
    test_error: float
    dp_linf: float
    eodds_linf: float
    eopp_linf: float
    divergence: DivergenceReport
    n_test: int

    def to_dict(self):
        div = self.divergence
        return {
            "accuracy": self.accuracy,
            "test_error": self.test_error,
            "dp_linf": self.dp_linf,
            "eodds_linf": self.eodds_linf,
            "eopp_linf": self.eopp_linf,
            "n_test": self.n_test,
            "divergence": {
                "ermi": div.ermi,
                "shannon_mi": div.shannon_mi,
                "renyi_mi_2": div.renyi_mi_2,
                "renyi_correlation": div.renyi_correlation,
                "pearson": div.pearson,
                "l1_violation": div.l1_violation,
                "linf_violation": div.linf_violation,
                "dp_conditional_linf": div.dp_conditional_linf,
            },
        }


def hard_predictions(model, features):
    """Argmax class per row; ties resolve to the lower index."""
    return np.argmax(predict_proba(model, features), axis=1).astype(np.int64)


def majority_label(dataset):
    """Most frequent label (lowest index on ties)."""
    return int(np.argmax(np.bincount(dataset.labels, minlength=dataset.m)))


def _require_evaluable(model, dataset):
    if not np.all(dataset.observed):
        n_masked = int(np.count_nonzero(~dataset.observed))
        raise ValidationError(
            f"evaluation requires observed sensitive attributes; "
            f"{n_masked} masked rows present"
        )
    if model.m != dataset.m or model.d != dataset.d:
        raise ValidationError(
            f"model is ({model.m}, {model.d}), dataset needs "
            f"({dataset.m}, {dataset.d})"
        )
    group_counts = np.bincount(dataset.sensitive, minlength=dataset.k)
    if np.any(group_counts == 0):
        r = int(np.argmax(group_counts == 0))
        raise DegenerateMarginalError(
            f"sensitive group {r} is absent from the evaluation set"
        )


def _advantaged_for(notion, dataset):
    adv = notion.advantaged if notion.kind == "eopp" else (1,)
    for c in adv:
        if c >= dataset.m:
            raise ValidationError(f"advantaged class {c} out of range for m={dataset.m}")
    return adv


def _report_for_hard_table(table):
    """Divergence block of a hard-prediction table. Classes the model never
    predicts give all-zero rows; they contribute zero to every measure, so
    the table is restricted to its nonzero rows before the marginal-dividing
    measures. A constant predictor (one surviving row) is exactly
    independent of the groups."""
    keep = np.flatnonzero(table.entries.sum(axis=1) > 0.0)
    if keep.size < 2:
        return DivergenceReport(
            ermi=0.0, shannon_mi=0.0, renyi_mi_2=0.0, renyi_correlation=0.0,
            pearson=None, l1_violation=0.0, linf_violation=0.0,
            dp_conditional_linf=0.0,
        )
    if keep.size == table.entries.shape[0]:
        return divergence_report(table)
    rep = divergence_report(JointTable(table.entries[keep]))
    # Pearson correlation describes a genuinely binary predictor, not a
    # wider one that happens to use two classes.
    return replace(rep, pearson=None)


def evaluate(model, dataset, notion):
    """Hard-prediction fairness report of a model on a fully observed set.

    dp is measured on the (prediction, group) table over all rows; the odds
    metric averages per-class dp over the label classes present, weighted by
    class frequency; the opportunity metric does the same over the
    advantaged classes (the notion's set, or {1} for other notions).
    """
    _require_evaluable(model, dataset)
    pred = hard_predictions(model, dataset.features)
    accuracy = float(np.mean(pred == dataset.labels))
    hard = np.eye(dataset.m)[pred]
    onehot = np.eye(dataset.k)[dataset.sensitive]
    table = empirical_joint(hard, onehot)
    present = [int(c) for c in np.unique(dataset.labels)]
    by_class = conditional_joints(hard, onehot, dataset.labels, present)
    adv = _advantaged_for(notion, dataset)
    adv_tables = conditional_joints(hard, onehot, dataset.labels, adv)
    return FairnessReport(
        accuracy=accuracy,
        test_error=1.0 - accuracy,
        dp_linf=dp_conditional_linf(table),
        eodds_linf=eo_conditional_linf(by_class),
        eopp_linf=eo_conditional_linf(adv_tables),
        divergence=_report_for_hard_table(table),
        n_test=dataset.n,
    )


@dataclass(frozen=True)
class SweepRow:
    """One evaluated configuration. Sweep rows carry (lam, batch_size, seed);
    naive-baseline rows carry the replacement probability p instead. Rows
    whose training failed carry the message in ``error`` and no report."""

    lam: float | None
    batch_size: object
    seed: int | None
    p: float | None
    report: FairnessReport | None
    wall_time_s: float
    error: str | None = None


_CSV_COLUMNS = [
    "lambda", "batch_size", "seed", "accuracy", "dp_linf", "eodds_linf",
    "eopp_linf", "ermi", "shannon_mi", "renyi_corr", "wall_time_s",
]


@dataclass(frozen=True)
class SweepResult:
    rows: tuple

    def to_csv(self, path):
        def num(v):
            return "" if v is None else repr(float(v))

        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(_CSV_COLUMNS)
            for row in self.rows:
                rep = row.report
                if row.batch_size is None:
                    batch = ""
                elif row.batch_size == "full":
                    batch = "full"
                else:
                    batch = str(int(row.batch_size))
                record = [
                    num(row.lam),
                    batch,
                    "" if row.seed is None else str(int(row.seed)),
                ]
                if rep is None:
                    record += [""] * 7
                else:
                    record += [
                        num(rep.accuracy),
                        num(rep.dp_linf),
                        num(rep.eodds_linf),
                        num(rep.eopp_linf),
                        num(rep.divergence.ermi),
                        num(rep.divergence.shannon_mi),
                        num(rep.divergence.renyi_correlation),
                    ]
                record.append(num(row.wall_time_s))
                writer.writerow(record)


def _mixture_report(base, maj_tab, accuracy_pair, p, n_test):
    """Report of the p-mixture. The gap metrics of the mixture are exactly
    (1 - p) times the base metrics: the constant predictor's conditional and
    unconditional prediction distributions coincide, so its violation terms
    vanish identically and the max/weighted-max expressions are linear on
    [0, 1]. The divergence block is evaluated numerically on the mixed
    table."""
    base_dp, base_eodds, base_eopp, base_table = base
    acc0, acc_maj = accuracy_pair
    keep = 1.0 - p
    mixed = JointTable(keep * base_table.entries + p * maj_tab)
    accuracy = keep * acc0 + p * acc_maj
    return FairnessReport(
        accuracy=accuracy,
        test_error=1.0 - accuracy,
        dp_linf=keep * base_dp,
        eodds_linf=keep * base_eodds,
        eopp_linf=keep * base_eopp,
        divergence=_report_for_hard_table(mixed),
        n_test=n_test,
    )


def naive_baseline_curve(model, dataset, notion, grid):
    """Reports of the randomized baseline that replaces the model's
    prediction with the majority label with probability p, for each p in
    the grid. Derandomized: each report is computed from exact mixture
    tables, so p = 0 reproduces the model's own report bitwise and p = 1 has
    exactly zero violations."""
    _require_evaluable(model, dataset)
    grid = [float(p) for p in grid]
    for p in grid:
        if not 0.0 <= p <= 1.0:
            raise ValidationError(f"replacement probability {p} outside [0, 1]")
    maj = majority_label(dataset)
    pred = hard_predictions(model, dataset.features)
    hard = np.eye(dataset.m)[pred]
    onehot = np.eye(dataset.k)[dataset.sensitive]
    table = empirical_joint(hard, onehot)
    present = [int(c) for c in np.unique(dataset.labels)]
    by_class = conditional_joints(hard, onehot, dataset.labels, present)
    adv = _advantaged_for(notion, dataset)
    adv_tables = conditional_joints(hard, onehot, dataset.labels, adv)
    base = (
        dp_conditional_linf(table),
        eo_conditional_linf(by_class),
        eo_conditional_linf(adv_tables),
        table,
    )
    # Joint table of the constant majority predictor: row maj holds the
    # group marginal.
    maj_tab = np.zeros_like(table.entries)
    maj_tab[maj] = table.entries.sum(axis=0)
    acc0 = float(np.mean(pred == dataset.labels))
    acc_maj = float(np.mean(dataset.labels == maj))
    rows = []
    for p in grid:
        report = _mixture_report(base, maj_tab, (acc0, acc_maj), p, dataset.n)
        rows.append(
            SweepRow(
                lam=None, batch_size=None, seed=None, p=p,
                report=report, wall_time_s=0.0,
            )
        )
    return SweepResult(tuple(rows))


def sweep(
    dataset,
    notion,
    lambdas,
    batch_sizes,
    seeds,
    config,
    test_fraction=0.2,
    split_seed=0,
):
    """Train and evaluate one model per (lambda, batch size, seed) triple on
    a shared train/test split; rows are ordered by that triple. Failures of
    individual rows (degenerate marginals and the like) are recorded on the
    row rather than aborting the sweep."""
    train, test = split(dataset, test_fraction, split_seed)
    rows = []
    for lam in lambdas:
        for batch in batch_sizes:
            for seed in seeds:
                cfg = replace(
                    config, lam=float(lam), batch_size=batch, seed=int(seed)
                )
                start = time.perf_counter()
                report = None
                error = None
                try:
                    model0 = LinearSoftmaxModel.zeros(train.m, train.d)
                    model, _, _ = sgda_train(train, model0, notion, cfg)
                    report = evaluate(model, test, notion)
                except (ValidationError, DegenerateMarginalError) as exc:
                    error = str(exc)
                rows.append(
                    SweepRow(
                        lam=float(lam),
                        batch_size=batch,
                        seed=int(seed),
                        p=None,
                        report=report,
                        wall_time_s=time.perf_counter() - start,
                        error=error,
                    )
                )
    return SweepResult(tuple(rows))
