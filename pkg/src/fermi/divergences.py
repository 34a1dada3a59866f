"""Dependence measures between predictions and sensitive groups.

All functions consume the empirical joint table of :mod:`fermi.tables`. The
headline quantity is the exponential Renyi mutual information

    ermi = sum_{j,r} p(j,r)^2 / (p(j) p(r)) - 1,

the chi-squared divergence between the joint and the product of its marginals:
nonnegative, and zero exactly at independence. The other measures are ordered
around it by a chain of inequalities (all in nats, natural logs):

    shannon_mi <= renyi_mi_2 = ln(1 + ermi) <= ermi
    pearson^2 <= lambda_2(kernel) <= ermi        (lambda_2 = ermi when k = 2)
    linf <= l1 <= sqrt(ermi)
    dp_conditional_linf <= sqrt(ermi) / min_r p(r)

so driving ermi down provably drives every listed violation down. The
eigenvalue lambda_2 is the second-largest eigenvalue of the correlation
kernel below; ``renyi_correlation`` reports sqrt(lambda_2).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMarginalError, ValidationError
from .tables import ConditionalTables, marginals, positive_marginals

__all__ = [
    "GROUP_CAP",
    "DivergenceReport",
    "CorrelationKernel",
    "ermi",
    "ermi_conditional",
    "shannon_mi",
    "renyi_mi_2",
    "correlation_kernel",
    "renyi_correlation",
    "pearson",
    "lq_violation",
    "dp_conditional_linf",
    "eo_conditional_linf",
    "divergence_report",
]

# Spectral measures refuse tables wider than this many sensitive groups.
GROUP_CAP = 4096


@dataclass(frozen=True)
class DivergenceReport:
    """All dependence measures of one table. ``pearson`` is None unless the
    table is 2 x 2 (it is defined for {0,1}-encoded pairs only)."""

    ermi: float
    shannon_mi: float
    renyi_mi_2: float
    renyi_correlation: float
    pearson: float | None
    l1_violation: float
    linf_violation: float
    dp_conditional_linf: float


@dataclass(frozen=True, eq=False)
class CorrelationKernel:
    """Symmetric k x k kernel M^T M with M[y, r] = p(y, r)/sqrt(p(y) p(r)).

    Positive semidefinite; its largest eigenvalue is exactly 1 (eigenvector
    sqrt of the group marginal), its trace is 1 + ermi, and its second
    eigenvalue is the squared Renyi correlation.
    """

    entries: np.ndarray

    def eigenvalues(self):
        """Eigenvalues in descending order (symmetric solver, machine
        precision)."""
        return np.linalg.eigvalsh(self.entries)[::-1]


def ermi(table):
    """Chi-squared divergence of the table from the product of its marginals.

    Nonnegative up to rounding (>= -1e-12) and zero iff the table factors.
    """
    marg = positive_marginals(table)
    e = table.entries
    return float(np.sum(e * e / np.outer(marg.pred, marg.group))) - 1.0


def ermi_conditional(tables):
    """Weighted average of per-class ermi values, weights = class frequencies
    renormalized over the retained classes."""
    if not isinstance(tables, ConditionalTables):
        raise ValidationError("ermi_conditional expects ConditionalTables")
    weights = tables.weights
    return float(sum(w * ermi(t) for w, t in zip(weights, tables.tables)))


def shannon_mi(table):
    """Mutual information sum p(j,r) ln(p(j,r)/(p(j)p(r))) in nats, with the
    0 ln 0 cells contributing zero."""
    marg = positive_marginals(table)
    e = table.entries
    prod = np.outer(marg.pred, marg.group)
    mask = e > 0
    return float(np.sum(e[mask] * np.log(e[mask] / prod[mask])))


def renyi_mi_2(table):
    """Renyi mutual information of order 2: ln(1 + ermi)."""
    return float(np.log1p(ermi(table)))


def correlation_kernel(table):
    """The kernel defined on :class:`CorrelationKernel`, symmetrized to kill
    matrix-product rounding asymmetry."""
    if table.k > GROUP_CAP:
        raise ValidationError(
            f"table has k={table.k} sensitive groups; spectral measures cap at {GROUP_CAP}"
        )
    marg = positive_marginals(table)
    m = table.entries / np.sqrt(np.outer(marg.pred, marg.group))
    kern = m.T @ m
    kern = 0.5 * (kern + kern.T)
    return CorrelationKernel(_freeze(kern))


def _freeze(a):
    a = np.asarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def renyi_correlation(table):
    """Square root of the kernel's second eigenvalue, clipped to [0, 1]."""
    lam2 = correlation_kernel(table).eigenvalues()[1]
    return float(min(1.0, math.sqrt(max(lam2, 0.0))))


def pearson(table):
    """Pearson correlation of the {0,1}-encoded pair; 2 x 2 tables only."""
    if table.entries.shape != (2, 2):
        raise ValidationError(
            f"pearson requires a 2x2 table, got {table.entries.shape}"
        )
    marg = positive_marginals(table)
    p_a, p_b = marg.pred[1], marg.group[1]
    cov = table.entries[1, 1] - p_a * p_b
    return float(cov / math.sqrt(p_a * (1 - p_a) * p_b * (1 - p_b)))


def lq_violation(table, q):
    """q-norm (q >= 1, or inf) of the cellwise deviations |p(j,r) - p(j)p(r)|."""
    marg = marginals(table)
    dev = np.abs(table.entries - np.outer(marg.pred, marg.group))
    if q == math.inf:
        return float(dev.max())
    q = float(q)
    if not q >= 1.0:
        raise ValidationError(f"q must be >= 1 or inf, got {q}")
    return float(np.sum(dev**q) ** (1.0 / q))


def dp_conditional_linf(table):
    """Demographic-parity violation max_{j,r} |p(j | r) - p(j)|."""
    marg = marginals(table)
    if np.any(marg.group <= 0):
        r = int(np.argmax(marg.group <= 0))
        raise DegenerateMarginalError(
            f"sensitive group {r} has zero marginal probability"
        )
    cond = table.entries / marg.group[None, :]
    return float(np.abs(cond - marg.pred[:, None]).max())


def eo_conditional_linf(tables):
    """Class-frequency-weighted average of per-class demographic-parity
    violations: the conditional (odds-style) violation over the retained
    classes."""
    if not isinstance(tables, ConditionalTables):
        raise ValidationError("eo_conditional_linf expects ConditionalTables")
    weights = tables.weights
    return float(
        sum(w * dp_conditional_linf(t) for w, t in zip(weights, tables.tables))
    )


def divergence_report(table):
    """Evaluate every measure on one table."""
    value = ermi(table)
    pear = pearson(table) if table.entries.shape == (2, 2) else None
    return DivergenceReport(
        ermi=value,
        shannon_mi=shannon_mi(table),
        renyi_mi_2=float(np.log1p(value)),
        renyi_correlation=renyi_correlation(table),
        pearson=pear,
        l1_violation=lq_violation(table, 1),
        linf_violation=lq_violation(table, math.inf),
        dp_conditional_linf=dp_conditional_linf(table),
    )
