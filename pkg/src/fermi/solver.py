"""Fair training by stochastic gradient descent-ascent.

The training objective is

    min_theta  CE(theta) + lam * R(theta)

where R is the exponential Renyi mutual information between the soft
predictions and the sensitive groups (conditioned on the label for the
equalized-odds / equal-opportunity notions). R admits an exact variational
form: for each conditioning class c,

    R_c(theta) = max_V  -Tr(V diag(p_hat) V^T) + 2 Tr(V J_hat S_c) - 1,

with p_hat the soft output marginal within class c, J_hat the scaled joint
(both functions of theta), and S_c = diag(1/sqrt(group frequency | c)) a
constant of the training set. The maximizer has the closed form
:func:`critic_optimum` and the maximum equals the ermi of the class table.

Crucially, both the value and its gradients decompose into per-sample terms
(:func:`surrogate_value` and friends), so minibatches give unbiased
stochastic gradients for the full min-max objective. The solver therefore
runs simultaneous descent (model) / ascent (one critic matrix per
conditioning class) on minibatches; see :func:`sgda_train`. The inner loop
lives in :mod:`fermi.kernels` (compiled when available).
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .divergences import ermi
from .errors import DegenerateMarginalError, ValidationError
from .model import (
    PROB_FLOOR,
    ce_loss_and_grad,
    jacobian,
    predict_proba,
    to_param_vector,
)
from .tables import empirical_joint, marginals, positive_marginals

__all__ = [
    "DEGENERATE_MARGINAL_FLOOR",
    "FairnessNotion",
    "demographic_parity",
    "equalized_odds",
    "equal_opportunity",
    "SolverConfig",
    "CriticBlock",
    "TrainTrace",
    "surrogate_value",
    "surrogate_grad_critic",
    "surrogate_grad_params",
    "critic_optimum",
    "variational_value",
    "project_frobenius",
    "conditioning_blocks",
    "sgda_train",
    "phi_grad_norm",
    "unbiasedness_audit",
    "AuditResult",
]

# A soft output marginal below this is reported as degenerate by diagnostics.
DEGENERATE_MARGINAL_FLOOR = 1e-12

_KINDS = ("dp", "eodds", "eopp")


@dataclass(frozen=True)
class FairnessNotion:
    """Which independence is penalized: predictions vs groups marginally
    ("dp"), conditioned on every label class ("eodds"), or conditioned on the
    advantaged label classes only ("eopp", default advantaged set {1})."""

    kind: str
    advantaged: tuple = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValidationError(f"unknown fairness notion {self.kind!r}; use {_KINDS}")
        adv = tuple(int(c) for c in self.advantaged)
        if self.kind != "eopp" and adv:
            raise ValidationError(
                f"advantaged classes only apply to 'eopp', not {self.kind!r}"
            )
        if self.kind == "eopp" and not adv:
            adv = (1,)
        if any(c < 0 for c in adv):
            raise ValidationError(f"advantaged classes must be >= 0, got {adv}")
        if len(set(adv)) != len(adv):
            raise ValidationError(f"duplicate advantaged classes in {adv}")
        object.__setattr__(self, "advantaged", tuple(sorted(adv)))


def demographic_parity():
    return FairnessNotion("dp")


def equalized_odds():
    return FairnessNotion("eodds")


def equal_opportunity(advantaged=(1,)):
    return FairnessNotion("eopp", tuple(advantaged))


@dataclass(frozen=True)
class SolverConfig:
    """Training knobs. ``batch_size`` is a positive int or "full".

    ``one_pass`` switches to a single without-replacement epoch (a seeded
    shuffle consumed once, ceil(N/batch) iterations; ``iterations`` is
    ignored). ``diagnostic_every`` spaces the full-batch trace probes
    (0 disables them). ``min_class_prob`` is the output-marginal floor used
    in the projection radius 2/(min_class_prob * sqrt(min group freq)).
    """

    lam: float = 0.0
    eta_theta: float = 0.005
    eta_w: float = 0.05
    batch_size: object = 64
    iterations: int = 2000
    seed: int = 0
    project: bool = False
    min_class_prob: float = 1e-3
    one_pass: bool = False
    diagnostic_every: int = 1000

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValidationError(f"lam must be >= 0, got {self.lam}")
        if not self.eta_theta > 0:
            raise ValidationError(f"eta_theta must be > 0, got {self.eta_theta}")
        if not self.eta_w > 0:
            raise ValidationError(f"eta_w must be > 0, got {self.eta_w}")
        if self.batch_size != "full":
            if not isinstance(self.batch_size, (int, np.integer)) or isinstance(
                self.batch_size, bool
            ):
                raise ValidationError(
                    f"batch_size must be a positive int or 'full', got {self.batch_size!r}"
                )
            if self.batch_size < 1:
                raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.iterations < 1:
            raise ValidationError(f"iterations must be >= 1, got {self.iterations}")
        if self.seed < 0:
            raise ValidationError(f"seed must be >= 0, got {self.seed}")
        if not self.min_class_prob > 0:
            raise ValidationError(
                f"min_class_prob must be > 0, got {self.min_class_prob}"
            )
        if self.diagnostic_every < 0:
            raise ValidationError(
                f"diagnostic_every must be >= 0, got {self.diagnostic_every}"
            )


@dataclass
class CriticBlock:
    """Ascent-player state: one k x m matrix per conditioning class, plus the
    constant per-class scale vectors 1/sqrt(group frequency) and observed
    counts. ``classes`` is ``(None,)`` for the unconditional (dp) notion."""

    classes: tuple
    mats: np.ndarray  # (C, k, m)
    scales: np.ndarray  # (C, k)
    counts: np.ndarray  # (C,) observed samples per class


@dataclass
class TrainTrace:
    """Per-iteration records (index t holds iteration t; index 0 is the
    pre-training state, where minibatch fields are NaN). ``ermi_fullbatch``
    and ``phi_grad_norm`` are filled at probe iterations only; NaN elsewhere
    (written as empty CSV fields)."""

    iterations: np.ndarray
    loss: np.ndarray
    psi_avg: np.ndarray
    ermi_fullbatch: np.ndarray
    phi_grad_norm: np.ndarray
    probe_iterations: tuple
    degenerate_probes: tuple
    fairness_skipped_batches: int
    snapshot_iteration: int
    snapshot_params: np.ndarray
    config: SolverConfig
    notion: FairnessNotion

    def to_csv(self, path):
        def fmt(v):
            return repr(float(v)) if math.isfinite(v) else ""

        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["iteration", "loss", "psi_avg", "ermi_fullbatch", "phi_grad_norm"]
            )
            for t in range(self.iterations.shape[0]):
                writer.writerow(
                    [
                        str(int(self.iterations[t])),
                        fmt(self.loss[t]),
                        fmt(self.psi_avg[t]),
                        fmt(self.ermi_fullbatch[t]),
                        fmt(self.phi_grad_norm[t]),
                    ]
                )


# ---------------------------------------------------------------------------
# Per-sample estimator of the variational penalty and its gradients.
# ---------------------------------------------------------------------------


def _g_vector(group, mat, scale):
    # dpsi/df: minus the squared column norms, plus the observed-group row.
    g = -(mat * mat).sum(axis=0)
    g += (2.0 * scale[group]) * mat[group]
    return g


def surrogate_value(probs, group, mat, scale):
    """Per-sample unbiased estimate of the variational penalty at critic
    ``mat``: f.g(mat) - 1. Averaged over a dataset it equals the variational
    value at ``mat`` of that dataset's table; maximized over ``mat`` it
    yields the table's ermi."""
    probs = np.asarray(probs, dtype=np.float64)
    return float(probs @ _g_vector(int(group), mat, scale) - 1.0)


def surrogate_grad_critic(probs, group, mat, scale):
    """Gradient of :func:`surrogate_value` in the critic matrix:
    -2 mat diag(f) + 2 scale[r] e_r f^T."""
    probs = np.asarray(probs, dtype=np.float64)
    out = -2.0 * mat * probs[None, :]
    out[int(group)] += (2.0 * scale[int(group)]) * probs
    return out


def surrogate_grad_params(jac, probs, group, mat, scale):
    """Gradient of :func:`surrogate_value` in the model parameters, via the
    output Jacobian: jac^T g."""
    return jac.T @ _g_vector(int(group), mat, scale)


# ---------------------------------------------------------------------------
# Closed-form ascent optimum and the variational objective on tables.
# ---------------------------------------------------------------------------


def critic_optimum(table):
    """The exact maximizer of the variational objective for one table:
    entry (r, j) = p(j, r) / (sqrt(p(r)) p(j))."""
    marg = positive_marginals(table)
    return (table.entries / marg.pred[:, None]).T / np.sqrt(marg.group)[:, None]


def variational_value(mat, table):
    """The variational objective at critic ``mat`` for a table:
    -sum_j p(j) |col_j|^2 + 2 sum_{j,r} mat[r,j] p(j,r)/sqrt(p(r)) - 1.
    Equals ermi(table) at :func:`critic_optimum`; -1 at mat = 0."""
    marg = positive_marginals(table)
    quad = float(marg.pred @ (mat * mat).sum(axis=0))
    cross = float(np.sum(mat * (table.entries / np.sqrt(marg.group)[None, :]).T))
    return -quad + 2.0 * cross - 1.0


def project_frobenius(mat, radius):
    """Project onto the Frobenius ball of the given radius. Returns the
    input object itself when already inside, so the map is idempotent."""
    if not radius > 0:
        raise ValidationError(f"projection radius must be > 0, got {radius}")
    nrm = float(np.sqrt(np.sum(mat * mat)))
    if nrm <= radius:
        return mat
    out = mat * (radius / nrm)
    # One rescale can land a few ulps outside; tighten until inside so a
    # second projection is exactly the identity.
    nrm = float(np.sqrt(np.sum(out * out)))
    while nrm > radius:
        out *= radius / nrm
        nrm = float(np.sqrt(np.sum(out * out)))
    return out


# ---------------------------------------------------------------------------
# Conditioning structure shared by training, probes, and audits.
# ---------------------------------------------------------------------------


@dataclass
class _Conditioning:
    classes: tuple  # (None,) for dp, else conditioning label values
    fclass: np.ndarray  # (N,) block index per sample, -1 = no fairness term
    scales: np.ndarray  # (C, k)
    counts: np.ndarray  # (C,) observed rows per block
    rows: tuple  # per block, indices of observed rows
    n_observed: int  # all observed rows, the fairness-term denominator


def _conditioning(dataset, notion):
    s = dataset.sensitive
    observed = s >= 0
    if not np.any(observed):
        raise DegenerateMarginalError(
            "no observed sensitive attributes; the fairness term is undefined"
        )
    n, k = dataset.n, dataset.k
    if notion.kind == "dp":
        classes = (None,)
        fclass = np.zeros(n, dtype=np.int64)
    else:
        if notion.kind == "eodds":
            class_values = [int(c) for c in np.unique(dataset.labels)]
        else:
            class_values = list(notion.advantaged)
            for c in class_values:
                if c >= dataset.m:
                    raise ValidationError(
                        f"advantaged class {c} out of range for m={dataset.m}"
                    )
                if not np.any(dataset.labels == c):
                    raise ValidationError(f"advantaged class {c} has no samples")
        classes = tuple(class_values)
        lookup = np.full(dataset.m, -1, dtype=np.int64)
        for ci, c in enumerate(classes):
            lookup[c] = ci
        fclass = lookup[dataset.labels]
    n_blocks = len(classes)
    scales = np.zeros((n_blocks, k))
    counts = np.zeros(n_blocks, dtype=np.int64)
    rows = []
    for ci in range(n_blocks):
        sel = observed & (fclass == ci)
        block_rows = np.flatnonzero(sel)
        if block_rows.size == 0:
            raise DegenerateMarginalError(
                f"conditioning class {classes[ci]} has no observed sensitive attributes"
            )
        group_counts = np.bincount(s[block_rows], minlength=k)
        if np.any(group_counts == 0):
            r = int(np.argmax(group_counts == 0))
            where = "" if classes[ci] is None else f" within class {classes[ci]}"
            raise DegenerateMarginalError(
                f"sensitive group {r} has zero observed count{where}"
            )
        counts[ci] = block_rows.size
        scales[ci] = 1.0 / np.sqrt(group_counts / block_rows.size)
        rows.append(block_rows)
    # The stochastic estimator averages over every observed sample in a
    # batch (samples outside the tracked classes contribute zero), so the
    # full-batch denominator is the total observed count, not counts.sum().
    # For dp and eodds the two coincide; for eopp they differ.
    n_observed = int(np.count_nonzero(observed))
    return _Conditioning(classes, fclass, scales, counts, tuple(rows), n_observed)


def conditioning_blocks(dataset, notion):
    """Zero-initialized critic blocks for a dataset and notion (the
    per-class scale vectors and observed counts are computed here)."""
    cond = _conditioning(dataset, notion)
    n_blocks = len(cond.classes)
    return CriticBlock(
        cond.classes,
        np.zeros((n_blocks, dataset.k, dataset.m)),
        cond.scales,
        cond.counts,
    )


def _block_tables(dataset, cond, probs):
    """Per-block empirical joint tables of the current soft predictions over
    the observed rows."""
    eye = np.eye(dataset.k)
    tables = []
    for block_rows in cond.rows:
        onehot = eye[dataset.sensitive[block_rows]]
        tables.append(empirical_joint(probs[block_rows], onehot))
    return tables


def _full_objective_grad(dataset, probs, cond, lam, block_mats):
    """Full-batch gradient of CE + lam * (fairness term) at the given critic
    matrices, as (grad_weights, grad_bias). ``cond``/``block_mats`` may be
    None when lam == 0."""
    n = dataset.n
    h = probs.copy()
    h[np.arange(n), dataset.labels] -= 1.0
    gw = h.T @ dataset.features / n
    gb = h.sum(axis=0) / n
    if lam != 0.0:
        nobs = cond.n_observed
        gwf = np.zeros_like(gw)
        gbf = np.zeros_like(gb)
        for ci, block_rows in enumerate(cond.rows):
            mat = block_mats[ci]
            codes = dataset.sensitive[block_rows]
            f_c = probs[block_rows]
            cn = (mat * mat).sum(axis=0)
            sc = cond.scales[ci][codes]
            g = -cn[None, :] + (2.0 * sc)[:, None] * mat[codes]
            fg = np.einsum("nm,nm->n", f_c, g)
            hpsi = f_c * (g - fg[:, None])
            gwf += hpsi.T @ dataset.features[block_rows]
            gbf += hpsi.sum(axis=0)
        gw = gw + (lam / nobs) * gwf
        gb = gb + (lam / nobs) * gbf
    return gw, gb


def _probe(model, dataset, cond, lam):
    """Full-batch diagnostics at the current parameters: the fairness value
    (count-weighted ermi over conditioning blocks), the norm of the
    penalized-objective gradient (critics at their closed-form optimum,
    which is exactly the envelope gradient), and a degeneracy flag raised
    when some soft output marginal falls below 1e-12 in a block."""
    probs = predict_proba(model, dataset.features)
    if lam == 0.0:
        gw, gb = _full_objective_grad(dataset, probs, None, 0.0, None)
        phi = float(np.sqrt(np.sum(gw * gw) + np.sum(gb * gb)))
        return math.nan, phi, False
    tables = _block_tables(dataset, cond, probs)
    nobs = cond.n_observed
    value = 0.0
    mats = []
    for ci, table in enumerate(tables):
        marg = marginals(table)
        if marg.pred.min() < DEGENERATE_MARGINAL_FLOOR:
            return math.nan, math.nan, True
        value += (cond.counts[ci] / nobs) * ermi(table)
        mats.append(critic_optimum(table))
    gw, gb = _full_objective_grad(dataset, probs, cond, lam, mats)
    phi = float(np.sqrt(np.sum(gw * gw) + np.sum(gb * gb)))
    return float(value), phi, False


def phi_grad_norm(model, dataset, notion, lam):
    """Norm of the full-batch gradient of CE + lam * fairness at the ascent
    optimum (the envelope/stationarity measure). Raises
    :class:`DegenerateMarginalError` if a soft output marginal within some
    conditioning block is below 1e-12."""
    if lam < 0:
        raise ValidationError(f"lam must be >= 0, got {lam}")
    cond = _conditioning(dataset, notion) if lam != 0.0 else None
    value, phi, degenerate = _probe(model, dataset, cond, float(lam))
    if degenerate:
        raise DegenerateMarginalError(
            f"a soft output marginal is below {DEGENERATE_MARGINAL_FLOOR}; "
            "the fairness envelope is ill-conditioned at these parameters"
        )
    return phi


# ---------------------------------------------------------------------------
# Training.
# ---------------------------------------------------------------------------


def _plan_batches(n, config, rng):
    """Draw the full batch plan (sizes per iteration, flat index array) from
    the run's generator. With replacement by default; ``one_pass`` consumes a
    single shuffled epoch; "full" uses every sample each iteration (no
    randomness consumed)."""
    if config.one_pass:
        b = n if config.batch_size == "full" else min(int(config.batch_size), n)
        n_iter = -(-n // b)
        sizes = np.full(n_iter, b, dtype=np.int64)
        sizes[-1] = n - b * (n_iter - 1)
        flat = rng.permutation(n).astype(np.int64)
        return sizes, flat
    t = config.iterations
    if config.batch_size == "full":
        sizes = np.full(t, n, dtype=np.int64)
        flat = np.tile(np.arange(n, dtype=np.int64), t)
        return sizes, flat
    b = int(config.batch_size)
    sizes = np.full(t, b, dtype=np.int64)
    flat = rng.integers(0, n, size=t * b, dtype=np.int64)
    return sizes, flat


def sgda_train(dataset, model_init, notion, config):
    """Run simultaneous minibatch descent/ascent.

    Returns ``(model, critic, trace)``. The model starts from a copy of
    ``model_init``; critics start at zero and the final ascent iterate comes
    back as a :class:`CriticBlock` (``None`` when ``lam == 0``, since no
    conditioning is built). All randomness comes from a Philox stream keyed
    by ``config.seed``; draw order: snapshot iteration t_hat, then the batch
    plan. The returned model is the final iterate; the parameters after
    iteration t_hat are stored in ``trace.snapshot_params`` (convergence
    analyses of this scheme concern a uniformly random iterate, so the
    snapshot preserves one for inspection).
    """
    if model_init.m != dataset.m or model_init.d != dataset.d:
        raise ValidationError(
            f"model is ({model_init.m}, {model_init.d}), dataset needs "
            f"({dataset.m}, {dataset.d})"
        )
    model = model_init.copy()
    lam = float(config.lam)
    n = dataset.n

    if lam != 0.0:
        cond = _conditioning(dataset, notion)
        # The kernel treats a sample as fairness-relevant only when its
        # sensitive attribute is observed AND fclass >= 0.
        fclass = cond.fclass
        scales = np.ascontiguousarray(cond.scales)
        n_blocks = len(cond.classes)
    else:
        cond = None
        fclass = np.full(n, -1, dtype=np.int64)
        scales = np.zeros((1, dataset.k))
        n_blocks = 1
    critic = np.zeros((n_blocks, dataset.k, dataset.m))

    radius = 0.0
    if config.project and lam != 0.0:
        p_min = float((1.0 / (scales * scales)).min())
        radius = 2.0 / (config.min_class_prob * math.sqrt(p_min))

    rng = np.random.Generator(np.random.Philox(config.seed))
    if config.one_pass:
        b = n if config.batch_size == "full" else min(int(config.batch_size), n)
        total_iters = -(-n // b)
    else:
        total_iters = config.iterations
    t_hat = int(rng.integers(1, total_iters + 1))
    sizes, flat = _plan_batches(n, config, rng)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    loss_arr = np.full(total_iters + 1, np.nan)
    psi_arr = np.full(total_iters + 1, np.nan)
    ermi_arr = np.full(total_iters + 1, np.nan)
    phi_arr = np.full(total_iters + 1, np.nan)

    if config.diagnostic_every > 0:
        probe_set = set(range(0, total_iters + 1, config.diagnostic_every))
        probe_set.add(total_iters)
    else:
        probe_set = set()
    boundaries = sorted(probe_set | {0, total_iters, t_hat})
    if boundaries[0] != 0:
        boundaries.insert(0, 0)

    degenerate = []
    probed = []
    skipped = 0
    snapshot = to_param_vector(model)  # overwritten at t_hat (t_hat >= 1)

    def run_probe(t):
        value, phi, degen = _probe(model, dataset, cond, lam)
        ermi_arr[t] = value
        phi_arr[t] = phi
        probed.append(t)
        if degen:
            degenerate.append(t)

    if 0 in probe_set:
        run_probe(0)

    x = dataset.features
    labels = dataset.labels
    s_codes = dataset.sensitive
    for lo, hi in zip(boundaries[:-1], boundaries[1:]):
        skipped += kernels.run_segment(
            x, labels, fclass, s_codes, model.weights, model.bias, critic,
            scales, flat[offsets[lo]:offsets[hi]], sizes[lo:hi],
            config.eta_theta, config.eta_w, lam, radius,
            loss_arr[lo + 1:hi + 1], psi_arr[lo + 1:hi + 1],
        )
        if hi == t_hat:
            snapshot = to_param_vector(model)
        if hi in probe_set and hi != 0:
            run_probe(hi)

    critic_block = None
    if lam != 0.0:
        critic_block = CriticBlock(cond.classes, critic, scales, cond.counts)
    trace = TrainTrace(
        iterations=np.arange(total_iters + 1, dtype=np.int64),
        loss=loss_arr,
        psi_avg=psi_arr,
        ermi_fullbatch=ermi_arr,
        phi_grad_norm=phi_arr,
        probe_iterations=tuple(probed),
        degenerate_probes=tuple(degenerate),
        fairness_skipped_batches=int(skipped),
        snapshot_iteration=t_hat,
        snapshot_params=snapshot,
        config=config,
        notion=notion,
    )
    return model, critic_block, trace


# ---------------------------------------------------------------------------
# Unbiasedness audit: per-sample enumeration vs table formulas.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditResult:
    """Relative deviations between the enumerated mean of the per-sample
    estimator and the full-batch (table-formula) quantity, for the objective
    value, the parameter gradient, and the critic gradient."""

    value_dev: float
    params_dev: float
    critic_dev: float

    @property
    def max_dev(self):
        return max(self.value_dev, self.params_dev, self.critic_dev)


def _rel_dev(sample_side, full_side):
    diff = np.max(np.abs(np.asarray(sample_side) - np.asarray(full_side)))
    scale = max(1.0, float(np.max(np.abs(full_side))))
    return float(diff / scale)


def unbiasedness_audit(dataset, model, notion, critic):
    """Exactly enumerate the per-sample estimator over the dataset (loss over
    every row, fairness over the observed rows) and compare against the
    full-batch quantities computed from tables/vectorized formulas. The two
    routes are algebraically identical, so deviations are pure accumulated
    rounding; anything above ~1e-10 relative indicates a broken estimator.
    """
    cond = _conditioning(dataset, notion)
    mats = critic.mats
    if mats.shape != (len(cond.classes), dataset.k, dataset.m):
        raise ValidationError(
            f"critic mats have shape {mats.shape}, expected "
            f"{(len(cond.classes), dataset.k, dataset.m)}"
        )
    n = dataset.n
    nobs = cond.n_observed
    observed = dataset.sensitive >= 0

    # Per-sample route: explicit loops through the sample-level functions.
    loss_sum = 0.0
    psi_sum = 0.0
    gtheta = np.zeros(model.n_params)
    gcritic = np.zeros_like(mats)
    for i in range(n):
        loss_i, grad_i = ce_loss_and_grad(model, dataset.features[i], dataset.labels[i])
        loss_sum += loss_i
        gtheta += grad_i / n
        ci = cond.fclass[i]
        if observed[i] and ci >= 0:
            f_i = predict_proba(model, dataset.features[i])
            r_i = int(dataset.sensitive[i])
            psi_sum += surrogate_value(f_i, r_i, mats[ci], cond.scales[ci])
            jac = jacobian(model, dataset.features[i])
            gtheta += surrogate_grad_params(jac, f_i, r_i, mats[ci], cond.scales[ci]) / nobs
            gcritic[ci] += surrogate_grad_critic(f_i, r_i, mats[ci], cond.scales[ci]) / nobs
    value_ps = loss_sum / n + psi_sum / nobs

    # Full-batch route: vectorized loss, table formulas for the fairness term.
    probs = predict_proba(model, dataset.features)
    picked = probs[np.arange(n), dataset.labels]
    loss_fb = float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())
    tables = _block_tables(dataset, cond, probs)
    fair_fb = 0.0
    gcritic_fb = np.zeros_like(mats)
    for ci, table in enumerate(tables):
        weight = cond.counts[ci] / nobs
        fair_fb += weight * variational_value(mats[ci], table)
        marg = marginals(table)
        gcritic_fb[ci] = weight * (
            -2.0 * mats[ci] * marg.pred[None, :]
            + 2.0 * cond.scales[ci][:, None] * table.entries.T
        )
    value_fb = loss_fb + fair_fb
    gw_fb, gb_fb = _full_objective_grad(dataset, probs, cond, 1.0, mats)
    gtheta_fb = np.concatenate([gw_fb.ravel(), gb_fb])

    return AuditResult(
        value_dev=_rel_dev(value_ps, value_fb),
        params_dev=_rel_dev(gtheta, gtheta_fb),
        critic_dev=_rel_dev(gcritic, gcritic_fb),
    )
