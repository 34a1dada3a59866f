"""Command-line interface.

Subcommands:
    synth  write a synthetic biased dataset as CSV
    train  fit a model by SGDA and save it as JSON (optionally with a trace)
    eval   evaluate a saved model on a dataset; write a JSON report
    sweep  train/evaluate a (lambda, batch size, seed) grid; write curve CSV
    mask   blank out a random fraction of sensitive attributes in a CSV
    audit  self-check: unbiasedness, gradient, and divergence-bound suites

Exit codes: 0 success; 2 input or schema error; 3 violated numerical
assumption (degenerate marginal, failed audit check); 4 internal assertion.
"""

import argparse
import json
import math
import sys

import numpy as np

from .data import load_csv, mask_sensitive, save_csv, synthesize_biased, SynthConfig
from .errors import DegenerateMarginalError, ValidationError
from .evaluate import evaluate, sweep
from .divergences import (
    correlation_kernel,
    dp_conditional_linf,
    ermi,
    lq_violation,
    pearson,
    renyi_mi_2,
    shannon_mi,
)
from .model import (
    FD_STEP,
    LinearSoftmaxModel,
    ce_loss_and_grad,
    finite_diff_check,
    from_param_vector,
    load_model,
    predict_proba,
    save_model,
    to_param_vector,
)
from .solver import (
    FairnessNotion,
    SolverConfig,
    conditioning_blocks,
    equal_opportunity,
    sgda_train,
    surrogate_grad_critic,
    surrogate_grad_params,
    surrogate_value,
    unbiasedness_audit,
)
from .tables import JointTable, marginals
from .model import jacobian

UNBIASEDNESS_TOL = 1e-10
GRAD_TOL = 1e-5
CHAIN_TOL = 1e-9


def _split_list(text, what):
    parts = [tok.strip() for tok in text.split(",")]
    if any(not tok for tok in parts):
        raise ValidationError(f"empty entry in --{what} list {text!r}")
    return parts


def _batch_size(text):
    if text == "full":
        return "full"
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected an integer or 'full', got {text!r}"
        ) from None


def _notion(args):
    adv = ()
    if getattr(args, "advantaged", None):
        try:
            adv = tuple(int(tok) for tok in _split_list(args.advantaged, "advantaged"))
        except ValueError:
            raise ValidationError(
                f"--advantaged must be a comma-separated integer list, "
                f"got {args.advantaged!r}"
            ) from None
    if args.fairness == "eopp":
        return equal_opportunity(adv or (1,))
    if adv:
        raise ValidationError("--advantaged applies only to --fairness eopp")
    return FairnessNotion(args.fairness)


def _write_json(payload, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_synth(args):
    config = SynthConfig(
        n=args.n,
        d=args.d,
        bias_strength=args.bias,
        group_balance=args.balance,
        noise_sd=args.noise,
        seed=args.seed,
    )
    dataset = synthesize_biased(config)
    save_csv(dataset, args.out)
    print(f"wrote {dataset.n} rows, {dataset.d} features -> {args.out}")
    return 0


def _cmd_train(args):
    dataset = load_csv(args.data)
    notion = _notion(args)
    config = SolverConfig(
        lam=args.lam,
        eta_theta=args.lr_theta,
        eta_w=args.lr_w,
        batch_size=args.batch_size,
        iterations=args.iters,
        seed=args.seed,
        project=args.project,
        min_class_prob=args.min_class_prob,
        one_pass=args.one_pass,
    )
    model0 = LinearSoftmaxModel.zeros(dataset.m, dataset.d)
    model, _, trace = sgda_train(dataset, model0, notion, config)
    if trace.fairness_skipped_batches:
        print(
            f"warning: {trace.fairness_skipped_batches} batches had no observed "
            f"sensitive attribute; their fairness step was skipped",
            file=sys.stderr,
        )
    if trace.degenerate_probes:
        print(
            f"warning: degenerate output marginal at probe iterations "
            f"{list(trace.degenerate_probes)}",
            file=sys.stderr,
        )
    if args.trace:
        trace.to_csv(args.trace)
        print(f"saved trace -> {args.trace}")
    save_model(
        model,
        args.out,
        k=dataset.k,
        fairness_notion=args.fairness,
        seed=args.seed,
        lam=args.lam,
        iterations=int(trace.iterations[-1]),
    )
    print(
        f"trained {int(trace.iterations[-1])} iterations "
        f"(final loss {float(trace.loss[-1]):.6f}); saved model -> {args.out}"
    )
    return 0


def _cmd_eval(args):
    model, payload = load_model(args.model)
    dataset = load_csv(args.data, m=model.m, k=int(payload.get("k", 2)))
    notion = _notion(args)
    report = evaluate(model, dataset, notion)
    _write_json(report.to_dict(), args.report)
    print(
        f"accuracy={report.accuracy!r} dp_linf={report.dp_linf!r} "
        f"-> {args.report}"
    )
    return 0


def _cmd_sweep(args):
    dataset = load_csv(args.data)
    notion = _notion(args)
    try:
        lambdas = [float(tok) for tok in _split_list(args.lambdas, "lambdas")]
        seeds = [int(tok) for tok in _split_list(args.seeds, "seeds")]
    except ValueError:
        raise ValidationError("--lambdas and --seeds must be numeric lists") from None
    batches = [_batch_size(tok) for tok in _split_list(args.batch_sizes, "batch-sizes")]
    result = sweep(
        dataset,
        notion,
        lambdas,
        batches,
        seeds,
        SolverConfig(),
        test_fraction=args.test_fraction,
    )
    result.to_csv(args.out)
    failed = [row for row in result.rows if row.error is not None]
    for row in failed:
        print(
            f"warning: lambda={row.lam} batch={row.batch_size} seed={row.seed} "
            f"failed: {row.error}",
            file=sys.stderr,
        )
    print(f"wrote {len(result.rows)} rows -> {args.out}")
    return 0


def _cmd_mask(args):
    dataset = load_csv(args.data)
    masked = mask_sensitive(dataset, args.fraction, args.seed)
    save_csv(masked, args.out)
    hidden = int(np.count_nonzero(~masked.observed))
    print(f"masked {hidden} of {masked.n} rows -> {args.out}")
    return 0


# --- audit helpers ---------------------------------------------------------


def _rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / scale))


def _fd_ce_grad(model, x, y, step=FD_STEP):
    theta = to_param_vector(model)
    num = np.empty_like(theta)
    for p in range(theta.size):
        bumped = theta.copy()
        bumped[p] = theta[p] + step
        up, _ = ce_loss_and_grad(from_param_vector(bumped, model.m, model.d), x, y)
        bumped[p] = theta[p] - step
        dn, _ = ce_loss_and_grad(from_param_vector(bumped, model.m, model.d), x, y)
        num[p] = (up - dn) / (2 * step)
    return num


def _fd_surrogate_critic(f, r, mat, scale, step=FD_STEP):
    num = np.empty_like(mat)
    for idx in np.ndindex(mat.shape):
        up = mat.copy()
        up[idx] += step
        dn = mat.copy()
        dn[idx] -= step
        num[idx] = (
            surrogate_value(f, r, up, scale) - surrogate_value(f, r, dn, scale)
        ) / (2 * step)
    return num


def _fd_surrogate_params(model, x, r, mat, scale, step=FD_STEP):
    theta = to_param_vector(model)
    num = np.empty_like(theta)
    for p in range(theta.size):
        bumped = theta.copy()
        bumped[p] = theta[p] + step
        f_up = predict_proba(from_param_vector(bumped, model.m, model.d), x)
        bumped[p] = theta[p] - step
        f_dn = predict_proba(from_param_vector(bumped, model.m, model.d), x)
        num[p] = (
            surrogate_value(f_up, r, mat, scale) - surrogate_value(f_dn, r, mat, scale)
        ) / (2 * step)
    return num


def _random_table(rng):
    """Dirichlet table with comfortably positive marginals (resampled until
    every marginal is at least 1e-3, so the bound-chain arithmetic is far
    from the degenerate regime)."""
    m = int(rng.integers(2, 7))
    k = int(rng.integers(2, 7))
    while True:
        entries = rng.dirichlet(np.ones(m * k)).reshape(m, k)
        if entries.sum(axis=0).min() >= 1e-3 and entries.sum(axis=1).min() >= 1e-3:
            return JointTable(entries)


def _bound_chain_violations(table):
    """Worst violation of the inter-divergence inequality chain on one
    table (0 means every inequality holds with margin)."""
    value = ermi(table)
    i1 = shannon_mi(table)
    i2 = renyi_mi_2(table)
    l1 = lq_violation(table, 1)
    l2 = lq_violation(table, 2)
    linf = lq_violation(table, math.inf)
    kernel = correlation_kernel(table)
    eigs = kernel.eigenvalues()
    lam2 = float(eigs[1]) if eigs.size > 1 else 0.0
    marg = marginals(table)
    worst = max(
        -i1,
        i1 - i2,
        i2 - value,
        abs(i2 - math.log1p(value)),
        linf - l2,
        l2 - l1,
        l1 - math.sqrt(value) if value > 0 else l1 - 0.0,
        dp_conditional_linf(table)
        - (math.sqrt(max(value, 0.0)) / marg.group.min()),
        lam2 - value,
    )
    if table.entries.shape[1] == 2:
        worst = max(worst, abs(lam2 - value))
    if table.entries.shape == (2, 2):
        worst = max(worst, pearson(table) ** 2 - lam2)
    return worst


def _cmd_audit(args):
    dataset = load_csv(args.data)
    notion = _notion(args)
    rng = np.random.Generator(np.random.Philox(args.seed))
    # Draw order: model weights, bias, critic matrices, then the table suite.
    model = LinearSoftmaxModel(
        0.5 * rng.standard_normal((dataset.m, dataset.d)),
        0.5 * rng.standard_normal(dataset.m),
    )
    critic = conditioning_blocks(dataset, notion)
    critic.mats[:] = 0.5 * rng.standard_normal(critic.mats.shape)

    checks = []
    audit = unbiasedness_audit(dataset, model, notion, critic)
    for name, dev in (
        ("unbiasedness_objective", audit.value_dev),
        ("unbiasedness_theta_grad", audit.params_dev),
        ("unbiasedness_critic_grad", audit.critic_dev),
    ):
        checks.append((name, dev <= UNBIASEDNESS_TOL, f"rel dev {dev:.3e}"))

    # Gradient checks on a handful of fairness-relevant rows.
    if critic.classes == (None,):
        block_of = {None: 0}
        relevant = np.flatnonzero(dataset.observed)
    else:
        block_of = {c: i for i, c in enumerate(critic.classes)}
        trackable = np.isin(dataset.labels, list(critic.classes))
        relevant = np.flatnonzero(dataset.observed & trackable)
    pick = relevant[rng.permutation(relevant.size)[: min(5, relevant.size)]]

    worst_jac = worst_ce = worst_gw = worst_gt = 0.0
    for i in pick:
        x = dataset.features[i]
        worst_jac = max(worst_jac, finite_diff_check(model, x, math.inf))
        _, ce_grad = ce_loss_and_grad(model, x, dataset.labels[i])
        worst_ce = max(
            worst_ce, _rel_err(ce_grad, _fd_ce_grad(model, x, dataset.labels[i]))
        )
        ci = block_of[None] if critic.classes == (None,) else block_of[int(dataset.labels[i])]
        mat, scale = critic.mats[ci], critic.scales[ci]
        f = predict_proba(model, x)
        r = int(dataset.sensitive[i])
        worst_gw = max(
            worst_gw,
            _rel_err(surrogate_grad_critic(f, r, mat, scale),
                     _fd_surrogate_critic(f, r, mat, scale)),
        )
        worst_gt = max(
            worst_gt,
            _rel_err(surrogate_grad_params(jacobian(model, x), f, r, mat, scale),
                     _fd_surrogate_params(model, x, r, mat, scale)),
        )
    for name, worst in (
        ("jacobian_finite_diff", worst_jac),
        ("ce_grad_finite_diff", worst_ce),
        ("critic_grad_finite_diff", worst_gw),
        ("theta_grad_finite_diff", worst_gt),
    ):
        checks.append((name, worst <= GRAD_TOL, f"max rel err {worst:.3e}"))

    # Divergence bound chain plus kernel spectrum identities.
    n_tables = 200
    worst_chain = worst_trace = worst_top = 0.0
    for _ in range(n_tables):
        table = _random_table(rng)
        worst_chain = max(worst_chain, _bound_chain_violations(table))
        kernel = correlation_kernel(table)
        eigs = kernel.eigenvalues()
        worst_trace = max(
            worst_trace, abs(float(np.trace(kernel.entries)) - 1.0 - ermi(table))
        )
        worst_top = max(worst_top, abs(float(eigs[0]) - 1.0))
    checks.append(
        ("bound_chain", worst_chain <= CHAIN_TOL,
         f"{n_tables} tables, worst violation {worst_chain:.3e}")
    )
    checks.append(
        ("trace_identity", worst_trace <= 1e-10, f"worst dev {worst_trace:.3e}")
    )
    checks.append(
        ("top_eigenvalue", worst_top <= 1e-8, f"worst dev {worst_top:.3e}")
    )

    all_ok = True
    for name, ok, detail in checks:
        print(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})")
        all_ok = all_ok and ok
    return 0 if all_ok else 3


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="fermi",
        description="Fair classification via an exponential Renyi mutual "
        "information penalty, trained by stochastic gradient descent-ascent.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic biased dataset")
    p.add_argument("--n", type=int, required=True, help="sample count")
    p.add_argument("--d", type=int, required=True, help="feature dimension")
    p.add_argument("--bias", type=float, required=True,
                   help="group leakage strength (alpha >= 0)")
    p.add_argument("--balance", type=float, required=True, help="P(s=1)")
    p.add_argument("--noise", type=float, required=True, help="label noise sd")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="fit a model by SGDA")
    p.add_argument("--data", required=True, help="training CSV")
    p.add_argument("--fairness", required=True, choices=("dp", "eodds", "eopp"))
    p.add_argument("--advantaged", default=None,
                   help="comma-separated advantaged classes (eopp only)")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0,
                   help="fairness penalty weight")
    p.add_argument("--batch-size", type=_batch_size, default=64,
                   help="minibatch size, or 'full'")
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--lr-theta", type=float, default=0.005,
                   help="descent step size")
    p.add_argument("--lr-w", type=float, default=0.05, help="ascent step size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--project", action="store_true",
                   help="project critic matrices onto the Frobenius ball")
    p.add_argument("--min-class-prob", type=float, default=1e-3,
                   help="output-marginal floor in the projection radius")
    p.add_argument("--one-pass", action="store_true",
                   help="single shuffled epoch without replacement")
    p.add_argument("--trace", default=None, help="optional trace CSV path")
    p.add_argument("--out", required=True, help="output model JSON path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model")
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--data", required=True, help="evaluation CSV")
    p.add_argument("--fairness", required=True, choices=("dp", "eodds", "eopp"))
    p.add_argument("--advantaged", default=None,
                   help="comma-separated advantaged classes (eopp only)")
    p.add_argument("--report", required=True, help="output report JSON path")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="train/evaluate a parameter grid")
    p.add_argument("--data", required=True)
    p.add_argument("--fairness", required=True, choices=("dp", "eodds", "eopp"))
    p.add_argument("--advantaged", default=None,
                   help="comma-separated advantaged classes (eopp only)")
    p.add_argument("--lambdas", required=True, help="comma-separated floats")
    p.add_argument("--batch-sizes", required=True,
                   help="comma-separated ints or 'full'")
    p.add_argument("--seeds", required=True, help="comma-separated ints")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--out", required=True, help="output curve CSV path")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("mask", help="mask sensitive attributes at random")
    p.add_argument("--data", required=True)
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mask)

    p = sub.add_parser("audit", help="run the numerical self-checks")
    p.add_argument("--data", required=True)
    p.add_argument("--fairness", required=True, choices=("dp", "eodds", "eopp"))
    p.add_argument("--advantaged", default=None,
                   help="comma-separated advantaged classes (eopp only)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_audit)

    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DegenerateMarginalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AssertionError as exc:
        print(f"internal assertion failed: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
