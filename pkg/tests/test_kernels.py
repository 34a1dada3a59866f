"""Backend registry and the run_segment contract, checked on each built
backend and across them."""

import math
import os
import subprocess
import sys

import numpy as np
import pytest

from fermi import (
    LabeledDataset,
    LinearSoftmaxModel,
    SolverConfig,
    SynthConfig,
    demographic_parity,
    equal_opportunity,
    kernels,
    predict_proba,
    sgda_train,
    surrogate_value,
    synthesize_biased,
)

needs_compiled = pytest.mark.skipif(
    "compiled" not in kernels.available(), reason="compiled backend not built"
)


class Segment:
    """One run_segment call's inputs, kept as plain arrays for reuse."""

    def __init__(self, rng, n=40, d=3, m=2, k=2, iters=25, batch=5, masked=()):
        self.x = rng.normal(size=(n, d))
        self.labels = rng.integers(0, m, size=n)
        self.s = rng.integers(0, k, size=n)
        self.s[: 2 * k] = np.tile(np.arange(k), 2)
        for i in masked:
            self.s[i] = -1
        self.fclass = np.where(self.s >= 0, 0, 0).astype(np.int64)
        freq = np.bincount(self.s[self.s >= 0], minlength=k) / (self.s >= 0).sum()
        self.scales = np.ascontiguousarray(1.0 / np.sqrt(freq))[None, :]
        self.sizes = np.full(iters, batch, dtype=np.int64)
        self.flat = rng.integers(0, n, size=iters * batch, dtype=np.int64)
        self.m, self.k, self.d, self.iters = m, k, d, iters

    def run(self, backend, eta_theta=0.05, eta_w=0.1, lam=3.0, radius=0.0,
            critic0=None, w0=None):
        prev = kernels.select(backend)
        try:
            w = np.zeros((self.m, self.d)) if w0 is None else w0.copy()
            b = np.zeros(self.m)
            critic = np.zeros((1, self.k, self.m)) if critic0 is None else critic0.copy()
            loss = np.full(self.iters, np.nan)
            psi = np.full(self.iters, np.nan)
            skipped = kernels.run_segment(
                self.x, self.labels, self.fclass, self.s, w, b, critic,
                self.scales, self.flat, self.sizes, eta_theta, eta_w, lam,
                radius, loss, psi,
            )
        finally:
            kernels.select(prev)
        return w, b, critic, loss, psi, skipped


class TestRegistry:
    def test_python_always_available(self):
        assert "python" in kernels.available()

    def test_active_is_available(self):
        assert kernels.active() in kernels.available()

    def test_select_round_trip(self):
        start = kernels.active()
        prev = kernels.select("python")
        assert prev == start
        assert kernels.active() == "python"
        kernels.select(start)
        assert kernels.active() == start

    def test_unknown_backend_rejected(self):
        with pytest.raises(ValueError):
            kernels.select("fortran")

    @needs_compiled
    def test_compiled_is_default_when_built(self):
        if os.environ.get("FERMI_KERNEL") in (None, "compiled"):
            assert kernels.active() == "compiled"

    def test_env_var_forces_backend(self):
        out = subprocess.run(
            [sys.executable, "-c", "import fermi.kernels as k; print(k.active())"],
            env={**os.environ, "FERMI_KERNEL": "python"},
            capture_output=True, text=True,
        )
        assert out.returncode == 0
        assert out.stdout.strip() == "python"

    def test_env_var_unknown_backend_fails_import(self):
        out = subprocess.run(
            [sys.executable, "-c", "import fermi.kernels"],
            env={**os.environ, "FERMI_KERNEL": "cuda"},
            capture_output=True, text=True,
        )
        assert out.returncode != 0
        assert "FERMI_KERNEL" in out.stderr


class TestSegmentContract:
    def test_first_iteration_psi_at_given_critic(self, rng):
        # psi record = sum of per-sample estimates over fairness-relevant
        # rows divided by the observed count, at the pre-update critic.
        seg = Segment(rng, iters=1, batch=8)
        critic0 = rng.normal(size=(1, seg.k, seg.m))
        w0 = rng.normal(size=(seg.m, seg.d))
        _, _, _, _, psi, _ = seg.run("python", critic0=critic0, w0=w0)
        idx = seg.flat[:8]
        model = LinearSoftmaxModel(w0, np.zeros(seg.m))
        probs = predict_proba(model, seg.x[idx])
        expected = sum(
            surrogate_value(probs[j], seg.s[idx][j], critic0[0], seg.scales[0])
            for j in range(8)
            if seg.s[idx][j] >= 0
        ) / (seg.s[idx] >= 0).sum()
        assert psi[0] == pytest.approx(expected, abs=1e-12)

    def test_all_masked_batch_updates_loss_only(self, rng):
        seg = Segment(rng, n=12, iters=1, batch=4, masked=range(4, 12))
        seg.flat[:] = np.array([4, 5, 6, 7] * seg.flat.size)[: seg.flat.size]
        for backend in kernels.available():
            w, b, critic, loss, psi, skipped = seg.run(backend)
            assert skipped == 1
            assert np.isnan(psi[0])
            assert np.isfinite(loss[0])
            assert np.all(critic == 0)  # ascent never ran
            assert np.any(w != 0)  # descent did

    def test_observed_but_untracked_rows_record_zero_psi(self, rng):
        # equal-opportunity style: rows observed yet outside every tracked
        # class contribute nothing, and the batch is not "skipped".
        seg = Segment(rng, n=12, iters=1, batch=4)
        seg.fclass[:] = -1
        for backend in kernels.available():
            _, _, critic, loss, psi, skipped = seg.run(backend)
            assert skipped == 0
            assert psi[0] == 0.0
            assert np.all(critic == 0)
            assert np.isfinite(loss[0])

    def test_projection_bounds_critic_norm(self, rng):
        seg = Segment(rng, iters=40, batch=6)
        radius = 0.5
        for backend in kernels.available():
            _, _, critic, _, _, _ = seg.run(backend, eta_w=0.8, lam=5.0, radius=radius)
            nrm = math.sqrt(float(np.sum(critic * critic)))
            assert nrm <= radius * (1 + 1e-12)
            assert nrm >= radius * 0.5  # the ball actually binds here

    @needs_compiled
    def test_backends_agree_to_rounding(self, rng):
        seg = Segment(rng, n=60, iters=50, batch=7)
        critic0 = rng.normal(size=(1, seg.k, seg.m)) * 0.1
        out_py = seg.run("python", critic0=critic0)
        out_cy = seg.run("compiled", critic0=critic0)
        for a, b in zip(out_py[:3], out_cy[:3]):
            assert np.allclose(a, b, atol=1e-10)
        assert np.allclose(out_py[3], out_cy[3], atol=1e-10)  # loss records
        assert np.allclose(out_py[4], out_cy[4], atol=1e-10, equal_nan=True)
        assert out_py[5] == out_cy[5]


@needs_compiled
class TestBackendsThroughSolver:
    def test_short_training_runs_agree(self):
        ds = synthesize_biased(SynthConfig(150, 3, 1.5, 0.5, 1.0, 4))
        cfg = SolverConfig(lam=10.0, eta_theta=0.02, eta_w=0.02, batch_size=8,
                           iterations=120, seed=6, diagnostic_every=0)
        results = {}
        for backend in ("python", "compiled"):
            prev = kernels.select(backend)
            try:
                model, critic, trace = sgda_train(
                    ds, LinearSoftmaxModel.zeros(2, 3), demographic_parity(), cfg
                )
            finally:
                kernels.select(prev)
            results[backend] = (model, critic, trace)
        m_py, c_py, t_py = results["python"]
        m_cy, c_cy, t_cy = results["compiled"]
        assert np.allclose(m_py.weights, m_cy.weights, atol=1e-10)
        assert np.allclose(m_py.bias, m_cy.bias, atol=1e-10)
        assert np.allclose(c_py.mats, c_cy.mats, atol=1e-10)
        assert np.allclose(t_py.loss[1:], t_cy.loss[1:], atol=1e-10)
        assert t_py.snapshot_iteration == t_cy.snapshot_iteration

    def test_eopp_runs_agree(self):
        ds = synthesize_biased(SynthConfig(150, 3, 1.5, 0.5, 1.0, 4))
        cfg = SolverConfig(lam=5.0, eta_theta=0.02, eta_w=0.02, batch_size=8,
                           iterations=80, seed=2, diagnostic_every=0)
        outs = []
        for backend in ("python", "compiled"):
            prev = kernels.select(backend)
            try:
                model, critic, _ = sgda_train(
                    ds, LinearSoftmaxModel.zeros(2, 3), equal_opportunity(), cfg
                )
            finally:
                kernels.select(prev)
            outs.append((model, critic))
        assert np.allclose(outs[0][0].weights, outs[1][0].weights, atol=1e-10)
        assert np.allclose(outs[0][1].mats, outs[1][1].mats, atol=1e-10)
