"""Datasets: the synthetic generator's distributional contract, masking,
splitting, CSV round trips, and validation.

The generator oracle is the closed form of its own sampling recipe: the
decision margin given s is normal with mean alpha*s*(1 + 1/sqrt(d)) and
variance 1 + noise_sd^2, which fixes the population (label, group) table.
"""

import math

import numpy as np
import pytest

from fermi import (
    JointTable,
    LabeledDataset,
    LinearSoftmaxModel,
    MASKED,
    SolverConfig,
    SynthConfig,
    ValidationError,
    demographic_parity,
    ermi,
    evaluate,
    hard_predictions,
    load_csv,
    mask_sensitive,
    save_csv,
    sgda_train,
    split,
    synthesize_biased,
)
from fermi.data import base_direction


def population_label_table(alpha, d, balance, noise_sd):
    shift = alpha * (1 + 1 / math.sqrt(d))
    sd = math.sqrt(1 + noise_sd**2)
    p1 = {s: 0.5 * (1 + math.erf(shift * s / (sd * math.sqrt(2)))) for s in (0, 1)}
    return np.array(
        [
            [(1 - p1[0]) * (1 - balance), (1 - p1[1]) * balance],
            [p1[0] * (1 - balance), p1[1] * balance],
        ]
    )


def quick_fit(ds, **kwargs):
    cfg = SolverConfig(lam=0.0, eta_theta=0.05, eta_w=0.01, batch_size=64,
                       diagnostic_every=0, **kwargs)
    model, _, _ = sgda_train(
        ds, LinearSoftmaxModel.zeros(ds.m, ds.d), demographic_parity(), cfg
    )
    return model


class TestLabeledDataset:
    def test_fields_and_properties(self, rng):
        ds = LabeledDataset(rng.normal(size=(7, 3)), np.zeros(7, dtype=int),
                            [0, 1, 0, 1, MASKED, 0, 1], 2, 2)
        assert ds.n == 7 and ds.d == 3
        assert ds.observed.sum() == 6
        sub = ds.take([0, 4])
        assert sub.n == 2 and sub.sensitive[1] == MASKED

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"features": np.zeros(4)},
            {"labels": np.array([0, 2])},
            {"labels": np.array([0, -1])},
            {"sensitive": np.array([0, 3])},
            {"sensitive": np.array([0, -2])},
            {"m": 1},
            {"k": 1},
        ],
    )
    def test_rejects(self, kwargs):
        base = dict(
            features=np.zeros((2, 2)), labels=np.array([0, 1]),
            sensitive=np.array([0, 1]), m=2, k=2,
        )
        base.update(kwargs)
        with pytest.raises(ValidationError):
            LabeledDataset(**base)

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            LabeledDataset(np.zeros((0, 2)), np.zeros(0, dtype=int),
                           np.zeros(0, dtype=int), 2, 2)


class TestSynthConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n": 0},
            {"d": 0},
            {"bias_strength": -0.5},
            {"group_balance": 0.0},
            {"group_balance": 1.0},
            {"noise_sd": 0.0},
        ],
    )
    def test_rejects(self, kwargs):
        base = dict(n=10, d=2, bias_strength=1.0, group_balance=0.5,
                    noise_sd=1.0, seed=0)
        base.update(kwargs)
        with pytest.raises(ValidationError):
            SynthConfig(**base)


class TestSynthesizeBiased:
    def test_deterministic_in_seed(self):
        cfg = SynthConfig(500, 4, 1.0, 0.4, 1.0, 42)
        a = synthesize_biased(cfg)
        b = synthesize_biased(cfg)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.sensitive, b.sensitive)
        c = synthesize_biased(SynthConfig(500, 4, 1.0, 0.4, 1.0, 43))
        assert not np.array_equal(a.features, c.features)

    def test_documented_draw_order(self):
        # The reproducibility contract: Philox(seed), then s, x, eps in that
        # order, with the stated arithmetic.
        cfg = SynthConfig(200, 3, 1.5, 0.3, 0.8, 9)
        ds = synthesize_biased(cfg)
        rng = np.random.Generator(np.random.Philox(9))
        s = (rng.random(200) < 0.3).astype(np.int64)
        x = rng.standard_normal((200, 3))
        x[:, 2] += 1.5 * s
        eps = rng.standard_normal(200)
        y = (x @ base_direction(3) + 1.5 * s + 0.8 * eps > 0).astype(np.int64)
        assert np.array_equal(ds.sensitive, s)
        assert np.array_equal(ds.features, x)
        assert np.array_equal(ds.labels, y)

    def test_base_direction_is_unit(self):
        for d in (1, 3, 10):
            assert np.linalg.norm(base_direction(d)) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("alpha", [0.0, 1.5])
    def test_label_group_table_matches_closed_form(self, alpha):
        ds = synthesize_biased(SynthConfig(200_000, 4, alpha, 0.4, 1.2, 31))
        emp = np.zeros((2, 2))
        np.add.at(emp, (ds.labels, ds.sensitive), 1.0)
        emp /= ds.n
        pop = population_label_table(alpha, 4, 0.4, 1.2)
        assert np.abs(emp - pop).max() <= 0.01

    def test_zero_bias_fit_is_fair(self):
        ds = synthesize_biased(SynthConfig(100_000, 5, 0.0, 0.5, 1.0, 3))
        report = evaluate(quick_fit(ds, one_pass=True), ds, demographic_parity())
        assert report.dp_linf <= 0.05

    def test_strong_bias_fit_is_unfair(self):
        # Conditional-vs-marginal gap clears 0.15; with near-balanced groups
        # that is equivalently a 0.3+ gap between the two groups' positive
        # rates, which is also asserted directly.
        ds = synthesize_biased(SynthConfig(2000, 5, 2.0, 0.5, 1.0, 1))
        model = quick_fit(ds, iterations=4000)
        report = evaluate(model, ds, demographic_parity())
        assert report.dp_linf >= 0.15
        pred = hard_predictions(model, ds.features)
        gap = abs(
            float(np.mean(pred[ds.sensitive == 1]))
            - float(np.mean(pred[ds.sensitive == 0]))
        )
        assert gap >= 0.3

    def test_population_ermi_monotone_in_bias(self):
        closed = [
            ermi(JointTable(population_label_table(a, 5, 0.5, 1.0)))
            for a in (0.0, 0.5, 1.0, 2.0)
        ]
        assert closed[0] == pytest.approx(0.0, abs=1e-12)
        assert all(a < b for a, b in zip(closed, closed[1:]))

    def test_fitted_divergence_monotone_in_bias(self):
        fit_dp = []
        fit_ermi = []
        for alpha in (0.0, 0.5, 1.0, 2.0):
            ds = synthesize_biased(SynthConfig(20_000, 5, alpha, 0.5, 1.0, 17))
            report = evaluate(quick_fit(ds, one_pass=True), ds, demographic_parity())
            fit_dp.append(report.dp_linf)
            fit_ermi.append(report.divergence.ermi)
        assert all(a < b + 1e-3 for a, b in zip(fit_dp, fit_dp[1:]))
        assert all(a < b + 1e-3 for a, b in zip(fit_ermi, fit_ermi[1:]))
        assert fit_dp[-1] > fit_dp[0] + 0.1


class TestMaskSensitive:
    def test_exact_count(self, fixture_dataset):
        masked = mask_sensitive(fixture_dataset, 0.9, seed=3)
        assert (masked.sensitive == MASKED).sum() == math.floor(0.9 * fixture_dataset.n)

    def test_fraction_zero_and_one(self, fixture_dataset):
        same = mask_sensitive(fixture_dataset, 0.0, seed=0)
        assert np.array_equal(same.sensitive, fixture_dataset.sensitive)
        gone = mask_sensitive(fixture_dataset, 1.0, seed=0)
        assert np.all(gone.sensitive == MASKED)

    def test_deterministic_and_documented_index_set(self, fixture_dataset):
        a = mask_sensitive(fixture_dataset, 0.35, seed=8)
        b = mask_sensitive(fixture_dataset, 0.35, seed=8)
        assert np.array_equal(a.sensitive, b.sensitive)
        n_mask = math.floor(0.35 * fixture_dataset.n)
        perm = np.random.Generator(np.random.Philox(8)).permutation(fixture_dataset.n)
        expect = np.zeros(fixture_dataset.n, dtype=bool)
        expect[perm[:n_mask]] = True
        assert np.array_equal(a.sensitive == MASKED, expect)

    def test_input_not_mutated(self, fixture_dataset):
        before = fixture_dataset.sensitive.copy()
        mask_sensitive(fixture_dataset, 0.5, seed=1)
        assert np.array_equal(fixture_dataset.sensitive, before)

    def test_masked_rows_keep_features_and_labels(self, fixture_dataset):
        masked = mask_sensitive(fixture_dataset, 0.9, seed=3)
        assert np.array_equal(masked.features, fixture_dataset.features)
        assert np.array_equal(masked.labels, fixture_dataset.labels)

    def test_bad_fraction(self, fixture_dataset):
        for f in (-0.1, 1.1):
            with pytest.raises(ValidationError):
                mask_sensitive(fixture_dataset, f, seed=0)


class TestSplit:
    def test_sizes(self, rng):
        ds = LabeledDataset(rng.normal(size=(10, 2)),
                            rng.integers(0, 2, 10), rng.integers(0, 2, 10), 2, 2)
        train, test = split(ds, 0.2, seed=0)
        assert (train.n, test.n) == (8, 2)

    def test_disjoint_and_exhaustive(self, fixture_dataset):
        train, test = split(fixture_dataset, 0.25, seed=5)
        # features are continuous, so rows identify samples
        combined = np.vstack([train.features, test.features])
        order = np.lexsort(combined.T)
        original = np.lexsort(fixture_dataset.features.T)
        assert np.array_equal(
            combined[order], fixture_dataset.features[original]
        )
        assert train.n + test.n == fixture_dataset.n

    def test_deterministic(self, fixture_dataset):
        a = split(fixture_dataset, 0.2, seed=7)
        b = split(fixture_dataset, 0.2, seed=7)
        assert np.array_equal(a[0].features, b[0].features)
        assert np.array_equal(a[1].features, b[1].features)

    def test_empty_side_rejected(self, rng):
        ds = LabeledDataset(rng.normal(size=(10, 2)),
                            rng.integers(0, 2, 10), rng.integers(0, 2, 10), 2, 2)
        for bad in (0.0, 1.0, 0.05):  # 0.05 floors to an empty test side
            with pytest.raises(ValidationError):
                split(ds, bad, seed=0)

    def test_bad_fraction(self, fixture_dataset):
        with pytest.raises(ValidationError):
            split(fixture_dataset, 1.5, seed=0)


class TestCsv:
    def test_round_trip_bitwise_with_masks(self, fixture_dataset, tmp_path):
        ds = mask_sensitive(fixture_dataset, 0.4, seed=2)
        path = tmp_path / "data.csv"
        save_csv(ds, path)
        back = load_csv(path)
        assert np.array_equal(back.features, ds.features)
        assert np.array_equal(back.labels, ds.labels)
        assert np.array_equal(back.sensitive, ds.sensitive)
        assert back.m == ds.m and back.k == ds.k

    def test_header_and_masked_cell_layout(self, tmp_path):
        ds = LabeledDataset([[1.5, -2.0], [0.25, 3.0]], [0, 1], [1, MASKED], 2, 2)
        path = tmp_path / "two.csv"
        save_csv(ds, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "f0,f1,label,sensitive"
        assert lines[1] == "1.5,-2.0,0,1"
        assert lines[2] == "0.25,3.0,1,"

    def test_infers_cardinalities(self, tmp_path):
        path = tmp_path / "wide.csv"
        path.write_text(
            "f0,label,sensitive\n0.0,0,0\n0.5,3,2\n1.0,1,\n"
        )
        ds = load_csv(path)
        assert ds.m == 4 and ds.k == 3
        assert ds.sensitive[2] == MASKED

    def test_binary_floor_on_inference(self, tmp_path):
        path = tmp_path / "min.csv"
        path.write_text("f0,label,sensitive\n0.0,0,0\n1.0,0,0\n")
        ds = load_csv(path)
        assert ds.m == 2 and ds.k == 2

    def test_explicit_overrides(self, tmp_path):
        path = tmp_path / "ovr.csv"
        path.write_text("f0,label,sensitive\n0.0,0,0\n1.0,1,1\n")
        ds = load_csv(path, m=5, k=3)
        assert ds.m == 5 and ds.k == 3

    def test_feature_column_order_follows_file(self, tmp_path):
        path = tmp_path / "cols.csv"
        path.write_text("age,label,income,sensitive\n10.0,0,55.5,1\n20.0,1,66.5,0\n")
        ds = load_csv(path)
        assert ds.d == 2
        assert np.array_equal(ds.features, [[10.0, 55.5], [20.0, 66.5]])

    @pytest.mark.parametrize(
        "content,phrase",
        [
            ("", "empty"),
            ("f0,label,sensitive\n", "no data rows"),
            ("f0,sensitive\n0.0,1\n", "label"),
            ("f0,label\n0.0,1\n", "sensitive"),
            ("f0,f0,label,sensitive\n0.0,1.0,0,0\n", "duplicate"),
            ("label,sensitive\n0,0\n", "feature"),
            ("f0,label,sensitive\n0.0,0\n", "fields"),
            ("f0,label,sensitive\nabc,0,0\n", "non-numeric"),
            ("f0,label,sensitive\n0.0,zero,0\n", "label"),
            ("f0,label,sensitive\n0.0,0,two\n", "sensitive"),
            ("f0,label,sensitive\n0.0,-1,0\n", "negative label"),
            ("f0,label,sensitive\n0.0,0,-2\n", "negative sensitive"),
        ],
    )
    def test_malformed_rejected(self, tmp_path, content, phrase):
        path = tmp_path / "bad.csv"
        path.write_text(content)
        with pytest.raises(ValidationError, match=phrase):
            load_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError):
            load_csv(tmp_path / "nope.csv")
