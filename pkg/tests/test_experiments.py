"""Experiment orchestration: trials, baseline distributions, the repartition
study, the dilation probe, and cross-dataset evaluation.

The leakage audits work by perturbation: corrupt the part of the data a
stage must not read and require bit-identical outputs.
"""

import numpy as np
import pytest

from rhythmbench.config import DEFAULT_PIPELINE, LEARNED_MODELS
from rhythmbench.datasets import random_partition
from rhythmbench.experiments import (
    Contrast,
    baseline_distribution,
    cross_dataset_eval,
    dilation_probe,
    evaluate_models,
    fit_models,
    random_reference_level,
    repartition_study,
    run_trial,
    write_figures_csv,
)
from rhythmbench.features import FeatureTable, fit_normalizer
from rhythmbench.metrics import FIGURE_NAMES
from rhythmbench.synth import rhythm_clip

from conftest import make_blob_table

SR = 22050


def _partition(table, seed=0, ratio=0.7):
    return random_partition(table.ids, ratio, seed, labels=table.labels)


class TestRunTrial:
    def test_learned_models_ace_separated_blobs(self, blob_table):
        outcome = run_trial(blob_table, _partition(blob_table), seed=0)
        for name in LEARNED_MODELS:
            assert outcome.reports[name].figures.accuracy >= 0.95

    def test_majority_baseline_matches_test_frequency(self, blob_table):
        partition = _partition(blob_table)
        outcome = run_trial(blob_table, partition, seed=0)
        test_y = blob_table.label_indices(partition.test_ids)
        maj_model = outcome.models["maj"]
        majority_class = int(maj_model.class_frequencies.argmax())
        expected = np.mean(test_y == majority_class)
        assert outcome.reports["maj"].figures.accuracy == pytest.approx(expected)

    def test_same_seed_reproduces_everything(self, blob_table):
        partition = _partition(blob_table, seed=4)
        a = run_trial(blob_table, partition, seed=4)
        b = run_trial(blob_table, partition, seed=4)
        for name in a.reports:
            assert a.reports[name].figures.as_tuple() == b.reports[name].figures.as_tuple()
            np.testing.assert_array_equal(a.predictions[name], b.predictions[name])

    def test_test_labels_do_not_leak_into_predictions(self, blob_table):
        # flip every test label; models and predictions must not move
        partition = _partition(blob_table, seed=1)
        test_ids = set(partition.test_ids)
        n_classes = blob_table.n_classes
        corrupted_labels = tuple(
            blob_table.vocabulary[
                (blob_table.vocabulary.index(label) + 1) % n_classes
            ]
            if cid in test_ids
            else label
            for cid, label in zip(blob_table.ids, blob_table.labels)
        )
        corrupted = FeatureTable(
            ids=blob_table.ids,
            labels=corrupted_labels,
            matrix=blob_table.matrix,
            vocabulary=blob_table.vocabulary,
            pipeline_hash=blob_table.pipeline_hash,
        )
        a = run_trial(blob_table, partition, seed=1)
        b = run_trial(corrupted, partition, seed=1)
        for name in a.predictions:
            np.testing.assert_array_equal(a.predictions[name], b.predictions[name])

    def test_test_features_do_not_leak_into_normalizer(self, blob_table):
        partition = _partition(blob_table, seed=2)
        test_rows = [blob_table.ids.index(i) for i in partition.test_ids]
        wrecked = blob_table.matrix.copy()
        wrecked[test_rows] = 1e6
        corrupted = FeatureTable(
            ids=blob_table.ids,
            labels=blob_table.labels,
            matrix=wrecked,
            vocabulary=blob_table.vocabulary,
            pipeline_hash=blob_table.pipeline_hash,
        )
        a = run_trial(blob_table, partition, seed=2)
        b = run_trial(corrupted, partition, seed=2)
        np.testing.assert_array_equal(a.normalizer.mean, b.normalizer.mean)
        np.testing.assert_array_equal(a.normalizer.std, b.normalizer.std)

    def test_missing_feature_rows_rejected(self, blob_table):
        partition = random_partition([*blob_table.ids[:20], "ghost"], 0.7, seed=0)
        with pytest.raises(ValueError, match="missing features"):
            run_trial(blob_table, partition)

    def test_duplicate_model_specs_rejected(self, blob_table):
        with pytest.raises(ValueError, match="duplicate model specs"):
            run_trial(blob_table, _partition(blob_table), model_specs=("lda", "lda"))


class TestBaselineDistribution:
    def test_uniform_baseline_moments(self):
        # n=210, C=8: accuracy is Binomial(210, 1/8)/210, so mean 0.125 and
        # std ~ 0.0228; generous bands here, the tight ones live in the
        # acceptance suite
        rng = np.random.default_rng(0)
        train_y = rng.integers(0, 8, size=488)
        test_y = rng.integers(0, 8, size=210)
        dist = baseline_distribution(train_y, test_y, 8, n_draws=2000, seed=1)
        acc = dist.stats["unif"]["accuracy"]
        assert abs(acc.mean - 0.125) < 0.01
        assert abs(acc.std - 0.0228) < 0.008

    def test_freq_close_to_unif_for_uniform_training(self):
        train_y = np.tile(np.arange(8), 60)  # exactly uniform frequencies
        test_y = np.random.default_rng(2).integers(0, 8, size=210)
        dist = baseline_distribution(train_y, test_y, 8, n_draws=2000, seed=3)
        assert dist.stats["freq"]["accuracy"].mean == pytest.approx(
            dist.stats["unif"]["accuracy"].mean, abs=0.01
        )

    def test_majority_is_point_mass(self):
        train_y = np.array([0] * 60 + [1] * 40)
        test_y = np.array([0] * 30 + [1] * 70)
        dist = baseline_distribution(train_y, test_y, 2, n_draws=100, seed=0)
        assert dist.stats["maj"]["accuracy"].mean == pytest.approx(0.3)
        assert dist.stats["maj"]["accuracy"].std == 0.0

    def test_deterministic_given_seed(self):
        train_y = np.random.default_rng(4).integers(0, 4, size=100)
        test_y = np.random.default_rng(5).integers(0, 4, size=60)
        a = baseline_distribution(train_y, test_y, 4, n_draws=200, seed=9)
        b = baseline_distribution(train_y, test_y, 4, n_draws=200, seed=9)
        assert a.to_dict() == b.to_dict()

    def test_draw_count_floor(self):
        with pytest.raises(ValueError, match="at least 100"):
            baseline_distribution([0, 1], [0, 1], 2, n_draws=50)

    def test_random_reference_level(self):
        train_y = np.random.default_rng(6).integers(0, 8, size=400)
        test_y = np.random.default_rng(7).integers(0, 8, size=210)
        dist = baseline_distribution(train_y, test_y, 8, n_draws=500, seed=0)
        expected = max(
            dist.stats[k]["accuracy"].mean + 2.0 * dist.stats[k]["accuracy"].std
            for k in ("unif", "freq")
        )
        assert random_reference_level(dist) == expected


@pytest.fixture(scope="module")
def small_table():
    return make_blob_table(n_per_class=12, n_classes=4, dim=5, seed=3, spread=1.5)


@pytest.fixture(scope="module")
def study(small_table):
    return repartition_study(
        small_table,
        n_trials=12,
        base_seed=100,
        model_specs=("lda", "qda", "1nn", "3nn"),
        contrasts=(Contrast("gauss_vs_knn", ("lda", "qda"), ("1nn", "3nn")),),
    )


class TestRepartitionStudy:
    def test_each_trial_reproducible_standalone(self, small_table, study):
        # trial t depends only on base_seed + t, not on the trials before it
        for t in (0, 5, 11):
            partition = random_partition(small_table.ids, 0.7, 100 + t, labels=small_table.labels)
            outcome = run_trial(small_table, partition, ("lda", "qda", "1nn", "3nn"), seed=100 + t)
            for spec in ("lda", "qda", "1nn", "3nn"):
                for name in FIGURE_NAMES:
                    assert (
                        study.model_figures[spec][name][t]
                        == outcome.reports[spec].figures.as_dict()[name]
                    )

    def test_contrast_samples_are_left_minus_right(self, study):
        samples = study.contrast_samples["gauss_vs_knn"]["accuracy"]
        left = np.maximum(
            study.model_figures["lda"]["accuracy"], study.model_figures["qda"]["accuracy"]
        )
        right = np.maximum(
            study.model_figures["1nn"]["accuracy"], study.model_figures["3nn"]["accuracy"]
        )
        np.testing.assert_array_equal(samples, left - right)

    def test_self_contrast_is_all_zero(self, small_table):
        study = repartition_study(
            small_table,
            n_trials=5,
            base_seed=0,
            model_specs=("lda",),
            contrasts=(Contrast("lda_vs_lda", ("lda",), ("lda",)),),
        )
        stats = study.contrast_stats["lda_vs_lda"]["accuracy"]
        assert stats.mean == 0.0
        assert stats.empirical_negative_fraction == 1.0
        assert stats.gaussian_negative_fraction == 1.0

    def test_deterministic(self, small_table):
        kwargs = dict(n_trials=6, base_seed=7, model_specs=("lda", "1nn"), contrasts=())
        a = repartition_study(small_table, **kwargs)
        b = repartition_study(small_table, **kwargs)
        for spec in ("lda", "1nn"):
            for name in FIGURE_NAMES:
                np.testing.assert_array_equal(
                    a.model_figures[spec][name], b.model_figures[spec][name]
                )

    def test_empirical_fraction_counts_nonpositive(self):
        from rhythmbench.experiments import _contrast_summary

        summary = _contrast_summary(np.array([-0.1, 0.0, 0.2, 0.3]))
        assert summary.empirical_negative_fraction == pytest.approx(0.5)

    def test_unknown_contrast_member_rejected(self, small_table):
        with pytest.raises(ValueError, match="references models outside"):
            repartition_study(
                small_table,
                n_trials=3,
                base_seed=0,
                model_specs=("lda",),
                contrasts=(Contrast("bad", ("lda",), ("qda",)),),
            )

    def test_needs_two_trials(self, small_table):
        with pytest.raises(ValueError, match="at least 2"):
            repartition_study(small_table, n_trials=1, base_seed=0, model_specs=("lda",), contrasts=())


def _click_clips(n_per_class=4, duration=6.0, seed=0):
    rng = np.random.default_rng(seed)
    clips, labels = [], []
    for c, (kind, tempo) in enumerate((("straight", 110.0), ("swing", 170.0))):
        for i in range(n_per_class):
            clips.append(
                rhythm_clip(kind, tempo + 3.0 * i, duration, SR, rng, clip_id=f"{kind}{i}")
            )
            labels.append(c)
    return clips, np.asarray(labels)


class TestDilationProbe:
    def test_factor_one_is_bypassed(self):
        # a stretch_fn that explodes proves factor 1.0 never resynthesizes
        clips, labels = _click_clips(n_per_class=2)
        features = np.asarray(
            [np.concatenate([[label], np.zeros(3)]) for label in labels], dtype=np.float64
        )
        normalizer = fit_normalizer(features + np.random.default_rng(0).normal(0, 1e-3, features.shape))
        models = {"probe": lambda X: (X[:, 0] > 0.0).astype(int)}

        def exploding_stretch(clip, factor):
            raise AssertionError("stretch_fn must not run at factor 1.0")

        extract_calls = []

        def fake_extract(clip):
            extract_calls.append(clip.id)
            row = features[[c.id for c in clips].index(clip.id)]
            return type("F", (), {"values": row})()

        curve = dilation_probe(
            models,
            normalizer,
            clips,
            labels,
            2,
            factors=(1.0,),
            config=DEFAULT_PIPELINE,
            random_reference=0.5,
            stretch_fn=exploding_stretch,
            extract_fn=fake_extract,
        )
        assert len(extract_calls) == len(clips)
        assert curve.accuracies["probe"] == (1.0,)

    def test_identity_stretch_gives_flat_curve(self):
        clips, labels = _click_clips(n_per_class=3)
        rng = np.random.default_rng(1)
        features = np.asarray([[float(l), rng.normal()] for l in labels])
        normalizer = fit_normalizer(features)
        models = {"gain": lambda X: (X[:, 0] > 0.0).astype(int)}
        table = {clip.id: row for clip, row in zip(clips, features)}

        curve = dilation_probe(
            models,
            normalizer,
            clips,
            labels,
            2,
            factors=(0.8, 1.0, 1.25),
            config=DEFAULT_PIPELINE,
            random_reference=0.5,
            stretch_fn=lambda clip, factor: clip,
            extract_fn=lambda clip: type("F", (), {"values": table[clip.id]})(),
        )
        assert curve.accuracies["gain"] == (1.0, 1.0, 1.0)
        assert curve.factors == (0.8, 1.0, 1.25)

    def test_real_pipeline_end_to_end(self):
        # tiny but genuine: stretch and re-extract a handful of clips
        from rhythmbench.features import extract_feature

        clips, labels = _click_clips(n_per_class=2, duration=6.0, seed=2)
        rows = np.asarray([extract_feature(c).values for c in clips])
        normalizer = fit_normalizer(rows)
        models = fit_models(normalizer.transform(rows), labels, 2, ("1nn",))
        curve = dilation_probe(
            models,
            normalizer,
            clips,
            labels,
            2,
            factors=(0.8, 1.0, 1.25),
            config=DEFAULT_PIPELINE,
            random_reference=0.5,
        )
        assert curve.accuracies["1nn"][1] == 1.0  # training data, factor 1.0
        assert len(curve.accuracies["1nn"]) == 3

    def test_factor_grid_validation(self):
        clips, labels = _click_clips(n_per_class=1)
        normalizer = fit_normalizer(np.zeros((2, 2)) + np.arange(2)[:, None])
        models = {"m": lambda X: np.zeros(len(X), dtype=int)}
        common = dict(
            models=models,
            normalizer=normalizer,
            clips=clips,
            labels=labels,
            n_classes=2,
            config=DEFAULT_PIPELINE,
            random_reference=0.5,
        )
        with pytest.raises(ValueError, match="include 1.0"):
            dilation_probe(factors=(0.8, 1.25), **common)
        with pytest.raises(ValueError, match="strictly increasing"):
            dilation_probe(factors=(1.0, 0.8), **common)
        with pytest.raises(ValueError, match="unsupported dilation factor"):
            dilation_probe(factors=(0.4, 1.0), **common)

    def test_clip_failures_are_attributed(self):
        clips, labels = _click_clips(n_per_class=1)
        normalizer = fit_normalizer(np.arange(4.0).reshape(2, 2))
        models = {"m": lambda X: np.zeros(len(X), dtype=int)}

        def broken_extract(clip):
            raise ValueError("synthetic failure")

        with pytest.raises(ValueError, match="dilation failed for clip"):
            dilation_probe(
                models,
                normalizer,
                clips,
                labels,
                2,
                factors=(1.0,),
                config=DEFAULT_PIPELINE,
                random_reference=0.0,
                extract_fn=broken_extract,
            )


class TestCrossDatasetEval:
    def test_same_table_is_resubstitution(self, blob_table):
        X, y = blob_table.select(blob_table.ids)
        normalizer = fit_normalizer(X)
        models = fit_models(normalizer.transform(X), y, blob_table.n_classes, ("lda", "maj"))
        reports, _ = cross_dataset_eval(models, normalizer, blob_table.vocabulary, blob_table)
        direct, _ = evaluate_models(models, normalizer.transform(X), y, blob_table.n_classes)
        assert reports["lda"].figures.as_tuple() == direct["lda"].figures.as_tuple()

    def test_generalizes_across_same_distribution(self):
        table_a = make_blob_table(seed=0)
        table_b_matrix = make_blob_table(seed=0).matrix + 0.05
        table_b = FeatureTable(
            ids=tuple(f"other{i}" for i in range(len(table_a))),
            labels=table_a.labels,
            matrix=table_b_matrix,
            vocabulary=table_a.vocabulary,
            pipeline_hash=table_a.pipeline_hash,
        )
        X, y = table_a.select(table_a.ids)
        normalizer = fit_normalizer(X)
        models = fit_models(normalizer.transform(X), y, table_a.n_classes, ("qda",))
        reports, _ = cross_dataset_eval(models, normalizer, table_a.vocabulary, table_b)
        assert reports["qda"].figures.accuracy > 0.9

    def test_vocabulary_mismatch_rejected(self, blob_table):
        other = FeatureTable(
            ids=("z1", "z2"),
            labels=("zydeco", "zydeco"),
            matrix=np.zeros((2, 13)),
            vocabulary=("zydeco",),
            pipeline_hash=blob_table.pipeline_hash,
        )
        X, y = blob_table.select(blob_table.ids)
        normalizer = fit_normalizer(X)
        models = fit_models(normalizer.transform(X), y, blob_table.n_classes, ("lda",))
        with pytest.raises(ValueError, match="vocabulary mismatch"):
            cross_dataset_eval(models, normalizer, blob_table.vocabulary, other)


class TestWriteFiguresCsv:
    def test_missing_model_rejected(self, tmp_path, blob_table):
        outcome = run_trial(blob_table, _partition(blob_table), model_specs=("lda",))
        with pytest.raises(ValueError, match="no results for model"):
            write_figures_csv(
                tmp_path / "t.csv",
                ["lda", "unknown"],
                outcome.reports,
                None,
                "p",
                "c",
                0,
            )
