import numpy as np
import pytest

from labelforge import (
    LabelForgeError,
    LabelValue,
    Tier,
    consistency_tier,
    disagreement_counts,
    expected_random_agreement,
    inconsistency_level,
)

from conftest import make_matrix

PAIR_UNIVERSE = 5068


class TestTier:
    def test_published_anchor_rows(self):
        assert consistency_tier(50, 1000) is Tier.HIGH
        assert consistency_tier(141, 1000) is Tier.MEDIUM
        assert consistency_tier(150, 1000) is Tier.LOW

    def test_boundaries_are_closed(self):
        # 95% agreement is HIGH, 85% is LOW: boundaries belong to the outer tiers
        assert consistency_tier(50, 1000) is Tier.HIGH
        assert consistency_tier(51, 1000) is Tier.MEDIUM
        assert consistency_tier(149, 1000) is Tier.MEDIUM
        assert consistency_tier(150, 1000) is Tier.LOW
        # also exact at awkward population sizes
        assert consistency_tier(1, 20) is Tier.HIGH
        assert consistency_tier(3, 20) is Tier.LOW

    def test_reference_tiers_all_rows(self, annotator_difference_rows):
        for row in annotator_difference_rows:
            tier = consistency_tier(int(row["n_d"]), 1000)
            assert tier.value == row["tier"], row["attribute"]

    def test_reference_tier_counts(self, annotator_difference_rows):
        tiers = [consistency_tier(int(r["n_d"]), 1000) for r in annotator_difference_rows]
        assert tiers.count(Tier.HIGH) == 12
        assert tiers.count(Tier.MEDIUM) == 8
        assert tiers.count(Tier.LOW) == 20

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            consistency_tier(1, 0)
        with pytest.raises(ValueError):
            consistency_tier(11, 10)


class TestExpectedRandomAgreement:
    def test_anchors(self):
        assert expected_random_agreement(0.5) == 0.50
        assert expected_random_agreement(0.9) == pytest.approx(0.82, abs=1e-15)
        assert expected_random_agreement(1.0) == 1.0
        assert expected_random_agreement(0.0) == 1.0

    def test_symmetric_in_f(self):
        for f in np.linspace(0, 1, 21):
            assert expected_random_agreement(f) == pytest.approx(
                expected_random_agreement(1 - f))

    def test_range_check(self):
        with pytest.raises(ValueError):
            expected_random_agreement(1.2)


class TestInconsistencyLevel:
    def test_published_anchor_rows(self):
        male = inconsistency_level("Male", 12, 4488, 5648, PAIR_UNIVERSE)
        assert male.p_in == pytest.approx(0.005, abs=1e-3)
        pointy = inconsistency_level("Pointy_Nose", 860, 2798, 7338, PAIR_UNIVERSE)
        assert pointy.p_in == pytest.approx(0.425, abs=1e-3)

    def test_reference_all_rows(self, pair_conflict_rows):
        for row in pair_conflict_rows:
            stats = inconsistency_level(row["attribute"], int(row["n_differ"]),
                                        int(row["n_p"]), int(row["n_n"]),
                                        PAIR_UNIVERSE)
            assert stats.p_in == pytest.approx(float(row["p_in"]), abs=1e-3), \
                row["attribute"]

    def test_zero_differ_is_perfectly_consistent(self):
        assert inconsistency_level("x", 0, 100, 10036, PAIR_UNIVERSE).p_in == 0.0

    def test_pair_count_mismatch(self):
        with pytest.raises(LabelForgeError) as err:
            inconsistency_level("x", 1, 100, 100, PAIR_UNIVERSE)
        assert err.value.code == "PAIR_COUNT_MISMATCH"

    def test_degenerate_frequency(self):
        with pytest.raises(LabelForgeError) as err:
            inconsistency_level("x", 0, 2 * PAIR_UNIVERSE, 0, PAIR_UNIVERSE)
        assert err.value.code == "DEGENERATE_FREQUENCY"

    def test_symmetric_under_np_nn_swap(self):
        a = inconsistency_level("x", 97, 3000, 7136, PAIR_UNIVERSE)
        b = inconsistency_level("x", 97, 7136, 3000, PAIR_UNIVERSE)
        assert a.p_in == pytest.approx(b.p_in)

    def test_linear_in_n_differ(self):
        base = inconsistency_level("x", 10, 3000, 7136, PAIR_UNIVERSE).p_in
        assert inconsistency_level("x", 30, 3000, 7136, PAIR_UNIVERSE).p_in == \
            pytest.approx(3 * base)

    def test_random_labels_score_one(self):
        # labels drawn independently at frequency f should measure p_in ~ 1
        rng = np.random.default_rng(7)
        n_total = 100_000
        for f in (0.1, 0.3, 0.5):
            left = rng.random(n_total) < f
            right = rng.random(n_total) < f
            n_differ = int(np.sum(left != right))
            n_p = int(np.sum(left) + np.sum(right))
            n_n = 2 * n_total - n_p
            stats = inconsistency_level("sim", n_differ, n_p, n_n, n_total)
            assert stats.p_in == pytest.approx(1.0, abs=0.05), f


class TestDisagreementCounts:
    def test_identical_passes(self):
        rows = {f"i{k}": [1 if k % 2 else -1] for k in range(1000)}
        a = make_matrix(["Eyeglasses"], rows)
        b = make_matrix(["Eyeglasses"], rows)
        (report,) = disagreement_counts(a, b)
        assert (report.n_d, report.n_images) == (0, 1000)
        assert report.tier is Tier.HIGH

    def test_counts_binary_differences(self):
        rows_a = {f"i{k}": [1] for k in range(1000)}
        rows_b = dict(rows_a)
        for k in (3, 55, 700):
            rows_b[f"i{k}"] = [-1]
        (report,) = disagreement_counts(make_matrix(["Eyeglasses"], rows_a),
                                        make_matrix(["Eyeglasses"], rows_b))
        assert report.n_d == 3

    def test_info_not_visible_excluded(self):
        rows_a = {f"i{k}": [1] for k in range(1000)}
        rows_b = dict(rows_a)
        rows_b["i5"] = [0]
        (report,) = disagreement_counts(make_matrix(["MSO"], rows_a),
                                        make_matrix(["MSO"], rows_b))
        assert report.n_images == 999
        assert report.n_d == 0

    def test_unusable_excluded_everywhere(self):
        rows = {"a": [1], "b": [-1], "junk": [1]}
        pass_a = make_matrix(["Male"], rows, unusable=["junk"])
        pass_b = make_matrix(["Male"], rows, unusable=["junk"])
        (report,) = disagreement_counts(pass_a, pass_b)
        assert report.n_images == 2

    def test_shape_mismatch(self):
        a = make_matrix(["Male"], {"a": [1]})
        b = make_matrix(["Male"], {"b": [1]})
        with pytest.raises(LabelForgeError) as err:
            disagreement_counts(a, b)
        assert err.value.code == "MATRIX_SHAPE_MISMATCH"
