import numpy as np
import pytest

from trendlab import (ContrastMatrix, contrast_components, fit_glm, scale_doses,
                      stack_models, williams_contrasts)

from conftest import two_group_table


class TestWilliamsContrasts:
    def test_size_weighted_pooling(self):
        C = williams_contrasts([33, 28, 32, 31], group_names=["0", "1", "2", "4"])
        np.testing.assert_allclose(C.coefficients[0], [-1, 0, 0, 1])
        np.testing.assert_allclose(C.coefficients[1], [-1, 0, 32 / 63, 31 / 63])
        np.testing.assert_allclose(C.coefficients[2], [-1, 28 / 91, 32 / 91, 31 / 91])
        assert C.labels == ("0 vs 4", "0 vs 2+4", "0 vs 1+2+4")

    def test_two_groups(self):
        C = williams_contrasts([10, 10])
        np.testing.assert_allclose(C.coefficients, [[-1.0, 1.0]])

    def test_equal_sizes(self):
        C = williams_contrasts([7, 7, 7])
        np.testing.assert_allclose(C.coefficients[0], [-1, 0, 1])
        np.testing.assert_allclose(C.coefficients[1], [-1, 0.5, 0.5])

    def test_rows_sum_to_zero(self):
        C = williams_contrasts([5, 9, 13, 21, 8])
        np.testing.assert_allclose(C.coefficients.sum(axis=1), 0.0, atol=1e-12)

    def test_rows_have_both_signs(self):
        C = williams_contrasts([5, 9, 13])
        assert np.all((C.coefficients < 0).any(axis=1))
        assert np.all((C.coefficients > 0).any(axis=1))

    def test_too_few_groups_rejected(self):
        with pytest.raises(ValueError):
            williams_contrasts([10])

    def test_invalid_matrix_rejected(self):
        with pytest.raises(ValueError, match="sum to zero"):
            ContrastMatrix(("bad",), np.array([[1.0, 1.0]]))
        with pytest.raises(ValueError, match="negative and a positive"):
            ContrastMatrix(("bad",), np.array([[0.0, 0.0]]))


class TestContrastComponents:
    def test_two_group_contrast_is_log_odds_ratio(self):
        t = two_group_table()
        entries = contrast_components(t, link="logit")
        assert len(entries) == 1
        est = entries[0].combination() @ entries[0].fit.coefficients
        assert est == pytest.approx(np.log(3.0), abs=1e-8)

    def test_flat_data_gives_zero_estimates(self):
        t = two_group_table(events=(5, 5), trials=(20, 20))
        entries = contrast_components(t, link="logit")
        est = entries[0].combination() @ entries[0].fit.coefficients
        assert abs(est) < 1e-10

    def test_plateau_table_against_delta_method_oracle(self, flutrimazole):
        # oracle: saturated-model contrasts have closed-form Wald statistics
        # c' logit(p_hat) / sqrt(sum_i c_i^2 / (n_i p_hat_i q_hat_i))
        y, n = flutrimazole.events, flutrimazole.trials
        p = y / n
        logits = np.log(p / (1 - p))
        var = 1.0 / (n * p * (1 - p))
        C = williams_contrasts(n, group_names=[f"{d:g}" for d in flutrimazole.doses])
        oracle_t = [(c @ logits) / np.sqrt(np.sum(c ** 2 * var)) for c in C.coefficients]
        np.testing.assert_allclose(oracle_t, [2.219880, 2.786610, 3.345285], atol=1e-5)

        entries = contrast_components(flutrimazole, link="logit")
        for entry, c, t_exp in zip(entries, C.coefficients, oracle_t):
            est = entry.combination() @ entry.fit.coefficients
            se = np.sqrt(c @ entry.fit.model_cov @ c)
            assert est / se == pytest.approx(t_exp, abs=1e-6)

    def test_invariance_to_constant_shift(self, flutrimazole):
        entries = contrast_components(flutrimazole, link="logit")
        for entry in entries:
            c = entry.combination()
            est = c @ entry.fit.coefficients
            shifted = c @ (entry.fit.coefficients + 0.37)
            assert shifted == pytest.approx(est, abs=1e-12)

    def test_k2_contrast_matches_two_group_slope_wald(self):
        t = two_group_table(events=(4, 11), trials=(18, 21), doses=(1.0, 2.0))
        entry = contrast_components(t, link="logit")[0]
        c = entry.combination()
        t_contrast = (c @ entry.fit.coefficients) / np.sqrt(c @ entry.fit.model_cov @ c)
        slope_fit = fit_glm(t, scale_doses(t, "ord"), link="logit")
        t_slope = slope_fit.coefficients[1] / slope_fit.std_errors()[1]
        assert t_contrast == pytest.approx(t_slope, abs=1e-8)

    def test_mismatched_matrix_rejected(self, flutrimazole):
        C = williams_contrasts([10, 10])
        with pytest.raises(ValueError, match="columns"):
            contrast_components(flutrimazole, link="logit", C=C)

    def test_entries_stack_with_regression_slopes(self, flutrimazole):
        slope = fit_glm(flutrimazole, scale_doses(flutrimazole, "ari"), link="logit")
        entries = [type(contrast_components(flutrimazole)[0])(slope, "slope", "ari")]
        entries += contrast_components(flutrimazole, link="logit")
        with pytest.warns(UserWarning):
            joint = stack_models(entries)
        assert joint.n_components == 4
        assert joint.influence_unit == "cell"
