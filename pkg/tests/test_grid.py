import numpy as np
import pytest

from fdce.estimators.base import EstimatorContext
from fdce.estimators.grid import (
    GriddedMmseEstimator,
    StructuredMmseEstimator,
    build_grid,
    circulant_grid,
    circulant_spectra,
    conditional_mmse_filter,
    gridded_estimate,
    gridded_log_weights,
    structured_bank_from_spectra,
    structured_estimate,
    ula_angular_covariance,
)
from fdce.exceptions import InvalidDimensionError, UnsupportedConfigurationError
from fdce.linalg import Shape2D, kron, softmax, unitary_dft
from fdce.rng import complex_normal, derived_rng

SHAPE = Shape2D(4, 8)


def ctx_at(snr_db, shape=SHAPE, n_p=None):
    return EstimatorContext.for_snr(shape, snr_db, n_p=n_p)


def random_psd(rng, n, *, trace=None):
    a = complex_normal(rng, (n, n))
    c = a @ a.conj().T
    if trace is not None:
        c *= trace / np.trace(c).real
    return c


class TestConditionalFilter:
    def test_zero_covariance_gives_zero_filter(self):
        ctx = ctx_at(5.0)
        w = conditional_mmse_filter(np.zeros((32, 32), dtype=complex), ctx)
        assert np.max(np.abs(w)) == 0.0

    def test_identity_covariance_analytic(self):
        ctx = ctx_at(5.0)
        w = conditional_mmse_filter(np.eye(32, dtype=complex), ctx)
        expected = ctx.x.conj().T / (1.0 + ctx.sigma2)
        assert np.max(np.abs(w - expected)) < 1e-12

    def test_matches_dense_inverse(self):
        shape = Shape2D(2, 2)
        ctx = ctx_at(8.0, shape=shape)
        c = random_psd(derived_rng(0, "c"), 4)
        w = conditional_mmse_filter(c, ctx)
        dense = c @ ctx.x.conj().T @ np.linalg.inv(
            ctx.x @ c @ ctx.x.conj().T + ctx.sigma2 * np.eye(4)
        )
        assert np.max(np.abs(w - dense)) < 1e-10


class TestBuildGrid:
    def test_single_point_bank(self):
        ctx = ctx_at(5.0, shape=Shape2D(2, 4))
        grid, bank = build_grid(Shape2D(2, 4), 1, ctx)
        assert bank.size == 1
        w_direct = conditional_mmse_filter(grid.covs[0], ctx)
        assert np.max(np.abs(bank.w_filters[0] - w_direct)) < 1e-12

    def test_sixteen_points_finite(self):
        ctx = ctx_at(5.0, shape=Shape2D(2, 4))
        grid, bank = build_grid(Shape2D(2, 4), 16, ctx)
        assert bank.size == 16
        assert np.all(np.isfinite(bank.b))
        assert len(grid.labels) == 16

    def test_covariances_toeplitz_per_axis(self):
        c = ula_angular_covariance(6, 20.0, 10.0)
        for off in range(1, 6):
            diag = np.diagonal(c, offset=off)
            assert np.max(np.abs(diag - diag[0])) < 1e-12

    def test_zero_grid_rejected(self):
        ctx = ctx_at(5.0)
        with pytest.raises(InvalidDimensionError):
            build_grid(SHAPE, 0, ctx)


class TestGriddedEstimate:
    def test_single_point_collapses_to_filter(self):
        ctx = ctx_at(5.0, shape=Shape2D(2, 4))
        _, bank = build_grid(Shape2D(2, 4), 1, ctx)
        y = complex_normal(derived_rng(1, "y"), 8)
        out = gridded_estimate(y, bank, ctx)
        assert np.max(np.abs(out - bank.w_filters[0] @ y)) < 1e-12

    def test_duplicate_points_equal_single(self):
        ctx = ctx_at(5.0, shape=Shape2D(2, 4))
        _, bank1 = build_grid(Shape2D(2, 4), 1, ctx)
        from fdce.estimators.grid import GriddedFilterBank

        bank2 = GriddedFilterBank(
            w_filters=np.repeat(bank1.w_filters, 2, axis=0),
            b=np.repeat(bank1.b, 2),
        )
        y = complex_normal(derived_rng(2, "y"), 8)
        assert np.max(np.abs(
            gridded_estimate(y, bank2, ctx) - gridded_estimate(y, bank1, ctx)
        )) < 1e-12

    def test_weights_form_probability_vector(self):
        ctx = ctx_at(5.0)
        _, bank = build_grid(SHAPE, 8, ctx)
        y = complex_normal(derived_rng(3, "y"), (6, 32))
        _, e = gridded_log_weights(y, bank, ctx)
        s = softmax(e)
        assert np.all(s >= 0)
        assert np.max(np.abs(s.sum(axis=1) - 1.0)) < 1e-12

    def test_weight_concentrates_on_source_component(self):
        # Draw channels from grid member 5; at high SNR its weight should
        # win most of the time.
        ctx = ctx_at(20.0)
        dense, _ = circulant_grid(SHAPE, 8, ctx)
        spectra = circulant_spectra(SHAPE, 8)
        q = kron(unitary_dft(8), unitary_dft(4))
        c5 = q.conj().T @ (spectra[5][:, None] * q)
        rng = derived_rng(4, "mc")
        chol = np.linalg.cholesky(c5 + 1e-12 * np.eye(32))
        wins = 0
        trials = 500
        for i in range(trials):
            h = chol @ complex_normal(rng, 32)
            y = ctx.apply_x(h) + complex_normal(rng, 32, var=ctx.sigma2)
            _, e = gridded_log_weights(y, dense, ctx)
            wins += int(np.argmax(e[0]) == 5)
        assert wins / trials >= 0.8


class TestStructured:
    def test_single_column_bank_applies_fixed_gains(self):
        ctx = ctx_at(5.0)
        spectra = circulant_spectra(SHAPE, 1)
        bank = structured_bank_from_spectra(spectra, ctx)
        y = complex_normal(derived_rng(5, "y"), 32)
        u = ctx.spectral_observation(y)
        expected = ctx.estimate_from_gains(bank.a_mat[:, 0], u)
        assert np.max(np.abs(structured_estimate(y, bank, ctx) - expected)) < 1e-12

    def test_zero_observation_gives_zero(self):
        ctx = ctx_at(5.0)
        _, bank = circulant_grid(SHAPE, 8, ctx)
        out = structured_estimate(np.zeros(32, dtype=complex), bank, ctx)
        assert np.max(np.abs(out)) == 0.0

    def test_flat_spectrum_gain(self):
        ctx = ctx_at(5.0)
        bank = structured_bank_from_spectra(np.ones((1, 32)), ctx)
        assert np.max(np.abs(bank.a_mat - 1.0 / (1.0 + ctx.sigma2))) < 1e-12

    def test_disjoint_spectra_give_disjoint_gain_columns(self):
        ctx = ctx_at(5.0)
        spectra = np.zeros((2, 32))
        spectra[0, :16] = 1.0
        spectra[1, 16:] = 1.0
        bank = structured_bank_from_spectra(spectra, ctx)
        assert np.all(bank.a_mat[16:, 0] == 0.0)
        assert np.all(bank.a_mat[:16, 1] == 0.0)

    def test_subsampled_pilots_rejected(self):
        ctx = ctx_at(5.0, n_p=4)
        spectra = circulant_spectra(SHAPE, 2)
        bank = structured_bank_from_spectra(spectra, ctx)
        with pytest.raises(UnsupportedConfigurationError):
            structured_estimate(np.zeros(16, dtype=complex), bank, ctx)


class TestEquivalence:
    @pytest.mark.parametrize("snr_db", [0.0, 5.0, 10.0])
    def test_gridded_equals_structured_on_circulant_banks(self, snr_db):
        ctx = ctx_at(snr_db)
        dense, structured = circulant_grid(SHAPE, 8, ctx)
        rng = derived_rng(6, "y", int(snr_db * 10))
        y = complex_normal(rng, (50, 32))
        a = gridded_estimate(y, dense, ctx)
        b = structured_estimate(y, structured, ctx)
        assert np.max(np.abs(a - b)) < 1e-9

    def test_dense_offsets_match_analytic(self):
        ctx = ctx_at(5.0)
        dense, structured = circulant_grid(SHAPE, 8, ctx)
        assert np.max(np.abs(dense.b - structured.b)) < 1e-9


class TestMmseOptimality:
    def test_gridded_beats_every_fixed_filter_on_mixture(self):
        shape = Shape2D(2, 4)
        ctx = ctx_at(5.0, shape=shape)
        dense, _ = circulant_grid(shape, 4, ctx)
        spectra = circulant_spectra(shape, 4)
        q = kron(unitary_dft(4), unitary_dft(2))
        chols = [
            np.linalg.cholesky(
                q.conj().T @ (s[:, None] * q) + 1e-12 * np.eye(8)
            )
            for s in spectra
        ]
        rng = derived_rng(7, "mc")
        m = 10_000
        comp = rng.integers(0, 4, size=m)
        h = np.stack([chols[c] @ complex_normal(rng, 8) for c in comp])
        y = ctx.apply_x(h) + complex_normal(rng, (m, 8), var=ctx.sigma2)
        se_grid = np.sum(np.abs(gridded_estimate(y, dense, ctx) - h) ** 2, axis=1)
        for i in range(4):
            se_fixed = np.sum(np.abs(y @ dense.w_filters[i].T - h) ** 2, axis=1)
            diff = se_grid - se_fixed
            margin = 3.0 * diff.std() / np.sqrt(m)
            assert diff.mean() < margin

    def test_true_covariance_filter_beats_mismatched(self):
        shape = Shape2D(2, 4)
        ctx = ctx_at(5.0, shape=shape)
        _, bank = build_grid(shape, 4, ctx)
        grid, _ = build_grid(shape, 4, ctx)
        rng = derived_rng(8, "mc")
        m = 8000
        target = 2
        chol = np.linalg.cholesky(grid.covs[target] + 1e-12 * np.eye(8))
        h = (complex_normal(rng, (m, 8))) @ chol.T
        y = ctx.apply_x(h) + complex_normal(rng, (m, 8), var=ctx.sigma2)
        se_true = np.sum(np.abs(y @ bank.w_filters[target].T - h) ** 2, axis=1)
        for i in range(4):
            if i == target:
                continue
            se_other = np.sum(np.abs(y @ bank.w_filters[i].T - h) ** 2, axis=1)
            diff = se_true - se_other
            margin = 3.0 * diff.std() / np.sqrt(m)
            assert diff.mean() < margin


class TestWrappers:
    def test_gridded_estimator_fit_predict(self):
        est = GriddedMmseEstimator(n_rx=2, n_tx=4, snr_db=5.0, grid_size=4).fit()
        y = complex_normal(derived_rng(9, "y"), (3, 8))
        out = est.predict(y)
        assert out.shape == (3, 8)
        ref = gridded_estimate(y, est.bank_, est.context_)
        assert np.array_equal(out, ref)

    def test_structured_estimator_fit_predict(self):
        est = StructuredMmseEstimator(n_rx=4, n_tx=8, snr_db=5.0, grid_size=8).fit()
        y = complex_normal(derived_rng(10, "y"), (3, 32))
        assert est.predict(y).shape == (3, 32)


class TestGuardPaths:
    def test_degenerate_offset_raises(self):
        # At sigma2 = 0 with an invertible system, I - X W is exactly zero in
        # the scalar geometry, so the log-determinant offset is undefined.
        from fdce.estimators.grid import _log_evidence_offset
        from fdce.exceptions import DegenerateGridError

        shape = Shape2D(1, 1)
        ctx = EstimatorContext.create(shape, sigma2=0.0)
        w = conditional_mmse_filter(np.eye(1, dtype=complex), ctx)
        with pytest.raises(DegenerateGridError):
            _log_evidence_offset(w, ctx)

    def test_high_snr_weights_stay_finite(self):
        # exp(tr(...)) would overflow without the softmax max-shift.
        ctx = ctx_at(60.0)
        _, bank = build_grid(SHAPE, 4, ctx)
        y = 50.0 * complex_normal(derived_rng(30, "y"), (3, 32))
        out = gridded_estimate(y, bank, ctx)
        assert np.all(np.isfinite(out))
