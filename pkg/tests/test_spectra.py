import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lumitact import cie
from lumitact.errors import DegenerateInput, GridMismatch, UnknownPreset
from lumitact.spectra import (
    FluorescentMaterial,
    SampledSpectrum,
    SkewCauchyParams,
    absorbed_fraction,
    blue_led_spectrum,
    eval_skew_cauchy,
    fit_spectrum,
    initial_guess,
    make_paint_preset,
    read_spectrum_csv,
    sample_model,
    skew_cauchy_jacobian,
    spectrum_to_rgb,
    write_fit_report,
)

params_strategy = st.builds(
    SkewCauchyParams,
    lambda0=st.floats(250.0, 950.0),
    gamma=st.floats(1.0, 150.0),
    omega=st.floats(-20.0, 20.0),
    h=st.floats(1e-3, 1e5),
)


class TestSkewCauchyModel:
    def test_peak_value_example(self):
        p = SkewCauchyParams(600.0, 10.0, 2.0, 200.0)
        assert eval_skew_cauchy(p, 600.0) == pytest.approx(1.0, abs=1e-15)

    def test_symmetry_when_unskewed(self):
        p = SkewCauchyParams(600.0, 10.0, 0.0, 200.0)
        for delta in (1.0, 10.0, 55.0, 100.0):
            assert abs(eval_skew_cauchy(p, 600.0 + delta) - eval_skew_cauchy(p, 600.0 - delta)) < 1e-12

    @given(params_strategy)
    @settings(max_examples=200, deadline=None)
    def test_peak_identity_property(self, p):
        expected = p.h / (2.0 * p.gamma**2)
        assert eval_skew_cauchy(p, p.lambda0) == pytest.approx(expected, rel=1e-12)

    @given(params_strategy, st.floats(200.0, 1000.0))
    @settings(max_examples=200, deadline=None)
    def test_strictly_positive(self, p, lam):
        # the arctan bracket lies in (0, 1), so f > 0 everywhere
        assert eval_skew_cauchy(p, lam) > 0.0

    def test_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        lam = cie.DEFAULT_WAVELENGTHS
        for _ in range(10):
            x = np.array([
                rng.uniform(420, 680), rng.uniform(5, 80),
                rng.uniform(-5, 5), rng.uniform(10, 5000),
            ])
            jac = skew_cauchy_jacobian(SkewCauchyParams.from_array(x), lam)
            for i in range(4):
                step = np.zeros(4)
                step[i] = 1e-6 * max(abs(x[i]), 1.0)
                hi = eval_skew_cauchy(SkewCauchyParams.from_array(x + step), lam)
                lo = eval_skew_cauchy(SkewCauchyParams.from_array(x - step), lam)
                fd = (hi - lo) / (2.0 * step[i])
                assert np.allclose(fd, jac[:, i], rtol=1e-4, atol=1e-8)

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            SkewCauchyParams(600.0, -1.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            SkewCauchyParams(600.0, 10.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            SkewCauchyParams(100.0, 10.0, 0.0, 1.0)


class TestSampledSpectrum:
    def test_default_grid(self):
        s = SampledSpectrum()
        assert s.values.size == 69
        assert s.wavelengths[0] == 380.0
        assert s.wavelengths[-1] == 720.0

    def test_grid_must_divide(self):
        with pytest.raises(ValueError):
            SampledSpectrum(380.0, 720.0, 7.0, np.zeros(50))

    def test_negative_values_rejected(self):
        vals = np.zeros(69)
        vals[3] = -0.1
        with pytest.raises(ValueError):
            SampledSpectrum(values=vals)

    def test_add_requires_same_grid(self):
        a = SampledSpectrum.flat(1.0)
        b = SampledSpectrum(400.0, 700.0, 5.0, np.ones(61))
        with pytest.raises(GridMismatch):
            a + b

    def test_resample_any_row_order(self):
        w = np.array([660.0, 405.0, 500.0, 600.0])
        v = np.array([0.2, 0.5, 1.0, 0.4])
        s = SampledSpectrum.from_samples(w, v)
        assert s.values.size == 69
        idx_500 = int((500 - 380) / 5)
        assert s.values[idx_500] == pytest.approx(1.0)


class TestSampleModel:
    def test_argmax_at_peak_when_symmetric(self):
        p = SkewCauchyParams(550.0, 20.0, 0.0, 800.0)
        s = sample_model(p)
        assert s.wavelengths[np.argmax(s.values)] == 550.0

    def test_all_non_negative(self):
        p = SkewCauchyParams(430.0, 8.0, -3.0, 50.0)
        assert np.all(sample_model(p).values >= 0.0)

    def test_matches_scalar_evaluation_loop(self):
        # oracle: independent per-wavelength closed-form evaluation
        p = SkewCauchyParams(550.0, 20.0, 1.0, 800.0)
        s = sample_model(p)
        for i, w in enumerate(s.wavelengths):
            d = w - 550.0
            expected = 800.0 / (20.0**2 + d * d) * (np.arctan(1.0 * d / 20.0) / np.pi + 0.5)
            assert s.values[i] == pytest.approx(expected, rel=1e-14)


class TestFit:
    def test_noiseless_recovery(self):
        true = SkewCauchyParams(552.5, 23.0, 1.7, 900.0)
        result = fit_spectrum(sample_model(true))
        rel = np.abs(result.params.as_array() - true.as_array()) / np.abs(true.as_array())
        assert np.all(rel < 1e-4)
        assert result.converged

    def test_refit_idempotent(self):
        true = SkewCauchyParams(500.0, 35.0, -0.8, 400.0)
        first = fit_spectrum(sample_model(true))
        second = fit_spectrum(sample_model(true), init=first.params)
        assert abs(second.residual - first.residual) < 1e-10

    def test_noisy_recovery_median(self):
        true = SkewCauchyParams(552.5, 23.0, 1.7, 900.0)
        clean = sample_model(true)
        errors = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            noise = rng.uniform(-1.0, 1.0, clean.values.size) * 0.01 * clean.values.max()
            noisy = clean.with_values(np.clip(clean.values + noise, 0.0, None))
            result = fit_spectrum(noisy)
            errors.append(abs(result.params.lambda0 - true.lambda0))
        assert np.median(errors) < 2.0

    def test_all_zero_raises(self):
        with pytest.raises(DegenerateInput):
            fit_spectrum(SampledSpectrum())

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            fit_spectrum(SampledSpectrum(380.0, 400.0, 5.0, np.ones(5)))

    def test_unconverged_flag_on_iteration_cap(self):
        true = SkewCauchyParams(560.0, 30.0, 2.0, 700.0)
        bad_init = SkewCauchyParams(400.0, 120.0, -10.0, 5.0)
        result = fit_spectrum(sample_model(true), init=bad_init, max_iterations=1)
        assert not result.converged
        assert result.iterations <= 1

    def test_initial_guess_reasonable(self):
        true = SkewCauchyParams(600.0, 15.0, 0.0, 500.0)
        guess = initial_guess(sample_model(true))
        assert abs(guess.lambda0 - 600.0) <= 5.0


class TestPresets:
    def test_stokes_shifts(self):
        assert make_paint_preset("red").stokes_shift == 100.0
        assert make_paint_preset("green").stokes_shift == 50.0

    def test_absorption_peak_at_excitation(self):
        for name in ("red", "green"):
            assert make_paint_preset(name).absorption.lambda0 == 450.0

    def test_conversion_efficiency_in_calibrated_range(self):
        for name in ("red", "green"):
            assert 0.02 <= make_paint_preset(name).conversion_efficiency <= 0.05

    def test_unknown_preset(self):
        with pytest.raises(UnknownPreset):
            make_paint_preset("blue")

    def test_emission_colors_dominant(self):
        red = spectrum_to_rgb(sample_model(make_paint_preset("red").emission))
        assert red[0] > red[1] and red[0] > red[2]
        green = spectrum_to_rgb(sample_model(make_paint_preset("green").emission))
        assert green[1] > green[0] and green[1] > green[2]

    def test_base_reflectance_hues(self):
        red = spectrum_to_rgb(make_paint_preset("red").base_reflectance)
        green = spectrum_to_rgb(make_paint_preset("green").base_reflectance)
        assert red[0] > red[1] and green[1] > green[0]

    def test_stokes_invariant_enforced(self):
        red = make_paint_preset("red")
        with pytest.raises(ValueError):
            FluorescentMaterial(
                absorption=red.absorption,
                emission=SkewCauchyParams(600.0, 30.0, 1.0, 10.0),  # wrong shift
                stokes_shift=100.0,
                conversion_efficiency=0.035,
                base_reflectance=red.base_reflectance,
            )


class TestColorConversion:
    def test_flat_spectrum_is_white(self):
        rgb = spectrum_to_rgb(SampledSpectrum.flat(1.0))
        assert rgb.max() / rgb.min() < 1.05

    def test_zero_spectrum(self):
        assert np.allclose(spectrum_to_rgb(SampledSpectrum()), 0.0)

    def test_450nm_spike_is_blue(self):
        vals = np.zeros(69)
        vals[int((450 - 380) / 5)] = 1.0
        rgb = spectrum_to_rgb(SampledSpectrum(values=vals))
        # oracle: direct integration against the embedded observer table
        xyz = np.array([cie.CIE_X[14], cie.CIE_Y[14], cie.CIE_Z[14]]) * 5.0
        expected = cie.XYZ_TO_LINEAR_SRGB @ xyz
        flat = cie.XYZ_TO_LINEAR_SRGB @ (cie.observer_functions().sum(axis=1) * 5.0)
        expected = expected / flat
        assert np.allclose(rgb, expected, rtol=1e-12)
        assert rgb[2] > rgb[0] and rgb[2] > rgb[1]

    def test_linearity(self):
        rng = np.random.default_rng(1)
        s1 = SampledSpectrum(values=rng.uniform(0, 1, 69))
        s2 = SampledSpectrum(values=rng.uniform(0, 1, 69))
        a, b = 0.7, 2.1
        combined = spectrum_to_rgb(s1.scaled(a) + s2.scaled(b))
        parts = a * spectrum_to_rgb(s1) + b * spectrum_to_rgb(s2)
        assert np.allclose(combined, parts, atol=1e-9)

    def test_grid_mismatch(self):
        with pytest.raises(GridMismatch):
            spectrum_to_rgb(SampledSpectrum(400.0, 700.0, 5.0, np.ones(61)))


class TestAbsorbedFraction:
    def test_blue_led_on_blue_absorber(self):
        paint = make_paint_preset("red")
        frac = absorbed_fraction(blue_led_spectrum(), paint.absorption)
        assert 0.5 < frac <= 1.0

    def test_fraction_bounds(self):
        paint = make_paint_preset("green")
        far_red = sample_model(SkewCauchyParams(700.0, 5.0, 0.0, 100.0))
        assert absorbed_fraction(far_red, paint.absorption) < 0.2


class TestCsvIo:
    def test_round_trip(self, tmp_path):
        true = SkewCauchyParams(560.0, 25.0, 0.5, 600.0)
        s = sample_model(true)
        path = tmp_path / "meas.csv"
        with open(path, "w") as fh:
            fh.write("wavelength_nm,value\n")
            for w, v in list(zip(s.wavelengths, s.values))[::-1]:  # reversed order
                fh.write(f"{w},{v}\n")
        loaded = read_spectrum_csv(path)
        assert np.allclose(loaded.values, s.values, atol=1e-12)

    def test_missing_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            read_spectrum_csv(path)

    def test_fit_report(self, tmp_path):
        true = SkewCauchyParams(560.0, 25.0, 0.5, 600.0)
        measured = sample_model(true)
        result = fit_spectrum(measured)
        path = tmp_path / "report.csv"
        write_fit_report(path, measured, result)
        lines = path.read_text().splitlines()
        assert lines[1] == "wavelength_nm,measured,fitted"
        assert len(lines) == 2 + 69
