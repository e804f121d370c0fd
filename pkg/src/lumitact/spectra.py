"""Spectral models for fluorescent paint calibration and light emission.

The central model is a four-parameter skewed Cauchy lobe

    f(lambda) = h / (gamma^2 + (lambda - lambda0)^2)
                * ((1/pi) * arctan(omega * (lambda - lambda0) / gamma) + 1/2)

used for both the absorption and the emission band of a fluorescent
paint.  Everything here is a pure function over immutable values; the
render workers evaluate these concurrently without locking.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cie
from .errors import DegenerateInput, GridMismatch, UnknownPreset

__all__ = [
    "SampledSpectrum",
    "SkewCauchyParams",
    "FluorescentMaterial",
    "FitResult",
    "eval_skew_cauchy",
    "skew_cauchy_jacobian",
    "sample_model",
    "initial_guess",
    "fit_spectrum",
    "make_paint_preset",
    "material_from_emission_fit",
    "blue_led_spectrum",
    "spectrum_to_xyz",
    "spectrum_to_rgb",
    "absorbed_fraction",
    "read_spectrum_csv",
    "write_fit_report",
]

PAINT_STOKES_SHIFTS_NM = {"red": 100.0, "green": 50.0}
EXCITATION_PEAK_NM = 450.0
DEFAULT_CONVERSION_EFFICIENCY = 0.035  # midpoint of the calibrated 2-5% range

_LAMBDA0_BOUNDS = (200.0, 1000.0)
_GAMMA_BOUNDS = (1e-2, 1e4)
_OMEGA_BOUNDS = (-100.0, 100.0)
_H_MIN = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(a, dtype=float))
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class SampledSpectrum:
    """Wavelength-binned curve on a uniform grid (values unitless, >= 0)."""

    lambda_min: float = cie.DEFAULT_LAMBDA_MIN
    lambda_max: float = cie.DEFAULT_LAMBDA_MAX
    step: float = cie.DEFAULT_STEP
    values: np.ndarray = field(default_factory=lambda: np.zeros(cie.DEFAULT_SAMPLE_COUNT))

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _readonly(self.values))
        span = self.lambda_max - self.lambda_min
        n_steps = span / self.step
        if abs(n_steps - round(n_steps)) > 1e-9:
            raise ValueError("(lambda_max - lambda_min) must be an integer multiple of step")
        expected = int(round(n_steps)) + 1
        if self.values.ndim != 1 or self.values.size != expected:
            raise ValueError(f"expected {expected} samples, got {self.values.size}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("spectral samples must be finite")
        if np.any(self.values < 0.0):
            raise ValueError("spectral samples must be non-negative")

    @property
    def wavelengths(self) -> np.ndarray:
        return self.lambda_min + self.step * np.arange(self.values.size)

    def same_grid(self, other: "SampledSpectrum") -> bool:
        return (
            self.lambda_min == other.lambda_min
            and self.lambda_max == other.lambda_max
            and self.step == other.step
        )

    def _require_grid(self, other: "SampledSpectrum") -> None:
        if not self.same_grid(other):
            raise GridMismatch(
                f"grids differ: [{self.lambda_min}, {self.lambda_max}] / {self.step} vs "
                f"[{other.lambda_min}, {other.lambda_max}] / {other.step}"
            )

    def with_values(self, values: np.ndarray) -> "SampledSpectrum":
        return SampledSpectrum(self.lambda_min, self.lambda_max, self.step, values)

    def __add__(self, other: "SampledSpectrum") -> "SampledSpectrum":
        self._require_grid(other)
        return self.with_values(self.values + other.values)

    def scaled(self, factor: float) -> "SampledSpectrum":
        return self.with_values(self.values * factor)

    def normalized(self) -> "SampledSpectrum":
        """Scale so the largest sample equals one."""
        peak = float(self.values.max())
        if peak <= 0.0:
            raise DegenerateInput("cannot normalize an all-zero spectrum")
        return self.scaled(1.0 / peak)

    @classmethod
    def flat(cls, value: float = 1.0) -> "SampledSpectrum":
        return cls(values=np.full(cie.DEFAULT_SAMPLE_COUNT, value))

    @classmethod
    def from_samples(cls, wavelengths_nm: np.ndarray, values: np.ndarray) -> "SampledSpectrum":
        """Resample scattered (wavelength, value) pairs onto the default grid.

        Rows may arrive in any order; interpolation is linear with edge
        extension beyond the measured range.
        """
        w = np.asarray(wavelengths_nm, dtype=float)
        v = np.asarray(values, dtype=float)
        if w.size == 0:
            raise ValueError("no samples to resample")
        order = np.argsort(w)
        resampled = np.interp(cie.DEFAULT_WAVELENGTHS, w[order], v[order])
        return cls(values=np.clip(resampled, 0.0, None))


@dataclass(frozen=True)
class SkewCauchyParams:
    """One spectral lobe: peak wavelength, width, skewness, height."""

    lambda0: float
    gamma: float
    omega: float
    h: float

    def __post_init__(self) -> None:
        if not (self.gamma > 0.0):
            raise ValueError("gamma must be > 0")
        if not (self.h > 0.0):
            raise ValueError("h must be > 0")
        if not (_LAMBDA0_BOUNDS[0] <= self.lambda0 <= _LAMBDA0_BOUNDS[1]):
            raise ValueError("lambda0 must lie within [200, 1000] nm")

    def as_array(self) -> np.ndarray:
        return np.array([self.lambda0, self.gamma, self.omega, self.h])

    @classmethod
    def from_array(cls, x: np.ndarray) -> "SkewCauchyParams":
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]))


@dataclass(frozen=True)
class FluorescentMaterial:
    """Calibrated paint: absorption and emission lobes plus base reflectance."""

    absorption: SkewCauchyParams
    emission: SkewCauchyParams
    stokes_shift: float
    conversion_efficiency: float
    base_reflectance: SampledSpectrum

    def __post_init__(self) -> None:
        if abs((self.emission.lambda0 - self.absorption.lambda0) - self.stokes_shift) > 1e-6:
            raise ValueError("emission peak must sit stokes_shift above the absorption peak")
        if not (self.stokes_shift > 0.0):
            raise ValueError("stokes_shift must be positive (emission is red-shifted)")
        if not (0.0 <= self.conversion_efficiency <= 1.0):
            raise ValueError("conversion_efficiency must lie in [0, 1]")


def eval_skew_cauchy(p: SkewCauchyParams, lam: float | np.ndarray) -> float | np.ndarray:
    """Evaluate the lobe at one or many wavelengths (nm)."""
    d = np.asarray(lam, dtype=float) - p.lambda0
    denom = p.gamma * p.gamma + d * d
    bracket = np.arctan(p.omega * d / p.gamma) / np.pi + 0.5
    out = p.h / denom * bracket
    return float(out) if np.isscalar(lam) else out


def skew_cauchy_jacobian(p: SkewCauchyParams, lam: np.ndarray) -> np.ndarray:
    """Analytic partials of the lobe wrt (lambda0, gamma, omega, h); shape (n, 4)."""
    d = lam - p.lambda0
    denom = p.gamma * p.gamma + d * d
    u = p.omega * d / p.gamma
    bracket = np.arctan(u) / np.pi + 0.5
    datan = 1.0 / (np.pi * (1.0 + u * u))
    d_lambda0 = p.h * (2.0 * d * bracket / denom**2 - datan * p.omega / (p.gamma * denom))
    d_gamma = -p.h * (2.0 * p.gamma * bracket / denom**2 + datan * u / (p.gamma * denom))
    d_omega = p.h * datan * d / (p.gamma * denom)
    d_h = bracket / denom
    return np.column_stack([d_lambda0, d_gamma, d_omega, d_h])


def sample_model(p: SkewCauchyParams, grid: SampledSpectrum | None = None) -> SampledSpectrum:
    """Tabulate the lobe on a grid (default 380-720 nm / 5 nm)."""
    template = grid if grid is not None else SampledSpectrum()
    return template.with_values(eval_skew_cauchy(p, template.wavelengths))


@dataclass(frozen=True)
class FitResult:
    params: SkewCauchyParams
    residual: float  # sum of squared residuals at the returned params
    converged: bool
    iterations: int


def initial_guess(measured: SampledSpectrum) -> SkewCauchyParams:
    """Data-driven starting point: peak location, half-width, symmetric lobe."""
    v = measured.values
    w = measured.wavelengths
    peak_idx = int(np.argmax(v))
    peak_val = float(v[peak_idx])
    if peak_val <= 0.0:
        raise DegenerateInput("measured spectrum is all zeros")
    above = np.flatnonzero(v >= 0.5 * peak_val)
    hwhm = 0.5 * (w[above[-1]] - w[above[0]]) if above.size > 1 else 2.0 * measured.step
    gamma = float(np.clip(hwhm, 2.0, 200.0))
    lambda0 = float(np.clip(w[peak_idx], *_LAMBDA0_BOUNDS))
    return SkewCauchyParams(lambda0, gamma, 0.0, peak_val * 2.0 * gamma * gamma)


def _project(x: np.ndarray) -> np.ndarray:
    out = x.copy()
    out[0] = np.clip(out[0], *_LAMBDA0_BOUNDS)
    out[1] = np.clip(out[1], *_GAMMA_BOUNDS)
    out[2] = np.clip(out[2], *_OMEGA_BOUNDS)
    out[3] = max(out[3], _H_MIN)
    return out


def fit_spectrum(
    measured: SampledSpectrum,
    init: SkewCauchyParams | None = None,
    max_iterations: int = 200,
) -> FitResult:
    """Least-squares fit of a skew Cauchy lobe to a measured spectrum.

    Damped (Levenberg-Marquardt style) Gauss-Newton with parameter
    bounds enforced by projection.  When the iteration cap is reached
    the best parameters so far are returned with ``converged=False``.
    """
    if measured.values.size < 8:
        raise ValueError("need at least 8 measured samples to fit")
    if not np.any(measured.values > 0.0):
        raise DegenerateInput("measured spectrum is all zeros")

    w = measured.wavelengths
    y = measured.values

    def residuals(x: np.ndarray) -> np.ndarray:
        return eval_skew_cauchy(SkewCauchyParams.from_array(x), w) - y

    x = _project((init if init is not None else initial_guess(measured)).as_array())
    r = residuals(x)
    cost = float(r @ r)
    damping = 1e-3
    iterations = 0
    converged = False

    for iterations in range(1, max_iterations + 1):
        jac = skew_cauchy_jacobian(SkewCauchyParams.from_array(x), w)
        gradient = jac.T @ r
        hessian = jac.T @ jac
        scale = np.diag(np.maximum(np.diag(hessian), 1e-12))

        accepted = False
        for _ in range(40):
            try:
                step = np.linalg.solve(hessian + damping * scale, -gradient)
            except np.linalg.LinAlgError:
                damping *= 10.0
                continue
            x_new = _project(x + step)
            r_new = residuals(x_new)
            cost_new = float(r_new @ r_new)
            if cost_new <= cost:
                accepted = True
                break
            damping *= 4.0
            if damping > 1e14:
                break

        if not accepted:
            break  # stuck in a damping dead end; report best-so-far

        step_small = np.max(np.abs(x_new - x) / (np.abs(x) + 1e-12)) < 1e-12
        cost_drop_small = (cost - cost_new) <= 1e-14 * max(cost_new, 1e-300)
        x, r, cost = x_new, r_new, cost_new
        damping = max(damping * 0.25, 1e-12)
        if step_small or cost_drop_small or cost < 1e-28:
            converged = True
            break

    return FitResult(SkewCauchyParams.from_array(x), cost, converged, iterations)


# Preset lobes: peak positions follow the calibrated excitation at 450 nm
# plus the per-paint Stokes shift; widths/skews are chosen so the lobes
# reproduce the measured look (red mass pushed well beyond 600 nm).
_PRESET_EMISSION_SHAPE = {
    "red": (60.0, 8.0),    # (gamma, omega)
    "green": (26.0, 2.0),
}
_PRESET_ABSORPTION_SHAPE = {
    "red": (25.0, -1.5),
    "green": (22.0, -1.0),
}


def _unit_peak_lobe(lambda0: float, gamma: float, omega: float) -> SkewCauchyParams:
    """Lobe with the given shape, height scaled so max sample is 1."""
    trial = SkewCauchyParams(lambda0, gamma, omega, 1.0)
    peak = float(sample_model(trial).values.max())
    return SkewCauchyParams(lambda0, gamma, omega, 1.0 / peak)


def make_paint_preset(
    name: str,
    conversion_efficiency: float = DEFAULT_CONVERSION_EFFICIENCY,
) -> FluorescentMaterial:
    """Built-in red / green paint calibrations.

    Red carries a 100 nm Stokes shift, green 50 nm, both excited at
    450 nm; the non-fluorescent base reflectance is the corresponding
    color-checker patch.
    """
    if name not in PAINT_STOKES_SHIFTS_NM:
        raise UnknownPreset(f"unknown paint preset {name!r}; expected one of ['green', 'red']")
    shift = PAINT_STOKES_SHIFTS_NM[name]
    emission = _unit_peak_lobe(EXCITATION_PEAK_NM + shift, *_PRESET_EMISSION_SHAPE[name])
    absorption = _unit_peak_lobe(EXCITATION_PEAK_NM, *_PRESET_ABSORPTION_SHAPE[name])
    return FluorescentMaterial(
        absorption=absorption,
        emission=emission,
        stokes_shift=shift,
        conversion_efficiency=conversion_efficiency,
        base_reflectance=SampledSpectrum(values=cie.checker_patch(name)),
    )


def material_from_emission_fit(
    name: str,
    emission_fit: SkewCauchyParams,
    absorption_fit: SkewCauchyParams | None = None,
    conversion_efficiency: float = DEFAULT_CONVERSION_EFFICIENCY,
) -> FluorescentMaterial:
    """Assemble a material from a fitted emission lobe.

    The Stokes shift is fixed per paint, so the absorption peak is
    pinned at (emission peak - shift).  A fitted absorption lobe, when
    supplied, keeps its width/skew/height but has its peak re-pinned to
    honor the shift constraint.
    """
    if name not in PAINT_STOKES_SHIFTS_NM:
        raise UnknownPreset(f"unknown paint preset {name!r}; expected one of ['green', 'red']")
    shift = PAINT_STOKES_SHIFTS_NM[name]
    pinned_peak = emission_fit.lambda0 - shift
    if absorption_fit is None:
        shape = _PRESET_ABSORPTION_SHAPE[name]
        absorption = _unit_peak_lobe(pinned_peak, *shape)
    else:
        absorption = SkewCauchyParams(
            pinned_peak, absorption_fit.gamma, absorption_fit.omega, absorption_fit.h
        )
    return FluorescentMaterial(
        absorption=absorption,
        emission=emission_fit,
        stokes_shift=shift,
        conversion_efficiency=conversion_efficiency,
        base_reflectance=SampledSpectrum(values=cie.checker_patch(name)),
    )


def blue_led_spectrum(peak_nm: float = EXCITATION_PEAK_NM, gamma: float = 9.0) -> SampledSpectrum:
    """Narrow blue emitter lobe normalized to unit peak."""
    return sample_model(_unit_peak_lobe(peak_nm, gamma, 0.3))


_FLAT_RGB_RESPONSE: np.ndarray | None = None


def spectrum_to_xyz(s: SampledSpectrum) -> np.ndarray:
    """Integrate against the embedded 2-degree observer (rectangle rule)."""
    if s.values.size != cie.DEFAULT_SAMPLE_COUNT or s.lambda_min != cie.DEFAULT_LAMBDA_MIN:
        raise GridMismatch("conversion requires the default 380-720 nm / 5 nm grid")
    return cie.observer_functions() @ s.values * s.step


def spectrum_to_rgb(s: SampledSpectrum, white_balance: bool = True) -> np.ndarray:
    """Linear tristimulus triple for a spectrum on the default grid.

    With ``white_balance`` (the default) each channel is divided by the
    channel response to the equal-energy flat spectrum, so flat input
    maps to (1, 1, 1) while linearity is preserved.  Components may fall
    outside [0, 1] for saturated spectra.
    """
    global _FLAT_RGB_RESPONSE
    rgb = cie.XYZ_TO_LINEAR_SRGB @ spectrum_to_xyz(s)
    if white_balance:
        if _FLAT_RGB_RESPONSE is None:
            flat = SampledSpectrum.flat(1.0)
            _FLAT_RGB_RESPONSE = cie.XYZ_TO_LINEAR_SRGB @ spectrum_to_xyz(flat)
        rgb = rgb / _FLAT_RGB_RESPONSE
    return rgb


def absorbed_fraction(source: SampledSpectrum, absorption: SkewCauchyParams) -> float:
    """Fraction of source power falling inside the absorption lobe.

    The lobe is normalized to unit peak so it acts as a per-wavelength
    absorption probability; the result lies in [0, 1].
    """
    total = float(source.values.sum())
    if total <= 0.0:
        return 0.0
    lobe = eval_skew_cauchy(absorption, source.wavelengths)
    lobe = lobe / lobe.max()
    return float((source.values * lobe).sum() / total)


def read_spectrum_csv(path: str | Path) -> SampledSpectrum:
    """Read a measured spectrum CSV with header ``wavelength_nm,value``."""
    wavelengths: list[float] = []
    values: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "wavelength_nm" not in reader.fieldnames:
            raise ValueError(f"{path}: expected header 'wavelength_nm,value'")
        for row in reader:
            wavelengths.append(float(row["wavelength_nm"]))
            values.append(float(row["value"]))
    if not wavelengths:
        raise ValueError(f"{path}: no data rows")
    return SampledSpectrum.from_samples(np.array(wavelengths), np.array(values))


def write_fit_report(
    path: str | Path,
    measured: SampledSpectrum,
    fit: FitResult,
) -> None:
    """CSV of (wavelength, measured, fitted) with a parameter summary line."""
    fitted = sample_model(fit.params, measured)
    p = fit.params
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            f"# lambda0={p.lambda0:.6g} gamma={p.gamma:.6g} omega={p.omega:.6g} h={p.h:.6g}"
            f" residual={fit.residual:.6g} converged={fit.converged}"
        ])
        writer.writerow(["wavelength_nm", "measured", "fitted"])
        for w, m, f in zip(measured.wavelengths, measured.values, fitted.values):
            writer.writerow([f"{w:.1f}", f"{m:.8g}", f"{f:.8g}"])
