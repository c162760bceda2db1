"""Base-band flux pulses: flat-top Gaussian E_J excursions and external-flux detunings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fluxsim.circuits import TunableEjParams, ej_to_phi_dc, squid_phase_correction

FWHM_PER_SIGMA = 2 * np.sqrt(2 * np.log(2))


@dataclass(frozen=True)
class FlatTopGaussianPulse:
    """E_J(t) dipping from ``baseline`` to ``amplitude`` with Gaussian edges.

    ``fwhm`` is the full width at half maximum of the whole pulse, so each edge
    has ``sigma = (fwhm - l_flat) / (2 sqrt(2 ln 2))``. Edges are cut at
    ``truncation_sigmas * sigma`` past the plateau and shifted/rescaled so the
    envelope stays continuous.
    """

    fwhm: float
    l_flat: float
    baseline: float = 12.0
    amplitude: float = 1.0
    t_center: float | None = None
    truncation_sigmas: float = 4.0

    def __post_init__(self):
        if self.l_flat < 0 or self.l_flat > self.fwhm:
            raise ValueError("need 0 <= l_flat <= fwhm")
        if self.amplitude > self.baseline:
            raise ValueError("amplitude must not exceed the baseline E_J")
        if self.truncation_sigmas <= 0:
            raise ValueError("truncation_sigmas must be positive")

    @property
    def sigma(self) -> float:
        return (self.fwhm - self.l_flat) / FWHM_PER_SIGMA

    @property
    def half_width(self) -> float:
        return 0.5 * self.l_flat + self.truncation_sigmas * self.sigma

    @property
    def center(self) -> float:
        """Pulse centre; defaults to the value that starts the support at t = 0."""
        return self.half_width if self.t_center is None else self.t_center

    @property
    def duration(self) -> float:
        return 2 * self.half_width

    def envelope(self, t):
        """Normalised shape: 1 on the plateau, 0 outside the support."""
        t = np.asarray(t, dtype=float)
        x = np.abs(t - self.center) - 0.5 * self.l_flat
        sig = self.sigma
        out = np.where(x <= 0, 1.0, 0.0)
        if sig > 0:
            cut = self.truncation_sigmas
            offset = np.exp(-0.5 * cut**2)
            with np.errstate(over="ignore", invalid="ignore"):
                edge = (np.exp(-0.5 * (x / sig) ** 2) - offset) / (1 - offset)
            out = np.where((x > 0) & (x < cut * sig), edge, out)
        return out if out.ndim else float(out)

    def value(self, t):
        return self.baseline - (self.baseline - self.amplitude) * self.envelope(t)

    __call__ = value


def pulse_value(p: FlatTopGaussianPulse, t):
    return p.value(t)


def pulse_support(p: FlatTopGaussianPulse) -> tuple[float, float]:
    """Interval outside which the pulse sits exactly at its baseline."""
    return p.center - p.half_width, p.center + p.half_width


def schedule_to_phi_dc(p: FlatTopGaussianPulse, params: TunableEjParams, t) -> tuple[float, float]:
    """dc flux realising ``p`` at time ``t`` and the rf-flux offset that cancels the asymmetry shift.

    Returns ``(phi_dc, phi_ext_offset)`` in flux quanta. Adding the offset to
    the working-point ``phi_ext`` keeps the effective external phase fixed.
    """
    ej = float(p.value(t))
    phi_dc = ej_to_phi_dc(ej, params.ej_max, params.d)
    offset = -float(squid_phase_correction(params.d, phi_dc)) / (2 * np.pi)
    return phi_dc, offset


def sample_pulse(p: FlatTopGaussianPulse, n: int = 401, pad: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    t0, t1 = pulse_support(p)
    t = np.linspace(t0 - pad, t1 + pad, n)
    return t, np.asarray(p.value(t))


@dataclass(frozen=True)
class ZDetuneSegment:
    """Trapezoidal excursion ``delta_phi`` of the external flux.

    The flux ramps linearly over ``ramp`` ns, holds for ``duration`` ns, then
    ramps back; the segment starts at ``t_start``.
    """

    delta_phi: float
    duration: float
    ramp: float = 0.5
    t_start: float = 0.0

    def __post_init__(self):
        if self.duration < 0 or self.ramp < 0:
            raise ValueError("duration and ramp must be non-negative")

    @property
    def total_time(self) -> float:
        return self.duration + 2 * self.ramp

    def value(self, t):
        t = np.asarray(t, dtype=float) - self.t_start
        if self.ramp > 0:
            up = np.clip(t / self.ramp, 0, 1)
            down = np.clip((self.total_time - t) / self.ramp, 0, 1)
            shape = np.minimum(up, down)
        else:
            shape = ((t >= 0) & (t <= self.duration)).astype(float)
        out = self.delta_phi * shape
        return out if np.ndim(out) else float(out)

    __call__ = value
