"""Aperture-restricted mode overlaps, photocurrent harmonics and
envelope-domain time-series synthesis.

The analytic overlap fast path covers equal-waist, zero-tilt mode pairs
(the only case arising after the lens); anything else routes to the
quadrature oracle. The oracle is also the independent check used by the
self-test and the acceptance suite.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import quad
from scipy.signal import lfilter
from scipy.special import erf, erfc

from .beamline import BeamState, BeamlineError, SpatialMode

SQRT2 = math.sqrt(2.0)


class DetectionError(ValueError):
    """Invalid detector geometry or inputs."""


class OracleConvergenceError(DetectionError):
    """Quadrature oracle failed to reach the requested accuracy."""

    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class FullPlane:
    """Unobstructed detector covering the whole transverse plane."""


@dataclass(frozen=True)
class HalfPlaneScreen:
    """Screen blocking x < edge_x; light passes for x >= edge_x."""
    edge_x: float


@dataclass(frozen=True)
class OffsetRect:
    """Finite rectangular detector area (a photodiode acting as a diaphragm)."""
    center_x: float
    center_y: float
    half_width: float
    half_height: float

    def __post_init__(self):
        if self.half_width <= 0 or self.half_height <= 0:
            raise DetectionError("rect half-sizes must be > 0")


Aperture = Union[FullPlane, HalfPlaneScreen, OffsetRect]


@dataclass(frozen=True)
class DetectorSpec:
    aperture: Aperture
    rho: float = 1.0  # responsivity, A/W

    def __post_init__(self):
        if self.rho <= 0:
            raise DetectionError(f"responsivity must be > 0, got {self.rho}")


@dataclass(frozen=True)
class NoiseSpec:
    """Low-frequency technical noise: white Gaussian through a one-pole
    low-pass, applied multiplicatively to the detected intensity."""
    seed: int = 0
    rin_level: float = 0.0
    corner_hz: float = 1e3

    def __post_init__(self):
        if self.rin_level < 0:
            raise DetectionError("rin_level must be >= 0")
        if self.corner_hz <= 0:
            raise DetectionError("corner_hz must be > 0")


def _check_modes(mode_a: SpatialMode, mode_b: SpatialMode):
    for m in (mode_a, mode_b):
        if not all(math.isfinite(v) for v in (m.w0, m.center_x, m.tilt)):
            raise DetectionError(f"non-finite mode parameters: {m}")


def overlap(mode_a: SpatialMode, mode_b: SpatialMode, aperture: Aperture) -> complex:
    """Aperture-restricted inner product of two Gaussian modes.

    Closed form for equal waists and zero tilt; unequal waists fall back to
    the quadrature oracle (never an error). Hermitian in its mode arguments.
    """
    _check_modes(mode_a, mode_b)
    if mode_a.tilt != 0.0 or mode_b.tilt != 0.0:
        raise DetectionError("detector-plane overlaps require zero tilt")
    if mode_a.w0 != mode_b.w0:
        return overlap_quadrature_oracle(mode_a, mode_b, aperture)

    w = mode_a.w0
    dx = mode_a.center_x - mode_b.center_x
    xbar = 0.5 * (mode_a.center_x + mode_b.center_x)
    g = math.exp(-dx * dx / (2.0 * w * w))
    if isinstance(aperture, FullPlane):
        return complex(g)
    if isinstance(aperture, HalfPlaneScreen):
        return complex(g * 0.5 * erfc(SQRT2 * (aperture.edge_x - xbar) / w))
    if isinstance(aperture, OffsetRect):
        xlo = aperture.center_x - aperture.half_width
        xhi = aperture.center_x + aperture.half_width
        ylo = aperture.center_y - aperture.half_height
        yhi = aperture.center_y + aperture.half_height
        fx = 0.5 * (erf(SQRT2 * (xhi - xbar) / w) - erf(SQRT2 * (xlo - xbar) / w))
        fy = 0.5 * (erf(SQRT2 * yhi / w) - erf(SQRT2 * ylo / w))
        return complex(g * fx * fy)
    raise DetectionError(f"unknown aperture {aperture!r}")


def _aperture_limits(aperture: Aperture):
    if isinstance(aperture, FullPlane):
        return (-np.inf, np.inf), (-np.inf, np.inf)
    if isinstance(aperture, HalfPlaneScreen):
        return (aperture.edge_x, np.inf), (-np.inf, np.inf)
    if isinstance(aperture, OffsetRect):
        return (
            (aperture.center_x - aperture.half_width, aperture.center_x + aperture.half_width),
            (aperture.center_y - aperture.half_height, aperture.center_y + aperture.half_height),
        )
    raise DetectionError(f"unknown aperture {aperture!r}")


def overlap_quadrature_oracle(mode_a: SpatialMode, mode_b: SpatialMode,
                              aperture: Aperture, k: float = 0.0,
                              rel_tol: float = 1e-8) -> complex:
    """Brute-force numerical integration of g_a * conj(g_b) over the aperture.

    The integrand is separable, so the 2D integral is evaluated as a product
    of adaptive 1D quadratures. Tilt enters through the phase exp(i k tilt x);
    pass k = 2 pi / wavelength for tilted modes. Raises on non-convergence,
    carrying the achieved estimate.
    """
    _check_modes(mode_a, mode_b)
    if (mode_a.tilt != 0.0 or mode_b.tilt != 0.0) and k == 0.0:
        raise DetectionError("tilted modes require the optical wavenumber k")

    wa, wb = mode_a.w0, mode_b.w0
    ca, cb = mode_a.center_x, mode_b.center_x
    dth = mode_a.tilt - mode_b.tilt
    norm = math.sqrt(2.0 / (math.pi * wa * wb)) ** 2  # product of the two mode norms

    def x_re(x):
        return math.exp(-((x - ca) / wa) ** 2 - ((x - cb) / wb) ** 2) * math.cos(k * dth * x)

    def x_im(x):
        return math.exp(-((x - ca) / wa) ** 2 - ((x - cb) / wb) ** 2) * math.sin(k * dth * x)

    def y_int(y):
        return math.exp(-(y / wa) ** 2 - (y / wb) ** 2)

    (xlo, xhi), (ylo, yhi) = _aperture_limits(aperture)
    # Clip infinite ranges to the (generous) joint mode support: beyond
    # 8 waists the integrand is below e^-128 and cannot move 1e-8 accuracy.
    wmax = max(wa, wb)
    xlo = max(xlo, min(ca, cb) - 8.0 * wmax)
    xhi = min(xhi, max(ca, cb) + 8.0 * wmax)
    ylo, yhi = max(ylo, -8.0 * wmax), min(yhi, 8.0 * wmax)
    if xlo >= xhi or ylo >= yhi:
        return 0j

    pts_x = [p for p in (ca, cb) if xlo < p < xhi] or None
    opts = dict(epsabs=1e-14, epsrel=1e-12, limit=200)
    ix_re, ex_re = quad(x_re, xlo, xhi, points=pts_x, **opts)
    if dth != 0.0 and k != 0.0:
        ix_im, ex_im = quad(x_im, xlo, xhi, points=pts_x, **opts)
    else:
        ix_im, ex_im = 0.0, 0.0
    iy, ey = quad(y_int, ylo, yhi, points=[0.0] if ylo < 0.0 < yhi else None, **opts)

    val = norm * complex(ix_re, ix_im) * iy
    err = norm * (math.hypot(ex_re, ex_im) * abs(iy) + math.hypot(ix_re, ix_im) * ey)
    # Overlaps are bounded by 1, so an absolute floor of rel_tol is the
    # right convergence scale near zero.
    if err > rel_tol * max(abs(val), 1.0):
        raise OracleConvergenceError(
            f"quadrature error {err:.3g} exceeds tolerance (estimate {val})", val
        )
    return val


@dataclass(frozen=True)
class HarmonicSet:
    """Photocurrent harmonic amplitudes: i(t) = sum_k c_k exp(i k w_m t),
    stored for k >= 0 with c_{-k} = conj(c_k) implied. c_0 is real and >= 0."""
    amps: Tuple[complex, ...]  # index = harmonic k
    clipped: bool = False

    def __post_init__(self):
        c0 = self.amps[0]
        if abs(c0.imag) > 1e-9 * max(abs(c0), 1e-300) or c0.real < 0:
            raise DetectionError(f"c_0 must be real and >= 0, got {c0}")

    @property
    def k_max(self) -> int:
        return len(self.amps) - 1

    def amplitude(self, k: int) -> complex:
        if abs(k) > self.k_max:
            return 0j
        return self.amps[k] if k >= 0 else self.amps[-k].conjugate()

    def reconstruct(self, t: np.ndarray, f_m: float) -> np.ndarray:
        """Real photocurrent at sample times t."""
        w = 2.0 * math.pi * f_m
        i = np.full_like(np.asarray(t, dtype=float), self.amps[0].real)
        for k in range(1, len(self.amps)):
            i += 2.0 * (self.amps[k] * np.exp(1j * k * w * t)).real
        return i


def photocurrent_harmonics(beam: BeamState, det: DetectorSpec,
                           k_max: int = 4) -> HarmonicSet:
    """Harmonic amplitudes of the detected photocurrent.

    c_k = rho * sum_n a_{n+k} conj(a_n) overlap(mode_{n+k}, mode_n, aperture),
    so c_0 is the detected power times the responsivity.
    """
    comps = sorted(beam.components, key=lambda c: c.n)
    orders = [c.n for c in comps]
    if orders != list(range(orders[0], orders[0] + len(orders))):
        raise DetectionError("beam components must form a contiguous comb")
    if any(c.mode.tilt != 0.0 for c in comps):
        raise DetectionError("all components must be at the detector plane (tilt 0)")

    clipped = False
    if k_max > len(comps) - 1:
        warnings.warn(
            f"k_max={k_max} exceeds the comb extent; clipping to {len(comps) - 1}",
            stacklevel=2,
        )
        k_max = len(comps) - 1
        clipped = True

    a = np.array([c.amplitude for c in comps], dtype=complex)
    modes = [c.mode for c in comps]
    cache: Dict[Tuple[int, int], complex] = {}

    def ov(i, j):
        key = (i, j)
        if key not in cache:
            cache[key] = overlap(modes[i], modes[j], det.aperture)
        return cache[key]

    cs = []
    for k in range(k_max + 1):
        ck = sum(a[i + k] * np.conj(a[i]) * ov(i + k, i) for i in range(len(a) - k))
        cs.append(det.rho * ck)
    cs[0] = complex(max(cs[0].real, 0.0))
    return HarmonicSet(tuple(complex(c) for c in cs), clipped=clipped)


def fig2_scan(beam: BeamState, rho: float, x_over_w0: Sequence[float]) -> np.ndarray:
    """Occultation sweep: normalized |i(f_m)| = 2|c_1|/(rho P0) against the
    screen edge position X/w0. P0 is the unobstructed detected power."""
    comps = sorted(beam.components, key=lambda c: c.n)
    if len(comps) < 3 or len({c.mode.center_x for c in comps}) < 3:
        raise DetectionError("occultation scan needs >= 3 components with distinct centers")
    w0 = comps[0].mode.w0
    p0 = photocurrent_harmonics(beam, DetectorSpec(FullPlane(), rho), 0).amps[0].real / rho
    out = np.empty(len(x_over_w0))
    for i, x in enumerate(x_over_w0):
        det = DetectorSpec(HalfPlaneScreen(x * w0), rho)
        c1 = photocurrent_harmonics(beam, det, 1).amps[1]
        out[i] = 2.0 * abs(c1) / (rho * p0)
    return out


MAX_SAMPLES = 2**26


def shaped_noise(noise: NoiseSpec, f_s: float, n: int) -> np.ndarray:
    """Multiplicative technical-noise track: one-pole low-passed white
    Gaussian, scaled to the requested RMS. Deterministic for a fixed seed."""
    if noise.rin_level == 0.0:
        return np.zeros(n)
    rng = np.random.default_rng(noise.seed)
    white = rng.standard_normal(n)
    pole = math.exp(-2.0 * math.pi * noise.corner_hz / f_s)
    nu = lfilter([1.0 - pole], [1.0, -pole], white)
    rms = float(np.sqrt(np.mean(nu * nu)))
    return nu * (noise.rin_level / rms)


def synthesize_timeseries(harmonics: HarmonicSet, f_m: float, f_s: float,
                          duration: float, noise: Optional[NoiseSpec] = None,
                          am_disturbance: Optional[Tuple[float, float]] = None) -> np.ndarray:
    """Envelope-domain photocurrent samples.

    i(t) = [sum_k c_k exp(i k w_m t)] * (1 + nu(t)), with nu the shaped
    technical noise, plus an optional deterministic AM tone of given depth
    at frequency f_m + offset_hz (am_disturbance = (depth, offset_hz)).
    """
    if f_s < 8.0 * f_m:
        raise DetectionError(f"sample rate {f_s:g} < 8 f_m = {8 * f_m:g}")
    n = int(round(duration * f_s))
    if n > MAX_SAMPLES:
        raise DetectionError(f"{n} samples exceed the {MAX_SAMPLES} cap")
    t = np.arange(n) / f_s
    i = harmonics.reconstruct(t, f_m)
    if noise is not None and noise.rin_level > 0.0:
        i = i * (1.0 + shaped_noise(noise, f_s, n))
    if am_disturbance is not None:
        depth, offset_hz = am_disturbance
        i = i * (1.0 + depth * np.cos(2.0 * math.pi * (f_m + offset_hz) * t))
    return i
