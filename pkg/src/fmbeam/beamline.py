"""Optical domain types and pure element transforms for the FM beamline.

All types are immutable values and all operations are pure functions:
same inputs give bit-identical outputs, so parameter sweeps can run
concurrently without shared state.

Units are SI throughout (Hz, m, rad, W). Sideband amplitudes are field
amplitudes in sqrt(W); optical carriers are never represented as time
series, only as a comb of Fourier components.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from scipy.special import jv

# Truncated comb must retain all but this fraction of the total power.
TRUNCATION_TOL = 1e-9


class BeamlineError(ValueError):
    """Invalid optical parameters or an unphysical operation."""


class TruncationError(BeamlineError):
    """Sideband comb truncated too early for the requested modulation index."""


class OvermodulationError(BeamlineError):
    """AM drive envelope magnitude exceeds unity."""


def bessel_amplitudes(beta: float, n_max: int) -> np.ndarray:
    """Field amplitudes J_n(beta) of a pure-FM comb, n in [-n_max, n_max].

    Negative orders are mirrored as J_{-n} = (-1)^n J_n exactly (no separate
    evaluation), so antisymmetric pair sums cancel to machine precision.

    Raises TruncationError when the retained power sum falls below
    1 - TRUNCATION_TOL.
    """
    if beta < 0:
        raise BeamlineError(f"modulation index must be >= 0, got {beta}")
    if n_max < 1:
        raise BeamlineError(f"n_max must be >= 1, got {n_max}")
    pos = jv(np.arange(n_max + 1), float(beta))
    amps = np.empty(2 * n_max + 1)
    amps[n_max:] = pos
    for n in range(1, n_max + 1):
        amps[n_max - n] = pos[n] if n % 2 == 0 else -pos[n]
    power = float(amps @ amps)
    if power < 1.0 - TRUNCATION_TOL:
        raise TruncationError(
            f"insufficient n_max: comb power {power:.12f} < 1 - {TRUNCATION_TOL:g} "
            f"for beta={beta}, n_max={n_max}"
        )
    return amps


@dataclass(frozen=True)
class ModulationSpec:
    """FM drive applied to the AOM: carrier shift, tone frequency, index."""
    f_carrier: float = 250e6
    f_m: float = 2.5e6
    beta: float = 1.0
    n_max: int = 8

    def __post_init__(self):
        if self.f_m <= 0:
            raise BeamlineError(f"f_m must be > 0, got {self.f_m}")
        if self.n_max < 1:
            raise BeamlineError(f"n_max must be >= 1, got {self.n_max}")
        if self.beta < 0:
            raise BeamlineError(f"beta must be >= 0, got {self.beta}")
        bessel_amplitudes(self.beta, self.n_max)  # enforces the truncation rule

    def sideband_orders(self) -> np.ndarray:
        return np.arange(-self.n_max, self.n_max + 1)

    def sideband_freqs(self) -> np.ndarray:
        return self.f_carrier + self.sideband_orders() * self.f_m


@dataclass(frozen=True)
class AomSpec:
    """AOM geometry: acoustic celerity, wavelength and the lens mapping
    angle to lateral shift. A directly measured shift can override the
    formula path."""
    v_ac: float = 4200.0
    wavelength: float = 532e-9
    f_lens: float = 1.0
    lateral_shift_override: Optional[float] = None

    def __post_init__(self):
        for name in ("v_ac", "wavelength", "f_lens"):
            v = getattr(self, name)
            if v <= 0:
                raise BeamlineError(f"{name} must be > 0, got {v}")
        if self.lateral_shift_override is not None and self.lateral_shift_override <= 0:
            raise BeamlineError("lateral_shift_override must be > 0 when given")

    def angular_step(self, f_m: float) -> float:
        """Angular shift between successive comb components, rad."""
        return self.wavelength * f_m / self.v_ac


def lateral_shift(aom: AomSpec, f_m: float) -> float:
    """Lateral spacing A between successive components in the lens focal plane."""
    if aom.lateral_shift_override is not None:
        return aom.lateral_shift_override
    return aom.f_lens * aom.wavelength * f_m / aom.v_ac


@dataclass(frozen=True)
class SpatialMode:
    """Gaussian amplitude profile g ~ exp(-r^2/w0^2), unit L2 norm."""
    w0: float
    center_x: float = 0.0
    tilt: float = 0.0

    def __post_init__(self):
        if self.w0 <= 0:
            raise BeamlineError(f"waist must be > 0, got {self.w0}")


@dataclass(frozen=True)
class FourierComponent:
    """One comb line: order n (optical frequency f_carrier + n*f_m),
    complex field amplitude in sqrt(W), and its spatial mode."""
    n: int
    amplitude: complex
    mode: SpatialMode


@dataclass(frozen=True)
class BeamState:
    """A beam as a set of comb components plus a scalar linear polarization
    angle. Total power is the amplitude-square sum."""
    components: Tuple[FourierComponent, ...]
    pol_angle: float = 0.0

    def __post_init__(self):
        orders = [c.n for c in self.components]
        if len(set(orders)) != len(orders):
            raise BeamlineError("component orders must be unique")

    @property
    def power(self) -> float:
        return float(sum(abs(c.amplitude) ** 2 for c in self.components))

    def amplitudes(self) -> np.ndarray:
        return np.array([c.amplitude for c in self.components], dtype=complex)


def single_carrier(power: float, w0: float, pol_angle: float = 0.0) -> BeamState:
    """Unmodulated input beam: one order-0 component carrying all the power."""
    if power <= 0:
        raise BeamlineError(f"power must be > 0, got {power}")
    comp = FourierComponent(0, complex(math.sqrt(power)), SpatialMode(w0))
    return BeamState((comp,), pol_angle)


@dataclass(frozen=True)
class RfChainResponse:
    """Sampled complex frequency response of the RF drive chain, linearly
    interpolated in real/imaginary parts. The sample span must cover the
    full sideband comb."""
    freqs: Tuple[float, ...]
    gains: Tuple[complex, ...]

    def __post_init__(self):
        if len(self.freqs) < 2 or len(self.freqs) != len(self.gains):
            raise BeamlineError("response table needs >= 2 matched (freq, gain) samples")
        f = np.asarray(self.freqs)
        if not np.all(np.diff(f) > 0):
            raise BeamlineError("response table frequencies must be strictly increasing")

    def covers(self, f_lo: float, f_hi: float) -> bool:
        return self.freqs[0] <= f_lo and f_hi <= self.freqs[-1]

    def __call__(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        fr = np.asarray(self.freqs)
        g = np.asarray(self.gains, dtype=complex)
        re = np.interp(f, fr, g.real)
        im = np.interp(f, fr, g.imag)
        return re + 1j * im

    @staticmethod
    def flat(mod: ModulationSpec, margin: float = 2.0) -> "RfChainResponse":
        half = (mod.n_max + margin) * mod.f_m
        return RfChainResponse(
            (mod.f_carrier - half, mod.f_carrier + half), (1 + 0j, 1 + 0j)
        )

    @staticmethod
    def from_poly(mod: ModulationSpec, amp_coeffs, phase_coeffs=(0.0,),
                  margin: float = 2.0, n_points: int = 65) -> "RfChainResponse":
        """Generate a table from polynomials in the normalized detuning
        x = (f - f_carrier)/f_m (one unit per sideband order)."""
        half = (mod.n_max + margin) * mod.f_m
        f = np.linspace(mod.f_carrier - half, mod.f_carrier + half, n_points)
        x = (f - mod.f_carrier) / mod.f_m
        amp = np.polynomial.polynomial.polyval(x, np.asarray(amp_coeffs, dtype=float))
        ph = np.polynomial.polynomial.polyval(x, np.asarray(phase_coeffs, dtype=float))
        g = amp * np.exp(1j * ph)
        return RfChainResponse(tuple(f.tolist()), tuple(complex(v) for v in g))


@dataclass(frozen=True)
class FiberSpec:
    """Single-mode fiber as an ideal spatial projector onto one Gaussian mode."""
    w_fiber: float
    offset_x: float = 0.0
    tilt: float = 0.0

    def __post_init__(self):
        if self.w_fiber <= 0:
            raise BeamlineError(f"w_fiber must be > 0, got {self.w_fiber}")


@dataclass(frozen=True)
class SplitterSpec:
    """Beam splitter with distinct power reflectivities on the two
    polarization eigen-axes (acts as a weak analyser)."""
    r_p: float = 0.5
    r_s: float = 0.5

    def __post_init__(self):
        for name in ("r_p", "r_s"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise BeamlineError(f"{name} must be in [0, 1], got {v}")

    def reflectivity(self, pol_angle: float) -> float:
        c, s = math.cos(pol_angle), math.sin(pol_angle)
        return self.r_p * c * c + self.r_s * s * s


def aom_modulate(carrier: BeamState, mod: ModulationSpec, aom: AomSpec,
                 rf: RfChainResponse, drive_mi: float = 0.0,
                 drive_mq: float = 0.0, pre_lens: bool = False) -> BeamState:
    """Frequency-shift and FM-modulate the carrier through the AOM.

    Comb amplitudes are a0 * J_n(beta) * H(f_carrier + n f_m), convolved
    with the AM drive envelope 1 + m_i cos(w_m t) + m_q sin(w_m t); the
    envelope mixes the comb by +-1 order with coefficients (m_i -+ i m_q)/2.
    Orders beyond n_max are dropped.

    With pre_lens=False the comb is taken in the lens focal plane:
    component n is laterally shifted by n*A with zero tilt. With
    pre_lens=True (fiber path, straight out of the AOM) the components
    share one center and carry the raw angular tilt n * lambda f_m / v_ac.
    """
    if len(carrier.components) != 1 or carrier.components[0].n != 0:
        raise BeamlineError("carrier must have a single component of order 0")
    m_mag = math.hypot(drive_mi, drive_mq)
    if m_mag > 1.0:
        raise OvermodulationError(f"drive envelope magnitude {m_mag:.4g} > 1")

    orders = mod.sideband_orders()
    freqs = mod.sideband_freqs()
    if not rf.covers(freqs[0], freqs[-1]):
        raise BeamlineError(
            "RF response table does not span the sideband comb "
            f"[{freqs[0]:.6g}, {freqs[-1]:.6g}] Hz"
        )

    a0 = complex(carrier.components[0].amplitude)
    base = a0 * bessel_amplitudes(mod.beta, mod.n_max) * rf(freqs)
    e_up = (drive_mi - 1j * drive_mq) / 2.0
    e_dn = (drive_mi + 1j * drive_mq) / 2.0
    amps = base.copy()
    amps[1:] += e_up * base[:-1]
    amps[:-1] += e_dn * base[1:]

    shift = lateral_shift(aom, mod.f_m)
    dtheta = aom.angular_step(mod.f_m)
    w0 = carrier.components[0].mode.w0
    comps = tuple(
        FourierComponent(
            int(n),
            complex(amps[i]),
            SpatialMode(w0, 0.0, n * dtheta) if pre_lens
            else SpatialMode(w0, n * shift, 0.0),
        )
        for i, n in enumerate(orders)
    )
    return BeamState(comps, carrier.pol_angle)


def apply_lens_telescope(beam: BeamState, new_w0: float,
                         shift_scale: float = 1.0) -> BeamState:
    """Ideal lossless lens/telescope: zero tilts, rescale lateral centers,
    set a new common waist. Amplitudes are unchanged."""
    if new_w0 <= 0:
        raise BeamlineError(f"new_w0 must be > 0, got {new_w0}")
    comps = tuple(
        replace(c, mode=SpatialMode(new_w0, c.mode.center_x * shift_scale, 0.0))
        for c in beam.components
    )
    return BeamState(comps, beam.pol_angle)


def split(beam: BeamState, splitter: SplitterSpec) -> Tuple[BeamState, BeamState]:
    """Split into (reflected, transmitted). The power ratio depends on the
    polarization angle; both outputs keep the comb structure and modes."""
    r = splitter.reflectivity(beam.pol_angle)
    sr, st = math.sqrt(r), math.sqrt(1.0 - r)
    refl = tuple(replace(c, amplitude=c.amplitude * sr) for c in beam.components)
    trans = tuple(replace(c, amplitude=c.amplitude * st) for c in beam.components)
    return BeamState(refl, beam.pol_angle), BeamState(trans, beam.pol_angle)


def rotate_halfwave(beam: BeamState, plate_angle: float) -> BeamState:
    """Half-wave plate: reflect the polarization angle about the plate axis."""
    return BeamState(beam.components, 2.0 * plate_angle - beam.pol_angle)


def fiber_project(beam: BeamState, fiber: FiberSpec, wavelength: float) -> BeamState:
    """Project every component onto the fiber's Gaussian mode.

    Each amplitude is scaled by the Gaussian-Gaussian coupling amplitude
    for waist mismatch, lateral offset d and tilt theta (tilt enters as the
    phase exp(i k theta x) against the fiber mode, k = 2 pi / wavelength):

        c = [2 w1 w2 / (w1^2 + w2^2)] * exp(B^2/(4 a) - d^2/w1^2),
        a = 1/w1^2 + 1/w2^2,  B = 2 d / w1^2 + i k theta.

    |c| <= 1 always. All output components share the identical fiber mode
    (waist w_fiber, center 0, tilt 0); this closed form is verified against
    the detection module's 2D quadrature oracle in the test suite.
    """
    if wavelength <= 0:
        raise BeamlineError(f"wavelength must be > 0, got {wavelength}")
    k = 2.0 * math.pi / wavelength
    out_mode = SpatialMode(fiber.w_fiber, 0.0, 0.0)
    w2 = fiber.w_fiber
    comps = []
    for c in beam.components:
        w1 = c.mode.w0
        d = c.mode.center_x - fiber.offset_x
        theta = c.mode.tilt - fiber.tilt
        alpha = 1.0 / w1**2 + 1.0 / w2**2
        b = 2.0 * d / w1**2 + 1j * k * theta
        coup = (2.0 * w1 * w2 / (w1**2 + w2**2)) * np.exp(b * b / (4.0 * alpha) - d * d / w1**2)
        comps.append(replace(c, amplitude=c.amplitude * complex(coup), mode=out_mode))
    return BeamState(tuple(comps), beam.pol_angle)
