"""Welch power-spectral-density estimation at a requested resolution
bandwidth, calibrated in dBc, plus before/after correction spectra of the
useful-beam photocurrent."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.signal import get_window, welch

from .control import run_closed_loop, propagate
from .detection import photocurrent_harmonics, synthesize_timeseries
from .scenario import Scenario

DEFAULT_WINDOW = "blackmanharris"  # 4-term, low sidelobes for -70 dBc features
MAX_SEGMENTS = 16
SPECTRUM_SPAN_HZ = 10e3
SPECTRUM_RBW_HZ = 30.0


class SpectraError(ValueError):
    """Invalid spectral-estimation request."""


@dataclass(frozen=True)
class Spectrum:
    """Averaged periodogram: per-bin power in dB relative to the carrier
    (a tone at the reference amplitude reads 0 dBc regardless of RBW)."""
    freqs: np.ndarray
    dbc: np.ndarray
    rbw_hz: float
    window: str
    ref_amplitude: float
    bin_hz: float
    n_used: int

    def peak_dbc(self, f0: Optional[float] = None, halfwidth: Optional[float] = None
                 ) -> Tuple[float, float]:
        """(frequency, dBc) of the strongest tone, integrating the window
        main lobe so the reading is scalloping-free. Searches near f0 when
        given (within halfwidth, default 4 RBW).

        The median per-bin power in a ring just outside the lobe is
        subtracted before integrating, so a tone barely above a noise
        floor still reads its own power rather than tone plus floor."""
        hw = 4.0 * self.rbw_hz if halfwidth is None else halfwidth
        power = 10.0 ** (self.dbc / 10.0)
        if f0 is None:
            idx = int(np.argmax(power))
        else:
            mask = np.abs(self.freqs - f0) <= hw
            if not mask.any():
                raise SpectraError("no bins near the requested frequency")
            cand = np.flatnonzero(mask)
            idx = int(cand[np.argmax(power[cand])])
        offset = np.abs(self.freqs - self.freqs[idx])
        lobe = offset <= hw
        ring = (offset > hw) & (offset <= 3.0 * hw)
        floor = float(np.median(power[ring])) if ring.any() else 0.0
        tone = float(np.sum(np.maximum(power[lobe] - floor, 0.0))
                     * self.bin_hz / self.rbw_hz)
        return float(self.freqs[idx]), 10.0 * math.log10(max(tone, 1e-300))


def _window_enbw_bins(window: str, n: int = 4096) -> float:
    w = get_window(window, n)
    return n * float(np.sum(w * w)) / float(np.sum(w)) ** 2


def estimate_psd(samples: np.ndarray, f_s: float, rbw_request: float,
                 window: str = DEFAULT_WINDOW, span_center: Optional[float] = None,
                 span_width: Optional[float] = None,
                 ref_amplitude: float = 1.0) -> Spectrum:
    """Welch-averaged spectrum with the segment length chosen so the window
    equivalent noise bandwidth matches the requested RBW (within 20%).

    Requires enough samples for >= 4 half-overlapped segments; averaging is
    capped at MAX_SEGMENTS. dBc calibration: a sinusoid of amplitude
    ref_amplitude reads 0 dBc at its bin independent of the RBW.
    """
    samples = np.asarray(samples, dtype=float)
    if rbw_request <= 0 or f_s <= 0:
        raise SpectraError("f_s and rbw_request must be > 0")
    if ref_amplitude <= 0:
        raise SpectraError("ref_amplitude must be > 0")

    enbw_bins = _window_enbw_bins(window)
    nperseg = int(round(enbw_bins * f_s / rbw_request))
    nperseg += (-nperseg) % 16  # keep f_s/2^k tones exactly on bins
    if nperseg < 64:
        raise SpectraError(f"requested RBW {rbw_request:g} Hz is too wide for f_s={f_s:g}")
    min_samples = nperseg + 3 * (nperseg // 2)  # 4 segments at 50% overlap
    if samples.size < min_samples:
        raise SpectraError(
            f"need >= {min_samples} samples ({min_samples / f_s:.4g} s at f_s={f_s:g}) "
            f"for 4 averaged segments at RBW {rbw_request:g} Hz, got {samples.size}"
        )
    max_samples = nperseg + (MAX_SEGMENTS - 1) * (nperseg // 2)
    used = samples[: min(samples.size, max_samples)]

    win = get_window(window, nperseg)
    enbw_hz = f_s * float(np.sum(win * win)) / float(np.sum(win)) ** 2
    if abs(enbw_hz - rbw_request) > 0.2 * rbw_request:
        raise SpectraError(f"achieved RBW {enbw_hz:g} Hz misses request {rbw_request:g} Hz")

    freqs, density = welch(used, fs=f_s, window=win, nperseg=nperseg,
                           noverlap=nperseg // 2, detrend=False,
                           scaling="density")
    bin_power = density * enbw_hz
    ref_power = ref_amplitude * ref_amplitude / 2.0
    dbc = 10.0 * np.log10(np.maximum(bin_power / ref_power, 1e-300))

    if span_center is not None:
        width = span_width if span_width is not None else SPECTRUM_SPAN_HZ
        mask = np.abs(freqs - span_center) <= width / 2.0
        freqs, dbc = freqs[mask], dbc[mask]

    return Spectrum(freqs=freqs, dbc=dbc, rbw_hz=enbw_hz, window=window,
                    ref_amplitude=ref_amplitude, bin_hz=f_s / nperseg,
                    n_used=used.size)


def before_after_spectra(scenario: Scenario, duration: float = 0.2,
                         steps: Optional[int] = None
                         ) -> Tuple[Spectrum, Spectrum, "RejectionReport"]:
    """PD2 spectra around f_m with the drive envelope frozen at zero
    (before) and at the converged controller output (after).

    Both spectra span f_m +- 5 kHz at 30 Hz RBW, sampled at 8 f_m; the
    same NoiseSpec (and seed) is applied to both runs.
    """
    report = run_closed_loop(scenario, steps)
    f_m = scenario.modulation.f_m
    f_s = 8.0 * f_m

    def pd2_spectrum(m_i: float, m_q: float) -> Spectrum:
        beam2 = propagate(scenario, m_i, m_q)[1]
        harm = photocurrent_harmonics(beam2, scenario.pd2, 4)
        samples = synthesize_timeseries(harm, f_m, f_s, duration, scenario.noise)
        return estimate_psd(samples, f_s, SPECTRUM_RBW_HZ,
                            span_center=f_m, span_width=SPECTRUM_SPAN_HZ,
                            ref_amplitude=harm.amps[0].real)

    before = pd2_spectrum(0.0, 0.0)
    after = pd2_spectrum(report.m_i, report.m_q)
    return before, after, report
