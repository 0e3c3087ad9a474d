"""Narrow-band AM canceller: synchronous I/Q detection of the beam-1
photocurrent at f_m, integral control, actuation on the RF drive envelope.

The loop runs entirely on harmonic amplitudes (one c_1 evaluation per
control step); MHz-rate time series never enter the recursion, so the
loop is exact for the narrow-band quantities measured and cheap to run.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from .beamline import (
    BeamState,
    aom_modulate,
    apply_lens_telescope,
    fiber_project,
    rotate_halfwave,
    single_carrier,
    split,
)
from .detection import photocurrent_harmonics
from .scenario import Scenario

# Residual below this fraction of c_0 counts as "no disturbance to reject".
ZERO_AM_FLOOR = 1e-13


class ControlError(ValueError):
    """Invalid controller state or loop configuration."""


@dataclass(frozen=True)
class ControllerState:
    """I/Q integrator pair acting on the RF drive envelope."""
    m_i: float = 0.0
    m_q: float = 0.0
    gain: float = 30.0
    dt: float = 0.01
    reference_phase: float = 0.0
    clamped: bool = False

    def __post_init__(self):
        if self.gain * self.dt >= 2.0:
            raise ControlError(
                f"gain*dt = {self.gain * self.dt:g} >= 2 breaks discrete stability"
            )
        if math.hypot(self.m_i, self.m_q) > 1.0 + 1e-12:
            raise ControlError("actuator depths must satisfy |m| <= 1")


def demodulate_iq(c_1: complex, reference_phase: float) -> Tuple[float, float]:
    """Synchronous demodulation: e_i + i e_q = c_1 exp(-i reference_phase)."""
    e = c_1 * cmath.exp(-1j * reference_phase)
    return e.real, e.imag


def controller_step(state: ControllerState, error: Tuple[float, float]) -> ControllerState:
    """One integrator update; clamps (and flags) at |m| = 1."""
    e_i, e_q = error
    if not (math.isfinite(e_i) and math.isfinite(e_q)):
        raise ControlError(f"non-finite error input ({e_i}, {e_q})")
    m_i = state.m_i - state.gain * state.dt * e_i
    m_q = state.m_q - state.gain * state.dt * e_q
    clamped = state.clamped
    mag = math.hypot(m_i, m_q)
    if mag > 1.0:
        m_i, m_q = m_i / mag, m_q / mag
        clamped = True
    return replace(state, m_i=m_i, m_q=m_q, clamped=clamped)


@dataclass(frozen=True)
class RejectionReport:
    """Closed-loop outcome: rejection 20 log10(initial |c_1| / final |c_1|)
    per beam, convergence, and the final relative AM of the useful beam."""
    beam1_rejection_db: float
    beam2_rejection_db: float
    converged: bool
    settle_time_s: float
    residual_relative_am: float
    initial_am_zero: bool
    actuator_clamped: bool
    m_i: float
    m_q: float
    reference_phase: float
    beam1_c1_abs: Tuple[float, ...]  # |c_1| trajectory, step 0 = uncorrected
    beam2_c1_abs: Tuple[float, ...]
    beam1_rel_am: Tuple[float, ...]  # 2|c_1|/c_0 trajectories
    beam2_rel_am: Tuple[float, ...]


def propagate(scenario: Scenario, m_i: float = 0.0, m_q: float = 0.0
              ) -> Tuple[BeamState, BeamState]:
    """Carrier -> AOM -> (fiber) -> telescope -> plate -> splitter.

    Returns (beam 1 at PD1, beam 2 at PD2). In the fig3 topology the fiber
    sits at the AOM output and erases the spatial splitting before the
    split; in fig1 the split happens on the spatially split comb.
    """
    carrier = single_carrier(scenario.beam_power, scenario.beam_w0,
                             scenario.beam_pol_angle)
    rf = scenario.rf_response()
    if scenario.topology == "fig3":
        beam = aom_modulate(carrier, scenario.modulation, scenario.aom, rf,
                            m_i, m_q, pre_lens=True)
        beam = fiber_project(beam, scenario.fiber, scenario.aom.wavelength)
    else:
        beam = aom_modulate(carrier, scenario.modulation, scenario.aom, rf,
                            m_i, m_q, pre_lens=False)
    beam = apply_lens_telescope(beam, scenario.telescope_w0,
                                scenario.telescope_shift_scale)
    beam = rotate_halfwave(beam, scenario.plate_angle)
    return split(beam, scenario.splitter)


def _measure(scenario: Scenario, m_i: float, m_q: float):
    """c_1 and c_0 seen by both photodiodes for a given drive envelope."""
    b1, b2 = propagate(scenario, m_i, m_q)
    h1 = photocurrent_harmonics(b1, scenario.pd1, 1)
    h2 = photocurrent_harmonics(b2, scenario.pd2, 1)
    return h1.amps[1], h1.amps[0].real, h2.amps[1], h2.amps[0].real


def calibrate_plant(scenario: Scenario, probe: float = 1e-4):
    """Probe the plant with small m_i / m_q steps.

    Returns (reference_phase, M) where M is the 2x2 real matrix mapping
    (m_i, m_q) to the demodulated (e_i, e_q). The demodulation phase is
    aligned to the m_i response, mirroring how the physical demod phase is
    tuned; the fitted matrix must be invertible.
    """
    c1_0 = _measure(scenario, 0.0, 0.0)[0]
    g_i = (_measure(scenario, probe, 0.0)[0] - c1_0) / probe
    g_q = (_measure(scenario, 0.0, probe)[0] - c1_0) / probe
    if abs(g_i) == 0.0:
        raise ControlError("plant does not respond to the in-phase actuator")
    phase = (scenario.reference_phase if scenario.reference_phase is not None
             else cmath.phase(g_i))
    rot = cmath.exp(-1j * phase)
    m = np.array([
        [(g_i * rot).real, (g_q * rot).real],
        [(g_i * rot).imag, (g_q * rot).imag],
    ])
    if np.linalg.cond(m) > 1e8:
        raise ControlError("fitted 2x2 plant matrix is numerically singular")
    return phase, m


def run_closed_loop(scenario: Scenario, steps: Optional[int] = None) -> RejectionReport:
    """Run the canceller: PD1 feeds the controller, PD2 is only observed.

    Convergence flag: over the last 10% of steps, the per-step change of
    beam-1 |c_1| stays below 1e-3 of the initial |c_1|. Settle time is the
    first step at which beam-1 |c_1| drops below 1e-3 of its initial value.
    """
    n_steps = scenario.controller_steps if steps is None else int(steps)
    if n_steps < 1:
        raise ControlError("steps must be >= 1")

    c1_1, c0_1, c1_2, c0_2 = _measure(scenario, 0.0, 0.0)
    initial_zero = abs(c1_1) < ZERO_AM_FLOOR * max(c0_1, 1e-300)

    phase, plant = calibrate_plant(scenario)
    plant_inv = np.linalg.inv(plant)
    state = ControllerState(0.0, 0.0, scenario.controller_gain,
                            scenario.controller_dt, phase)

    traj1 = [abs(c1_1)]
    traj2 = [abs(c1_2)]
    rel1 = [2.0 * abs(c1_1) / c0_1]
    rel2 = [2.0 * abs(c1_2) / c0_2]
    for _ in range(n_steps):
        e = np.array(demodulate_iq(c1_1, phase))
        u = plant_inv @ e
        state = controller_step(state, (float(u[0]), float(u[1])))
        c1_1, c0_1, c1_2, c0_2 = _measure(scenario, state.m_i, state.m_q)
        traj1.append(abs(c1_1))
        traj2.append(abs(c1_2))
        rel1.append(2.0 * abs(c1_1) / c0_1)
        rel2.append(2.0 * abs(c1_2) / c0_2)

    ref1, ref2 = traj1[0], traj2[0]
    if initial_zero:
        rej1 = rej2 = float("nan")
    else:
        rej1 = 20.0 * math.log10(ref1 / max(traj1[-1], 1e-300))
        rej2 = (20.0 * math.log10(ref2 / max(traj2[-1], 1e-300))
                if ref2 > 0 else float("nan"))

    tail = max(1, n_steps // 10)
    floor = 1e-3 * max(ref1, ZERO_AM_FLOOR * c0_1)
    converged = all(
        abs(traj1[k] - traj1[k - 1]) < floor
        for k in range(len(traj1) - tail, len(traj1))
    )
    settle = next(
        (k * scenario.controller_dt for k, v in enumerate(traj1) if v <= 1e-3 * ref1),
        float("nan"),
    ) if not initial_zero else 0.0

    return RejectionReport(
        beam1_rejection_db=rej1,
        beam2_rejection_db=rej2,
        converged=converged,
        settle_time_s=settle,
        residual_relative_am=rel2[-1],
        initial_am_zero=initial_zero,
        actuator_clamped=state.clamped,
        m_i=state.m_i,
        m_q=state.m_q,
        reference_phase=phase,
        beam1_c1_abs=tuple(traj1),
        beam2_c1_abs=tuple(traj2),
        beam1_rel_am=tuple(rel1),
        beam2_rel_am=tuple(rel2),
    )
