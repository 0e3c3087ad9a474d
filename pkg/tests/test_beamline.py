import math

import numpy as np
import pytest

from fmbeam.beamline import (
    AomSpec,
    BeamlineError,
    BeamState,
    FiberSpec,
    FourierComponent,
    ModulationSpec,
    OvermodulationError,
    RfChainResponse,
    SpatialMode,
    SplitterSpec,
    TruncationError,
    aom_modulate,
    apply_lens_telescope,
    bessel_amplitudes,
    fiber_project,
    lateral_shift,
    rotate_halfwave,
    single_carrier,
    split,
)

LAMBDA = 532e-9


def bessel_series(n, x, terms=30):
    """Independent power-series oracle for J_n(x), n >= 0."""
    total = 0.0
    for m in range(terms):
        total += (-1) ** m * (x / 2.0) ** (n + 2 * m) / (
            math.factorial(m) * math.factorial(n + m)
        )
    return total


class TestBesselAmplitudes:
    def test_unmodulated_carrier(self):
        j = bessel_amplitudes(0.0, 4)
        assert j[4] == 1.0
        assert np.all(j[np.arange(9) != 4] == 0.0)

    def test_against_power_series_oracle(self):
        j = bessel_amplitudes(1.0, 8)
        for n in range(9):
            assert j[8 + n] == pytest.approx(bessel_series(n, 1.0), abs=1e-14)
        # three-term recurrence cross-check: J_{n-1} + J_{n+1} = (2n/x) J_n
        for n in range(1, 7):
            assert j[8 + n - 1] + j[8 + n + 1] == pytest.approx(2 * n * j[8 + n], abs=1e-12)

    def test_known_values(self):
        j = bessel_amplitudes(1.0, 8)
        assert j[8] == pytest.approx(0.765198, abs=1e-6)
        assert j[9] == pytest.approx(0.440051, abs=1e-6)
        assert j[10] == pytest.approx(0.114903, abs=1e-6)

    def test_exact_mirror_antisymmetry(self):
        for beta in (0.3, 1.0, 1.5, 2.7, 3.0):
            j = bessel_amplitudes(beta, 12)
            n = np.arange(-12, 13)
            assert np.all(j[::-1] == j * (-1.0) ** np.abs(n))
            # adjacent-order pairing cancels
            assert abs(float(j[:-1] @ j[1:])) <= 1e-12

    def test_power_sum_bounds(self):
        for beta in np.linspace(0.0, 3.0, 13):
            j = bessel_amplitudes(float(beta), 12)
            assert 1 - 1e-9 <= float(j @ j) <= 1 + 1e-12

    def test_insufficient_truncation(self):
        with pytest.raises(TruncationError):
            bessel_amplitudes(3.0, 2)

    def test_invalid_args(self):
        with pytest.raises(BeamlineError):
            bessel_amplitudes(-0.1, 4)
        with pytest.raises(BeamlineError):
            bessel_amplitudes(1.0, 0)


class TestLateralShift:
    def test_override_wins(self):
        aom = AomSpec(lateral_shift_override=0.336e-3)
        assert lateral_shift(aom, 2.5e6) == 0.336e-3

    def test_formula_consistent_with_measured_shift(self):
        # lens focal length chosen so the formula reproduces the measured
        # 0.336 mm spacing for plausible AOM parameters
        aom = AomSpec(v_ac=4200.0, wavelength=LAMBDA, f_lens=1.061)
        assert lateral_shift(aom, 2.5e6) == pytest.approx(0.336e-3, abs=2e-7)

    def test_no_modulation_no_splitting(self):
        aom = AomSpec(v_ac=4200.0, wavelength=LAMBDA, f_lens=1.0)
        assert lateral_shift(aom, 0.0) == 0.0


@pytest.fixture
def mod():
    return ModulationSpec(f_carrier=250e6, f_m=2.5e6, beta=1.0, n_max=8)


@pytest.fixture
def aom():
    return AomSpec(v_ac=4200.0, wavelength=LAMBDA, f_lens=1.061,
                   lateral_shift_override=0.336e-3)


class TestAomModulate:
    def test_flat_response_gives_bessel_comb(self, mod, aom):
        carrier = single_carrier(1.0, 4e-3)
        beam = aom_modulate(carrier, mod, aom, RfChainResponse.flat(mod))
        j = bessel_amplitudes(1.0, 8)
        for i, comp in enumerate(sorted(beam.components, key=lambda c: c.n)):
            assert comp.amplitude == pytest.approx(j[i], abs=1e-15)
            assert comp.mode.center_x == comp.n * 0.336e-3
            assert comp.mode.tilt == 0.0
            assert comp.mode.w0 == 4e-3

    def test_beta_zero_single_component(self, aom):
        mod0 = ModulationSpec(beta=0.0, n_max=4)
        beam = aom_modulate(single_carrier(1.0, 4e-3), mod0, aom,
                            RfChainResponse.flat(mod0))
        amps = {c.n: c.amplitude for c in beam.components}
        assert amps[0] == 1.0
        assert all(a == 0.0 for n, a in amps.items() if n != 0)

    def test_pre_lens_tilts(self, mod, aom):
        beam = aom_modulate(single_carrier(1.0, 1e-3), mod, aom,
                            RfChainResponse.flat(mod), pre_lens=True)
        dtheta = LAMBDA * 2.5e6 / 4200.0
        for comp in beam.components:
            assert comp.mode.center_x == 0.0
            assert comp.mode.tilt == pytest.approx(comp.n * dtheta, rel=1e-12)

    def test_drive_envelope_matches_time_domain_oracle(self, mod, aom):
        """Comb convolution equals the DFT of E(t) * envelope(t)."""
        mi, mq = 0.013, -0.007
        rf = RfChainResponse.from_poly(mod, (1.0, 0.02, -0.003), (0.0, 0.05))
        beam = aom_modulate(single_carrier(1.0, 4e-3), mod, aom, rf, mi, mq)
        amps = {c.n: c.amplitude for c in beam.components}

        nt = 64
        t = np.arange(nt) / nt  # one modulation period, phase units
        n = np.arange(-8, 9)
        base = bessel_amplitudes(1.0, 8) * rf(mod.f_carrier + n * mod.f_m)
        field = (base[:, None] * np.exp(2j * np.pi * np.outer(n, t))).sum(axis=0)
        field *= 1 + mi * np.cos(2 * np.pi * t) + mq * np.sin(2 * np.pi * t)
        for order in range(-8, 9):
            coeff = (field * np.exp(-2j * np.pi * order * t)).mean()
            assert amps[order] == pytest.approx(coeff, abs=1e-14)

    def test_overmodulation_rejected(self, mod, aom):
        with pytest.raises(OvermodulationError):
            aom_modulate(single_carrier(1.0, 4e-3), mod, aom,
                         RfChainResponse.flat(mod), 0.8, 0.7)

    def test_requires_single_order_zero_carrier(self, mod, aom):
        bad = BeamState((FourierComponent(1, 1 + 0j, SpatialMode(1e-3)),))
        with pytest.raises(BeamlineError):
            aom_modulate(bad, mod, aom, RfChainResponse.flat(mod))

    def test_rf_span_check(self, mod, aom):
        narrow = RfChainResponse((mod.f_carrier - 1e6, mod.f_carrier + 1e6),
                                 (1 + 0j, 1 + 0j))
        with pytest.raises(BeamlineError, match="span"):
            aom_modulate(single_carrier(1.0, 4e-3), mod, aom, narrow)

    def test_power_conserved_flat_response(self, mod, aom):
        carrier = single_carrier(2.5, 4e-3)
        beam = aom_modulate(carrier, mod, aom, RfChainResponse.flat(mod))
        assert beam.power == pytest.approx(2.5, rel=1e-9)


class TestElementTransforms:
    def _comb(self, w0=4e-3):
        j = bessel_amplitudes(1.0, 6)
        comps = tuple(
            FourierComponent(n, complex(j[n + 4]), SpatialMode(w0, n * 0.336e-3))
            for n in range(-6, 7)
        )
        return BeamState(comps, pol_angle=0.3)

    def test_lens_identity(self):
        beam = self._comb()
        out = apply_lens_telescope(beam, 4e-3, 1.0)
        assert out == beam

    def test_lens_scales_centers(self):
        out = apply_lens_telescope(self._comb(), 2e-3, 2.0)
        for c in out.components:
            assert c.mode.center_x == pytest.approx(c.n * 0.672e-3, rel=1e-12)
            assert c.mode.w0 == 2e-3
            assert c.mode.tilt == 0.0

    def test_lens_lossless(self):
        beam = self._comb()
        assert apply_lens_telescope(beam, 1e-3, 3.0).power == beam.power

    def test_split_symmetric(self):
        r, t = split(self._comb(), SplitterSpec(0.5, 0.5))
        assert r.power == pytest.approx(t.power, rel=1e-12)

    def test_split_full_reflection(self):
        beam = BeamState(self._comb().components, pol_angle=0.0)
        r, t = split(beam, SplitterSpec(1.0, 0.0))
        assert r.power == pytest.approx(beam.power, rel=1e-12)
        assert t.power == 0.0

    def test_split_diagonal_polarization(self):
        beam = BeamState(self._comb().components, pol_angle=math.pi / 4)
        r, t = split(beam, SplitterSpec(0.6, 0.4))
        assert r.power == pytest.approx(0.5 * beam.power, rel=1e-12)
        assert t.power == pytest.approx(0.5 * beam.power, rel=1e-12)

    def test_split_conserves_power_per_component(self):
        beam = self._comb()
        r, t = split(beam, SplitterSpec(0.37, 0.82))
        for cin, cr, ct in zip(beam.components, r.components, t.components):
            assert abs(cr.amplitude) ** 2 + abs(ct.amplitude) ** 2 == pytest.approx(
                abs(cin.amplitude) ** 2, rel=1e-12
            )

    def test_halfwave_aligned_plate_is_identity(self):
        beam = BeamState(self._comb().components, pol_angle=0.7)
        assert rotate_halfwave(beam, 0.7).pol_angle == pytest.approx(0.7)

    def test_halfwave_rotation(self):
        beam = BeamState(self._comb().components, pol_angle=0.0)
        assert rotate_halfwave(beam, math.pi / 8).pol_angle == pytest.approx(math.pi / 4)

    def test_halfwave_involution(self):
        beam = BeamState(self._comb().components, pol_angle=0.41)
        twice = rotate_halfwave(rotate_halfwave(beam, 1.1), 1.1)
        assert twice.pol_angle == pytest.approx(0.41)


class TestFiberProject:
    def test_perfect_coupling(self):
        mode = SpatialMode(0.3e-3)
        beam = BeamState((FourierComponent(0, 2 + 0j, mode),))
        out = fiber_project(beam, FiberSpec(0.3e-3), LAMBDA)
        assert out.components[0].amplitude == pytest.approx(2.0, abs=1e-15)

    def test_lateral_offset_closed_form(self):
        # matched waists, pure lateral offset: |c| = exp(-d^2 / (2 w0^2))
        w0, d = 0.4e-3, 0.15e-3
        beam = BeamState((FourierComponent(0, 1 + 0j, SpatialMode(w0, d)),))
        out = fiber_project(beam, FiberSpec(w0), LAMBDA)
        assert abs(out.components[0].amplitude) == pytest.approx(
            math.exp(-d * d / (2 * w0 * w0)), rel=1e-12
        )

    def test_coupling_never_gains(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            mode = SpatialMode(rng.uniform(0.1e-3, 1e-3), rng.uniform(-3e-4, 3e-4),
                               rng.uniform(-5e-4, 5e-4))
            fiber = FiberSpec(rng.uniform(0.1e-3, 1e-3), rng.uniform(-2e-4, 2e-4),
                              rng.uniform(-5e-4, 5e-4))
            beam = BeamState((FourierComponent(0, 1 + 0j, mode),))
            out = fiber_project(beam, fiber, LAMBDA)
            assert abs(out.components[0].amplitude) <= 1.0 + 1e-12

    def test_output_modes_identical(self):
        j = bessel_amplitudes(1.0, 6)
        dtheta = LAMBDA * 2.5e6 / 4200.0
        comps = tuple(
            FourierComponent(n, complex(j[n + 4]), SpatialMode(0.2e-3, 0.0, n * dtheta))
            for n in range(-6, 7)
        )
        out = fiber_project(BeamState(comps), FiberSpec(0.2e-3), LAMBDA)
        modes = {c.mode for c in out.components}
        assert modes == {SpatialMode(0.2e-3, 0.0, 0.0)}

    def test_only_attenuates_total_power(self):
        j = bessel_amplitudes(1.0, 6)
        comps = tuple(
            FourierComponent(n, complex(j[n + 4]),
                             SpatialMode(0.2e-3, n * 1e-5, n * 1e-4))
            for n in range(-6, 7)
        )
        beam = BeamState(comps)
        out = fiber_project(beam, FiberSpec(0.25e-3, 1e-5, 2e-5), LAMBDA)
        assert out.power <= beam.power
