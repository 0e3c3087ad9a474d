"""Command-line surface: scenario-driven experiments with CSV/report output.

Exit codes: 0 success, 2 config error, 3 numerical self-test failure.
All CSV files carry `# key: value` header comments naming units, the
scenario hash and the seed; identical scenario + seed gives byte-identical
output.
"""
from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import replace
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .beamline import (
    AomSpec,
    BeamlineError,
    ModulationSpec,
    RfChainResponse,
    SpatialMode,
    SplitterSpec,
    aom_modulate,
    bessel_amplitudes,
    single_carrier,
)
from .control import ControlError, run_closed_loop, propagate
from .detection import (
    DetectionError,
    DetectorSpec,
    FullPlane,
    HalfPlaneScreen,
    NoiseSpec,
    OffsetRect,
    fig2_scan,
    overlap,
    overlap_quadrature_oracle,
    photocurrent_harmonics,
)
from .scenario import RfSource, Scenario, ScenarioError, load_scenario
from .spectra import SpectraError, before_after_spectra


def _fmt(v: float) -> str:
    return f"{v:.12e}"


def _write_csv(path: str, header: dict, columns: List[str], rows) -> None:
    lines = [f"# {k}: {v}" for k, v in header.items()]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _apply_overrides(scenario: Scenario, args) -> Scenario:
    if getattr(args, "steps", None) is not None:
        scenario = replace(scenario, controller_steps=args.steps)
    if getattr(args, "seed", None) is not None:
        noise = scenario.noise if scenario.noise is not None else NoiseSpec()
        scenario = replace(scenario, noise=replace(noise, seed=args.seed))
    return scenario


def cmd_fig2(scenario: Scenario, out: str) -> int:
    """Occultation sweep of the useful beam: normalized i(f_m) vs X/w0."""
    beam2 = propagate(scenario, 0.0, 0.0)[1]
    xs = np.linspace(scenario.fig2_x_min, scenario.fig2_x_max, scenario.fig2_points)
    vals = fig2_scan(beam2, scenario.pd2.rho, xs)
    _write_csv(
        out,
        {
            "fmbeam": __version__,
            "command": "fig2",
            "scenario_hash": scenario.content_hash(),
            "units": "X_over_w0 dimensionless, normalized_ifm dimensionless (2|c1|/(rho P0))",
        },
        ["X_over_w0", "normalized_ifm"],
        zip(xs.tolist(), vals.tolist()),
    )
    return 0


def cmd_rejection(scenario: Scenario, out: str, steps: Optional[int] = None) -> int:
    """Closed-loop run; prints the report and writes the |c_1| trajectories."""
    report = run_closed_loop(scenario, steps)
    header = {
        "fmbeam": __version__,
        "command": "rejection",
        "scenario_hash": scenario.content_hash(),
        "beam1_rejection_db": _fmt(report.beam1_rejection_db),
        "beam2_rejection_db": _fmt(report.beam2_rejection_db),
        "residual_relative_am": _fmt(report.residual_relative_am),
        "converged": report.converged,
        "settle_time_s": _fmt(report.settle_time_s),
        "initial_am_zero": report.initial_am_zero,
        "actuator_clamped": report.actuator_clamped,
        "units": "c1 magnitudes in A, rel_am dimensionless (2|c1|/c0)",
    }
    rows = zip(
        range(len(report.beam1_c1_abs)),
        report.beam1_c1_abs,
        report.beam2_c1_abs,
        report.beam1_rel_am,
        report.beam2_rel_am,
    )
    _write_csv(out, header,
               ["step", "beam1_c1_abs", "beam2_c1_abs", "beam1_rel_am", "beam2_rel_am"],
               rows)
    print(f"beam 1 rejection: {report.beam1_rejection_db:.2f} dB")
    print(f"beam 2 rejection: {report.beam2_rejection_db:.2f} dB")
    print(f"beam 2 residual relative AM: {report.residual_relative_am:.3e}")
    print(f"converged: {report.converged}  settle time: {report.settle_time_s:.4g} s")
    if report.initial_am_zero:
        print("note: initial |c1| = 0 (no disturbance to reject)")
    if report.actuator_clamped:
        print("warning: actuator clamped at |m| = 1")
    return 0


def cmd_spectrum(scenario: Scenario, out: str, steps: Optional[int] = None) -> int:
    """Before/after PD2 spectra around f_m; writes <out>.before.csv and
    <out>.after.csv."""
    before, after, report = before_after_spectra(scenario, steps=steps)
    seed = scenario.noise.seed if scenario.noise is not None else "none"
    for tag, spec in (("before", before), ("after", after)):
        header = {
            "fmbeam": __version__,
            "command": "spectrum",
            "scenario_hash": scenario.content_hash(),
            "kind": tag,
            "rbw_hz": _fmt(spec.rbw_hz),
            "window": spec.window,
            "seed": seed,
            "beam2_rejection_db": _fmt(report.beam2_rejection_db),
            "units": "freq_hz in Hz, dbc in dB relative to carrier",
        }
        _write_csv(f"{out}.{tag}.csv", header, ["freq_hz", "dbc"],
                   zip(spec.freqs.tolist(), spec.dbc.tolist()))
    print(f"wrote {out}.before.csv and {out}.after.csv "
          f"(rejection {report.beam2_rejection_db:.2f} dB)")
    return 0


def _selftest_scenario() -> Scenario:
    return Scenario(
        format_version=1,
        topology="fig1",
        modulation=ModulationSpec(),
        aom=AomSpec(f_lens=1.0, lateral_shift_override=0.336e-3),
        rf_source=RfSource("poly", (1.0, 0.01), (0.0,)),
        beam_w0=1e-3,
        beam_power=1e-3,
        beam_pol_angle=0.0,
        fiber=None,
        telescope_w0=4e-3,
        telescope_shift_scale=1.0,
        splitter=SplitterSpec(),
        plate_angle=0.0,
        pd1=DetectorSpec(FullPlane(), 0.8),
        pd2=DetectorSpec(HalfPlaneScreen(-2e-3), 0.8),
        controller_gain=30.0,
        controller_dt=0.01,
        controller_steps=25,
        reference_phase=None,
        noise=None,
    )


def cmd_selftest(perturb: float = 0.0) -> int:
    """Analytic-vs-oracle overlap grid, Bessel identities and loop
    stability. Returns 0 on pass, 3 on numerical failure.

    `perturb` scales the analytic overlaps by (1 + perturb) before the
    comparison; a nonzero value is a mutation hook that must fail."""
    t0 = time.monotonic()
    failures: List[str] = []

    rng = np.random.default_rng(20260823)
    for case in range(60):
        w = rng.uniform(1e-3, 8e-3)
        xa, xb = rng.uniform(-1e-3, 1e-3, size=2)
        ma, mb = SpatialMode(w, xa), SpatialMode(w, xb)
        pick = case % 3
        if pick == 0:
            ap = FullPlane()
        elif pick == 1:
            ap = HalfPlaneScreen(rng.uniform(-2, 2) * w)
        else:
            ap = OffsetRect(rng.uniform(-w, w), rng.uniform(-w, w),
                            rng.uniform(0.3, 3) * w, rng.uniform(0.3, 3) * w)
        ana = overlap(ma, mb, ap) * (1.0 + perturb)
        orc = overlap_quadrature_oracle(ma, mb, ap)
        if abs(ana - orc) > 1e-8 * max(abs(orc), 1.0):
            failures.append(f"overlap mismatch (case {case}): {ana} vs {orc}")

    for beta in (0.0, 0.5, 1.0, 1.5, 2.0, 3.0):
        j = bessel_amplitudes(beta, 12)
        if abs(float(j[:-1] @ j[1:])) > 1e-12:
            failures.append(f"Bessel antisymmetric pairing broken at beta={beta}")
        if not (1 - 1e-9 <= float(j @ j) <= 1.0 + 1e-12):
            failures.append(f"Bessel power sum out of range at beta={beta}")

    mod = ModulationSpec()
    carrier = single_carrier(1e-3, 4e-3)
    flat = aom_modulate(carrier, mod, AomSpec(lateral_shift_override=0.336e-3),
                        RfChainResponse.flat(mod))
    h = photocurrent_harmonics(flat, DetectorSpec(FullPlane(), 1.0), 1)
    if abs(h.amps[1]) > 1e-10 * h.amps[0].real:
        failures.append("pure FM produced AM at f_m on the full aperture")

    report = run_closed_loop(_selftest_scenario())
    traj = report.beam1_c1_abs
    if not all(traj[k + 1] <= traj[k] * (1 + 1e-12) for k in range(1, len(traj) - 1)):
        failures.append("beam-1 residual is not non-increasing in the noiseless loop")
    if not report.beam1_rejection_db > 60.0:
        failures.append(f"loop rejection {report.beam1_rejection_db:.1f} dB < 60 dB")

    elapsed = time.monotonic() - t0
    for f in failures:
        print(f"FAIL: {f}")
    print(f"selftest: {'FAIL' if failures else 'PASS'} "
          f"({60} overlap cases, {elapsed:.1f} s)")
    return 3 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fmbeam",
        description="FM laser beamline simulator: AOM sideband splitting, "
                    "residual AM and narrow-band feedback cancellation.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, steps=False):
        sp.add_argument("--scenario", required=True, help="scenario config file")
        sp.add_argument("--out", required=True, help="output CSV path (or prefix)")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the NoiseSpec seed")
        if steps:
            sp.add_argument("--steps", type=int, default=None,
                            help="override the controller step count")

    common(sub.add_parser("fig2", help="occultation sweep CSV"))
    common(sub.add_parser("rejection", help="closed-loop rejection report"), steps=True)
    common(sub.add_parser("spectrum", help="before/after PD2 spectra"), steps=True)
    st = sub.add_parser("selftest", help="numerical self-checks")
    st.add_argument("--perturb", type=float, default=0.0,
                    help="mutation hook: scale analytic overlaps by (1+perturb)")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            return cmd_selftest(args.perturb)
        scenario = _apply_overrides(load_scenario(args.scenario), args)
        if args.command == "fig2":
            return cmd_fig2(scenario, args.out)
        if args.command == "rejection":
            return cmd_rejection(scenario, args.out, args.steps)
        if args.command == "spectrum":
            return cmd_spectrum(scenario, args.out, args.steps)
        raise AssertionError(f"unhandled command {args.command}")
    except (ScenarioError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (BeamlineError, DetectionError, ControlError, SpectraError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
