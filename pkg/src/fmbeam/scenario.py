"""Declarative beamline scenarios: structured-text parsing, validation and
canonical re-serialization.

Format: named `[section]` headers, `key = value` lines, `#` comments.
Unknown sections or keys are rejected; every default is materialized into
the parsed Scenario so nothing is hidden. The canonical serialization
round-trips bit-exactly through the parser.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

from .beamline import (
    AomSpec,
    BeamlineError,
    FiberSpec,
    ModulationSpec,
    RfChainResponse,
    SplitterSpec,
)
from .detection import (
    Aperture,
    DetectionError,
    DetectorSpec,
    FullPlane,
    HalfPlaneScreen,
    NoiseSpec,
    OffsetRect,
)

FORMAT_VERSION = 1


class ScenarioError(ValueError):
    """Config parse or validation failure, with a line number when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class RfSource:
    """RF chain response as declared in the config: kept in source form so
    scenarios re-serialize exactly; the sampled table is built on demand."""
    kind: str = "flat"  # flat | poly | table
    amp_coeffs: Tuple[float, ...] = (1.0,)
    phase_coeffs: Tuple[float, ...] = (0.0,)
    table: Tuple[Tuple[float, float, float], ...] = ()  # (freq, re, im)

    def build(self, mod: ModulationSpec) -> RfChainResponse:
        if self.kind == "flat":
            return RfChainResponse.flat(mod)
        if self.kind == "poly":
            return RfChainResponse.from_poly(mod, self.amp_coeffs, self.phase_coeffs)
        if self.kind == "table":
            return RfChainResponse(
                tuple(f for f, _, _ in self.table),
                tuple(complex(re, im) for _, re, im in self.table),
            )
        raise ScenarioError(f"unknown rf_response type '{self.kind}'")


@dataclass(frozen=True)
class Scenario:
    """Full declarative beamline + experiment description."""
    format_version: int
    topology: str  # fig1 (split, no fiber) | fig3 (fiber then split)
    modulation: ModulationSpec
    aom: AomSpec
    rf_source: RfSource
    beam_w0: float
    beam_power: float
    beam_pol_angle: float
    fiber: Optional[FiberSpec]
    telescope_w0: float
    telescope_shift_scale: float
    splitter: SplitterSpec
    plate_angle: float
    pd1: DetectorSpec
    pd2: DetectorSpec
    controller_gain: float
    controller_dt: float
    controller_steps: int
    reference_phase: Optional[float]  # None = auto-calibrated
    noise: Optional[NoiseSpec]
    fig2_x_min: float = -1.5
    fig2_x_max: float = 1.5
    fig2_points: int = 121

    def __post_init__(self):
        if self.format_version != FORMAT_VERSION:
            raise ScenarioError(f"unsupported format_version {self.format_version}")
        if self.topology not in ("fig1", "fig3"):
            raise ScenarioError(f"topology must be fig1 or fig3, got '{self.topology}'")
        if self.topology == "fig3" and self.fiber is None:
            raise ScenarioError("topology fig3 requires a [fiber] section")
        if self.beam_w0 <= 0 or self.beam_power <= 0:
            raise ScenarioError("beam w0 and power must be > 0")
        if self.telescope_w0 <= 0:
            raise ScenarioError("telescope w0_out must be > 0")
        if self.controller_gain <= 0 or self.controller_dt <= 0:
            raise ScenarioError("controller gain and dt must be > 0")
        if self.controller_gain * self.controller_dt >= 2.0:
            raise ScenarioError("controller gain*dt must be < 2 (discrete stability)")
        if self.controller_steps < 1:
            raise ScenarioError("controller steps must be >= 1")
        if self.fig2_points < 2 or self.fig2_x_min >= self.fig2_x_max:
            raise ScenarioError("invalid fig2 sweep range")

    def rf_response(self) -> RfChainResponse:
        return self.rf_source.build(self.modulation)

    def to_text(self) -> str:
        return serialize_scenario(self)

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# parsing

_KNOWN = {
    "scenario": {"format_version", "topology"},
    "modulation": {"f_carrier", "f_m", "beta", "n_max"},
    "aom": {"v_ac", "wavelength", "f_lens", "lateral_shift_override"},
    "rf_response": {"type", "amp_coeffs", "phase_coeffs", "points"},
    "beam": {"w0", "power", "pol_angle"},
    "fiber": {"w_fiber", "offset_x", "tilt"},
    "telescope": {"w0_out", "shift_scale"},
    "splitter": {"r_p", "r_s"},
    "plate": {"angle"},
    "pd1": {"aperture", "rho", "edge_x", "center_x", "center_y", "half_width", "half_height"},
    "pd2": {"aperture", "rho", "edge_x", "center_x", "center_y", "half_width", "half_height"},
    "controller": {"gain", "dt", "steps", "reference_phase"},
    "noise": {"seed", "rin_level", "corner_hz"},
    "fig2": {"x_min", "x_max", "points"},
}
_REQUIRED_SECTIONS = ("modulation", "scenario", "aom", "rf_response", "beam",
                      "telescope", "splitter", "plate", "pd1", "pd2", "controller")


class _Section:
    def __init__(self, line: int):
        self.line = line
        self.items: Dict[str, Tuple[str, int]] = {}


def _tokenize(text: str) -> Dict[str, _Section]:
    sections: Dict[str, _Section] = {}
    current: Optional[_Section] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _KNOWN:
                raise ScenarioError(f"unknown section: {name}", lineno)
            if name in sections:
                raise ScenarioError(f"duplicate section: {name}", lineno)
            current = _Section(lineno)
            sections[name] = current
            continue
        if "=" not in line:
            raise ScenarioError(f"expected 'key = value', got '{line}'", lineno)
        if current is None:
            raise ScenarioError("key outside any section", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        name = next(n for n, s in sections.items() if s is current)
        if key not in _KNOWN[name]:
            raise ScenarioError(f"unknown key '{key}' in section [{name}]", lineno)
        if key in current.items:
            raise ScenarioError(f"duplicate key '{key}'", lineno)
        current.items[key] = (value, lineno)
    return sections


def _get(sec: _Section, key: str, conv, default=_Section):
    if key not in sec.items:
        if default is _Section:
            raise ScenarioError(f"missing required key: {key}", sec.line)
        return default
    value, lineno = sec.items[key]
    try:
        return conv(value)
    except ScenarioError:
        raise
    except Exception as exc:
        raise ScenarioError(f"bad value for {key}: {exc}", lineno)


def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("value must be finite")
    return v


def _floats(s: str) -> Tuple[float, ...]:
    return tuple(_float(p) for p in s.split(","))


def _aperture(sec: _Section) -> Aperture:
    kind = _get(sec, "aperture", str, "full")
    if kind == "full":
        return FullPlane()
    if kind == "halfplane":
        return HalfPlaneScreen(_get(sec, "edge_x", _float))
    if kind == "rect":
        return OffsetRect(
            _get(sec, "center_x", _float, 0.0),
            _get(sec, "center_y", _float, 0.0),
            _get(sec, "half_width", _float),
            _get(sec, "half_height", _float),
        )
    raise ScenarioError(f"unknown aperture '{kind}' (full|halfplane|rect)", sec.line)


def parse_scenario(text: str) -> Scenario:
    """Parse and fully validate a scenario config. Raises ScenarioError with
    a line number on unknown sections/keys, missing keys or invariant
    violations."""
    sections = _tokenize(text)
    for name in _REQUIRED_SECTIONS:
        if name not in sections:
            raise ScenarioError(f"missing section: {name}")

    sc = sections["scenario"]
    topology = _get(sc, "topology", str)
    if topology == "fig3" and "fiber" not in sections:
        raise ScenarioError("topology fig3 requires a [fiber] section", sc.line)

    mo = sections["modulation"]
    try:
        modulation = ModulationSpec(
            f_carrier=_get(mo, "f_carrier", _float),
            f_m=_get(mo, "f_m", _float),
            beta=_get(mo, "beta", _float),
            n_max=_get(mo, "n_max", int),
        )
    except BeamlineError as exc:
        raise ScenarioError(str(exc), mo.line)

    ao = sections["aom"]
    try:
        aom = AomSpec(
            v_ac=_get(ao, "v_ac", _float),
            wavelength=_get(ao, "wavelength", _float),
            f_lens=_get(ao, "f_lens", _float),
            lateral_shift_override=_get(ao, "lateral_shift_override", _float, None),
        )
    except BeamlineError as exc:
        raise ScenarioError(str(exc), ao.line)

    rf = sections["rf_response"]
    kind = _get(rf, "type", str, "flat")
    if kind not in ("flat", "poly"):
        raise ScenarioError(f"unknown rf_response type '{kind}' (flat|poly)", rf.line)
    rf_source = RfSource(
        kind=kind,
        amp_coeffs=_get(rf, "amp_coeffs", _floats, (1.0,)),
        phase_coeffs=_get(rf, "phase_coeffs", _floats, (0.0,)),
    )

    be = sections["beam"]
    fiber = None
    if "fiber" in sections:
        fi = sections["fiber"]
        try:
            fiber = FiberSpec(
                w_fiber=_get(fi, "w_fiber", _float),
                offset_x=_get(fi, "offset_x", _float, 0.0),
                tilt=_get(fi, "tilt", _float, 0.0),
            )
        except BeamlineError as exc:
            raise ScenarioError(str(exc), fi.line)

    te = sections["telescope"]
    sp = sections["splitter"]
    try:
        splitter = SplitterSpec(_get(sp, "r_p", _float, 0.5), _get(sp, "r_s", _float, 0.5))
    except BeamlineError as exc:
        raise ScenarioError(str(exc), sp.line)

    def detector(name: str) -> DetectorSpec:
        sec = sections[name]
        try:
            return DetectorSpec(_aperture(sec), _get(sec, "rho", _float, 1.0))
        except DetectionError as exc:
            raise ScenarioError(str(exc), sec.line)

    co = sections["controller"]
    ref = _get(co, "reference_phase", str, "auto")
    reference_phase = None if ref == "auto" else _float(ref)

    noise = None
    if "noise" in sections:
        no = sections["noise"]
        try:
            noise = NoiseSpec(
                seed=_get(no, "seed", int, 0),
                rin_level=_get(no, "rin_level", _float, 0.0),
                corner_hz=_get(no, "corner_hz", _float, 1e3),
            )
        except DetectionError as exc:
            raise ScenarioError(str(exc), no.line)

    fig2 = sections.get("fig2")
    kwargs = {}
    if fig2 is not None:
        kwargs = dict(
            fig2_x_min=_get(fig2, "x_min", _float, -1.5),
            fig2_x_max=_get(fig2, "x_max", _float, 1.5),
            fig2_points=_get(fig2, "points", int, 121),
        )

    return Scenario(
        format_version=_get(sc, "format_version", int),
        topology=topology,
        modulation=modulation,
        aom=aom,
        rf_source=rf_source,
        beam_w0=_get(be, "w0", _float),
        beam_power=_get(be, "power", _float, 1e-3),
        beam_pol_angle=_get(be, "pol_angle", _float, 0.0),
        fiber=fiber,
        telescope_w0=_get(te, "w0_out", _float),
        telescope_shift_scale=_get(te, "shift_scale", _float, 1.0),
        splitter=splitter,
        plate_angle=_get(sections["plate"], "angle", _float, 0.0),
        pd1=detector("pd1"),
        pd2=detector("pd2"),
        controller_gain=_get(co, "gain", _float),
        controller_dt=_get(co, "dt", _float),
        controller_steps=_get(co, "steps", int, 30),
        reference_phase=reference_phase,
        noise=noise,
        **kwargs,
    )


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())


# ---------------------------------------------------------------------------
# serialization

def _fmt(v: float) -> str:
    return repr(float(v))


def _aperture_lines(det: DetectorSpec) -> List[str]:
    ap = det.aperture
    if isinstance(ap, FullPlane):
        lines = ["aperture = full"]
    elif isinstance(ap, HalfPlaneScreen):
        lines = ["aperture = halfplane", f"edge_x = {_fmt(ap.edge_x)}"]
    else:
        lines = [
            "aperture = rect",
            f"center_x = {_fmt(ap.center_x)}",
            f"center_y = {_fmt(ap.center_y)}",
            f"half_width = {_fmt(ap.half_width)}",
            f"half_height = {_fmt(ap.half_height)}",
        ]
    lines.append(f"rho = {_fmt(det.rho)}")
    return lines


def serialize_scenario(s: Scenario) -> str:
    """Canonical text form; parse(serialize(s)) == s for any valid Scenario."""
    out: List[str] = []

    def section(name, *lines):
        out.append(f"[{name}]")
        out.extend(lines)
        out.append("")

    section("scenario", f"format_version = {s.format_version}", f"topology = {s.topology}")
    section(
        "modulation",
        f"f_carrier = {_fmt(s.modulation.f_carrier)}",
        f"f_m = {_fmt(s.modulation.f_m)}",
        f"beta = {_fmt(s.modulation.beta)}",
        f"n_max = {s.modulation.n_max}",
    )
    aom_lines = [
        f"v_ac = {_fmt(s.aom.v_ac)}",
        f"wavelength = {_fmt(s.aom.wavelength)}",
        f"f_lens = {_fmt(s.aom.f_lens)}",
    ]
    if s.aom.lateral_shift_override is not None:
        aom_lines.append(f"lateral_shift_override = {_fmt(s.aom.lateral_shift_override)}")
    section("aom", *aom_lines)
    section(
        "rf_response",
        f"type = {s.rf_source.kind}",
        f"amp_coeffs = {', '.join(_fmt(c) for c in s.rf_source.amp_coeffs)}",
        f"phase_coeffs = {', '.join(_fmt(c) for c in s.rf_source.phase_coeffs)}",
    )
    section(
        "beam",
        f"w0 = {_fmt(s.beam_w0)}",
        f"power = {_fmt(s.beam_power)}",
        f"pol_angle = {_fmt(s.beam_pol_angle)}",
    )
    if s.fiber is not None:
        section(
            "fiber",
            f"w_fiber = {_fmt(s.fiber.w_fiber)}",
            f"offset_x = {_fmt(s.fiber.offset_x)}",
            f"tilt = {_fmt(s.fiber.tilt)}",
        )
    section(
        "telescope",
        f"w0_out = {_fmt(s.telescope_w0)}",
        f"shift_scale = {_fmt(s.telescope_shift_scale)}",
    )
    section("splitter", f"r_p = {_fmt(s.splitter.r_p)}", f"r_s = {_fmt(s.splitter.r_s)}")
    section("plate", f"angle = {_fmt(s.plate_angle)}")
    section("pd1", *_aperture_lines(s.pd1))
    section("pd2", *_aperture_lines(s.pd2))
    ref = "auto" if s.reference_phase is None else _fmt(s.reference_phase)
    section(
        "controller",
        f"gain = {_fmt(s.controller_gain)}",
        f"dt = {_fmt(s.controller_dt)}",
        f"steps = {s.controller_steps}",
        f"reference_phase = {ref}",
    )
    if s.noise is not None:
        section(
            "noise",
            f"seed = {s.noise.seed}",
            f"rin_level = {_fmt(s.noise.rin_level)}",
            f"corner_hz = {_fmt(s.noise.corner_hz)}",
        )
    section(
        "fig2",
        f"x_min = {_fmt(s.fig2_x_min)}",
        f"x_max = {_fmt(s.fig2_x_max)}",
        f"points = {s.fig2_points}",
    )
    return "\n".join(out)
