"""fmbeam: desk-scale simulator of a frequency-modulated laser beamline.

Models the FM sideband comb of an acousto-optically modulated beam, its
spatial splitting, aperture-restricted detection of the residual amplitude
modulation, single-mode-fiber mode cleanup, and the narrow-band feedback
loop that cancels the AM on the RF drive envelope.
"""

__version__ = "0.1.0"

from .beamline import (
    AomSpec,
    BeamState,
    BeamlineError,
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
from .control import (
    ControlError,
    ControllerState,
    RejectionReport,
    controller_step,
    demodulate_iq,
    propagate,
    run_closed_loop,
)
from .detection import (
    Aperture,
    DetectionError,
    DetectorSpec,
    FullPlane,
    HalfPlaneScreen,
    HarmonicSet,
    NoiseSpec,
    OffsetRect,
    OracleConvergenceError,
    fig2_scan,
    overlap,
    overlap_quadrature_oracle,
    photocurrent_harmonics,
    synthesize_timeseries,
)
from .scenario import RfSource, Scenario, ScenarioError, load_scenario, parse_scenario
from .spectra import SpectraError, Spectrum, before_after_spectra, estimate_psd
