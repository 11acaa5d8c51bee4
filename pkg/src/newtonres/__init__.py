"""Newton-potential spectra and small-inclusion resonances of high-contrast media."""
from .errors import *  # noqa: F401,F403
from .geometry import DiscreteDomain, export_voxels, load_voxels, make_ball, make_box
from .operators import (
    ContrastConfig,
    KernelOperator,
    LatticeNewton,
    assemble_characteristic,
    assemble_derivative,
    assemble_newton,
)
from .spectral import SpectralData, ball_oracle, cluster, coupling, eig_newton0
from .resonances import (
    EigenPath,
    ResonanceResult,
    contour_solver,
    eigen_path,
    resonance_set,
    track_cluster,
    track_resonance,
)
from .asymptotics import (
    ExpansionPrediction,
    LocalizationConstants,
    check_localization,
    fit_expansion,
    localization_constants,
    mk0_inverse_bound,
    predict_first_order,
)
from .field import ScatterScenario, SweepResult, frequency_sweep, interior_density, scattered_field

__version__ = "0.1.0"
