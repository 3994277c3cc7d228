"""Grey-box plug-flow reactor toolkit for continuous diazo acetonitrile synthesis.

Forward simulation of the two-reaction network with gas formation,
evaluation of the band-area / zone-heat / gas-flow measurement models,
weighted least-squares calibration against the bundled datasets, and
cross-validated reporting.
"""

from .dataio import (
    ExperimentRecord,
    ReactorConfig,
    Setup,
    SimulationInputs,
    derive_inputs,
    load_bundled_experiments,
    load_bundled_reactors,
    load_experiments,
    load_reactor_config,
)
from .kinetics import (
    ArrheniusParams,
    DecompositionModel,
    KineticParameters,
    NeuralDecomposition,
    decomposition_rate,
    load_parameters,
    nn_forward,
    rate_constant,
    save_parameters,
    synthesis_rate,
)
from .pfr import (
    AxialProfile,
    GasOverflowError,
    MixtureState,
    NonConvergenceError,
    Observables,
    band_area,
    closure,
    gas_density,
    gas_flow_rate,
    observables,
    rhs,
    solve,
    zone_heats,
)
from .calibration import (
    CostBreakdown,
    FitReport,
    OptimizerSettings,
    cost_ftir,
    cost_gas,
    cost_heat,
    fit,
    pack,
    scalarize,
    unpack,
)
from .validation import (
    CrossValReport,
    MetricError,
    cross_validate,
    mae,
    parity_export,
    r_squared,
)

__version__ = "0.1.0"
