"""Training simulator for neural networks on resistive cross-point arrays.

The package models saturating (soft-bound) synapse devices, crossbar tiles
with analog read non-idealities and stochastic pulse updates, the
symmetry-point calibration procedure that cancels device imbalance, and a
small fully-connected classifier trained directly on the simulated tiles.
"""

from .device import (
    Direction,
    DeviceVariation,
    FitError,
    FitResult,
    PulseTrace,
    ShiftedParams,
    SoftBoundParams,
    apply_pulse,
    depression_step,
    fit_soft_bound,
    linear_step,
    make_trace,
    nominal_num_states,
    params_from_imbalance,
    potentiation_step,
    predict_trace,
    read_trace_csv,
    sample_device,
    symmetry_point,
    write_trace_csv,
    zero_shift,
)
from .tile import (
    AnalogConfig,
    CrossbarTile,
    FloatTile,
    PulseUpdateConfig,
    new_tile,
    uniform_midrise,
)
from .calibration import (
    ConvergenceReport,
    converge_to_symmetry,
    copy_to_reference,
    zero_shift_calibrate,
)
from .network import (
    DeviceConfig,
    EpochRecord,
    Network,
    TrainerConfig,
    activation,
    activation_deriv,
    learning_rate,
    make_network,
    train,
)
from .dataset import Dataset, IdxFormatError, load_idx, shuffled_indices

__version__ = "0.1.0"
