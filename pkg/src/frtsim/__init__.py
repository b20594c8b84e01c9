"""Grid-forming inverter fault ride-through co-simulation toolkit."""

from .network import (
    FAULT_TYPES,
    FaultSpec,
    GridDisturbance,
    NetworkBuildError,
    NetworkModel,
    NetworkParams,
    SimulationDiverged,
    fault_admittance,
    reactance_pu_from_inductance,
)
from .oracle import (
    IbrSourceSpec,
    OracleSolution,
    SequenceNetworkOracle,
    SgSourceSpec,
    zone_reference_angles,
)
from .phasors import (
    DeltaBuffer,
    PeakTracker,
    SequenceSeparator,
    SequenceSet,
    abc_to_sequence,
    apf_separate,
    dft_phasor,
    phasor,
    sequence_to_abc,
    sliding_fundamental,
)

__version__ = "0.1.0"
