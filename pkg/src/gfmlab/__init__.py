"""gfmlab: microgrid EMT simulation, passivity analysis, and gain synthesis.

The simulation kernel is a compiled extension (`gfmlab._core`) with a pure
Python fallback selected automatically at import; set GFMLAB_FORCE_FALLBACK=1
to force the fallback.  `gfmlab._kernel.backend_name()` reports the choice.
"""

from importlib import resources as _resources

from ._kernel import backend_name
from .analysis import (
    EnergyAuditReport,
    OrbitDistance,
    OrbitReference,
    PhiProfile,
    Snapshot,
    bregman,
    energy_balance_audit,
    epsilon_bound_inner,
    epsilon_bound_ultimate,
    gradient,
    hamiltonian,
    lambda1_membership,
    load_orbit,
    orbit_distance,
    q1_weights,
    save_orbit,
    shifted_hamiltonian,
    z_coordinates,
)
from .edges import GfmDerState, DroopDerState
from .engine import (
    Event,
    Scenario,
    SteadyStateReport,
    Trajectory,
    apply_event,
    extract_orbit,
    frequency_spread,
    integrate_step,
    load_scenario,
    load_topology,
    read_channels_csv,
    run_scenario,
    steady_state_metrics,
)
from .errors import (
    BalanceViolation,
    ConditionFailure,
    ConfigError,
    DimensionError,
    DivergenceDetected,
    GfmlabError,
    NotSettled,
    OrbitReferenceError,
    SolverFailure,
    StiffnessFailure,
    TopologyError,
    VoltageCollapse,
)
from .gains import (
    GainDesign,
    GainReport,
    assemble_der_matrices,
    load_gains,
    save_gains,
    solve_gain_sdp,
    verify_gain,
)
from .network import DerSpec, Interconnection, Line, Shunt, SourceTie, Topology, ZipLoad, build_incidence
from .params import (
    BaseValues,
    DerGains,
    DerParams,
    DroopGains,
    SystemDroopGains,
    reference_droop_gains,
    reference_k_hat,
    table_der_params,
)
from .system import PackedSystem

__version__ = "0.1.0"


def data_path(name: str):
    """Path to a bundled network/scenario/gains data file."""
    return _resources.files("gfmlab").joinpath("data", name)
