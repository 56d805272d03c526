"""Numerical laboratory for singlet-state hidden-variable models.

Builds deterministic hidden-vector completions of the singlet statistics,
verifies their predictive equivalence with the analytic quantum description,
and audits them (and comparison models) against a hierarchy of probabilistic
constraints: free choice, no-signaling (full and operational), free will,
staticity, parameter and outcome independence, and factorization locality.
"""

from .geometry import UnitVector, angle_between, effective_angle, rotate_pair
from .models import (
    BellModel,
    GrModel,
    LocalDetMixture,
    MeasurementContext,
    Mode,
    Model,
    OutcomePair,
    QmOracle,
    SignUndefined,
    TiePolicy,
    bell_outcome,
    gr_outcome,
    localdet_outcome,
    parse_model_spec,
    qm_probability,
    random_product_mixture,
)
from .sampling import (
    EventRecord,
    Fixed,
    RunConfig,
    RunResult,
    SettingsGrid,
    UniformIID,
    parse_angle,
    planar_grid,
    run_experiment,
    sample_sphere,
    sample_sphere_batch,
)
from .tables import (
    AuditReport,
    ConstraintReport,
    JointTable,
    SignCellPartition,
    TrivialPartition,
    audit_implications,
    build_table,
    conditional,
    default_partition,
    run_all_checks,
)
from .analysis import (
    ChshResult,
    CorrelationCurve,
    RegionMap,
    chsh,
    chsh_from_angles,
    correlation,
    correlation_curve,
    localdet_chsh,
    region_map,
    signaling_threshold,
    signaling_witness,
)

__version__ = "0.1.0"
