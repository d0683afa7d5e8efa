"""Privacy-preserving federated aggregation with additive masking.

The package splits the trust in a federated computation between two
non-colluding services: a coordination server that only ever sees masked
model parameters, and a lightweight compensator that only ever sees the
random noise used for masking.  Combining the two aggregates yields exact
(or float-rounding-exact) global results without either service learning
any participant's raw values.
"""

from fedmask.errors import FedMaskError
from fedmask.masking import (
    DEFAULT_NOISE_VARIANCE,
    DEFAULT_PRIME,
    GaussianSpec,
    PrimeModulus,
    RngHandle,
    default_modulus,
    field_aggregate,
    field_share,
    field_unmask,
    mi_upper_bound,
    real_aggregate,
    real_share,
    real_unmask,
    validate_modulus,
)
from fedmask.protocol import (
    DType,
    ParameterValue,
    ProjectConfig,
    SyncState,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_NOISE_VARIANCE",
    "DEFAULT_PRIME",
    "DType",
    "FedMaskError",
    "GaussianSpec",
    "ParameterValue",
    "PrimeModulus",
    "ProjectConfig",
    "RngHandle",
    "SyncState",
    "default_modulus",
    "field_aggregate",
    "field_share",
    "field_unmask",
    "mi_upper_bound",
    "real_aggregate",
    "real_share",
    "real_unmask",
    "validate_modulus",
    "__version__",
]
