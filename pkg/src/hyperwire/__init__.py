"""HyperWire: typed interaction events, wiring search, and a live event dataflow.

Devices announce typed capabilities, applications announce typed
requirements, and the solver enumerates every way to wire one to the
other through split/merge/cast operators. Chosen wirings run as a
reconfigurable dataflow on the broker.
"""

from .events import (
    Domain,
    Event,
    EventModelError,
    EventType,
    Kind,
    Mode,
    clamp_to_domain,
    compatible,
    components,
    parse_type,
)
from .operators import (
    OperatorError,
    OperatorKind,
    OperatorSpec,
    OperatorState,
    apply_cast,
    apply_merge,
    apply_split,
    standard_catalog,
)
from .solver import (
    BudgetExceeded,
    Derivation,
    Hypergraph,
    Token,
    Wiring,
    WiringError,
    build_graph,
    solve,
    solve_exhaustive,
    validate,
    wiring_from_json,
    wiring_to_json,
)
from .registry import (
    AppDescriptor,
    Capability,
    DeviceDescriptor,
    Profile,
    Registry,
    RegistryError,
    Requirement,
)
from .router import ActiveWiring, Router, RouterError

__version__ = "0.1.0"
