"""Self-similar Markov process toolkit.

Simulation, exponential-functional laws, stationary-density solvers,
extreme-value classification and factor laws for positive self-similar
Markov processes built from a Lévy process through the Lamperti
transformation.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    EmptyTail,
    InvalidMeasure,
    MalformedSpec,
    MayDiverge,
    NoConvergence,
    NonConvergence,
    NotASubordinator,
    NotFactorizableError,
    NoYaglomRegime,
    OutOfDomain,
    RareEvent,
    SeriesDivergence,
    TiltDiverges,
    TooFewExceedances,
)
from .measures import (  # noqa: F401
    ExpTail,
    FiniteTable,
    GridTail,
    LampertiTail,
    StableTail,
    measure_from_json,
)
from .levyspec import LevySpec, spec_from_json, spec_to_json  # noqa: F401
