"""epiforge: census-driven stochastic agent-based influenza simulator.

Library layout mirrors the pipeline: ``census`` (tabular inputs),
``fixtures`` (synthetic bundles), ``popgen`` (population and mixing-group
synthesis), ``disease`` (transmission maths and natural history),
``engine`` (the half-day-step simulator), ``analysis`` (reproductive
ratio, attack rates, synchrony), ``plots`` (figure rendering), ``cli``
(the ``epiforge`` command).
"""

__version__ = "0.1.0"

from .census import (AGE_BANDS, BundleValidationError, CensusBundle,
                     haversine_km, parse_bundle, write_bundle)
from .disease import (Context, DiseaseModel, HealthState, InfectionRecord,
                      NaturalHistoryParams, TransmissionTables, preset)
from .engine import SeedingConfig, SimConfig, SimOutput, Simulation, run, run_many
from .fixtures import FixtureSpec, generate_fixture
from .popgen import Population, build_population

__all__ = [
    "AGE_BANDS", "BundleValidationError", "CensusBundle", "Context",
    "DiseaseModel", "FixtureSpec", "HealthState", "InfectionRecord",
    "NaturalHistoryParams", "Population", "SeedingConfig", "SimConfig",
    "SimOutput", "Simulation", "TransmissionTables", "build_population",
    "generate_fixture", "haversine_km", "parse_bundle", "preset", "run",
    "run_many", "write_bundle", "__version__",
]
