"""Scenario forging toolkit: accident reports in, critical driving scenarios out.

The pipeline runs in four stages, each usable on its own:

1. ``llm.extract_ips`` distills a natural-language accident report into an
   interaction script (``ips``): who was on the road and who did what to whom.
2. ``llm.convert_to_template`` plus ``logicalize.fill_ranges`` turn the script
   into a logical scenario, a test-case template whose parameters are ranges.
3. ``search.run_search`` runs a three-objective genetic search over the ranges,
   simulating each candidate with ``microsim.simulate`` and keeping the cases
   that end in a collision.
4. ``triage.classify`` groups collisions into scenario types and
   ``triage.metrics`` summarises repeated campaigns.
"""

from .config import PipelineConfig, SimSettings, derive_seed
from .dsl import (
    ConcreteTestCase,
    concrete_from_template,
    LogicalScenario,
    Statement,
    TestCaseTemplate,
    instantiate,
    parse_concrete,
    parse_logical,
    parse_template,
    serialize_concrete,
    serialize_template,
    validate_concrete,
)
from .errors import ScenForgeError
from .fitness import FitnessVector, acr, div, dominates, evaluate, mhd, param_point
from .ips import (
    IPS,
    ActionVerb,
    InitialAction,
    InteractivePattern,
    RoadDescriptor,
    RoadShape,
    VehicleId,
    check_legality,
    parse_ips,
    serialize_ips,
)
from .llm import (
    LlmClientConfig,
    Prompt,
    ReplayClient,
    Transcript,
    convert_to_template,
    extract_ips,
    make_client,
    prompt_digest,
)
from .logicalize import DefaultRangeTable, fill_ranges, select_ego, substitute_ego
from .microsim import (
    EgoPolicyConfig,
    PhysicsConfig,
    RoadModel,
    SimTrace,
    simulate,
)
from .search import CriticalSet, SearchConfig, SearchResult, random_search, run_search
from .triage import CampaignMetrics, TypeSignature, classify, metrics

__version__ = "0.1.0"

__all__ = [
    "ActionVerb",
    "CampaignMetrics",
    "ConcreteTestCase",
    "CriticalSet",
    "DefaultRangeTable",
    "EgoPolicyConfig",
    "FitnessVector",
    "IPS",
    "InitialAction",
    "InteractivePattern",
    "LlmClientConfig",
    "LogicalScenario",
    "PhysicsConfig",
    "PipelineConfig",
    "Prompt",
    "ReplayClient",
    "RoadDescriptor",
    "RoadModel",
    "RoadShape",
    "ScenForgeError",
    "SearchConfig",
    "SearchResult",
    "SimSettings",
    "SimTrace",
    "Statement",
    "TestCaseTemplate",
    "Transcript",
    "TypeSignature",
    "VehicleId",
    "acr",
    "check_legality",
    "classify",
    "concrete_from_template",
    "convert_to_template",
    "derive_seed",
    "div",
    "dominates",
    "evaluate",
    "extract_ips",
    "fill_ranges",
    "instantiate",
    "make_client",
    "metrics",
    "mhd",
    "param_point",
    "parse_concrete",
    "parse_ips",
    "parse_logical",
    "parse_template",
    "prompt_digest",
    "random_search",
    "run_search",
    "select_ego",
    "serialize_concrete",
    "serialize_ips",
    "serialize_template",
    "simulate",
    "substitute_ego",
    "validate_concrete",
]
