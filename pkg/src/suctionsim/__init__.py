"""Deterministic surgical suction simulator and experiment harness.

A particle-blood scene on a smooth tissue surface is observed through a
top-down binary mask, a reasoning backend orders the detected pools, and a
scripted controller drives the suction tool through that order. The harness
runs seeded batches across four scene families and reports clearance-time
metrics with Welch comparisons between reasoning backends.
"""

from .config import (
    DEFAULT_EXTENT,
    DEFAULT_SURFACE_AMPLITUDE,
    DEFAULT_SURFACE_DEGREE,
    PerceptionConfig,
    PhysicsConfig,
)
from .control import EnvStep, PolicyCommand, RewardTerms, ScriptedPolicy, SuctionEnv, compute_reward
from .errors import (
    CassetteError,
    ConfigError,
    DomainError,
    ParseError,
    PlanExhausted,
    RateLimited,
    ReplayMiss,
    ScenarioError,
    SimulationFault,
    SuctionSimError,
    TransportError,
)
from .fluid import SimState, compute_suction_force, init_scene, step_simulation
from .harness import (
    MODULES,
    compare_modules,
    emit_report,
    load_records,
    make_backend,
    metric_samples,
    run_batch,
    run_episode,
)
from .llm_client import Cassette, ChatClient, ChatRequest, fingerprint, load_cassette
from .metrics import METRIC_NAMES, Metrics, aggregate, compute_metrics
from .perception import (
    AnnotatedImage,
    BinaryMask,
    Observation,
    ObservationBuilder,
    PoolObservation,
    PoolTracker,
    annotate_scene,
    detect_pools,
    rasterize_mask,
    target_mask,
)
from .reasoning import (
    FULL_MASK_SENTINEL,
    LLMBackend,
    NoneBackend,
    PriorityPlan,
    PromptBundle,
    RandomBackend,
    RuleBackend,
    build_prompt,
    parse_plan,
    plan,
    should_replan,
)
from .records import EpisodeRecord
from .scenario import ClotSpec, EmitterSpec, ScenarioConfig, generate_scenario
from .stats import WelchResult, welch_t_test
from .tissue import (
    HeightMap,
    TissueSurface,
    bernstein_basis,
    evaluate_surface,
    generate_surface,
    sample_heightmap,
    surface_height,
)

__version__ = "0.1.0"
