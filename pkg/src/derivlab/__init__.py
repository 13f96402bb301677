"""Desk-scale lab for L2 derivation: baseline vs prefeed+nonce pipelines."""

from .baseline import DerivationOutput, derive_range_baseline
from .cost import CostLedger, CostWeights
from .optimized import BootInfo, NonceState, PrefeedSet, derive_range_optimized, run_range
from .world import Chain, ScenarioConfig, build_chain

__all__ = [
    "BootInfo",
    "Chain",
    "CostLedger",
    "CostWeights",
    "DerivationOutput",
    "NonceState",
    "PrefeedSet",
    "ScenarioConfig",
    "build_chain",
    "derive_range_baseline",
    "derive_range_optimized",
    "run_range",
]

__version__ = "0.1.0"
