"""Joint transceiver and movable-antenna position optimization for networked ISAC."""
from .channel import PositionLayout, Scenario, ScenarioConfig, generate_scenario, stack_channels
from .engine import EngineConfig, InfeasibleScenario, IterateLog, initialize, run
from .metrics import DecisionState, sinr_radar, sum_rate

__all__ = [
    "DecisionState", "EngineConfig", "InfeasibleScenario", "IterateLog", "PositionLayout",
    "Scenario", "ScenarioConfig", "generate_scenario", "initialize", "run", "sinr_radar",
    "stack_channels", "sum_rate",
]
__version__ = "0.1.0"
