"""Data-generating processes for search and discovery."""
from .discovery import (DiscoveryMarket, LogPlan, RouteCatalog, check_discovery_log,
                        available_actions, decode_actions, discovery_tables,
                        enumerate_logs, plan_log,
                        draw_discovery_values, encode_actions, route_beliefs,
                        simulate_discovery_batch, simulate_discovery_search)
from .baseline import (
    batch_to_sequences,
    deterministic_utility,
    draw_values,
    draw_values_batch,
    simulate_search,
    simulate_search_batch,
)
from .params import CORRELATED_TASTE, PARAM_NAMES, STOCHASTIC_COST, ModelParams
