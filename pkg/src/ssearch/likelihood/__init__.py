"""PR-GHK simulated likelihoods and the crude frequency oracle."""
from .api import (
    ghk_probability,
    pr_ghk_first_and_purchase,
    pr_ghk_full,
    pr_ghk_purchase_only,
    pr_ghk_searched_set,
    pr_ghk_subset_path,
)
from .kernels import CorrelatedTasteModel, StochasticCostModel, truncnorm_sample, value_model
from .oracle import crude_frequency_likelihood, match_views
from .problem import BaselineProblem, DrawSet, LikelihoodConfig, baseline_slots
from .discovery import DiscoveryProblem, discovery_slots, pr_ghk_discovery
