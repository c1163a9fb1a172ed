"""LLM-guided configuration sampling: filter, analyze, design, generate, vote."""

from .pipeline import (AnalysisDoc, LLMBackends, MeasurementHistory, SamplingBudget, StrategyDoc,
                       analyze_trends, describe_space, design_strategy, filter_options,
                       generate_candidates, run_sampling_loop, tally_votes, vote_candidates)
from .prompts import PromptSet, Template
from .sampler import LLM4PerfSampler, sample_llm4perf

__all__ = [
    "AnalysisDoc", "LLM4PerfSampler", "LLMBackends", "MeasurementHistory", "PromptSet", "SamplingBudget",
    "StrategyDoc", "Template", "analyze_trends", "describe_space", "design_strategy", "filter_options",
    "generate_candidates", "run_sampling_loop", "sample_llm4perf", "tally_votes", "vote_candidates",
]
