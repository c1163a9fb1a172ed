"""The LLM-guided pipeline behind the common sampler contract."""

from __future__ import annotations

from ..llm_gateway import TranscriptLog
from ..sampling import BaseSampler
from .pipeline import SamplingBudget, run_sampling_loop


class LLM4PerfSampler(BaseSampler):
    """Feedback-driven LLM sampler: prune once, then analyze, design, generate and vote.

    Parameters
    ----------
    llm : backend or LLMBackends
        A MockScript, LiveEndpoint, callable, or per-role backends.
    docs : list of ConfigOption, optional
        Documentation for the filter; defaults to the options' own descriptions.
    batch_size, n_generators : int
        Configurations measured per iteration and parallel generators.
    prune : bool
        Run the option filter before sampling.
    transcript_path : path, optional
        JSON-lines transcript destination; kept in memory when omitted.
    """

    name = "llm4perf"
    requires_oracle = True
    multi_objective = True
    min_objectives = 1

    def __init__(self, llm=None, docs=None, batch_size=7, n_generators=5, prune=True, prompts=None,
                 transcript_path=None, model_id="mock", random_state=None):
        self.llm = llm
        self.docs = docs
        self.batch_size = batch_size
        self.n_generators = n_generators
        self.prune = prune
        self.prompts = prompts
        self.transcript_path = transcript_path
        self.model_id = model_id
        self.random_state = random_state

    def _sample(self, space, k, oracle, objectives, rng):
        if self.llm is None:
            raise ValueError("llm4perf needs an LLM backend")
        budget = SamplingBudget(k, min(self.batch_size, k), self.n_generators)
        seed = int(rng.integers(2**32))
        return run_sampling_loop(space, self.docs, budget, oracle, self.llm, objectives, seed=seed,
                                 prune=self.prune, prompts=self.prompts,
                                 transcript=TranscriptLog(self.transcript_path), model_id=self.model_id)


def sample_llm4perf(space, k, seed, oracle, objectives, llm, **params):
    return LLM4PerfSampler(llm=llm, **params).sample(space, k, oracle, objectives, seed=seed)
