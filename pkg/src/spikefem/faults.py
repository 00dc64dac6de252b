"""Seeded stochastic fault models: pre-run neuron ablation and per-step spike drops.

Both models are independent Bernoulli draws from the trial's generator. The
ablation mask is fixed before the first step; drop masks are regenerated
every step and apply to whichever neurons spiked that step (a dropped spike
reaches no destination at all, but still resets its emitter).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FaultSpec:
    """Fault probabilities for one trial; the two models compose independently."""

    ablation_p: float = 0.0
    drop_p: float = 0.0

    def __post_init__(self):
        for name in ("ablation_p", "drop_p"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {p}")

    @property
    def is_none(self) -> bool:
        return self.ablation_p == 0.0 and self.drop_p == 0.0


NO_FAULTS = FaultSpec()


def sample_ablation_mask(m_neurons: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. Bernoulli(p) mask, True = ablated for the whole run."""
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"ablation probability must be in [0, 1], got {p}")
    return rng.random(m_neurons) < p


def sample_drop_mask(m_neurons: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. Bernoulli(p) mask for a single step, True = spike dropped."""
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"drop probability must be in [0, 1], got {p}")
    return rng.random(m_neurons) < p


@dataclass
class FaultRealization:
    """Concrete faults for one trial.

    ``ablation_mask`` is drawn once up front (None when ablation_p == 0, so a
    no-fault run consumes no randomness). Drop masks are drawn lazily from
    ``rng`` by the simulation loop, one Bernoulli per neuron per step, only
    when ``drop_p > 0``.
    """

    ablation_mask: np.ndarray | None
    drop_p: float
    rng: np.random.Generator

    @classmethod
    def realize(cls, spec: FaultSpec, m_neurons: int,
                rng: np.random.Generator) -> "FaultRealization":
        mask = None
        if spec.ablation_p > 0.0:
            mask = sample_ablation_mask(m_neurons, spec.ablation_p, rng)
        return cls(ablation_mask=mask, drop_p=spec.drop_p, rng=rng)
