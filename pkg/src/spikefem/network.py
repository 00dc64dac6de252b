"""Construction of the spiking circuit that embeds a linear system.

Each system unknown gets ``npm`` neurons projecting onto it with signed
magnitude ``gamma`` (first half positive, second half negative for even
``npm``; alternating, starting positive, for odd). Spike thresholds are
``gamma**2 / 2`` and the recurrent interaction is carried through the
low-dimensional readout accumulator rather than materialized neuron-to-neuron
weights; both views agree exactly (see the simulator equivalence tests).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .fem import FemSystem
from .linsolve import cg_iterations


@dataclass(frozen=True)
class NetworkConfig:
    """Resolved network hyperparameters for one simulation."""

    npm: int = 16
    gamma: float | str = "auto"
    lambda_d: float = 1.0
    dt: float = 1e-3
    t_total: float = 20.0
    decode_window: float = 0.25
    eta: float = 0.05

    def __post_init__(self):
        if self.npm < 1:
            raise ValueError(f"npm must be >= 1, got {self.npm}")
        if isinstance(self.gamma, str):
            if self.gamma != "auto":
                raise ValueError(f"gamma must be positive or 'auto', got {self.gamma!r}")
        elif self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        for name in ("lambda_d", "dt", "t_total", "eta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not (0.0 < self.decode_window <= 1.0):
            raise ValueError(f"decode_window must be in (0, 1], got {self.decode_window}")
        if self.dt * self.lambda_d >= 0.1:
            raise ValueError(f"dt * lambda_d must stay below 0.1 for the explicit "
                             f"integrator, got {self.dt * self.lambda_d}")
        if not (0.0 < self.eta < 1.0):
            raise ValueError(f"eta must be in (0, 1), got {self.eta}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_total / self.dt))


@dataclass(frozen=True)
class GammaMap:
    """Sparse N x M readout map with one signed entry of magnitude gamma per column.

    Column k belongs to unknown ``k // npm`` (its row) with sign given by the
    slot ``k % npm``.
    """

    n_dofs: int
    npm: int
    gamma: float
    rows: np.ndarray          # int32[M], owning unknown of each neuron
    signed_values: np.ndarray  # float64[M], +gamma or -gamma

    @property
    def n_neurons(self) -> int:
        return self.n_dofs * self.npm

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n_dofs, self.n_neurons))
        dense[self.rows, np.arange(self.n_neurons)] = self.signed_values
        return dense

    def project(self, w: np.ndarray) -> np.ndarray:
        """Gamma^T w: per-neuron signed pickup of an N-vector."""
        return self.signed_values * w[self.rows]

    def accumulate(self, s: np.ndarray) -> np.ndarray:
        """Gamma s: per-unknown sum of signed spike contributions."""
        out = np.zeros(self.n_dofs)
        np.add.at(out, self.rows, self.signed_values * s)
        return out


def build_gamma(n_dofs: int, npm: int, gamma: float) -> GammaMap:
    """Construct the signed readout map; raises ``ValueError`` on bad sizes."""
    if n_dofs < 1:
        raise ValueError(f"n_dofs must be >= 1, got {n_dofs}")
    if npm < 1:
        raise ValueError(f"npm must be >= 1, got {npm}")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    m = n_dofs * npm
    rows = (np.arange(m, dtype=np.int32) // npm).astype(np.int32)
    slots = np.arange(m) % npm
    if npm % 2 == 0:
        signs = np.where(slots < npm // 2, 1.0, -1.0)
    else:
        signs = np.where(slots % 2 == 0, 1.0, -1.0)
    return GammaMap(n_dofs, npm, float(gamma), rows, signs * gamma)


def calibrate_gamma(system: FemSystem, eta: float) -> float:
    """Spike quantum from a coarse solution estimate: eta * max|x_estimate|.

    The estimate comes from 25 unpreconditioned CG iterations. A zero load
    gives the documented sentinel ``eta`` (any positive value works; the
    network stays silent).
    """
    if not (0.0 < eta < 1.0):
        raise ValueError(f"eta must be in (0, 1), got {eta}")
    if system.n_dofs < 1:
        raise ValueError("system is empty")
    if not np.any(system.b):
        return eta
    x_est = cg_iterations(system.A, system.b, 25)
    scale = float(np.max(np.abs(x_est)))
    if scale == 0.0:
        raise ValueError("coarse solve returned an identically zero estimate "
                         "for a nonzero load")
    return eta * scale


@dataclass(frozen=True)
class Network:
    """Immutable spiking circuit tied to one assembled system."""

    gamma_map: GammaMap
    thresholds: np.ndarray
    fem: FemSystem
    config: NetworkConfig

    @property
    def n_neurons(self) -> int:
        return self.gamma_map.n_neurons

    @property
    def n_dofs(self) -> int:
        return self.gamma_map.n_dofs

    @property
    def gamma(self) -> float:
        return self.gamma_map.gamma

    def summary(self) -> dict:
        return {
            "n_dofs": self.n_dofs,
            "n_neurons": self.n_neurons,
            "npm": self.gamma_map.npm,
            "gamma": self.gamma,
            "lambda_d": self.config.lambda_d,
            "threshold_min": float(self.thresholds.min()),
            "threshold_max": float(self.thresholds.max()),
        }

    def export_summary(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.summary(), indent=2) + "\n")
        return path


def build_network(system: FemSystem, config: NetworkConfig) -> Network:
    """Resolve gamma (calibrating if 'auto') and assemble the circuit."""
    if system.n_dofs < 1:
        raise ValueError("system is empty")
    if config.gamma == "auto":
        gamma = calibrate_gamma(system, config.eta)
        config = replace(config, gamma=gamma)
    else:
        gamma = float(config.gamma)
    gmap = build_gamma(system.n_dofs, config.npm, gamma)
    thresholds = np.full(gmap.n_neurons, 0.5 * gamma * gamma)
    return Network(gamma_map=gmap, thresholds=thresholds, fem=system, config=config)
