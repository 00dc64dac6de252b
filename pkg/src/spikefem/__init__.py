"""Spiking-network solver for FEM-discretized Poisson problems, with
neuron-ablation and spike-drop fault experiments."""

from .fem import (CsrMatrix, FemSystem, assemble, element_load,
                  element_stiffness, evaluate_rhs)
from .faults import FaultSpec, sample_ablation_mask, sample_drop_mask
from .linsolve import CgConfig, cg_solve, residual_norm
from .mesh import Mesh, build_unit_square_mesh, interior_nodes
from .network import (GammaMap, Network, NetworkConfig, build_gamma,
                      build_network, calibrate_gamma)
from .simulator import (DivergenceError, SpikeLog, TrialResult,
                        active_backend, available_backends, mean_firing_rate,
                        run)

__version__ = "0.1.0"
