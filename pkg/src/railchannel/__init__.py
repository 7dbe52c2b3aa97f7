"""Cluster-based time-variant channel simulator for high-speed railway links, with analysis tools."""

from .cdl import CdlTable, builtin_tables, instantiate, scale_normalized_delays
from .cir import CirTrace, combine_los, los_coefficient, nlos_ray_coefficient, render_snapshot, render_trace
from .clusters import ClusterSet, ClusterState, SmallScaleParams, generate_cluster_set
from .evolution import BdState, EvolutionLog, EvolutionParams, evolve
from .geometry import AntennaPattern, RotationMatrix, SphericalAngles
from .scenario import LspDistributions, PathLossModel, ScenarioConfig, path_loss_db, sample_lsps

__version__ = "0.1.0"
