"""Clustering-based structure-preserving model reduction of multi-agent network systems."""

from .clustering import (ClusterInput, cluster_basis, clustering_basis, kmeans, kmeans_cluster,
                         kmeans_cost, qr_cluster)
from .graph import WeightedGraph, build_matrices, grid_graph, is_connected
from .mas import AgentDynamics, LinearMas, LtiRealization, cluster_reduce, is_synchronized, realize
from .mor import balanced_truncation, irka, pod
from .nonlinear import (NonlinearMas, cluster_reduce_nonlinear, reduction_error, simulate,
                        vanderpol_network)
from .partition import Partition, count_partitions, enumerate_partitions
from .search import heuristic_pipeline, nonlinear_pipeline, partition_census, rank_all_partitions
from .stabsep import decompose_mas, h2_error, h2_norm, hinf_error, hinf_norm
from .sysfile import ParseError, SystemFile, load_system

__version__ = "0.1.0"

__all__ = [
    "AgentDynamics", "ClusterInput", "LinearMas", "LtiRealization", "NonlinearMas", "ParseError",
    "Partition", "SystemFile", "WeightedGraph", "balanced_truncation", "build_matrices",
    "cluster_basis", "cluster_reduce", "cluster_reduce_nonlinear", "clustering_basis",
    "count_partitions", "decompose_mas", "enumerate_partitions", "grid_graph", "h2_error",
    "h2_norm", "heuristic_pipeline", "hinf_error", "hinf_norm", "irka", "is_connected",
    "is_synchronized", "kmeans", "kmeans_cluster", "kmeans_cost", "load_system",
    "nonlinear_pipeline", "partition_census", "pod", "qr_cluster", "rank_all_partitions",
    "realize", "reduction_error", "simulate", "vanderpol_network",
]
