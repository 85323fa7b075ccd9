"""Graph identification for diffusively coupled multi-agent networks from steady outputs."""

__version__ = "0.1.0"

from .detection import (AmbiguousDetection, DecodeError, DetectionResult, LookupTable,
                        Reconstruction, ReconstructionError, StaleTable, build_table, decode_row,
                        detect, load_table, reconstruct_lti, save_table)
from .graphs import (FamilyTooLarge, Graph, GraphError, GraphFamily, enumerate_family,
                     graph_from_laplacian, incidence, laplacian, parse_graph)
from .indication import (IndicationVector, SeparationError, SeparationReport, epsilon_bound,
                         gaussian_w, radix_w, separation_index)
from .models import (LtiNetworkModel, ModelError, NetworkModel, lti_to_network, neural_network,
                     parse_model, random_taus)
from .simulation import (ConvergenceVerdict, Trajectory, case_study, integrate,
                         run_scenario, run_to_convergence)
from .steady_state import SteadyState, build_X, solve, solve_lti, solve_nonlinear

__all__ = [
    "AmbiguousDetection", "DecodeError", "DetectionResult", "LookupTable", "Reconstruction",
    "ReconstructionError", "StaleTable", "build_table", "decode_row", "detect", "load_table",
    "reconstruct_lti", "save_table", "FamilyTooLarge", "Graph", "GraphError", "GraphFamily",
    "enumerate_family", "graph_from_laplacian", "incidence", "laplacian", "parse_graph",
    "IndicationVector", "SeparationError", "SeparationReport", "epsilon_bound", "gaussian_w",
    "radix_w", "separation_index", "LtiNetworkModel", "ModelError", "NetworkModel",
    "lti_to_network", "neural_network", "parse_model", "random_taus", "ConvergenceVerdict",
    "Trajectory", "case_study", "integrate", "run_scenario", "run_to_convergence", "SteadyState",
    "build_X", "solve", "solve_lti", "solve_nonlinear",
]
