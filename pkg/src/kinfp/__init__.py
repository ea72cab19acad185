"""Spectral solvers and verification harness for fractional kinetic Fokker-Planck equations.

Submodules are imported on first attribute access so that ``kinfp.cli`` can set
thread limits before numpy loads.
"""

from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "core": ("KineticParams", "PhaseGrid", "Frame", "SpectralField", "SourceDecomposition", "to_frame",
             "to_real_space", "from_real_space", "rescale_field", "make_lattices"),
    "norms": ("NormSpace", "TimeMode", "L2", "Hdot_v", "Hdot_x", "Xdot", "norm", "WeightSpec", "WeightKind",
              "eval_weight"),
    "kolmogorov": ("phase_integral", "kernel_K", "solve_forward", "solve_backward", "solve_cauchy",
                   "apply_symbol", "transport"),
    "bounds": ("EstimateId", "BoundReport", "estimate_comp_constants", "verify_kernel_integrals",
               "operator_norm_scan"),
    "rough": ("DiffusionForm", "weak_solve", "causality_check", "EnergyLedger"),
    "diagnostics": ("embedding_report", "EmbeddingReport", "absolute_continuity_check"),
    "io": ("RunConfig", "GeneratorSpec", "generate_source", "generate_field", "read_field", "write_field",
           "load_config"),
}
_WHERE = {name: mod for mod, names in _EXPORTS.items() for name in names}
__all__ = sorted(_WHERE) + ["__version__"]


def __getattr__(name):
    if name in _WHERE:
        return getattr(import_module(f".{_WHERE[name]}", __name__), name)
    raise AttributeError(f"module 'kinfp' has no attribute {name!r}")
