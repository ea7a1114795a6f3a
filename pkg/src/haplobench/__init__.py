"""Simulation and calibration workbench for a rotating-wing haploscope."""

__version__ = "0.1.0"

from .bench import Bench, assemble_nominal, configure_for_user, simulate_stimulus, stimulus_mismatch  # noqa: E402
from .calibration import run_checklist  # noqa: E402
from .config import load_bench, save_bench  # noqa: E402

__all__ = [
    "Bench",
    "__version__",
    "assemble_nominal",
    "configure_for_user",
    "load_bench",
    "run_checklist",
    "save_bench",
    "simulate_stimulus",
    "stimulus_mismatch",
]
