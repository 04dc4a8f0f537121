"""Statistical experiments: equivalence tests and the convergence report."""

from .config import KINDS, ExperimentConfig, config_from_dict, default_config, load_config
from .convergence import run_convergence_report
from .equivalence import run_gibbs_invariance_test, run_girsanov_test, run_scaling_test, run_walk_scaling_test
from .report import Report

RUNNERS = {
    "girsanov": run_girsanov_test,
    "scaling": run_scaling_test,
    "gibbs-invariance": run_gibbs_invariance_test,
    "walk-scaling": run_walk_scaling_test,
    "convergence": run_convergence_report,
    "kernel-convergence": run_convergence_report,
}


def run_experiment(cfg):
    return RUNNERS[cfg.kind](cfg)


__all__ = [
    "KINDS", "ExperimentConfig", "Report", "RUNNERS", "config_from_dict", "default_config", "load_config",
    "run_convergence_report", "run_experiment", "run_gibbs_invariance_test", "run_girsanov_test",
    "run_scaling_test", "run_walk_scaling_test",
]
