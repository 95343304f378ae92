"""Simulation and verification toolkit for periodic block-band random matrices.

The modules follow the pipeline of the circular-law argument for these
matrices: entry distributions (:mod:`atoms`), the matrix model
(:mod:`bandmat`), dense spectra (:mod:`spectra`), least-singular-value
experiments (:mod:`lsv`), the limiting Stieltjes transform (:mod:`stieltjes`),
the Hermitization comparison (:mod:`girko`) and executable identity checks
(:mod:`oracles`).
"""

from .atoms import KINDS, AtomDistribution
from .bandmat import PeriodicBlockBandMatrix, ShiftedMatrix, generate, to_dense
from .report import ExperimentReport, trial_seed

__all__ = ["KINDS", "AtomDistribution", "PeriodicBlockBandMatrix", "ShiftedMatrix", "generate", "to_dense",
           "ExperimentReport", "trial_seed"]
__version__ = "0.1.0"
