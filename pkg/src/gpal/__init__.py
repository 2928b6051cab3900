"""Pool-based active learning for Gaussian process regression.

Core pieces: an RQ-ARD kernel with exact posteriors (`gpal.gp`), maximum
likelihood hyperparameter fitting (`gpal.mle`), pool selection strategies
including adaptive local-kernel mutual information (`gpal.selectors`), a
hysteretic-oscillator benchmark dataset (`gpal.boucwen`), prediction and
representativeness metrics (`gpal.metrics`), a batch benchmark harness
(`gpal.bench`), and an interactive campaign HTTP service (`gpal.service`).
"""

from gpal.gp import Hyperparameters, Posterior

__all__ = ["Hyperparameters", "Posterior"]
__version__ = "0.1.0"
