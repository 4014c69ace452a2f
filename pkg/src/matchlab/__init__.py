"""matchlab: a desk-scale semi-supervised learning laboratory.

Multihead co-training with three-fold pseudo-label weighting (head agreement,
self-adaptive confidence thresholds, average pseudo-margin cutoffs), the
single-technique baselines it generalises, long-tail split generators, an
auxiliary balanced classifier, and pseudo-label quality reporting.
"""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
