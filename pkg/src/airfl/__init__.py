"""Over-the-air federated learning simulator with power control via norm clipping.

Subpackages cover the full uplink pipeline (local SGD, Top-k sparsification
with error feedback, clipping, linear projection, Gaussian MAC, sparse
recovery) plus an offline evaluator of the associated convergence bound.
"""

__version__ = "0.1.0"
