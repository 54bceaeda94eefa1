"""
t1track - adaptive Bayesian tracking of fluctuating qubit relaxation times
"""

__version__ = "0.1.0"
