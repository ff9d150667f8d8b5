"""
Agitation Lab

Undersampling, cost-weighted forests and cumulative class re-decision for
detecting agitation in one-minute wearable sensor windows.
"""

__version__ = "1.0.0"
__author__ = "Agitation Lab contributors"
__description__ = "Imbalanced time-series classification experiments on synthetic wearable cohorts"
