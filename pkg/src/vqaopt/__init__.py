"""
vqaopt - GRAD, learn-to-learn and evolution-strategy optimizers for
variational quantum circuits
"""

__version__ = "1.0.0"
