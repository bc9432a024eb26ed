"""Cell-average based neural network solver for parabolic PDEs."""

__version__ = "0.1.0"
