"""Harris flows driven by smoothed singular measures, and their Arratia limit."""
from .covariance import SmoothedKernel
from .kernel import Mollifier, ScaledKernel
from .measure import AtomicMeasure

__version__ = "0.1.0"

__all__ = ["AtomicMeasure", "Mollifier", "ScaledKernel", "SmoothedKernel", "__version__"]
