"""GAN inversion toolkit: train an encoder against a frozen generator via
image-space reconstruction, compare against baseline inversion routes, and
apply the learned latents to image search and blur-removal reconstruction.
"""

__version__ = "0.1.0"

from .autodiff import Tensor
from .errors import AeganError, NumericalError, ParseError, ShapeError, ValidationError
from .models import ArchitectureConfig
from .rng import Rng

__all__ = [
    "ArchitectureConfig",
    "AeganError",
    "NumericalError",
    "ParseError",
    "Rng",
    "ShapeError",
    "Tensor",
    "ValidationError",
    "__version__",
]
