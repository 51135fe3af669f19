"""Cross-sensor tactile translation: electrode signals to source-sensor
deformation meshes, to target-sensor meshes, to rendered target-sensor images."""

from .exceptions import TactileTransferError
from .mesh import MeshScaler, MeshTopology, SurfaceMesh, make_biotac_patch, make_digit_pad
from .models import LatentProjector, MeshVAE, ModelSpec, SignalVAE
from .signals import DriftCorrector, SignalFrame, SignalNormalizer

__version__ = "0.1.0"

__all__ = [
    "DriftCorrector",
    "LatentProjector",
    "MeshScaler",
    "MeshTopology",
    "MeshVAE",
    "ModelSpec",
    "SignalFrame",
    "SignalNormalizer",
    "SignalVAE",
    "SurfaceMesh",
    "TactileTransferError",
    "make_biotac_patch",
    "make_digit_pad",
]
