"""
fsskit: fundamental systems of solutions for y' = (λρB + A + C)y on the half-line.
"""
__version__ = "0.1.0"

from .errors import CertificateError, DomainError, FsskitError, NumericalError, SpecError, ThresholdError
from .picard import fss_threshold
from .scenario import load_scenario
from .sectors import compute_sectors, large_sector
from .solutions import build_fss, build_large_sector, supplement_fss
from .sturm import PencilSpec, pencil_fss
from .system import SystemSpec

__all__ = [
    "CertificateError",
    "DomainError",
    "FsskitError",
    "NumericalError",
    "PencilSpec",
    "SpecError",
    "SystemSpec",
    "ThresholdError",
    "__version__",
    "build_fss",
    "build_large_sector",
    "compute_sectors",
    "fss_threshold",
    "large_sector",
    "load_scenario",
    "pencil_fss",
    "supplement_fss",
]
