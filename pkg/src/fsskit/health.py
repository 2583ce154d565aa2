"""
Health check and system information utilities for fsskit.
"""
import os
import platform
import shutil
import sys
from importlib import import_module
from typing import Any, Dict

REQUIRED = ("numpy", "scipy")


def _version(module: str) -> str:
    try:
        return getattr(import_module(module), "__version__", "unknown")
    except ImportError:
        return "not installed"


def get_system_info() -> Dict[str, Any]:
    """Get system information for diagnostics."""
    return {
        "python_version": sys.version.split()[0],
        "platform": platform.platform(),
        "machine": platform.machine(),
        "numpy_version": _version("numpy"),
        "scipy_version": _version("scipy"),
        "cpu_count": os.cpu_count() or 1,
        "term_width": shutil.get_terminal_size(fallback=(80, 24)).columns,
    }


def check_dependencies() -> Dict[str, bool]:
    """Check if required dependencies are importable."""
    checks = {}
    for module in REQUIRED:
        try:
            import_module(module)
            checks[module] = True
        except ImportError:
            checks[module] = False
    return checks


def format_system_info(info: Dict[str, Any]) -> str:
    """Format system information as a readable string."""
    lines = [
        "System Information:",
        f"  Python: {info['python_version']}",
        f"  Platform: {info['platform']}",
        f"  Machine: {info['machine']}",
        f"  CPUs: {info['cpu_count']}",
        "",
        "Dependencies:",
        f"  NumPy: {info['numpy_version']}",
        f"  SciPy: {info['scipy_version']}",
    ]
    return "\n".join(lines)


def check_health() -> Dict[str, Any]:
    """Perform a dependency health check."""
    health = {
        "status": "healthy",
        "checks": {"dependencies": check_dependencies()},
        "system": get_system_info(),
    }
    missing = [dep for dep, ok in health["checks"]["dependencies"].items() if not ok]
    if missing:
        health["status"] = "unhealthy"
        health["missing_dependencies"] = missing
    return health
