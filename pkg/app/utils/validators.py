"""
Argument Validators
Functions to validate command-line arguments before a run starts
"""

import math
from pathlib import Path
from typing import Optional, Sequence, Tuple

from app.core.errors import UsageError


def validate_input_file(path: Optional[str]) -> Tuple[bool, str]:
    """
    Validate the trial CSV path

    Args:
        path: Path given with --input (or from DOSERESP_DATASET)

    Returns:
        Tuple of (is_valid, message)
    """
    if not path or str(path).strip() == "":
        return False, "No input file; pass --input or set DOSERESP_DATASET"

    candidate = Path(path)
    if not candidate.exists():
        return False, f"Input file not found: {path}"
    if not candidate.is_file():
        return False, f"Input path is not a file: {path}"
    return True, "Valid"


def validate_bounds(bounds: Optional[Sequence[float]], label: str) -> Tuple[bool, str]:
    """Validate a (lower, upper) grid axis"""
    if bounds is None:
        return True, "Default"
    if len(bounds) != 2:
        return False, f"{label} bounds need exactly two values"
    lower, upper = bounds
    if not (math.isfinite(lower) and math.isfinite(upper)):
        return False, f"{label} bounds must be finite"
    if not lower < upper:
        return False, f"{label} bounds must satisfy lower < upper, got {lower} >= {upper}"
    return True, "Valid"


def validate_sampler_args(chains: Optional[int], iterations: Optional[int],
                          warmup_fraction: Optional[float],
                          target_accept: Optional[float]) -> Tuple[bool, str]:
    """Validate the HMC flags that have hard ranges"""
    if chains is not None and chains < 1:
        return False, f"--chains must be at least 1, got {chains}"
    if iterations is not None and iterations < 20:
        return False, f"--iters must be at least 20, got {iterations}"
    if warmup_fraction is not None and not 0 < warmup_fraction < 1:
        return False, f"--warmup-frac must lie in (0, 1), got {warmup_fraction}"
    if target_accept is not None and not 0 < target_accept < 1:
        return False, f"--target-accept must lie in (0, 1), got {target_accept}"
    return True, "Valid"


def require(check: Tuple[bool, str]) -> None:
    """Raise UsageError when a validator rejects its input"""
    is_valid, message = check
    if not is_valid:
        raise UsageError(message)
