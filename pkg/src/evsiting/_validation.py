"""Small input-checking helpers shared by the estimators and solvers."""

from __future__ import annotations

import hashlib
import math

import numpy as np


class ValidationError(ValueError):
    """Raised when inputs break a documented invariant.

    ``problems`` holds every violated invariant, not just the first one.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def check_probability(value, name):
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_nonnegative(value, name):
    value = float(value)
    if not value >= 0.0:
        raise ValidationError(f"{name} must be >= 0, got {value}")
    return value


def check_positive(value, name):
    value = float(value)
    if not value > 0.0:
        raise ValidationError(f"{name} must be > 0, got {value}")
    return value


def check_placement(placement, n_providers=None, n_sites=None):
    """Return ``placement`` as a boolean (providers, sites) array."""
    arr = np.asarray(placement)
    if arr.ndim != 2:
        raise ValidationError(f"placement must be 2-D (providers x sites), got shape {arr.shape}")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValidationError("placement entries must be 0 or 1")
    if n_providers is not None and arr.shape[0] != n_providers:
        raise ValidationError(f"placement has {arr.shape[0]} providers, expected {n_providers}")
    if n_sites is not None and arr.shape[1] != n_sites:
        raise ValidationError(f"placement has {arr.shape[1]} sites, expected {n_sites}")
    return arr.astype(bool)


def placement_key(placement):
    """Stable text key of a joint placement, e.g. ``'101|010|000'``."""
    arr = np.asarray(placement, dtype=bool)
    return "|".join("".join("1" if b else "0" for b in row) for row in arr)


def parse_placement(text, n_sites=None):
    """Inverse of :func:`placement_key`; commas are accepted as separators too."""
    rows = [r for r in text.replace(",", "|").split("|")]
    if rows == [""]:
        return np.zeros((0, n_sites or 0), dtype=bool)
    out = []
    for r in rows:
        r = r.strip()
        if set(r) - {"0", "1"}:
            raise ValidationError(f"placement row {r!r} must be a 0/1 string")
        out.append([c == "1" for c in r])
    if len({len(r) for r in out}) > 1:
        raise ValidationError("placement rows have different lengths")
    arr = np.array(out, dtype=bool)
    if n_sites is not None and arr.shape[1] != n_sites:
        raise ValidationError(f"placement rows must have {n_sites} bits")
    return arr


def derive_seed(root_seed, *labels):
    """Derive a 64-bit sub-seed from ``root_seed`` and a label path.

    Hash based, so the value does not depend on call order or thread count.
    """
    text = "/".join([str(int(root_seed))] + [str(x) for x in labels])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


def make_rng(root_seed, *labels):
    return np.random.default_rng(derive_seed(root_seed, *labels))


def is_infinite(value):
    return value is None or (isinstance(value, float) and math.isinf(value))
