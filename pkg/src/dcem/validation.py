"""Small input-validation helpers shared by the estimators and loaders."""

import math
import numbers

import numpy as np
from sklearn.utils import check_array

from .errors import OutOfRange, ValidationError


def check_scalar(value, name, *, min_val=None, max_val=None,
                 include_min=True, include_max=True, error=ValidationError):
    """Validate a finite real scalar against optional bounds and return it as float."""
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise error(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not math.isfinite(value):
        raise error(f"{name} must be finite, got {value}")
    if min_val is not None:
        if value < min_val or (not include_min and value == min_val):
            op = ">=" if include_min else ">"
            raise error(f"{name} must be {op} {min_val}, got {value}")
    if max_val is not None:
        if value > max_val or (not include_max and value == max_val):
            op = "<=" if include_max else "<"
            raise error(f"{name} must be {op} {max_val}, got {value}")
    return value


def check_fraction(value, name, *, allow_zero=True):
    return check_scalar(value, name, min_val=0.0, max_val=1.0, include_min=allow_zero)


def check_nonnegative(value, name):
    return check_scalar(value, name, min_val=0.0)


def check_positive(value, name):
    return check_scalar(value, name, min_val=0.0, include_min=False)


def weather_arrays(X):
    """Return ``(dry_bulb, wet_bulb)`` arrays from a WeatherSeries or an array.

    Arrays are ``(n_hours, 2)`` with columns ``dry_bulb, relative_humidity`` or
    ``(n_hours, 3)`` adding pressure in kPa; wet-bulb is derived for them.
    """
    from .psychro import WeatherSeries, wet_bulb_array

    if isinstance(X, WeatherSeries):
        return X.dry_bulb, X.wet_bulb
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] not in (2, 3):
        raise ValidationError(
            f"weather array must have 2 or 3 columns, got {X.shape[1]}")
    pressure = X[:, 2] if X.shape[1] == 3 else np.full(len(X), 101.325)
    for col, name, lo, hi in ((X[:, 0], "dry_bulb_c", -60, 60), (X[:, 1], "rh", 0, 1),
                              (pressure, "pressure_kpa", 60, 110)):
        bad = np.flatnonzero((col < lo) | (col > hi))
        if bad.size:
            raise OutOfRange(name, int(bad[0]), float(col[bad[0]]))
    return X[:, 0].copy(), wet_bulb_array(X[:, 0], X[:, 1], pressure)
