"""Input checks shared by the estimator front-end."""
from __future__ import annotations

import numbers
from typing import Iterable, Mapping

import numpy as np

from .ingestion import FilteredDataset, record_from_dict
from .model import ResponseRecord


def check_records(X) -> tuple[ResponseRecord, ...]:
    """Coerce ``X`` into a tuple of :class:`ResponseRecord`.

    Accepts a :class:`FilteredDataset`, records, wire-format mappings, or a
    pandas DataFrame with the wire-format columns.
    """
    if isinstance(X, FilteredDataset):
        return X.records
    if hasattr(X, "to_dict") and hasattr(X, "columns"):
        X = X.to_dict(orient="records")
    if isinstance(X, (str, bytes)) or not isinstance(X, Iterable):
        raise TypeError(f"expected a sequence of records, got {type(X).__name__}")
    out = []
    for i, item in enumerate(X):
        if isinstance(item, ResponseRecord):
            out.append(item)
        elif isinstance(item, Mapping):
            try:
                rec, has_run = record_from_dict(item)
            except (TypeError, ValueError) as exc:
                raise ValueError(f"record {i}: {exc}") from exc
            if not has_run:
                raise ValueError(f"record {i}: run_index is required for in-memory input")
            out.append(rec)
        else:
            raise TypeError(f"record {i}: unsupported type {type(item).__name__}")
    return tuple(out)


def check_texts(X) -> list[str]:
    """Answer texts from strings, records or a 1-d array."""
    if isinstance(X, str):
        raise TypeError("expected an iterable of texts, not a single string")
    if isinstance(X, np.ndarray):
        if X.ndim != 1:
            raise ValueError(f"expected a 1-d array of texts, got shape {X.shape}")
        X = X.tolist()
    out = []
    for item in X:
        if isinstance(item, ResponseRecord):
            out.append(item.answer_text)
        elif item is None:
            out.append("")
        elif isinstance(item, str):
            out.append(item)
        else:
            raise TypeError(f"unsupported text type {type(item).__name__}")
    return out


def check_probability(value, name: str, *, open_low=True, open_high=True) -> float:
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise TypeError(f"{name} must be a real number")
    v = float(value)
    lo_ok = v > 0 if open_low else v >= 0
    hi_ok = v < 1 if open_high else v <= 1
    if not (lo_ok and hi_ok):
        raise ValueError(f"{name}={value} out of range")
    return v


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if not isinstance(value, numbers.Integral) or isinstance(value, bool):
        raise TypeError(f"{name} must be an integer")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)
