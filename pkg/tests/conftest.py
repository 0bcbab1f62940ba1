import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dpsynth.data import ColumnSchema, TabularDataset


@pytest.fixture
def two_binary_columns():
    schema = (ColumnSchema.categorical("a", 2), ColumnSchema.categorical("b", 2))
    values = np.array([[0, 0], [1, 1], [1, 1]], dtype=float)
    return TabularDataset(schema, values)


@pytest.fixture
def small_labeled():
    """20 rows, one continuous feature, binary target, linearly separated."""
    schema = (
        ColumnSchema.continuous("x", -5.0, 5.0, bins=4),
        ColumnSchema.categorical("y", 2),
    )
    xs = np.concatenate([np.linspace(-4, -1, 10), np.linspace(1, 4, 10)])
    ys = np.array([0] * 10 + [1] * 10, dtype=float)
    return TabularDataset(schema, np.column_stack([xs, ys]), target_column="y")


def write_schema_json(path, schema, target=None):
    import json

    from dpsynth.data import schema_to_json_dict

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema_to_json_dict(schema, target), fh)
    return path
