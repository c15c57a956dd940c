from typing import TypeAlias, Sequence, Union
import numpy as np

# Custom type definitions
EValue: TypeAlias = float
LogEValue: TypeAlias = float
Label: TypeAlias = str
Indices = tuple[int, ...]   # 1-based hypothesis indices, strictly increasing
Vector = Union[Sequence[float], np.ndarray]
Matrix = np.ndarray  # rows are time points, columns hypotheses
