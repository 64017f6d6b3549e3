"""Sample matrix container shared by the samplers, estimators and metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class DiscreteSamples:
    """N i.i.d. category rows over d variables.

    ``data[i, k-1]`` is the 0-based state of node k in row i; the on-disk
    formats are 1-based and converted at the I/O boundary.
    """

    data: np.ndarray  # (N, d) integer array, 0-based states
    state_counts: np.ndarray  # (d,), state_counts[k-1] = n_k

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.int64)
        self.state_counts = np.asarray(self.state_counts, dtype=np.int64)
        if self.data.ndim != 2 or self.data.shape[1] != self.state_counts.size:
            raise ValueError(
                f"sample matrix {self.data.shape} does not match "
                f"{self.state_counts.size} state counts"
            )
        if self.data.size and (
            self.data.min() < 0 or (self.data >= self.state_counts[None, :]).any()
        ):
            raise ValueError("sample entries outside declared state ranges")

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def column(self, k: int) -> np.ndarray:
        """States of node k (1-based node id)."""
        return self.data[:, k - 1]

    def restrict(self, rows: np.ndarray) -> "DiscreteSamples":
        return DiscreteSamples(self.data[rows], self.state_counts)

    def concat(self, other: "DiscreteSamples") -> "DiscreteSamples":
        if not np.array_equal(self.state_counts, other.state_counts):
            raise ValueError("state counts differ")
        return DiscreteSamples(np.vstack([self.data, other.data]), self.state_counts)


def joint_code(samples: DiscreteSamples, nodes: list[int]) -> tuple[np.ndarray, int]:
    """Mixed-radix code of the listed nodes per row, last node fastest.

    Returns the code vector and the code-space size.
    """
    dims = [int(samples.state_counts[v - 1]) for v in nodes]
    if not nodes:
        return np.zeros(samples.n_rows, dtype=np.int64), 1
    cols = [samples.column(v) for v in nodes]
    code = np.ravel_multi_index(cols, dims)
    return code.astype(np.int64), int(np.prod(dims))
