"""Numpy reference kernels for dense statevector updates.

Qubit 0 is the most significant bit of a basis index. Every function takes a
flat complex128 amplitude array and returns a new array; inputs are never
modified.
"""
from __future__ import annotations

import numpy as np


def _moved(amps: np.ndarray, num_qubits: int, targets: tuple[int, ...]) -> np.ndarray:
    tensor = amps.reshape((2,) * num_qubits)
    return np.moveaxis(tensor, targets, range(len(targets)))


def apply_matrix(amps: np.ndarray, num_qubits: int, targets: tuple[int, ...],
                 matrix: np.ndarray) -> np.ndarray:
    k = len(targets)
    front = _moved(amps, num_qubits, targets)
    shape = front.shape
    out = (matrix @ front.reshape(2**k, -1)).reshape(shape)
    return np.ascontiguousarray(np.moveaxis(out, range(k), targets)).reshape(-1)


def marginal_probabilities(amps: np.ndarray, num_qubits: int,
                           targets: tuple[int, ...]) -> np.ndarray:
    k = len(targets)
    weights = np.abs(_moved(amps, num_qubits, targets)) ** 2
    return weights.reshape(2**k, -1).sum(axis=1)


def project(amps: np.ndarray, num_qubits: int, targets: tuple[int, ...],
            outcome: int) -> np.ndarray:
    k = len(targets)
    front = _moved(amps, num_qubits, targets).reshape(2**k, -1)
    kept = np.zeros_like(front)
    kept[outcome] = front[outcome]
    shape = (2,) * num_qubits
    return np.ascontiguousarray(
        np.moveaxis(kept.reshape(shape), range(k), targets)
    ).reshape(-1)
