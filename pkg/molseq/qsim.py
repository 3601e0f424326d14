"""
Statevector simulation of the quantum kernel block.

A kernel circuit angle-encodes n features with RX rotations, applies L basic
entangler layers (RX on every wire, then a CNOT ring) and reads out <Z_i> on
every wire. Expectations are exact; gradients come either from the
parameter-shift rule or from an adjoint (reverse) sweep.

Wire 0 is the most significant qubit of the basis index. All internal arrays
carry a leading batch axis of shape (B, 2**n).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

logger = logging.getLogger(__name__)

MAX_QUBITS = 10
SHIFT = np.pi / 2


class CircuitError(ValueError):
    """Bad wire index, qubit count or parameter shape."""


@dataclass(eq=False)
class StateVector:
    amplitudes: np.ndarray
    n_qubits: int

    def __post_init__(self):
        _check_qubits(self.n_qubits)
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape[-1] != 2 ** self.n_qubits:
            raise CircuitError(f"expected {2 ** self.n_qubits} amplitudes, got {self.amplitudes.shape[-1]}")

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        _check_qubits(n_qubits)
        amplitudes = np.zeros(2 ** n_qubits, dtype=np.complex128)
        amplitudes[0] = 1.0
        return cls(amplitudes, n_qubits)

    @classmethod
    def basis(cls, bits: str) -> "StateVector":
        """Computational basis state, e.g. "10" is |1>|0> with wire 0 first."""
        state = cls.zero(len(bits))
        state.amplitudes[0] = 0.0
        state.amplitudes[int(bits, 2)] = 1.0
        return state

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def expectation_z(self) -> np.ndarray:
        return _expect_z(self.amplitudes[None, :], self.n_qubits)[0]


@dataclass(eq=False)
class KernelCircuitSpec:
    n_qubits: int
    n_layers: int
    thetas: np.ndarray

    def __post_init__(self):
        _check_qubits(self.n_qubits)
        if self.n_layers < 0:
            raise CircuitError("n_layers must be non-negative")
        self.thetas = np.asarray(self.thetas, dtype=np.float64)
        if self.thetas.shape != (self.n_layers, self.n_qubits):
            raise CircuitError(
                f"thetas must have shape ({self.n_layers}, {self.n_qubits}), got {self.thetas.shape}"
            )

    @classmethod
    def random(cls, n_qubits: int, n_layers: int, rng: np.random.Generator) -> "KernelCircuitSpec":
        return cls(n_qubits, n_layers, rng.uniform(0.0, 2 * np.pi, size=(n_layers, n_qubits)))

    def with_thetas(self, thetas: np.ndarray) -> "KernelCircuitSpec":
        return KernelCircuitSpec(self.n_qubits, self.n_layers, thetas)

    def to_dict(self) -> dict:
        return {"n_qubits": self.n_qubits, "n_layers": self.n_layers, "thetas": self.thetas.tolist()}


def _check_qubits(n: int):
    if not 1 <= n <= MAX_QUBITS:
        raise CircuitError(f"n_qubits must be in 1..{MAX_QUBITS}, got {n}")


def _check_wire(wire: int, n: int):
    if not 0 <= wire < n:
        raise CircuitError(f"wire {wire} out of range for {n} qubits")


# Batched kernels ==============================================================


def _rx_matrices(angles: np.ndarray) -> np.ndarray:
    c, s = np.cos(angles / 2), np.sin(angles / 2)
    m = np.empty(angles.shape + (2, 2), dtype=np.complex128)
    m[..., 0, 0] = c
    m[..., 0, 1] = -1j * s
    m[..., 1, 0] = -1j * s
    m[..., 1, 1] = c
    return m


def _ry_matrices(angles: np.ndarray) -> np.ndarray:
    c, s = np.cos(angles / 2), np.sin(angles / 2)
    m = np.empty(angles.shape + (2, 2), dtype=np.complex128)
    m[..., 0, 0] = c
    m[..., 0, 1] = -s
    m[..., 1, 0] = s
    m[..., 1, 1] = c
    return m


def _rz_matrices(angles: np.ndarray) -> np.ndarray:
    m = np.zeros(angles.shape + (2, 2), dtype=np.complex128)
    m[..., 0, 0] = np.exp(-0.5j * angles)
    m[..., 1, 1] = np.exp(0.5j * angles)
    return m


_PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)


def _apply_1q(psi: np.ndarray, matrices: np.ndarray, wire: int, n: int) -> np.ndarray:
    """Apply one 2x2 matrix per batch row (matrices shaped (B, 2, 2) or (2, 2))."""
    batch = psi.shape[0]
    matrices = np.broadcast_to(matrices, (batch, 2, 2))
    t = psi.reshape((batch, 2 ** wire, 2, 2 ** (n - wire - 1)))
    t = np.einsum("bij,bxjy->bxiy", matrices, t)
    return t.reshape(batch, -1)


def _apply_cnot(psi: np.ndarray, control: int, target: int, n: int) -> np.ndarray:
    batch = psi.shape[0]
    t = psi.reshape((batch,) + (2,) * n).copy()
    index = [slice(None)] * (n + 1)
    index[control + 1] = 1
    index = tuple(index)
    target_axis = target + 1 - (1 if target > control else 0)
    t[index] = np.flip(t[index], axis=target_axis).copy()
    return t.reshape(batch, -1)


def _expect_z(psi: np.ndarray, n: int) -> np.ndarray:
    probs = np.abs(psi) ** 2
    out = np.empty((psi.shape[0], n))
    for wire in range(n):
        p = probs.reshape(psi.shape[0], 2 ** wire, 2, 2 ** (n - wire - 1))
        out[:, wire] = p[:, :, 0, :].sum(axis=(1, 2)) - p[:, :, 1, :].sum(axis=(1, 2))
    return out


def _zero_batch(batch: int, n: int) -> np.ndarray:
    psi = np.zeros((batch, 2 ** n), dtype=np.complex128)
    psi[:, 0] = 1.0
    return psi


def entangler_pairs(n: int) -> List[Tuple[int, int]]:
    """CNOT (control, target) pairs of one entangler ring, i -> (i + 1) mod n.

    Two wires get both (0, 1) and (1, 0); one wire gets none.
    """
    if n == 1:
        return []
    return [(i, (i + 1) % n) for i in range(n)]


# Single-state gate API ========================================================


def _as_state(state: StateVector) -> np.ndarray:
    return state.amplitudes.reshape(1, -1)


def apply_rx(state: StateVector, wire: int, angle: float) -> StateVector:
    _check_wire(wire, state.n_qubits)
    psi = _apply_1q(_as_state(state), _rx_matrices(np.asarray(angle, dtype=float)), wire, state.n_qubits)
    return StateVector(psi[0], state.n_qubits)


def apply_ry(state: StateVector, wire: int, angle: float) -> StateVector:
    _check_wire(wire, state.n_qubits)
    psi = _apply_1q(_as_state(state), _ry_matrices(np.asarray(angle, dtype=float)), wire, state.n_qubits)
    return StateVector(psi[0], state.n_qubits)


def apply_rz(state: StateVector, wire: int, angle: float) -> StateVector:
    _check_wire(wire, state.n_qubits)
    psi = _apply_1q(_as_state(state), _rz_matrices(np.asarray(angle, dtype=float)), wire, state.n_qubits)
    return StateVector(psi[0], state.n_qubits)


def apply_cnot(state: StateVector, control: int, target: int) -> StateVector:
    _check_wire(control, state.n_qubits)
    _check_wire(target, state.n_qubits)
    if control == target:
        raise CircuitError("control and target must differ")
    psi = _apply_cnot(_as_state(state), control, target, state.n_qubits)
    return StateVector(psi[0], state.n_qubits)


# Kernel circuit ===============================================================


def _as_batch(features: np.ndarray, n: int) -> Tuple[np.ndarray, bool]:
    features = np.asarray(features, dtype=np.float64)
    single = features.ndim == 1
    batch = features[None, :] if single else features
    if batch.ndim != 2 or batch.shape[1] != n:
        raise CircuitError(f"expected {n} features per sample, got shape {features.shape}")
    return batch, single


def _encode(batch: np.ndarray, n: int) -> np.ndarray:
    psi = _zero_batch(batch.shape[0], n)
    for wire in range(n):
        psi = _apply_1q(psi, _rx_matrices(batch[:, wire]), wire, n)
    return psi


def _run(batch: np.ndarray, spec: KernelCircuitSpec) -> np.ndarray:
    n = spec.n_qubits
    psi = _encode(batch, n)
    for layer in range(spec.n_layers):
        for wire in range(n):
            psi = _apply_1q(psi, _rx_matrices(spec.thetas[layer, wire]), wire, n)
        for control, target in entangler_pairs(n):
            psi = _apply_cnot(psi, control, target, n)
    return psi


def angle_encode(features: np.ndarray) -> StateVector:
    """|0...0> followed by RX(f_i) on wire i."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 1:
        raise CircuitError("angle_encode takes a single feature vector")
    n = features.shape[0]
    _check_qubits(n)
    return StateVector(_encode(features[None, :], n)[0], n)


def kernel_state(features: np.ndarray, spec: KernelCircuitSpec) -> StateVector:
    batch, _ = _as_batch(features, spec.n_qubits)
    if batch.shape[0] != 1:
        raise CircuitError("kernel_state takes a single feature vector")
    return StateVector(_run(batch, spec)[0], spec.n_qubits)


def run_kernel_circuit(features: np.ndarray, spec: KernelCircuitSpec) -> np.ndarray:
    """<Z_i> for every wire; features shaped (n,) or (B, n)."""
    batch, single = _as_batch(features, spec.n_qubits)
    out = _expect_z(_run(batch, spec), spec.n_qubits)
    return out[0] if single else out


def param_shift_jacobian(features: np.ndarray, spec: KernelCircuitSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Jacobians of all outputs by parameter shift.

    Returns (d out / d theta shaped (..., n_out, L, n), d out / d features shaped (..., n_out, n)).
    """
    batch, single = _as_batch(features, spec.n_qubits)
    n, layers = spec.n_qubits, spec.n_layers
    jac_theta = np.zeros((batch.shape[0], n, layers, n))
    jac_feat = np.zeros((batch.shape[0], n, n))

    for layer in range(layers):
        for wire in range(n):
            plus, minus = spec.thetas.copy(), spec.thetas.copy()
            plus[layer, wire] += SHIFT
            minus[layer, wire] -= SHIFT
            e_plus = _expect_z(_run(batch, spec.with_thetas(plus)), n)
            e_minus = _expect_z(_run(batch, spec.with_thetas(minus)), n)
            jac_theta[:, :, layer, wire] = (e_plus - e_minus) / 2
    for wire in range(n):
        plus, minus = batch.copy(), batch.copy()
        plus[:, wire] += SHIFT
        minus[:, wire] -= SHIFT
        jac_feat[:, :, wire] = (_expect_z(_run(plus, spec), n) - _expect_z(_run(minus, spec), n)) / 2

    if single:
        return jac_theta[0], jac_feat[0]
    return jac_theta, jac_feat


def param_shift_grad(
    features: np.ndarray, spec: KernelCircuitSpec, out_index: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Gradient of <Z_out_index> with respect to thetas (L, n) and features (n,)."""
    _check_wire(out_index, spec.n_qubits)
    jac_theta, jac_feat = param_shift_jacobian(features, spec)
    return jac_theta[..., out_index, :, :], jac_feat[..., out_index, :]


def backprop_grad(
    features: np.ndarray, spec: KernelCircuitSpec, upstream: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Adjoint-sweep gradient of sum_k upstream_k <Z_k>.

    For a batch, the theta gradient is summed over rows and the feature
    gradient is returned per row.
    """
    batch, single = _as_batch(features, spec.n_qubits)
    n = spec.n_qubits
    upstream = np.asarray(upstream, dtype=np.float64).reshape(batch.shape[0], n)

    psi = _run(batch, spec)
    signs = 1.0 - 2.0 * ((np.arange(2 ** n)[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1)
    lam = psi * (upstream @ signs.T)

    grad_theta = np.zeros((spec.n_layers, n))
    grad_feat = np.zeros((batch.shape[0], n))

    def sweep_rx(angles, wire):
        nonlocal psi, lam
        derivative = np.sum(np.conj(lam) * _apply_1q(psi, _PAULI_X, wire, n), axis=1).imag
        inverse = _rx_matrices(-np.asarray(angles, dtype=float))
        psi = _apply_1q(psi, inverse, wire, n)
        lam = _apply_1q(lam, inverse, wire, n)
        return derivative

    for layer in reversed(range(spec.n_layers)):
        for control, target in reversed(entangler_pairs(n)):
            psi = _apply_cnot(psi, control, target, n)
            lam = _apply_cnot(lam, control, target, n)
        for wire in reversed(range(n)):
            grad_theta[layer, wire] = sweep_rx(spec.thetas[layer, wire], wire).sum()
    for wire in reversed(range(n)):
        grad_feat[:, wire] = sweep_rx(batch[:, wire], wire)

    return grad_theta, (grad_feat[0] if single else grad_feat)
