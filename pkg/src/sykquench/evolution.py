"""Ground states, unitary propagation and spin correlator measurement."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .hamiltonians import DENSE_MAX_L
from .pauli import DimensionError, OperatorSum, apply_to_state

__all__ = [
    "PropagatorError",
    "TimeGrid",
    "ground_state",
    "Propagator",
    "krylov_expm",
    "evolve",
    "expectation",
    "spin_correlators",
]

NORM_TOL = 1e-8


class PropagatorError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``0, dt, ..., t_max`` in bandwidth-normalized time."""

    t_max: float = 20.0
    n_steps: int = 400

    def __post_init__(self):
        if self.n_steps < 1 or not self.t_max > 0:
            raise ValueError("TimeGrid needs t_max > 0 and n_steps >= 1")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_steps + 1)

    @property
    def dt(self) -> float:
        return self.t_max / self.n_steps


def ground_state(axis: str, omega: float = 1.0, L: int = 1) -> np.ndarray:
    """Product ground state of ``omega * sum sigma^a``: all spins anti-aligned with the field."""
    if not omega > 0:
        raise ValueError("omega must be positive (omega <= 0 flips or degenerates the ground state)")
    if axis == "z":
        single = np.array([0.0, 1.0], dtype=complex)
    elif axis == "x":
        single = np.array([1.0, -1.0], dtype=complex) / np.sqrt(2)
    else:
        raise ValueError(f"axis must be 'x' or 'z', got {axis!r}")
    v = np.ones(1, dtype=complex)
    for _ in range(L):
        v = np.kron(v, single)
    return v


def _expm_tridiag(alpha, beta, t):
    """``exp(-i t T) e_1`` for a real symmetric tridiagonal ``T``."""
    if len(alpha) == 1:
        return np.array([np.exp(-1j * t * alpha[0])])
    w, U = sla.eigh_tridiagonal(alpha, beta)
    return U @ (np.exp(-1j * t * w) * U[0].conj())


def krylov_expm(matvec, v: np.ndarray, t: float, tol: float = 1e-8, m_max: int = 30,
                max_substeps: int = 100000) -> tuple[np.ndarray, int]:
    """``exp(-i t A) v`` for Hermitian ``A`` by Lanczos projection with adaptive substeps.

    The local error of a substep of length ``tau`` is estimated by
    ``beta * h_{m+1,m} * |[exp(-i tau T_m) e_1]_m|``; substeps are accepted when
    it is below ``tol * |tau| / |t|`` so that the errors add up to at most ``tol``.
    Returns the propagated vector and the number of substeps used.
    """
    w = np.array(v, dtype=complex)
    if t == 0:
        return w, 0
    remaining = float(t)
    tau = remaining
    steps = 0
    n = len(w)
    while remaining != 0:
        if steps >= max_substeps:
            raise PropagatorError(f"Krylov propagation exceeded {max_substeps} substeps")
        beta0 = np.linalg.norm(w)
        V = np.empty((m_max + 1, n), dtype=complex)
        V[0] = w / beta0
        alpha, betas = [], []
        tau = remaining if abs(tau) >= abs(remaining) else tau
        accepted = None
        for m in range(1, m_max + 1):
            u = matvec(V[m - 1])
            a = np.vdot(V[m - 1], u).real
            u -= a * V[m - 1]
            if m > 1:
                u -= betas[-1] * V[m - 2]
            # full reorthogonalization; m stays small
            u -= V[:m].T @ (V[:m].conj() @ u)
            b = np.linalg.norm(u)
            alpha.append(a)
            if b < 1e-14 * max(1.0, abs(a)):
                accepted = (m, tau, True)
                break
            V[m] = u / b
            betas.append(b)
            if m >= 3 or m == m_max:
                y = _expm_tridiag(np.array(alpha), np.array(betas[:-1]), tau)
                err = beta0 * b * abs(y[-1])
                budget = tol * abs(tau) / abs(t)
                if err <= budget:
                    accepted = (m, tau, False)
                    break
                if m == m_max:
                    while err > budget:
                        tau /= 2
                        if abs(tau) < 1e-12 * abs(t):
                            raise PropagatorError(
                                f"Krylov substep underflow at dimension {m_max}; increase the Krylov dimension or tol")
                        budget = tol * abs(tau) / abs(t)
                        y = _expm_tridiag(np.array(alpha), np.array(betas[:-1]), tau)
                        err = beta0 * b * abs(y[-1])
                    accepted = (m, tau, False)
        m, tau, _ = accepted
        y = _expm_tridiag(np.array(alpha[:m]), np.array(betas[:m - 1]), tau)
        w = beta0 * (y @ V[:m])
        remaining -= tau
        tau *= 2
        if abs(remaining) < 1e-15 * abs(t):
            remaining = 0.0
        steps += 1
    return w, steps


class Propagator:
    """Time evolution under a fixed Hermitian ``H``.

    ``method='dense'`` diagonalizes once; ``'krylov'`` uses the sparse matrix.
    ``'auto'`` picks dense for ``L <= dense_max_L``.
    """

    def __init__(self, H: OperatorSum, method: str = "auto", dense_max_L: int = DENSE_MAX_L,
                 tol: float = 1e-8, krylov_dim: int = 30, scale: float = 1.0):
        if not H.is_hermitian():
            raise ValueError("propagation needs a Hermitian Hamiltonian")
        if method == "auto":
            method = "dense" if H.length <= dense_max_L else "krylov"
        if method not in ("dense", "krylov"):
            raise ValueError(f"unknown method {method!r}")
        self.L = H.length
        self.method = method
        self.tol = tol
        self.krylov_dim = krylov_dim
        self.scale = scale
        if method == "dense":
            w, self.vecs = np.linalg.eigh(H.to_dense())
            self.raw_eigenvalues = w
            self.eigenvalues = w / scale
        else:
            self.matrix = H.to_sparse()
            if scale != 1.0:
                self.matrix = self.matrix / scale

    def matvec(self, v: np.ndarray) -> np.ndarray:
        if self.method == "dense":
            return self.vecs @ (self.eigenvalues * (self.vecs.conj().T @ v))
        return self.matrix @ v

    def _check_norm(self, v0, v):
        drift = abs(np.linalg.norm(v) - np.linalg.norm(v0))
        if drift > NORM_TOL:
            raise PropagatorError(f"norm drift {drift:.2e} exceeds {NORM_TOL:g}")
        return drift

    def evolve(self, v: np.ndarray, t: float) -> np.ndarray:
        v = np.asarray(v, dtype=complex)
        if v.shape != (1 << self.L,):
            raise DimensionError("state dimension does not match the Hamiltonian")
        if t == 0:
            return v.copy()
        if self.method == "dense":
            out = self.vecs @ (np.exp(-1j * t * self.eigenvalues) * (self.vecs.conj().T @ v))
        else:
            out, _ = krylov_expm(self.matvec, v, t, self.tol, self.krylov_dim)
        self._check_norm(v, out)
        return out

    def trajectory(self, v: np.ndarray, times: np.ndarray) -> tuple[np.ndarray, float]:
        """States at each time (rows) and the largest norm drift seen."""
        v = np.asarray(v, dtype=complex)
        times = np.asarray(times, dtype=float)
        if self.method == "dense":
            coeffs = self.vecs.conj().T @ v
            phases = np.exp(-1j * np.outer(times, self.eigenvalues))
            states = (phases * coeffs) @ self.vecs.T
            states[times == 0] = v
        else:
            states = np.empty((len(times), len(v)), dtype=complex)
            cur, t_cur = v, 0.0
            span = max(abs(times[-1] - times[0]), abs(times[0])) or 1.0
            for n, t in enumerate(times):
                if t != t_cur:
                    step_tol = self.tol * abs(t - t_cur) / span
                    cur, _ = krylov_expm(self.matvec, cur, t - t_cur, step_tol, self.krylov_dim)
                    t_cur = t
                states[n] = cur
        drift = float(np.max(np.abs(np.linalg.norm(states, axis=1) - np.linalg.norm(v))))
        if drift > NORM_TOL:
            raise PropagatorError(f"norm drift {drift:.2e} exceeds {NORM_TOL:g}")
        return states, drift


def evolve(v: np.ndarray, H: OperatorSum, t: float, tol: float = 1e-8, method: str = "auto") -> np.ndarray:
    """``exp(-i H t) v``."""
    return Propagator(H, method=method, tol=tol).evolve(v, t)


def expectation(v: np.ndarray, O: OperatorSum) -> complex:
    val = complex(np.vdot(v, apply_to_state(O, v)))
    if O.is_hermitian() and abs(val.imag) > 1e-10:
        raise ValueError(f"Hermitian operator has complex expectation {val}")
    return val


def _z_signs(L: int) -> np.ndarray:
    idx = np.arange(1 << L)
    bits = (idx[:, None] >> (L - 1 - np.arange(L))[None, :]) & 1
    return 1.0 - 2.0 * bits


def _hadamard_all(states: np.ndarray, L: int) -> np.ndarray:
    T = states.shape[0]
    a = states.reshape((T,) + (2,) * L)
    for axis in range(1, L + 1):
        a0 = np.take(a, 0, axis=axis)
        a1 = np.take(a, 1, axis=axis)
        a = np.stack((a0 + a1, a0 - a1), axis=axis)
    return a.reshape(T, -1) / np.sqrt(2.0) ** L


def spin_correlators(states: np.ndarray, axis: str) -> tuple[np.ndarray, np.ndarray]:
    """``<sigma_i^a>`` with shape ``(T, L)`` and ``<sigma_i^a sigma_j^a>`` with shape ``(T, L, L)``.

    The pair array has ones on its diagonal.
    """
    states = np.atleast_2d(states)
    L = int(np.log2(states.shape[1]))
    if axis == "x":
        states = _hadamard_all(states, L)
    elif axis != "z":
        raise ValueError(f"axis must be 'x' or 'z', got {axis!r}")
    prob = np.abs(states) ** 2
    S = _z_signs(L)
    site = prob @ S
    pair = (prob @ (S[:, :, None] * S[:, None, :]).reshape(len(S), L * L)).reshape(-1, L, L)
    return site, pair
