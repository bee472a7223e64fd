"""Exact dense linear algebra for one and two qubits.

States are plain complex ndarrays (2x2 or 4x4).  The joint register uses a
single fixed tensor convention: system (x) environment, i.e. the system is the
slow/left index and flat index = 2*s + e.  Everything downstream relies on
this; it is enforced here and nowhere re-decided.

The free Hamiltonian  H = pi (nu_s sz^s + nu_e sz^e + (J/2) sz^s sz^e)  is
diagonal in the computational basis, so propagators are computed analytically
as diagonal phase matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import TOLS

__all__ = [
    "SpinSystem",
    "RelaxationParams",
    "pauli",
    "tensor",
    "partial_trace",
    "free_propagator",
    "free_phases",
    "evolve",
    "expectation",
    "apply_intrinsic_relaxation",
    "transverse_init",
    "system_coherence",
    "transverse_magnetization",
    "check_state",
]

_PAULI = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


@dataclass(frozen=True)
class SpinSystem:
    """Register parameters: scalar coupling j (Hz) and offsets nu_s, nu_e (Hz).

    Defaults are the on-resonance rotating frame (both offsets zero), where
    the only free evolution is the conditional sz(x)sz phase.
    """

    j: float
    nu_s: float = 0.0
    nu_e: float = 0.0

    def __post_init__(self):
        if not (self.j > 0 and np.isfinite(self.j)):
            raise ValueError(f"coupling j must be positive and finite, got {self.j}")
        if not (np.isfinite(self.nu_s) and np.isfinite(self.nu_e)):
            raise ValueError("offsets nu_s, nu_e must be finite")


@dataclass(frozen=True)
class RelaxationParams:
    """Phenomenological per-qubit damping constants (seconds).

    t1 drives populations toward the maximally mixed state, t2_intrinsic
    shrinks off-diagonals.  Either may be None (that mechanism off).
    """

    t1: float | None = None
    t2_intrinsic: float | None = None

    def __post_init__(self):
        if self.t1 is not None and not self.t1 > 0:
            raise ValueError(f"t1 must be positive, got {self.t1}")
        if self.t2_intrinsic is not None and not self.t2_intrinsic > 0:
            raise ValueError(f"t2_intrinsic must be positive, got {self.t2_intrinsic}")
        if self.t1 is not None and self.t2_intrinsic is not None:
            if self.t2_intrinsic > 2.0 * self.t1 * (1 + 1e-12):
                raise ValueError(
                    f"t2_intrinsic={self.t2_intrinsic} exceeds 2*t1={2 * self.t1}"
                )


def _as_square(a, name="matrix"):
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] not in (2, 4):
        raise ValueError(f"{name} must be 2x2 or 4x4, got shape {a.shape}")
    return a


def pauli(which: str) -> np.ndarray:
    """Return a copy of the 2x2 Pauli/identity matrix named 'I', 'X', 'Y' or 'Z'."""
    try:
        return _PAULI[which].copy()
    except KeyError:
        raise ValueError(f"unknown Pauli label {which!r}, expected one of I X Y Z")


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product, system (x) environment: entry (2i+k, 2j+l) = a[i,j] b[k,l]."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape != (2, 2) or b.shape != (2, 2):
        raise ValueError(f"tensor expects two 2x2 factors, got {a.shape} and {b.shape}")
    return np.kron(a, b)


def partial_trace(rho: np.ndarray, keep: str) -> np.ndarray:
    """Reduce a 4x4 joint state to the kept qubit ('system' or 'environment')."""
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (4, 4):
        raise ValueError(f"partial_trace expects a 4x4 state, got shape {rho.shape}")
    r = rho.reshape(2, 2, 2, 2)  # (s, e, s', e')
    if keep == "system":
        return np.einsum("iaja->ij", r)
    if keep == "environment":
        return np.einsum("aiaj->ij", r)
    raise ValueError(f"keep must be 'system' or 'environment', got {keep!r}")


def free_phases(sys: SpinSystem, t: float) -> np.ndarray:
    """Diagonal of the free propagator: exp(-i E(s,e) t) in flat order 2s+e.

    E(s,e) = pi (nu_s z_s + nu_e z_e + (J/2) z_s z_e) with z = +1 for index 0.
    """
    if t < 0:
        raise ValueError(f"propagation time must be >= 0, got {t}")
    z = np.array([1.0, -1.0])
    zs = np.repeat(z, 2)           # z_s in flat order
    ze = np.tile(z, 2)             # z_e in flat order
    energy = np.pi * (sys.nu_s * zs + sys.nu_e * ze + 0.5 * sys.j * zs * ze)
    return np.exp(-1j * energy * t)


def free_propagator(sys: SpinSystem, t: float) -> np.ndarray:
    """4x4 unitary for free evolution over time t (seconds)."""
    return np.diag(free_phases(sys, t))


def evolve(rho: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Unitary conjugation u rho u^dagger with a unitarity check on u."""
    rho = _as_square(rho, "state")
    u = _as_square(u, "propagator")
    if rho.shape != u.shape:
        raise ValueError(f"dimension mismatch: state {rho.shape} vs propagator {u.shape}")
    defect = np.abs(u.conj().T @ u - np.eye(u.shape[0])).max()
    if defect > TOLS.unitarity:
        raise ValueError(f"propagator is not unitary (defect {defect:.3e})")
    return u @ rho @ u.conj().T


def expectation(rho: np.ndarray, obs: np.ndarray) -> float:
    """Tr[rho obs] for a Hermitian observable, returned as a real number."""
    rho = _as_square(rho, "state")
    obs = _as_square(obs, "observable")
    if rho.shape != obs.shape:
        raise ValueError("state and observable dimensions differ")
    if np.abs(obs - obs.conj().T).max() > TOLS.hermiticity:
        raise ValueError("observable is not Hermitian")
    val = np.trace(rho @ obs)
    if abs(val.imag) > TOLS.expectation_imag:
        raise ValueError(f"expectation has stray imaginary part {val.imag:.3e}")
    return float(val.real)


def apply_intrinsic_relaxation(
    rho: np.ndarray, params: RelaxationParams | None, dt: float
) -> np.ndarray:
    """Damp a single-qubit state for duration dt.

    Off-diagonals shrink by exp(-dt/t2_intrinsic); populations relax toward
    1/2 with factor exp(-dt/t1) on the deviation.  With params None this is
    the identity map.
    """
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (2, 2):
        raise ValueError(f"expected a 2x2 state, got shape {rho.shape}")
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    out = rho.copy()
    if params is None:
        return out
    if params.t2_intrinsic is not None:
        g2 = np.exp(-dt / params.t2_intrinsic)
        out[0, 1] *= g2
        out[1, 0] *= g2
    if params.t1 is not None:
        g1 = np.exp(-dt / params.t1)
        s = out[0, 0] + out[1, 1]
        d = (out[0, 0] - out[1, 1]) * g1
        out[0, 0] = 0.5 * (s + d)
        out[1, 1] = 0.5 * (s - d)
    return out


def transverse_init() -> np.ndarray:
    """System starting state (I + X)/2: full coherence along x."""
    return 0.5 * (pauli("I") + pauli("X"))


def system_coherence(rho4: np.ndarray) -> complex:
    """The 01 element of the reduced system state of a 4x4 joint state."""
    return complex(rho4[0, 2] + rho4[1, 3])


def transverse_magnetization(rho4: np.ndarray) -> float:
    """Tr[rho^s sx] for a 4x4 joint state, via the reduced coherence."""
    return 2.0 * system_coherence(rho4).real


def check_state(rho: np.ndarray, psd_floor: float | None = None) -> None:
    """Raise if rho is not Hermitian, unit-trace, positive semidefinite."""
    rho = _as_square(rho, "state")
    asym = np.abs(rho - rho.conj().T).max()
    if asym > TOLS.hermiticity:
        raise ValueError(f"state not Hermitian (asymmetry {asym:.3e})")
    tr = np.trace(rho)
    if abs(tr - 1.0) > TOLS.trace:
        raise ValueError(f"state trace {tr} differs from 1")
    floor = TOLS.psd_floor if psd_floor is None else psd_floor
    ev_min = np.linalg.eigvalsh(rho).min()
    if ev_min < floor:
        raise ValueError(f"state has negative eigenvalue {ev_min:.3e}")
