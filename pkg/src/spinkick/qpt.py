"""Single-qubit process tomography.

A channel is probed on four input states, the outputs are expanded in an
orthonormalized dual of the input set, and the 16x16 linear system for the
process matrix chi over the operator basis {E=1, X, -iY, Z} is solved
directly.  chi_ZZ quantifies pure dephasing: 0 for the identity, 1/2 for a
fully dephasing channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import SpinSystem, RelaxationParams, partial_trace, pauli, tensor
from .kicks import KickParams
from .sequences import DDParams, build_timeline, pulse_unitary, run_timeline_ensemble

__all__ = [
    "OperatorBasis",
    "ChiMatrix",
    "ProcessSpec",
    "ChannelDiagnostics",
    "ChiZZRow",
    "SingularSystemError",
    "input_states",
    "apply_process",
    "process_tomography",
    "reconstruct_chi",
    "batch_sigma",
    "s_context",
    "chi_zz_report",
    "validate_channel",
    "ANALYTIC_CHANNELS",
]


class SingularSystemError(RuntimeError):
    """The tomography system is rank-deficient (inputs not complete)."""


@dataclass(frozen=True)
class OperatorBasis:
    """Operator basis for the chi expansion; default {1, X, -iY, Z}.

    The -iY convention keeps every basis element real, so a real process
    produces a real chi.  Elements must be pairwise Hilbert-Schmidt
    orthogonal with squared norm 2.
    """

    elements: tuple
    labels: tuple = ("E", "X", "Y", "Z")

    @classmethod
    def default(cls) -> "OperatorBasis":
        return cls(
            elements=(
                np.eye(2, dtype=np.complex128),
                pauli("X"),
                -1j * pauli("Y"),
                pauli("Z"),
            )
        )

    def __post_init__(self):
        if len(self.elements) != 4 or len(self.labels) != 4:
            raise ValueError("basis needs exactly four elements and labels")
        for p, a in enumerate(self.elements):
            for q, b in enumerate(self.elements):
                ip = np.trace(a.conj().T @ b)
                want = 2.0 if p == q else 0.0
                if abs(ip - want) > 1e-12:
                    raise ValueError(
                        f"elements {p},{q} not orthogonal with norm^2=2 (got {ip})"
                    )

    def index(self, label: str) -> int:
        return self.labels.index(label)


def input_states() -> list[np.ndarray]:
    """The tomographic input set {|0><0|, |1><1|, |+><+|, |+i><+i|}."""
    zero = np.array([[1, 0], [0, 0]], dtype=np.complex128)
    one = np.array([[0, 0], [0, 1]], dtype=np.complex128)
    plus = 0.5 * np.array([[1, 1], [1, 1]], dtype=np.complex128)
    plus_i = 0.5 * np.array([[1, -1j], [1j, 1]], dtype=np.complex128)
    return [zero, one, plus, plus_i]


def _chan_identity(rho, _):
    return rho.copy()


def _chan_not(rho, _):
    x = pauli("X")
    return x @ rho @ x


def _chan_bit_flip(rho, p):
    x = pauli("X")
    return (1.0 - p) * rho + p * (x @ rho @ x)


def _chan_phase_damping(rho, f):
    z = pauli("Z")
    return 0.5 * ((1.0 + f) * rho + (1.0 - f) * (z @ rho @ z))


def _chan_depolarizing(rho, p):
    return (1.0 - p) * rho + p * 0.5 * np.trace(rho) * np.eye(2)


#: label -> (map, parameter required, valid parameter range)
ANALYTIC_CHANNELS = {
    "identity": (_chan_identity, False),
    "not": (_chan_not, False),
    "bit_flip": (_chan_bit_flip, True),
    "phase_damping": (_chan_phase_damping, True),
    "depolarizing": (_chan_depolarizing, True),
}


@dataclass(frozen=True)
class ProcessSpec:
    """A channel to tomograph: either a named analytic map or a simulated
    timeline (kicks and/or decoupling over one cycle of duration t_c).

    Simulated specs share one set of kick realizations across the four input
    states (the channel, not the noise, is what varies between inputs), which
    also tightens comparisons between chi elements.

    Simulated channels are reported in the frame of the ideal pulse sequence:
    the intended net rotation (a power of the pi-pulse unitary) is undone
    before reconstruction.  An odd echo train is then the identity, not a
    NOT, and pulse miscalibration (angle_error) shows up as X-type chi terms.
    """

    label: str
    channel: str | None = None
    channel_param: float | None = None
    sys: SpinSystem | None = None
    dd: DDParams | None = None
    kicks: KickParams | None = None
    relax: RelaxationParams | None = None
    t_c: float | None = None
    n_traj: int = 1
    backend: str | None = None

    def __post_init__(self):
        analytic = self.channel is not None
        simulated = self.sys is not None
        if analytic == simulated:
            raise ValueError("spec must be either analytic (channel) or simulated (sys)")
        if analytic:
            if self.channel not in ANALYTIC_CHANNELS:
                raise ValueError(f"unknown analytic channel {self.channel!r}")
            _, needs_param = ANALYTIC_CHANNELS[self.channel]
            if needs_param and self.channel_param is None:
                raise ValueError(f"channel {self.channel!r} needs channel_param")
            if self.channel_param is not None and not 0.0 <= self.channel_param <= 1.0:
                raise ValueError("channel_param must lie in [0, 1]")
        else:
            if self.dd is None and self.kicks is None:
                raise ValueError("simulated spec needs dd and/or kicks")
            if self.t_c is None and self.dd is None:
                raise ValueError("simulated spec needs t_c when dd is absent")
            if self.n_traj < 1:
                raise ValueError("n_traj must be >= 1")

    def cycle_time(self) -> float:
        return self.dd.resolved_cycle_time() if self.dd is not None else self.t_c

    @classmethod
    def analytic(cls, channel: str, param: float | None = None, label: str | None = None):
        return cls(label=label or channel, channel=channel, channel_param=param)


def _ideal_frame(spec: ProcessSpec) -> np.ndarray:
    """Net unitary of the intended (error-free) pulse train."""
    v = np.eye(2, dtype=np.complex128)
    if spec.dd is not None:
        u = pulse_unitary(spec.dd.pulse_axis, np.pi)
        for _ in range(spec.dd.n_pulses):
            v = u @ v
    return v


def _simulated_outputs(spec: ProcessSpec, rho_in: np.ndarray) -> np.ndarray:
    """Per-trajectory output system states (n_traj, 2, 2) for one input,
    rotated back by the ideal sequence frame."""
    t_c = spec.cycle_time()
    timeline = build_timeline(spec.dd, spec.kicks, t_c, 1)
    rho0 = tensor(rho_in, 0.5 * np.eye(2, dtype=np.complex128))
    _, _, finals = run_timeline_ensemble(
        rho0, spec.sys, timeline, spec.relax, n_traj=spec.n_traj, backend=spec.backend
    )
    r = finals.reshape(-1, 2, 2, 2, 2)
    sys_out = np.einsum("tiaja->tij", r)
    v = _ideal_frame(spec)
    return np.einsum("ab,tbc,cd->tad", v.conj().T, sys_out, v)


def apply_process(spec: ProcessSpec, rho_in: np.ndarray) -> np.ndarray:
    """Send one input state through the channel; simulated channels embed the
    input as the system with the environment at I/2 and trace back out."""
    rho_in = np.asarray(rho_in, dtype=np.complex128)
    if rho_in.shape != (2, 2):
        raise ValueError(f"expected a 2x2 input state, got {rho_in.shape}")
    if spec.channel is not None:
        fn, _ = ANALYTIC_CHANNELS[spec.channel]
        return fn(rho_in, spec.channel_param)
    return _simulated_outputs(spec, rho_in).mean(axis=0)


def _orthonormal_dual(inputs) -> list[np.ndarray]:
    """Gram-Schmidt the input states under the Hilbert-Schmidt inner product."""
    dual = []
    for k, rho in enumerate(inputs):
        v = rho.astype(np.complex128).copy()
        for o in dual:
            v -= np.trace(o.conj().T @ v) * o
        norm = np.sqrt(np.trace(v.conj().T @ v).real)
        if norm < 1e-10:
            raise SingularSystemError(
                f"input state {k} is linearly dependent on the previous ones"
            )
        dual.append(v / norm)
    return dual


@dataclass
class ChiMatrix:
    """4x4 process matrix over an operator basis, with solve diagnostics."""

    entries: np.ndarray
    labels: tuple = ("E", "X", "Y", "Z")
    residual: float = 0.0

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.complex128)
        if self.entries.shape != (4, 4):
            raise ValueError(f"chi must be 4x4, got {self.entries.shape}")

    def element(self, row: str, col: str) -> complex:
        return complex(self.entries[self.labels.index(row), self.labels.index(col)])

    def to_jsonable(self) -> dict:
        return {
            "labels": list(self.labels),
            "residual": self.residual,
            "entries": [
                [[float(z.real), float(z.imag)] for z in row] for row in self.entries
            ],
        }

    def magnitude_table(self) -> str:
        """Plain-text |chi| table, the bar-plot numbers."""
        lines = ["      " + "".join(f"{c:>12}" for c in self.labels)]
        for i, r in enumerate(self.labels):
            mags = "".join(f"{abs(self.entries[i, j]):12.6f}" for j in range(4))
            lines.append(f"{r:>6}{mags}")
        return "\n".join(lines) + "\n"


def reconstruct_chi(inputs, outputs, basis: OperatorBasis | None = None) -> ChiMatrix:
    """Solve for chi from four (input, output) pairs.

    The outputs are expanded in the orthonormalized dual of the input set;
    with orthonormal expansion operators the textbook relations
    lambda = Tr[rho'_j O_k], beta = Tr[O_k E_p rho_j E_q^dag] hold exactly
    and the 16x16 system beta.chi = lambda is well-conditioned for a complete
    input set.
    """
    if basis is None:
        basis = OperatorBasis.default()
    inputs = [np.asarray(r, dtype=np.complex128) for r in inputs]
    outputs = [np.asarray(r, dtype=np.complex128) for r in outputs]
    if len(inputs) != 4 or len(outputs) != 4:
        raise ValueError("need exactly four inputs and four outputs")
    dual = _orthonormal_dual(inputs)
    lam = np.empty(16, dtype=np.complex128)
    beta = np.empty((16, 16), dtype=np.complex128)
    for j in range(4):
        for k in range(4):
            row = 4 * j + k
            lam[row] = np.trace(dual[k].conj().T @ outputs[j])
            for p in range(4):
                ep = basis.elements[p]
                for q in range(4):
                    eq = basis.elements[q]
                    beta[row, 4 * p + q] = np.trace(
                        dual[k].conj().T @ (ep @ inputs[j] @ eq.conj().T)
                    )
    chi_vec, _, rank, _ = np.linalg.lstsq(beta, lam, rcond=None)
    if rank < 16:
        raise SingularSystemError(f"tomography system has rank {rank} < 16")
    residual = float(np.linalg.norm(beta @ chi_vec - lam))
    return ChiMatrix(chi_vec.reshape(4, 4), basis.labels, residual)


def process_tomography(
    spec: ProcessSpec, basis: OperatorBasis | None = None, n_batches: int = 20
):
    """Full pipeline for one spec: returns (chi, batch_chis).

    batch_chis are reconstructions from disjoint trajectory batches of a
    simulated ensemble -- their scatter estimates the Monte Carlo
    uncertainty of any chi element; empty for analytic/deterministic specs.
    """
    ins = input_states()
    if spec.channel is not None:
        outs = [apply_process(spec, r) for r in ins]
        return reconstruct_chi(ins, outs, basis), []
    per_traj = [_simulated_outputs(spec, r) for r in ins]
    outs = [p.mean(axis=0) for p in per_traj]
    chi = reconstruct_chi(ins, outs, basis)
    n_traj = per_traj[0].shape[0]
    n_batches = min(n_batches, n_traj)
    batch_chis = []
    if n_batches >= 2:
        edges = np.linspace(0, n_traj, n_batches + 1, dtype=int)
        for b in range(n_batches):
            lo, hi = edges[b], edges[b + 1]
            bo = [p[lo:hi].mean(axis=0) for p in per_traj]
            batch_chis.append(reconstruct_chi(ins, bo, basis))
    return chi, batch_chis


def batch_sigma(batch_chis, row: str, col: str) -> float:
    """Standard error of |chi_rc| implied by the batch scatter."""
    if len(batch_chis) < 2:
        return 0.0
    vals = np.array([abs(c.element(row, col)) for c in batch_chis])
    return float(vals.std(ddof=1) / np.sqrt(len(vals)))


@dataclass(frozen=True)
class ChiZZRow:
    label: str
    chi_zz_abs: float
    sigma: float
    s_context: float | None  # matching closed-form S(pi/tau), when defined


def s_context(spec: ProcessSpec) -> float | None:
    """Closed-form S(pi/tau) matching a kick+DD spec, None when undefined
    (analytic channels, kick-free or DD-free specs, non-decaying points)."""
    from .spectroscopy import AllPointsFailed, cory_model_spectrum

    if (
        spec.channel is not None
        or spec.dd is None
        or spec.kicks is None
        or spec.kicks.phase_mode != "fixed_y"
    ):
        return None
    tau = spec.cycle_time() / spec.dd.n_pulses
    try:
        prof = cory_model_spectrum(
            spec.sys,
            spec.kicks.theta,
            spec.kicks.gamma_rate,
            [tau],
            n_pulses=spec.dd.n_pulses,
            dd_kind=spec.dd.kind,
        )
    except AllPointsFailed:
        return None
    return float(prof.points[0].s_value)


def chi_zz_report(specs, n_batches: int = 20) -> list[ChiZZRow]:
    """|chi_ZZ| per spec with Monte Carlo uncertainty and, for kick+DD specs,
    the closed-form spectral density at the probing frequency pi/tau."""
    rows = []
    for spec in specs:
        chi, batches = process_tomography(spec, n_batches=n_batches)
        sigma = batch_sigma(batches, "Z", "Z")
        rows.append(
            ChiZZRow(spec.label, abs(chi.element("Z", "Z")), sigma, s_context(spec))
        )
    return rows


@dataclass(frozen=True)
class ChannelDiagnostics:
    hermiticity_defect: float
    min_eigenvalue: float
    trace_preservation_defect: float
    physical: bool


def validate_channel(
    chi: ChiMatrix,
    basis: OperatorBasis | None = None,
    herm_tol: float = 1e-10,
    eig_floor: float = -1e-8,
    tp_tol: float = 1e-8,
) -> ChannelDiagnostics:
    """Hermiticity, positivity, and trace-preservation diagnostics for chi."""
    if basis is None:
        basis = OperatorBasis.default()
    m = chi.entries
    herm = float(np.abs(m - m.conj().T).max())
    eig_min = float(np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min())
    tp = np.zeros((2, 2), dtype=np.complex128)
    for p in range(4):
        for q in range(4):
            tp += m[p, q] * (basis.elements[q].conj().T @ basis.elements[p])
    tp_defect = float(np.abs(tp - np.eye(2)).max())
    physical = herm <= herm_tol and eig_min >= eig_floor and tp_defect <= tp_tol
    return ChannelDiagnostics(herm, eig_min, tp_defect, physical)
