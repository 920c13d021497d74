"""Variational minimization of the UCCSD energy."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from qdyn.pauli import PauliSum
from qdyn.statevector import (
    CompiledOperator,
    QuantumState,
    UccsdAnsatz,
    apply_uccsd,
    energy_and_gradient,
    prepare_hf_state,
)

log = logging.getLogger(__name__)

GRAD_TOL = 1e-7
MAX_ITER = 500


@dataclass(eq=False)
class VqeResult:
    """Optimized ansatz state and the per-string expectations measured on it."""

    energy: float
    theta: np.ndarray
    expectations: dict[str, float]
    iterations: int
    converged: bool
    gradient_norm: float
    state: QuantumState
    hamiltonian: PauliSum
    evaluations: int = 0
    trace: list[tuple[int, float, float]] = field(default_factory=list)

    def expectation_of(self, word: str) -> float:
        return self.expectations[word]


def minimize(
    hamiltonian: PauliSum,
    ansatz: UccsdAnsatz,
    theta0=None,
    *,
    gtol: float = GRAD_TOL,
    max_iter: int = MAX_ITER,
) -> VqeResult:
    """BFGS on <HF| U(theta)+ H U(theta) |HF> with adjoint-mode gradients.

    Converged when the largest gradient component drops below ``gtol``. A
    run that hits ``max_iter`` is returned with ``converged=False``.
    """
    if hamiltonian.n_qubits != ansatz.n_qubits:
        raise ValueError(
            f"Hamiltonian has {hamiltonian.n_qubits} qubits, ansatz {ansatz.n_qubits}"
        )
    theta0 = np.zeros(ansatz.n_params) if theta0 is None else np.array(theta0, dtype=float)
    if theta0.shape != (ansatz.n_params,):
        raise ValueError(f"theta0 has shape {theta0.shape}, ansatz needs ({ansatz.n_params},)")
    op = CompiledOperator(hamiltonian)
    ref = prepare_hf_state(ansatz.n_qubits, ansatz.n_electrons).amplitudes
    trace: list[tuple[int, float, float]] = []
    calls = [0]

    def fun(theta):
        calls[0] += 1
        return energy_and_gradient(op, ansatz, theta, ref)

    energy, grad = fun(theta0)
    gmax = float(np.abs(grad).max(initial=0.0))
    trace.append((0, energy, gmax))
    theta, iterations = theta0, 0
    if gmax >= gtol:
        last = {}

        def wrapped(theta):
            e, g = fun(theta)
            last["e"], last["g"] = e, g
            return e, g

        def callback(xk):
            trace.append((len(trace), last["e"], float(np.abs(last["g"]).max())))

        res = scipy_minimize(
            wrapped, theta0, jac=True, method="BFGS", callback=callback,
            options={"gtol": gtol, "maxiter": max_iter, "norm": np.inf},
        )
        theta, iterations = res.x, int(res.nit)
        energy, grad = fun(theta)
        gmax = float(np.abs(grad).max(initial=0.0))
        if gmax >= gtol:
            theta, energy, grad, extra = _polish(fun, theta, energy, grad, gtol)
            iterations += extra
            gmax = float(np.abs(grad).max(initial=0.0))
    converged = gmax < gtol
    if not converged:
        log.warning("VQE stopped after %d iterations with gradient %.2e", iterations, gmax)
    state = apply_uccsd(QuantumState(ref, ansatz.n_qubits), ansatz, theta)
    values = op.string_expectations(state.amplitudes) if len(hamiltonian) else np.zeros(0)
    expectations = dict(zip(hamiltonian.words, values.tolist()))
    return VqeResult(
        energy=float(np.dot(hamiltonian.coeffs, values)) if len(hamiltonian) else 0.0,
        theta=np.array(theta),
        expectations=expectations,
        iterations=iterations,
        converged=converged,
        gradient_norm=gmax,
        state=state,
        hamiltonian=hamiltonian,
        evaluations=calls[0],
        trace=trace,
    )


def _polish(fun, theta, energy, grad, gtol, max_steps=4, h=1e-4):
    """Newton steps on a central-difference Hessian of the analytic gradient.

    BFGS line searches stall once energy differences reach round-off; close to
    the minimum the gradient alone is a reliable guide.
    """
    n = theta.size
    steps = 0
    hess = None
    for _ in range(max_steps):
        if np.abs(grad).max() < gtol:
            break
        if hess is None:
            hess = np.empty((n, n))
            for k in range(n):
                e = np.zeros(n)
                e[k] = h
                hess[:, k] = (fun(theta + e)[1] - fun(theta - e)[1]) / (2 * h)
            hess = 0.5 * (hess + hess.T)
        lam, vec = np.linalg.eigh(hess)
        keep = np.abs(lam) > 1e-8 * np.abs(lam).max()
        step = -vec[:, keep] @ ((vec[:, keep].T @ grad) / np.abs(lam[keep]))
        e_new, g_new = fun(theta + step)
        if np.abs(g_new).max() >= np.abs(grad).max():
            break
        theta, energy, grad = theta + step, e_new, g_new
        steps += 1
    return theta, energy, grad, steps


def warm_start(previous: VqeResult, ansatz: UccsdAnsatz | None = None) -> np.ndarray:
    """Previous optimum as the next initial guess."""
    theta = np.array(previous.theta, dtype=float)
    if ansatz is not None and theta.shape != (ansatz.n_params,):
        raise ValueError(
            f"previous result has {theta.size} parameters, ansatz needs {ansatz.n_params}"
        )
    return theta


def write_trace(result: VqeResult, fh) -> None:
    fh.write("iteration,energy,grad_norm\n")
    for it, e, g in result.trace:
        fh.write(f"{it},{e:.15f},{g:.6e}\n")
