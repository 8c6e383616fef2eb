"""Linear shear-building models and exact-reference response solvers.

The building is the classic lumped-mass shear frame: diagonal mass matrix
M = diag(m_1..m_n), tridiagonal stiffness K assembled from inter-story
stiffnesses, and Rayleigh damping C = a0*M + a1*K.  Responses to floor
loads P(t) solve

    M x'' + C x' + K x = P(t),    x(0) = x'(0) = 0

either directly (Newmark time stepping) or by modal superposition, which
Rayleigh damping decouples exactly.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .timeseries import TimeSeries


@dataclass
class ShearBuildingModel:
    """Mass, stiffness and Rayleigh-damping description of an n-story frame.

    masses[i] is the lumped mass of floor i (kg, bottom to top) and
    stiffnesses[i] the lateral stiffness of the story below floor i (N/m).
    """

    n_floors: int
    masses: np.ndarray
    stiffnesses: np.ndarray
    rayleigh_a0: float = 0.0
    rayleigh_a1: float = 0.0

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=np.float64)
        self.stiffnesses = np.asarray(self.stiffnesses, dtype=np.float64)
        if self.n_floors < 1:
            raise ValueError("n_floors must be >= 1")
        if self.masses.shape != (self.n_floors,) or self.stiffnesses.shape != (self.n_floors,):
            raise ValueError(
                f"masses/stiffnesses must have length n_floors={self.n_floors}, "
                f"got {self.masses.shape} and {self.stiffnesses.shape}"
            )
        if np.any(self.masses <= 0):
            raise ValueError("all masses must be positive")
        if np.any(self.stiffnesses <= 0):
            raise ValueError("all stiffnesses must be positive")
        if self.rayleigh_a0 < 0 or self.rayleigh_a1 < 0:
            raise ValueError("Rayleigh coefficients must be non-negative")

    def mass_matrix(self) -> np.ndarray:
        return np.diag(self.masses)

    def stiffness_matrix(self) -> np.ndarray:
        """Tridiagonal shear-frame stiffness.

        Diagonal entry i is k_i + k_{i+1} (k_{n+1} = 0); the off-diagonal
        coupling between floors i and i+1 is -k_{i+1}.
        """
        k = self.stiffnesses
        n = self.n_floors
        K = np.zeros((n, n))
        for i in range(n):
            K[i, i] = k[i] + (k[i + 1] if i + 1 < n else 0.0)
            if i + 1 < n:
                K[i, i + 1] = -k[i + 1]
                K[i + 1, i] = -k[i + 1]
        return K

    def damping_matrix(self) -> np.ndarray:
        return self.rayleigh_a0 * self.mass_matrix() + self.rayleigh_a1 * self.stiffness_matrix()


@dataclass
class ModalBasis:
    """Mass-normalized vibration modes: K phi = omega^2 M phi, phi^T M phi = I."""

    frequencies: np.ndarray       # natural angular frequencies, ascending (rad/s)
    shapes: np.ndarray            # columns are mode shapes
    damping_ratios: np.ndarray    # per-mode zeta

    @property
    def n_modes(self) -> int:
        return self.frequencies.size


@dataclass
class NewmarkParams:
    """Time integrator parameters; (1/4, 1/2) is the unconditionally stable
    average-acceleration scheme, second order in dt."""

    dt: float
    beta: float = 0.25
    gamma: float = 0.5

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (0.0 <= self.beta <= 0.5):
            raise ValueError("beta must lie in [0, 0.5]")
        if not (0.0 <= self.gamma <= 1.0):
            raise ValueError("gamma must lie in [0, 1]")


@dataclass
class ResponseHistory:
    """Per-floor displacement/velocity/acceleration histories, row = floor."""

    dt: float
    displacements: np.ndarray
    velocities: np.ndarray
    accelerations: np.ndarray

    @property
    def n_floors(self) -> int:
        return self.displacements.shape[0]

    @property
    def n_steps(self) -> int:
        return self.displacements.shape[1]

    def floor(self, index: int) -> TimeSeries:
        return TimeSeries(self.displacements[index], self.dt)


def build_shear_building(n_floors, masses, stiffnesses, a0=0.0, a1=0.0) -> ShearBuildingModel:
    """Assemble a shear-frame model from per-floor masses and story stiffnesses."""
    masses = np.asarray(masses, dtype=np.float64)
    stiffnesses = np.asarray(stiffnesses, dtype=np.float64)
    if masses.shape != (n_floors,) or stiffnesses.shape != (n_floors,):
        raise ValueError(
            f"expected {n_floors} masses and stiffnesses, got {masses.size} and {stiffnesses.size}"
        )
    return ShearBuildingModel(n_floors, masses, stiffnesses, a0, a1)


def rayleigh_coefficients(omega_i: float, omega_j: float, zeta_i: float, zeta_j: float):
    """Coefficients (a0, a1) giving damping ratios zeta_i, zeta_j at omega_i, omega_j.

    Solves zeta = a0 / (2 omega) + a1 * omega / 2 at the two anchor frequencies.
    """
    A = np.array([[1.0 / (2.0 * omega_i), omega_i / 2.0],
                  [1.0 / (2.0 * omega_j), omega_j / 2.0]])
    a0, a1 = np.linalg.solve(A, np.array([zeta_i, zeta_j]))
    return float(a0), float(a1)


def default_building(n_floors: int = 8, mass: float = 2.0e5, stiffness: float = 2.5e8,
                     zeta: float = 0.02) -> ShearBuildingModel:
    """Desk-scale reference structure: uniform floors, damping ratio `zeta`
    anchored on the first two undamped modes.  The first eight natural
    frequencies of the default span roughly 1-12 Hz."""
    undamped = build_shear_building(n_floors, [mass] * n_floors, [stiffness] * n_floors)
    basis = modal_analysis(undamped)
    if n_floors >= 2:
        a0, a1 = rayleigh_coefficients(basis.frequencies[0], basis.frequencies[1], zeta, zeta)
    else:
        # single mode: mass-proportional damping alone hits the target ratio
        a0, a1 = 2.0 * zeta * basis.frequencies[0], 0.0
    return build_shear_building(n_floors, [mass] * n_floors, [stiffness] * n_floors, a0, a1)


def modal_analysis(model: ShearBuildingModel, zeta=None) -> ModalBasis:
    """Solve K phi = omega^2 M phi and mass-normalize the shapes.

    `zeta` may give per-mode damping ratios explicitly; by default the
    ratios implied by the model's Rayleigh coefficients are used, which is
    what makes modal superposition agree with the coupled solution.
    """
    K = model.stiffness_matrix()
    M = model.mass_matrix()
    try:
        eigvals, eigvecs = linalg.eigh(K, M)
    except linalg.LinAlgError as exc:  # pragma: no cover - signals ill-conditioned model
        raise RuntimeError(f"modal eigen-solve failed: {exc}") from exc
    if np.any(eigvals <= 0):
        raise RuntimeError("non-positive eigenvalue: stiffness matrix is not positive definite")
    omega = np.sqrt(eigvals)
    # eigh returns shapes with phi^T M phi = I; enforce a sign convention
    # (largest-magnitude entry positive) so results are reproducible.
    for j in range(eigvecs.shape[1]):
        pivot = np.argmax(np.abs(eigvecs[:, j]))
        if eigvecs[pivot, j] < 0:
            eigvecs[:, j] = -eigvecs[:, j]
    if zeta is None:
        ratios = model.rayleigh_a0 / (2.0 * omega) + model.rayleigh_a1 * omega / 2.0
    else:
        ratios = np.asarray(zeta, dtype=np.float64)
        if ratios.shape != omega.shape:
            raise ValueError(f"need {omega.size} damping ratios, got {ratios.size}")
        if np.any(ratios < 0) or np.any(ratios >= 1):
            raise ValueError("damping ratios must lie in [0, 1)")
    return ModalBasis(frequencies=omega, shapes=eigvecs, damping_ratios=ratios)


def _as_load_matrix(load, n_floors: int, dt: float) -> np.ndarray:
    """Canonicalize a per-floor load (ndarray or TimeSeries list) to (n_floors, n_steps)."""
    if isinstance(load, TimeSeries):
        load = [load]
    if isinstance(load, (list, tuple)) and load and isinstance(load[0], TimeSeries):
        lengths = {len(ts) for ts in load}
        if len(lengths) != 1:
            raise ValueError("all floor loads must share one time grid")
        for ts in load:
            if abs(ts.dt - dt) > 1e-12 * dt:
                raise ValueError(f"load dt {ts.dt} does not match solver dt {dt}")
        load = np.vstack([ts.values for ts in load])
    load = np.asarray(load, dtype=np.float64)
    if load.ndim == 1:
        load = load[np.newaxis, :]
    if load.shape[0] != n_floors:
        raise ValueError(f"load has {load.shape[0]} floor rows, model has {n_floors}")
    return load


def newmark_solve(model: ShearBuildingModel, load, params: NewmarkParams) -> ResponseHistory:
    """Integrate M x'' + C x' + K x = P(t) from rest by the Newmark method.

    `load` is a (n_floors, n_steps) array or list of per-floor TimeSeries
    sampled at params.dt.  Second-order accurate for (beta, gamma) = (1/4, 1/2).
    """
    P = _as_load_matrix(load, model.n_floors, params.dt)
    M = model.mass_matrix()
    K = model.stiffness_matrix()
    C = model.damping_matrix()
    if model.n_floors == 1:
        d, v, a = _newmark_sdof(M[0, 0], C[0, 0], K[0, 0], P[0], params)
        return ResponseHistory(params.dt, d[np.newaxis, :], v[np.newaxis, :], a[np.newaxis, :])
    d, v, a = _newmark_mdof(M, C, K, P, params)
    return ResponseHistory(params.dt, d, v, a)


def _newmark_coeffs(params: NewmarkParams):
    beta, gamma, dt = params.beta, params.gamma, params.dt
    if beta == 0.0:
        raise ValueError("beta = 0 (explicit central difference) is not supported by this implicit solver")
    a0 = 1.0 / (beta * dt * dt)
    a1 = gamma / (beta * dt)
    a2 = 1.0 / (beta * dt)
    a3 = 1.0 / (2.0 * beta) - 1.0
    a4 = gamma / beta - 1.0
    a5 = dt / 2.0 * (gamma / beta - 2.0)
    a6 = dt * (1.0 - gamma)
    a7 = dt * gamma
    return a0, a1, a2, a3, a4, a5, a6, a7


def _newmark_sdof(m: float, c: float, k: float, p: np.ndarray, params: NewmarkParams):
    """Scalar fast path: plain-float recursion, ~20x quicker than 1x1 matrices."""
    a0, a1, a2, a3, a4, a5, a6, a7 = _newmark_coeffs(params)
    n = p.shape[0]
    d = np.zeros(n)
    v = np.zeros(n)
    a = np.zeros(n)
    k_eff = k + a0 * m + a1 * c
    if k_eff == 0.0:
        raise ValueError("singular effective stiffness")
    pj = p.tolist()
    dj = vj = 0.0
    aj = pj[0] / m
    a[0] = aj
    for j in range(1, n):
        fe = pj[j] + m * (a0 * dj + a2 * vj + a3 * aj) + c * (a1 * dj + a4 * vj + a5 * aj)
        dn = fe / k_eff
        an = a0 * (dn - dj) - a2 * vj - a3 * aj
        vn = vj + a6 * aj + a7 * an
        d[j] = dn
        v[j] = vn
        a[j] = an
        dj, vj, aj = dn, vn, an
    return d, v, a


def _newmark_mdof(M, C, K, P, params: NewmarkParams):
    a0, a1, a2, a3, a4, a5, a6, a7 = _newmark_coeffs(params)
    n_dof, n_steps = P.shape
    d = np.zeros((n_dof, n_steps))
    v = np.zeros((n_dof, n_steps))
    a = np.zeros((n_dof, n_steps))
    K_eff = K + a0 * M + a1 * C
    try:
        lu = linalg.lu_factor(K_eff)
    except linalg.LinAlgError as exc:
        raise ValueError(f"singular effective stiffness: {exc}") from exc
    a[:, 0] = np.linalg.solve(M, P[:, 0])
    dj = d[:, 0].copy()
    vj = v[:, 0].copy()
    aj = a[:, 0].copy()
    for j in range(1, n_steps):
        fe = P[:, j] + M @ (a0 * dj + a2 * vj + a3 * aj) + C @ (a1 * dj + a4 * vj + a5 * aj)
        dn = linalg.lu_solve(lu, fe)
        an = a0 * (dn - dj) - a2 * vj - a3 * aj
        vn = vj + a6 * aj + a7 * an
        d[:, j] = dn
        v[:, j] = vn
        a[:, j] = an
        dj, vj, aj = dn, vn, an
    return d, v, a


def modal_superposition_solve(model: ShearBuildingModel, basis: ModalBasis, n_modes: int,
                              load, params: NewmarkParams) -> ResponseHistory:
    """Project onto the first n_modes modes, integrate the decoupled scalar
    equations q'' + 2 zeta omega q' + omega^2 q = phi^T P, and recombine
    x(t) = sum_n phi_n q_n(t)."""
    if not (1 <= n_modes <= model.n_floors):
        raise ValueError(f"n_modes must lie in [1, {model.n_floors}], got {n_modes}")
    P = _as_load_matrix(load, model.n_floors, params.dt)
    phi = basis.shapes[:, :n_modes]
    omega = basis.frequencies[:n_modes]
    zeta = basis.damping_ratios[:n_modes]
    Q = phi.T @ P                                # (n_modes, n_steps) modal loads
    q, qd, qdd = _newmark_decoupled(omega, zeta, Q, params)
    return ResponseHistory(params.dt, phi @ q, phi @ qd, phi @ qdd)


def _newmark_decoupled(omega, zeta, Q, params: NewmarkParams):
    """Newmark recursion on n independent unit-mass oscillators at once."""
    a0, a1, a2, a3, a4, a5, a6, a7 = _newmark_coeffs(params)
    c = 2.0 * zeta * omega
    k = omega ** 2
    k_eff = k + a0 + a1 * c
    n_modes, n_steps = Q.shape
    q = np.zeros((n_modes, n_steps))
    qd = np.zeros((n_modes, n_steps))
    qdd = np.zeros((n_modes, n_steps))
    qdd[:, 0] = Q[:, 0]
    dj, vj, aj = q[:, 0].copy(), qd[:, 0].copy(), qdd[:, 0].copy()
    for j in range(1, n_steps):
        fe = Q[:, j] + (a0 * dj + a2 * vj + a3 * aj) + c * (a1 * dj + a4 * vj + a5 * aj)
        dn = fe / k_eff
        an = a0 * (dn - dj) - a2 * vj - a3 * aj
        vn = vj + a6 * aj + a7 * an
        q[:, j] = dn
        qd[:, j] = vn
        qdd[:, j] = an
        dj, vj, aj = dn, vn, an
    return q, qd, qdd


def ground_motion_load(model: ShearBuildingModel, ground_accel: TimeSeries) -> np.ndarray:
    """Effective floor loads for base excitation: P_i(t) = -m_i * accel_g(t).

    Returns a (n_floors, n_steps) array aligned with ground_accel's grid.
    """
    return -np.outer(model.masses, ground_accel.values)
