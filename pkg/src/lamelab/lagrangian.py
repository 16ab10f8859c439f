"""Flow-map algebra, the Lagrangian nonlinearity, the small-data fixed point
for the pressureless viscous system, and its Eulerian cross-checks.

Unknowns live on the initial (Lagrangian) grid; trajectories are
X(t, y) = y + integral of the velocity, and all geometry (Jacobian, its
inverse, adjugate, determinant) is carried nodewise with closed-form
cofactors, which is exact for dim <= 3. Compositions with X or its inverse
go through periodic cubic interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from ._interp import interp_periodic, interp_periodic_components, spline_prefilter
from .besov import BesovIndex, besov_norm_report, default_partition
from .grid import (
    Grid,
    divergence,
    field_magnitude,
    gradient,
    integral,
    jacobian,
    lp_norm,
)
from .maxreg import SolutionNorms, solution_norms
from .operators import LameParams, lame_apply
from .varcoef import Coefficient, StepperConfig, evolve, theta_step


class DiffeomorphismError(RuntimeError):
    """The flow map lost invertibility (det DX <= 0 somewhere)."""

    def __init__(self, t_index: int, node, value: float):
        super().__init__(f"det DX = {value:.3e} <= 0 at t index {t_index}, node {node}")
        self.t_index = t_index
        self.node = node
        self.value = value


class FlowInversionError(RuntimeError):
    """Fixed-point inversion of the flow map failed to converge."""


class PicardConvergenceError(RuntimeError):
    """Fixed-point iteration exhausted max_iters; carries the factor history."""

    def __init__(self, message: str, diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


# -- nodewise matrix algebra (closed-form, dim <= 3) ------------------------------


def matrix_adjugate(mat: np.ndarray) -> np.ndarray:
    """Adjugate of a matrix field (leading axes (dim, dim)), closed-form cofactors."""
    d = mat.shape[0]
    out = np.empty_like(mat)
    if d == 2:
        out[0, 0] = mat[1, 1]
        out[0, 1] = -mat[0, 1]
        out[1, 0] = -mat[1, 0]
        out[1, 1] = mat[0, 0]
        return out
    m = mat
    out[0, 0] = m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1]
    out[0, 1] = m[0, 2] * m[2, 1] - m[0, 1] * m[2, 2]
    out[0, 2] = m[0, 1] * m[1, 2] - m[0, 2] * m[1, 1]
    out[1, 0] = m[1, 2] * m[2, 0] - m[1, 0] * m[2, 2]
    out[1, 1] = m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]
    out[1, 2] = m[0, 2] * m[1, 0] - m[0, 0] * m[1, 2]
    out[2, 0] = m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]
    out[2, 1] = m[0, 1] * m[2, 0] - m[0, 0] * m[2, 1]
    out[2, 2] = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return out


def matrix_determinant(mat: np.ndarray, adj: np.ndarray | None = None) -> np.ndarray:
    if adj is None:
        adj = matrix_adjugate(mat)
    return sum(mat[0, j] * adj[j, 0] for j in range(mat.shape[0]))


# -- state and flow-map data -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LagrangianState:
    """Velocity in flow coordinates, sampled on a uniform time grid."""

    grid: Grid
    params: LameParams
    rho0: Coefficient
    t: np.ndarray
    u: np.ndarray  # (nt, dim, *shape)

    def __post_init__(self):
        steps = np.diff(self.t)
        if len(steps) < 2 or not np.allclose(steps, steps[0], rtol=1e-10):
            raise ValueError("state needs a uniform time grid with at least 3 samples")
        if self.u.shape != (len(self.t), self.grid.dim) + self.grid.shape:
            raise ValueError(f"velocity shape {self.u.shape} inconsistent with grid/time axes")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])


@dataclass(frozen=True, eq=False)
class FlowMapData:
    """Trajectory geometry: displacement X - id and its Jacobian package."""

    disp: np.ndarray  # (nt, dim, *shape)
    jac: np.ndarray  # DX,      (nt, dim, dim, *shape)
    jac_inv: np.ndarray  # (DX)^-1
    adj: np.ndarray  # adjugate, det * inverse
    det: np.ndarray  # (nt, *shape)


def flow_map(state: LagrangianState) -> FlowMapData:
    """Integrate the velocity to trajectories and assemble DX, its inverse,
    adjugate, and determinant; raises DiffeomorphismError if det DX <= 0."""
    grid = state.grid
    disp = cumulative_trapezoid(state.u, dx=state.dt, axis=0, initial=0.0)
    nt = len(state.t)
    d = grid.dim
    jac = np.empty((nt, d, d) + grid.shape)
    for i in range(nt):
        jac[i] = jacobian(grid, disp[i])
        for a in range(d):
            jac[i, a, a] += 1.0
    adj = np.stack([matrix_adjugate(jac[i]) for i in range(nt)])
    det = np.stack([matrix_determinant(jac[i], adj[i]) for i in range(nt)])
    if np.min(det) <= 0.0:
        i, *node = np.unravel_index(np.argmin(det), det.shape)
        raise DiffeomorphismError(int(i), tuple(int(c) for c in node), float(np.min(det)))
    jac_inv = adj / det[:, None, None]
    return FlowMapData(disp, jac, jac_inv, adj, det)


# -- change-of-variable identities --------------------------------------------------


@dataclass(frozen=True)
class ChangeOfVariableReport:
    """Max-norm residuals of the pullback identities at one time sample."""

    gradient: float
    divergence_trace: float
    divergence_piola: float
    laplacian: float


def change_of_variable_residual(
    grid: Grid, phi: np.ndarray, v: np.ndarray, flow: FlowMapData, t_index: int
) -> ChangeOfVariableReport:
    """Check the pullback identities for a scalar phi and a vector field v.

    (grad phi) o X = A^T grad(phi o X); (div v) o X equals both the trace
    form Tr[A D(v o X)] and the conservation form div(adj (v o X)) / J; and
    (Lap v) o X = div(adj A^T grad(v o X)) / J, componentwise.
    """
    L = grid.extent
    x_pts = grid.coords + flow.disp[t_index]
    a_inv = flow.jac_inv[t_index]
    adj = flow.adj[t_index]
    det = flow.det[t_index]

    phi_x = interp_periodic(phi, x_pts, L)
    lhs_grad = interp_periodic_components(gradient(grid, phi), x_pts, L)
    rhs_grad = np.einsum("ai...,a...->i...", a_inv, gradient(grid, phi_x))
    res_grad = float(np.max(np.abs(lhs_grad - rhs_grad)))

    v_x = interp_periodic_components(v, x_pts, L)
    lhs_div = interp_periodic(divergence(grid, v), x_pts, L)
    dv_x = jacobian(grid, v_x)
    rhs_trace = np.einsum("ij...,ji...->...", a_inv, dv_x)
    rhs_piola = divergence(grid, np.einsum("ij...,j...->i...", adj, v_x)) / det
    res_trace = float(np.max(np.abs(lhs_div - rhs_trace)))
    res_piola = float(np.max(np.abs(lhs_div - rhs_piola)))

    lap = np.stack([divergence(grid, gradient(grid, v[m])) for m in range(grid.dim)])
    lhs_lap = interp_periodic_components(lap, x_pts, L)
    metric = np.einsum("ij...,kj...->ik...", adj, a_inv)  # adj A^T
    rhs_lap = np.stack(
        [
            divergence(grid, np.einsum("ik...,k...->i...", metric, gradient(grid, v_x[m]))) / det
            for m in range(grid.dim)
        ]
    )
    res_lap = float(np.max(np.abs(lhs_lap - rhs_lap)))
    return ChangeOfVariableReport(res_grad, res_trace, res_piola, res_lap)


# -- the Lagrangian nonlinearity -----------------------------------------------------


def nonlinearity_f(state: LagrangianState, flow: FlowMapData) -> np.ndarray:
    """Quadratic remainder of the flow-twisted elastic operator at every time sample.

    f(u) = mu div((adj A^T - I) grad u)
         + (mu + lam) [ (adj^T - I) grad Tr(A Du) + grad Tr((A - I) Du) ],
    so that the exact momentum balance reads rho0 du/dt - L u = f(u).
    """
    grid = state.grid
    mu, lam = state.params.mu, state.params.lam
    d = grid.dim
    out = np.empty_like(state.u)
    eye = np.eye(d).reshape((d, d) + (1,) * d)
    for i in range(len(state.t)):
        du = jacobian(grid, state.u[i])  # du[a, b] = d_b u_a
        a_inv = flow.jac_inv[i]
        adj = flow.adj[i]
        metric = np.einsum("ij...,kj...->ik...", adj, a_inv) - eye
        term1 = np.stack(
            [
                divergence(grid, np.einsum("ij...,j...->i...", metric, du[m]))
                for m in range(d)
            ]
        )
        trace_full = np.einsum("ij...,ji...->...", a_inv, du)
        g_full = gradient(grid, trace_full)
        term2 = np.einsum("ji...,j...->i...", adj, g_full) - g_full
        trace_dev = np.einsum("ij...,ji...->...", a_inv - eye, du)
        term3 = gradient(grid, trace_dev)
        out[i] = mu * term1 + (mu + lam) * (term2 + term3)
    return out


# -- flow estimates -------------------------------------------------------------------


@dataclass(frozen=True)
class FlowEstimateReport:
    lhs: float  # sup-in-time Besov distance of (A, adj) from the identity
    rhs: float  # L1-in-time Besov norm of the velocity gradient
    ratio: float
    smallness_ok: bool
    c0: float


def _grad_l1_besov(state: LagrangianState, p: float) -> float:
    grid = state.grid
    idx = BesovIndex(grid.dim / p, p, 1.0)
    part = default_partition(grid)
    vals = [
        besov_norm_report(grid, jacobian(grid, state.u[i]), idx, part).value
        for i in range(len(state.t))
    ]
    return float(np.trapezoid(vals, dx=state.dt))


def flow_estimate_check(state: LagrangianState, c0: float = 0.1, p: float = 2.0) -> FlowEstimateReport:
    """Compare the flow-map deviation from the identity to the gradient budget."""
    grid = state.grid
    flow = flow_map(state)
    idx = BesovIndex(grid.dim / p, p, 1.0)
    part = default_partition(grid)
    eye = np.eye(grid.dim).reshape((grid.dim, grid.dim) + (1,) * grid.dim)
    lhs = 0.0
    for i in range(len(state.t)):
        na = besov_norm_report(grid, flow.jac_inv[i] - eye, idx, part).value
        nadj = besov_norm_report(grid, flow.adj[i] - eye, idx, part).value
        lhs = max(lhs, na + nadj)
    rhs = _grad_l1_besov(state, p)
    ratio = 0.0 if rhs == 0.0 else lhs / rhs
    return FlowEstimateReport(lhs, rhs, ratio, bool(rhs <= c0), c0)


def flow_estimate_difference(
    state1: LagrangianState, state2: LagrangianState, p: float = 2.0
) -> FlowEstimateReport:
    """Difference variant: deviation between two flow maps against grad(v1 - v2)."""
    grid = state1.grid
    f1, f2 = flow_map(state1), flow_map(state2)
    idx = BesovIndex(grid.dim / p, p, 1.0)
    part = default_partition(grid)
    lhs = 0.0
    for i in range(len(state1.t)):
        na = besov_norm_report(grid, f1.jac_inv[i] - f2.jac_inv[i], idx, part).value
        nadj = besov_norm_report(grid, f1.adj[i] - f2.adj[i], idx, part).value
        lhs = max(lhs, na + nadj)
    delta = LagrangianState(grid, state1.params, state1.rho0, state1.t, state1.u - state2.u)
    rhs = _grad_l1_besov(delta, p)
    ratio = 0.0 if rhs == 0.0 else lhs / rhs
    return FlowEstimateReport(lhs, rhs, ratio, True, np.inf)


def grad_sup_integral(state: LagrangianState) -> float:
    """Trapezoid quadrature of the sup-norm of the velocity gradient over time."""
    vals = [
        float(np.max(field_magnitude(state.grid, jacobian(state.grid, state.u[i]))))
        for i in range(len(state.t))
    ]
    return float(np.trapezoid(vals, dx=state.dt))


def grad_sup_tail_estimate(state: LagrangianState) -> float:
    """Extrapolate the integral past the horizon from the observed decay rate."""
    grid = state.grid
    g_end = float(np.max(field_magnitude(grid, jacobian(grid, state.u[-1]))))
    g_prev = float(np.max(field_magnitude(grid, jacobian(grid, state.u[-2]))))
    if g_end <= 0 or g_prev <= g_end:
        return grad_sup_integral(state)
    rate = np.log(g_prev / g_end) / state.dt
    return grad_sup_integral(state) + g_end / rate


# -- Picard fixed point ----------------------------------------------------------------


@dataclass(frozen=True)
class PicardConfig:
    """Fixed-point controls; the certified-smallness constants are recorded
    empirically, not derived."""

    dt: float
    max_iters: int = 25
    stop_tol_rel: float = 1e-8
    smallness_c: float = 0.05
    flow_smallness_c0: float = 0.1
    ball_radius_r: float = 0.5
    contraction_tol: float = 0.5
    p: float = 2.0
    theta: float = 0.5
    cg_tol: float = 1e-11
    cg_maxiter: int = 500

    @property
    def stepper(self) -> StepperConfig:
        return StepperConfig(self.dt, self.theta, self.cg_tol, self.cg_maxiter)


@dataclass
class PicardDiagnostics:
    u0_norm: float
    stop_tol: float
    smallness_ok: bool
    flow_smallness_ok: list = field(default_factory=list)
    iterate_norms: list = field(default_factory=list)  # solution norm per iterate
    delta_norms: list = field(default_factory=list)
    contraction_factors: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def picard_solve(
    rho0: Coefficient, params: LameParams, u0: np.ndarray, T: float, cfg: PicardConfig
):
    """Iterate the linearized momentum solve to the nonlinear fixed point.

    Starts from the unforced linear solution and refreshes the forcing with
    the previous iterate's nonlinearity; stops when the solution-norm of the
    update falls below stop_tol_rel times the data norm.
    """
    grid = rho0.grid
    idx = BesovIndex(grid.dim / cfg.p - 1.0, cfg.p, 1.0)
    u0_norm = besov_norm_report(grid, u0, idx, default_partition(grid)).value
    diag = PicardDiagnostics(
        u0_norm=u0_norm,
        stop_tol=cfg.stop_tol_rel * max(u0_norm, 1e-300),
        smallness_ok=bool(u0_norm <= cfg.smallness_c * (1.0 + 1e-12)),
    )
    nt = int(round(T / cfg.dt)) + 1
    t_grid = np.linspace(0.0, T, nt)
    stepper = cfg.stepper.with_dt(float(t_grid[1]))

    def to_state(u_traj):
        return LagrangianState(grid, params, rho0, t_grid, u_traj)

    u_traj = evolve(rho0, params, u0, t_grid, stepper)
    diag.iterate_norms.append(solution_norms(grid, u_traj, t_grid[1], params, cfg.p).total)
    if u0_norm == 0.0:
        diag.converged = True
        return to_state(u_traj), diag

    for _ in range(cfg.max_iters):
        state = to_state(u_traj)
        flow = flow_map(state)
        grad_budget = _grad_l1_besov(state, cfg.p)
        diag.flow_smallness_ok.append(bool(grad_budget <= cfg.flow_smallness_c0))
        forcing = nonlinearity_f(state, flow)
        u_next = evolve(rho0, params, u0, t_grid, stepper, forcing=forcing)
        delta = solution_norms(grid, u_next - u_traj, t_grid[1], params, cfg.p).total
        diag.delta_norms.append(delta)
        if len(diag.delta_norms) >= 2 and diag.delta_norms[-2] > 0:
            diag.contraction_factors.append(delta / diag.delta_norms[-2])
        diag.iterate_norms.append(solution_norms(grid, u_next, t_grid[1], params, cfg.p).total)
        diag.iterations += 1
        u_traj = u_next
        if delta <= diag.stop_tol:
            diag.converged = True
            return to_state(u_traj), diag

    raise PicardConvergenceError(
        f"no convergence in {cfg.max_iters} iterations "
        f"(last update {diag.delta_norms[-1]:.3e}, tolerance {diag.stop_tol:.3e})",
        diag,
    )


def scheme_residual(state: LagrangianState, theta: float = 0.5) -> float:
    """Defect of the converged iterate in the nonlinear theta-scheme equations.

    Rebuilds the nonlinearity from the state itself and measures the
    L1-in-time Besov norm (regularity n/p - 1, p = 2) of
    rho0 (u_{i+1} - u_i)/dt - theta (L u + f)_{i+1} - (1-theta) (L u + f)_i.
    """
    grid = state.grid
    flow = flow_map(state)
    f = nonlinearity_f(state, flow)
    idx = BesovIndex(grid.dim / 2.0 - 1.0, 2.0, 1.0)
    part = default_partition(grid)
    dt = state.dt
    total = 0.0
    rhs_prev = lame_apply(grid, state.u[0], state.params) + f[0]
    for i in range(len(state.t) - 1):
        rhs_next = lame_apply(grid, state.u[i + 1], state.params) + f[i + 1]
        defect = (
            state.rho0.rho * (state.u[i + 1] - state.u[i]) / dt
            - theta * rhs_next
            - (1.0 - theta) * rhs_prev
        )
        total += dt * besov_norm_report(grid, defect, idx, part).value
        rhs_prev = rhs_next
    return total


# -- Eulerian reconstruction and reference ------------------------------------------------


@dataclass(frozen=True, eq=False)
class EulerianTrajectory:
    t: np.ndarray
    rho: np.ndarray  # (nt, *shape)
    u: np.ndarray  # (nt, dim, *shape)


def invert_flow(grid: Grid, disp: np.ndarray, tol: float = 1e-12, max_iters: int = 80) -> np.ndarray:
    """Solve X(Y(x)) = x by the fixed point Y <- x - disp(Y) (contractive for
    small flows); returns Y on the grid nodes."""
    x = grid.coords
    y = x - disp
    coeffs = np.stack([spline_prefilter(disp[a]) for a in range(grid.dim)])
    for _ in range(max_iters):
        y_new = x - interp_periodic_components(coeffs, y, grid.extent, prefiltered=True)
        move = np.max(np.abs(grid.min_image(y_new - y)))
        y = y_new
        if move <= tol * grid.extent:
            return y
    raise FlowInversionError(f"flow inversion stalled (last move {move:.3e})")


def flow_roundtrip_defect(grid: Grid, disp: np.ndarray, y: np.ndarray) -> float:
    """Max-norm of X(Y(x)) - x for a computed inverse Y."""
    x_back = y + interp_periodic_components(disp, y, grid.extent)
    return float(np.max(np.abs(grid.min_image(x_back - grid.coords))))


def pushforward_eulerian(
    state: LagrangianState, flow: FlowMapData, rho0: Coefficient
) -> EulerianTrajectory:
    """Reconstruct Eulerian fields: u(t, x) = u(t, Y(x)) and
    rho(t, x) = rho0(Y(x)) / J(t, Y(x)), the mass-consistent transport
    (J rho-along-the-flow stays equal to rho0)."""
    grid = state.grid
    nt = len(state.t)
    rho_out = np.empty((nt,) + grid.shape)
    u_out = np.empty_like(state.u)
    for i in range(nt):
        if i == 0:
            rho_out[0] = rho0.rho
            u_out[0] = state.u[0]
            continue
        y = invert_flow(grid, flow.disp[i])
        u_out[i] = interp_periodic_components(state.u[i], y, grid.extent)
        rho_out[i] = interp_periodic(rho0.rho / flow.det[i], y, grid.extent)
    return EulerianTrajectory(state.t.copy(), rho_out, u_out)


@dataclass(frozen=True)
class DensityTransportReport:
    max_pointwise_defect: float  # of J * rho(t, X(t, y)) = rho0(y), relative
    max_mass_defect: float  # of int rho(t) = int rho0, relative


def density_transport_check(
    state: LagrangianState,
    flow: FlowMapData,
    rho0: Coefficient,
    eulerian: EulerianTrajectory | None = None,
) -> DensityTransportReport:
    grid = state.grid
    if eulerian is None:
        eulerian = pushforward_eulerian(state, flow, rho0)
    mass0 = float(integral(grid, rho0.rho))
    scale = float(np.max(np.abs(rho0.rho)))
    worst_point = 0.0
    worst_mass = 0.0
    for i in range(len(state.t)):
        x_pts = grid.coords + flow.disp[i]
        rho_on_path = interp_periodic(eulerian.rho[i], x_pts, grid.extent)
        defect = np.max(np.abs(flow.det[i] * rho_on_path - rho0.rho)) / scale
        worst_point = max(worst_point, float(defect))
        mass = float(integral(grid, eulerian.rho[i]))
        worst_mass = max(worst_mass, abs(mass - mass0) / abs(mass0))
    return DensityTransportReport(worst_point, worst_mass)


def eulerian_reference_solve(
    rho0: Coefficient,
    params: LameParams,
    u0: np.ndarray,
    T: float,
    cfg: StepperConfig,
) -> EulerianTrajectory:
    """Independent Eulerian solver: semi-Lagrangian transport of density and
    momentum followed by the implicit viscous step with the transported
    density frozen. Shares nothing with the flow-map pipeline."""
    grid = rho0.grid
    nt = int(round(T / cfg.dt)) + 1
    t_grid = np.linspace(0.0, T, nt)
    dt = float(t_grid[1])
    rho = np.empty((nt,) + grid.shape)
    u = np.empty((nt, grid.dim) + grid.shape)
    rho[0] = rho0.rho
    u[0] = np.asarray(u0, dtype=float)
    L = grid.extent
    x = grid.coords
    for i in range(nt - 1):
        umax = float(np.max(field_magnitude(grid, u[i])))
        if dt * umax / grid.spacing > 1.0:
            raise ValueError(
                f"advective CFL violated at step {i}: dt |u| / h = {dt * umax / grid.spacing:.2f}"
            )
        # departure points, midpoint rule
        x_mid = x - 0.5 * dt * u[i]
        u_mid = interp_periodic_components(u[i], x_mid, L)
        x_dep = x - dt * u_mid
        u_adv = interp_periodic_components(u[i], x_dep, L)
        div_u = divergence(grid, u[i])
        rho_adv = interp_periodic(rho[i], x_dep, L) * np.exp(-dt * interp_periodic(div_u, x_dep, L))
        u[i + 1] = theta_step(grid, rho_adv, params, u_adv, dt, cfg, u_guess=u_adv)
        rho[i + 1] = rho_adv
    return EulerianTrajectory(t_grid, rho, u)
