"""
Interior-point differential dynamic programming.

Solves  min sum_t l_t(x_t, u_t) + l_f(x_T)  s.t.  x_{t+1} = f(x_t, u_t),
g_t(x_t, u_t) <= 0  in the infeasible-start primal-dual form: slacks s > 0
turn the rows into g + s = 0 and duals y > 0 price them. The backward pass
eliminates (ds, dy) from the perturbed KKT system stage by stage; the forward
pass is a filter line search over (barrier objective, constraint residual).
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, NamedTuple, Optional, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from app.core.constants import (
	ARMIJO_ETA,
	DEFAULT_FILTER_MARGIN,
	DEFAULT_IPDDP_MAX_ITERS,
	DEFAULT_KAPPA,
	DEFAULT_MIN_SLACK,
	DEFAULT_MU_INIT,
	DEFAULT_MU_LINEAR_RATE,
	DEFAULT_MU_MIN,
	DEFAULT_MU_STOP,
	DEFAULT_MU_SUPERLINEAR_POWER,
	DEFAULT_RHO_DECREASE,
	DEFAULT_RHO_INCREASE,
	DEFAULT_RHO_INIT,
	DEFAULT_RHO_MAX,
	DEFAULT_STEP_EXPONENTS,
	DEFAULT_TAU,
	FILTER_GAMMA_OBJECTIVE,
	FILTER_GAMMA_VIOLATION,
	FILTER_MAX_VIOLATION_FACTOR,
	FILTER_MIN_VIOLATION_FACTOR,
	ROUNDOFF_FACTOR,
	SWITCHING_DELTA,
	SWITCHING_POWER_OBJECTIVE,
	SWITCHING_POWER_VIOLATION,
)
from app.core.errors import BackwardPassError, ForwardPassError, InvalidArgumentError, SolveFailedError
from app.core.types import ArrayLike, Matrix, Vector, as_vector
from app.services.constraints import StageConstraint
from app.services.costs import FinalCost, StageCost, trajectory_cost
from app.services.dynamics import DynamicsModel, Trajectory, as_control_sequence, rollout

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConstrainedOCP:
	model: DynamicsModel
	x_init: Vector
	horizon: int
	stage_cost: StageCost
	final_cost: FinalCost
	constraint: Optional[StageConstraint] = None

	def __post_init__(self) -> None:
		x_init = as_vector(self.x_init, "x_init")
		if x_init.shape[0] != self.model.state_dim:
			raise InvalidArgumentError(f"x_init must have dimension {self.model.state_dim}")
		if self.horizon < 1:
			raise InvalidArgumentError(f"horizon must be >= 1, got {self.horizon}")
		if self.constraint is not None and (
			self.constraint.state_dim != self.model.state_dim or self.constraint.control_dim != self.model.control_dim
		):
			raise InvalidArgumentError("constraint dimensions do not match the model")
		object.__setattr__(self, "x_init", x_init)

	@property
	def constraint_count(self) -> int:
		return 0 if self.constraint is None else self.constraint.count

	def constraint_values(self, trajectory: Trajectory) -> np.ndarray:
		"""g_t(x_t, u_t) for t = 0..T-1, shape (T, k)."""
		k = self.constraint_count
		if k == 0:
			return np.zeros((self.horizon, 0))
		return np.stack([
			self.constraint.value(t, trajectory.states[t], trajectory.controls[t]) for t in range(self.horizon)
		])

	def cost(self, trajectory: Trajectory) -> float:
		return trajectory_cost(self.stage_cost, self.final_cost, trajectory.states, trajectory.controls)


@dataclass(frozen=True)
class IpddpIterate:
	trajectory: Trajectory
	slacks: np.ndarray
	duals: np.ndarray
	mu: float
	rho: float = 0.0
	cost: float = math.nan
	constraint_values: Optional[np.ndarray] = None

	@property
	def primal_residual(self) -> np.ndarray:
		return self.constraint_values + self.slacks

	@property
	def barrier_objective(self) -> float:
		return self.cost - self.mu * float(np.sum(np.log(self.slacks)))

	@property
	def violation(self) -> float:
		return float(np.sum(np.abs(self.primal_residual)))


class ValueExpansion(NamedTuple):
	v_x: Vector
	v_xx: Matrix


class QExpansion(NamedTuple):
	q_x: Vector
	q_u: Vector
	q_xx: Matrix
	q_ux: Matrix
	q_uu: Matrix


@dataclass
class GainSchedule:
	k_u: np.ndarray
	d_u: np.ndarray
	k_s: np.ndarray
	d_s: np.ndarray
	k_y: np.ndarray
	d_y: np.ndarray
	expected_change: float = 0.0
	linear_change: float = 0.0
	quadratic_change: float = 0.0
	values: List[ValueExpansion] = field(default_factory=list)
	max_q_u: float = 0.0
	max_primal_residual: float = 0.0
	max_dual_residual: float = 0.0

	@classmethod
	def zeros(cls, horizon: int, n: int, m: int, k: int) -> "GainSchedule":
		return cls(
			k_u=np.zeros((horizon, m, n)),
			d_u=np.zeros((horizon, m)),
			k_s=np.zeros((horizon, k, n)),
			d_s=np.zeros((horizon, k)),
			k_y=np.zeros((horizon, k, n)),
			d_y=np.zeros((horizon, k)),
		)

	def predicted_change(self, alpha: float) -> float:
		"""Model change of the objective for step size alpha; negative is a decrease."""
		return alpha * self.linear_change + 0.5 * alpha * alpha * self.quadratic_change


@dataclass(frozen=True)
class IpddpOptions:
	mu_init: float = DEFAULT_MU_INIT
	kappa: float = DEFAULT_KAPPA
	mu_min: float = DEFAULT_MU_MIN
	mu_stop: float = DEFAULT_MU_STOP
	mu_linear_rate: float = DEFAULT_MU_LINEAR_RATE
	mu_superlinear_power: float = DEFAULT_MU_SUPERLINEAR_POWER
	tau: float = DEFAULT_TAU
	rho_init: float = DEFAULT_RHO_INIT
	rho_max: float = DEFAULT_RHO_MAX
	rho_increase: float = DEFAULT_RHO_INCREASE
	rho_decrease: float = DEFAULT_RHO_DECREASE
	max_iters: int = DEFAULT_IPDDP_MAX_ITERS
	step_exponents: int = DEFAULT_STEP_EXPONENTS
	filter_margin: float = DEFAULT_FILTER_MARGIN
	min_slack: float = DEFAULT_MIN_SLACK
	second_order_dynamics: bool = False

	def __post_init__(self) -> None:
		if not self.mu_init > 0.0 or not self.mu_min > 0.0 or not self.mu_stop > 0.0:
			raise InvalidArgumentError("barrier parameters must be positive")
		if not self.kappa > 1.0:
			raise InvalidArgumentError(f"kappa must exceed 1, got {self.kappa}")
		if not 0.0 < self.tau < 1.0:
			raise InvalidArgumentError(f"tau must lie in (0, 1), got {self.tau}")
		if self.max_iters < 1 or self.step_exponents < 1:
			raise InvalidArgumentError("max_iters and step_exponents must be >= 1")

	@property
	def step_sizes(self) -> List[float]:
		return [2.0 ** -j for j in range(self.step_exponents)]


@dataclass(frozen=True)
class IpddpResult:
	trajectory: Trajectory
	slacks: np.ndarray
	duals: np.ndarray
	converged: bool
	iterations: int
	mu: float
	rho: float
	max_primal_residual: float
	max_violation: float
	cost: float


class LineSearchFilter:
	"""Set of non-dominated (barrier objective, violation) pairs.

	A filter built with `seeded` also carries the violation envelope: candidates
	above `max_violation` are refused outright, and iterates below
	`min_violation` may take objective-only (Armijo) steps.
	"""

	def __init__(
		self,
		pairs: Optional[List[Tuple[float, float]]] = None,
		margin: float = DEFAULT_FILTER_MARGIN,
		max_violation: float = math.inf,
		min_violation: float = FILTER_MIN_VIOLATION_FACTOR,
	) -> None:
		self.pairs: List[Tuple[float, float]] = list(pairs or [])
		self.margin = margin
		self.max_violation = max_violation
		self.min_violation = min_violation

	@classmethod
	def seeded(cls, objective: float, violation: float, margin: float = DEFAULT_FILTER_MARGIN) -> "LineSearchFilter":
		scale = max(1.0, violation)
		return cls(
			pairs=[(objective, violation)],
			margin=margin,
			max_violation=FILTER_MAX_VIOLATION_FACTOR * scale,
			min_violation=FILTER_MIN_VIOLATION_FACTOR * scale,
		)

	def __len__(self) -> int:
		return len(self.pairs)

	def accepts(self, objective: float, violation: float) -> bool:
		if violation >= self.max_violation:
			return False
		return all(
			objective < entry_objective - self.margin or violation < entry_violation - self.margin
			for entry_objective, entry_violation in self.pairs
		)

	def add(self, objective: float, violation: float) -> None:
		self.pairs = [
			(o, v) for o, v in self.pairs if not (o >= objective and v >= violation)
		]
		self.pairs.append((objective, violation))

	def reset(self, objective: float, violation: float) -> None:
		"""Drop every entry and seed with the current pair; the envelope is kept."""
		self.pairs = [(objective, violation)]



def check_local_convergence(max_q_u: float, max_r_p: float, max_r_d: float, kappa: float, mu: float) -> bool:
	"""max(|Q_u|, |r_p|, |r_d|) < kappa * mu, strictly."""
	if not kappa > 1.0 or not mu > 0.0:
		raise InvalidArgumentError(f"need kappa > 1 and mu > 0, got kappa={kappa}, mu={mu}")
	return max(max_q_u, max_r_p, max_r_d) < kappa * mu


def evaluate_iterate(
	ocp: ConstrainedOCP,
	trajectory: Trajectory,
	slacks: np.ndarray,
	duals: np.ndarray,
	mu: float,
	rho: float = 0.0,
) -> IpddpIterate:
	return IpddpIterate(
		trajectory=trajectory,
		slacks=slacks,
		duals=duals,
		mu=mu,
		rho=rho,
		cost=ocp.cost(trajectory),
		constraint_values=ocp.constraint_values(trajectory),
	)


def initial_iterate(ocp: ConstrainedOCP, init: Union[Trajectory, ArrayLike], options: Optional[IpddpOptions] = None) -> IpddpIterate:
	"""Roll out the initial controls and center slacks and duals: s = max(-g, s_min), y = mu / s."""
	options = options or IpddpOptions()
	controls = init.controls if isinstance(init, Trajectory) else init
	sequence = as_control_sequence(ocp.model, controls)
	if sequence.shape[0] != ocp.horizon:
		raise InvalidArgumentError(f"initial controls must have length {ocp.horizon}, got {sequence.shape[0]}")
	trajectory = rollout(ocp.model, ocp.x_init, sequence)
	values = ocp.constraint_values(trajectory)
	slacks = np.maximum(-values, options.min_slack)
	duals = options.mu_init / slacks
	return IpddpIterate(
		trajectory=trajectory,
		slacks=slacks,
		duals=duals,
		mu=options.mu_init,
		rho=0.0,
		cost=ocp.cost(trajectory),
		constraint_values=values,
	)


def q_expansion(
	ocp: ConstrainedOCP,
	t: int,
	x: Vector,
	u: Vector,
	y: Vector,
	next_value: ValueExpansion,
	second_order_dynamics: bool = False,
) -> QExpansion:
	"""Second-order expansion of l + V'(f) + y'(g + s) at stage t."""
	f_x, f_u = ocp.model.linearize(x, u)
	cost = ocp.stage_cost.derivatives(t, x, u)
	v_x, v_xx = next_value
	q_x = cost.l_x + f_x.T @ v_x
	q_u = cost.l_u + f_u.T @ v_x
	q_xx = cost.l_xx + f_x.T @ v_xx @ f_x
	q_ux = cost.l_ux + f_u.T @ v_xx @ f_x
	q_uu = cost.l_uu + f_u.T @ v_xx @ f_u
	if ocp.constraint_count:
		g_x, g_u = ocp.constraint.jacobians(t, x, u)
		h_xx, h_ux, h_uu = ocp.constraint.hessians(t, x, u, y)
		q_x = q_x + g_x.T @ y
		q_u = q_u + g_u.T @ y
		q_xx = q_xx + h_xx
		q_ux = q_ux + h_ux
		q_uu = q_uu + h_uu
	if second_order_dynamics:
		d_xx, d_ux, d_uu = ocp.model.second_order_terms(x, u, v_x)
		q_xx = q_xx + d_xx
		q_ux = q_ux + d_ux
		q_uu = q_uu + d_uu
	return QExpansion(q_x, q_u, q_xx, q_ux, q_uu)


def backward_pass(ocp: ConstrainedOCP, it: IpddpIterate, options: Optional[IpddpOptions] = None) -> GainSchedule:
	"""Stagewise elimination of the perturbed KKT system.

	Raises BackwardPassError when the regularized, barrier-augmented Q_uu is
	not positive definite at some stage.
	"""
	options = options or IpddpOptions()
	model = ocp.model
	n, m, k, horizon = model.state_dim, model.control_dim, ocp.constraint_count, ocp.horizon
	if k and (np.any(it.slacks <= 0.0) or np.any(it.duals <= 0.0)):
		raise InvalidArgumentError("iterate must be strictly interior")

	states, controls = it.trajectory.states, it.trajectory.controls
	gains = GainSchedule.zeros(horizon, n, m, k)
	final = ocp.final_cost.derivatives(states[-1])
	value = ValueExpansion(final.l_x, final.l_xx)
	values = [value]
	expected = linear = quadratic = 0.0
	max_q_u = max_r_p = max_r_d = 0.0

	for t in range(horizon - 1, -1, -1):
		x, u = states[t], controls[t]
		s, y = it.slacks[t], it.duals[t]
		q = q_expansion(ocp, t, x, u, y, value, options.second_order_dynamics)
		q_uu = q.q_uu + it.rho * np.eye(m)

		if k:
			g_x, g_u = ocp.constraint.jacobians(t, x, u)
			r_p = it.constraint_values[t] + s
			r_d = s * y - it.mu
			r = y * r_p - r_d
			s_inv = 1.0 / s
			sigma = y * s_inv
			qt_u = q.q_u + g_u.T @ (s_inv * r)
			qt_x = q.q_x + g_x.T @ (s_inv * r)
			qt_uu = q_uu + g_u.T @ (sigma[:, None] * g_u)
			qt_ux = q.q_ux + g_u.T @ (sigma[:, None] * g_x)
			qt_xx = q.q_xx + g_x.T @ (sigma[:, None] * g_x)
			max_r_p = max(max_r_p, float(np.max(np.abs(r_p))))
			max_r_d = max(max_r_d, float(np.max(np.abs(r_d))))
		else:
			qt_u, qt_x, qt_uu, qt_ux, qt_xx = q.q_u, q.q_x, q_uu, q.q_ux, q.q_xx
		max_q_u = max(max_q_u, float(np.max(np.abs(q.q_u))))

		if not np.all(np.isfinite(qt_uu)):
			raise BackwardPassError(t)
		try:
			factor = cho_factor(0.5 * (qt_uu + qt_uu.T), lower=True, check_finite=False)
		except LinAlgError as exc:
			raise BackwardPassError(t) from exc
		k_u = -cho_solve(factor, qt_ux, check_finite=False)
		d_u = -cho_solve(factor, qt_u, check_finite=False)
		gains.k_u[t] = k_u
		gains.d_u[t] = d_u

		if k:
			closed_loop = g_x + g_u @ k_u
			gains.k_s[t] = -closed_loop
			gains.d_s[t] = -(r_p + g_u @ d_u)
			gains.k_y[t] = sigma[:, None] * closed_loop
			gains.d_y[t] = s_inv * (r + y * (g_u @ d_u))
			expected += 0.5 * float(r_p @ (sigma * r_p)) - float(r_d @ (s_inv * r_p))

		stage_linear = float(qt_u @ d_u)
		stage_quadratic = float(d_u @ qt_uu @ d_u)
		linear += stage_linear
		quadratic += stage_quadratic
		expected += stage_linear + 0.5 * stage_quadratic
		v_x = qt_x + k_u.T @ qt_u + qt_ux.T @ d_u + k_u.T @ qt_uu @ d_u
		v_xx = qt_xx + k_u.T @ qt_ux + qt_ux.T @ k_u + k_u.T @ qt_uu @ k_u
		value = ValueExpansion(v_x, 0.5 * (v_xx + v_xx.T))
		values.append(value)

	values.reverse()
	gains.values = values
	gains.expected_change = expected
	gains.linear_change = linear
	gains.quadratic_change = quadratic
	gains.max_q_u = max_q_u
	gains.max_primal_residual = max_r_p
	gains.max_dual_residual = max_r_d
	return gains


def _rollout_candidate(
	ocp: ConstrainedOCP,
	it: IpddpIterate,
	gains: GainSchedule,
	alpha: float,
	tau: float,
) -> Optional[IpddpIterate]:
	model = ocp.model
	k = ocp.constraint_count
	states, controls = it.trajectory.states, it.trajectory.controls
	new_states = np.empty_like(states)
	new_controls = np.empty_like(controls)
	new_slacks = np.empty_like(it.slacks)
	new_duals = np.empty_like(it.duals)
	new_states[0] = states[0]
	for t in range(ocp.horizon):
		dx = new_states[t] - states[t]
		new_controls[t] = controls[t] + alpha * (gains.d_u[t] + gains.k_u[t] @ dx)
		if k:
			new_slacks[t] = it.slacks[t] + alpha * (gains.d_s[t] + gains.k_s[t] @ dx)
			new_duals[t] = it.duals[t] + alpha * (gains.d_y[t] + gains.k_y[t] @ dx)
			# fraction-to-boundary
			if np.any(new_slacks[t] < (1.0 - tau) * it.slacks[t]) or np.any(new_duals[t] < (1.0 - tau) * it.duals[t]):
				return None
		new_states[t + 1] = model.step_batch(new_states[t], new_controls[t])
	if not (np.all(np.isfinite(new_states)) and np.all(np.isfinite(new_controls))):
		return None
	candidate = evaluate_iterate(ocp, Trajectory(new_states, new_controls), new_slacks, new_duals, it.mu, it.rho)
	if not (math.isfinite(candidate.barrier_objective) and math.isfinite(candidate.violation)):
		return None
	return candidate


def _step_acceptable(
	it: IpddpIterate,
	candidate: IpddpIterate,
	gains: GainSchedule,
	alpha: float,
	line_filter: LineSearchFilter,
) -> Tuple[bool, bool]:
	"""Decide (accepted, augment filter) for one trial step.

	Near-feasible iterates with a descent model take objective-only Armijo
	steps that leave the filter untouched. Otherwise the candidate must pass
	the filter and reduce the violation or the objective against the current
	iterate. Steps whose predicted change sits below the filter margin only
	have to avoid getting worse.
	"""
	objective, violation = candidate.barrier_objective, candidate.violation
	current_objective, current_violation = it.barrier_objective, it.violation
	if violation >= line_filter.max_violation:
		return False, False
	roundoff = ROUNDOFF_FACTOR * max(1.0, abs(current_objective))
	predicted = gains.predicted_change(alpha)
	if abs(predicted) <= line_filter.margin:
		accepted = objective <= current_objective + roundoff and violation <= current_violation + line_filter.margin
		return accepted, accepted

	linear = alpha * gains.linear_change
	switching = linear < 0.0 and alpha * (-gains.linear_change) ** SWITCHING_POWER_OBJECTIVE > (
		SWITCHING_DELTA * current_violation ** SWITCHING_POWER_VIOLATION
	)
	if current_violation <= line_filter.min_violation and switching:
		armijo = objective <= current_objective + ARMIJO_ETA * linear + roundoff
		return armijo and line_filter.accepts(objective, violation), False

	if not line_filter.accepts(objective, violation):
		return False, False
	decrease = (
		violation <= (1.0 - FILTER_GAMMA_VIOLATION) * current_violation
		or objective <= current_objective - FILTER_GAMMA_OBJECTIVE * current_violation
	)
	return decrease, decrease


def forward_pass(
	ocp: ConstrainedOCP,
	it: IpddpIterate,
	gains: GainSchedule,
	line_filter: LineSearchFilter,
	options: Optional[IpddpOptions] = None,
) -> Tuple[IpddpIterate, float]:
	"""Filter line search over the closed-loop update; returns (iterate, alpha).

	Accepted pairs from filter steps are added to `line_filter`.
	"""
	options = options or IpddpOptions()
	for alpha in options.step_sizes:
		candidate = _rollout_candidate(ocp, it, gains, alpha, options.tau)
		if candidate is None:
			continue
		accepted, augment = _step_acceptable(it, candidate, gains, alpha, line_filter)
		if accepted:
			if augment:
				line_filter.add(candidate.barrier_objective, candidate.violation)
			return candidate, alpha
	raise ForwardPassError("no step size passed the filter")


def result_from_iterate(it: IpddpIterate, converged: bool, iterations: int) -> IpddpResult:
	residual = it.primal_residual
	values = it.constraint_values
	return IpddpResult(
		trajectory=it.trajectory,
		slacks=it.slacks,
		duals=it.duals,
		converged=converged,
		iterations=iterations,
		mu=it.mu,
		rho=it.rho,
		max_primal_residual=float(np.max(np.abs(residual))) if residual.size else 0.0,
		max_violation=float(max(0.0, np.max(values))) if values.size else 0.0,
		cost=it.cost,
	)


def solve(
	ocp: ConstrainedOCP,
	init: Union[Trajectory, ArrayLike],
	options: Optional[IpddpOptions] = None,
	on_iterate: Optional[Callable[[IpddpIterate], None]] = None,
) -> IpddpResult:
	"""Run IPDDP from the rolled-out initial controls.

	Terminates converged when the local test passes with mu <= mu_stop, or
	unconverged at max_iters. Raises SolveFailedError once rho exceeds rho_max.
	"""
	options = options or IpddpOptions()
	it = initial_iterate(ocp, init, options)
	line_filter = LineSearchFilter.seeded(it.barrier_objective, it.violation, options.filter_margin)
	rho = 0.0
	converged = False
	iterations = 0
	has_rows = ocp.constraint_count > 0

	def escalate(reason: str) -> float:
		increased = max(options.rho_increase * rho, options.rho_init)
		if increased > options.rho_max:
			raise SolveFailedError(
				f"regularization exceeded {options.rho_max:g} after {reason}",
				iterate=it,
				diagnostics={"iterations": iterations, "mu": it.mu, "rho": increased, "cost": it.cost},
			)
		return increased

	while iterations < options.max_iters:
		iterations += 1
		it = replace(it, rho=rho)
		try:
			gains = backward_pass(ocp, it, options)
		except BackwardPassError as exc:
			rho = escalate(f"backward pass failure at stage {exc.stage}")
			continue

		logger.debug(
			"ipddp iteration",
			extra={
				"iteration": iterations,
				"cost": it.cost,
				"mu": it.mu,
				"rho": rho,
				"max_q_u": gains.max_q_u,
				"max_r_p": gains.max_primal_residual,
				"max_r_d": gains.max_dual_residual,
			},
		)

		if not has_rows:
			if gains.max_q_u < options.kappa * options.mu_stop:
				converged = True
				break
		elif check_local_convergence(
			gains.max_q_u, gains.max_primal_residual, gains.max_dual_residual, options.kappa, it.mu
		):
			if it.mu <= options.mu_stop:
				converged = True
				break
			mu = max(options.mu_min, min(options.mu_linear_rate * it.mu, it.mu ** options.mu_superlinear_power))
			it = replace(it, mu=mu)
			line_filter.reset(it.barrier_objective, it.violation)
			continue

		try:
			it, alpha = forward_pass(ocp, it, gains, line_filter, options)
		except ForwardPassError:
			rho = escalate("forward pass failure")
			continue

		rho = rho / options.rho_decrease
		if rho < options.rho_init:
			rho = 0.0
		it = replace(it, rho=rho)
		if on_iterate is not None:
			on_iterate(it)

	result = result_from_iterate(it, converged, iterations)
	logger.info(
		f"IPDDP finished after {iterations} iterations: converged={converged}, cost={result.cost:.6g}, "
		f"mu={result.mu:.3g}, max |r_p|={result.max_primal_residual:.3g}",
		extra={
			"converged": converged,
			"iterations": iterations,
			"cost": result.cost,
			"mu": result.mu,
			"max_r_p": result.max_primal_residual,
		},
	)
	return result
