"""
Runnable census of the identities and inequalities the solvers rely on.

Every check reports a normalized margin that must be >= -tolerance; residual
checks report the negated residual. Random cases are drawn with consecutive
seeds and the worst case is kept.
"""
import time
from typing import Callable, List

import numpy as np

from kernels import operators as ops
from kernels import spectral as sp
from models.control import ControlOperatorD, ForcingSpec
from models.costs import AssimConfig, ControlProblem, CostConfig
from models.field import FieldSeries, PhysicalVecField
from models.grid import GridSpec
from models.params import CbfParams
from models.reports import CheckResult
from models.trajectory import AdjointSpec
from services.adjoint_solver_service import duality_check
from services.assimilation_service import AssimilationService
from services.forward_solver_service import all_states, apriori_bound_check, energy_equality_residual, solve_forward
from services.linearized_solver_service import solve_linearized
from services.optimal_control_service import OptimalControlService
from utils.exceptions import CbfError
from utils.helpers import loglog_slope
from utils.logger import get_logger

logger = get_logger(__name__)

FD_TAUS = (1e-2, 1e-3, 1e-4)


class VerificationService:
    """
    Runs the check census on small grids.

    Args:
        params: physical coefficients of the run being verified
        n: grid size of the operator checks
        samples: random cases per randomized check
        seed: first seed
    """

    def __init__(self, params: CbfParams, n: int = 16, samples: int = 3, seed: int = 0):
        self.params = params
        self.n = n
        self.samples = samples
        self.seed = seed
        self.results: List[CheckResult] = []

    def _grid(self, r=None):
        return GridSpec.for_exponent(self.n, self.params.r if r is None else r)

    def _field(self, grid, k):
        return sp.random_divfree_field(grid, self.seed + k, norm_h=1.0 + 0.5 * k)

    def _record(self, name, margin, tolerance, detail=""):
        result = CheckResult(name, float(margin), float(tolerance), bool(margin >= -tolerance), detail)
        level = "debug" if result.passed else "warning"
        getattr(logger, level)(f"check {name}: margin {margin:.3e} (tol {tolerance:.1e}) {'ok' if result.passed else 'FAILED'}")
        self.results.append(result)
        return result

    def _worst(self, name, case: Callable[[int], float], tolerance, detail=""):
        """Worst normalized margin over ``samples`` random cases."""
        try:
            margin = min(case(s) for s in range(self.samples))
        except CbfError as e:
            logger.error(f"check {name} raised: {str(e)}")
            return self._record(name, -np.inf, tolerance, f"error: {e}")
        return self._record(name, margin, tolerance, detail)

    # -- spectral core ----------------------------------------------------------

    def spectral_checks(self):
        grid = self._grid()

        def round_trip(s):
            u = self._field(grid, s)
            back = sp.to_spectral(sp.to_physical(u))
            return -np.max(np.abs(back.coeffs - u.coeffs)) / np.max(np.abs(u.coeffs))

        def parseval(s):
            u = self._field(grid, s)
            physical = sp.quadrature((sp.to_physical(u).samples ** 2).sum(axis=0), grid)
            return -abs(physical - sp.inner_product(u, u)) / sp.inner_product(u, u)

        def projection(s):
            raw = np.random.default_rng(self.seed + s).standard_normal((2, grid.n, grid.n))
            u = sp.to_spectral(PhysicalVecField(grid, raw))
            pu = sp.leray_project(u)
            return -pu.divergence_residual() / max(sp.norm(u), 1e-300)

        def idempotent(s):
            raw = np.random.default_rng(self.seed + s).standard_normal((2, grid.n, grid.n))
            pu = sp.leray_project(sp.to_spectral(PhysicalVecField(grid, raw)))
            return -np.max(np.abs(sp.leray_project(pu).coeffs - pu.coeffs)) / np.max(np.abs(pu.coeffs))

        def self_adjoint(s):
            rng = np.random.default_rng(self.seed + s)
            u = sp.to_spectral(PhysicalVecField(grid, rng.standard_normal((2, grid.n, grid.n))))
            v = sp.to_spectral(PhysicalVecField(grid, rng.standard_normal((2, grid.n, grid.n))))
            gap = sp.inner_product(sp.leray_project(u), v) - sp.inner_product(u, sp.leray_project(v))
            return -abs(gap) / (sp.norm(u) * sp.norm(v))

        def poincare(s):
            u = self._field(grid, s)
            return (sp.inner_product(u, u, "V") - grid.lambda1 * sp.inner_product(u, u)) / sp.inner_product(u, u, "V")

        def stokes(s):
            u = self._field(grid, s)
            return -abs(sp.inner_product(ops.stokes_A(u), u) - sp.norm(u, "V") ** 2) / sp.norm(u, "V") ** 2

        def vorticity(s):
            u = self._field(grid, s)
            curl = sp.quadrature(sp.vorticity(u) ** 2, grid)
            return -abs(curl - sp.norm(u, "V") ** 2) / sp.norm(u, "V") ** 2

        self._worst("transform_round_trip", round_trip, 1e-13)
        self._worst("parseval", parseval, 1e-12)
        self._worst("leray_divergence_free", projection, 1e-12)
        self._worst("leray_idempotent", idempotent, 1e-13)
        self._worst("leray_self_adjoint", self_adjoint, 1e-12)
        self._worst("poincare", poincare, 1e-14)
        self._worst("stokes_energy", stokes, 1e-12)
        self._worst("vorticity_enstrophy", vorticity, 1e-11)

    # -- operators ----------------------------------------------------------------

    def operator_checks(self):
        grid = self._grid()

        def triple(s):
            return self._field(grid, 3 * s), self._field(grid, 3 * s + 1), self._field(grid, 3 * s + 2)

        def b_skew(s):
            u, v, _ = triple(s)
            return -abs(ops.trilinear_b(u, v, v)) / (sp.norm(u, "L4") * sp.norm(v, "V") * sp.norm(v, "L4"))

        def b_swap(s):
            u, v, w = triple(s)
            scale = sp.norm(u, "L4") * sp.norm(v, "V") * sp.norm(w, "L4")
            return -abs(ops.trilinear_b(u, v, w) + ops.trilinear_b(u, w, v)) / scale

        def b_bound(s):
            u, v, w = triple(s)
            return ops.trilinear_bound_margin(u, v, w) / (sp.norm(u, "L4") * sp.norm(v, "V") * sp.norm(w, "L4"))

        def b_prime_duality(s):
            u, q, p = triple(s)
            lhs = sp.inner_product(ops.B_prime(u, q), p)
            rhs = sp.inner_product(q, ops.B_prime_adjoint(u, p))
            return -abs(lhs - rhs) / (abs(lhs) + abs(rhs) + 1e-300)

        self._worst("b_skew_symmetric", b_skew, 1e-11)
        self._worst("b_antisymmetric_swap", b_swap, 1e-11)
        self._worst("trilinear_bound", b_bound, 1e-12)
        self._worst("b_prime_adjoint_duality", b_prime_duality, 1e-11)

        for r in (1, 2, 3):
            rgrid = self._grid(r)

            def absorption_energy(s, r=r, rgrid=rgrid):
                u = self._field(rgrid, s)
                lhs = sp.inner_product(ops.absorption_C(u, r), u)
                rhs = sp.norm(u, "Lr1", r) ** (r + 1)
                return -abs(lhs - rhs) / rhs

            def positivity(s, r=r, rgrid=rgrid):
                u, v = self._field(rgrid, 2 * s), self._field(rgrid, 2 * s + 1)
                return ops.c_prime_positivity_margin(u, v, r) / (1 + sp.norm(u, "Lr1", r) ** (r + 1) + sp.norm(v, "Lr1", r) ** (r + 1))

            def monotone(s, r=r, rgrid=rgrid):
                u, v = self._field(rgrid, 2 * s), self._field(rgrid, 2 * s + 1)
                return ops.absorption_monotonicity_margin(u, v, r) / (1 + sp.norm(u - v, "Lr1", r) ** (r + 1))

            def difference(s, r=r, rgrid=rgrid):
                u, v = self._field(rgrid, 2 * s), self._field(rgrid, 2 * s + 1)
                return ops.absorption_difference_bound_margin(u, v, r) / (1 + sp.norm(u - v, "Lr1", r) ** (r + 1))

            self._worst(f"absorption_energy_r{r}", absorption_energy, 1e-10)
            self._worst(f"c_prime_positive_r{r}", positivity, 1e-12)
            self._worst(f"absorption_monotone_r{r}", monotone, 1e-10)
            self._worst(f"absorption_difference_bound_r{r}", difference, 1e-10)

        cubic_grid = self._grid(3)

        def taylor(s):
            u, v = self._field(cubic_grid, 2 * s), self._field(cubic_grid, 2 * s + 1)
            expansion = (ops.absorption_C(u, 3) + ops.C_prime(u, v, 3)
                         + 0.5 * ops.C_double_prime(u, v, v) + ops.absorption_C(v, 3))
            exact = ops.absorption_C(u + v, 3)
            return -sp.norm(exact - expansion) / sp.norm(exact)

        self._worst("cubic_taylor_identity", taylor, 1e-11)

        def g_energy(s):
            u = self._field(grid, s)
            p = self.params
            expected = (p.mu * sp.norm(u, "V") ** 2 + p.alpha * sp.norm(u) ** 2
                        + p.beta * sp.norm(u, "Lr1", p.r) ** (p.r + 1))
            return -abs(sp.inner_product(ops.G_apply(u, p), u) - expected) / expected

        def local(s):
            u, v = self._field(grid, 2 * s), self._field(grid, 2 * s + 1)
            margin = ops.monotonicity_check(u, v, self.params, "local")
            return margin / (1 + sp.norm(u - v, "V") ** 2)

        global_params = self.params if self.params.critical_monotone else CbfParams(mu=1.0, alpha=0.0, beta=1.0, r=3)

        def global_(s):
            u, v = self._field(cubic_grid, 2 * s), self._field(cubic_grid, 2 * s + 1)
            margin = ops.monotonicity_check(u, v, global_params, "global")
            return margin / (1 + sp.norm(u - v, "V") ** 2)

        self._worst("g_energy_identity", g_energy, 1e-10)
        self._worst("local_monotonicity", local, 1e-10)
        self._worst("global_monotonicity", global_, 1e-10,
                    detail=f"mu={global_params.mu}, beta={global_params.beta}")

        def fd_slope(apply, derivative):
            u, v = self._field(grid, 0), self._field(grid, 1)
            exact = derivative(u, v)
            errors = [sp.norm((apply(u + tau * v) - apply(u)) * (1.0 / tau) - exact) for tau in FD_TAUS]
            if max(errors) <= 1e-10 * sp.norm(exact):
                # derivative of a linear map: differences are exact up to roundoff
                return 0.0
            return loglog_slope(FD_TAUS, errors) - 0.9

        r = self.params.r
        self._record("c_prime_fd_slope", fd_slope(lambda x: ops.absorption_C(x, r), lambda x, y: ops.C_prime(x, y, r)),
                     0.0, "slope - 0.9")
        self._record("b_prime_fd_slope", fd_slope(lambda x: ops.convection_B(x, x), ops.B_prime), 0.0, "slope - 0.9")

    # -- solvers ------------------------------------------------------------------

    def solver_checks(self, T=0.05, dt=0.005):
        grid = self._grid()
        params = self.params
        u0 = self._field(grid, 0)
        forcing_field = sp.random_divfree_field(grid, self.seed + 100, norm_h=0.5)
        forcing = ForcingSpec(forcing_field)
        controls = FieldSeries.constant(sp.random_divfree_field(grid, self.seed + 101, norm_h=0.5), round(T / dt), dt)
        try:
            traj, ledger = solve_forward(u0, params, None, controls, forcing, T, dt, checkpoint_stride=3)
        except CbfError as e:
            logger.error(f"solver checks skipped: {str(e)}")
            self._record("forward_solve", -np.inf, 0.0, f"error: {e}")
            return
        self._record("energy_equality", -energy_equality_residual(traj, ledger), 1e-3)
        bound = apriori_bound_check(traj, ledger)
        self._record("apriori_bound", bound / max(ledger.bound_K_T, 1e-300), 1e-6)

        # single-mode decay: r = 1 makes the nonlinearity linear and B(u, u) vanishes
        decay_params = CbfParams(mu=params.mu, alpha=params.alpha, beta=0.5, r=1)
        shear = sp.shear_mode(GridSpec(self.n), 1.0)
        decay, _ = solve_forward(shear, decay_params, T=T, dt=dt)
        rate = decay_params.mu + decay_params.alpha + decay_params.beta
        exact = np.exp(-rate * T) * shear.coeffs
        error = np.max(np.abs(decay.final_state.coeffs - exact)) / np.max(np.abs(exact))
        self._record("decay_benchmark", -error, 1e-5)

        n_steps = traj.n_steps
        w0, w1 = self._field(grid, 5), self._field(grid, 6)
        g0 = FieldSeries.constant(self._field(grid, 7), n_steps, dt)
        g1 = FieldSeries.constant(self._field(grid, 8), n_steps, dt)
        combined = solve_linearized(traj, params, 2.0 * w0 - 3.0 * w1, 2.0 * g0 - 3.0 * g1).as_series().coeffs
        parts = (2.0 * solve_linearized(traj, params, w0, g0).as_series().coeffs
                 - 3.0 * solve_linearized(traj, params, w1, g1).as_series().coeffs)
        self._record("linearized_superposition", -np.max(np.abs(combined - parts)) / np.max(np.abs(parts)), 1e-11)

        for r in (1, 2, 3):
            self._worst(f"discrete_duality_r{r}", lambda s, r=r: -self._duality_defect(r, s, T, dt), 1e-11)

        self._gradient_checks(grid, u0, traj, T, dt)

    def _duality_defect(self, r, s, T, dt):
        """Duality defect of one random instance, state run driven through a low-pass D."""
        grid = self._grid(r)
        params = CbfParams(mu=self.params.mu, alpha=self.params.alpha, beta=self.params.beta, r=r)
        n_steps = round(T / dt)
        control_op = ControlOperatorD.low_pass(grid, 2)
        controls = FieldSeries.constant(sp.random_divfree_field(grid, self.seed + 300 + s, norm_h=0.5), n_steps, dt)
        traj, _ = solve_forward(self._field(grid, 0), params, control_op, controls, None, T, dt, checkpoint_stride=3)
        k = 10 * s
        direction = FieldSeries.constant(self._field(grid, 5 + k), n_steps, dt)
        g = FieldSeries(grid, dt, control_op.apply_coeffs(direction.coeffs))
        spec = AdjointSpec(self._field(grid, 6 + k), FieldSeries.constant(self._field(grid, 7 + k), n_steps, dt))
        return duality_check(traj, params, self._field(grid, 8 + k), g, spec)

    def _gradient_checks(self, grid, u0, traj, T, dt):
        params = self.params
        n_steps = traj.n_steps
        target = FieldSeries(grid, dt, all_states(traj))
        cost = CostConfig(ControlOperatorD.low_pass(grid, 3), target * 0.5, None)
        service = OptimalControlService(ControlProblem(params, u0, cost, T, dt))
        U = FieldSeries.constant(self._field(grid, 11), n_steps, dt)
        tau = 1e-4
        _, grad, adj = service.cost_and_gradient(U.coeffs)

        def distributed(s):
            direction = FieldSeries.constant(sp.random_divfree_field(grid, self.seed + 200 + s), n_steps, dt)
            exact = service.dot(grad, direction.coeffs)
            plus = service.cost_and_gradient((U + tau * direction).coeffs)[0]
            minus = service.cost_and_gradient((U - tau * direction).coeffs)[0]
            return -abs(exact - (plus - minus) / (2 * tau)) / abs(exact)

        self._worst("distributed_gradient_fd", distributed, 1e-7)

        residual = service.pontryagin_residual(U, adj.p_series)
        identity = service.dot(grad, grad) / (4 * cost.w_control)
        self._record("pontryagin_identity", -abs(residual - identity) / identity, 1e-10)

        assim = AssimilationService(params)
        cfg = AssimConfig(target, target.at(n_steps), w_enstrophy=0.5)
        base = self._field(grid, 13)
        assim_grad = assim.gradient(cfg, base)

        def initial_data(s):
            perturb = sp.random_divfree_field(grid, self.seed + 250 + s)
            exact = sp.inner_product(assim_grad, perturb)
            plus = assim.evaluate_cost(cfg, base + tau * perturb)
            minus = assim.evaluate_cost(cfg, base - tau * perturb)
            return -abs(exact - (plus - minus) / (2 * tau)) / abs(exact)

        self._worst("initial_data_gradient_fd", initial_data, 1e-7)

    # -- entry point ----------------------------------------------------------------

    def run(self) -> List[CheckResult]:
        start_time = time.perf_counter()
        logger.info(f"Verification: n={self.n}, samples={self.samples}, params={self.params.as_dict()}")
        self.results = []
        self.spectral_checks()
        self.operator_checks()
        self.solver_checks()
        failed = [c.name for c in self.results if not c.passed]
        logger.info(f"Verification finished in {time.perf_counter() - start_time:.2f}s: "
                    f"{len(self.results) - len(failed)}/{len(self.results)} passed")
        if failed:
            logger.warning(f"Failed checks: {', '.join(failed)}")
        return self.results
