from __future__ import annotations

import dataclasses
import logging
import math
from typing import Dict, List, Optional, TextIO, Tuple, Type, TYPE_CHECKING

import numpy as np

from nonlocalreg import exceptions
from nonlocalreg.functions import GridFunction, power_fixture, sample_grid
from nonlocalreg.lemmas import (
    bump_samples,
    compute_constants,
    derive_constants,
    find_eta_r,
    holder_constant,
    validate_growth,
    verify_bump_bound,
    verify_lemma_integrals,
)
from nonlocalreg.levy import (
    ExponentProfile,
    check_H,
    default_r0,
    levy_density_sbm,
    parse_bernstein,
    stable_density,
    verify_almost_increasing,
    verify_nu_bounds,
)
from nonlocalreg.probe import fit_holder, holder_seminorm_report, oscillation_profile, seminorm_refinement
from nonlocalreg.report_log import Record, check, write_profile_csv, write_solution_csv
from nonlocalreg.scaling import check_weak_scaling, default_s_grid, default_t_grid
from nonlocalreg.setup_run import kernel_from_config, problem_from_settings
from nonlocalreg.solver import solve

if TYPE_CHECKING:
    from nonlocalreg.engine import Engine

logger = logging.getLogger(__name__)

GROWTH_VALIDATION_SAMPLES = 40
MIN_R_SQUARED = 0.9
MIN_ALPHA = 0.05
FIXTURE_ALPHA_TOLERANCE = 0.01
STABLE_DENSITY_TOLERANCE = 1e-6
ALMOST_INCREASING_SAMPLES = 1000
REFINEMENT_TOLERANCE = 0.2


def info(name: str, value: float, **inputs) -> Record:
    """A reported quantity that carries no inequality."""
    return Record(name, inputs, float(value), None, None, True)


class CommandHandler:
    name = "<command>"

    def __init__(self, engine: Engine):
        self.engine = engine
        self.settings = engine.settings

    def handle_command(self) -> None:
        """Run the pipeline, write the reports and raise CheckFailed on any failed record."""
        self.perform()
        self.engine.log_step("checks", f"{len(self.engine.record_log.records)} records")
        self.engine.emit("report")
        self.engine.save_manifest()
        failures = self.engine.record_log.failures
        if failures:
            raise exceptions.CheckFailed(len(failures))

    def perform(self) -> None:
        raise NotImplementedError()

    def on_render(self, stream: TextIO, only_failures: bool = False) -> None:
        self.engine.record_log.render(stream, only_failures=only_failures)
        counts = self.engine.record_log.pass_counts
        stream.write(f"{self.name}: {counts['passed']} passed, {counts['failed']} failed\n")


class ConstantsHandler(CommandHandler):
    """Compute the constant chain C1, C2, C3, theta, gamma, alpha of a kernel and class."""
    name = "constants"

    def perform(self) -> None:
        kspec, cls = kernel_from_config(self.settings)
        eta1, r1 = self.settings.eta1, self.settings.r1
        if eta1 is not None and r1 is not None:
            consts = compute_constants(kspec, cls, eta1, r1)
        else:
            consts = derive_constants(kspec, cls, self.settings.quadrature)
        self.engine.log_step("constants", repr(kspec))
        values = consts.as_dict()
        values["holder_constant"] = holder_constant(consts)
        for name, value in values.items():
            self.engine.record_log.add_record(info(f"constant:{name}", value, kernel=kspec.name))
        self.engine.write_json("constants.json", {"kernel": repr(kspec), "class": repr(cls), **values})


class VerifyLemmasHandler(CommandHandler):
    """Certify the scaling, moment, wedge, growth and bump inequalities."""
    name = "verify-lemmas"

    def perform(self) -> None:
        settings = self.settings
        engine = self.engine
        kspec, cls = kernel_from_config(settings)
        fspec = kspec.scaling
        cfg = settings.quadrature
        log = engine.record_log

        scaling = check_weak_scaling(fspec)
        log.add_record(Record(
            "weak_scaling", {"profile": repr(fspec), "witness": scaling.witness},
            None, None, min(scaling.worst_lower_margin, scaling.worst_upper_margin), scaling.passed,
        ))
        log.add_record(Record("monotone", {"profile": repr(fspec)}, None, None, None, scaling.monotone))

        r_samples = fspec.r0 * np.geomspace(1e-3, 1.0, settings.r_samples, endpoint=False)
        log.extend(verify_lemma_integrals(fspec, kspec, r_samples, settings.x_samples, cfg=cfg).records)
        engine.log_step("integrals", f"{len(r_samples)} radii")

        for epsilon in settings.epsilons:
            growth = find_eta_r(kspec, epsilon, cfg)
            log.add_record(check("growth_eta", growth.eta_eps, fspec.delta1, epsilon=epsilon))
            log.extend(growth.records)
            fresh = growth.r_eps * 10.0 ** engine.rng.uniform(-3.0, 0.0, GROWTH_VALIDATION_SAMPLES)
            log.extend(validate_growth(kspec, growth, np.sort(fresh), cfg).records)
        engine.log_step("growth", f"{len(settings.epsilons)} epsilons")

        try:
            cls.check_case()
        except exceptions.CaseMismatch as exc:
            logger.warning("bump bound skipped: %s", exc)
            return
        samples = bump_samples(engine.rng, settings.bump_samples, kspec.d, fspec.r0)
        log.extend(verify_bump_bound(cls, samples, cfg=cfg).records)
        engine.log_step("bump", f"{len(samples)} samples")


class SolveHandler(CommandHandler):
    """Solve the configured Dirichlet problem and export the solution."""
    name = "solve"

    def perform(self) -> None:
        pspec = problem_from_settings(self.settings)
        solution = solve(pspec)
        self.engine.log_step("solve", f"{solution.iterations} iterations")
        self.engine.record_log.add_record(check(
            "solver_residual", solution.residual, pspec.tolerance,
            equation=pspec.equation.value, iterations=solution.iterations, unknowns=solution.stencil.N,
        ))
        self.engine.register(write_solution_csv(self.engine.path("solution.csv"), solution.nodes, solution.inner))
        self.engine.write_json("solve.json", solution.summary())


class ProbeHandler(CommandHandler):
    """Measure oscillation decay and fit Hölder exponents."""
    name = "probe"

    def _fixtures(self) -> Tuple[List[GridFunction], Optional[List[GridFunction]]]:
        """One grid function per probe center, and its h/2 counterpart for solved fixtures."""
        settings = self.settings
        centers = settings.probe_centers
        kind, _, arg = settings.fixture.partition(":")
        if kind == "solve":
            pspec = problem_from_settings(settings)
            u = solve(pspec).u
            fine = None
            if settings.probe_refine:
                fine = [solve(dataclasses.replace(pspec, h=pspec.h / 2)).u] * len(centers)
            return [u] * len(centers), fine
        if kind == "power":
            try:
                exponent = float(arg)
            except ValueError as exc:
                raise exceptions.ConfigError(f"bad power fixture {settings.fixture!r}") from exc
            h, s, d = settings.probe_h, settings.probe_s, settings.d
            m = int(math.ceil(1.5 * s / h))
            return [sample_grid(power_fixture(c, exponent, d), c - m * h, h, (2 * m + 1,) * d)
                    for c in centers], None
        raise exceptions.ConfigError(f"unknown probe fixture {settings.fixture!r}")

    def perform(self) -> None:
        settings = self.settings
        engine = self.engine
        log = engine.record_log
        kind, _, arg = settings.fixture.partition(":")
        functions, refined = self._fixtures()
        for i, (center, u) in enumerate(zip(settings.probe_centers, functions)):
            where = {"center": center.tolist()}
            profile = oscillation_profile(u, center, settings.probe_s, settings.probe_levels,
                                          settings.solver_tolerance)
            engine.register(write_profile_csv(engine.path(f"profile_{i}.csv"), profile.radii, profile.osc))
            log.add_record(Record("profile_monotone", where, None, None, None, profile.monotone))
            try:
                fit = fit_holder(profile)
            except exceptions.PreconditionError as exc:
                logger.warning("no Hölder fit at %s: %s", where["center"], exc)
                log.add_record(Record("holder_fit", {**where, "status": "too_few_levels"}, None, None, None, False))
                continue
            if fit.flat:
                log.add_record(Record("holder_fit", {**where, "status": "flat"}, None, None, None, True))
                continue
            log.add_record(check("holder_r_squared", MIN_R_SQUARED, fit.r_squared, **where))
            log.add_record(check("holder_alpha", MIN_ALPHA, fit.alpha_emp, **where))
            if kind == "power":
                log.add_record(check("holder_exponent", abs(fit.alpha_emp - float(arg)),
                                     FIXTURE_ALPHA_TOLERANCE, **where, alpha_emp=fit.alpha_emp))
            seminorm = holder_seminorm_report(u, center, settings.probe_s, fit.alpha_emp)
            log.add_record(info("holder_seminorm", seminorm.seminorm, **where,
                                pairs=seminorm.pairs, stride=seminorm.stride))
            log.add_record(info("holder_constant_implied", seminorm.bound_constant, **where))
            if refined is not None:
                study = seminorm_refinement(u, refined[i], center, settings.probe_s, fit.alpha_emp)
                log.add_record(check("holder_constant_refinement", study.change, REFINEMENT_TOLERANCE,
                                     **where, coarse=study.coarse.bound_constant,
                                     fine=study.fine.bound_constant))
        engine.log_step("probe", f"{len(functions)} centers")


class LevyHandler(CommandHandler):
    """Fit scaling exponents and check jump densities of a subordinate Brownian motion."""
    name = "levy"

    def perform(self) -> None:
        settings = self.settings
        log = self.engine.record_log
        bspec = parse_bernstein(settings.levy_family, settings.levy_params)
        d, n = settings.levy_d, settings.levy_samples
        r0 = default_r0(bspec)
        profile = ExponentProfile(bspec, r0=r0)

        fit = check_H(profile, default_t_grid(r0), default_s_grid())
        exponents = {"a1": fit.a1, "a2": fit.a2, "delta1": fit.delta1, "delta2": fit.delta2, "r0": r0}
        log.add_record(Record("scaling_fit", {"family": bspec.family, **exponents}, None, None, None, fit.passed))
        log.extend(verify_almost_increasing(profile, np.geomspace(1e-3, 1e3, ALMOST_INCREASING_SAMPLES) / r0))

        summary: Dict[str, object] = {"family": bspec.family, "params": dict(bspec.params), **exponents}
        radii = r0 * np.geomspace(1e-3, 1.0, n, endpoint=False)
        if not bspec.has_density:
            logger.warning("%r has no explicit Lévy measure density; density checks skipped", bspec)
            log.add_record(Record("nu_ratio", {"family": bspec.family, "status": "unsupported"},
                                  None, None, None, True))
        else:
            nu = verify_nu_bounds(bspec, radii, d=d, r0=r0)
            log.extend(nu.records)
            summary.update(min_ratio=nu.min_ratio, max_ratio=nu.max_ratio, spread=nu.spread,
                           psi_change=nu.psi_change)
            if bspec.family == "stable":
                for rho in radii[:: max(1, n // 10)]:
                    x = np.r_[rho, np.zeros(d - 1)]
                    ratio = levy_density_sbm(bspec, x, d) / stable_density(bspec.alpha, d, x)
                    log.add_record(check("stable_density", abs(ratio - 1.0), STABLE_DENSITY_TOLERANCE,
                                         r=float(rho)))
        self.engine.log_step("levy", repr(bspec))
        self.engine.write_json("levy.json", summary)


HANDLERS: Dict[str, Type[CommandHandler]] = {
    handler.name: handler
    for handler in (ConstantsHandler, VerifyLemmasHandler, SolveHandler, ProbeHandler, LevyHandler)
}
