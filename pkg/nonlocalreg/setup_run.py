"""Handle the loading of run configurations and the initialization of runs."""
from __future__ import annotations

import configparser
import hashlib
import io
import logging
from typing import Callable, Dict, List, Optional, Tuple, TypeVar

import numpy as np

from nonlocalreg import exceptions
from nonlocalreg.engine import Engine
from nonlocalreg.kernel import (
    ExtremalClass,
    KernelSpec,
    Multiplier,
    constant_multiplier,
    parse_tail,
    sine_multiplier,
)
from nonlocalreg.kinds import EquationKind, ReportFormat
from nonlocalreg.levy import BernsteinSpec, parse_bernstein
from nonlocalreg.quadrature import QuadratureConfig
from nonlocalreg.scaling import (
    BernsteinScaling,
    LogPerturbedScaling,
    MixedScaling,
    PowerScaling,
    ScalingFunction,
)
from nonlocalreg.solver import ProblemSpec, exterior_from_text
from nonlocalreg.stencil import Ball, Box

logger = logging.getLogger(__name__)

T = TypeVar("T")

SECTIONS = ("kernel", "class", "grid", "quadrature", "lemmas", "probe", "levy")
SCALING_CONSTANTS = ("a1", "a2", "delta1", "delta2")

_MISSING = object()


def _new_parser() -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str  # Lambda and lambda are different keys
    return parser


def parse_params(text: str) -> Dict[str, float]:
    """'alpha=0.5, p=1' -> {'alpha': 0.5, 'p': 1.0}"""
    params = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        name, sep, value = item.partition("=")
        if not sep:
            raise exceptions.ConfigError(f"parameter {item!r} is not of the form name=value")
        try:
            params[name.strip()] = float(value)
        except ValueError as exc:
            raise exceptions.ConfigError(f"parameter {name.strip()!r} is not a number: {value!r}") from exc
    return params


def format_params(params: Dict[str, float]) -> str:
    return ", ".join(f"{k}={v!r}" for k, v in params.items())


def parse_floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise exceptions.ConfigError(f"expected a list of numbers, got {text!r}") from exc


def parse_points(text: str) -> List[np.ndarray]:
    """Points separated by ';', coordinates by ',' or spaces."""
    return [np.array(parse_floats(chunk)) for chunk in text.split(";") if chunk.strip()]


def parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "yes", "true", "on"):
        return True
    if value in ("0", "no", "false", "off"):
        return False
    raise exceptions.ConfigError(f"expected a boolean, got {text!r}")


class Settings:
    """Typed view of a run configuration."""

    def __init__(self, parser: Optional[configparser.ConfigParser] = None, source: str = "<memory>"):
        self.parser = _new_parser() if parser is None else parser
        self.source = source
        self._tolerance_scale = 1.0
        for section in SECTIONS:
            if not self.parser.has_section(section):
                self.parser.add_section(section)

    def get(self, section: str, key: str, convert: Callable[[str], T] = str, default=_MISSING) -> T:
        if not self.parser.has_option(section, key):
            if default is _MISSING:
                raise exceptions.ConfigError(f"{self.source}: missing [{section}] {key}")
            return default
        raw = self.parser.get(section, key)
        try:
            return convert(raw)
        except exceptions.ConfigError as exc:
            raise exceptions.ConfigError(f"{self.source}: [{section}] {key}: {exc}") from exc
        except ValueError as exc:
            raise exceptions.ConfigError(f"{self.source}: [{section}] {key} = {raw!r}: {exc}") from exc

    def set(self, section: str, key: str, value) -> None:
        if not self.parser.has_section(section):
            self.parser.add_section(section)
        self.parser.set(section, key, value if isinstance(value, str) else repr(value))

    def text(self) -> str:
        buffer = io.StringIO()
        self.parser.write(buffer)
        return buffer.getvalue()

    @property
    def sha256(self) -> str:
        """Hash of the canonical serialization, stable across comment and spacing edits."""
        return hashlib.sha256(self.text().encode("utf-8")).hexdigest()

    @property
    def tolerance_scale(self) -> float:
        return self._tolerance_scale

    @tolerance_scale.setter
    def tolerance_scale(self, new_val: float) -> None:
        if new_val <= 0:
            raise exceptions.ConfigError(f"--tolerance-scale must be positive, got {new_val}")
        self._tolerance_scale = float(new_val)

    # [kernel]

    @property
    def d(self) -> int:
        d = self.get("kernel", "d", int, 1)
        if d not in (1, 2):
            raise exceptions.ConfigError(f"[kernel] d must be 1 or 2, got {d}")
        return d

    @property
    def kernel_family(self) -> str:
        return self.get("kernel", "family", str, "power").strip()

    @property
    def kernel_params(self) -> Dict[str, float]:
        return self.get("kernel", "params", parse_params, {})

    @property
    def r0(self) -> float:
        return self.get("kernel", "r0", float, 1.0)

    @property
    def scaling_overrides(self) -> Dict[str, float]:
        return {k: self.get("kernel", k, float) for k in SCALING_CONSTANTS if self.parser.has_option("kernel", k)}

    @property
    def tail(self) -> str:
        return self.get("kernel", "tail", str, "power_continuation")

    @property
    def multiplier(self) -> str:
        return self.get("kernel", "multiplier", str, "none").strip()

    # [class]

    @property
    def lam(self) -> float:
        return self.get("class", "lambda", float, 1.0)

    @property
    def Lam(self) -> float:
        return self.get("class", "Lambda", float, 1.0)

    @property
    def symmetric(self) -> bool:
        return self.get("class", "symmetric", parse_bool, False)

    # [quadrature]

    @property
    def quadrature(self) -> QuadratureConfig:
        default = QuadratureConfig()
        cfg = QuadratureConfig(
            abs_tol=self.get("quadrature", "abs_tol", float, default.abs_tol),
            rel_tol=self.get("quadrature", "rel_tol", float, default.rel_tol),
            max_panels=self.get("quadrature", "max_panels", int, default.max_panels),
            inner_fraction=self.get("quadrature", "inner_fraction", float, default.inner_fraction),
            angular_nodes=self.get("quadrature", "angular_nodes", int, default.angular_nodes),
        )
        return cfg.scaled(self.tolerance_scale)

    # [grid]

    @property
    def shape(self) -> str:
        shape = self.get("grid", "shape", str, "ball").strip()
        if shape not in ("ball", "box"):
            raise exceptions.ConfigError(f"[grid] shape must be ball or box, got {shape!r}")
        return shape

    @property
    def center(self) -> np.ndarray:
        center = self.get("grid", "center", lambda t: np.array(parse_floats(t)), np.zeros(self.d))
        if center.shape != (self.d,):
            raise exceptions.ConfigError(f"[grid] center needs {self.d} coordinate(s)")
        return center

    @property
    def radius(self) -> float:
        return self.get("grid", "radius", float, 0.5)

    @property
    def h(self) -> float:
        return self.get("grid", "h", float, 0.025)

    @property
    def equation(self) -> EquationKind:
        return self.get("grid", "equation", EquationKind, EquationKind.LINEAR)

    @property
    def exterior(self) -> str:
        return self.get("grid", "exterior", str, "constant:1")

    @property
    def bellman_alphas(self) -> List[float]:
        return self.get("grid", "bellman_alphas", parse_floats, [self.lam, self.Lam])

    @property
    def solver_tolerance(self) -> float:
        return self.get("grid", "tolerance", float, 1e-8)

    @property
    def max_iterations(self) -> int:
        return self.get("grid", "max_iterations", int, 50)

    # [lemmas]

    @property
    def r_samples(self) -> int:
        return self.get("lemmas", "r_samples", int, 100)

    @property
    def x_samples(self) -> Optional[List[np.ndarray]]:
        return self.get("lemmas", "x_samples", parse_points, None)

    @property
    def epsilons(self) -> List[float]:
        return self.get("lemmas", "epsilons", parse_floats, [1e-1, 1e-2, 1e-3])

    @property
    def bump_samples(self) -> int:
        return self.get("lemmas", "bump_samples", int, 50)

    @property
    def eta1(self) -> Optional[float]:
        return self.get("lemmas", "eta1", float, None)

    @property
    def r1(self) -> Optional[float]:
        return self.get("lemmas", "r1", float, None)

    # [probe]

    @property
    def fixture(self) -> str:
        return self.get("probe", "fixture", str, "solve").strip()

    @property
    def probe_centers(self) -> List[np.ndarray]:
        centers = self.get("probe", "centers", parse_points, [np.zeros(self.d)])
        if any(c.shape != (self.d,) for c in centers):
            raise exceptions.ConfigError(f"[probe] centers need {self.d} coordinate(s) each")
        return centers

    @property
    def probe_s(self) -> float:
        return self.get("probe", "s", float, 0.2)

    @property
    def probe_levels(self) -> int:
        return self.get("probe", "levels", int, 4)

    @property
    def probe_h(self) -> float:
        return self.get("probe", "h", float, 1e-3)

    @property
    def probe_refine(self) -> bool:
        return self.get("probe", "refine", parse_bool, True)

    # [levy]

    @property
    def levy_family(self) -> str:
        return self.get("levy", "family", str, "stable").strip()

    @property
    def levy_params(self) -> Dict[str, float]:
        return self.get("levy", "params", parse_params, {"alpha": 1.0})

    @property
    def levy_d(self) -> int:
        return self.get("levy", "d", int, 1)

    @property
    def levy_samples(self) -> int:
        return self.get("levy", "samples", int, 40)


def load_settings(filename: str) -> Settings:
    parser = _new_parser()
    try:
        with open(filename) as f:
            parser.read_file(f, source=filename)
    except OSError as exc:
        raise exceptions.ConfigError(f"cannot read {filename}: {exc}") from exc
    except configparser.Error as exc:
        raise exceptions.ConfigError(f"malformed configuration {filename}: {exc}") from exc
    unknown = [s for s in parser.sections() if s not in SECTIONS]
    if unknown:
        raise exceptions.ConfigError(f"{filename}: unknown section(s) {', '.join(unknown)}")
    return Settings(parser, source=filename)


def _scaling(family: str, params: Dict[str, float], r0: float,
             bernstein: Optional[BernsteinSpec]) -> ScalingFunction:
    try:
        if family == "power":
            return PowerScaling(params["alpha"], r0=r0)
        if family == "log_perturbed":
            return LogPerturbedScaling(params["alpha"], params["p"], r0=r0)
        if family == "mixed":
            return MixedScaling(params["alpha"], params["beta"], r0=r0)
        if family == "bernstein_induced":
            return BernsteinScaling(bernstein, r0=r0)
    except KeyError as exc:
        raise exceptions.ConfigError(f"[kernel] family {family} needs parameter {exc.args[0]}") from exc
    except exceptions.PreconditionError as exc:
        raise exceptions.ConfigError(f"[kernel] {exc}") from exc
    raise exceptions.ConfigError(f"unknown kernel family {family!r}")


def _multiplier(text: str, lam: float, Lam: float) -> Optional[Multiplier]:
    name, _, arg = text.partition(":")
    if name == "none":
        return None
    if name == "sine":
        return sine_multiplier(lam, Lam)
    if name == "constant":
        try:
            return constant_multiplier(float(arg))
        except ValueError as exc:
            raise exceptions.ConfigError(f"bad multiplier level {arg!r}") from exc
    raise exceptions.ConfigError(f"unknown multiplier {text!r}")


def kernel_from_config(settings: Settings) -> Tuple[KernelSpec, ExtremalClass]:
    """The kernel and extremal class of the [kernel] and [class] sections."""
    family = settings.kernel_family
    params = settings.kernel_params
    bernstein = None
    if family == "bernstein_induced":
        bernstein = parse_bernstein(settings.get("kernel", "bernstein"), params)
    fspec = _scaling(family, params, settings.r0, bernstein)
    overrides = settings.scaling_overrides
    if overrides:
        fspec = fspec.with_certificate(**overrides)
    lam, Lam = settings.lam, settings.Lam
    try:
        kspec = KernelSpec(
            fspec,
            d=settings.d,
            tail=parse_tail(settings.tail),
            multiplier=_multiplier(settings.multiplier, lam, Lam),
            name=settings.get("kernel", "name", str, family),
        )
        cls = ExtremalClass(lam, Lam, settings.symmetric, base=kspec)
    except exceptions.PreconditionError as exc:
        raise exceptions.ConfigError(str(exc)) from exc
    return kspec, cls


def kernel_to_config(kspec: KernelSpec, cls: ExtremalClass) -> Settings:
    """Serialize a kernel and its class as the [kernel] and [class] sections."""
    fspec = kspec.scaling
    settings = Settings()
    params = dict(fspec.params)
    if isinstance(fspec, BernsteinScaling):
        settings.set("kernel", "bernstein", fspec.bspec.family)
        params = dict(fspec.bspec.params)
    settings.set("kernel", "family", fspec.family)
    settings.set("kernel", "name", kspec.name)
    settings.set("kernel", "params", format_params(params))
    settings.set("kernel", "d", kspec.d)
    settings.set("kernel", "r0", fspec.r0)
    for name in SCALING_CONSTANTS:
        settings.set("kernel", name, getattr(fspec, name))
    settings.set("kernel", "tail", kspec.tail.describe())
    settings.set("kernel", "multiplier", "none" if kspec.multiplier is None else kspec.multiplier.name)
    settings.set("class", "lambda", cls.lam)
    settings.set("class", "Lambda", cls.Lam)
    settings.set("class", "symmetric", "true" if cls.symmetric else "false")
    return settings


def domain_from_config(settings: Settings):
    if settings.shape == "ball":
        return Ball(settings.center, settings.radius)
    return Box(settings.center, settings.radius)


def problem_from_settings(settings: Settings) -> ProblemSpec:
    kspec, cls = kernel_from_config(settings)
    domain = domain_from_config(settings)
    equation = settings.equation
    kernels: List[KernelSpec] = []
    inf_kernels: List[KernelSpec] = []
    try:
        if equation is EquationKind.LINEAR:
            kernels = [kspec]
        elif equation in (EquationKind.BELLMAN_MAX, EquationKind.BELLMAN_MIN, EquationKind.ISAACS):
            kernels = [cls.member(level) for level in settings.bellman_alphas]
            if equation is EquationKind.ISAACS:
                inf_kernels = list(reversed(kernels))
        return ProblemSpec(
            domain=domain,
            h=settings.h,
            exterior=exterior_from_text(settings.exterior, domain),
            equation=equation,
            kernels=kernels,
            inf_kernels=inf_kernels,
            cls=cls,
            tolerance=settings.solver_tolerance,
            max_iterations=settings.max_iterations,
            cfg=settings.quadrature,
        )
    except exceptions.PreconditionError as exc:
        raise exceptions.ConfigError(str(exc)) from exc


def new_run(settings: Settings, out_dir: str, command: str, seed: int = 0,
            fmt: ReportFormat = ReportFormat.JSON) -> Engine:
    """Return a fresh run as an Engine instance."""
    engine = Engine(settings, out_dir, seed=seed, fmt=fmt, command=command)
    logger.info("run %s on %s (config %s)", command, settings.source, settings.sha256[:12])
    return engine
