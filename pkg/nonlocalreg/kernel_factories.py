import copy
from typing import Dict, List

from nonlocalreg.kernel import KernelSpec, Truncate, ExponentialDamping
from nonlocalreg.scaling import (
    LogPerturbedScaling,
    MixedScaling,
    PowerScaling,
    ScalingFunction,
)

# Prototypes; hand out copies through `get`.

power_half = KernelSpec(
    PowerScaling(0.5),
    name="power_0.5",
)
power_three_halves = KernelSpec(
    PowerScaling(1.5),
    name="power_1.5",
)
unit_power = KernelSpec(
    PowerScaling(1.0),
    name="power_1",
)
# the headline kernel |z|^(-d-1) ln(1/|z|) near the diagonal
log_perturbed = KernelSpec(
    LogPerturbedScaling(1.0, 1.0),
    name="log_perturbed_1_1",
)
mixed = KernelSpec(
    MixedScaling(1.5, 0.5),
    name="mixed_1.5_0.5",
)
# tail mass exactly 1: 2 * int_1^(16/9) rho^-1.5 drho = 4 * (1 - 3/4)
unit_mass_example = KernelSpec(
    PowerScaling(0.5),
    tail=Truncate(16.0 / 9.0),
    name="power_0.5_unit_mass",
)
damped = KernelSpec(
    PowerScaling(1.5),
    tail=ExponentialDamping(1.0),
    name="power_1.5_damped",
)

KERNELS: Dict[str, KernelSpec] = {
    k.name: k for k in (power_half, power_three_halves, unit_power, log_perturbed, mixed,
                        unit_mass_example, damped)
}


def get(name: str) -> KernelSpec:
    return copy.deepcopy(KERNELS[name])


def library_scalings() -> List[ScalingFunction]:
    """The four profiles every certificate sweeps over."""
    return [copy.deepcopy(k.scaling) for k in (power_half, power_three_halves, log_perturbed, mixed)]


def fractional(alpha: float, d: int = 1, r0: float = 1.0) -> KernelSpec:
    """|z|^(-d-alpha) everywhere: the power profile with its power continuation."""
    return KernelSpec(PowerScaling(alpha, r0=r0), d=d, name=f"fractional_{alpha:g}")


def with_dimension(kspec: KernelSpec, d: int) -> KernelSpec:
    clone = copy.deepcopy(kspec)
    clone.d = d
    clone._tail_mass = None
    return clone
