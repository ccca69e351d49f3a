"""
Observable Transport Lab Presets
Named initial conditions and the listing shown by `lab presets`
"""

from dataclasses import dataclass
from typing import Callable, Dict, Tuple

import numpy as np

from app.errors import PresetError
from app.utils.characteristics import SmoothIC
from app.utils.kernels import KERNEL_PRESETS


Profile = Callable[[np.ndarray], np.ndarray]


# ============================================================================
# DATA CLASSES
# ============================================================================

@dataclass(frozen=True)
class InitialPreset:
    """Velocity profile family (plus u_shift); density is rho + rho_bump * exp(-x^2) for every preset"""
    name: str
    description: str
    parameters: Tuple[str, ...]
    smooth: bool
    build: Callable[..., Tuple[Profile, Profile]]   # params -> (u0, u0')

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'description': self.description,
            'parameters': list(self.parameters),
            'smooth': self.smooth,
        }


# ============================================================================
# PROFILES
# ============================================================================

def _step(u_l: float, u_r: float, **_) -> Tuple[Profile, Profile]:
    return (lambda x: np.where(np.asarray(x) < 0.0, u_l, u_r).astype(float),
            lambda x: np.zeros_like(np.asarray(x, dtype=float)))


def _smoothed_step(u_l: float, u_r: float, width: float, **_) -> Tuple[Profile, Profile]:
    jump = u_l - u_r

    def u0(x):
        return u_r + jump * (1.0 - np.tanh(np.asarray(x) / width)) / 2.0

    def du0(x):
        return -jump / (2.0 * width) / np.cosh(np.asarray(x) / width) ** 2

    return u0, du0


def _minus_tanh(amplitude: float, width: float, **_) -> Tuple[Profile, Profile]:
    return (lambda x: -amplitude * np.tanh(np.asarray(x) / width),
            lambda x: -amplitude / width / np.cosh(np.asarray(x) / width) ** 2)


def _minus_sin(amplitude: float, width: float, **_) -> Tuple[Profile, Profile]:
    return (lambda x: -amplitude * np.sin(np.asarray(x) / width),
            lambda x: -amplitude / width * np.cos(np.asarray(x) / width))


def _bump(amplitude: float, width: float, **_) -> Tuple[Profile, Profile]:
    def u0(x):
        return amplitude * np.exp(-(np.asarray(x) / width) ** 2)

    def du0(x):
        x = np.asarray(x)
        return -2.0 * x / width ** 2 * amplitude * np.exp(-(x / width) ** 2)

    return u0, du0


INITIAL_PRESETS: Dict[str, InitialPreset] = {
    preset.name: preset for preset in (
        InitialPreset('step', 'u0 = u_l for x < 0, u_r otherwise', ('u_l', 'u_r'), False, _step),
        InitialPreset('smoothed-step', 'u0 = u_r + (u_l - u_r)(1 - tanh(x/width))/2',
                      ('u_l', 'u_r', 'width'), True, _smoothed_step),
        InitialPreset('-tanh', 'u0 = -amplitude tanh(x/width)', ('amplitude', 'width'), True, _minus_tanh),
        InitialPreset('-sin', 'u0 = -amplitude sin(x/width)', ('amplitude', 'width'), True, _minus_sin),
        InitialPreset('bump', 'u0 = amplitude exp(-(x/width)^2)', ('amplitude', 'width'), True, _bump),
    )
}


# ============================================================================
# LOOKUP
# ============================================================================

def initial_preset(name: str) -> InitialPreset:
    try:
        return INITIAL_PRESETS[name]
    except KeyError:
        raise PresetError(
            f"unknown initial-condition preset '{name}'; see `lab presets` ({', '.join(INITIAL_PRESETS)})",
            {'available': list(INITIAL_PRESETS)},
        ) from None


def initial_profiles(
    name: str,
    u_l: float = 1.0,
    u_r: float = -1.0,
    amplitude: float = 1.0,
    width: float = 1.0,
    rho: float = 1.0,
    rho_bump: float = 0.0,
    u_shift: float = 0.0,
) -> Tuple[Profile, Profile, Profile, Profile]:
    """
    Resolve a preset into (u0, u0', rho0, rho0')

    Args:
        name: Preset name
        u_l: Left state (step presets)
        u_r: Right state (step presets)
        amplitude: Velocity amplitude
        width: Length scale
        rho: Background density
        rho_bump: Amplitude of the Gaussian density bump at x = 0
        u_shift: Constant added to the velocity

    Returns:
        Tuple of profiles
    """
    preset = initial_preset(name)
    base, du0 = preset.build(u_l=u_l, u_r=u_r, amplitude=amplitude, width=width)

    def u0(x):
        return base(x) + u_shift

    def rho0(x):
        return rho + rho_bump * np.exp(-np.asarray(x, dtype=float) ** 2)

    def drho0(x):
        x = np.asarray(x, dtype=float)
        return -2.0 * x * rho_bump * np.exp(-x ** 2)

    return u0, du0, rho0, drho0


def smooth_initial_condition(name: str, domain: Tuple[float, float], **params) -> SmoothIC:
    """Build a SmoothIC from a smooth preset; 'step' raises PresetError"""
    if not initial_preset(name).smooth:
        raise PresetError(f"preset '{name}' is not smooth; particle and broad solvers need a smooth preset")
    u0, du0, rho0, drho0 = initial_profiles(name, **params)
    return SmoothIC(u0, rho0, domain, du0=du0, drho0=drho0, name=name)


def describe_presets() -> dict:
    """Kernel presets, initial-condition presets and experiment kinds with their required sections"""
    from app.models.experiment import KIND_REQUIREMENTS

    return {
        'kernels': sorted(KERNEL_PRESETS),
        'initial_conditions': [preset.to_dict() for preset in INITIAL_PRESETS.values()],
        'experiments': {kind.value: list(fields) for kind, fields in KIND_REQUIREMENTS.items()},
    }
