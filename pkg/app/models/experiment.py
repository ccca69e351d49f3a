"""
Observable Transport Lab Experiment Config
TOML experiment documents validated into typed sections
"""

import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.errors import ValidationFailure
from app.models.presets import INITIAL_PRESETS
from app.utils.kernels import KERNEL_PRESETS, RESOLUTION_SAFE_RATIO


# ============================================================================
# ENUMS & CONSTANTS
# ============================================================================

class ExperimentKind(Enum):
    """What `lab run` does with a config"""
    RIEMANN_EXACT = 'riemann-exact'
    FILTERED_PROFILE = 'filtered-profile'
    CHARACTERISTICS = 'characteristics'
    BROAD_SOLVE = 'broad-solve'
    VERIFY_OBSERVABLE = 'verify-theorem3'
    EULERIAN_RUN = 'eulerian-run'
    ALPHA_SWEEP = 'alpha-sweep'


# Sections (or fields) each kind needs beyond [experiment]
KIND_REQUIREMENTS: Dict[ExperimentKind, Tuple[str, ...]] = {
    ExperimentKind.RIEMANN_EXACT: ('riemann',),
    ExperimentKind.FILTERED_PROFILE: ('riemann', 'kernel.alpha'),
    ExperimentKind.CHARACTERISTICS: ('initial', 'kernel.alpha'),
    ExperimentKind.BROAD_SOLVE: ('initial', 'kernel.alpha', 'broad'),
    ExperimentKind.VERIFY_OBSERVABLE: ('riemann', 'kernel.alpha | kernel.alphas'),
    ExperimentKind.EULERIAN_RUN: ('riemann | initial', 'kernel.alpha'),
    ExperimentKind.ALPHA_SWEEP: ('riemann', 'kernel.alphas', 'grid.sizes'),
}


def _finite(value: float) -> float:
    if value is not None and not math.isfinite(value):
        raise ValueError('must be finite')
    return value


# ============================================================================
# SECTIONS
# ============================================================================

class Section(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)


class ExperimentSection(Section):
    kind: ExperimentKind
    output_dir: Optional[str] = None     # Falls back to the OUTPUT_DIR setting
    seed: Optional[int] = None          # Falls back to the BUMP_SUITE_SEED setting
    label: Optional[str] = None


class KernelSection(Section):
    name: str = 'helmholtz'
    alpha: Optional[float] = Field(default=None, gt=0.0)
    alphas: Optional[List[float]] = None

    @field_validator('name')
    @classmethod
    def known_kernel(cls, value: str) -> str:
        if value not in KERNEL_PRESETS:
            raise ValueError(f"unknown kernel '{value}' (available: {', '.join(KERNEL_PRESETS)})")
        return value

    @field_validator('alphas')
    @classmethod
    def positive_alphas(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is not None and any(not (math.isfinite(a) and a > 0.0) for a in value):
            raise ValueError('every alpha must be positive and finite')
        return value

    def alpha_list(self) -> List[float]:
        if self.alphas:
            return list(self.alphas)
        return [self.alpha] if self.alpha is not None else []


class RiemannSection(Section):
    rho_l: float = Field(ge=0.0)
    u_l: float
    rho_r: float = Field(ge=0.0)
    u_r: float

    @field_validator('rho_l', 'u_l', 'rho_r', 'u_r')
    @classmethod
    def finite(cls, value: float) -> float:
        return _finite(value)


class InitialSection(Section):
    preset: str
    u_l: float = 1.0
    u_r: float = -1.0
    amplitude: float = 1.0
    width: float = Field(default=1.0, gt=0.0)
    rho: float = Field(default=1.0, ge=0.0)
    rho_bump: float = Field(default=0.0, ge=0.0)
    u_shift: float = 0.0

    @field_validator('preset')
    @classmethod
    def known_preset(cls, value: str) -> str:
        if value not in INITIAL_PRESETS:
            raise ValueError(f"unknown initial-condition preset '{value}' (see `lab presets`)")
        return value

    def params(self) -> Dict[str, float]:
        return self.model_dump(exclude={'preset'})


class GridSection(Section):
    x_lo: float = -1.0
    x_hi: float = 3.0
    n: int = Field(default=800, ge=8)
    sizes: List[int] = Field(default_factory=list)
    periodic: bool = False

    @model_validator(mode='after')
    def ordered(self) -> 'GridSection':
        if not self.x_lo < self.x_hi:
            raise ValueError('x_lo must be smaller than x_hi')
        if any(n < 8 for n in self.sizes):
            raise ValueError('every grid size must be at least 8')
        return self

    @property
    def length(self) -> float:
        return self.x_hi - self.x_lo


class TimeSection(Section):
    t_end: float = Field(default=1.0, ge=0.0)
    cfl: float = Field(default=0.9, gt=0.0, le=1.0)
    dt: Optional[float] = Field(default=None, gt=0.0)
    output_every: float = Field(default=0.1, gt=0.0)
    snapshot_every: int = Field(default=10, ge=1)
    fit_start: float = Field(default=0.5, ge=0.0)
    fit_end: float = Field(default=1.5, gt=0.0)
    window_half_width: Optional[float] = Field(default=None, gt=0.0)


class BroadSection(Section):
    target_lo: float = -4.0
    target_hi: float = 4.0
    n_x: int = Field(default=201, ge=16)
    n_t: int = Field(default=41, ge=4)
    particles: int = Field(default=801, ge=64)
    tol: Optional[float] = Field(default=None, gt=0.0)
    max_iter: Optional[int] = Field(default=None, ge=1)


# ============================================================================
# EXPERIMENT CONFIG
# ============================================================================

class ExperimentConfig(Section):
    """
    Validated experiment document

    Sections mirror the TOML tables: [experiment], [kernel], [riemann],
    [initial], [grid], [time], [broad].
    """

    experiment: ExperimentSection
    kernel: KernelSection = Field(default_factory=KernelSection)
    riemann: Optional[RiemannSection] = None
    initial: Optional[InitialSection] = None
    grid: GridSection = Field(default_factory=GridSection)
    time: TimeSection = Field(default_factory=TimeSection)
    broad: Optional[BroadSection] = None

    @property
    def kind(self) -> ExperimentKind:
        return self.experiment.kind

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode='json', exclude_none=True)


# ============================================================================
# PARSING
# ============================================================================

def parse_config(text: str) -> ExperimentConfig:
    """
    Parse and validate a TOML experiment document

    Args:
        text: TOML source

    Returns:
        ExperimentConfig: Validated config

    Raises:
        ValidationFailure: With every problem found, each tagged by its dotted field path
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ValidationFailure([{'field': '<document>', 'message': str(e)}]) from e

    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        errors = [_field_error(err) for err in e.errors()]
        errors.extend(_kind_errors_raw(data))
        raise ValidationFailure(_dedupe(errors)) from e

    errors = kind_errors(cfg)
    if errors:
        raise ValidationFailure(errors)
    return cfg


def load_config(path) -> Tuple[ExperimentConfig, str]:
    """Read a config file; returns the config and its source text"""
    with open(path, 'r', encoding='utf-8') as handle:
        text = handle.read()
    return parse_config(text), text


def kind_errors(cfg: ExperimentConfig) -> List[Dict[str, str]]:
    """Kind-specific requirements checked after the sections themselves validate"""
    errors: List[Dict[str, str]] = []
    kind = cfg.kind
    alphas = cfg.kernel.alpha_list()

    def need(condition: bool, field: str, message: str) -> None:
        if not condition:
            errors.append({'field': field, 'message': message})

    needs_riemann = kind in (ExperimentKind.RIEMANN_EXACT, ExperimentKind.FILTERED_PROFILE,
                             ExperimentKind.VERIFY_OBSERVABLE, ExperimentKind.ALPHA_SWEEP)
    needs_initial = kind in (ExperimentKind.CHARACTERISTICS, ExperimentKind.BROAD_SOLVE)

    if needs_riemann:
        need(cfg.riemann is not None, 'riemann', f'{kind.value} needs a [riemann] section')
    if needs_initial:
        need(cfg.initial is not None, 'initial', f'{kind.value} needs an [initial] section')
    if kind is ExperimentKind.EULERIAN_RUN:
        need((cfg.riemann is None) != (cfg.initial is None), 'riemann',
             'eulerian-run needs exactly one of [riemann] or [initial]')

    if kind in (ExperimentKind.FILTERED_PROFILE, ExperimentKind.CHARACTERISTICS,
                ExperimentKind.BROAD_SOLVE, ExperimentKind.EULERIAN_RUN):
        need(cfg.kernel.alpha is not None, 'kernel.alpha', f'{kind.value} needs kernel.alpha')

    if kind in (ExperimentKind.FILTERED_PROFILE, ExperimentKind.VERIFY_OBSERVABLE, ExperimentKind.ALPHA_SWEEP) \
            and cfg.riemann is not None:
        need(cfg.riemann.u_l > cfg.riemann.u_r, 'riemann.u_l',
             f'{kind.value} needs delta-shock data (u_l > u_r)')

    if kind is ExperimentKind.VERIFY_OBSERVABLE:
        need(cfg.kernel.name == 'helmholtz', 'kernel.name',
             'verify-theorem3 supports only the helmholtz kernel')
        need(bool(alphas), 'kernel.alpha', 'verify-theorem3 needs kernel.alpha or kernel.alphas')

    if kind is ExperimentKind.BROAD_SOLVE:
        need(cfg.broad is not None, 'broad', 'broad-solve needs a [broad] section')
        need(cfg.time.t_end > 0.0, 'time.t_end', 'broad-solve needs t_end > 0')

    if kind in (ExperimentKind.CHARACTERISTICS, ExperimentKind.RIEMANN_EXACT, ExperimentKind.FILTERED_PROFILE):
        need(cfg.time.t_end > 0.0, 'time.t_end', f'{kind.value} needs t_end > 0')

    if needs_initial and cfg.initial is not None:
        need(INITIAL_PRESETS[cfg.initial.preset].smooth, 'initial.preset',
             f"{kind.value} needs a smooth preset, got '{cfg.initial.preset}'")

    if kind is ExperimentKind.ALPHA_SWEEP:
        need(bool(cfg.kernel.alphas), 'kernel.alphas', 'alpha-sweep needs a non-empty kernel.alphas list')
        if cfg.kernel.alphas:
            need(all(b < a for a, b in zip(alphas, alphas[1:])), 'kernel.alphas', 'alphas must be strictly decreasing')
            need(len(cfg.grid.sizes) == len(alphas), 'grid.sizes', 'grid.sizes must pair one size with each alpha')
            for i, (alpha, n) in enumerate(zip(alphas, cfg.grid.sizes)):
                dx = cfg.grid.length / n
                need(dx <= RESOLUTION_SAFE_RATIO * alpha * (1.0 + 1e-12), f'grid.sizes[{i}]',
                     f'dx={dx:.4g} exceeds alpha/4={RESOLUTION_SAFE_RATIO * alpha:.4g}')

    if kind in (ExperimentKind.EULERIAN_RUN, ExperimentKind.ALPHA_SWEEP):
        need(cfg.time.fit_start < cfg.time.fit_end, 'time.fit_start', 'fit_start must precede fit_end')

    if cfg.broad is not None:
        need(cfg.broad.target_lo < cfg.broad.target_hi, 'broad.target_lo', 'target_lo must be smaller than target_hi')

    return errors


# ============================================================================
# UTILITY FUNCTIONS
# ============================================================================

def _field_error(err: Dict[str, Any]) -> Dict[str, str]:
    path = '.'.join(str(part) for part in err.get('loc', ())) or '<document>'
    return {'field': path, 'message': err.get('msg', 'invalid value')}


def _kind_errors_raw(data: Dict[str, Any]) -> List[Dict[str, str]]:
    """Requirements that can be judged on the raw document when the typed parse already failed"""
    errors = []
    kind = data.get('experiment', {}).get('kind') if isinstance(data.get('experiment'), dict) else None
    kernel = data.get('kernel', {}) if isinstance(data.get('kernel'), dict) else {}
    if kind == ExperimentKind.VERIFY_OBSERVABLE.value and kernel.get('name', 'helmholtz') != 'helmholtz':
        errors.append({'field': 'kernel.name', 'message': 'verify-theorem3 supports only the helmholtz kernel'})
    if kind == ExperimentKind.ALPHA_SWEEP.value and not kernel.get('alphas'):
        errors.append({'field': 'kernel.alphas', 'message': 'alpha-sweep needs a non-empty kernel.alphas list'})
    return errors


def _dedupe(errors: List[Dict[str, str]]) -> List[Dict[str, str]]:
    seen, unique = set(), []
    for err in errors:
        key = (err['field'], err['message'])
        if key not in seen:
            seen.add(key)
            unique.append(err)
    return unique
