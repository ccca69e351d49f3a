"""
Observable Transport Lab Export Service
Plot-ready CSV files and the machine-readable run summary
"""

import csv
import json
import logging
import math
import os
import shutil
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

import numpy as np

from app.utils.broad_solver import BroadSolution, SpaceTimeField
from app.utils.characteristics import LagrangianMap
from app.utils.distribution import ObservableResidual, TransportResidual
from app.utils.eulerian import RunResult, SweepTable
from app.utils.kernels import SampledField
from app.utils.riemann_exact import FilteredProfile


logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]


# ============================================================================
# ENUMS & CONSTANTS
# ============================================================================

DEFAULT_DIGITS = 17
SUMMARY_FILE = 'summary.json'

FIELD_HEADER = ('x', 'value')
PROFILE_HEADER = ('x', 'ubar', 'rhobar', 'ubar_x', 'rhobar_x')
MAP_HEADER = ('t', 's', 'x', 'u0')
HISTORY_HEADER = ('iter', 'residual', 'ratio')
BROAD_FIELD_HEADER = ('t', 'x', 'rho')
RESIDUAL_HEADER = ('bump_id', 'term_i', 'term_ii', 'term_iii', 'total')
SNAPSHOT_HEADER = ('x', 'rho', 'u', 'ubar')
DIAGNOSTIC_HEADER = ('t', 'total_mass', 'window_mass', 'front_pos')
SWEEP_HEADER = ('alpha', 'N', 'vel_err', 'slope_err')
EXACT_HEADER = ('x', 'rho', 'u', 'on_shock')


# ============================================================================
# CSV WRITER
# ============================================================================

def format_value(value: Any, digits: int = DEFAULT_DIGITS) -> str:
    """Integers verbatim, floats with `digits` significant digits"""
    if isinstance(value, (bool, np.bool_)):
        return '1' if value else '0'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f'{float(value):.{digits}g}'


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]], digits: int = DEFAULT_DIGITS) -> Path:
    """
    Write rows with LF line endings and '.' decimals

    Args:
        path: Destination file (parents are created)
        header: Column names
        rows: Row values
        digits: Significant digits for floats

    Returns:
        Path: Written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v, digits) for v in row])
            count += 1
    logger.debug(f'Wrote {count} rows to {path}')
    return path


# ============================================================================
# LAYOUTS
# ============================================================================

def export_field(path: PathLike, f: SampledField, digits: int = DEFAULT_DIGITS) -> Path:
    return write_csv(path, FIELD_HEADER, zip(f.grid, f.values), digits)


def export_profile(path: PathLike, profile: FilteredProfile, t: float, xs: np.ndarray, digits: int = DEFAULT_DIGITS) -> Path:
    """Filtered delta-shock fields on one time slice"""
    xs = np.asarray(xs, dtype=float)
    columns = (
        xs,
        np.broadcast_to(profile.ubar(xs, t), xs.shape),
        np.broadcast_to(profile.rhobar_smooth(xs, t), xs.shape),
        np.broadcast_to(profile.ubar_x(xs, t), xs.shape),
        np.broadcast_to(profile.rhobar_x(xs, t), xs.shape),
    )
    return write_csv(path, PROFILE_HEADER, zip(*columns), digits)


def export_exact(path: PathLike, xs: np.ndarray, values: Sequence, digits: int = DEFAULT_DIGITS) -> Path:
    """Unfiltered Riemann solution values (ExactValue) at the given points"""
    rows = ([x, v.rho, v.u, v.on_shock] for x, v in zip(xs, values))
    return write_csv(path, EXACT_HEADER, rows, digits)


def export_map(path: PathLike, m: LagrangianMap, digits: int = DEFAULT_DIGITS) -> Path:
    """Long format: one row per (snapshot, particle)"""
    def rows():
        for j, t in enumerate(m.times):
            for s, x, u0 in zip(m.seeds, m.positions[j], m.velocities):
                yield t, s, x, u0
    return write_csv(path, MAP_HEADER, rows(), digits)


def export_history(path: PathLike, solution: BroadSolution, digits: int = DEFAULT_DIGITS) -> Path:
    return write_csv(path, HISTORY_HEADER, solution.history_rows(), digits)


def export_space_time(path: PathLike, rho: SpaceTimeField, digits: int = DEFAULT_DIGITS) -> Path:
    """Masked samples of a space-time field"""
    def rows():
        for j, t in enumerate(rho.t):
            for i in np.flatnonzero(rho.mask[j]):
                yield t, rho.x[i], rho.values[j, i]
    return write_csv(path, BROAD_FIELD_HEADER, rows(), digits)


def export_residuals(
    path: PathLike,
    rows: Sequence[Union[ObservableResidual, TransportResidual]],
    digits: int = DEFAULT_DIGITS,
) -> Path:
    return write_csv(path, RESIDUAL_HEADER, (r.to_row() for r in rows), digits)


def export_snapshots(directory: PathLike, result: RunResult, digits: int = DEFAULT_DIGITS) -> List[Path]:
    """One `snapshot_NNNN.csv` per stored state"""
    directory = Path(directory)
    paths = []
    for index, state in enumerate(result.snapshots):
        columns = zip(state.grid, state.rho, state.u, state.ubar())
        paths.append(write_csv(directory / f'snapshot_{index:04d}.csv', SNAPSHOT_HEADER, columns, digits))
    return paths


def export_diagnostics(path: PathLike, result: RunResult, digits: int = DEFAULT_DIGITS) -> Path:
    rows = ((d.t, d.total_mass, d.window_mass, d.front_pos) for d in result.diagnostics)
    return write_csv(path, DIAGNOSTIC_HEADER, rows, digits)


def export_sweep(path: PathLike, table: SweepTable, digits: int = DEFAULT_DIGITS) -> Path:
    rows = ((r.alpha, r.n, r.vel_err, r.slope_err) for r in table.rows)
    return write_csv(path, SWEEP_HEADER, rows, digits)


# ============================================================================
# SUMMARY & PROVENANCE
# ============================================================================

def write_summary(directory: PathLike, summary: Dict[str, Any]) -> Path:
    """Write summary.json; non-finite floats become null"""
    path = Path(directory) / SUMMARY_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as handle:
        json.dump(_jsonable(summary), handle, indent=2, sort_keys=True)
        handle.write('\n')
    return path


def copy_config(source: PathLike, directory: PathLike) -> Path:
    """Copy the experiment config next to its outputs"""
    target = Path(directory) / Path(source).name
    target.parent.mkdir(parents=True, exist_ok=True)
    if Path(source).resolve() != target.resolve():
        shutil.copyfile(source, target)
    return target


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value
