"""
Observable Transport Lab CLI
`lab run <config>`, `lab validate <config>` and `lab presets`
"""

import functools
import json
import logging
from pathlib import Path

import click

from app import create_lab
from app.errors import AcceptanceFailure, LabError, ValidationFailure
from app.models.experiment import load_config
from app.models.presets import describe_presets
from app.services.experiment_service import run_experiment


logger = logging.getLogger(__name__)


def _handle_errors(command):
    """Map lab exceptions to exit codes: 1 validation, 2 solver, 3 acceptance"""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ValidationFailure as e:
            click.echo(f'✗ {e.message}', err=True)
            raise SystemExit(e.exit_code)
        except LabError as e:
            logger.debug(f'Exit {e.exit_code}: {e.to_dict()}')
            click.echo(f'✗ {type(e).__name__}: {e.message}', err=True)
            raise SystemExit(e.exit_code)

    return wrapper


@click.group()
@click.option('--env', 'env', default=None, help='Settings environment (development, testing, production)')
@click.pass_context
def lab(ctx: click.Context, env: str):
    """Observable transport equations laboratory"""
    ctx.obj = create_lab(env)


@lab.command()
@click.argument('config_path', type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option('--output', 'output', type=click.Path(file_okay=False, path_type=Path), default=None,
              help='Override [experiment].output_dir')
@click.pass_obj
@_handle_errors
def run(settings, config_path: Path, output: Path):
    """Run the experiment described by CONFIG_PATH"""
    cfg, _ = load_config(config_path)
    report = run_experiment(cfg, settings, output_dir=output, config_path=config_path)

    for name, ok in report.checks.items():
        click.echo(f"  {'✓' if ok else '✗'} {name}")
    click.echo(f'Summary written to {report.output_dir / "summary.json"} ({report.wall_time:.2f}s)')

    if not report.passed:
        raise AcceptanceFailure(
            f"{cfg.kind.value}: failed checks {', '.join(report.failed_checks())}",
            {'failed': report.failed_checks()},
        )


@lab.command()
@click.argument('config_path', type=click.Path(exists=True, dir_okay=False, path_type=Path))
@_handle_errors
def validate(config_path: Path):
    """Validate CONFIG_PATH without running it"""
    cfg, _ = load_config(config_path)
    click.echo(f'✓ {config_path} is a valid {cfg.kind.value} config')


@lab.command()
@click.option('--json', 'as_json', is_flag=True, help='Print the listing as JSON')
def presets(as_json: bool):
    """List kernels, initial-condition presets and experiment kinds"""
    listing = describe_presets()
    if as_json:
        click.echo(json.dumps(listing, indent=2))
        return

    click.echo('Kernels:')
    for name in listing['kernels']:
        click.echo(f'  {name}')
    click.echo('Initial conditions:')
    for preset in listing['initial_conditions']:
        click.echo(f"  {preset['name']:<14} {preset['description']}  [{', '.join(preset['parameters'])}]")
    click.echo('Experiments:')
    for kind, required in listing['experiments'].items():
        click.echo(f"  {kind:<17} requires {', '.join(required)}")

