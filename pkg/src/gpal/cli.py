"""Command-line entry points: dataset generation, benchmark runs, service."""

from __future__ import annotations

import click

from gpal._threads import limit_blas_threads


@click.command()
@click.option("--n", default=400, show_default=True, help="Number of realizations to simulate.")
@click.option("--seed", default=0, show_default=True, help="Base seed for the whole pipeline.")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output CSV path.")
@click.option("--dt", default=0.005, show_default=True, help="Integrator step size.")
def datagen(n: int, seed: int, out: str, dt: float):
    """Generate the hysteretic-oscillator benchmark dataset as CSV."""
    limit_blas_threads(1)
    from gpal.boucwen import build_dataset, write_csv

    dataset = build_dataset(n=n, seed=seed, dt=dt)
    write_csv(dataset, out)
    click.echo(f"wrote {dataset.size} rows to {out}")


@click.group()
def bench():
    """Benchmark harness for selection strategies."""


@bench.command("run")
@click.option("--plan", "plan_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--paper-scale", is_flag=True, help="Use reference-report realization counts.")
@click.option("--workers", default=None, type=int, help="Override the plan's worker count.")
def bench_run(plan_path: str, out_dir: str, paper_scale: bool, workers: int | None):
    """Run every configuration of a TOML plan and write CSV/JSON outputs."""
    limit_blas_threads(1)
    import dataclasses

    from gpal.bench import ExperimentPlan, run_plan, write_outputs

    plan = ExperimentPlan.from_toml(plan_path)
    if paper_scale:
        plan = plan.at_paper_scale()
    if workers is not None:
        plan = dataclasses.replace(plan, workers=workers)

    def progress(done, total):
        click.echo(f"\r{done}/{total} realizations", nl=(done == total))

    result = run_plan(plan, progress=progress)
    write_outputs(result, out_dir)
    for failure in result.failures:
        click.echo(f"FAILED {failure['config']} realization {failure['realization']}: {failure['error']}")
    click.echo(f"outputs in {out_dir}")


@click.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--port", default=None, type=int, help="Override the configured port.")
@click.option("--data-dir", default=None, type=click.Path(file_okay=False))
def serve(config_path: str | None, port: int | None, data_dir: str | None):
    """Start the interactive campaign HTTP service."""
    limit_blas_threads(1)
    import dataclasses

    import uvicorn

    from gpal.service import ServiceConfig, create_app

    cfg = ServiceConfig.load(config_path)
    if port is not None:
        cfg = dataclasses.replace(cfg, port=port)
    if data_dir is not None:
        cfg = dataclasses.replace(cfg, data_dir=data_dir)
    uvicorn.run(create_app(cfg), host="0.0.0.0", port=cfg.port)
