"""Command-line interface.

Exit codes:
    0  success
    2  bad input (malformed model IR, system file, image, or usage)
    3  compilation infeasible (partition, weight residency, buffers)
    4  simulation failed (deadlock or cycle-limit exceeded)
    5  memory hazards detected during simulation
"""

from __future__ import annotations

import json
import random
import sys

import click

from . import dse as dsemod
from . import models
from .compiler import (
    BufferError,
    CodegenError,
    PartitionError,
    PlanError,
    WeightInfeasible,
    compile_model,
    load_plan,
    save_plan,
    simulate_plan,
)
from .graph import GraphError
from .isa import IsaError, assemble, disassemble, read_image, write_image
from .sim import DeadlockDetected, LimitExceeded, default_system, load_system
from .sim.hazards import detect_hazards

EXIT_BAD_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_SIM_FAILED = 4
EXIT_HAZARDS = 5

_BUILTIN_MODELS = {
    "resnet50": models.resnet50_ir,
    "two_conv_chain": models.two_conv_chain_ir,
}


def _fail(code, msg):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _load_ir(model):
    if model in _BUILTIN_MODELS:
        return _BUILTIN_MODELS[model]()
    try:
        with open(model) as fh:
            return json.load(fh)
    except OSError as exc:
        _fail(EXIT_BAD_INPUT, f"cannot read model {model!r}: {exc}")
    except json.JSONDecodeError as exc:
        _fail(EXIT_BAD_INPUT, f"model {model!r} is not valid JSON: {exc}")


def _load_system(path):
    if path is None:
        return default_system()
    try:
        return load_system(path)
    except Exception as exc:
        _fail(EXIT_BAD_INPUT, f"bad system file {path!r}: {exc}")


@click.group()
@click.option("--seed", type=int, default=0, show_default=True,
              help="Seed for any randomized tie-breaking.")
def main(seed):
    """Compiler, timing simulator, and design-space explorer for a
    multi-PU DNN accelerator pipeline."""
    random.seed(seed)


@main.command("compile")
@click.argument("model")
@click.option("-o", "--out", "out_dir", required=True,
              type=click.Path(file_okay=False),
              help="Output plan directory.")
@click.option("--system", "system_path", type=click.Path(exists=True),
              help="System description JSON (default: 5x 1x + 5x 2x).")
@click.option("--pool-1x", "a", type=int, default=None,
              help="1x PUs offered to the partitioner (default: all).")
@click.option("--pool-2x", "b", type=int, default=None,
              help="2x PUs offered to the partitioner (default: all).")
def compile_cmd(model, out_dir, system_path, a, b):
    """Compile MODEL (a path, or builtin: resnet50, two_conv_chain)."""
    ir = _load_ir(model)
    system = _load_system(system_path)
    sa, sb = system.pool_counts()
    a = sa if a is None else a
    b = sb if b is None else b
    try:
        plan = compile_model(ir, system, a, b)
    except GraphError as exc:
        _fail(EXIT_BAD_INPUT, f"bad model: {exc}")
    except (PartitionError, WeightInfeasible, BufferError,
            CodegenError) as exc:
        _fail(EXIT_INFEASIBLE, str(exc))
    save_plan(plan, out_dir)
    est = plan.estimates
    click.echo(f"plan written to {out_dir}")
    click.echo(f"stages: {len(plan.stage_summaries)}  "
               f"makespan: {est['makespan_cycles']} cycles  "
               f"balance: {est['balance_efficiency']:.4f}")
    for s in plan.stage_summaries:
        click.echo(f"  PU{s['pid']:<3}{s['pu_type']:>3}  "
                   f"{len(s['nodes'])} nodes  {s['cycles_est']} cycles")


@main.command("simulate")
@click.argument("plan_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--rounds", type=int, default=8, show_default=True)
@click.option("--limit", type=int, default=1_000_000_000, show_default=True,
              help="Cycle limit before the run is declared stuck.")
@click.option("--report", "report_path", type=click.Path(),
              help="Write the full timing report as JSON.")
@click.option("--trace", "trace_path", type=click.Path(),
              help="Write the per-instruction timeline as CSV.")
@click.option("--check-hazards/--no-check-hazards", default=True,
              show_default=True,
              help="Scan HBM accesses for read/write overlaps.")
def simulate_cmd(plan_dir, rounds, limit, report_path, trace_path,
                 check_hazards):
    """Run a compiled plan for ROUNDS inputs and report timing."""
    try:
        plan = load_plan(plan_dir)
    except (PlanError, IsaError, OSError, json.JSONDecodeError) as exc:
        _fail(EXIT_BAD_INPUT, f"cannot load plan: {exc}")
    try:
        report, metrics = simulate_plan(plan, rounds, limit=limit)
    except DeadlockDetected as exc:
        _fail(EXIT_SIM_FAILED, f"deadlock: {exc}")
    except LimitExceeded as exc:
        _fail(EXIT_SIM_FAILED, str(exc))
    for key, val in metrics.to_dict().items():
        click.echo(f"{key}: {val}")
    if report_path:
        report.save_json(report_path)
    if trace_path:
        report.save_trace_csv(trace_path)
    if check_hazards:
        hazards = detect_hazards(report.accesses, tensors=plan.tensors)
        if hazards:
            for h in hazards[:10]:
                click.echo(f"hazard: {h}", err=True)
            _fail(EXIT_HAZARDS, f"{len(hazards)} memory hazards detected")
        click.echo("hazards: none")


@main.command("dse")
@click.argument("model")
@click.option("--system", "system_path", type=click.Path(exists=True))
@click.option("--multi/--single", default=False, show_default=True,
              help="Also explore hybrid multi-pipeline deployments.")
@click.option("--max-pipelines", type=int, default=None)
@click.option("--max-latency-ms", type=float, default=None)
@click.option("--min-throughput", type=float, default=None)
@click.option("--pareto-only/--all-points", default=True, show_default=True)
@click.option("--json", "json_path", type=click.Path())
@click.option("--csv", "csv_path", type=click.Path())
def dse_cmd(model, system_path, multi, max_pipelines, max_latency_ms,
            min_throughput, pareto_only, json_path, csv_path):
    """Explore PU-pool allocations for MODEL."""
    ir = _load_ir(model)
    system = _load_system(system_path)
    try:
        if multi:
            points = dsemod.compose_multi(ir, system,
                                          max_pipelines=max_pipelines)
        else:
            points = dsemod.enumerate_single(ir, system)
    except GraphError as exc:
        _fail(EXIT_BAD_INPUT, f"bad model: {exc}")
    if not points:
        _fail(EXIT_INFEASIBLE, "no feasible design points")
    shown = dsemod.pareto(
        points,
        max_latency_s=(max_latency_ms / 1e3
                       if max_latency_ms is not None else None),
        min_throughput=min_throughput,
    ) if pareto_only else points
    if not shown:
        _fail(EXIT_INFEASIBLE, "no design point satisfies the constraints")
    click.echo(f"{'pools':<28}{'throughput/s':>14}{'latency ms':>12}"
               f"{'balance':>9}")
    for p in shown:
        pools = "+".join(f"({x},{y})" for x, y in p.pools)
        click.echo(f"{pools:<28}{p.throughput_per_s:>14.1f}"
                   f"{p.latency_s * 1e3:>12.2f}"
                   f"{p.balance_efficiency:>9.4f}")
    dsemod.save_results(shown, json_path, csv_path)


@main.command("asm")
@click.argument("source", type=click.File("r"))
@click.option("-o", "--out", "out_path", required=True, type=click.Path())
@click.option("--pu-id", type=int, required=True)
def asm_cmd(source, out_path, pu_id):
    """Assemble an instruction listing into a binary image."""
    try:
        prog = assemble(source.read())
        blob = write_image(prog, pu_id=pu_id)
    except IsaError as exc:
        _fail(EXIT_BAD_INPUT, str(exc))
    with open(out_path, "wb") as fh:
        fh.write(blob)
    click.echo(f"{len(prog.instructions)} instructions -> {out_path}")


@main.command("disasm")
@click.argument("image", type=click.File("rb"))
def disasm_cmd(image):
    """Disassemble a binary program image."""
    try:
        pu_id, prog = read_image(image.read())
    except IsaError as exc:
        _fail(EXIT_BAD_INPUT, str(exc))
    click.echo(f"; pu_id {pu_id}  group {prog.group}")
    click.echo(disassemble(prog))


@main.command("report")
@click.argument("plan_dir", type=click.Path(exists=True, file_okay=False))
def report_cmd(plan_dir):
    """Summarize a compiled plan without simulating it."""
    try:
        plan = load_plan(plan_dir)
    except (PlanError, IsaError, OSError, json.JSONDecodeError) as exc:
        _fail(EXIT_BAD_INPUT, f"cannot load plan: {exc}")
    click.echo(f"pool: {plan.pool[0]}x 1x + {plan.pool[1]}x 2x")
    click.echo(f"stages: {len(plan.stage_summaries)}")
    for s in plan.stage_summaries:
        click.echo(f"  PU{s['pid']:<3}{s['pu_type']:>3}  "
                   f"{len(s['nodes'])} nodes  {s['cycles_est']} cycles  "
                   f"dynamic weights: {len(s['weight_dynamic'])}  "
                   f"uram: {s['uram_occupancy']:.2%}")
    for key, val in plan.estimates.items():
        click.echo(f"{key}: {val}")


if __name__ == "__main__":
    main()
