"""Command-line entry point: ``onnx-ingest convert``."""

from __future__ import annotations

import sys

import click

from .convert import (
    DEFAULT_SCALE,
    SchemaEmitError,
    UnreadableModel,
    convert,
)


@click.group()
def main():
    """Convert ONNX models into the toolchain's IR-JSON."""


@main.command("convert")
@click.option("--in", "in_path", required=True,
              type=click.Path(dir_okay=False),
              help="Input ONNX model file.")
@click.option("--out", "out_path", required=True,
              type=click.Path(dir_okay=False, writable=True),
              help="Output IR-JSON file.")
@click.option("--report", "report_path", default=None,
              type=click.Path(dir_okay=False, writable=True),
              help="Optional conversion report (JSON).")
@click.option("--default-scale", default=DEFAULT_SCALE, show_default=True,
              help="Quantization exponent for models without scales.")
def convert_cmd(in_path, out_path, report_path, default_scale):
    """Convert an ONNX model to IR-JSON."""
    try:
        report = convert(in_path, out_path, report_path=report_path,
                         default_scale=default_scale)
    except (UnreadableModel, SchemaEmitError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    for w in report.warnings:
        click.echo(f"warning: {w}", err=True)
    click.echo(f"converted {len(report.converted)} nodes "
               f"({len(report.unsupported)} host-side) -> {out_path}")


if __name__ == "__main__":
    main()
