"""Cartesian parameter sweeps over configuration paths."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import partial
from pathlib import Path

from .commands import OUTPUTS, evaluate_outputs
from .config import ConfigError, GridSpec, RunConfig, _split_path
from .table import Column, ResultTable, check_writable, parallel_map, provenance


@dataclass(frozen=True)
class SweepSpec:
    """Axes (``section.key`` paths with grids in key units) and named outputs."""

    config: RunConfig
    axes: tuple[tuple[str, GridSpec], ...]
    outputs: tuple[str, ...]
    output_path: str | Path | None = None
    workers: int = 1

    def __post_init__(self):
        for path, grid in self.axes:
            _split_path(path)
            grid.validate()
        if len({p for p, _ in self.axes}) != len(self.axes):
            raise ConfigError("sweep axes must be distinct")
        if not self.outputs:
            raise ConfigError("sweep needs at least one output")
        unknown = [n for n in self.outputs if n not in OUTPUTS]
        if unknown:
            raise ConfigError(f"unknown sweep outputs {unknown}; known: {sorted(OUTPUTS)}")
        if self.workers < 1:
            raise ConfigError("worker count must be at least 1")

    @classmethod
    def from_config(cls, config: RunConfig, output_path=None, workers: int = 1) -> "SweepSpec":
        return cls(config, config.sweep.axes, config.sweep.outputs, output_path, workers)

    def points(self) -> list[tuple[float, ...]]:
        """Grid points in lexicographic axis order (last axis fastest)."""
        return list(itertools.product(*[[float(v) for v in g.values] for _, g in self.axes]))


def _evaluate_point(config: RunConfig, paths, outputs, point):
    try:
        cfg = config.with_overrides(dict(zip(paths, point)))
    except ConfigError as exc:
        return (*point, *[float("nan")] * len(outputs), f"config: {exc}")
    values, err = evaluate_outputs(cfg, outputs)
    return (*point, *values, err)


def run_sweep(spec: SweepSpec) -> ResultTable:
    if spec.output_path is not None:
        check_writable(spec.output_path)
    paths = tuple(p for p, _ in spec.axes)
    fn = partial(_evaluate_point, spec.config, paths, spec.outputs)
    rows = parallel_map(fn, spec.points(), spec.workers)
    cols = (tuple(Column(p) for p in paths)
            + tuple(Column(n, OUTPUTS[n][0]) for n in spec.outputs)
            + (Column("error", "str"),))
    meta = provenance(spec.config, "sweep", axes={p: g.text() for p, g in spec.axes},
                      outputs=list(spec.outputs))
    return ResultTable(cols, tuple(rows), meta)
