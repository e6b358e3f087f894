"""Experiment runner: ``lsqswarm run <cfg>`` and ``lsqswarm verify <cfg>``.

A config is a YAML mapping::

    matrix: A.txt            # path (relative to the config) or inline rows
    vector: b.txt            # path or inline list
    variant: hom             # hom | case1 | case2
    partition:
      b_rule: diagonal       # diagonal | uniform | first_cluster_all | custom
      col_widths: [1, 1, 1]  # case1: column blocks; case2: per-cluster widths
      row_heights: [...]     # case1: per-cluster heights; case2: row blocks
      b_custom: [...]        # shares for the custom rule
    topology: standard       # or {row_graphs, col_graphs} / {cluster, intra}
    init: {x0: zero, z0: zero, seed: 0}
    integrator: {h: 0.001, t_end: 200, record_every: 100,
                 tol_converge: 1.0e-6, tol_exact: 1.0e-8}
    output: eq_s1_hom        # directory, relative to the output root
    verify_spectral: true

Graph entries are ``path``, ``cycle``, ``complete`` or a text block in the
``nodes k`` / ``u v`` edge-list format.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .dynamics import (
    InitRule,
    case2_field,
    case2_from_homogeneous,
    compact_system,
    hom_field,
    init_state,
    make_field,
    stack,
    stack_derivative,
)
from .errors import LsqSwarmError, ParseError, ShapeError, ValidationError
from .numerics import as_matrix, as_vector, parse_matrix, read_matrix, read_vector, spectral_verify
from .partitioning import BRule, HomogeneousPartition, Partition, make_case1, make_case2, make_homogeneous
from .simulation import Classification, RunRecord, SimConfig, simulate
from .topology import (
    DoubleLayerNetwork,
    Graph,
    GridNetwork,
    Network,
    assert_assumptions,
    complete_graph,
    cycle_graph,
    network_edge_lists,
    parse_graph,
    path_graph,
    standard_double_layer,
    standard_grid,
)

VARIANTS = ("hom", "case1", "case2")
TOP_KEYS = {
    "matrix", "vector", "variant", "partition", "topology", "init", "integrator", "output", "verify_spectral",
}
INTEGRATOR_KEYS = {
    "h": float, "t_end": float, "record_every": int, "tol_converge": float, "tol_exact": float,
    "auto_step": bool, "stop_early": bool,
}
DEFAULT_B_RULE = {"hom": BRule.DIAGONAL, "case1": BRule.FIRST_CLUSTER_ALL, "case2": BRule.DIAGONAL}
EQUIVALENCE_STATES = 100
EQUIVALENCE_TOL = 1e-10

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2


def bundled_examples() -> Path:
    return Path(str(resources.files("lsqswarm") / "examples"))


def resolve_config_path(path: str | Path) -> Path:
    """The path itself if it exists, else the bundled example of that name."""
    p = Path(path)
    if p.exists():
        return p
    fallback = bundled_examples() / p.name
    if fallback.exists():
        return fallback
    raise ParseError(None, "config file not found", str(path))


@dataclass
class ExperimentConfig:
    source: Path
    A: np.ndarray
    b: np.ndarray
    variant: str
    partition: Partition
    network: Network
    b_rule: BRule
    x0: InitRule = InitRule.ZERO
    z0: InitRule = InitRule.ZERO
    seed: int = 0
    integrator: dict = field(default_factory=dict)
    output: str | None = None
    verify_spectral: bool = False

    def sim_config(self) -> SimConfig:
        return SimConfig(
            self.partition, self.network, self.x0, self.z0, self.seed, **self.integrator
        )


def _line_map(node, path=(), out=None) -> dict:
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            out[path + (k.value,)] = k.start_mark.line + 1
            _line_map(v, path + (k.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, path + (i,), out)
    return out


class _Ctx:
    def __init__(self, source: str, lines: dict):
        self.source = source
        self.lines = lines

    def line(self, *path) -> int | None:
        while path and path not in self.lines:
            path = path[:-1]
        return self.lines.get(path)

    def parse_error(self, reason: str, *path) -> ParseError:
        return ParseError(self.line(*path), reason, self.source)

    def invalid(self, name: str, reason: str, *path) -> ValidationError:
        ln = self.line(*(path or (name,)))
        return ValidationError(name, f"{reason} (line {ln})" if ln else reason)


def _load_array(value, base: Path, ctx: _Ctx, key: str, vector: bool) -> np.ndarray:
    if isinstance(value, str):
        if "\n" in value:
            M = parse_matrix(value, f"{ctx.source}:{key}")
        else:
            p = (base / value) if not Path(value).is_absolute() else Path(value)
            if not p.exists():
                raise ctx.invalid(key, f"file {value!r} does not exist")
            M = read_matrix(p)
        if vector:
            if 1 not in M.shape:
                raise ctx.invalid(key, f"expected a vector, got shape {M.shape}")
            return M.reshape(-1)
        return M
    try:
        return as_vector(value, key) if vector else as_matrix(value, key)
    except LsqSwarmError as exc:
        raise ctx.invalid(key, str(exc)) from None


def _int_list(value, ctx: _Ctx, name: str, *path) -> list[int]:
    if not isinstance(value, list) or not value or not all(isinstance(v, int) and v > 0 for v in value):
        raise ctx.invalid(name, "expected a non-empty list of positive integers", *path)
    return value


def _nested_int_lists(value, ctx: _Ctx, name: str, *path) -> list[list[int]]:
    if not isinstance(value, list) or not value:
        raise ctx.invalid(name, "expected a list of integer lists", *path)
    return [_int_list(v, ctx, name, *path, i) for i, v in enumerate(value)]


def _build_partition(variant: str, A, b, spec: dict, ctx: _Ctx) -> tuple[Partition, BRule]:
    if not isinstance(spec, dict):
        raise ctx.invalid("partition", "expected a mapping")
    unknown = set(spec) - {"b_rule", "col_widths", "row_heights", "b_custom"}
    if unknown:
        key = sorted(unknown)[0]
        raise ctx.parse_error(f"unknown partition key {key!r}", "partition", key)
    try:
        rule = BRule(spec.get("b_rule", DEFAULT_B_RULE[variant]))
    except ValueError:
        raise ctx.invalid("b_rule", f"unknown b rule {spec.get('b_rule')!r}", "partition", "b_rule") from None
    custom = spec.get("b_custom")
    m, n = A.shape
    try:
        if variant == "hom":
            return make_homogeneous(A, b, rule, custom), rule
        if variant == "case1":
            widths = _int_list(spec.get("col_widths"), ctx, "col_widths", "partition", "col_widths")
            if sum(widths) != n:
                raise ctx.invalid("col_widths", f"sums to {sum(widths)}, A has {n} columns", "partition", "col_widths")
            heights = _nested_int_lists(spec.get("row_heights"), ctx, "row_heights", "partition", "row_heights")
            for i, h in enumerate(heights):
                if sum(h) != m:
                    raise ctx.invalid("row_heights", f"cluster {i} sums to {sum(h)}, A has {m} rows", "partition", "row_heights", i)
            return make_case1(A, b, widths, heights, rule, custom), rule
        heights = _int_list(spec.get("row_heights"), ctx, "row_heights", "partition", "row_heights")
        if sum(heights) != m:
            raise ctx.invalid("row_heights", f"sums to {sum(heights)}, A has {m} rows", "partition", "row_heights")
        widths = _nested_int_lists(spec.get("col_widths"), ctx, "col_widths", "partition", "col_widths")
        for i, w in enumerate(widths):
            if sum(w) != n:
                raise ctx.invalid("col_widths", f"cluster {i} sums to {sum(w)}, A has {n} columns", "partition", "col_widths", i)
        return make_case2(A, b, heights, widths, rule, custom), rule
    except (ValidationError, ParseError):
        raise
    except LsqSwarmError as exc:
        raise ctx.invalid("partition", str(exc)) from None


_SHAPES = {"path": path_graph, "cycle": cycle_graph, "complete": complete_graph}


def _graph(entry, k: int, ctx: _Ctx, name: str, *path) -> Graph:
    if isinstance(entry, str) and entry.strip() in _SHAPES:
        return _SHAPES[entry.strip()](k)
    if not isinstance(entry, str):
        raise ctx.invalid(name, "graph must be a shape name or an edge-list block", *path)
    g = parse_graph(entry, f"{ctx.source}:{name}")
    if g.node_count != k:
        raise ctx.invalid(name, f"graph has {g.node_count} nodes, expected {k}", *path)
    return g


def _graph_list(entries, counts: list[int], ctx: _Ctx, name: str) -> tuple[Graph, ...]:
    if isinstance(entries, str):
        entries = [entries] * len(counts)
    if not isinstance(entries, list) or len(entries) != len(counts):
        raise ctx.invalid(name, f"expected {len(counts)} graphs", "topology", name)
    return tuple(_graph(e, k, ctx, name, "topology", name, i) for i, (e, k) in enumerate(zip(entries, counts)))


def _build_network(variant: str, p: Partition, spec, ctx: _Ctx) -> Network:
    if spec is None or spec == "standard":
        if variant == "hom":
            return standard_grid(p.m, p.n)
        return standard_double_layer(p.cluster_sizes)
    if not isinstance(spec, dict):
        raise ctx.invalid("topology", "expected 'standard' or a mapping of graphs")
    if variant == "hom":
        unknown = set(spec) - {"row_graphs", "col_graphs"}
        if unknown:
            raise ctx.parse_error(f"unknown topology key {sorted(unknown)[0]!r}", "topology")
        rows = _graph_list(spec.get("row_graphs", "path"), [p.n] * p.m, ctx, "row_graphs")
        cols = _graph_list(spec.get("col_graphs", "path"), [p.m] * p.n, ctx, "col_graphs")
        return GridNetwork(p.m, p.n, rows, cols)
    unknown = set(spec) - {"cluster", "intra"}
    if unknown:
        raise ctx.parse_error(f"unknown topology key {sorted(unknown)[0]!r}", "topology")
    cluster = _graph(spec.get("cluster", "path"), p.c, ctx, "cluster", "topology", "cluster")
    intra = _graph_list(spec.get("intra", "path"), list(p.cluster_sizes), ctx, "intra")
    return DoubleLayerNetwork(cluster, intra)


def parse_config(path: str | Path) -> ExperimentConfig:
    path = resolve_config_path(path)
    text = path.read_text()
    source = str(path)
    try:
        root = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(mark.line + 1 if mark else None, str(getattr(exc, "problem", exc)), source) from None
    if not isinstance(raw, dict):
        raise ParseError(1, "config must be a mapping", source)
    ctx = _Ctx(source, _line_map(root))

    for key in raw:
        if key not in TOP_KEYS:
            raise ctx.parse_error(f"unknown key {key!r}", key)
    for key in ("matrix", "vector", "variant"):
        if key not in raw:
            raise ValidationError(key, "missing")
    variant = raw["variant"]
    if variant not in VARIANTS:
        raise ctx.parse_error(f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}", "variant")

    base = path.parent
    A = _load_array(raw["matrix"], base, ctx, "matrix", vector=False)
    b = _load_array(raw["vector"], base, ctx, "vector", vector=True)
    if A.shape[0] != b.shape[0]:
        raise ctx.invalid("vector", f"dimension {b.shape[0]} does not match the {A.shape[0]} rows of A")

    partition, rule = _build_partition(variant, A, b, raw.get("partition") or {}, ctx)
    try:
        network = _build_network(variant, partition, raw.get("topology"), ctx)
    except (ValidationError, ParseError):
        raise
    except LsqSwarmError as exc:
        raise ctx.invalid("topology", str(exc)) from None

    init = raw.get("init") or {}
    if not isinstance(init, dict):
        raise ctx.invalid("init", "expected a mapping")
    try:
        x0 = InitRule(init.get("x0", "zero"))
        z0 = InitRule(init.get("z0", "zero"))
    except ValueError as exc:
        raise ctx.invalid("init", str(exc)) from None
    seed = init.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ctx.invalid("seed", "must be a non-negative integer", "init", "seed")

    integ = raw.get("integrator") or {}
    if not isinstance(integ, dict):
        raise ctx.invalid("integrator", "expected a mapping")
    params = {}
    for key, value in integ.items():
        if key not in INTEGRATOR_KEYS:
            raise ctx.parse_error(f"unknown integrator key {key!r}", "integrator", key)
        kind = INTEGRATOR_KEYS[key]
        ok = isinstance(value, bool) if kind is bool else (
            isinstance(value, (int, float)) and not isinstance(value, bool) and (kind is float or isinstance(value, int))
        )
        if not ok or (kind is not bool and value <= 0):
            raise ctx.invalid(key, f"expected a positive {kind.__name__}", "integrator", key)
        params[key] = kind(value)

    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        raise ctx.invalid("output", "expected a directory name")
    verify_spectral = raw.get("verify_spectral", False)
    if not isinstance(verify_spectral, bool):
        raise ctx.invalid("verify_spectral", "expected true or false")

    cfg = ExperimentConfig(
        path, A, b, variant, partition, network, rule, x0, z0, seed, params, output, verify_spectral
    )
    try:
        cfg.sim_config()
    except LsqSwarmError as exc:
        raise ctx.invalid("integrator", str(exc)) from None
    return cfg


def output_dir(cfg: ExperimentConfig, out: str | Path | None = None) -> Path:
    """``--out`` wins; otherwise the config's ``output`` (or its stem) under the output root.

    The root is ``$LSQ_SWARM_OUT`` when set, else ``./out``.
    """
    if out is not None:
        return Path(out)
    root = Path(os.environ.get("LSQ_SWARM_OUT", "out"))
    return root / (cfg.output or cfg.source.stem)


def _floats(v) -> list[float]:
    return [float(x) for x in np.asarray(v, dtype=float).reshape(-1)]


def _partition_echo(cfg: ExperimentConfig) -> dict:
    p = cfg.partition
    out: dict[str, Any] = {"b_rule": cfg.b_rule.value}
    if isinstance(p, HomogeneousPartition):
        out["b_split"] = [_floats(r) for r in p.b_split]
    elif p.variant == "case1":
        out["col_widths"] = list(p.col_widths)
        out["row_heights"] = [list(h) for h in p.row_heights]
        out["b_cluster"] = [_floats(v) for v in p.b_cluster]
    else:
        out["row_heights"] = list(p.row_heights)
        out["col_widths"] = [list(w) for w in p.col_widths]
        out["b_blocks"] = [[_floats(v) for v in row] for row in p.b_blocks]
    return out


def summary_document(cfg: ExperimentConfig, sim: SimConfig, rec: RunRecord) -> dict:
    def opt(v):
        return None if v is None else float(v)

    return {
        "config": str(cfg.source),
        "variant": cfg.variant,
        "A": [_floats(r) for r in cfg.A],
        "b": _floats(cfg.b),
        "partition": _partition_echo(cfg),
        "topology": network_edge_lists(cfg.network),
        "init": {"x0": InitRule(sim.x0_rule).value, "z0": InitRule(sim.z0_rule).value, "seed": sim.seed},
        "integrator": {
            "method": "rk4",
            "h": sim.h,
            "h_used": rec.h,
            "t_end": sim.t_end,
            "record_every": sim.record_every,
            "tol_converge": sim.tol_converge,
            "tol_exact": sim.tol_exact,
            "auto_step": sim.auto_step,
            "stop_early": sim.stop_early,
        },
        "result": {
            "classification": rec.classification.value,
            "converged": rec.converged,
            "final_x": _floats(rec.final_x),
            "final_t": float(rec.times[-1]),
            "steps": rec.steps,
            "final_Ye": float(rec.Ye[-1]),
            "final_grad_norm": float(rec.grad_norm[-1]),
            "final_disagreement": float(rec.disagreement[-1]),
            "max_conservation_drift": float(rec.conservation_drift.max()),
            "rate_estimate": opt(rec.rate_estimate),
            "reference": rec.reference_kind,
            "reference_x": _floats(rec.reference_x),
        },
    }


def _override(cfg: ExperimentConfig, seed: int | None, h: float | None) -> ExperimentConfig:
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if h is not None:
        cfg = replace(cfg, integrator={**cfg.integrator, "h": h})
    return cfg


def run(cfg: ExperimentConfig, out: str | Path | None = None) -> int:
    sim = cfg.sim_config()
    rec = simulate(sim)
    d = output_dir(cfg, out)
    d.mkdir(parents=True, exist_ok=True)
    rec.write_csv(d / "timeseries.csv")
    doc = summary_document(cfg, sim, rec)
    (d / "summary.txt").write_text(yaml.safe_dump(doc, sort_keys=False, default_flow_style=None))
    if cfg.verify_spectral:
        rep = spectral_verify(compact_system(cfg.partition, cfg.network).Q)
        (d / "spectral.txt").write_text(rep.to_text())
    print(
        f"{cfg.source.name}: {rec.classification.value} x={np.array2string(rec.final_x, precision=6)} "
        f"Ye={rec.Ye[-1]:.6g} -> {d}"
    )
    return EXIT_NOT_CONVERGED if rec.classification is Classification.NOT_CONVERGED else EXIT_OK


def equivalence_error(cfg: ExperimentConfig, trials: int = EQUIVALENCE_STATES) -> float:
    """Worst relative gap between the agent-local field and Q on seeded random states."""
    p, net = cfg.partition, cfg.network
    cs = compact_system(p, net)
    f = make_field(p, net)
    template = init_state(p, net)
    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    for _ in range(trials):
        s = template.from_flat(rng.uniform(-1.0, 1.0, template.flat().size))
        gap = np.linalg.norm(stack_derivative(f(s), s) - cs.Q @ stack(s))
        worst = max(worst, float(gap / (1.0 + np.linalg.norm(s.flat()))))
    return worst


def hom_specialization_error(cfg: ExperimentConfig, trials: int = 10) -> float | None:
    """Gap between a scalar-block unit-gain case-2 field and the homogeneous field.

    Returns None when the config is not a case-2 system with equal cluster
    sizes and scalar blocks, or its cluster graph is not shared by all columns.
    """
    p, net = cfg.partition, cfg.network
    if p.variant != "case2" or len(set(p.cluster_sizes)) != 1:
        return None
    if any(h != 1 for h in p.row_heights) or any(w != 1 for ws in p.col_widths for w in ws):
        return None
    hp = make_homogeneous(p.A, p.b, BRule.CUSTOM, [[float(v[0]) for v in row] for row in p.b_blocks])
    grid = GridNetwork(p.m, p.n, tuple(net.intra_graphs), tuple(net.cluster_graph for _ in range(p.n)))
    try:
        q, dn = case2_from_homogeneous(hp, grid)
    except ShapeError:
        return None
    rng = np.random.default_rng(cfg.seed)
    t_hom = init_state(hp, grid)
    t_c2 = init_state(q, dn)
    worst = 0.0
    for _ in range(trials):
        v = rng.uniform(-1.0, 1.0, t_hom.flat().size)
        a = hom_field(t_hom.from_flat(v), hp, grid).flat()
        b = case2_field(t_c2.from_flat(v), q, dn, gain=1.0).flat()
        worst = max(worst, float(np.abs(a - b).max()))
    return worst


def verify(cfg: ExperimentConfig, out: str | Path | None = None) -> int:
    assert_assumptions(cfg.network)
    rep = spectral_verify(compact_system(cfg.partition, cfg.network).Q)
    results = [
        ("spectral.hurwitz_nonzero", rep.hurwitz_nonzero, f"max nonzero real part {rep.max_nonzero_real_part:.6g}"),
        ("spectral.zero_nondefective", rep.zero_nondefective, f"rank M {rep.rank_M}, rank M^2 {rep.rank_M_squared}"),
    ]
    eq = equivalence_error(cfg)
    results.append(("field_compact_equivalence", eq <= EQUIVALENCE_TOL, f"max relative gap {eq:.3g}"))
    spec = hom_specialization_error(cfg)
    if spec is not None:
        results.append(("hom_specialization", spec <= 1e-12, f"max gap {spec:.3g}"))
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    if out is not None or cfg.verify_spectral:
        d = output_dir(cfg, out)
        d.mkdir(parents=True, exist_ok=True)
        (d / "spectral.txt").write_text(rep.to_text())
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_ERROR


def _execute(command: str, path: str, out, seed, h) -> int:
    try:
        cfg = _override(parse_config(path), seed, h)
        return (run if command == "run" else verify)(cfg, out)
    except LsqSwarmError as exc:
        print(f"error: {path}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lsqswarm", description="Distributed least-squares swarm experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "simulate and write CSV/summary artifacts"),
                            ("verify", "check spectral properties and field/compact equivalence")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("configs", nargs="+", metavar="cfg", help="config file(s)")
        p.add_argument("--out", help="output directory (per-config subdirectories when several configs)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--h", type=float, help="override the RK4 step size")
        p.add_argument("--jobs", type=int, default=1, help="run configs in parallel")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.h is not None and not args.h > 0:
        print("error: --h must be positive", file=sys.stderr)
        return EXIT_ERROR
    many = len(args.configs) > 1

    def out_for(path: str):
        if args.out is None:
            return None
        return Path(args.out) / Path(path).stem if many else Path(args.out)

    jobs = [(args.command, c, out_for(c), args.seed, args.h) for c in args.configs]
    if args.jobs > 1 and many:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_execute, *zip(*jobs)))
    else:
        codes = [_execute(*j) for j in jobs]
    if EXIT_ERROR in codes:
        return EXIT_ERROR
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
