"""Command line runner for the transfer experiments and stability reports.

Usage::

    spectral-transfer <experiment> [--config FILE] [--out PATH] [--seed S] [--format csv|json]

Exit codes: 0 on success, 2 for configuration errors, 3 for numerical
failures.  ``SPECTRAL_TRANSFER_THREADS`` caps the number of worker threads
used to evaluate grid points; rows are always emitted in grid order.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .coarsen import Partition, collapse, collapse_sweep, load_partition, negative_result_probe
from .errors import GraphError, SpectralTransferError
from .graph_core import (
    OperatorKind,
    WeightedGraph,
    characteristic_operator,
    graph_from_dict,
    load_graph,
)
from .network import (
    Layer,
    Network,
    Nonlinearity,
    aggregate_values,
    load_network,
    network_from_dict,
    random_filter_bank,
)
from .operator_algebra import operator_norm, resolvent, spectrum
from .stability import empirical_lipschitz, signal_bound, unit_samples
from .transfer_cases import (
    circle_identification,
    cycle_eigenpairs,
    cycle_pair,
    deflect,
    effective_molecule,
    load_molecule,
    methane,
    missing_mode_closed_form,
    molecular_graph,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EXPERIMENTS = ("exp-scaling", "exp-collapse", "exp-circle", "exp-molecule",
               "exp-negative", "stability-report")

SCALING_MATRIX = np.array([
    [0, 16, 7, 18, 19],
    [16, 0, 6, 22, 3],
    [7, 6, 0, 1, 90],
    [18, 22, 1, 0, 23],
    [19, 3, 90, 23, 0],
], dtype=float)

# Fine graph for the collapse experiment at delta = 1; the block formed by
# node 3 (the star) and nodes 4-7 is scaled by 1/delta.
COLLAPSE_MATRIX = np.array([
    [0, 4, 2, 10, 4, 5, 6, 7],
    [4, 0, 17, 9, 8, 9, 10, 11],
    [2, 17, 0, 42, 12, 13, 14, 15],
    [10, 9, 42, 0, 16, 7, 18, 19],
    [4, 8, 12, 16, 0, 6, 22, 3],
    [5, 9, 13, 7, 6, 0, 1, 90],
    [6, 10, 14, 18, 22, 1, 0, 23],
    [7, 11, 15, 19, 3, 90, 23, 0],
], dtype=float)
COLLAPSE_PARTITION = Partition([0, 1, 2], 3, [4, 5, 6, 7])

DEFAULTS = {
    "exp-scaling": {"inv_delta_a": [10 ** (1 + 0.5 * i) for i in range(7)], "omega": -1.0},
    "exp-collapse": {"deltas": np.logspace(-1, -4, 8).tolist(), "omega": -1.0,
                     "powers": [1, 2, 3]},
    "exp-circle": {"N": [11, 21, 51, 101, 201, 401], "omega": -1.0},
    "exp-molecule": {"t": [round(0.1 * i, 10) for i in range(10)], "p": 2.0, "inputs": 100,
                     "layers": 2, "channels": 16, "input_channels": 1, "max_order": 11,
                     "coeff_range": [-100.0, 100.0], "nonlinearity": "relu", "omega": -1.0,
                     "moved_atom": 2, "target_atom": 0, "star_mu": 7.0},
    "exp-negative": {"deltas": np.logspace(-1, -4, 8).tolist()},
    "stability-report": {"samples": 200, "empirical": True},
}


class ConfigError(SpectralTransferError, ValueError):
    """Invalid experiment configuration."""


def _threads() -> int:
    raw = os.environ.get("SPECTRAL_TRANSFER_THREADS")
    if raw is None:
        return max(1, os.cpu_count() or 1)
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigError(f"SPECTRAL_TRANSFER_THREADS must be an integer, got {raw!r}") from exc


def _grid_map(fn: Callable, grid: Sequence) -> list:
    """Evaluate ``fn`` over the grid with a thread pool, keeping grid order."""
    if not grid:
        raise ConfigError("grid must not be empty")
    workers = min(_threads(), len(grid))
    if workers == 1:
        return [fn(x) for x in grid]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, grid))


def _complex(value) -> complex:
    if isinstance(value, (list, tuple)):
        return complex(float(value[0]), float(value[1]))
    return complex(value)


def _merged(name: str, config: dict | None) -> dict:
    cfg = dict(DEFAULTS[name])
    cfg.update(config or {})
    return cfg


def exp_scaling(config: dict | None = None) -> list[dict]:
    """Scaled copies of a 5-node graph whose inverse scales differ by one.

    The Laplacian difference stays at the norm of the unscaled Laplacian
    while the resolvent difference at ``omega`` shrinks like the product
    of the two scales.
    """
    cfg = _merged("exp-scaling", config)
    omega = _complex(cfg["omega"])
    base = WeightedGraph(np.array(cfg.get("matrix", SCALING_MATRIX), float),
                         np.ones(len(cfg.get("matrix", SCALING_MATRIX))))
    lap1 = operator_norm(characteristic_operator(base, OperatorKind.LAPLACIAN))

    def row(inv_a):
        inv_a = float(inv_a)
        if inv_a <= 1:
            raise ConfigError("inverse scales must exceed 1")
        Ta = characteristic_operator(base.with_weights(W=base.W * inv_a), "laplacian")
        Tb = characteristic_operator(base.with_weights(W=base.W * (inv_a - 1.0)), "laplacian")
        diff = operator_norm(Ta.matrix - Tb.matrix)
        rdiff = operator_norm(resolvent(Ta, omega).matrix - resolvent(Tb, omega).matrix)
        return {"inv_delta_a": inv_a, "laplacian_diff_op": diff, "resolvent_diff_op": rdiff,
                "laplacian_unit_op": lap1}

    return _grid_map(row, [float(x) for x in cfg["inv_delta_a"]])


def _collapse_inputs(cfg: dict) -> tuple[WeightedGraph, Partition]:
    if "graph" in cfg:
        g = cfg["graph"]
        base = load_graph(g) if isinstance(g, str) else graph_from_dict(g)
    else:
        base = WeightedGraph(COLLAPSE_MATRIX, np.ones(8))
    if "partition" in cfg:
        p = cfg["partition"]
        part = load_partition(p) if isinstance(p, str) else Partition.from_dict(p)
    else:
        part = COLLAPSE_PARTITION
    return base, part


def exp_collapse(config: dict | None = None) -> list[dict]:
    """Quasi-unitarity, closeness and resolvent-monomial defects along a delta grid."""
    cfg = _merged("exp-collapse", config)
    base, part = _collapse_inputs(cfg)
    omega = _complex(cfg["omega"])
    powers = [int(k) for k in cfg["powers"]]
    deltas = [float(d) for d in cfg["deltas"]]
    if any(d <= 0 for d in deltas):
        raise ConfigError("deltas must be positive")
    return _grid_map(lambda d: collapse_sweep(base, part, [d], omega, powers=powers)[0], deltas)


def exp_circle(config: dict | None = None) -> list[dict]:
    """Resolvent closeness and raw commutator of the ``N`` and ``N+1`` cycles."""
    cfg = _merged("exp-circle", config)
    omega = _complex(cfg["omega"])
    Ns = [int(n) for n in cfg["N"]]
    for N in Ns:
        if N < 3 or N % 2 == 0:
            raise ConfigError(f"cycle sizes must be odd and at least 3, got {N}")

    def row(N):
        g, g2 = cycle_pair(N)
        T, T2 = characteristic_operator(g, "laplacian"), characteristic_operator(g2, "laplacian")
        J, Jt = circle_identification(N)
        R, R2 = resolvent(T, omega).matrix, resolvent(T2, omega).matrix
        numeric = np.sort(spectrum(T).eigenvalues.real)
        analytic = np.sort(cycle_eigenpairs(N).eigenvalues.real)
        return {
            "N": N,
            "resolvent_closeness": operator_norm(J @ R - R2 @ J),
            "operator_commutator": operator_norm(J @ T.matrix - T2.matrix @ J),
            "missing_mode_defect": operator_norm((np.eye(N + 1) - J @ Jt) @ R2),
            "missing_mode_closed_form": missing_mode_closed_form(N),
            "eigenvalue_rel_error": float(np.max(np.abs(numeric - analytic)) / np.max(analytic)),
        }

    return _grid_map(row, Ns)


def exp_negative(config: dict | None = None) -> list[dict]:
    """Two-node collapse defects for adjacency, normalized Laplacian and Laplacian."""
    cfg = _merged("exp-negative", config)
    deltas = [float(d) for d in cfg["deltas"]]
    if not deltas or any(d <= 0 for d in deltas):
        raise ConfigError("deltas must be positive and nonempty")
    cols = {"eps_adjacency": OperatorKind.ADJACENCY,
            "eps_normalized": OperatorKind.NORMALIZED_LAPLACIAN,
            "eps_laplacian": OperatorKind.LAPLACIAN}
    tables = {c: negative_result_probe(k, deltas) for c, k in cols.items()}
    return [{"delta": d, **{c: tables[c][i]["eps"] for c in cols}} for i, d in enumerate(deltas)]


def _molecule_bank(cfg: dict, seed: int):
    rng = np.random.default_rng(seed)
    omega = _complex(cfg["omega"])
    K, order, lim = int(cfg["channels"]), int(cfg["max_order"]), tuple(cfg["coeff_range"])
    banks = [random_filter_bank(rng, K, int(cfg["input_channels"]), "hol", order, lim, omega)]
    for _ in range(int(cfg["layers"]) - 1):
        banks.append(random_filter_bank(rng, K, K, "hol", order, lim, omega))
    return banks


def _gcn(banks, graph: WeightedGraph, rho: Nonlinearity) -> Network:
    return Network([Layer(b, graph, OperatorKind.LAPLACIAN, rho) for b in banks])


def exp_molecule(config: dict | None = None, seed: int = 0) -> list[dict]:
    """Readout transfer error between a deflected molecule and its merged description.

    One atom moves towards another along a straight line; the pair is
    merged into a single node.  The same random network runs on the fine
    molecular graph and on the merged graph, and the error
    ``||Psi(f) - Psi_fine(J f)||`` is averaged over random unit inputs.
    The merged graph is built by collapsing the fine graph (with the
    merged node weight set to ``star_mu``) and, for comparison, as the
    Coulomb graph of the merged molecule.
    """
    cfg = _merged("exp-molecule", config)
    mol = load_molecule(cfg["molecule"]) if "molecule" in cfg else methane()
    moved, target = int(cfg["moved_atom"]), int(cfg["target_atom"])
    p = float(cfg["p"])
    if p < 2:
        raise ConfigError("p must be at least 2")
    ts = [float(t) for t in cfg["t"]]
    if any(not 0 <= t < 1 for t in ts):
        raise ConfigError("t values must lie in [0, 1)")
    rho = Nonlinearity(cfg["nonlinearity"])
    banks = _molecule_bank(cfg, seed)
    eff, part = effective_molecule(mol, [moved, target], target)
    physical = molecular_graph(eff)

    def row(t):
        m = deflect(mol, moved, target, t)
        fine = molecular_graph(m)
        pair = collapse(fine, part, mu_override={target: float(cfg["star_mu"])})
        net_fine = _gcn(banks, fine, rho)
        out = {"t": t, "inv_distance": 1.0 / float(np.linalg.norm(m.X[moved] - m.X[target]))}
        for label, coarse in (("", pair.coarse), ("_physical", physical)):
            # same raw draws for every t, normalized in the coarse graph's own weights
            inputs = unit_samples(np.random.default_rng([seed, 1]), int(cfg["input_channels"]),
                                  coarse.mu, int(cfg["inputs"]))
            net = _gcn(banks, coarse, rho)
            errs = []
            for f in inputs:
                a = aggregate_values(net.run(f), coarse.mu, p)
                b = aggregate_values(net_fine.run(f @ pair.J.T), fine.mu, p)
                errs.append(float(np.linalg.norm(a - b)))
            out[f"mean_transfer_error{label}"] = float(np.mean(errs))
            out[f"std_transfer_error{label}"] = float(np.std(errs))
        return out

    return _grid_map(row, ts)


def stability_report(network, samples: int = 200, empirical: bool = True,
                     seed: int = 0) -> dict:
    """Certified Lipschitz bound of a network, optionally with a sampled estimate."""
    if isinstance(network, (str, Path)):
        net = load_network(network)
    elif isinstance(network, dict):
        net = network_from_dict(network)
    else:
        net = network
    rep = signal_bound(net)
    out = rep.to_dict()
    out["seed"] = seed
    out["samples"] = samples
    out["per_layer_product"] = rep.value
    if empirical:
        out["empirical_lipschitz"] = empirical_lipschitz(net, samples, seed)
    return out


def _format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def render_rows(name: str, rows: list[dict], seed: int, fmt: str) -> str:
    """Serialize rows deterministically, with an experiment/schema header."""
    columns = list(rows[0].keys()) if rows else []
    if fmt == "json":
        payload = {"experiment": name, "schema": SCHEMA_VERSION, "seed": seed,
                   "columns": columns, "rows": [[r[c] for c in columns] for r in rows]}
        return json.dumps(payload, indent=2) + "\n"
    buf = io.StringIO()
    buf.write(f"# experiment={name} schema={SCHEMA_VERSION} seed={seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_format_value(r[c]) for c in columns])
    return buf.getvalue()


def run(name: str, config: dict | None, seed: int = 0) -> list[dict] | dict:
    if name == "exp-scaling":
        return exp_scaling(config)
    if name == "exp-collapse":
        return exp_collapse(config)
    if name == "exp-circle":
        return exp_circle(config)
    if name == "exp-molecule":
        return exp_molecule(config, seed)
    if name == "exp-negative":
        return exp_negative(config)
    if name == "stability-report":
        cfg = _merged("stability-report", config)
        target = cfg.get("network")
        if target is None and "layers" in cfg:
            target = cfg
        if target is None:
            raise ConfigError("stability-report needs a network description")
        if isinstance(target, str) and "_base" in cfg:
            target = str(Path(cfg["_base"]) / target)
        if isinstance(target, dict) and "_base" in cfg:
            target = network_from_dict(target, cfg["_base"])
        return stability_report(target, int(cfg["samples"]), bool(cfg["empirical"]), seed)
    raise ConfigError(f"unknown experiment {name!r}")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    data["_base"] = str(Path(path).resolve().parent)
    return data


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectral-transfer",
        description="Run graph transferability experiments and stability reports.")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", help="JSON file with grid and model parameters")
    parser.add_argument("--out", help="output path (default: stdout)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _load_config(args.config)
        for key in [k for k in config if k != "_base" and k not in DEFAULTS[args.experiment]
                    and k not in _EXTRA_KEYS.get(args.experiment, ())]:
            raise ConfigError(f"unknown config key {key!r} for {args.experiment}")
        result = run(args.experiment, config, args.seed)
        if isinstance(result, dict):
            text = json.dumps(result, indent=2, sort_keys=True) + "\n"
        else:
            text = render_rows(args.experiment, result, args.seed, args.format)
    except (ConfigError, GraphError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        if isinstance(exc, SpectralTransferError) and not isinstance(exc, GraphError):
            print(f"numerical failure: {exc}", file=sys.stderr)
            return 3
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SpectralTransferError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


_EXTRA_KEYS = {
    "exp-scaling": ("matrix",),
    "exp-collapse": ("graph", "partition"),
    "exp-molecule": ("molecule",),
    "stability-report": ("network", "layers", "seed", "name", "description"),
}


if __name__ == "__main__":
    sys.exit(main())
