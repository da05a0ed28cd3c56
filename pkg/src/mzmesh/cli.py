"""Command-line front end: ``mzmesh <command> [flags]``.

Exit status is 0 when every verdict passes, 1 when an experiment fails and
2 for an invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import verify
from .domain import model_domain
from .errors import MZMeshError
from .integrate import QuadratureSpec
from .mesh import MeshParams, build_mesh, locate_cell

COMMANDS = ("build-mesh", "mz", "bernstein", "markov", "sharpness", "lemma73", "osc-check", "steklov", "sanity")
NODE_CHOICES = ("center", "random", "corner")
DEFAULT_N_LIST = {"bernstein": [4, 8, 16, 32], "markov": [4, 8, 16, 32], "sharpness": [8, 16, 32, 64], "lemma73": [1, 2, 4, 8, 16, 32]}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Fully resolved run configuration; every flag has a key of the same name."""

    command: str
    domain: str | None = None
    d: int = 2
    alpha: float | None = None
    n: int | None = None
    n_list: list | None = None
    p: float = 2.0
    epsilon: float = 0.25
    mu: float = 2.0
    beta: float | None = None
    b: int | None = None
    seed: int | None = None
    ensemble: int = 50
    nodes: str = "center"
    c0: float = 2.0
    quad_order: int | None = None
    rel_tol: float | None = None
    out_json: str | None = None
    out_csv: str | None = None
    threads: int = 1
    force: bool = False

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.d < 2:
            raise ConfigError("--d must be at least 2")
        if self.alpha is not None and not 1.0 <= self.alpha <= 2.0:
            raise ConfigError("--alpha must lie in [1, 2]")
        if self.n is not None and self.n < 1:
            raise ConfigError("--n must be a positive integer")
        if self.n_list is not None and (len(self.n_list) < 2 or any(int(v) != v or v < 1 for v in self.n_list)):
            raise ConfigError("--n-list needs at least two positive integers")
        if not self.p > 0:
            raise ConfigError("--p must be positive")
        if not 0 < self.epsilon <= 1:
            raise ConfigError("--epsilon must lie in (0, 1]")
        if not self.mu > 1:
            raise ConfigError("--mu must exceed 1")
        if self.b is not None and self.b < 1:
            raise ConfigError("--b must be a positive integer")
        if self.seed is not None and not 0 <= self.seed < 2**64:
            raise ConfigError("--seed must be a 64-bit unsigned integer")
        if self.ensemble < 1:
            raise ConfigError("--ensemble must be positive")
        if self.nodes not in NODE_CHOICES:
            raise ConfigError(f"--nodes must be one of {NODE_CHOICES}")
        if not self.c0 > 0:
            raise ConfigError("--c0 must be positive")
        if self.quad_order is not None and self.quad_order < 2:
            raise ConfigError("--quad-order must be at least 2")
        if self.rel_tol is not None and not self.rel_tol > 0:
            raise ConfigError("--rel-tol must be positive")
        if self.threads < 1:
            raise ConfigError("--threads must be positive")
        self.resolve_domain()

    def resolve_domain(self):
        """Reconcile --domain and --alpha; returns the domain id."""
        if self.domain is None:
            self.domain = f"alpha:{self.alpha:g}" if self.alpha is not None else "alpha:1.5"
        try:
            dom = model_domain(self.domain, self.d)
        except MZMeshError as exc:
            raise ConfigError(str(exc)) from exc
        if self.alpha is None:
            self.alpha = dom.g.alpha
        elif abs(self.alpha - dom.g.alpha) > 1e-12:
            raise ConfigError(f"--alpha {self.alpha:g} contradicts domain {self.domain} (alpha {dom.g.alpha:g})")
        return self.domain

    def quad_spec(self):
        if self.quad_order is None and self.rel_tol is None:
            return None
        kw = {}
        if self.quad_order is not None:
            kw.update(outer_order=self.quad_order, panel_order=self.quad_order)
        if self.rel_tol is not None:
            kw["rel_tol"] = self.rel_tol
        return QuadratureSpec(**kw)


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file with any of the flag keys")
    common.add_argument("--domain", help="model domain id: quad | trig | alpha:<a>")
    common.add_argument("--d", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--n", type=int)
    common.add_argument("--n-list", type=lambda s: [int(v) for v in s.split(",")], help="comma-separated degrees")
    common.add_argument("--p", type=float)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--mu", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--b", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--ensemble", type=int)
    common.add_argument("--nodes", choices=NODE_CHOICES)
    common.add_argument("--c0", type=float)
    common.add_argument("--quad-order", type=int)
    common.add_argument("--rel-tol", type=float)
    common.add_argument("--out-json")
    common.add_argument("--out-csv")
    common.add_argument("--threads", type=int)
    common.add_argument("--force", action="store_true", default=None)
    common.add_argument("--print-config", action="store_true")
    parser = argparse.ArgumentParser(prog="mzmesh", description="Marcinkiewicz-Zygmund meshes and polynomial inequality experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def resolve_config(argv):
    """Merge defaults, the optional JSON config file and explicit flags (flags win)."""
    args = _parser().parse_args(argv)
    known = {f.name for f in fields(RunConfig)}
    values = {}
    env_threads = os.environ.get("MZMESH_THREADS")
    if env_threads:
        try:
            values["threads"] = int(env_threads)
        except ValueError as exc:
            raise ConfigError("MZMESH_THREADS must be an integer") from exc
    if args.config is not None:
        try:
            data = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        data = {k.replace("-", "_"): v for k, v in data.items()}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "command" in data and data["command"] != args.command:
            raise ConfigError("config file command differs from the command line")
        values.update(data)
    for key in known - {"command"}:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    values["command"] = args.command
    cfg = RunConfig(**values)
    if cfg.seed is None:
        cfg.seed = int(np.random.SeedSequence().entropy % 2**64)
    cfg.validate()
    return cfg, args.print_config


def _write(cfg, json_text, csv_text):
    if cfg.out_json:
        Path(cfg.out_json).write_text(json_text + ("" if json_text.endswith("\n") else "\n"))
    if cfg.out_csv:
        Path(cfg.out_csv).write_text(csv_text)


def _build_mesh(cfg):
    dom = model_domain(cfg.domain, cfg.d)
    if cfg.n is None:
        raise ConfigError("build-mesh needs --n")
    params = MeshParams(cfg.n, cfg.epsilon, cfg.alpha, cfg.c0, cfg.nodes, cfg.seed)
    mesh = build_mesh(dom, params, force=cfg.force)
    target = dom.inner_box.volume * dom.depth_G
    exact = abs(mesh.measures.sum() - target) <= 1e-12 * target
    inside = bool(np.all(dom.contains(mesh.nodes, "G")))
    located = bool(np.all(locate_cell(mesh, mesh.nodes) == np.arange(mesh.num_cells)))
    ok = exact and inside and located
    _write(cfg, mesh.to_json(indent=1), mesh.to_csv())
    print(f"build-mesh: {'PASS' if ok else 'FAIL'} (m={mesh.m}, cells={mesh.num_cells}, measure sum exact={exact}, nodes in cells={located})")
    return ok


def run(cfg: RunConfig):
    """Run one command; returns True iff its verdict passes."""
    if cfg.command == "build-mesh":
        return _build_mesh(cfg)
    quad = cfg.quad_spec()
    threads = cfg.threads
    n_list = cfg.n_list or DEFAULT_N_LIST.get(cfg.command)
    c = cfg.command
    if c == "mz":
        if cfg.n is None:
            raise ConfigError("mz needs --n")
        rep = verify.mz_experiment(cfg.domain, cfg.n, cfg.p, cfg.epsilon, cfg.ensemble, cfg.seed, cfg.nodes, cfg.c0, cfg.d, quad, threads, cfg.force)
    elif c == "bernstein":
        rep = verify.bernstein_experiment(model_domain(cfg.domain, 2), n_list, cfg.p, cfg.alpha, cfg.ensemble, cfg.seed, quad, threads)
    elif c == "markov":
        rep = verify.markov_experiment(model_domain(cfg.domain, 2), n_list, cfg.p, cfg.alpha, cfg.mu, cfg.ensemble, cfg.seed, quad, threads)
    elif c == "sharpness":
        if not cfg.domain.startswith("alpha:"):
            raise ConfigError("sharpness needs an alpha:<a> domain")
        rep = verify.sharpness_experiment(cfg.alpha, n_list, cfg.p, cfg.d, cfg.beta, cfg.b, quad=quad, threads=threads)
    elif c == "lemma73":
        betas = (cfg.beta,) if cfg.beta is not None else (-0.5, 0.0, 0.5)
        rep = verify.lemma73_family_check(tuple(n_list), betas, (cfg.p,), seed=cfg.seed)
    elif c == "osc-check":
        rep = verify.cell_oscillation_check(cfg.domain, cfg.n or 8, cfg.p, cfg.epsilon, cfg.ensemble, cfg.seed, cfg.c0, d=cfg.d, quad=quad, threads=threads)
    elif c == "steklov":
        alphas = (cfg.alpha,) if cfg.domain.startswith("alpha:") and cfg.alpha < 2 else (1.25, 1.5, 1.75)
        rep = verify.steklov_experiment(alphas)
    else:
        rep = verify.classical_sanity_suite(seed=cfg.seed)
    rep.config["seed"] = cfg.seed
    _write(cfg, rep.to_json(), rep.to_csv())
    print(rep.verdict_line())
    return rep.verdict


def main(argv=None):
    try:
        cfg, show = resolve_config(sys.argv[1:] if argv is None else argv)
    except (ConfigError, MZMeshError, TypeError) as exc:
        print(f"mzmesh: invalid configuration: {exc}", file=sys.stderr)
        return 2
    if show:
        print(json.dumps(asdict(cfg), indent=2, sort_keys=True))
    try:
        ok = run(cfg)
    except (ConfigError, MZMeshError) as exc:
        print(f"mzmesh: invalid configuration: {exc}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
