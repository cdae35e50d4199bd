"""Command-line front end.

Exit codes: 0 success, 2 parse or configuration error, 3 numerical
divergence, 4 non-convergence escalated by ``--strict``.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import sys
import time
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from oscgroup import __version__, fixtures, io, pipelines
from oscgroup.coupling import (
    CouplingGraph,
    build_cluster_coupling,
    build_contour_coupling,
    build_segmentation_coupling,
)
from oscgroup.errors import ConfigError, DivergenceError, NonConvergenceWarning, ParseError, TileError
from oscgroup.network import DEFAULT_PERIODS, NetworkSpec, default_period, simulate
from oscgroup.oscillator import input_range
from oscgroup.stability import check_sync_condition, metric_gain_bound

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_NONCONVERGENCE = 4

TASKS = ("cluster", "contour", "segment", "simulate", "check-stability", "fixtures")
FIXTURES = ("two-blobs", "uniform-plus-cluster", "random-grid", "contour-vertical",
            "contour-crossing", "contour-curved", "three-level", "two-level", "gray-bands")


@dataclass
class RunConfig:
    """Everything needed to reproduce a run. ``None`` means "task default".

    Task defaults: cluster m_neighbors=16, beta_t=2, 20 periods; contour
    delta=20 deg, gamma=10 deg, w=1, 20 periods; segment w=5, beta_t from a
    noise estimate, 6 periods; feedback k1=1, k2=0.01, 12 periods max.
    """

    task: str = "cluster"
    input: str | None = None
    out: str = "out"
    seed: int = 0
    dt: float | None = None
    periods: float | None = None
    beta_t: float | None = None
    w: int | None = None
    m_neighbors: int = pipelines.CLUSTER_M
    mode: str = "background"
    delta_deg: float = 20.0
    gamma_deg: float = 10.0
    min_cells: int = pipelines.MIN_CONTOUR_CELLS
    k: int | None = None
    tiles: tuple[int, int] = (1, 1)
    feedback: bool = False
    k1: float = 1.0
    k2: float = 0.01
    max_periods: int = 12
    gain: float | None = None
    theta: float = 0.95
    emit_traces: bool = False
    strict: bool = False
    pair_gain: float | None = None
    nodes: int | None = None
    fixture: str | None = None
    sigma: float | None = None
    jitter: float | None = None
    sim_task: str = "cluster"

    def validate(self) -> "RunConfig":
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.dt is not None and not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError("dt must be positive")
        if self.periods is not None and not self.periods > 0:
            raise ConfigError("periods must be positive")
        if self.beta_t is not None and not self.beta_t > 0:
            raise ConfigError("beta_t must be positive")
        if self.w is not None and self.w < 1:
            raise ConfigError("w must be >= 1")
        if self.m_neighbors < 1:
            raise ConfigError("m_neighbors must be >= 1")
        if self.mode not in ("background", "fixed"):
            raise ConfigError("mode must be 'background' or 'fixed'")
        if self.mode == "fixed" and self.task == "cluster" and self.k is None:
            raise ConfigError("fixed mode needs k")
        if self.k is not None and self.k < 1:
            raise ConfigError("k must be >= 1")
        if len(self.tiles) != 2 or min(self.tiles) < 1:
            raise ConfigError("tiles must be two positive counts")
        if self.feedback and tuple(self.tiles) != (1, 1):
            raise ConfigError("--feedback and --tiles cannot be combined")
        if self.feedback and self.k is None:
            self.k = 3
        if self.max_periods < 1:
            raise ConfigError("max_periods must be >= 1")
        if not 0 < self.theta <= 1:
            raise ConfigError("theta must lie in (0, 1]")
        if self.sim_task not in ("cluster", "contour", "segment"):
            raise ConfigError("sim_task must be cluster, contour or segment")
        if self.fixture is not None and self.fixture not in FIXTURES:
            raise ConfigError(f"unknown fixture {self.fixture!r}; choose from {', '.join(FIXTURES)}")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["tiles"] = list(self.tiles)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        data = dict(data)
        if "tiles" in data:
            data["tiles"] = tuple(int(t) for t in data["tiles"])
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)


@dataclass
class RunManifest:
    config: dict
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    engine: str = f"oscgroup {__version__}"
    status: str = "ok"

    def write(self, out_dir: Path) -> Path:
        text = json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n"
        return io.atomic_write(out_dir / "manifest.json", text)


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _tiles(text: str) -> tuple[int, int]:
    try:
        r, c = text.lower().split("x")
        return int(r), int(c)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected RxC, got {text!r}") from exc


# -- argument parsing -------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _global_options(p, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d, help="random seed (default 0)")
    p.add_argument("--dt", type=float, default=d, help="integration step (default: largest stable <= 0.05)")
    p.add_argument("--periods", type=float, default=d, help="simulation length in oscillation periods")
    p.add_argument("--out", default=d, help="output directory (default ./out)")
    p.add_argument("--config", default=d, help="JSON run configuration; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oscgroup", description="Visual grouping with synchronizing oscillator networks.")
    parser.add_argument("--version", action="version", version=f"oscgroup {__version__}")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="task", parser_class=_Parser)
    S = argparse.SUPPRESS

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        _global_options(p, suppress=True)
        return p

    p = add("cluster", "group a point set (CSV x,y)")
    p.add_argument("input", nargs="?", default=S)
    p.add_argument("--beta", dest="beta_t", type=float, default=S)
    p.add_argument("--m", dest="m_neighbors", type=int, default=S)
    p.add_argument("--mode", choices=("background", "fixed"), default=S)
    p.add_argument("--k", type=int, default=S)
    p.add_argument("--gain", type=float, default=S)
    p.add_argument("--theta", type=float, default=S)
    p.add_argument("--emit-traces", dest="emit_traces", action="store_true", default=S)

    p = add("contour", "detect contours in an orientation grid (degrees)")
    p.add_argument("input", nargs="?", default=S)
    p.add_argument("--delta", dest="delta_deg", type=float, default=S)
    p.add_argument("--gamma", dest="gamma_deg", type=float, default=S)
    p.add_argument("--w", type=int, default=S)
    p.add_argument("--min-cells", dest="min_cells", type=int, default=S)
    p.add_argument("--gain", type=float, default=S)
    p.add_argument("--theta", type=float, default=S)
    p.add_argument("--emit-traces", dest="emit_traces", action="store_true", default=S)

    p = add("segment", "segment an 8-bit graymap")
    p.add_argument("input", nargs="?", default=S)
    p.add_argument("--beta", dest="beta_t", type=float, default=S)
    p.add_argument("--w", type=int, default=S)
    p.add_argument("--k", type=int, default=S)
    p.add_argument("--theta", type=float, default=S)
    p.add_argument("--feedback", action="store_true", default=S)
    p.add_argument("--k1", type=float, default=S)
    p.add_argument("--k2", type=float, default=S)
    p.add_argument("--max-periods", dest="max_periods", type=int, default=S)
    p.add_argument("--tiles", type=_tiles, default=S, help="RxC tiling for the multi-layer mode")
    p.add_argument("--strict", action="store_true", default=S, help="exit 4 if feedback does not settle")

    p = add("simulate", "simulate the network a task input defines and dump traces")
    p.add_argument("input", nargs="?", default=S)
    p.add_argument("--task", dest="sim_task", choices=("cluster", "contour", "segment"), default=S)
    p.add_argument("--pair", dest="pair_gain", type=float, default=S,
                   help="two oscillators with equal drive and this gain instead of an input file")
    p.add_argument("--beta", dest="beta_t", type=float, default=S)
    p.add_argument("--gain", type=float, default=S)

    p = add("check-stability", "evaluate the sufficient synchronization condition")
    p.add_argument("input", nargs="?", default=S, help="edge list (i,j,k); omit with --pair/--nodes")
    p.add_argument("--pair", dest="pair_gain", type=float, default=S, help="two-node graph with this gain")
    p.add_argument("--nodes", type=int, default=S, help="edgeless graph with this many nodes")

    p = add("fixtures", "write a synthetic input and its ground truth")
    p.add_argument("fixture", choices=FIXTURES)
    p.add_argument("--sigma", type=float, default=S)
    p.add_argument("--jitter", type=float, default=S)
    return parser


def resolve_config(argv) -> RunConfig:
    """Defaults, then ``--config``, then explicit flags."""
    ns = vars(build_parser().parse_args(argv))
    task = ns.pop("task")
    if task is None:
        raise ConfigError(f"a subcommand is required: {', '.join(TASKS)}")
    data = {}
    cfg_path = ns.pop("config", None)
    if cfg_path:
        try:
            data = RunConfig.from_json(Path(cfg_path).read_text()).to_dict()
        except OSError as exc:
            raise ConfigError(f"cannot read config {cfg_path}: {exc}") from exc
    data.update({k: v for k, v in ns.items() if v is not None})
    data["task"] = task
    return RunConfig.from_dict(data).validate()


# -- commands ---------------------------------------------------------------

def _periods(cfg: RunConfig, default: float) -> float:
    return default if cfg.periods is None else cfg.periods


def _need_input(cfg: RunConfig) -> Path:
    if not cfg.input:
        raise ConfigError(f"{cfg.task} needs an input file")
    path = Path(cfg.input)
    if not path.is_file():
        raise ConfigError(f"input file {path} does not exist")
    return path


def cmd_cluster(cfg: RunConfig, out: Path, manifest: RunManifest) -> int:
    path = _need_input(cfg)
    pts = io.read_points(path)
    manifest.inputs[str(path)] = _digest(path)
    res = pipelines.run_point_clustering(
        pts, cfg.m_neighbors, pipelines.CLUSTER_BETA if cfg.beta_t is None else cfg.beta_t,
        mode=cfg.mode, k=cfg.k, seed=cfg.seed, periods=_periods(cfg, DEFAULT_PERIODS),
        gain=pipelines.CLUSTER_GAIN if cfg.gain is None else cfg.gain, theta=cfg.theta,
        dt=cfg.dt, keep_traces=cfg.emit_traces,
    )
    manifest.outputs.append(str(io.write_labels(out / "labels.csv", res.labels)))
    manifest.outputs.append(str(io.write_series(out / "coincidence.csv", *res.coincidence)))
    if cfg.emit_traces:
        manifest.outputs.append(str(io.write_traces(out / "traces.csv", res.traces)))
    print(f"{res.n_groups} group(s), {int(np.sum(res.labels < 0))} outlier(s), coincidence peak {res.peak}")
    return EXIT_OK


def _render_contours(shape, masks, scale: int = 8) -> np.ndarray:
    img = np.full(shape, 40.0)
    for i, m in enumerate(masks):
        img[m] = 255.0 - (150.0 * i / max(1, len(masks) - 1) if len(masks) > 1 else 0.0)
    return np.kron(img, np.ones((scale, scale)))


def cmd_contour(cfg: RunConfig, out: Path, manifest: RunManifest) -> int:
    path = _need_input(cfg)
    theta = io.read_grid(path)
    manifest.inputs[str(path)] = _digest(path)
    res = pipelines.run_contour_integration(
        theta, math.radians(cfg.delta_deg), math.radians(cfg.gamma_deg), 1 if cfg.w is None else cfg.w,
        seed=cfg.seed, periods=_periods(cfg, DEFAULT_PERIODS),
        gain=pipelines.CONTOUR_GAIN if cfg.gain is None else cfg.gain, sync_theta=cfg.theta,
        min_cells=cfg.min_cells, dt=cfg.dt, keep_traces=cfg.emit_traces,
    )
    manifest.outputs.append(str(io.write_cells(out / "contours.csv", res.cells())))
    manifest.outputs.append(str(io.write_pgm(out / "overlay.pgm", _render_contours(res.shape, res.masks))))
    if cfg.emit_traces:
        manifest.outputs.append(str(io.write_traces(out / "traces.csv", res.traces)))
    print(f"{res.count} contour(s): " + ", ".join(str(int(m.sum())) for m in res.masks))
    return EXIT_OK


def _mean_gray_render(img, labels) -> np.ndarray:
    flat = labels.ravel()
    means = np.bincount(flat, weights=np.asarray(img, float).ravel()) / np.bincount(flat)
    return means[labels]


def cmd_segment(cfg: RunConfig, out: Path, manifest: RunManifest) -> int:
    path = _need_input(cfg)
    img = io.read_pgm(path)
    manifest.inputs[str(path)] = _digest(path)
    w = pipelines.SEGMENT_W if cfg.w is None else cfg.w
    periods = _periods(cfg, pipelines.SEGMENT_PERIODS)
    code = EXIT_OK
    if cfg.feedback:
        fb = pipelines.FeedbackConfig(k1=cfg.k1, k2=cfg.k2, max_periods=cfg.max_periods)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", NonConvergenceWarning)
            res = pipelines.run_segmentation_feedback(img, cfg.beta_t, w, cfg.k, fb, seed=cfg.seed,
                                                      periods=periods, dt=cfg.dt)
        for wmsg in caught:
            print(f"warning: {wmsg.message}", file=sys.stderr)
        labels = res.labels
        manifest.timings["feedback_periods"] = res.periods
        if not res.converged:
            manifest.status = "not-converged"
            if cfg.strict:
                code = EXIT_NONCONVERGENCE
    elif tuple(cfg.tiles) != (1, 1):
        labels = pipelines.run_segmentation_multilayer(img, tuple(cfg.tiles), cfg.beta_t, w, cfg.k,
                                                       seed=cfg.seed, periods=periods, theta=cfg.theta,
                                                       dt=cfg.dt)
    else:
        labels = pipelines.run_segmentation_basic(img, cfg.beta_t, w, cfg.k, seed=cfg.seed, periods=periods,
                                                  theta=cfg.theta, dt=cfg.dt)
    manifest.outputs.append(str(io.write_pgm(out / "labels.pgm", _mean_gray_render(img, labels.labels))))
    manifest.outputs.append(str(io.write_label_map(out / "labels.csv", labels.labels)))
    print(f"{labels.n_labels} region label(s)")
    return code


def cmd_simulate(cfg: RunConfig, out: Path, manifest: RunManifest) -> int:
    if cfg.pair_gain is not None:
        g = CouplingGraph(2, [0], [1], [cfg.pair_gain]) if cfg.pair_gain > 0 else CouplingGraph.empty(2)
        drive = float(np.mean(input_range()))
        spec = NetworkSpec.random(g, seed=cfg.seed, inputs=[drive, drive])
    else:
        path = _need_input(cfg)
        manifest.inputs[str(path)] = _digest(path)
        if cfg.sim_task == "cluster":
            beta = pipelines.CLUSTER_BETA if cfg.beta_t is None else cfg.beta_t
            gain = pipelines.CLUSTER_GAIN if cfg.gain is None else cfg.gain
            g = build_cluster_coupling(io.read_points(path), cfg.m_neighbors, beta).scaled(gain)
            spec = NetworkSpec.random(g, seed=cfg.seed)
        elif cfg.sim_task == "contour":
            gain = pipelines.CONTOUR_GAIN if cfg.gain is None else cfg.gain
            g = build_contour_coupling(io.read_grid(path), math.radians(cfg.delta_deg),
                                       math.radians(cfg.gamma_deg), 1 if cfg.w is None else cfg.w).scaled(gain)
            spec = NetworkSpec.random(g, seed=cfg.seed)
        else:
            img = io.read_pgm(path)
            beta = max(pipelines.estimate_noise(img), pipelines.MIN_NOISE_BETA) if cfg.beta_t is None else cfg.beta_t
            g = build_segmentation_coupling(img, beta, pipelines.SEGMENT_W if cfg.w is None else cfg.w)
            drives = pipelines.gray_drives(img.ravel(), float(np.median(img)))
            spec = NetworkSpec.random(g, seed=cfg.seed, inputs=drives)
    duration = _periods(cfg, DEFAULT_PERIODS) * default_period()
    tr = simulate(spec, duration, dt=cfg.dt, sample_dt=pipelines.SAMPLE_DT)
    manifest.outputs.append(str(io.write_traces(out / "traces.csv", tr)))
    print(f"{tr.n} oscillator(s), {tr.n_samples} samples, step {tr.step_dt:.4g}")
    return EXIT_OK


def cmd_check_stability(cfg: RunConfig, out: Path, manifest: RunManifest) -> int:
    if cfg.pair_gain is not None:
        k = cfg.pair_gain
        g = CouplingGraph(2, [0], [1], [k]) if k > 0 else CouplingGraph.empty(2)
    elif cfg.input:
        path = _need_input(cfg)
        manifest.inputs[str(path)] = _digest(path)
        n, rows, cols, gains = io.read_edges(path)
        g = CouplingGraph(n, rows, cols, gains)
    elif cfg.nodes is not None:
        if cfg.nodes < 2:
            raise ConfigError("--nodes must be >= 2")
        g = CouplingGraph.empty(cfg.nodes)
    else:
        raise ConfigError("check-stability needs an edge list, --pair or --nodes")
    report = check_sync_condition(g)
    data = report.as_dict()
    bound = metric_gain_bound()
    data["metric_bound"] = bound
    if g.n == 2:
        k = float(g.gains[0]) if g.n_edges else 0.0
        data["pair_gain"] = k
        data["metric_satisfied"] = bool(k > bound)
    text = io.format_kv("stability-report", data)
    manifest.outputs.append(str(io.atomic_write(out / "stability.txt", text)))
    verdict = "satisfied" if report.satisfied else "not satisfied"
    print(f"sufficient condition {verdict}: lambda_min(V L V^T) = {report.lhs:.6g}, "
          f"sup lambda_max(J_s) = {report.rhs:.6g}, margin {report.margin:.6g}")
    if "metric_satisfied" in data:
        print(f"pairwise metric bound {bound:g}: {'satisfied' if data['metric_satisfied'] else 'not satisfied'}")
    print(report.note)
    return EXIT_OK


def cmd_fixtures(cfg: RunConfig, out: Path, manifest: RunManifest) -> int:
    name, seed = cfg.fixture, cfg.seed
    jitter = 10.0 if cfg.jitter is None else cfg.jitter
    written = []
    if name in ("two-blobs", "uniform-plus-cluster"):
        gen = fixtures.two_blobs if name == "two-blobs" else fixtures.uniform_plus_cluster
        kw = {} if cfg.sigma is None else {"sigma": cfg.sigma}
        pts, truth = gen(seed, **kw)
        written += [io.write_points(out / "points.csv", pts), io.write_labels(out / "truth.csv", truth)]
    elif name == "random-grid":
        written += [io.write_grid(out / "grid.txt", fixtures.random_grid(seed)), io.write_cells(out / "truth.csv", [])]
    elif name.startswith("contour-"):
        if name == "contour-vertical":
            theta, cells = fixtures.vertical_contour(seed, jitter_deg=jitter)
            contours = [cells]
        elif name == "contour-crossing":
            theta, contours = fixtures.crossing_contours(seed, jitter_deg=jitter)
        else:
            theta, cells = fixtures.curved_contour(seed, jitter_deg=jitter)
            contours = [cells]
        written += [io.write_grid(out / "grid.txt", theta), io.write_cells(out / "truth.csv", contours)]
    else:
        if name == "three-level":
            img, truth = fixtures.three_level(seed, sigma=10.0 if cfg.sigma is None else cfg.sigma)
        elif name == "two-level":
            img, truth = fixtures.two_level()
        else:
            img, truth = fixtures.gray_bands(seed, sigma=8.0 if cfg.sigma is None else cfg.sigma)
        written += [io.write_pgm(out / "image.pgm", img), io.write_gray_text(out / "image.txt", img),
                    io.write_label_map(out / "truth.csv", truth)]
    manifest.outputs += [str(p) for p in written]
    print("\n".join(str(p) for p in written))
    return EXIT_OK


COMMANDS = {
    "cluster": cmd_cluster,
    "contour": cmd_contour,
    "segment": cmd_segment,
    "simulate": cmd_simulate,
    "check-stability": cmd_check_stability,
    "fixtures": cmd_fixtures,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = resolve_config(argv)
    except ConfigError as exc:
        print(f"oscgroup: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out)
    manifest = RunManifest(cfg.to_dict())
    start = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[cfg.task](cfg, out, manifest)
    except (ParseError, ConfigError, TileError) as exc:
        print(f"oscgroup: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"oscgroup: numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    manifest.timings["wall_s"] = round(time.perf_counter() - start, 3)
    io.atomic_write(out / "config.json", cfg.to_json())
    manifest.outputs.append(str(out / "config.json"))
    manifest.write(out)
    return code


if __name__ == "__main__":
    sys.exit(main())
