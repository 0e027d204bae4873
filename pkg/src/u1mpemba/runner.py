"""Parameter sweeps: configuration, seeding, task execution and trace files."""

import hashlib
import json
import os
import re
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import GridMismatchError, fit_power_law, find_mpemba_time, z_theory
from .asymmetry import AsymmetryTrace
from .ed import ED_MAX_SITES, run_ed
from .channel import PairDistribution
from .mps import AveragedModeSizeError, TruncationPolicy
from .states import InitialStateSpec

MODES = ("sampled", "averaged", "ed")
ENGINES = ("forward", "boundary")
ROUTES = ("return", "permute")
CSV_HEADER = "t,purity,dephased_purity,asymmetry,stderr"
OUT_ENV = "U1MPEMBA_OUT"
WORKERS_ENV = "U1MPEMBA_WORKERS"


class ConfigError(ValueError):
    pass


class ParamMismatchError(ValueError):
    pass


def parse_angle(text):
    """``"0.3pi"``, ``"pi/4"`` or a plain float in radians."""
    s = str(text).strip().lower().replace(" ", "")
    m = re.fullmatch(r"([0-9.eE+-]*)\*?pi(?:/([0-9.]+))?", s)
    if m:
        coef = float(m.group(1)) if m.group(1) not in ("", "+") else 1.0
        if m.group(1) == "-":
            coef = -1.0
        div = float(m.group(2)) if m.group(2) else 1.0
        return coef * np.pi / div
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"cannot parse angle {text!r}") from None


def angle_label(theta):
    return f"{theta / np.pi:.6g}pi"


@dataclass
class RunConfig:
    families: list = field(default_factory=lambda: ["tfs"])
    thetas: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    n_sites: int = 8
    n_as: list = field(default_factory=lambda: [2])
    layers: int = 10
    realizations: int = 10
    ed_realizations: int = None   # defaults to realizations
    seed: int = 0
    modes: list = field(default_factory=lambda: ["sampled"])
    engine: str = "forward"
    route: str = "return"
    weighted: bool = True
    max_discarded_weight: float = 1e-10
    chi_max: int = 1200
    out_dir: str = "runs"
    workers: int = 1
    theta_pairs: list = field(default_factory=list)
    fit: bool = False
    crossing_sigma: float = 1.0

    def __post_init__(self):
        self.families = [f.lower() for f in self.families]
        for mode in self.modes:
            if mode not in MODES:
                raise ConfigError(f"unknown mode {mode!r}")
        if self.engine not in ENGINES:
            raise ConfigError(f"unknown engine {self.engine!r}")
        if self.route not in ROUTES:
            raise ConfigError(f"unknown route {self.route!r}")
        if "ed" in self.modes and self.n_sites > ED_MAX_SITES:
            raise ConfigError(f"mode ed needs n_sites <= {ED_MAX_SITES}")
        if "averaged" in self.modes and self.n_sites > 8:
            raise ConfigError("mode averaged needs n_sites <= 8")
        for n_a in self.n_as:
            if not 1 <= n_a <= self.n_sites:
                raise ConfigError(f"subsystem size {n_a} outside 1..{self.n_sites}")
        # family/parity and angle checks
        for fam in self.families:
            for th in self.thetas:
                try:
                    InitialStateSpec(fam, th, self.n_sites)
                except ValueError as exc:
                    raise ConfigError(str(exc)) from None
        if self.ed_realizations is not None and self.ed_realizations < 1:
            raise ConfigError("ed_realizations must be positive")
        if self.layers < 0 or self.realizations < 1 or self.workers < 1:
            raise ConfigError("layers >= 0, realizations >= 1 and workers >= 1 required")

    @property
    def n_ed(self):
        return self.realizations if self.ed_realizations is None else self.ed_realizations

    def policy(self):
        return TruncationPolicy(self.max_discarded_weight, self.chi_max)

    def physics(self):
        """Fields that determine results (not where or how fast they are produced)."""
        d = asdict(self)
        for k in ("out_dir", "workers"):
            d.pop(k)
        return d

    def hash(self):
        return _digest(self.physics())

    def task_hash(self, task):
        """Hash of everything that fixes one task's output, so grids can grow."""
        d = self.physics()
        for k in ("families", "thetas", "alphas", "n_as", "modes", "theta_pairs", "fit",
                  "crossing_sigma"):
            d.pop(k)
        d["task"] = task.key()
        return _digest(d)


def _digest(obj):
    blob = json.dumps(obj, sort_keys=True, default=float)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


_LIST_KEYS = {"families": str, "thetas": parse_angle, "alphas": float, "n_as": int, "modes": str}
_SCALAR_KEYS = {"n_sites": int, "layers": int, "realizations": int, "ed_realizations": int,
                "seed": int, "engine": str,
                "route": str,
                "max_discarded_weight": float, "chi_max": int, "out_dir": str, "workers": int,
                "crossing_sigma": float}
_ALIASES = {"family": "families", "theta": "thetas", "alpha": "alphas", "n_a": "n_as",
            "mode": "modes", "n": "n_sites", "chi": "chi_max", "eps": "max_discarded_weight"}


def _split(value):
    return [v for v in re.split(r"[,\s]+", value.strip().strip("[]")) if v]


def parse_config(text):
    """Parse ``key = value`` lines; lists are comma separated, ``#`` starts a comment."""
    kw = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key.lower(), key.lower())
        if key in _LIST_KEYS:
            kw[key] = [_LIST_KEYS[key](v) for v in _split(value)]
        elif key in _SCALAR_KEYS:
            kw[key] = _SCALAR_KEYS[key](value)
        elif key == "theta_pairs":
            pairs = []
            for item in _split(value):
                a, b = item.split(":")
                pairs.append([parse_angle(a), parse_angle(b)])
            kw[key] = pairs
        elif key in ("fit", "weighted"):
            kw[key] = value.lower() in ("1", "true", "yes", "on")
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    return RunConfig(**kw)


def load_config(path, **overrides):
    cfg = parse_config(Path(path).read_text())
    env_out, env_workers = os.environ.get(OUT_ENV), os.environ.get(WORKERS_ENV)
    if env_out:
        cfg.out_dir = env_out
    if env_workers:
        cfg.workers = int(env_workers)
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    cfg.__post_init__()
    return cfg


# seeds ---------------------------------------------------------------------

def _coord(x):
    # stable non-negative integer code for a task coordinate
    if isinstance(x, str):
        return int.from_bytes(hashlib.sha256(x.encode()).digest()[:4], "little")
    return int(round(float(x) * 1_000_000)) % (2 ** 32)


def task_seed(master, *coords):
    """SeedSequence for a task, a pure function of the master seed and coordinates."""
    return np.random.SeedSequence(int(master), spawn_key=tuple(_coord(c) for c in coords))


def realization_rng(master, mode, alpha, n_sites, r):
    """Generator of one realization; shared by all families and angles at fixed (alpha, N)."""
    return np.random.default_rng(task_seed(master, mode, alpha, n_sites, r))


# trace files ---------------------------------------------------------------

def _fmt(x):
    return "nan" if not np.isfinite(x) else f"{x:.17g}"


def _atomic_write(path, text, mode="w"):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, mode) as fh:
        fh.write(text)
    os.replace(tmp, path)


def trace_csv(trace):
    rows = [CSV_HEADER]
    for t, p, q, a, e in zip(trace.times, trace.purity, trace.dephased_purity,
                             trace.asymmetry, trace.stderr):
        rows.append(f"{int(t)},{_fmt(p)},{_fmt(q)},{_fmt(a)},{_fmt(e)}")
    return "\n".join(rows) + "\n"


def write_trace(trace, path, provenance=None):
    """Write ``path`` (CSV), its JSON sidecar and the per-realization samples."""
    path = Path(path)
    _atomic_write(path, trace_csv(trace))
    meta = {"params": trace.params, "realization_count": trace.realization_count,
            "provenance": provenance or {}}
    _atomic_write(path.with_suffix(".json"), json.dumps(meta, indent=1, sort_keys=True,
                                                        default=float) + "\n")
    if trace.samples is not None:
        p, pq = trace.samples
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".npz")
        os.close(fd)
        np.savez(tmp, purity=p, dephased_purity=pq)
        os.replace(tmp, path.with_suffix(".npz"))


def read_trace(path):
    path = Path(path)
    lines = path.read_text().splitlines()
    if lines[0] != CSV_HEADER:
        raise ValueError(f"{path}: unexpected header {lines[0]!r}")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    meta_path = path.with_suffix(".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    samples = None
    if path.with_suffix(".npz").exists():
        with np.load(path.with_suffix(".npz")) as z:
            samples = (z["purity"], z["dephased_purity"])
    return AsymmetryTrace(params=meta.get("params", {}), times=data[:, 0].astype(int),
                          purity=data[:, 1], dephased_purity=data[:, 2], asymmetry=data[:, 3],
                          stderr=data[:, 4], realization_count=meta.get("realization_count", 0),
                          samples=samples)


def trace_name(params):
    return (f"{params['method']}_{params['family']}_th{angle_label(params['theta'])}"
            f"_a{params['alpha']:g}_N{params['n_sites']}_NA{params['n_a']}.csv")


# tasks ---------------------------------------------------------------------

@dataclass(frozen=True)
class Task:
    mode: str
    alpha: float
    families: tuple
    thetas: tuple
    n_as: tuple

    def coords(self):
        return (self.mode, self.alpha, self.families, self.thetas, self.n_as)

    def key(self):
        fam = "+".join(self.families)
        th = "+".join(angle_label(t) for t in self.thetas)
        na = "+".join(str(n) for n in self.n_as)
        return f"{self.mode}|a={self.alpha:g}|{fam}|{th}|NA={na}"


def enumerate_tasks(cfg):
    """Split the grid into tasks; each task emits one or more traces.

    The boundary engine evolves one boundary per family and subsystem size and
    reads off every angle from it; the forward engine evolves one state per
    family and angle and reads off every subsystem size.
    """
    tasks = []
    fams, ths = tuple(cfg.families), tuple(cfg.thetas)
    for mode in cfg.modes:
        for alpha in cfg.alphas:
            if mode == "sampled" and cfg.engine == "boundary":
                for fam in fams:
                    for n_a in cfg.n_as:
                        tasks.append(Task(mode, alpha, (fam,), ths, (n_a,)))
            else:
                for fam in fams:
                    for th in ths:
                        tasks.append(Task(mode, alpha, (fam,), (th,), tuple(cfg.n_as)))
    return tasks


def _params(cfg, task, method, family, theta, n_a):
    return {"method": method, "family": family, "theta": float(theta), "alpha": float(task.alpha),
            "n_sites": cfg.n_sites, "n_a": int(n_a), "layers": cfg.layers,
            "realizations": {"averaged": 1, "ed": cfg.n_ed}.get(task.mode, cfg.realizations),
            "seed": cfg.seed, "engine": cfg.engine if task.mode == "sampled" else None,
            "max_discarded_weight": cfg.max_discarded_weight, "chi_max": cfg.chi_max,
            "route": cfg.route if task.mode == "sampled" else None,
            "weighted": cfg.weighted if task.mode == "sampled" and cfg.engine == "boundary"
            else None}


def run_task(cfg, task):
    """Execute one task and return ``[(params, p, pq, diagnostics)]``."""
    from .trajectories import boundary_realization, forward_realization, averaged_run

    n = cfg.n_sites
    dist = PairDistribution(task.alpha, n)
    out = []
    if task.mode == "ed":
        for fam in task.families:
            for th in task.thetas:
                spec = InitialStateSpec(fam, th, n)
                rngs = [realization_rng(cfg.seed, "ed", task.alpha, n, r)
                        for r in range(cfg.n_ed)]
                run = run_ed(spec, dist, cfg.layers, cfg.n_ed, list(task.n_as), rngs=rngs)
                for k, n_a in enumerate(task.n_as):
                    out.append((_params(cfg, task, "ed", fam, th, n_a), run.purities[k],
                                run.dephased_purities[k], {}))
        return out
    if task.mode == "averaged":
        for fam in task.families:
            for th in task.thetas:
                res = averaged_run(InitialStateSpec(fam, th, n), dist, cfg.layers, task.n_as)
                for n_a in task.n_as:
                    p, pq = res[n_a]
                    out.append((_params(cfg, task, "averaged", fam, th, n_a), p[None], pq[None], {}))
        return out
    policy_args = (cfg.max_discarded_weight, cfg.chi_max)
    if cfg.engine == "forward":
        for fam in task.families:
            for th in task.thetas:
                spec = InitialStateSpec(fam, th, n)
                acc = {n_a: ([], []) for n_a in task.n_as}
                diag = {"max_bond": 0, "max_discarded": 0.0, "capped_steps": 0}
                for r in range(cfg.realizations):
                    rng = realization_rng(cfg.seed, "sampled", task.alpha, n, r)
                    res, d = forward_realization(spec, dist, cfg.layers, task.n_as,
                                                 TruncationPolicy(*policy_args), rng,
                                                 route=cfg.route)
                    _merge(diag, d)
                    for n_a in task.n_as:
                        acc[n_a][0].append(res[n_a][0])
                        acc[n_a][1].append(res[n_a][1])
                for n_a in task.n_as:
                    out.append((_params(cfg, task, "tn", fam, th, n_a), np.array(acc[n_a][0]),
                                np.array(acc[n_a][1]), diag))
        return out
    (n_a,) = task.n_as
    specs = [InitialStateSpec(f, th, n) for f in task.families for th in task.thetas]
    acc = {s: ([], []) for s in specs}
    diag = {"max_bond": 0, "max_discarded": 0.0, "capped_steps": 0}
    for r in range(cfg.realizations):
        rng = realization_rng(cfg.seed, "sampled", task.alpha, n, r)
        res, d = boundary_realization(specs, dist, cfg.layers, n_a,
                                      TruncationPolicy(*policy_args), rng, route=cfg.route,
                                      weighted=cfg.weighted)
        _merge(diag, d)
        for s in specs:
            acc[s][0].append(res[s][0])
            acc[s][1].append(res[s][1])
    for s in specs:
        out.append((_params(cfg, task, "tn", s.family, s.theta, n_a), np.array(acc[s][0]),
                    np.array(acc[s][1]), diag))
    return out


def _merge(diag, d):
    diag["max_bond"] = max(diag["max_bond"], d.get("max_bond", 0))
    diag["max_discarded"] = max(diag["max_discarded"], d.get("max_discarded", 0.0))
    diag["capped_steps"] += d.get("capped_steps", 0)


def _run_task_safe(args):
    cfg, task = args
    try:
        return task, run_task(cfg, task), None
    except Exception as exc:  # recorded in the manifest
        return task, None, f"{type(exc).__name__}: {exc}"


# manifest ------------------------------------------------------------------

@dataclass
class RunManifest:
    config_hash: str
    code_version: str
    seed: int
    tasks: dict = field(default_factory=dict)   # key -> {"status", "files", ...}
    analysis: dict = field(default_factory=dict)

    @property
    def failed(self):
        return [k for k, v in self.tasks.items() if v["status"] != "done"]

    def to_json(self):
        return json.dumps(asdict(self), indent=1, sort_keys=True, default=float) + "\n"

    @classmethod
    def load(cls, path):
        d = json.loads(Path(path).read_text())
        return cls(**{f.name: d[f.name] for f in fields(cls) if f.name in d})


def run_sweep(cfg, resume=True, log=print):
    """Run every task of ``cfg``, write traces and analyses, return the manifest.

    With ``resume`` a task already marked done in an existing manifest is not
    recomputed when its task hash (settings plus task coordinates) is unchanged.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mpath = out / "manifest.json"
    manifest = RunManifest(cfg.hash(), __version__, cfg.seed)
    old = None
    if resume and mpath.exists():
        old = RunManifest.load(mpath)
    tasks = enumerate_tasks(cfg)
    todo = []
    for task in tasks:
        prev = old.tasks.get(task.key()) if old else None
        if (prev and prev["status"] == "done" and prev.get("task_hash") == cfg.task_hash(task)
                and all((out / f).exists() for f in prev["files"])):
            manifest.tasks[task.key()] = prev
        else:
            todo.append(task)

    def record(task, results, err):
        entry = {"status": "failed" if err else "done", "files": [], "error": err,
                 "task_hash": cfg.task_hash(task),
                 "seed_coords": [str(c) for c in (cfg.seed, task.mode, task.alpha, cfg.n_sites)]}
        if results:
            for params, p, pq, diag in results:
                trace = AsymmetryTrace.from_samples(params, p, pq, keep_samples=True)
                name = trace_name(params)
                write_trace(trace, out / name, {"config_hash": manifest.config_hash,
                                                "code_version": __version__,
                                                "task": task.key(), "diagnostics": diag})
                entry["files"].append(name)
        manifest.tasks[task.key()] = entry
        _atomic_write(mpath, manifest.to_json())
        if log:
            log(f"[{entry['status']}] {task.key()}" + (f" ({err})" if err else ""))

    if cfg.workers == 1:
        for task in todo:
            record(*_run_task_safe((cfg, task)))
    else:
        with ProcessPoolExecutor(cfg.workers) as pool:
            for res in pool.map(_run_task_safe, [(cfg, t) for t in todo]):
                record(*res)
    manifest.analysis = analyze_dir(out, cfg)
    _atomic_write(mpath, manifest.to_json())
    return manifest


# analysis over a directory ---------------------------------------------------

def load_traces(directory):
    traces = []
    for path in sorted(Path(directory).glob("*.csv")):
        if path.name.startswith("crossings"):
            continue
        try:
            traces.append(read_trace(path))
        except (ValueError, IndexError):
            continue
    return traces


def _same(a, b, ignore):
    keys = (set(a) | set(b)) - set(ignore)
    return all(a.get(k) == b.get(k) for k in keys)


def analyze_dir(directory, cfg=None):
    """Crossing times for declared angle pairs and power-law fits over N_A."""
    directory = Path(directory)
    traces = load_traces(directory)
    pairs = cfg.theta_pairs if cfg else []
    sigma = cfg.crossing_sigma if cfg else 1.0
    rows = []
    for small, large in pairs:
        for a in traces:
            if not np.isclose(a.params.get("theta", np.nan), small):
                continue
            for b in traces:
                if np.isclose(b.params.get("theta", np.nan), large) and \
                        _same(a.params, b.params, ("theta",)):
                    try:
                        res = find_mpemba_time(a, b, sigma=sigma)
                    except (GridMismatchError, ValueError) as exc:
                        rows.append({**_row_key(a.params, small, large), "error": str(exc)})
                        continue
                    rows.append({**_row_key(a.params, small, large), "t_M": res.t_M,
                                 "bracket": res.bracket, "resolved": res.resolved})
    if rows:
        lines = ["method,family,alpha,n_sites,n_a,theta_small,theta_large,t_M,bracket_lo,"
                 "bracket_hi,resolved"]
        for r in rows:
            br = r.get("bracket") or (None, None)
            lines.append(",".join(str(x) for x in (
                r["method"], r["family"], r["alpha"], r["n_sites"], r["n_a"],
                angle_label(r["theta_small"]), angle_label(r["theta_large"]),
                "" if r.get("t_M") is None else _fmt(r["t_M"]),
                "" if br[0] is None else br[0], "" if br[1] is None else br[1],
                r.get("resolved", ""))))
        _atomic_write(directory / "crossings.csv", "\n".join(lines) + "\n")
    fits = {}
    if cfg is not None and cfg.fit:
        groups = {}
        for r in rows:
            if r.get("t_M") is None:
                continue
            key = (r["method"], r["family"], r["alpha"], r["n_sites"], r["theta_small"],
                   r["theta_large"])
            groups.setdefault(key, []).append((r["n_a"], r["t_M"],
                                               _crossing_stderr(r, traces)))
        for key, pts in groups.items():
            label = "|".join(str(k) for k in key)
            try:
                fit = fit_power_law(pts, alpha=key[2])
                fits[label] = {"params": fit.params, "covariance": fit.covariance.tolist(),
                               "z_theory": z_theory(key[2]), "residual_norm": fit.residual_norm,
                               "fit_window": fit.fit_window, "points": fit.points,
                               "starts": fit.starts}
            except Exception as exc:
                fits[label] = {"error": f"{type(exc).__name__}: {exc}", "points": pts}
        _atomic_write(directory / "fits.json", json.dumps(fits, indent=1, default=float) + "\n")
    return {"crossings": rows, "fits": fits}


def _row_key(params, small, large):
    return {"method": params.get("method"), "family": params.get("family"),
            "alpha": params.get("alpha"), "n_sites": params.get("n_sites"),
            "n_a": params.get("n_a"), "theta_small": small, "theta_large": large}


def _crossing_stderr(row, traces):
    """Error of a crossing time from the slope of the difference at the crossing."""
    lo, hi = row["bracket"]
    for a in traces:
        if _match(a, row, row["theta_small"]):
            for b in traces:
                if _match(b, row, row["theta_large"]):
                    d = a.asymmetry - b.asymmetry
                    e = np.hypot(np.nan_to_num(a.stderr), np.nan_to_num(b.stderr))
                    slope = (d[hi] - d[lo]) / (hi - lo)
                    err = 0.5 * (e[lo] + e[hi])
                    return float(err / slope) if slope > 0 else None
    return None


def _match(trace, row, theta):
    p = trace.params
    return (p.get("method") == row["method"] and p.get("family") == row["family"]
            and p.get("alpha") == row["alpha"] and p.get("n_sites") == row["n_sites"]
            and p.get("n_a") == row["n_a"] and np.isclose(p.get("theta", np.nan), theta))


# comparison ----------------------------------------------------------------

_COMPARE_IGNORE = ("method", "realizations", "engine", "route", "weighted",
                   "max_discarded_weight", "chi_max", "seed", "layers")


def compare_runs(trace_a, trace_b, tolerance_sigma=3.0, t_max=None):
    """Per-time z-scores between two traces with matching physical parameters."""
    if isinstance(trace_a, (str, Path)):
        trace_a = read_trace(trace_a)
    if isinstance(trace_b, (str, Path)):
        trace_b = read_trace(trace_b)
    pa, pb = trace_a.params, trace_b.params
    bad = sorted(k for k in (set(pa) | set(pb)) - set(_COMPARE_IGNORE)
                 if not _close(pa.get(k), pb.get(k)))
    if bad:
        raise ParamMismatchError(f"parameters differ: {bad}")
    m = min(len(trace_a.times), len(trace_b.times))
    if t_max is not None:
        m = min(m, int(t_max) + 1)
    da = trace_a.asymmetry[:m] - trace_b.asymmetry[:m]
    err = np.hypot(np.nan_to_num(trace_a.stderr[:m]), np.nan_to_num(trace_b.stderr[:m]))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(err > 0, np.abs(da) / err, np.where(np.abs(da) <= 1e-12, 0.0, np.inf))
    max_z = float(z.max()) if z.size else 0.0
    return {"times": trace_a.times[:m].tolist(), "z": z.tolist(), "max_z": max_z,
            "tolerance_sigma": tolerance_sigma, "passed": bool(max_z <= tolerance_sigma)}


def _close(a, b):
    if isinstance(a, float) or isinstance(b, float):
        try:
            return bool(np.isclose(float(a), float(b), rtol=1e-12, atol=1e-12))
        except (TypeError, ValueError):
            return False
    return a == b
