"""Experiment orchestration and file outputs: training runs, heatmaps,
theorem verification sweeps, replays and diagnostic dumps."""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, curiosity as cf, memrefl, oracle
from .agent.metrics import CsvAppender, MetricsLog, read_metrics
from .agent.policy import SOURCE_NAMES, greedy_actions
from .agent.trainer import build_learner, load_learner, save_learner, train
from .config import RunConfig, replace
from .env import N_ACTIONS, GridSpec, encode_indices, make_env, reset, step
from .errors import CompatibilityError, ContractError, DegenerateGapError, TrainingAbort

log = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
EPISODES_FILE = "episodes.csv"
CHECKPOINT_FILE = "checkpoint.amck"
MANIFEST_FILE = "manifest.json"


def _write_text(path, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


# ---------------------------------------------------------------- training


def run_experiment(cfg: RunConfig, out_dir=None):
    """Train and write metrics, episodes, checkpoint and manifest under ``out_dir``.

    Metrics rows are appended and flushed one update at a time.  On a
    training abort the partial CSV stays, the manifest is marked failed and
    the exception propagates.  Returns ``(metrics path, checkpoint path)``.
    """
    out = Path(out_dir or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / METRICS_FILE
    ckpt_path = out / CHECKPOINT_FILE
    manifest = dict(config=cfg.to_text(), config_hash=cfg.hash(), seed=cfg.seed, version=__version__,
                    status="running")
    started = time.time()
    learner = build_learner(cfg)
    appender = CsvAppender(metrics_path, cfg.hash(), cfg.seed)
    try:
        result = train(cfg, on_row=appender, learner=learner)
    except TrainingAbort as exc:
        manifest.update(status="failed", error=str(exc), update=exc.update, minibatch=exc.minibatch,
                        wall_time_s=time.time() - started)
        _write_text(out / MANIFEST_FILE, json.dumps(manifest, indent=2, sort_keys=True))
        raise
    _write_text(out / EPISODES_FILE, result.episodes_csv())
    save_learner(ckpt_path, learner)
    np.savetxt(out / "visits.csv", learner.envs.visits, fmt="%d", delimiter=",")
    manifest.update(status="ok", wall_time_s=time.time() - started, updates=len(result.rows))
    _write_text(out / MANIFEST_FILE, json.dumps(manifest, indent=2, sort_keys=True))
    return metrics_path, ckpt_path


# ---------------------------------------------------------------- heatmaps


def _svg_color(x: float) -> str:
    # dark blue (unvisited) through to pale yellow (most visited)
    lo, hi = np.array([20, 24, 82]), np.array([253, 231, 37])
    r, g, b = np.rint(lo + (hi - lo) * x).astype(int)
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_bytes(grid, fmt: str) -> bytes:
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise ValueError("heatmap must be a 2-D grid")
    h, w = grid.shape
    peak = float(grid.max()) if grid.size else 0.0
    norm = grid / peak if peak > 0 else np.zeros(grid.shape)
    if fmt == "pgm":
        pixels = np.rint(np.clip(norm, 0, 1) * 255).astype(np.uint8)
        return f"P5\n{w} {h}\n255\n".encode() + pixels.tobytes()
    if fmt == "csv":
        buf = io.StringIO()
        for row in grid:
            buf.write(",".join(repr(float(v)) if grid.dtype.kind == "f" else str(int(v)) for v in row) + "\n")
        return buf.getvalue().encode()
    if fmt == "svg":
        cell = 10
        parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w * cell}" height="{h * cell}">']
        for r in range(h):
            for c in range(w):
                parts.append(f'<rect x="{c * cell}" y="{r * cell}" width="{cell}" height="{cell}" '
                             f'fill="{_svg_color(float(norm[r, c]))}"/>')
        parts.append("</svg>\n")
        return "\n".join(parts).encode()
    raise ValueError(f"unknown heatmap format {fmt!r}; use pgm, svg or csv")


def export_heatmap(grid, path, fmt: str | None = None) -> Path:
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".")
    data = heatmap_bytes(grid, fmt)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as exc:
        raise OSError(f"cannot write heatmap {path}: {exc}") from exc
    return path


# ---------------------------------------------------------------- theorem sweeps


VERIFY_COLUMNS = ("seed", "theorem", "n_states", "n_actions", "gamma", "holds", "min_gap", "C",
                  "resamples", "error")
MAX_RESAMPLES = 100


@dataclass
class VerifyReport:
    rows: list
    instances: int
    failures: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(VERIFY_COLUMNS)
        for r in self.rows:
            w.writerow([r[c] for c in VERIFY_COLUMNS])
        buf.write(f"# instances={self.instances} failures={self.failures}\n")
        return buf.getvalue()


def _instance_rng(seed, theorem, attempt):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(theorem), int(attempt)]))


def _sample_mdp(rng, sizes):
    (s_lo, s_hi), (a_lo, a_hi), (g_lo, g_hi) = sizes
    n_s = int(rng.integers(s_lo, s_hi + 1))
    n_a = int(rng.integers(a_lo, a_hi + 1))
    gamma = float(rng.uniform(g_lo, g_hi))
    return oracle.random_mdp(int(rng.integers(2**32)), n_s, n_a, gamma)


def theorem1_instance(seed: int, sizes, tol: float = 1e-8):
    """Random MDP + bonus in [0, C]; degenerate gaps are resampled."""
    for attempt in range(MAX_RESAMPLES):
        rng = _instance_rng(seed, 1, attempt)
        mdp = _sample_mdp(rng, sizes)
        base = oracle.value_iteration(mdp, oracle._vi_tol(tol, mdp.gamma))
        try:
            C = oracle.assumption1_bound(base)
        except DegenerateGapError:
            log.info("seed %d attempt %d: degenerate action gap, resampling", seed, attempt)
            continue
        if C <= (1.0 - mdp.gamma) * oracle.TIE_TOL:
            log.info("seed %d attempt %d: near-tied optimal actions, resampling", seed, attempt)
            continue
        bonus = rng.uniform(0.0, 1.0, mdp.reward.shape) * C
        return mdp, bonus, base, attempt
    raise ContractError(f"seed {seed}: no non-degenerate MDP after {MAX_RESAMPLES} draws")


def theorem2_instance(seed: int, sizes):
    """Random MDP, stochastic policy and a confidence table where the greedy
    action of Q^pi holds the strict maximum confidence in every state."""
    rng = _instance_rng(seed, 2, 0)
    mdp = _sample_mdp(rng, sizes)
    pi = rng.dirichlet(np.ones(mdp.n_actions), size=mdp.n_states)
    q_pi = oracle.q_from_v(mdp, oracle.policy_evaluation(mdp, pi))
    a_star = q_pi.argmax(axis=1)
    rows = np.arange(mdp.n_states)
    conf = rng.uniform(0.0, 0.95, size=pi.shape)
    conf[rows, a_star] = 0.0
    top = conf.max(axis=1)
    conf[rows, a_star] = top + (1.0 - top) * rng.uniform(0.05, 1.0, size=mdp.n_states)
    return mdp, pi, conf


def verify(seeds, theorems=(1, 2), sizes=((2, 10), (2, 4), (0.5, 0.99)), kappa: float = 0.85,
           tol1: float = 1e-8, tol2: float = 1e-9) -> VerifyReport:
    """One row per (seed, theorem).  Contract errors are recorded and the sweep continues."""
    rows, failures = [], 0
    for theorem in theorems:
        for seed in seeds:
            row = dict(seed=seed, theorem=theorem, n_states="", n_actions="", gamma="", holds=False,
                       min_gap="", C="", resamples=0, error="")
            try:
                if theorem == 1:
                    mdp, bonus, base, attempt = theorem1_instance(seed, sizes, tol1)
                    res = oracle.check_theorem1(mdp, bonus, tol1, base=base)
                    row.update(holds=res.holds, C=repr(res.bound), resamples=attempt,
                               min_gap=repr(float(oracle.action_gaps(base.q_star).min())))
                else:
                    mdp, pi, conf = theorem2_instance(seed, sizes)
                    res = oracle.check_theorem2(mdp, pi, conf, kappa, tol2)
                    row.update(holds=res.holds, min_gap=repr(res.min_gap))
                row.update(n_states=mdp.n_states, n_actions=mdp.n_actions, gamma=repr(mdp.gamma))
            except (ContractError, ValueError) as exc:
                row["error"] = str(exc)
            failures += not row["holds"]
            rows.append(row)
    return VerifyReport(rows, len(rows), failures)


# ---------------------------------------------------------------- checkpoint tools


def _check_env(learner, spec: GridSpec | None):
    if spec is None:
        return learner.spec
    if spec.n_cells != learner.policy.obs_dim:
        raise CompatibilityError(f"checkpoint expects {learner.policy.obs_dim} cells, "
                                 f"env {spec.name} has {spec.n_cells}")
    return spec


def render_ascii(spec: GridSpec, position) -> str:
    blocked, cliff, goal = spec.masks()
    lines = []
    for r in range(spec.height):
        chars = []
        for c in range(spec.width):
            if (r, c) == tuple(position):
                chars.append("A")
            elif blocked[r, c]:
                chars.append("#")
            elif cliff[r, c]:
                chars.append("C")
            elif goal[r, c]:
                chars.append("G")
            elif (r, c) == spec.start:
                chars.append("S")
            else:
                chars.append(".")
        lines.append("".join(chars))
    return "\n".join(lines)


REPLAY_COLUMNS = ("episode", "step", "state", "action", "reward", "source")


def replay(checkpoint, episodes: int = 1, spec: GridSpec | None = None):
    """Greedy rollouts from a checkpoint: ``(ascii text, csv text)``."""
    learner = load_learner(checkpoint)
    spec = _check_env(learner, spec)
    kappa = learner.cfg.confidence if learner.pred is not None else None
    frames, rows = [], []
    for ep in range(episodes):
        state, _ = reset(spec)
        frames.append(f"episode {ep} step 0\n{render_ascii(spec, state.position)}")
        t = 0
        while not state.done:
            s = spec.index(state.position)
            a, src = greedy_actions(learner.policy, encode_indices(spec.n_cells, [s]),
                                    learner.pred, learner.refl, kappa)
            state, _, r, _, _, _ = step(state, spec, int(a[0]))
            t += 1
            rows.append((ep, t, s, int(a[0]), repr(float(r)), SOURCE_NAMES[int(src[0])]))
            frames.append(f"episode {ep} step {t}\n{render_ascii(spec, state.position)}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPLAY_COLUMNS)
    w.writerows(rows)
    return "\n\n".join(frames) + ("\n" if frames else ""), buf.getvalue()


def novelty_map(checkpoint, spec: GridSpec | None = None):
    """Per-cell ``(r_i, recon_err, sparsity)`` grids under the saved curiosity model."""
    learner = load_learner(checkpoint)
    spec = _check_env(learner, spec)
    if learner.curiosity is None:
        raise CompatibilityError("checkpoint has no curiosity model")
    parts = cf.intrinsic_rewards(learner.curiosity, encode_indices(spec.n_cells, np.arange(spec.n_cells)))
    return tuple(p.reshape(spec.height, spec.width) for p in parts)


def novelty_csv(r_i, recon, sparsity) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("row", "col", "r_i", "recon_err", "sparsity"))
    for (r, c), v in np.ndenumerate(r_i):
        w.writerow((r, c, repr(float(v)), repr(float(recon[r, c])), repr(float(sparsity[r, c]))))
    return buf.getvalue()


def confidence_map(checkpoint, spec: GridSpec | None = None) -> np.ndarray:
    """Per-cell maximum over actions of the reflection confidence."""
    learner = load_learner(checkpoint)
    spec = _check_env(learner, spec)
    if learner.refl is None:
        raise CompatibilityError("checkpoint has no reflection network")
    obs = encode_indices(spec.n_cells, np.arange(spec.n_cells))
    conf = np.stack([memrefl.confidences(learner.refl, obs, np.full(spec.n_cells, a))
                     for a in range(N_ACTIONS)], axis=1)
    return conf.max(axis=1).reshape(spec.height, spec.width)


def dump_memory(checkpoint) -> str:
    """M-buffer trajectories as ``episode_id, step, state_index, action, reward`` rows."""
    learner = load_learner(checkpoint)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("episode_id", "step", "state_index", "action", "reward"))
    if learner.ctx.mbuf is None:
        return buf.getvalue()
    for i, traj in enumerate(learner.ctx.mbuf.entries):
        states = traj.states if traj.states is not None else traj.observations.argmax(axis=1)
        for t in range(traj.effective_length):
            w.writerow((i, t, int(states[t]), int(traj.actions[t]), repr(float(traj.rewards[t]))))
    return buf.getvalue()


# ---------------------------------------------------------------- paired experiments


def first_short_goal(episodes, max_length: int) -> float:
    """Index of the first goal episode no longer than ``max_length`` (inf if none)."""
    for e in episodes:
        if e.kind == "goal" and e.length <= max_length:
            return float(e.index)
    return float("inf")


@dataclass
class PairedResult:
    """Per-seed values for each arm of a paired-seed comparison."""
    seeds: list
    arms: dict

    def median(self, arm: str, key: str) -> float:
        return float(np.median([v[key] for v in self.arms[arm]]))


def memory_comparison(cfg: RunConfig, seeds=range(5), max_length: int = 17) -> PairedResult:
    """Full learner vs the same learner without memory-reflection, seed by seed.

    Records cumulative cliff falls and the first short goal episode.
    """
    arms = {"memory": [], "ablation": []}
    for seed in seeds:
        for arm, off in (("memory", False), ("ablation", True)):
            run = train(replace(cfg, seed=seed, disable_memory=off))
            arms[arm].append(dict(falls=run.rows[-1]["cliff_falls_cum"],
                                  first_short=first_short_goal(run.episodes, max_length),
                                  csv=run.to_csv()))
    return PairedResult(list(seeds), arms)


def coverage_comparison(cfg: RunConfig, seeds=range(5)) -> PairedResult:
    """Distinct-cell coverage with the latent sparsity term, without it, and without any intrinsic reward."""
    variants = {"sparsity": {}, "no_sparsity": dict(disable_f_discriminator=True),
                "no_intrinsic": dict(disable_curiosity=True)}
    arms = {k: [] for k in variants}
    for seed in seeds:
        for arm, changes in variants.items():
            run = train(replace(cfg, seed=seed, **changes))
            arms[arm].append(dict(coverage=run.rows[-1]["coverage"], csv=run.to_csv()))
    return PairedResult(list(seeds), arms)


# ---------------------------------------------------------------- plots


def plot_metrics(metrics_path, columns=("mean_ext_return", "mean_int_reward", "memory_action_frac",
                                        "cliff_falls_cum", "coverage")) -> str:
    """Stacked SVG line charts of selected metric columns against update."""
    rows = read_metrics(metrics_path)
    width, height, pad = 480, 140, 30
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height * len(columns)}" '
             'font-family="monospace" font-size="10">']
    xs = np.array([r["update"] for r in rows]) if rows else np.zeros(0)
    for k, col in enumerate(columns):
        y0 = k * height
        parts.append(f'<text x="{pad}" y="{y0 + 12}">{col}</text>')
        parts.append(f'<rect x="{pad}" y="{y0 + 18}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
                     'fill="none" stroke="#999"/>')
        ys = np.array([r[col] for r in rows]) if rows else np.zeros(0)
        keep = np.isfinite(ys)
        if keep.sum() < 1:
            continue
        x, y = xs[keep], ys[keep]
        x_span = max(float(x.max() - x.min()), 1e-12)
        y_span = max(float(y.max() - y.min()), 1e-12)
        px = pad + (x - x.min()) / x_span * (width - 2 * pad)
        py = y0 + 18 + (height - 2 * pad) * (1.0 - (y - y.min()) / y_span)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f77b4"/>')
        parts.append(f'<text x="{width - pad}" y="{y0 + 12}" text-anchor="end">'
                     f'[{y.min():.4g}, {y.max():.4g}]</text>')
    parts.append("</svg>\n")
    return "\n".join(parts)


def load_metrics_log(path) -> MetricsLog:
    """Parse a metrics CSV back into a :class:`MetricsLog` (header metadata included)."""
    with open(path) as fh:
        first = fh.readline()
    meta = dict(item.split("=", 1) for item in first.lstrip("# ").split())
    log_ = MetricsLog(meta["config_hash"], int(meta["seed"]))
    for row in read_metrics(path):
        log_.append(row)
    return log_
