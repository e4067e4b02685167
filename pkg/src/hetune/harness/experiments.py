"""Experiment drivers: tuning runs, the three-plant benchmark, N sweep, timing, keys."""
import csv
import json
import time
from pathlib import Path

import numpy as np

from .. import cloud, hecore, kernels
from ..hecore.serialize import load_params, save_keys
from ..pid import THETA_FIELDS, Theta
from ..seeker import PlantObjective, TuningTrace, run_tuning, spawn_rngs
from .config import PAPER_PRESETS, ConfigError, preset

# reference tuning results at k = 50, keyed by (plant, noise % of y_inf)
REFERENCE_GAINS = {
    ("G1", 0): Theta(3.24, 0.22, 9.93, 0.36),
    ("G1", 5): Theta(3.64, 0.22, 10.33, 0.10),
    ("G2", 0): Theta(0.96, 22.94, 0.03, 9e-4),
    ("G2", 5): Theta(0.81, 22.15, 0.04, 7e-4),
    ("G3", 0): Theta(2.72, 0.10, 19.83, 0.40),
    ("G3", 5): Theta(3.02, 0.09, 18.25, 0.39),
}

# reference wall-clock figures, for context only
REFERENCE_TIMING = {"enc_ms": 2.0, "dec_ms": 2.0, "per_sample_ms": 11.0}


def run_seed(cfg, seed, transcript_path=None):
    scfg = cfg.seeker(seed)
    plant, theta0 = cfg.plant_tf(), cfg.initial_theta()
    if cfg.backend == "plaintext":
        return run_tuning(plant, theta0, scfg)
    return cloud.run_encrypted_tuning(plant, theta0, scfg, backend=cfg.backend,
                                      params=hecore.preset(cfg.he_preset),
                                      transcript_path=transcript_path, transport=cfg.transport)


def evaluate_trace(cfg, trace):
    """Noise-free cost and closed-loop stability at every ``theta(k)`` of a trace."""
    objective = PlantObjective(cfg.plant_tf(), cfg.seeker(0))
    thetas = [Theta.from_array(row) for row in trace.thetas()]
    costs = [objective(th, noisy=False) for th in thetas]
    stable = [objective.is_stable(th) for th in thetas]
    return costs, stable


def summarize(cfg, seed, trace):
    costs, stable = evaluate_trace(cfg, trace)
    return {
        "seed": seed,
        "iterations": len(trace),
        "halted": trace.halted,
        "initial_cost": costs[0],
        "final_cost": costs[-1],
        "reduction": 1.0 - costs[-1] / costs[0],
        "cost_history": costs,
        "final_theta": trace.final_theta.to_dict(),
        "stable_final": stable[-1],
        "stable_all": all(stable),
        "converged": trace.halted is None and stable[-1] and costs[-1] < costs[0],
    }


def write_step_response(path, cfg, theta):
    objective = PlantObjective(cfg.plant_tf(), cfg.seeker(0))
    y = objective.response(theta, noisy=False)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "y"])
        for n, value in enumerate(y):
            writer.writerow([repr(n * cfg.dt), repr(float(value))])


def _aggregate(runs):
    final = np.array([r["final_cost"] for r in runs])
    thetas = np.array([[r["final_theta"][k] for k in THETA_FIELDS] for r in runs])
    return {
        "median_initial_cost": float(np.median([r["initial_cost"] for r in runs])),
        "median_final_cost": float(np.median(final)),
        "median_reduction": float(np.median([r["reduction"] for r in runs])),
        "mean_final_theta": dict(zip(THETA_FIELDS, thetas.mean(axis=0).tolist())),
        "all_stable": all(r["stable_all"] for r in runs),
        "all_converged": all(r["converged"] for r in runs),
    }


def cmd_tune(cfg, out=None):
    """Run every seed, writing one directory per seed plus ``report.json``."""
    root = Path(out or cfg.out) / cfg.name
    root.mkdir(parents=True, exist_ok=True)
    runs = []
    for seed in cfg.seeds:
        run_dir = root / f"seed{seed}"
        run_dir.mkdir(exist_ok=True)
        transcript = run_dir / "transcript.jsonl" if cfg.transcript and cfg.backend != "plaintext" else None
        start = time.perf_counter()
        trace = run_seed(cfg, seed, transcript)
        elapsed = time.perf_counter() - start
        trace.write_csv(run_dir / "trace.csv")
        write_step_response(run_dir / "step_initial.csv", cfg, trace.theta0)
        write_step_response(run_dir / "step_final.csv", cfg, trace.final_theta)
        summary = summarize(cfg, seed, trace)
        summary["wall_s"] = elapsed
        runs.append(summary)
    report = {"config": cfg.to_dict(), "N": cfg.N, "runs": runs, "summary": _aggregate(runs)}
    (root / "report.json").write_text(json.dumps(report, indent=2))
    return report


def cmd_bench_paper(out="runs", seeds=None, backend="plaintext", noise_levels=(0, 5)):
    """Three plants at each noise level with the benchmark presets, next to the reference gains."""
    rows, reports = [], {}
    for name in PAPER_PRESETS:
        for sigma in noise_levels:
            overrides = {"noise_pct": float(sigma), "backend": backend, "name": f"{name}-s{sigma}"}
            if seeds is not None:
                overrides["seeds"] = seeds
            cfg = preset(name, **overrides)
            report = cmd_tune(cfg, out)
            reports[cfg.name] = report
            summary = report["summary"]
            plant = cfg.plant
            rows.append({"plant": plant, "sigma": sigma, "source": "measured",
                         **summary["mean_final_theta"],
                         "median_final_cost": summary["median_final_cost"],
                         "all_stable": summary["all_stable"]})
            ref = REFERENCE_GAINS.get((plant, sigma))
            if ref is not None:
                rows.append({"plant": plant, "sigma": sigma, "source": "reference", **ref.to_dict(),
                             "median_final_cost": None, "all_stable": None})
    root = Path(out)
    with open(root / "table1.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    result = {"table": rows, "runs": {k: v["summary"] for k, v in reports.items()}}
    (root / "bench_paper.json").write_text(json.dumps(result, indent=2))
    return result


def cmd_n_sweep(cfg, reductions=(0, 30, 50, 70), out=None):
    """Repeat the tuning with N shortened by each percentage in ``reductions``."""
    for r in reductions:
        if not 0 <= r < 100:
            raise ConfigError(f"N reduction must lie in [0, 100) percent, got {r}")
    results = []
    for r in reductions:
        n = int(round(cfg.N * (1 - r / 100.0)))
        sub = cfg.with_(name=f"{cfg.name}-n{r}", n_samples=n)
        report = cmd_tune(sub, out)
        results.append({"reduction_pct": r, "N": n,
                        "converged": [x["converged"] for x in report["runs"]],
                        "stable": [x["stable_all"] for x in report["runs"]],
                        "median_final_cost": report["summary"]["median_final_cost"]})
    report = {"config": cfg.to_dict(), "sweep": results}
    root = Path(out or cfg.out)
    root.mkdir(parents=True, exist_ok=True)
    (root / f"{cfg.name}-n_sweep.json").write_text(json.dumps(report, indent=2))
    return report


def cmd_timing(cfg, repeats=20):
    """Median latencies of the client and cloud primitives on the RLWE backend."""
    if cfg.backend != "rlwe":
        raise ConfigError("timing is only meaningful on the rlwe backend")
    params = hecore.preset(cfg.he_preset)
    scheme = hecore.make_scheme("rlwe", params)
    _, _, rng = spawn_rngs(cfg.seeds[0])
    keys = scheme.keygen(rng)
    scfg = cfg.seeker(cfg.seeds[0])
    session = cloud.CloudSession(scheme.evaluator(keys.public()),
                                 cloud.precompute(scheme, keys, scfg, rng), scfg.N, rng)
    session.begin_iteration()
    ev = session.evaluator
    acc = session.acc["+"]

    def median_ms(fn):
        fn()  # warm-up, includes JIT compilation
        samples = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn()
            samples.append(time.perf_counter() - t0)
        return 1e3 * float(np.median(samples))

    ct = scheme.enc(0.5, keys, rng)
    enc_ms = median_ms(lambda: scheme.enc(0.5, keys, rng))
    dec_ms = median_ms(lambda: scheme.dec(ct, keys))
    per_sample_ms = median_ms(lambda: ev.add(acc, session.sample_term(ct, 1)))
    return {
        "he_preset": cfg.he_preset,
        "ring_dimension": params.ring_dimension,
        "levels": params.levels,
        "kernel_backend": kernels.BACKEND,
        "N": scfg.N,
        "enc_ms": enc_ms,
        "dec_ms": dec_ms,
        "per_sample_ms": per_sample_ms,
        "projected_iteration_s": 2 * scfg.N * per_sample_ms / 1000.0,
        "reference_timing": REFERENCE_TIMING,
    }


def resolve_he_params(spec):
    """A preset name, or a path to a ``params.json`` describing a custom chain."""
    if spec in hecore.PRESETS:
        return hecore.preset(spec), "rlwe"
    path = Path(spec)
    if path.is_file():
        return load_params(path)
    raise ConfigError(f"{spec!r} is neither an HE preset nor a parameter file")


def cmd_keygen(spec="paper", out="keys", seed=None):
    params, backend = resolve_he_params(spec)
    scheme = hecore.make_scheme(backend, params)
    keys = scheme.keygen(np.random.default_rng(seed))
    paths = save_keys(keys, out)
    return {"backend": backend, "ring_dimension": params.ring_dimension,
            "moduli": len(params.modulus_chain), "log2_modulus": params.log2_modulus,
            "files": [str(p) for p in paths]}


def cmd_replay(path):
    report = cloud.replay_transcript(path)
    return {"transcript": str(path), "iterations": report.iterations, "samples": report.samples,
            "updates_checked": report.updates_checked, "identical": report.identical,
            "mismatches": report.mismatches}


def load_trace(path):
    return TuningTrace.read_csv(path)
