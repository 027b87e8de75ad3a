"""Named experiments behind the CLI: mixture25, blr_ess, bias_mse, w2_probe.

Each experiment writes, under ``<output_dir>/<experiment>/<run-id>/``:

* ``config.yaml``: the fully resolved configuration,
* ``report.txt``: flat ``key = value`` pairs (machine readable),
* one summary CSV per experiment (coverage/ess/bias_mse/w2),
* chain sample CSVs named ``chain_<index>.csv`` for the first repetition.

The run id is a hash of the resolved config, so identical configs rerun
into the same directory with byte-identical outputs. ``emit_plot_data``
post-processes a finished run into plot-ready tables and rendered figures.
"""

from __future__ import annotations

import csv
import math
import warnings
from pathlib import Path

import numpy as np
import yaml

from . import plots
from .config import (ConfigError, config_hash, resolve, resolve_output_dir,
                     validate_config)
from .diagnostics import (ConvergenceProbe, ModeCoverageSpec, bias_mse_probe,
                          median_ess, mode_coverage, wasserstein2)
from .samplers import (SampleSet, SamplerConfig, hmc_reference, run_cyclical,
                       run_parallel, run_plain)
from .schedule import cyclical, polynomial, sampling_iterations_per_cycle, stepsize
from .targets import (blr_target, gaussian_target, grid25_mixture, load_csv,
                      mixture_target, synth_logistic)


class DatasetMissingError(FileNotFoundError):
    pass


class IncompleteRunError(ValueError):
    pass


def _seed_int(*parts) -> int:
    """Stable derived seed from a tuple of integers."""
    ss = np.random.SeedSequence(entropy=tuple(int(p) for p in parts))
    return int(ss.generate_state(1)[0])


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report(report: dict, path: Path) -> None:
    lines = [f"{key} = {_fmt(report[key])}" for key in sorted(report)]
    path.write_text("\n".join(lines) + "\n")


def read_report(path: Path) -> dict:
    out = {}
    for line in path.read_text().splitlines():
        key, _, value = line.partition(" = ")
        out[key] = value
    return out


def write_table(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, (float, bool))
                             else str(v) for v in row])


def _write_chain_sets(sets: list[SampleSet], directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for i, ss in enumerate(sets):
        ss.to_csv(directory / f"chain_{i}.csv")


def _center_counts(points: np.ndarray, centers: np.ndarray,
                   radius: float) -> np.ndarray:
    counts = np.zeros(centers.shape[0], dtype=int)
    if points.shape[0] == 0:
        return counts
    r2 = radius ** 2
    for i, center in enumerate(centers):
        d2 = np.sum((points - center) ** 2, axis=1)
        counts[i] = int(np.count_nonzero(d2 <= r2))
    return counts


def run_experiment(cfg: dict, output_dir=None) -> Path:
    """Validate, resolve and execute a config; returns the run directory."""
    violations = validate_config(cfg)
    if violations:
        raise ConfigError(violations)
    resolved = resolve(cfg)
    hashed = {k: v for k, v in resolved.items() if k != "output_dir"}
    base = resolve_output_dir(resolved, output_dir)
    run_dir = base / resolved["experiment"] / config_hash(hashed)
    run_dir.mkdir(parents=True, exist_ok=True)
    with open(run_dir / "config.yaml", "w") as fh:
        yaml.safe_dump(resolved, fh, sort_keys=True)
    runner = {
        "mixture25": _run_mixture25,
        "blr_ess": _run_blr_ess,
        "bias_mse": _run_bias_mse,
        "w2_probe": _run_w2_probe,
    }[resolved["experiment"]]
    report = runner(resolved, run_dir)
    report["experiment"] = resolved["experiment"]
    report["run_id"] = config_hash(hashed)
    write_report(report, run_dir / "report.txt")
    return run_dir


# sampler tags used in seed derivation; order is part of the contract
_TAGS = {"sgld": 0, "csgld": 1, "sghmc": 2, "csghmc": 3}


def _run_mixture25(cfg: dict, run_dir: Path) -> dict:
    target = mixture_target(grid25_mixture())
    cov_spec = ModeCoverageSpec(centers=target.spec.centers,
                                radius=cfg["coverage"]["radius"],
                                min_count=cfg["coverage"]["min_count"])
    seed = cfg["seed"]
    reps, chains, k_total = cfg["repetitions"], cfg["chains"], cfg["total_iters"]
    box = cfg["init_box"]
    rows = []
    report: dict = {"n_chains": chains, "repetitions": reps,
                    "total_iters": k_total}
    pooled_counts = {}
    for name in ("sgld", "csgld"):
        tag = _TAGS[name]
        coverages = []
        pooled_counts[name] = np.zeros(cov_spec.centers.shape[0], dtype=int)
        for rep in range(reps):
            init_rng = np.random.default_rng(
                np.random.SeedSequence(entropy=(seed, tag, rep, 1)))
            inits = init_rng.uniform(-box, box, size=(chains, 2))
            run_seed = _seed_int(seed, tag, rep)
            if name == "csgld":
                spec = cyclical(cfg["csgld"]["alpha0"],
                                cfg["csgld"]["num_cycles"], k_total,
                                cfg["csgld"]["beta"])
                scfg = SamplerConfig(base="sgld", schedule=spec,
                                     temperature=cfg["temperature"],
                                     seed=run_seed)
                sets = run_parallel(
                    target, scfg, inits, k_total,
                    samples_per_cycle=sampling_iterations_per_cycle(spec))
            else:
                spec = polynomial(cfg["sgld"]["decay_a"],
                                  cfg["sgld"]["decay_gamma"], k_total,
                                  cfg["sgld"]["decay_b"])
                scfg = SamplerConfig(base="sgld", schedule=spec,
                                     temperature=cfg["temperature"],
                                     seed=run_seed)
                sets = run_parallel(target, scfg, inits, k_total,
                                    burn_in=0, keep=k_total, thin=1)
            pooled = SampleSet.concat(sets)
            cov = mode_coverage(pooled, cov_spec)
            coverages.append(cov)
            pooled_counts[name] += _center_counts(
                pooled.thetas, cov_spec.centers, cov_spec.radius)
            rows.append([name, rep, cov, len(pooled)])
            if rep == 0 and cfg["write_chains"] != "none":
                _write_chain_sets(sets, run_dir / name / "run_00")
            elif cfg["write_chains"] == "all":
                _write_chain_sets(sets, run_dir / name / f"run_{rep:02d}")
        coverages = np.array(coverages, dtype=float)
        report[f"coverage_mean_{name}"] = float(coverages.mean())
        report[f"coverage_stderr_{name}"] = float(
            coverages.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
        report[f"coverage_pooled_{name}"] = int(
            np.count_nonzero(pooled_counts[name] >= cov_spec.min_count))
    write_table(run_dir / "coverage.csv",
                ["sampler", "run", "coverage", "samples"], rows)
    report["coverage_gain"] = (report["coverage_mean_csgld"]
                               - report["coverage_mean_sgld"])
    return report


def _load_blr_dataset(cfg: dict):
    ds_cfg = cfg["dataset"]
    path = ds_cfg.get("path")
    if path and Path(path).exists():
        data = load_csv(path, has_header=ds_cfg["has_header"],
                        standardize=ds_cfg["standardize"])
        return data, False
    if not ds_cfg.get("synthetic_fallback"):
        raise DatasetMissingError(
            f"dataset file {path!r} not found and dataset.synthetic_fallback "
            "is disabled; supply the file or enable the flag")
    if path:
        warnings.warn(f"dataset file {path!r} not found; "
                      "using the synthetic fallback")
    data = synth_logistic(ds_cfg["synth_n"], ds_cfg["synth_d"],
                          seed=_seed_int(cfg["seed"], 100))
    return data, True


def _run_blr_ess(cfg: dict, run_dir: Path) -> dict:
    data, used_fallback = _load_blr_dataset(cfg)
    target = blr_target(data, cfg["prior_variance"])
    seed = cfg["seed"]
    burn_in, kept = cfg["burn_in"], cfg["kept"]
    k_total = burn_in + kept
    report: dict = {
        "dataset": data.name, "n_data": target.n_data, "dim": target.dim,
        "synthetic_fallback_used": used_fallback,
        "prior_variance": cfg["prior_variance"],
    }

    hmc_cfg = cfg["hmc"]
    ref = hmc_reference(target, hmc_cfg["leapfrog_steps"],
                        hmc_cfg["stepsize"], hmc_cfg["iters"],
                        seed=_seed_int(seed, 101))
    ref_kept = ref.select(ref.iterations > hmc_cfg["burn_in"])
    ref_mean = ref_kept.thetas.mean(axis=0)
    ref_var = ref_kept.thetas.var(axis=0)
    report["hmc_acceptance_rate"] = float(ref.meta["acceptance_rate"])
    report["hmc_iters"] = hmc_cfg["iters"]
    write_table(run_dir / "hmc_reference.csv",
                ["coordinate", "ref_mean", "ref_var"],
                [[j, float(ref_mean[j]), float(ref_var[j])]
                 for j in range(target.dim)])

    variants = [("sgld", "sgld", False), ("csgld", "sgld", True),
                ("sghmc", "sghmc", False), ("csghmc", "sghmc", True)]
    rows = []
    theta0 = np.zeros(target.dim)
    n = target.n_data
    for name, base, is_cyclical in variants:
        tag = _TAGS[name]
        per_seed = []
        for rep in range(cfg["repetitions"]):
            run_seed = _seed_int(seed, tag, rep)
            alpha0 = cfg["alpha0_n"][base] / n
            if is_cyclical:
                spec = cyclical(alpha0, cfg["num_cycles"], k_total,
                                cfg["beta"])
                scfg = SamplerConfig(base=base, schedule=spec,
                                     temperature=cfg["temperature"],
                                     friction_eta=cfg["friction_eta"],
                                     minibatch_size=cfg["minibatch_size"],
                                     seed=run_seed)
                ss = run_cyclical(target, scfg, theta0,
                                  sampling_iterations_per_cycle(spec))
                ss = ss.select(ss.iterations > burn_in)
            else:
                spec = polynomial(alpha0, 0.55, k_total)
                scfg = SamplerConfig(base=base, schedule=spec,
                                     temperature=cfg["temperature"],
                                     friction_eta=cfg["friction_eta"],
                                     minibatch_size=cfg["minibatch_size"],
                                     seed=run_seed)
                ss = run_plain(target, scfg, theta0, burn_in, kept)
            med = median_ess(ss.thetas, ref_mean, ref_var, cfg["max_lag"])
            per_seed.append(med)
            rows.append([name, rep, len(ss), float(med)])
            if rep == 0 and cfg["write_chains"] != "none":
                (run_dir / name).mkdir(parents=True, exist_ok=True)
                ss.to_csv(run_dir / name / "chain_0.csv")
        report[f"ess_mean_{name}"] = float(np.mean(per_seed))
    write_table(run_dir / "ess.csv",
                ["sampler", "seed", "kept_samples", "median_ess"], rows)
    report["ordering_csgld_gt_sgld"] = bool(
        report["ess_mean_csgld"] > report["ess_mean_sgld"])
    report["ordering_csghmc_ge_sghmc"] = bool(
        report["ess_mean_csghmc"] >= report["ess_mean_sghmc"])
    return report


_TEST_FNS = {
    "theta": lambda t: t[:, 0],
    "theta_sq": lambda t: t[:, 0] ** 2,
}


def _run_bias_mse(cfg: dict, run_dir: Path) -> dict:
    target = gaussian_target(np.array(cfg["target"]["mean"], float),
                             cfg["target"]["variance"])
    f = _TEST_FNS[cfg["test_fn"]]
    if cfg["test_fn"] == "theta":
        true_mean = float(target.mean[0])
    else:
        true_mean = float(target.variance + target.mean[0] ** 2)
    probe = ConvergenceProbe(test_fn=f, true_mean=true_mean,
                             seeds=cfg["seeds"])
    k_values = [int(k) for k in cfg["k_values"]]
    k_max = max(k_values)
    cyc_len = cfg["cycle_length"]
    rows = []
    results = {}
    for idx, alpha0 in enumerate((cfg["alpha0"], cfg["alpha0_alt"])):
        template = cyclical(alpha0, max(1, k_max // cyc_len), k_max,
                            cfg["beta"])
        scfg = SamplerConfig(base="sgld", schedule=template,
                             seed=_seed_int(cfg["seed"], idx))
        table = bias_mse_probe(target, scfg, probe, k_values)
        for entry in table:
            rows.append([entry["alpha0"], entry["K"], entry["bias"],
                         entry["mse"], entry["seeds"]])
            results[(alpha0, entry["K"])] = entry["mse"]
    write_table(run_dir / "bias_mse.csv",
                ["alpha0", "K", "bias", "mse", "seeds"], rows)
    primary = [results[(cfg["alpha0"], k)] for k in sorted(k_values)]
    report = {
        "true_mean": true_mean,
        "test_fn": cfg["test_fn"],
        "seeds": cfg["seeds"],
        "mse_strictly_decreasing": bool(
            all(a > b for a, b in zip(primary, primary[1:]))),
        "alt_alpha0_floor_exceeds": bool(
            results[(cfg["alpha0_alt"], k_max)] > results[(cfg["alpha0"], k_max)]),
    }
    for (alpha0, k), mse in sorted(results.items()):
        report[f"mse_alpha{alpha0}_K{k}"] = float(mse)
    return report


def _run_w2_probe(cfg: dict, run_dir: Path) -> dict:
    target = mixture_target(grid25_mixture())
    seed = cfg["seed"]
    k_total = cfg["total_iters"]
    spc = cfg["samples_per_cycle"]
    cloud = cfg["cloud_size"]
    box = cfg.get("init_box", 6.0)
    rows = []
    w2_full_all, w2_early_all, w2_sgld_all = [], [], []
    for rep in range(cfg["repetitions"]):
        init_rng = np.random.default_rng(
            np.random.SeedSequence(entropy=(seed, 0, rep)))
        theta0 = init_rng.uniform(-box, box, size=2)
        spec = cyclical(cfg["csgld"]["alpha0"], cfg["csgld"]["num_cycles"],
                        k_total, cfg["csgld"]["beta"])
        scfg = SamplerConfig(base="sgld", schedule=spec,
                             temperature=cfg["temperature"],
                             seed=_seed_int(seed, 1, rep))
        full = run_cyclical(target, scfg, theta0, spc)
        early = full.select(full.cycles <= cfg["early_cycles"])
        n_rec = len(full)
        thin = max(1, k_total // n_rec)
        burn = k_total - n_rec * thin
        pspec = polynomial(cfg["sgld"]["decay_a"], cfg["sgld"]["decay_gamma"],
                           k_total, cfg["sgld"]["decay_b"])
        pcfg = SamplerConfig(base="sgld", schedule=pspec,
                             temperature=cfg["temperature"],
                             seed=_seed_int(seed, 2, rep))
        plain = run_plain(target, pcfg, theta0, burn, n_rec, thin)
        analytic = target.sample(cloud, np.random.default_rng(
            np.random.SeedSequence(entropy=(seed, 3, rep))))
        w2_full = wasserstein2(full.thetas, analytic, cap=cloud)
        w2_early = wasserstein2(early.thetas, analytic, cap=cloud)
        w2_sgld = wasserstein2(plain.thetas, analytic, cap=cloud)
        rows.append([rep, float(w2_full), float(w2_early), float(w2_sgld)])
        w2_full_all.append(w2_full)
        w2_early_all.append(w2_early)
        w2_sgld_all.append(w2_sgld)
        if rep == 0:
            _write_chain_sets([full], run_dir / "csgld" / "run_00")
            _write_chain_sets([plain], run_dir / "sgld" / "run_00")
    write_table(run_dir / "w2.csv",
                ["seed", "w2_csgld_full", "w2_csgld_early", "w2_sgld"], rows)
    report = {
        "w2_mean_csgld_full": float(np.mean(w2_full_all)),
        "w2_mean_csgld_early": float(np.mean(w2_early_all)),
        "w2_mean_sgld": float(np.mean(w2_sgld_all)),
        "early_cycles": cfg["early_cycles"],
    }
    report["full_lt_early"] = bool(
        report["w2_mean_csgld_full"] < report["w2_mean_csgld_early"])
    report["full_lt_sgld"] = bool(
        report["w2_mean_csgld_full"] < report["w2_mean_sgld"])
    return report


def _schedule_for_plot(cfg: dict, report: dict):
    """(ks, cyclical alphas, optional decay alphas) for the run's schedules."""
    exp = cfg["experiment"]
    if exp == "mixture25" or exp == "w2_probe":
        k_total = cfg["total_iters"]
        spec = cyclical(cfg["csgld"]["alpha0"], cfg["csgld"]["num_cycles"],
                        k_total, cfg["csgld"]["beta"])
        dec = polynomial(cfg["sgld"]["decay_a"], cfg["sgld"]["decay_gamma"],
                         k_total, cfg["sgld"]["decay_b"])
    elif exp == "blr_ess":
        k_total = cfg["burn_in"] + cfg["kept"]
        n = int(report["n_data"])
        spec = cyclical(cfg["alpha0_n"]["sgld"] / n, cfg["num_cycles"],
                        k_total, cfg["beta"])
        dec = polynomial(cfg["alpha0_n"]["sgld"] / n, 0.55, k_total)
    else:  # bias_mse
        k_max = max(int(k) for k in cfg["k_values"])
        spec = cyclical(cfg["alpha0"], max(1, k_max // cfg["cycle_length"]),
                        k_max, cfg["beta"])
        dec = None
    ks = np.arange(1, spec.total_iters + 1)
    alphas = np.array([stepsize(spec, int(k)) for k in ks])
    decays = None if dec is None else \
        np.array([stepsize(dec, int(k)) for k in ks])
    return ks, alphas, decays


def _read_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, list(reader)


def emit_plot_data(run_dir) -> Path:
    """Produce plot-ready CSV tables and rendered figures for a finished run."""
    run_dir = Path(run_dir)
    cfg_path = run_dir / "config.yaml"
    report_path = run_dir / "report.txt"
    if not cfg_path.exists() or not report_path.exists():
        raise IncompleteRunError(
            f"{run_dir} is not a completed run directory "
            "(missing config.yaml or report.txt)")
    with open(cfg_path) as fh:
        cfg = yaml.safe_load(fh)
    report = read_report(report_path)
    exp = cfg["experiment"]
    plot_dir = run_dir / "plots"
    plot_dir.mkdir(exist_ok=True)

    ks, alphas, decays = _schedule_for_plot(cfg, report)
    header = ["k", "alpha"] + ([] if decays is None else ["alpha_decay"])
    rows = [[int(k), float(a)] + ([] if decays is None else [float(d)])
            for k, a, d in zip(ks, alphas,
                               decays if decays is not None else alphas)]
    write_table(plot_dir / "schedule.csv", header, rows)
    plots.schedule_figure(ks, alphas, decays, plot_dir / "schedule.png")

    if exp in ("mixture25", "w2_probe"):
        for sampler in ("sgld", "csgld"):
            chain_files = sorted(run_dir.glob(f"{sampler}/run_*/chain_*.csv"))
            if not chain_files:
                continue
            pts = np.vstack([SampleSet.from_csv(p).thetas
                             for p in chain_files])
            hist, xedges, yedges = np.histogram2d(
                pts[:, 0], pts[:, 1], bins=120,
                range=[[pts[:, 0].min(), pts[:, 0].max()],
                       [pts[:, 1].min(), pts[:, 1].max()]])
            hrows = []
            for i in range(hist.shape[0]):
                for j in range(hist.shape[1]):
                    hrows.append([i, j, float(xedges[i]), float(xedges[i + 1]),
                                  float(yedges[j]), float(yedges[j + 1]),
                                  int(hist[i, j])])
            write_table(plot_dir / f"hist2d_{sampler}.csv",
                        ["x_index", "y_index", "x_low", "x_high",
                         "y_low", "y_high", "count"], hrows)
            plots.density_figure(hist, xedges, yedges,
                                 plot_dir / f"density_{sampler}.png")

    if exp == "mixture25":
        header, rows = _read_rows(run_dir / "coverage.csv")
        summary = []
        for sampler in ("sgld", "csgld"):
            covs = [float(r[2]) for r in rows if r[0] == sampler]
            summary.append([sampler, float(np.mean(covs)),
                            float(np.std(covs, ddof=1) / math.sqrt(len(covs)))
                            if len(covs) > 1 else 0.0,
                            int(report[f"coverage_pooled_{sampler}"])])
        write_table(plot_dir / "coverage_summary.csv",
                    ["sampler", "mean", "stderr", "pooled"], summary)
        plots.bar_figure([r[0] for r in summary],
                         [r[1] for r in summary],
                         errs=[r[2] for r in summary],
                         ylabel="modes covered",
                         path=plot_dir / "coverage.png")
    elif exp == "blr_ess":
        header, rows = _read_rows(run_dir / "ess.csv")
        names = ["sgld", "csgld", "sghmc", "csghmc"]
        summary = [[n, float(np.mean([float(r[3]) for r in rows
                                      if r[0] == n]))] for n in names]
        write_table(plot_dir / "ess_summary.csv",
                    ["sampler", "mean_median_ess"], summary)
        plots.bar_figure(names, [s[1] for s in summary],
                         ylabel="median ESS",
                         path=plot_dir / "ess.png")
    elif exp == "bias_mse":
        header, rows = _read_rows(run_dir / "bias_mse.csv")
        series = {}
        for r in rows:
            series.setdefault(float(r[0]), []).append(
                (int(r[1]), float(r[3])))
        plots.loglog_figure(series, xlabel="iterations K", ylabel="MSE",
                            path=plot_dir / "bias_mse.png")
    elif exp == "w2_probe":
        labels = ["csgld_full", "csgld_early", "sgld"]
        values = [float(report["w2_mean_csgld_full"]),
                  float(report["w2_mean_csgld_early"]),
                  float(report["w2_mean_sgld"])]
        write_table(plot_dir / "w2_summary.csv", ["quantity", "mean_w2"],
                    list(map(list, zip(labels, values))))
        plots.bar_figure(labels, values, ylabel="2-Wasserstein distance",
                         path=plot_dir / "w2.png")
    return plot_dir
