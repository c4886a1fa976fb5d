"""Command-line entry point.

Subcommands: gen-data, verify-theory, grad-check, train, report.
Exit codes: 0 success, 1 assertion/tolerance failure, 2 configuration error,
3 I/O error. PACO_LAB_THREADS caps internal worker parallelism (default 1;
the library currently evaluates everything on the calling thread).
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import evaluation, gradcheck, theory, trainer
from .config import RunConfig, default_config, load_config
from .errors import ConfigError, TrainingDiverged
from .losses import CenterBank
from .numerics import make_rng

EXIT_OK = 0
EXIT_FAILED_CHECK = 1
EXIT_CONFIG = 2
EXIT_IO = 3


def worker_cap() -> int:
    raw = os.environ.get("PACO_LAB_THREADS", "1")
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigError(f"PACO_LAB_THREADS must be a positive integer, got {raw!r}")
    if cap < 1:
        raise ConfigError(f"PACO_LAB_THREADS must be >= 1, got {cap}")
    return cap


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.get("run", "out_dir"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _build_profile(cfg: RunConfig) -> data_mod.LongTailProfile:
    kind = cfg.get("data", "profile")
    if kind == "exponential":
        return data_mod.exponential_profile(cfg.get("data", "n_classes"),
                                            cfg.get("data", "n_max"),
                                            cfg.get("data", "beta"))
    if kind == "pareto":
        return data_mod.pareto_profile(cfg.get("data", "n_classes"),
                                       cfg.get("data", "n_max"),
                                       cfg.get("data", "n_min"),
                                       cfg.get("data", "power"))
    raise ConfigError(f"unknown profile kind {kind!r} (expected exponential or pareto)")


def _dataset_path(cfg: RunConfig) -> Path:
    explicit = cfg.get("data", "dataset_path")
    return Path(explicit) if explicit else _out_dir(cfg) / "dataset.txt"


def cmd_gen_data(cfg: RunConfig) -> int:
    profile = _build_profile(cfg)
    ds = data_mod.sample_gaussian_mixture(profile, cfg.get("data", "dim"),
                                          cfg.get("data", "noise_sigma"),
                                          cfg.get("data", "test_per_class"),
                                          cfg.get("run", "seed"))
    out = _out_dir(cfg)
    data_mod.save_dataset(ds, _dataset_path(cfg))
    data_mod.save_profile_csv(profile, out / "profile.csv")
    print(f"wrote {_dataset_path(cfg)} ({ds.n_train} train / {ds.n_test} test)")
    print(f"wrote {out / 'profile.csv'}")
    return EXIT_OK


def cmd_verify_theory(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    tol = cfg.get("theory", "tolerance")
    corrupt = 1e-4 if cfg.get("theory", "corrupt_closed_forms") else 0.0
    failures = []

    # uniform-optimum family (no centers): oracle must land on 1/K
    for k in cfg.get("theory", "k_grid"):
        sol = theory.simplex_oracle(k, alpha=1.0, include_center=False)
        closed = theory.supcon_optimum(k) + corrupt
        gap = float(np.max(np.abs(sol.pair_probs - closed)))
        if gap > tol or not sol.converged:
            failures.append(f"uniform optimum K={k}: gap={gap:.3e} converged={sol.converged}")

    # center-augmented family over the full grid
    reports = theory.optima_sweep(cfg.get("theory", "alpha_grid"), cfg.get("theory", "k_grid"))
    if corrupt:
        for r in reports:
            r.gap += corrupt
    theory.write_optima_csv(reports, out / "optima.csv")
    for r in reports:
        if r.gap > tol or not r.converged:
            failures.append(
                f"center optimum alpha={r.alpha} K={r.k_y}: gap={r.gap:.3e} converged={r.converged}")

    # residual-term curve and its minimizer
    curve = theory.extra_loss_curve(cfg.get("theory", "curve_alpha"),
                                    cfg.get("theory", "curve_k_star"),
                                    cfg.get("theory", "curve_points"))
    theory.write_curve_csv(curve, out / "curve.csv")
    closed_min = theory.extra_loss_minimizer(cfg.get("theory", "curve_alpha"),
                                             cfg.get("theory", "curve_k_star"))
    grid_step = 1.0 / (cfg.get("theory", "curve_points") + 1)
    if abs(curve.minimizer - closed_min) > grid_step + corrupt:
        failures.append(f"curve minimizer {curve.minimizer} vs closed form {closed_min}")

    # sign pattern of the closed-form center gradients
    alpha = cfg.get("theory", "curve_alpha")
    k_star = cfg.get("theory", "curve_k_star")
    rng = make_rng(cfg.get("run", "seed") + 7919)
    threshold = 1.0 / (1.0 + alpha * k_star)
    for i in range(cfg.get("theory", "sign_instances")):
        n = int(rng.integers(2, 11))
        dim = int(rng.integers(2, 9))
        x = rng.standard_normal(dim)
        x /= np.linalg.norm(x)
        raw = rng.uniform(0.05, 1.0, n)
        p_c = raw / raw.sum()
        label = int(rng.integers(0, n))
        bank = CenterBank(rng.standard_normal((n, dim)), np.full(n, 1.0 / n))
        grad = theory.center_gradient_formula(x, bank, label, alpha, k_star, p_c)
        coeff = grad @ x  # signed multiple of the unit anchor
        others = np.delete(coeff, label)
        own_ok = (coeff[label] < 0) == (p_c[label] < threshold) or abs(
            p_c[label] - threshold) < 1e-12
        if not (np.all(others > 0) and own_ok):
            failures.append(f"sign check failed at instance {i}")
            break

    if failures:
        for f in failures:
            print(f"FAIL {f}", file=sys.stderr)
        return EXIT_FAILED_CHECK
    print(f"theory checks passed; reports in {out}")
    print(f"curve minimizer {curve.minimizer!r} (closed form {closed_min!r})")
    return EXIT_OK


def cmd_grad_check(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    report = gradcheck.run_gradient_check(
        base_seed=cfg.get("run", "seed"),
        instances_per_loss=cfg.get("gradcheck", "instances_per_loss"),
        tolerance=cfg.get("gradcheck", "tolerance"),
        step=cfg.get("gradcheck", "fd_step"),
    )
    gradcheck.write_gradcheck_csv(report, out / "gradcheck.csv")
    for s in report.summaries:
        print(f"{s.kind}: n={s.n_instances} max={s.max_rel_err:.3e} median={s.median_rel_err:.3e}")
    if not report.passed:
        worst = report.worst()
        detail = gradcheck.check_instance(worst.kind, worst.worst_seed,
                                          cfg.get("gradcheck", "fd_step"))
        print(f"FAIL worst instance kind={worst.kind} seed={worst.worst_seed} "
              f"errors={detail.block_errors}", file=sys.stderr)
        print("replay with gradcheck.check_instance(kind, seed)", file=sys.stderr)
        return EXIT_FAILED_CHECK
    return EXIT_OK


def _train_config(cfg: RunConfig) -> trainer.TrainConfig:
    return trainer.TrainConfig(
        loss_kind=cfg.get("train", "loss_kind"),
        alpha=cfg.get("train", "alpha"),
        temperature=cfg.get("train", "temperature"),
        queue_capacity=cfg.get("train", "queue_capacity"),
        momentum_m=cfg.get("train", "momentum_m"),
        sgd_momentum=cfg.get("train", "sgd_momentum"),
        base_lr=cfg.get("train", "base_lr"),
        epochs=cfg.get("train", "epochs"),
        batch_size=cfg.get("train", "batch_size"),
        seed=cfg.get("run", "seed"),
        embed_dim=cfg.get("train", "embed_dim"),
        view_sigma=cfg.get("train", "view_sigma"),
    )


def evaluate_run(model: trainer.TrainedModel, centers: CenterBank,
                 ds: data_mod.SyntheticDataset, tc: trainer.TrainConfig,
                 cfg: RunConfig):
    """Bucket report + gradient-balance metric for a finished run.

    Contrast-only training (supcon) is scored through a linear probe on the
    frozen encoder output; center-bearing losses use nearest-center inference.
    """
    test_feats = ds.features[ds.test_idx]
    test_labels = ds.labels[ds.test_idx]
    x_test, _ = trainer.encode(model.query, test_feats)
    if tc.loss_kind == "supcon":
        x_train, _ = trainer.encode(model.query, ds.features[ds.train_idx])
        probe = trainer.linear_probe(
            x_train, ds.labels[ds.train_idx],
            trainer.ProbeConfig(n_classes=ds.profile.n_classes,
                                epochs=cfg.get("eval", "probe_epochs"),
                                lr=cfg.get("eval", "probe_lr"),
                                batch_size=cfg.get("eval", "probe_batch_size"),
                                seed=tc.seed))
        preds = probe.predict(x_test)
    else:
        preds = evaluation.classify_batch(x_test, centers)
    report = evaluation.bucket_accuracy(
        preds, test_labels, ds.profile,
        (cfg.get("eval", "many_min"), cfg.get("eval", "few_max")))
    norms = trainer.grad_norm_profile(model, centers, ds, tc)
    cov = evaluation.balance_metric(norms)
    return report, norms, cov


def cmd_train(cfg: RunConfig) -> int:
    path = _dataset_path(cfg)
    if not path.exists():
        print(f"dataset file not found: {path}", file=sys.stderr)
        return EXIT_IO
    ds = data_mod.load_dataset(path)
    tc = _train_config(cfg)
    out = _out_dir(cfg)
    try:
        model, centers, trace = trainer.train(ds, tc)
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_FAILED_CHECK
    trainer.write_trace_csv(trace, out / "trace.csv")
    trainer.save_checkpoint(out / "checkpoint.json", model, centers, tc)
    report, norms, cov = evaluate_run(model, centers, ds, tc, cfg)
    with open(out / "bucket_report.csv", "w", encoding="utf-8") as fh:
        fh.write(evaluation.BUCKET_CSV_HEADER + "\n")
        fh.write(report.csv_row(tc.loss_kind, tc.seed, cov) + "\n")
    with open(out / "grad_profile.csv", "w", encoding="utf-8") as fh:
        fh.write("rank,class,count,grad_norm\n")
        for rank, c in enumerate(range(ds.profile.n_classes)):
            fh.write(f"{rank},{c},{int(ds.profile.counts[c])},{norms[c]!r}\n")
    print(f"run complete: all_acc={report.all_acc!r} cov_grad_norm={cov!r}")
    print(f"outputs in {out}")
    return EXIT_OK


def cmd_report(run_dir: str) -> int:
    root = Path(run_dir)
    if not root.is_dir():
        print(f"run directory not found: {root}", file=sys.stderr)
        return EXIT_IO
    bucket_files = sorted(root.glob("**/bucket_report.csv"))
    if not bucket_files:
        print(f"missing run files: no bucket_report.csv under {root}", file=sys.stderr)
        return EXIT_IO
    rows, seen = [], {}
    profiles = []
    for bf in bucket_files:
        with open(bf, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        for line in lines[1:]:
            method, seed = line.split(",")[:2]
            key = (method, seed)
            if key in seen:
                print(f"warning: duplicate run {key} in {bf}, keeping {seen[key]}",
                      file=sys.stderr)
                continue
            seen[key] = bf
            rows.append(line)
        gp = bf.parent / "grad_profile.csv"
        if not gp.exists():
            print(f"missing run file: {gp}", file=sys.stderr)
            return EXIT_IO
        profiles.append((bf.parent.name or "run", gp))

    with open(root / "comparison.csv", "w", encoding="utf-8") as fh:
        fh.write(evaluation.BUCKET_CSV_HEADER + "\n")
        for line in rows:
            fh.write(line + "\n")

    # merge per-run gradient profiles column-wise; rows stay sorted by count desc
    merged: dict[int, list[str]] = {}
    base_rows = None
    names = []
    for name, gp in profiles:
        with open(gp, "r", encoding="utf-8") as fh:
            lines = [ln.strip().split(",") for ln in fh if ln.strip()][1:]
        if base_rows is None:
            base_rows = [(ln[0], ln[1], ln[2]) for ln in lines]
            for ln in lines:
                merged[int(ln[0])] = []
        names.append(name)
        for ln in lines:
            merged[int(ln[0])].append(ln[3])
    with open(root / "grad_profiles.csv", "w", encoding="utf-8") as fh:
        fh.write("rank,class,count," + ",".join(names) + "\n")
        for rank, cls, count in base_rows:
            fh.write(f"{rank},{cls},{count}," + ",".join(merged[int(rank)]) + "\n")
    print(f"merged {len(rows)} runs into {root / 'comparison.csv'}")
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="paco-lab",
                                description="contrastive-loss laboratory")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("gen-data", "verify-theory", "grad-check", "train"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="INI config path")
        sp.add_argument("--seed", type=int, default=None, help="override [run] seed")
        sp.add_argument("--out", default=None, help="override [run] out_dir")
    rp = sub.add_parser("report")
    rp.add_argument("run_dir", help="directory holding completed runs")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        worker_cap()
        if args.command == "report":
            return cmd_report(args.run_dir)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.set("run", "seed", args.seed)
        if args.out is not None:
            cfg.set("run", "out_dir", args.out)
        dispatch = {
            "gen-data": cmd_gen_data,
            "verify-theory": cmd_verify_theory,
            "grad-check": cmd_grad_check,
            "train": cmd_train,
        }
        return dispatch[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
