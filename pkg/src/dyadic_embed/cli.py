"""Config-driven experiment runner.

Usage::

    dyadic-embed run config.json [--out DIR] [--threads N] [--max-rects M]

Writes ``report.json`` and ``rows.csv`` to the output directory (default
``$DYADIC_EMBED_OUT`` or ``./runs``). Exit status: 0 clean, 1 invariant
violations, 2 bad config, 3 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .carleson import carleson_testing_constant, carleson_ratio, principal_cubes
from .embedding import ExponentTuple, KernelMap, estimate_c1_lower, holder_certificate, testing_constant, verify_theorem_necessity
from .lattice import DyadicRect, LatticeSpec
from .operators import (
    FractionalKernelSpec,
    apply_I_alpha_direct,
    apply_I_alpha_discrete,
    duality_reduction_check,
)
from .rect_carleson import rd_geometric_bound, slice_testing_constant
from .weights import GridWeight, gen_cascade_weight, gen_power_weight, lebesgue, load_weight, reverse_doubling_beta

log = logging.getLogger("dyadic_embed")

SCHEMA = 1
MODES = ("verify-carleson", "verify-embedding", "verify-corollary", "ialpha-compare", "constants")
ENV_OUT = "DYADIC_EMBED_OUT"


class ConfigError(ValueError):
    pass


class ResourceError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    mode: str
    spec: LatticeSpec
    weights: list[dict]
    kernel: dict
    p: tuple[float, ...]
    q: float | None
    instances: int = 1
    seed: int = 0
    delta: float | None = None
    alpha: float | None = None
    ascent: dict = field(default_factory=dict)
    base_dir: Path = Path(".")
    raw: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw, path.parent)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path = Path(".")) -> "ExperimentConfig":
        try:
            mode = raw["mode"]
            lat = raw["lattice"]
            root = lat.get("root", {})
            spec = LatticeSpec(int(lat["d"]), int(lat["L"]), tuple(root.get("origin", ())), tuple(root.get("sides", ())))
            exps = raw.get("exponents", {})
            sweep = raw.get("sweep", {})
            cfg = cls(
                mode=mode,
                spec=spec,
                weights=list(raw.get("weights", [{"type": "lebesgue"}])),
                kernel=dict(raw.get("kernel", {"type": "calibrated"})),
                p=tuple(float(x) for x in exps.get("p", ())),
                q=float(exps["q"]) if exps.get("q") is not None else None,
                instances=int(sweep.get("instances", 1)),
                seed=int(sweep.get("seed", 0)),
                delta=sweep.get("delta"),
                alpha=raw.get("alpha"),
                ascent=dict(raw.get("ascent", {})),
                base_dir=base_dir,
                raw=raw,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config: {exc!r}") from exc
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {', '.join(MODES)}")
        if self.instances < 1:
            raise ConfigError("sweep.instances must be >= 1")
        for w in self.weights:
            if w.get("type") == "file" and not (self.base_dir / w["path"]).exists():
                raise ConfigError(f"weight file {w['path']} not found")
        if self.kernel.get("type") == "file" and not (self.base_dir / self.kernel["path"]).exists():
            raise ConfigError(f"kernel file {self.kernel['path']} not found")
        try:
            p = ExponentTuple(self.p) if self.p else None
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if p is None:
            raise ConfigError("exponents.p is required")
        if self.mode == "verify-carleson":
            if p.n != 1 or self.q is None or not 1 < p.p[0] < self.q < math.inf:
                raise ConfigError("verify-carleson needs one p and q with 1 < p < q < inf")
        elif self.mode in ("verify-embedding", "constants"):
            if len(self.weights) not in (1, p.n):
                raise ConfigError(f"need 1 or {p.n} weight descriptors, got {len(self.weights)}")
            if self.mode == "verify-embedding" and not p.super_dual:
                raise ConfigError(f"verify-embedding needs sum 1/p_i > 1, got {p.reciprocal_sum}")
        elif self.mode == "verify-corollary":
            if self.q is None or not 1 < self.q < math.inf:
                raise ConfigError("verify-corollary needs 1 < q < inf")
            if not p.reciprocal_sum > 1 / self.q:
                raise ConfigError("verify-corollary needs sum 1/p_i > 1/q")
            if len(self.weights) not in (1, p.n + 1):
                raise ConfigError(f"need 1 or {p.n + 1} weight descriptors (omega first)")
        elif self.mode == "ialpha-compare":
            if self.alpha is None or not 0 < float(self.alpha) < self.spec.d * p.n:
                raise ConfigError(f"ialpha-compare needs 0 < alpha < d*n = {self.spec.d * p.n}")
            if self.spec.L < 1:
                raise ConfigError("ialpha-compare needs L >= 1")


# -- builders -------------------------------------------------------------------


def build_weight(desc: dict, spec: LatticeSpec, rng: np.random.Generator, cfg: ExperimentConfig) -> GridWeight:
    kind = desc.get("type")
    if kind == "lebesgue":
        return lebesgue(spec)
    if kind == "power":
        return gen_power_weight(spec, desc.get("exponents", 0.0))
    if kind == "cascade":
        delta = desc.get("delta", cfg.delta)
        if delta is None:
            raise ConfigError("cascade weight needs a delta")
        return gen_cascade_weight(spec, float(delta), rng)
    if kind == "file":
        w = load_weight(cfg.base_dir / desc["path"])
        if w.spec != spec:
            raise ConfigError(f"weight file {desc['path']} has lattice {w.spec}, config has {spec}")
        return w
    raise ConfigError(f"unknown weight type {kind!r}")


def build_kernel(desc: dict, spec: LatticeSpec, weights, p: ExponentTuple, rng, cfg: ExperimentConfig) -> KernelMap:
    kind = desc.get("type")
    if kind == "volume_power":
        return KernelMap.volume_power(spec, float(desc["gamma"]))
    if kind == "calibrated":
        return KernelMap.calibrated(weights, p)
    if kind == "random":
        return KernelMap.random(spec, rng, float(desc.get("sparsity", 0.0)))
    if kind == "single":
        rect = DyadicRect.from_pairs(*[tuple(a) for a in desc["rect"]])
        return KernelMap.single(spec, rect, float(desc.get("value", 1.0)))
    if kind == "dense":
        return KernelMap.from_dense(spec, desc["values"])
    if kind == "file":
        inner = json.loads((cfg.base_dir / desc["path"]).read_text())
        if inner.get("type") == "file":
            raise ConfigError("kernel file may not reference another file")
        return build_kernel(inner, spec, weights, p, rng, cfg)
    raise ConfigError(f"unknown kernel type {kind!r}")


def _weights(cfg: ExperimentConfig, count: int, rng) -> list[GridWeight]:
    descs = cfg.weights if len(cfg.weights) == count else cfg.weights * count
    return [build_weight(d, cfg.spec, rng, cfg) for d in descs[:count]]


# -- suites ----------------------------------------------------------------------


def _run_carleson(cfg, rng):
    (w,) = _weights(cfg, 1, rng)
    p, q = cfg.p[0], cfg.q
    r = q / p
    c2, _ = carleson_testing_constant(w, r)
    slice_c2, _, _ = slice_testing_constant(w, r)
    beta = reverse_doubling_beta(w).beta_hat
    bound = rd_geometric_bound(beta, r) if beta > 1 else math.inf
    f = rng.random(cfg.spec.shape) ** 4
    fam = principal_cubes(f, w)
    row = {
        "beta_hat": beta,
        "c2": c2,
        "slice_c2": slice_c2,
        "geometric_bound": bound,
        "family_size": len(fam.cubes),
        "min_sparsity": fam.min_sparsity,
        "carleson_ratio": carleson_ratio(w, f, p, q),
    }
    violations = []
    if not (fam.sparse(w) and fam.masks_disjoint()):
        violations.append("principal-cube sparsity")
    if slice_c2 > bound * (1 + 1e-12):
        violations.append("slice constant above reverse-doubling bound")
    if c2 < 1:
        violations.append("testing constant below 1")
    return row, violations


def _ascent_kwargs(cfg):
    return {
        "starts": int(cfg.ascent.get("starts", 4)),
        "iters": int(cfg.ascent.get("iters", 200)),
        "tol": float(cfg.ascent.get("tol", 1e-10)),
    }


def _run_embedding(cfg, rng, certify: bool):
    p = ExponentTuple(cfg.p)
    weights = _weights(cfg, p.n, rng)
    K = build_kernel(cfg.kernel, cfg.spec, weights, p, rng, cfg)
    c2, witness = testing_constant(K, weights, p)
    ascent = estimate_c1_lower(K, weights, p, seed=rng, **_ascent_kwargs(cfg))
    row = {
        "beta_hat": min(reverse_doubling_beta(w).beta_hat for w in weights),
        "c2": c2,
        "c1_lower": ascent.value,
        "ratio": ascent.value / c2 if c2 > 0 else math.nan,
        "witness": str(witness),
    }
    violations = []
    if ascent.value < c2 * (1 - 1e-9):
        violations.append("c1_lower below testing constant")
    if not ascent.monotone:
        violations.append("ascent not monotone")
    if certify:
        nec = verify_theorem_necessity(K, weights, p, c1_lower=ascent.value, max_rects=64, seed=rng)
        cert = holder_certificate(K, weights, p, ascent.f)
        row["certificate"] = cert.certificate
        row["certificate_ratio"] = cert.lhs / cert.certificate if cert.certificate > 0 else math.nan
        if not nec.ok:
            violations.append("indicator necessity")
        if not cert.holds:
            violations.append("Holder certificate")
        if not cert.geometric_holds:
            violations.append("slice constant above reverse-doubling bound")
    return row, violations


def _run_corollary(cfg, rng):
    p = ExponentTuple(cfg.p)
    weights = _weights(cfg, p.n + 1, rng)
    omega, sigma = weights[0], weights[1:]
    K = build_kernel(cfg.kernel, cfg.spec, sigma, p, rng, cfg)
    rep = duality_reduction_check(K, omega, sigma, p, cfg.q, instances=5, seed=rng)
    row = {
        "c2": rep.corollary_c2,
        "c1_lower": rep.c1_lower,
        "operator_ratio": rep.operator_ratio,
        "scan_gap": rep.scan_gap,
        "pairing_gap": rep.pairing_gap,
        "norm_gap": rep.norm_gap,
    }
    return row, ([] if rep.ok else ["duality reduction"])


def _run_ialpha(cfg, rng):
    p = ExponentTuple(cfg.p)
    fk = FractionalKernelSpec(float(cfg.alpha), p.n, cfg.spec.d)
    coarse = LatticeSpec(cfg.spec.d, cfg.spec.L - 1, cfg.spec.origin, cfg.spec.sides)
    base = [rng.random(coarse.shape) + 0.05 for _ in range(p.n)]
    logs = []
    for spec, refine in ((coarse, 1), (cfg.spec, 2)):
        f = [np.kron(b, np.ones((refine,) * spec.d)) for b in base]
        direct = apply_I_alpha_direct(fk, f, spec, max_cells=int(cfg.raw.get("max_cells", 4096)))
        ratio = apply_I_alpha_discrete(fk, f, spec) / direct
        logs.append(float(np.max(np.abs(np.log(ratio)))))
    row = {"log_ratio_coarse": logs[0], "log_ratio_fine": logs[1], "stability": logs[1] / logs[0]}
    violations = []
    if not all(math.isfinite(x) for x in logs) or not 0.5 <= row["stability"] <= 2.0:
        violations.append("I_alpha comparability unstable")
    return row, violations


def run_instance(cfg: ExperimentConfig, index: int, timing: bool = False) -> dict:
    rng = np.random.default_rng(cfg.seed + index)
    start = time.perf_counter()
    if cfg.mode == "verify-carleson":
        row, violations = _run_carleson(cfg, rng)
    elif cfg.mode == "verify-embedding":
        row, violations = _run_embedding(cfg, rng, certify=True)
    elif cfg.mode == "constants":
        row, violations = _run_embedding(cfg, rng, certify=False)
    elif cfg.mode == "verify-corollary":
        row, violations = _run_corollary(cfg, rng)
    else:
        row, violations = _run_ialpha(cfg, rng)
    row = {"instance": index, **row, "violations": ";".join(violations)}
    if timing:
        row["wall_time"] = time.perf_counter() - start
    return row


def _summary(rows: list[dict]) -> dict:
    summary: dict[str, Any] = {}
    numeric = [k for k, v in rows[0].items() if isinstance(v, float) and k != "wall_time"]
    for key in numeric:
        vals = [r[key] for r in rows if math.isfinite(r[key])]
        if vals:
            summary[key] = {"min": min(vals), "max": max(vals), "median": statistics.median(vals)}
    summary["violations"] = [
        {"instance": r["instance"], "checks": r["violations"].split(";")} for r in rows if r["violations"]
    ]
    return summary


def run(cfg: ExperimentConfig, threads: int = 1, max_rects: int | None = None, timing: bool = False) -> dict:
    if max_rects is not None and cfg.spec.rect_count > max_rects:
        raise ResourceError(f"lattice has {cfg.spec.rect_count} rectangles, cap is {max_rects}")
    cells = math.prod(cfg.spec.shape)
    if cfg.mode == "ialpha-compare" and cells > int(cfg.raw.get("max_cells", 4096)):
        raise ResourceError(f"direct quadrature on {cells} cells exceeds max_cells")
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(lambda i: run_instance(cfg, i, timing), range(cfg.instances)))
    return {"schema": SCHEMA, "mode": cfg.mode, "config": cfg.raw, "rows": rows, "summary": _summary(rows)}


def rows_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def write_report(report: dict, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True, default=str) + "\n")
    (out / "rows.csv").write_text(rows_csv(report["rows"]))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dyadic-embed", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run an experiment config")
    runp.add_argument("config")
    runp.add_argument("--out", default=os.environ.get(ENV_OUT, "runs"))
    runp.add_argument("--threads", type=int, default=1)
    runp.add_argument("--max-rects", type=int, default=None)
    runp.add_argument("--timing", action="store_true", help="record wall time per instance (breaks byte-identical reports)")
    runp.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    try:
        cfg = ExperimentConfig.load(args.config)
        report = run(cfg, threads=args.threads, max_rects=args.max_rects, timing=args.timing)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ResourceError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return 3
    out = Path(args.out)
    write_report(report, out)
    bad = report["summary"]["violations"]
    log.info("%d instances, %d with violations, report in %s", len(report["rows"]), len(bad), out)
    for v in bad:
        print(f"instance {v['instance']}: {', '.join(v['checks'])}", file=sys.stderr)
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
