"""Command-line experiment runner.

Exit codes: 0 all checks pass, 1 a verification failed, 2 bad configuration
or input, 3 the run would exceed the memory cap.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import re
import sys
import time
from dataclasses import asdict, dataclass, field as dc_field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .errors import HypothesisViolated, SkelmaxError
from .grid import ScalarField, abs_prefix, read_field, seven_q0, unit_q0, write_field
from .skeleton import Skeleton, face_codes, read_skeletons, write_skeletons

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_MEMORY = 0, 1, 2, 3
DEFAULT_CAP_MB = 4096


class MemoryCapExceeded(SkelmaxError):
    def __init__(self, need_mb, cap_mb):
        super().__init__("memory-cap", f"estimated {need_mb:.0f} MB exceeds cap {cap_mb} MB")


# ---------------------------------------------------------------------------
# parsing and validation

_POW = re.compile(r"^\s*2\s*\^\s*\(?\s*(-?\d+)\s*\)?\s*$")


def parse_delta(text):
    """``2^-5``, ``1/32`` or ``0.03125``; must be ``2^-j`` with ``2 <= j <= 12``."""
    if isinstance(text, (int, float)):
        value = float(text)
    else:
        m = _POW.match(str(text))
        if m:
            value = 2.0 ** int(m.group(1))
        else:
            try:
                value = float(Fraction(str(text).strip()))
            except (ValueError, ZeroDivisionError):
                raise SkelmaxError("invalid-delta", f"cannot parse delta {text!r}") from None
    if not value > 0:
        raise SkelmaxError("invalid-delta", f"delta={value!r} must be positive")
    j = -math.log2(value)
    if abs(j - round(j)) > 1e-12:
        raise SkelmaxError("invalid-delta", f"delta={value!r} is not a power of 2")
    if not 2 <= round(j) <= 12:
        raise SkelmaxError("invalid-delta", f"delta={value!r} outside [2^-12, 2^-2]")
    return 2.0 ** -round(j)


def parse_deltas(text):
    """Comma list of deltas; ``a..b`` expands over every power of two between them."""
    if isinstance(text, (list, tuple)):
        return [parse_delta(t) for t in text]
    out = []
    for part in str(text).split(","):
        if ".." in part and not re.match(r"^\s*\d*\.\d+\s*$", part):
            a, b = (parse_delta(x) for x in part.split("..", 1))
            ja, jb = round(-math.log2(a)), round(-math.log2(b))
            step = 1 if jb >= ja else -1
            out.extend(2.0 ** -j for j in range(ja, jb + step, step))
        elif part.strip():
            out.append(parse_delta(part))
    if not out:
        raise SkelmaxError("invalid-delta", "empty delta list")
    return out


def memory_estimate_mb(n, deltas):
    cells = max((7.0 / d) ** n for d in deltas)
    return cells * 8 * 2 / 2 ** 20


def check_memory(n, deltas, cap_mb):
    need = memory_estimate_mb(n, deltas)
    if need > cap_mb:
        raise MemoryCapExceeded(need, cap_mb)


@dataclass
class ExperimentConfig:
    n: int = 2
    k: int = 1
    p: list = dc_field(default_factory=lambda: [1.0])
    deltas: list = dc_field(default_factory=lambda: [2.0 ** -4])
    variant: str = "restricted"
    candidates: list = dc_field(default_factory=lambda: ["witness", "dilation", "skeleton", "random", "bump", "constant"])
    seed: int = 0
    strategy: str = "coordinate-align"
    restarts: int = 8
    trials: int = 2
    out: str = "skelmax-out"
    workers: int = 0
    memory_cap_mb: float = DEFAULT_CAP_MB
    steps: list = dc_field(default_factory=lambda: ["witness", "eval", "norm-scan"])
    verify: list = dc_field(default_factory=list)
    field: str = "constant:1"

    def canonical(self):
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    def digest(self):
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()


_STEPS = ("witness", "eval", "norm-scan", "verify")
_VERIFY = ("duality", "intersections", "upper-bound", "main-lemma", "domination", "rescaling")


def _config_error(field, msg):
    return SkelmaxError("invalid-config", f"field '{field}': {msg}")


def validate_config(raw):
    """Build an :class:`ExperimentConfig` from a dict, naming the offending field on error."""
    from .extremal import STRATEGIES
    from .normlab import CANDIDATE_CLASSES, VARIANTS

    if not isinstance(raw, dict):
        raise _config_error("<root>", "expected a table of keys")
    known = set(ExperimentConfig.__dataclass_fields__) | {"delta"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise _config_error(unknown[0], "unknown key")
    cfg = ExperimentConfig()
    for key in ("n", "k", "seed", "restarts", "trials", "workers"):
        if key in raw:
            if not isinstance(raw[key], int) or isinstance(raw[key], bool):
                raise _config_error(key, f"expected an integer, got {raw[key]!r}")
            setattr(cfg, key, raw[key])
    if not 1 <= cfg.n <= 4:
        raise _config_error("n", f"{cfg.n} outside 1..4")
    if not 0 <= cfg.k < cfg.n:
        raise _config_error("k", f"{cfg.k} must satisfy 0 <= k < n")
    if cfg.restarts < 1 or cfg.trials < 0 or cfg.workers < 0:
        raise _config_error("restarts", "restarts >= 1, trials >= 0 and workers >= 0 required")
    if "deltas" in raw or "delta" in raw:
        key = "deltas" if "deltas" in raw else "delta"
        try:
            cfg.deltas = parse_deltas(raw[key])
        except SkelmaxError as exc:
            raise _config_error(key, str(exc)) from None
    if "p" in raw:
        ps = raw["p"] if isinstance(raw["p"], list) else [raw["p"]]
        if not ps or not all(isinstance(v, (int, float)) and not isinstance(v, bool) and 1 <= v < math.inf for v in ps):
            raise _config_error("p", f"expected numbers in [1, inf), got {raw['p']!r}")
        cfg.p = [float(v) for v in ps]
    if "variant" in raw:
        if raw["variant"] not in VARIANTS:
            raise _config_error("variant", f"{raw['variant']!r} not in {VARIANTS}")
        cfg.variant = raw["variant"]
    if "strategy" in raw:
        if raw["strategy"] not in STRATEGIES:
            raise _config_error("strategy", f"{raw['strategy']!r} not in {STRATEGIES}")
        cfg.strategy = raw["strategy"]
    if "candidates" in raw:
        c = raw["candidates"]
        c = c.split(",") if isinstance(c, str) else c
        bad = [x for x in c if x not in CANDIDATE_CLASSES]
        if bad or not c:
            raise _config_error("candidates", f"unknown classes {bad}")
        cfg.candidates = list(c)
    for key, allowed in (("steps", _STEPS), ("verify", _VERIFY)):
        if key in raw:
            v = raw[key]
            v = v.split(",") if isinstance(v, str) else v
            bad = [x for x in v if x not in allowed]
            if bad:
                raise _config_error(key, f"unknown entries {bad}; allowed {allowed}")
            setattr(cfg, key, list(v))
    if "out" in raw:
        if not isinstance(raw["out"], str) or not raw["out"]:
            raise _config_error("out", "expected a path")
        cfg.out = raw["out"]
    if "field" in raw:
        if not isinstance(raw["field"], str):
            raise _config_error("field", "expected 'constant:<c>' or a field file path")
        cfg.field = raw["field"]
    if "memory_cap_mb" in raw:
        if not isinstance(raw["memory_cap_mb"], (int, float)) or raw["memory_cap_mb"] <= 0:
            raise _config_error("memory_cap_mb", "expected a positive number")
        cfg.memory_cap_mb = float(raw["memory_cap_mb"])
    return cfg


def load_config(path):
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith(".toml"):
        try:
            import tomllib
        except ImportError:  # Python < 3.11
            import tomli as tomllib
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise SkelmaxError("invalid-config", f"{path}: {exc}") from None
    else:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SkelmaxError("invalid-config", f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return validate_config(raw)


# ---------------------------------------------------------------------------
# deterministic writers

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return path


def write_scan_svg(path, scan):
    """Log-log plot of the best ratio per delta with the fitted line."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "skelmax"
    best = scan.best_per_delta()
    d = np.array([r.delta for r in best])
    v = np.array([r.ratio for r in best])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(d, v, "o", label="best ratio")
    if len(best) >= 3:
        slope, intercept, _ = scan.fit()
        ax.loglog(d, np.exp(intercept) * d ** slope, "-", label=f"fit slope {slope:.3f}")
    ax.set_xlabel("delta")
    ax.set_ylabel("norm ratio")
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _tag(delta):
    return f"d{round(-math.log2(delta))}"


# ---------------------------------------------------------------------------
# pipeline pieces (each returns (payload, {name: path}))

def do_witness(n, k, delta, strategy, seed, restarts, out):
    from .extremal import search_radius_function

    rep = search_radius_function(n, k, delta, strategy, seed, restarts)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    centers = unit_q0(n, delta).centers().reshape(-1, n)
    radii = rep.rho.values.reshape(-1)
    paths = {}
    paths["rho"] = out / f"witness_{_tag(delta)}_rho.csv"
    write_skeletons(paths["rho"], [Skeleton(tuple(c), float(r)) for c, r in zip(centers, radii)])
    paths["occupancy"] = out / f"witness_{_tag(delta)}_occupancy.field"
    write_field(paths["occupancy"], rep.occupancy().to_field())
    paths["report"] = write_json(out / f"witness_{_tag(delta)}.json", rep.to_json())
    return rep, paths


def load_input_field(spec_text, n, delta):
    if spec_text.startswith("constant:"):
        try:
            c = float(spec_text.split(":", 1)[1])
        except ValueError:
            raise SkelmaxError("invalid-config", f"field '{spec_text}'") from None
        return ScalarField.constant(seven_q0(n, delta), c)
    f = read_field(spec_text)
    if f.spec != seven_q0(n, delta):
        raise SkelmaxError("grid-mismatch", f"{spec_text} is not on the 7Q_0 grid for n={n}, delta={delta}")
    return f


def do_eval(f, k, variant, out, t=None, tag="eval"):
    from .maxop import evaluate_dyadic, evaluate_restricted, evaluate_unrestricted

    table = abs_prefix(f)
    if variant == "restricted":
        res = evaluate_restricted(table, k)
    elif variant == "unrestricted":
        res = evaluate_unrestricted(table, k)
    elif variant == "dyadic":
        if t is None:
            raise SkelmaxError("invalid-config", "dyadic variant needs --t")
        res = evaluate_dyadic(table, k, t)
    else:
        raise SkelmaxError("invalid-variant", repr(variant))
    out = Path(out)
    paths = {"field": out / f"{tag}.field"}
    out.mkdir(parents=True, exist_ok=True)
    write_field(paths["field"], res.field)
    v = res.field.values
    summary = {"k": k, "variant": variant, "delta": f.spec.delta, "t": t,
               "min": float(v.min()), "max": float(v.max()), "mean": float(v.mean())}
    paths["summary"] = write_json(out / f"{tag}.json", summary)
    return summary, paths


def do_norm_scan(n, k, p, deltas, variant, classes, seed, trials, strategy, restarts, out, witnesses=None):
    from .normlab import norm_scan

    scan = norm_scan(n, k, p, deltas, variant, tuple(classes), seed, trials, strategy, restarts, witnesses)
    out = Path(out)
    tag = f"normscan_p{p:g}_{variant}"
    paths = {
        "csv": write_csv(out / f"{tag}.csv", ["delta", "candidate", "ratio", "class", "certified"],
                         [(r.delta, r.candidate, r.ratio, r.candidate_class, r.certified) for r in scan.rows]),
        "fit": write_json(out / f"{tag}.json", scan.to_json()),
        "plot": write_scan_svg(out / f"{tag}.svg", scan),
    }
    return scan, paths


# -- verifications: each returns a JSON-able dict with "status"

def verify_duality(n=2, k=1, delta=1 / 32, p=2.0, trials=50, seed=0):
    from .extremal import _center_index
    from .maxop import FaceAssignment, RadiusFunction
    from .normlab import WeightVector, class_members, duality_check
    from .selection import greedy_select_indices

    spec, q0 = seven_q0(n, delta), unit_q0(n, delta)
    M = q0.inv_delta
    centers = _center_index(q0)
    q = p / (p - 1)
    classes = sorted({tuple(np.flatnonzero(c == 0)) for c in face_codes(n, k)})
    rows = []
    for s in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence([seed, s]))
        f = ScalarField(spec, rng.random(spec.extent) ** 3)
        steps = rng.integers(M, 2 * M + 1, q0.extent)
        idx, _ = greedy_select_indices(2 * centers + 1, 2 * steps.reshape(-1), n, k)
        phi = FaceAssignment(n, k, idx)
        J = classes[s % len(classes)]
        u = class_members(phi, J).size
        w = WeightVector(rng.random(u))
        if u:
            w = WeightVector(w.t / w.normalization(n, k, delta, q) ** (1 / q))
        rep = duality_check(f, RadiusFunction(q0, steps), phi, J, w, p)
        rows.append(dict(rep.to_json(), trial=s, plane_class=list(J)))
    worst = min(r["margin"] for r in rows)
    return {"check": "duality", "n": n, "k": k, "delta": delta, "p": p, "trials": trials,
            "worst_margin": worst, "rows": rows,
            "status": "PASS" if all(r["status"] == "PASS" for r in rows) else "FAIL"}


def verify_intersections(n=2, k=1, deltas=(2 ** -4, 2 ** -5, 2 ** -6, 2 ** -7), ms=(2, 3), u_max=200, seed=0):
    from .normlab import WeightVector, intersection_bound_check, intersection_family

    out = {"check": "intersections", "n": n, "k": k, "u_max": u_max, "by_m": {}}
    ok = True
    for m in ms:
        rows = []
        for d in deltas:
            c, s, codes = intersection_family(n, k, d, u_max, seed)
            w = WeightVector.uniform(len(s), n, k, d, m)
            rows.append(intersection_bound_check(c, s, codes, w, d, m, k).to_json())
        cs = [r["c_star"] for r in rows]
        spread = max(cs) / min(cs)
        holder = all(r["holder_ok"] for r in rows)
        ok &= holder and spread <= 3.0
        out["by_m"][str(m)] = {"rows": rows, "c_star_spread": spread, "holder_ok": holder}
    out["status"] = "PASS" if ok else "FAIL"
    return out


def verify_upper_bound(n=2, k=1, p=1.0, deltas=(2 ** -4, 2 ** -5, 2 ** -6), variant="restricted",
                       trials=2, seed=0, restarts=4, strategy="coordinate-align"):
    from .normlab import upper_bound_scan

    rep = upper_bound_scan(n, k, p, list(deltas), trials, seed, variant, None, strategy, restarts)
    return dict(rep.to_json(), check="upper-bound")


def verify_main_lemma(max_x=6):
    from .selection import brute_force_main_lemma, main_lemma_ratio

    rows = brute_force_main_lemma(2, 1, max_x)
    rejected = False
    try:
        # two centers, but A only holds the offsets of the first one
        main_lemma_ratio({(0,), (2,)}, [(1, 1), (5, 7)], 1)
    except HypothesisViolated:
        rejected = True
    ok = rejected and all(r.min_ratio > 0 for r in rows)
    return {"check": "main-lemma", "rows": [asdict(r) for r in rows], "checker_rejects_violation": rejected,
            "status": "PASS" if ok else "FAIL"}


def verify_domination(n=2, k=1, delta=1 / 32, trials=20, seed=0):
    from .maxop import build_dominating_rho

    spec = seven_q0(n, delta)
    rows = []
    for s in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence([seed, s]))
        f = ScalarField(spec, rng.random(spec.extent) ** 4)
        _, _, rep = build_dominating_rho(f, k, strict=False)
        rows.append({"trial": s, "violations": rep.violations, "min_slack": rep.min_slack})
    bad = sum(r["violations"] for r in rows)
    return {"check": "domination", "n": n, "k": k, "delta": delta, "rows": rows,
            "violations": bad, "worst_slack": min(r["min_slack"] for r in rows),
            "status": "PASS" if bad == 0 else "FAIL"}


def verify_rescaling(n=2, k=1, delta=1 / 32, trials=5, seed=0, ts=(-3, -2, -1)):
    from .maxop import rescaling_pair

    spec = seven_q0(n, delta)
    worst = 0.0
    for s in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence([seed, s]))
        f = ScalarField(spec, rng.random(spec.extent))
        for t in ts:
            a, b = rescaling_pair(f, k, t)
            worst = max(worst, float(np.max(np.abs(a - b))))
    return {"check": "rescaling", "n": n, "k": k, "delta": delta, "ts": list(ts), "trials": trials,
            "max_abs_diff": worst, "status": "PASS" if worst <= 1e-9 else "FAIL"}


# ---------------------------------------------------------------------------
# run

def run(cfg):
    """Execute the configured pipeline; returns ``(manifest dict, exit code)``."""
    check_memory(cfg.n, cfg.deltas, cfg.memory_cap_mb)
    if cfg.workers and _kernels.HAVE_NUMBA:
        import numba

        numba.set_num_threads(min(cfg.workers, numba.config.NUMBA_NUM_THREADS))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs, timings, summary = {}, {}, {}
    witnesses = {}
    if "witness" in cfg.steps:
        t0 = time.perf_counter()
        for d in cfg.deltas:
            rep, paths = do_witness(cfg.n, cfg.k, d, cfg.strategy, cfg.seed, cfg.restarts, out)
            witnesses[d] = [rep]
            outputs.update({f"witness.{_tag(d)}.{k}": str(v) for k, v in paths.items()})
        timings["witness"] = time.perf_counter() - t0
    if "eval" in cfg.steps:
        t0 = time.perf_counter()
        for d in cfg.deltas:
            f = load_input_field(cfg.field, cfg.n, d)
            _, paths = do_eval(f, cfg.k, cfg.variant, out, tag=f"eval_{_tag(d)}")
            outputs.update({f"eval.{_tag(d)}.{k}": str(v) for k, v in paths.items()})
        timings["eval"] = time.perf_counter() - t0
    if "norm-scan" in cfg.steps:
        t0 = time.perf_counter()
        for p in cfg.p:
            _, paths = do_norm_scan(cfg.n, cfg.k, p, cfg.deltas, cfg.variant, cfg.candidates, cfg.seed,
                                    cfg.trials, cfg.strategy, cfg.restarts, out, witnesses or None)
            outputs.update({f"norm-scan.p{p:g}.{k}": str(v) for k, v in paths.items()})
        timings["norm-scan"] = time.perf_counter() - t0
    if "verify" in cfg.steps:
        for name in cfg.verify:
            t0 = time.perf_counter()
            res = _run_verify(name, cfg)
            outputs[f"verify.{name}"] = str(write_json(out / f"verify_{name}.json", res))
            summary[name] = res["status"]
            timings[f"verify.{name}"] = time.perf_counter() - t0
    manifest = {
        "config_hash": cfg.digest(),
        "config": asdict(cfg),
        "version": __version__,
        "backend": _kernels.backend(),
        "outputs": outputs,
        "payload_sha256": {k: sha256_file(v) for k, v in sorted(outputs.items())},
        "timings_s": timings,
        "summary": summary,
        "status": "FAIL" if "FAIL" in summary.values() else "PASS",
    }
    write_json(out / "manifest.json", manifest)
    return manifest, EXIT_FAIL if manifest["status"] == "FAIL" else EXIT_OK


def _run_verify(name, cfg):
    d = cfg.deltas
    if name == "duality":
        p = next((v for v in cfg.p if v > 1), 2.0)
        return verify_duality(cfg.n, cfg.k, d[0], p, seed=cfg.seed)
    if name == "intersections":
        return verify_intersections(cfg.n, cfg.k, d if len(d) > 1 else (2 ** -4, 2 ** -5, 2 ** -6, 2 ** -7), seed=cfg.seed)
    if name == "upper-bound":
        return verify_upper_bound(cfg.n, cfg.k, cfg.p[0], d, cfg.variant, cfg.trials, cfg.seed, cfg.restarts, cfg.strategy)
    if name == "main-lemma":
        return verify_main_lemma()
    if name == "domination":
        return verify_domination(cfg.n, cfg.k, d[0], seed=cfg.seed)
    return verify_rescaling(cfg.n, cfg.k, d[0], seed=cfg.seed)


# ---------------------------------------------------------------------------
# argparse front end

def _common(ap, delta=True, deltas=False):
    ap.add_argument("--n", type=int, default=2)
    ap.add_argument("--k", type=int, default=1)
    if delta:
        ap.add_argument("--delta", default="2^-5", help="power of two, e.g. 2^-5 or 1/32")
    if deltas:
        ap.add_argument("--deltas", default="2^-4..2^-6", help="list or range, e.g. 2^-4..2^-8")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="skelmax-out")
    ap.add_argument("--memory-cap-mb", type=float, default=DEFAULT_CAP_MB)


def build_parser():
    ap = argparse.ArgumentParser(prog="skelmax", description="k-skeleton maximal operator experiments")
    ap.add_argument("--version", action="version", version=f"skelmax {__version__}")
    sub = ap.add_subparsers(dest="cmd", required=True)

    e = sub.add_parser("eval", help="evaluate an operator on a field")
    _common(e)
    e.add_argument("--field", default="constant:1", help="field file on the 7Q_0 grid or constant:<c>")
    e.add_argument("--variant", choices=("restricted", "dyadic", "unrestricted"), default="restricted")
    e.add_argument("--t", type=int, default=None, help="dyadic scale for --variant dyadic")

    s = sub.add_parser("norm-scan", help="norm ratios across delta with a log-log fit")
    _common(s, delta=False, deltas=True)
    s.add_argument("--p", type=float, default=1.0)
    s.add_argument("--variant", choices=("restricted", "unrestricted"), default="restricted")
    s.add_argument("--candidates", default="witness,dilation,skeleton,random,bump,constant")
    s.add_argument("--trials", type=int, default=2)
    s.add_argument("--strategy", default="coordinate-align")
    s.add_argument("--restarts", type=int, default=8)

    w = sub.add_parser("witness", help="search for a small skeleton union")
    _common(w)
    w.add_argument("--strategy", default="coordinate-align")
    w.add_argument("--restarts", type=int, default=8)

    se = sub.add_parser("select", help="greedy face selection for a skeleton list")
    se.add_argument("--skeletons", required=True, help="CSV with columns x_1..x_n,r")
    se.add_argument("--k", type=int, default=1)
    se.add_argument("--delta", default="2^-5")
    se.add_argument("--out", default="skelmax-out")

    v = sub.add_parser("verify", help="numerical checks; PASS/FAIL JSON")
    v.add_argument("check", choices=_VERIFY)
    _common(v, deltas=True)
    v.add_argument("--p", type=float, default=None)
    v.add_argument("--trials", type=int, default=None)
    v.add_argument("--variant", choices=("restricted", "unrestricted"), default="restricted")
    v.add_argument("--restarts", type=int, default=4)
    v.add_argument("--m", default="2,3", help="intersection orders")

    b = sub.add_parser("boxdim", help="box dimension from a series of occupancy files")
    b.add_argument("files", nargs="+")
    b.add_argument("--out", default=None)

    r = sub.add_parser("run", help="run a JSON or TOML experiment config")
    r.add_argument("config")
    r.add_argument("--out", default=None, help="override the output directory")
    r.add_argument("--seed", type=int, default=None)
    return ap


def _emit(obj):
    sys.stdout.write(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _dispatch(args):
    if args.cmd == "run":
        cfg = load_config(args.config)
        if args.out is not None:
            cfg.out = args.out
        if args.seed is not None:
            cfg.seed = args.seed
        manifest, code = run(cfg)
        _emit({"status": manifest["status"], "summary": manifest["summary"],
               "manifest": str(Path(cfg.out) / "manifest.json")})
        return code

    if args.cmd == "boxdim":
        from .extremal import box_dim_estimate

        series, n = [], None
        for path in args.files:
            f = read_field(path)
            n = f.spec.n if n is None else n
            series.append((f.spec.delta, float(np.count_nonzero(f.values)) * f.spec.cell_volume))
        est = box_dim_estimate(series, n)
        res = {"n": n, "series": [{"delta": d, "measure": m} for d, m in series], "box_dimension": est}
        if args.out:
            write_json(Path(args.out) / "boxdim.json", res)
        _emit(res)
        return EXIT_OK

    if args.cmd == "select":
        from .selection import greedy_select, plane_of_face

        delta = parse_delta(args.delta)
        sks = read_skeletons(args.skeletons)
        faces, cert = greedy_select(sks, args.k, delta)
        n = sks[0].n
        out = Path(args.out)
        write_csv(out / "selection.csv", [f"x_{i + 1}" for i in range(n)] + ["r", "face", "plane"],
                  [list(s.center) + [s.r, f.token(), plane_of_face(s, f, delta).token()] for s, f in zip(sks, faces)])
        write_json(out / "selection_certificate.json", cert.to_json())
        _emit({"u": cert.u, "max_per_plane": cert.max_per_plane, "problems": cert.problems()})
        return EXIT_OK if not cert.problems() else EXIT_FAIL

    n, k = args.n, args.k
    if not 1 <= n <= 4 or not 0 <= k < n:
        raise SkelmaxError("invalid-config", f"need 1 <= n <= 4 and 0 <= k < n, got n={n}, k={k}")
    deltas = parse_deltas(args.deltas) if getattr(args, "deltas", None) else []
    if getattr(args, "delta", None):
        deltas = deltas + [parse_delta(args.delta)]
    check_memory(n, deltas, args.memory_cap_mb)

    if args.cmd == "eval":
        d = parse_delta(args.delta)
        f = load_input_field(args.field, n, d)
        summary, paths = do_eval(f, k, args.variant, args.out, args.t)
        _emit(dict(summary, outputs={k_: str(v) for k_, v in paths.items()}))
        return EXIT_OK

    if args.cmd == "witness":
        d = parse_delta(args.delta)
        rep, paths = do_witness(n, k, d, args.strategy, args.seed, args.restarts, args.out)
        _emit({"union_measure": rep.union_measure, "outputs": {k_: str(v) for k_, v in paths.items()}})
        return EXIT_OK

    if args.cmd == "norm-scan":
        scan, paths = do_norm_scan(n, k, args.p, parse_deltas(args.deltas), args.variant,
                                   args.candidates.split(","), args.seed, args.trials, args.strategy,
                                   args.restarts, args.out)
        _emit(dict(scan.to_json(), outputs={k_: str(v) for k_, v in paths.items()}))
        return EXIT_OK

    # verify
    d = parse_delta(args.delta)
    name = args.check
    if name == "duality":
        res = verify_duality(n, k, d, args.p or 2.0, args.trials or 50, args.seed)
    elif name == "intersections":
        ms = tuple(int(x) for x in args.m.split(","))
        res = verify_intersections(n, k, parse_deltas(args.deltas), ms, seed=args.seed)
    elif name == "upper-bound":
        res = verify_upper_bound(n, k, args.p or 1.0, parse_deltas(args.deltas), args.variant,
                                 args.trials or 2, args.seed, args.restarts)
    elif name == "main-lemma":
        res = verify_main_lemma()
    elif name == "domination":
        res = verify_domination(n, k, d, args.trials or 20, args.seed)
    else:
        res = verify_rescaling(n, k, d, args.trials or 5, args.seed)
    path = write_json(Path(args.out) / f"verify_{name}.json", res)
    _emit({"check": name, "status": res["status"], "output": str(path)})
    return EXIT_OK if res["status"] == "PASS" else EXIT_FAIL


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return _dispatch(args)
    except MemoryCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MEMORY
    except (SkelmaxError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
