"""Command line front end.

    qselect <subcommand> --config path.json [--out dir] [--jobs k] [--deterministic]
    qselect regression [--golden dir] [--tolerances file]

Exit codes: 0 success, 1 regression mismatch, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import MissingGolden, NumericalError, QSelectError, ValidationError

log = logging.getLogger("qselect")

FLOAT_FMT = "%.12e"

_num_list = {"type": "array", "items": {"type": "number"}, "minItems": 1}

SCHEMAS = {
    "melin-quad": {
        "type": "object",
        "properties": {
            "n": {"type": "integer", "minimum": 1},
            "matrix": {"type": "array", "items": {"type": "number"}},
            "oracle_cutoff": {"type": "integer", "minimum": 2},
            "seed": {"type": "integer"},
        },
        "required": ["n", "matrix"],
        "additionalProperties": False,
        "defaults": {"seed": 0},
    },
    "landscape-scan": {
        "type": "object",
        "properties": {
            "family": {"enum": ["leaf", "four_loop_A", "four_loop_B"]},
            "points": {"type": "integer", "minimum": 2, "maximum": 100000},
            "seed": {"type": "integer"},
        },
        "required": ["family"],
        "additionalProperties": False,
        "defaults": {"points": 64, "seed": 0},
    },
    "spectrum": {
        "type": "object",
        "properties": {
            "experiment": {"enum": ["triangle", "sphere_z2", "sphere_miniwell"]},
            "N": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
            "epsilon": {"type": "number", "exclusiveMinimum": -1, "exclusiveMaximum": 1},
            "seed": {"type": "integer"},
        },
        "required": ["experiment", "N"],
        "additionalProperties": False,
        "defaults": {"seed": 0},
    },
    "modelops-weyl": {
        "type": "object",
        "properties": {
            "h": {"type": "number", "exclusiveMinimum": 0},
            "R": {"type": "number", "exclusiveMinimum": 0},
            "level": {"type": "number", "exclusiveMinimum": 0},
            "lambdas": _num_list,
            "reference": {"type": "boolean"},
            "seed": {"type": "integer"},
        },
        "required": ["lambdas"],
        "additionalProperties": False,
        "defaults": {"h": 0.05, "R": 260.0, "level": 300.0, "reference": True, "seed": 0},
    },
    "modelops-scaling": {
        "type": "object",
        "properties": {
            "hbar": _num_list,
            "R": {"type": "number", "exclusiveMinimum": 0},
            "M": {"type": "integer", "minimum": 3},
            "seed": {"type": "integer"},
        },
        "required": ["hbar"],
        "additionalProperties": False,
        "defaults": {"R": 7.5, "M": 400, "seed": 0},
    },
    "cover-demo": {
        "type": "object",
        "properties": {
            "m": {"enum": [1, 2]},
            "a": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.25},
            "t": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "density": {"enum": ["uniform", "spike", "strip", "random"]},
            "n": {"type": "integer", "minimum": 4},
            "csv": {"type": "string"},
            "seed": {"type": "integer"},
        },
        "required": ["m", "a", "t"],
        "additionalProperties": False,
        "defaults": {"density": "uniform", "n": 64, "seed": 0},
    },
}


def normalize_config(command: str, cfg: dict) -> dict:
    """Schema-check ``cfg`` and fill defaults; a fixed point under repeated application."""
    if command not in SCHEMAS:
        raise ValidationError(f"unknown subcommand {command!r}")
    schema = {k: v for k, v in SCHEMAS[command].items() if k != "defaults"}
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as exc:
        raise ValidationError(f"config: {exc.message}") from exc
    out = copy.deepcopy(SCHEMAS[command]["defaults"])
    out.update(copy.deepcopy(cfg))
    return out


def dump_config(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(command: str, cfg: dict) -> str:
    return hashlib.sha256(f"{command}\n{dump_config(cfg)}".encode()).hexdigest()


# --- output helpers ------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % float(v)
    return str(v)


def write_csv(path: Path, rows: list[dict], columns: list[str]):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    path.write_text(buf.getvalue())


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else None
    return x


def write_json(path: Path, obj):
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def svg_plot(path: Path, xs, ys_list, labels, title: str, logx=False, logy=False, markers=False):
    """Small self-contained SVG line plot."""
    W, H, pad = 640, 420, 60
    xs = np.asarray(xs, dtype=float)
    tx = np.log10(xs) if logx else xs
    series = []
    for ys in ys_list:
        ys = np.asarray(ys, dtype=float)
        series.append(np.log10(np.abs(ys)) if logy else ys)
    allx, ally = tx[np.isfinite(tx)], np.concatenate([s[np.isfinite(s)] for s in series])
    x0, x1 = allx.min(), allx.max()
    y0, y1 = ally.min(), ally.max()
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(v):
        return pad + (v - x0) / (x1 - x0) * (W - 2 * pad)

    def py(v):
        return H - pad - (v - y0) / (y1 - y0) * (H - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
             f'<rect width="{W}" height="{H}" fill="white"/>',
             f'<text x="{W / 2}" y="24" text-anchor="middle" font-size="15">{title}</text>',
             f'<rect x="{pad}" y="{pad}" width="{W - 2 * pad}" height="{H - 2 * pad}" fill="none" stroke="black"/>',
             f'<text x="{pad}" y="{H - pad + 18}" font-size="11">{x0:.4g}</text>',
             f'<text x="{W - pad}" y="{H - pad + 18}" font-size="11" text-anchor="end">{x1:.4g}</text>',
             f'<text x="{pad - 6}" y="{H - pad}" font-size="11" text-anchor="end">{y0:.4g}</text>',
             f'<text x="{pad - 6}" y="{pad + 10}" font-size="11" text-anchor="end">{y1:.4g}</text>']
    for k, (s, lab) in enumerate(zip(series, labels)):
        ok = np.isfinite(tx) & np.isfinite(s)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(tx[ok], s[ok]))
        c = colors[k % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        if markers:
            parts += [f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="2.5" fill="{c}"/>' for a, b in zip(tx[ok], s[ok])]
        parts.append(f'<text x="{W - pad - 4}" y="{pad + 16 + 14 * k}" font-size="12" text-anchor="end" fill="{c}">{lab}</text>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


# --- subcommands ------------------------------------------------------------------------

def run_melin_quad(cfg, out: Path, jobs: int):
    from .fock import fock_melin_oracle
    from .symplectic import QuadraticForm, melin_value, symplectic_eigenvalues

    n = cfg["n"]
    if len(cfg["matrix"]) != 4 * n * n:
        raise ValidationError(f"matrix needs {4 * n * n} entries for n = {n}")
    Q = QuadraticForm.from_dict({"n": n, "matrix": cfg["matrix"]})
    mv = melin_value(Q)
    lam, zero = symplectic_eigenvalues(Q)
    res = {"mu": mv.value, "fast_sum": mv.fast_sum, "trace_term": mv.trace_term,
           "symplectic_eigenvalues": lam, "zero_modes": zero}
    if "oracle_cutoff" in cfg:
        res["oracle"] = fock_melin_oracle(Q, cfg["oracle_cutoff"])
    write_json(out / "result.json", res)
    return ["result.json"], {"mu": mv.value}


def run_landscape_scan(cfg, out: Path, jobs: int):
    from .landscape import family, family_scan

    fam = family(cfg["family"])
    thetas = fam.grid(cfg["points"])
    chunks = np.array_split(thetas, max(1, min(jobs, len(thetas))))
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as ex:
        rows = [r for part in ex.map(lambda th: family_scan(fam, th), chunks) for r in part]
    write_csv(out / "curve.csv", rows, ["theta", "energy", "residual", "mu", "lambda_sum"])
    mu = np.array([r["mu"] for r in rows])
    k = int(np.argmin(mu))
    summary = {"family": cfg["family"], "points": len(rows), "mu_min": mu[k], "theta_min": rows[k]["theta"],
               "lambda_sum_at_min": rows[k]["lambda_sum"], "mu_spread": float(mu.max() - mu.min())}
    write_json(out / "summary.json", summary)
    svg_plot(out / "curve.svg", thetas, [mu], ["mu"], f"mu along {cfg['family']}")
    return ["curve.csv", "summary.json", "curve.svg"], summary


def run_spectrum(cfg, out: Path, jobs: int):
    from .spin import scaling_study

    spec = {"experiment": cfg["experiment"], "N": cfg["N"]}
    if "epsilon" in cfg:
        spec["epsilon"] = cfg["epsilon"]
    res = scaling_study(spec)
    write_csv(out / "scaling.csv", res["rows"], ["N", "lambda_min", "gap", "width"])
    write_json(out / "fits.json", {"experiment": res["experiment"], "fits": res["fits"]})
    Ns = [r["N"] for r in res["rows"]]
    svg_plot(out / "scaling.svg", Ns, [[abs(r["lambda_min"]) for r in res["rows"]], [r["gap"] for r in res["rows"]]],
             ["|lambda_min|", "gap"], f"{cfg['experiment']} spectrum", logx=True, logy=True, markers=True)
    summary = {"lambda_min_last": res["rows"][-1]["lambda_min"]}
    summary.update({f"exponent_{k}": v["exponent"] for k, v in res["fits"].items()})
    return ["scaling.csv", "fits.json", "scaling.svg"], summary


def run_modelops_weyl(cfg, out: Path, jobs: int):
    from .modelops import miniwell_reference, weyl_count, weyl_crossing_operator

    lams = np.asarray(cfg["lambdas"], dtype=float)
    if lams.min() <= 1:
        raise ValidationError("Lambda values must exceed 1")
    op = weyl_crossing_operator(cfg["h"], cfg["R"], cfg["level"])
    curve = weyl_count(op, lams)
    write_csv(out / "counts.csv", curve.to_rows(), ["Lambda", "N"])
    fit = {"crossing": curve.summary(), "h": op.h, "unknowns": op.matrix.shape[0]}
    files = ["counts.csv", "fit.json", "counts.svg"]
    if cfg["reference"]:
        ref = miniwell_reference(lams)
        write_csv(out / "reference_counts.csv", ref.to_rows(), ["Lambda", "N"])
        fit["reference"] = ref.summary()
        files.insert(1, "reference_counts.csv")
    write_json(out / "fit.json", fit)
    svg_plot(out / "counts.svg", lams, [curve.counts / lams**1.5], ["N / Lambda^1.5"],
             "log-corrected Weyl count", logx=True, markers=True)
    return files, {"log_slope": curve.log_fit["slope"], "log_r2": curve.log_fit["r2"], "f_test_p": curve.f_test_p}


def run_modelops_scaling(cfg, out: Path, jobs: int):
    from .modelops import hbar_scaling, spread

    rows = hbar_scaling(cfg["hbar"], R=cfg["R"], M=cfg["M"])
    write_csv(out / "scaling.csv", rows, ["hbar", "lambda0", "lambda1", "ratio", "gap_ratio", "h_error"])
    summary = {"ratio_spread": spread([r["ratio"] for r in rows]),
               "gap_ratio_spread": spread([r["gap_ratio"] for r in rows])}
    write_json(out / "summary.json", {"rows": rows, **summary})
    return ["scaling.csv", "summary.json"], summary


def run_cover_demo(cfg, out: Path, jobs: int):
    from . import covering as cv

    m, n = cfg["m"], cfg["n"]
    rng = np.random.default_rng(cfg["seed"])
    if "csv" in cfg:
        f = cv.DensityGrid.from_csv(cfg["csv"])
        if f.m != m:
            raise ValidationError(f"density file is {f.m}-dimensional, config says m = {m}")
    elif cfg["density"] == "uniform":
        f = cv.uniform_density(m, n)
    elif cfg["density"] == "spike":
        f = cv.spike_density(m, n)
    elif cfg["density"] == "strip":
        if m != 2:
            raise ValidationError("the strip density is two-dimensional")
        f = cv.strip_density(n)
    else:
        f = cv.random_density(m, rng, n)
    cover = cv.cut_cover(f, cfg["a"], cfg["t"])
    rep = cv.verify_cover(cover, f, cfg["a"], cfg["t"])
    (out / "cover.json").write_text(cover.to_json() + "\n")
    report = dict(rep.__dict__)
    report["ok"] = rep.ok
    report["boxes"] = len(cover)
    write_json(out / "report.json", report)
    return ["cover.json", "report.json"], {"ok": rep.ok, "overlap_ratio": rep.overlap_ratio}


RUNNERS = {
    "melin-quad": run_melin_quad,
    "landscape-scan": run_landscape_scan,
    "spectrum": run_spectrum,
    "modelops-weyl": run_modelops_weyl,
    "modelops-scaling": run_modelops_scaling,
    "cover-demo": run_cover_demo,
}


def run(command: str, cfg: dict, out: Path, jobs: int = 1, deterministic: bool = False) -> dict:
    """Validate, execute and write the manifest; returns the manifest."""
    cfg = normalize_config(command, cfg)
    np.random.seed(cfg["seed"] % 2**32)
    t0 = time.perf_counter()
    existed = out.exists()
    out.mkdir(parents=True, exist_ok=True)
    try:
        files, summary = RUNNERS[command](cfg, out, jobs)
    except Exception:
        if not existed:
            shutil.rmtree(out, ignore_errors=True)
        raise
    manifest = {
        "command": command,
        "config": cfg,
        "config_hash": config_hash(command, cfg),
        "tool_version": __version__,
        "wall_time": None if deterministic else time.perf_counter() - t0,
        "outputs": files,
        "summary": summary,
    }
    write_json(out / "manifest.json", manifest)
    return manifest


# --- regression ------------------------------------------------------------------------

DEFAULT_RTOL = 1e-8
ATOL = 1e-14


def golden_root() -> Path:
    return Path(str(resources.files("qselect") / "goldens"))


def _parse_cell(s: str):
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}.{k}" if prefix else k)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, obj


def _load_fields(path: Path) -> dict:
    if path.suffix == ".csv":
        rows = list(csv.reader(path.read_text().splitlines()))
        head = rows[0]
        return {f"{c}[{i}]": _parse_cell(v) for i, r in enumerate(rows[1:]) for c, v in zip(head, r)}
    return dict(_flatten(json.loads(path.read_text())))


def compare_fields(golden: dict, current: dict, tolerances: dict, name: str) -> list[str]:
    """Per-field differences; integers and strings exact, floats relative ``DEFAULT_RTOL`` unless overridden."""
    diffs = []
    for key, g in golden.items():
        field_name = f"{name}:{key}"
        if key not in current:
            diffs.append(f"{field_name}: missing")
            continue
        c = current[key]
        col = key.split("[")[0]
        rtol = tolerances.get(f"{name}:{col}", tolerances.get(name, DEFAULT_RTOL))
        if isinstance(g, bool) or isinstance(g, str) or g is None:
            ok = g == c
        elif isinstance(g, int) and isinstance(c, int):
            ok = g == c
        else:
            try:
                gf, cf = float(g), float(c)
                ok = (np.isnan(gf) and np.isnan(cf)) or gf == cf or abs(cf - gf) <= rtol * abs(gf) + ATOL
            except (TypeError, ValueError):
                ok = False
        if not ok:
            diffs.append(f"{field_name}: golden {g!r} current {c!r} (rtol {rtol:g})")
    return diffs


def regression(golden_dir: Path | None = None, tolerances: dict | None = None) -> tuple[bool, list[str]]:
    """Rerun every golden case and compare its artifacts field by field."""
    golden_dir = Path(golden_dir) if golden_dir else golden_root()
    if not golden_dir.is_dir():
        raise MissingGolden(f"no golden directory at {golden_dir}")
    cases = sorted(p for p in golden_dir.iterdir() if (p / "case.json").is_file())
    if not cases:
        raise MissingGolden(f"no golden cases under {golden_dir}")
    report, ok = [], True
    for case in cases:
        spec = json.loads((case / "case.json").read_text())
        tol = dict(spec.get("tolerances", {}))
        tol.update((tolerances or {}).get(case.name, {}))
        with tempfile.TemporaryDirectory() as tmp:
            run(spec["command"], spec["config"], Path(tmp), deterministic=True)
            diffs = []
            for name in spec["compare"]:
                gpath = case / name
                if not gpath.is_file():
                    raise MissingGolden(f"golden file {gpath} is missing")
                diffs += compare_fields(_load_fields(gpath), _load_fields(Path(tmp) / name), tol, name)
        report.append(f"{'PASS' if not diffs else 'FAIL'} {case.name}")
        report += [f"    {d}" for d in diffs]
        ok &= not diffs
    return ok, report


def write_goldens(golden_dir: Path):
    """Regenerate golden artifacts for every case.json below ``golden_dir``."""
    for case in sorted(p for p in Path(golden_dir).iterdir() if (p / "case.json").is_file()):
        spec = json.loads((case / "case.json").read_text())
        with tempfile.TemporaryDirectory() as tmp:
            run(spec["command"], spec["config"], Path(tmp), deterministic=True)
            for name in spec["compare"]:
                (case / name).write_bytes((Path(tmp) / name).read_bytes())


# --- entry point -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qselect", description="Melin values, spin Toeplitz spectra and model operators.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, type=Path)
        s.add_argument("--out", type=Path, default=Path("out"))
        s.add_argument("--jobs", type=int, default=1)
        s.add_argument("--deterministic", action="store_true")
    r = sub.add_parser("regression")
    r.add_argument("--golden", type=Path, default=None)
    r.add_argument("--tolerances", type=Path, default=None,
                   help="JSON mapping case name to {file:column: rtol}")
    r.add_argument("--update", action="store_true", help="rewrite the golden artifacts")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("TOOL_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "regression":
            if args.update:
                write_goldens(args.golden or golden_root())
                return 0
            tol = json.loads(args.tolerances.read_text()) if args.tolerances else None
            ok, report = regression(args.golden, tol)
            print("\n".join(report))
            return 0 if ok else 1
        if args.jobs < 1:
            raise ValidationError("--jobs must be at least 1")
        try:
            cfg = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config: {exc}") from exc
        manifest = run(args.command, cfg, args.out, args.jobs, args.deterministic)
        print(json.dumps(_jsonable(manifest["summary"]), sort_keys=True))
        return 0
    except (ValidationError, MissingGolden) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except QSelectError as exc:  # pragma: no cover
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
