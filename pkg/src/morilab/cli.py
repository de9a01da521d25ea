"""Command-line front end: design, propagate, reverse, perturb, fit, run, plot.

`run` composes the others into a full scenario and emits CSV + SVG + a
manifest with file digests; `plot` re-renders the SVGs from the CSVs alone,
byte-identically for a given tool version.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import re
import sys
import time
from dataclasses import fields as dataclass_fields

import numpy as np

from . import __version__
from .chain import CorrelationSeries, LanczosChain, PropagationError, propagate
from .design import edo_chain, exponential_chain, gaussian_chain, linear_continuation
from .experiment import (EnsembleSummary, Scenario, ScenarioConfig, TrialRecord,
                         build_families, histogram_to_csv, records_from_csv,
                         records_to_csv, run_scenario, scatter_to_csv)
from .fitting import FitModel, ModelClass, detect_equilibration, fit
from .perturb import apply_draw, draw_noise
from .reverse import (AnalyticCorrelation, QuadratureError,
                      fourier_of_correlation, lanczos_from_spectrum)
from .svgplot import COLORS, Figure, family_color

RNG_NOTE = ("numpy PCG64 via default_rng; per-trial seeds from "
            "SeedSequence(base_seed, spawn_key=(family_index, trial))")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# analytic target grammar: products of exp(a t), exp(a t^2), cos(b t)
# ---------------------------------------------------------------------------

_EXP_INNER = re.compile(
    r"^(?P<coef>[+-]?(?:\d+\.?\d*|\.\d+)?)\*?t(?P<sq>\^2)?(?:/(?P<den>\d+\.?\d*))?$")
_COS_INNER = re.compile(r"^(?P<coef>[+-]?(?:\d+\.?\d*|\.\d+)?)\*?t$")


def _split_factors(expr: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in expr:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "*" and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p for p in parts if p]


def _coef(text: str) -> float:
    if text in ("", "+"):
        return 1.0
    if text == "-":
        return -1.0
    return float(text)


def parse_target(expr: str) -> AnalyticCorrelation:
    """Parse a closed-grammar correlation target like exp(-t^2/8)*cos(2t)."""
    cleaned = expr.replace(" ", "")
    gauss = exp_r = 0.0
    cos_f = None
    for factor in _split_factors(cleaned):
        if factor.startswith("exp(") and factor.endswith(")"):
            m = _EXP_INNER.match(factor[4:-1])
            if not m:
                raise ConfigError(f"cannot parse exponential factor {factor!r}")
            rate = _coef(m.group("coef"))
            if m.group("den"):
                rate /= float(m.group("den"))
            if m.group("sq"):
                gauss += rate
            else:
                exp_r += rate
        elif factor.startswith("cos(") and factor.endswith(")"):
            m = _COS_INNER.match(factor[4:-1])
            if not m:
                raise ConfigError(f"cannot parse cosine factor {factor!r}")
            if cos_f is not None:
                raise ConfigError("at most one cosine factor is supported")
            cos_f = abs(_coef(m.group("coef")))
        else:
            raise ConfigError(
                f"unsupported factor {factor!r}; grammar: exp(a t), exp(a t^2), cos(b t)")
    try:
        return AnalyticCorrelation(gauss_rate=gauss, exp_rate=exp_r,
                                   cos_freq=cos_f or 0.0)
    except ValueError as err:
        raise ConfigError(str(err)) from err


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_CONFIG_KEYS = {f.name for f in dataclass_fields(ScenarioConfig)}
_FLAG_TO_KEY = {"d": "d", "nf": "n_f", "trials": "n_trials", "lam": "strength",
                "dt": "dt", "tmax": "t_max", "seed": "base_seed",
                "nstar": "n_star", "workers": "workers"}


def parse_config(path: str | None, overrides: dict) -> ScenarioConfig:
    """Structured JSON config (or a manifest) merged with flag overrides."""
    data: dict = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as err:
                raise ConfigError(f"malformed config {path}: {err}") from err
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    merged = dict(data)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    if "scenario" not in merged:
        raise ConfigError("missing required key: scenario")
    profile = merged.pop("profile", "desk")
    scenario = merged.pop("scenario")
    try:
        return ScenarioConfig.preset(scenario, profile, **merged)
    except (ValueError, TypeError) as err:
        raise ConfigError(str(err)) from err


def _flag_overrides(args) -> dict:
    out = {}
    for flag, key in _FLAG_TO_KEY.items():
        val = getattr(args, flag, None)
        if val is not None:
            out[key] = val
    return out


# ---------------------------------------------------------------------------
# rendering from flat files (shared by `run` and `plot`)
# ---------------------------------------------------------------------------

def _read_csv_rows(path):
    import csv as _csv
    with open(path, newline="") as fh:
        rows = list(_csv.reader(fh))
    return rows[0], rows[1:]


def render_histogram_svg(hist_csv, summary_json, out_path) -> None:
    _, rows = _read_csv_rows(hist_csv)
    with open(summary_json) as fh:
        summary = json.load(fh)
    fams = list(dict.fromkeys(r[2] for r in rows))
    xmax = max((float(r[1]) for r in rows if int(r[3]) > 0), default=1.0)
    ymax = max((int(r[3]) for r in rows), default=1)
    fig = Figure(title="deviation histogram", xlabel="epsilon",
                 ylabel="count per bin")
    fig.set_limits((0.0, xmax * 1.05), (0.0, ymax * 1.1))
    for i, fam in enumerate(fams):
        sel = [r for r in rows if r[2] == fam]
        fig.bars([float(r[0]) for r in sel], [float(r[1]) for r in sel],
                 [int(r[3]) for r in sel], family_color(fam, i), label=fam)
        mean = summary["families"].get(fam, {}).get("mean_epsilon")
        if mean is not None:
            fig.vline(mean, family_color(fam, i),
                      label=f"mean {fam} = {mean:.4g}")
    fig.save(out_path)


def render_scatter_svg(scatter_csv, out_path) -> None:
    _, rows = _read_csv_rows(scatter_csv)
    fams = list(dict.fromkeys(r[0] for r in rows))
    sig = [float(r[1]) for r in rows]
    eps = [float(r[2]) for r in rows]
    lim = max(sig + eps + [1e-4]) * 1.08
    fig = Figure(title="alteration vs deviation", xlabel="sigma",
                 ylabel="epsilon")
    fig.set_limits((0.0, lim), (0.0, lim))
    fig.polyline([0.0, lim], [0.0, lim], COLORS["ref"], dash="4,4",
                 label="diagonal")
    for i, fam in enumerate(fams):
        pts = [(float(r[1]), float(r[2])) for r in rows if r[0] == fam]
        fig.scatter([p[0] for p in pts], [p[1] for p in pts],
                    family_color(fam, i), label=fam)
    fig.save(out_path)


def render_chains_svg(chain_csvs: dict, out_path, max_points: int = 1200) -> None:
    fig = Figure(title="chain coefficients", xlabel="n", ylabel="b_n")
    xmax = ymax = 1.0
    data = {}
    for fam, path in chain_csvs.items():
        _, rows = _read_csv_rows(path)
        n = np.array([int(r[0]) for r in rows])
        b = np.array([float(r[1]) for r in rows])
        stride = max(1, n.size // max_points)
        data[fam] = (n[::stride], b[::stride])
        xmax = max(xmax, n.max())
        ymax = max(ymax, b.max())
    fig.set_limits((0.0, xmax * 1.02), (0.0, ymax * 1.05))
    for i, (fam, (n, b)) in enumerate(data.items()):
        fig.polyline(n, b, family_color(fam, i), label=fam)
    fig.save(out_path)


def render_curves_svg(curves_csv, family: str, out_path) -> None:
    _, rows = _read_csv_rows(curves_csv)
    rows = [r for r in rows if r[0] == family]
    trials = list(dict.fromkeys(r[1] for r in rows))
    fig = Figure(title=f"exemplary perturbed dynamics ({family})",
                 xlabel="t", ylabel="C(t)")
    tmax = max((float(r[2]) for r in rows), default=1.0)
    cvals = [float(r[3]) for r in rows] + [float(r[4]) for r in rows]
    lo, hi = min(cvals + [0.0]), max(cvals + [1.0])
    fig.set_limits((0.0, tmax), (lo * 1.05, hi * 1.05))
    shades = ("#c02020", "#2040c0", "#208040")
    for i, trial in enumerate(trials):
        sel = [r for r in rows if r[1] == trial]
        t = [float(r[2]) for r in sel]
        fig.polyline(t, [float(r[3]) for r in sel], shades[i % 3],
                     label=f"trial {trial}")
        fig.polyline(t, [float(r[4]) for r in sel], COLORS["fit"], width=1.0,
                     dash="5,3")
    fig.save(out_path)


def render_unperturbed_svg(series_csvs: dict, out_path,
                           summary_json=None) -> None:
    fits = {}
    if summary_json is not None and os.path.exists(summary_json):
        with open(summary_json) as fh:
            fits = json.load(fh).get("unperturbed", {})
    fig = Figure(title="unperturbed dynamics", xlabel="t", ylabel="C(t)")
    data = {}
    tmax, lo = 1.0, 0.0
    for fam, path in series_csvs.items():
        series = CorrelationSeries.from_csv(path)
        data[fam] = series
        tmax = max(tmax, float(series.t[-1]))
        lo = min(lo, float(series.values.min()))
    fig.set_limits((0.0, tmax), (lo * 1.1 - 0.02, 1.05))
    for i, (fam, series) in enumerate(data.items()):
        stride = max(1, len(series) // 1500)
        fig.polyline(series.t[::stride], series.values[::stride],
                     family_color(fam, i), label=fam)
        info = fits.get(fam)
        if info:
            params = (info["A"], info["mu"]) if info["omega"] is None \
                else (info["A"], info["mu"], info["omega"], info["phi"])
            model = FitModel(ModelClass(info["model"]), params)
            t = series.t[::stride]
            fig.polyline(t, model(t), COLORS["fit"], width=1.0, dash="5,3",
                         label=f"{fam} fit")
    fig.save(out_path)


# ---------------------------------------------------------------------------
# run outputs
# ---------------------------------------------------------------------------

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


def _exemplary_trials(records: list[TrialRecord], summary: EnsembleSummary,
                      family: str, count: int = 3) -> list[TrialRecord]:
    """Valid trials closest to the family mean deviation (figure-selection rule)."""
    fam = summary.families.get(family)
    if fam is None:
        return []
    pool = [r for r in records if r.family == family and r.valid]
    pool.sort(key=lambda r: (abs(r.epsilon - fam.mean_epsilon), r.trial))
    return pool[:count]


def _write_curves_csv(config: ScenarioConfig, records, summary, path) -> None:
    """Replay the exemplary trials (deterministic seeds) and dump C + fit."""
    families = {f.name: f for f in build_families(config)}
    with open(path, "w", newline="") as fh:
        fh.write("family,trial,t,C,fit\n")
        for name, fam in families.items():
            for rec in _exemplary_trials(records, summary, name):
                draw = draw_noise(config.d, config.n_f, rec.seed)
                pert = apply_draw(fam.chain, config.strength, draw,
                                  floor=config.floor)
                series = propagate(pert.chain, dt=config.dt, t_max=config.t_max)
                params = (rec.a, rec.mu) if rec.omega is None \
                    else (rec.a, rec.mu, rec.omega, rec.phi)
                model = FitModel(ModelClass(rec.model), params)
                fit_vals = model(series.t)
                stride = max(1, len(series) // 1500)
                for n in range(0, len(series), stride):
                    fh.write(f"{name},{rec.trial},{n * config.dt:.17g},"
                             f"{series.values[n]:.17g},{fit_vals[n]:.17g}\n")


def emit_run_outputs(config: ScenarioConfig, records, summary, out_dir,
                     duration: float) -> dict:
    """Write every CSV/SVG/manifest artifact for a finished scenario run."""
    os.makedirs(out_dir, exist_ok=True)
    path = lambda name: os.path.join(out_dir, name)
    emitted = []

    records_to_csv(records, path("records.csv"))
    emitted.append("records.csv")
    histogram_to_csv(summary, path("histogram.csv"))
    emitted.append("histogram.csv")
    scatter_to_csv(records, path("scatter.csv"))
    emitted.append("scatter.csv")

    families = build_families(config)
    unperturbed = {}
    for fam in families:
        fam.chain.to_csv(path(f"chain_{fam.name}.csv"))
        emitted.append(f"chain_{fam.name}.csv")
        series = propagate(fam.chain, dt=config.dt, t_max=config.t_max)
        series.to_csv(path(f"unperturbed_{fam.name}.csv"))
        emitted.append(f"unperturbed_{fam.name}.csv")
        n_eq0, eq0 = detect_equilibration(series, config.eq_threshold,
                                          config.eq_window)
        f0 = fit(series, fam.model_class, n_eq0)
        unperturbed[fam.name] = {**f0.to_json_dict(), "equilibrated": eq0,
                                 "tail_flagged": series.tail_flagged}

    summary_doc = {**summary.to_json_dict(), "config": config.to_json_dict(),
                   "unperturbed": unperturbed}
    with open(path("summary.json"), "w") as fh:
        json.dump(summary_doc, fh, indent=1, sort_keys=True)
    emitted.append("summary.json")

    _write_curves_csv(config, records, summary, path("curves.csv"))
    emitted.append("curves.csv")

    emitted.extend(render_all(out_dir))

    manifest = {
        "tool": "morilab",
        "version": __version__,
        "numpy": np.__version__,
        "rng": RNG_NOTE,
        "config": config.to_json_dict(),
        "duration_seconds": round(duration, 3),
        "outputs": {name: _sha256(path(name)) for name in sorted(set(emitted))},
    }
    with open(path("manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return manifest


def render_all(out_dir) -> list[str]:
    """(Re)draw every SVG a directory's CSVs support; returns filenames."""
    path = lambda name: os.path.join(out_dir, name)
    made = []
    if os.path.exists(path("histogram.csv")) and os.path.exists(path("summary.json")):
        render_histogram_svg(path("histogram.csv"), path("summary.json"),
                             path("histogram.svg"))
        made.append("histogram.svg")
    if os.path.exists(path("scatter.csv")):
        render_scatter_svg(path("scatter.csv"), path("scatter.svg"))
        made.append("scatter.svg")
    chains = {}
    series = {}
    for name in sorted(os.listdir(out_dir)):
        if name.startswith("chain_") and name.endswith(".csv"):
            chains[name[6:-4]] = path(name)
        if name.startswith("unperturbed_") and name.endswith(".csv"):
            series[name[12:-4]] = path(name)
    if chains:
        render_chains_svg(chains, path("chains.svg"))
        made.append("chains.svg")
    if series:
        render_unperturbed_svg(series, path("unperturbed.svg"),
                               summary_json=path("summary.json"))
        made.append("unperturbed.svg")
    if os.path.exists(path("curves.csv")):
        _, rows = _read_csv_rows(path("curves.csv"))
        for fam in dict.fromkeys(r[0] for r in rows):
            render_curves_svg(path("curves.csv"), fam, path(f"exemplar_{fam}.svg"))
            made.append(f"exemplar_{fam}.svg")
    return made


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_design(args) -> int:
    d = args.d
    if args.family == "gaussian":
        chain = gaussian_chain(args.nstar, d)
    elif args.family == "exponential":
        chain = exponential_chain(args.a, args.nstar, d)
    else:
        target = AnalyticCorrelation(gauss_rate=-0.125, cos_freq=2.0)
        prefix = lanczos_from_spectrum(fourier_of_correlation(target, n_max=args.nmax),
                                       args.nmax)
        cont = linear_continuation(prefix.b, d, label="gdo")
        if args.family == "gdo":
            chain = cont.chain
        else:
            chain = edo_chain(args.b1, args.b2, (cont.slope, cont.intercept), d)
    chain.to_csv(args.out)
    if args.json:
        chain.to_json(args.json)
    print(f"wrote {args.out} ({chain.d - 1} coefficients, family {args.family})")
    return 0


def _cmd_propagate(args) -> int:
    chain = LanczosChain.from_csv(args.chain)
    series = propagate(chain, dt=args.dt, t_max=args.tmax, method=args.method)
    series.to_csv(args.out)
    flag = " [tail-weight flagged]" if series.tail_flagged else ""
    print(f"wrote {args.out} ({len(series)} samples, drift "
          f"{series.norm_drift_max:.2e}){flag}")
    return 0


def _cmd_reverse(args) -> int:
    if args.target:
        density = fourier_of_correlation(parse_target(args.target), n_max=args.nmax)
    else:
        density = fourier_of_correlation(CorrelationSeries.from_csv(args.series),
                                         n_max=args.nmax)
    result = lanczos_from_spectrum(density, args.nmax)
    result.to_csv(args.out)
    result.sidecar(args.out + ".meta.json")
    print(f"wrote {args.out} ({result.achieved}/{result.requested} coefficients; "
          f"{result.stop_reason})")
    if args.continue_to:
        cont = linear_continuation(result.b, args.continue_to, label="continued")
        cont.chain.to_csv(args.chain_out)
        print(f"wrote {args.chain_out} (d={args.continue_to}, tail slope "
              f"{cont.slope:.5g})")
    return 0


def _cmd_perturb(args) -> int:
    chain = LanczosChain.from_csv(args.chain)
    n_f = args.nf if args.nf is not None else chain.d // 3
    draw = draw_noise(chain.d, n_f, args.seed)
    pert = apply_draw(chain, args.lam, draw)
    pert.chain.to_csv(args.out)
    if args.draw_json:
        draw.to_json(args.draw_json)
    print(f"wrote {args.out} (clamped {pert.clamp_count} entries"
          f"{', INVALID draw' if pert.invalid else ''})")
    return 0


def _cmd_fit(args) -> int:
    series = CorrelationSeries.from_csv(args.series)
    n_eq, equilibrated = detect_equilibration(series, args.threshold, args.window)
    result = fit(series, ModelClass(args.model), n_eq)
    result.to_json(args.out)
    print(f"wrote {args.out} (epsilon={result.epsilon:.5g}, n_eq={n_eq}, "
          f"equilibrated={equilibrated})")
    return 0


def _cmd_run(args) -> int:
    config = parse_config(args.config, {"scenario": args.scenario,
                                        "profile": args.profile,
                                        **_flag_overrides(args)})
    t0 = time.time()

    def progress(done, total):
        print(f"\r  trials {done}/{total}", end="", file=sys.stderr, flush=True)

    records, summary = run_scenario(config, progress=progress)
    print(file=sys.stderr)
    manifest = emit_run_outputs(config, records, summary, args.out,
                                time.time() - t0)
    for name, fam in summary.families.items():
        print(f"{name}: mean epsilon = {fam.mean_epsilon:.5g}, "
              f"mean sigma = {fam.mean_sigma:.5g}, valid {fam.n_valid}, "
              f"non-equilibrated {fam.n_nonequilibrated}")
    print(f"wrote {len(manifest['outputs'])} files to {args.out}")
    return 0


def _cmd_plot(args) -> int:
    made = render_all(args.src)
    if not made:
        raise ConfigError(f"no renderable CSV data in {args.src}")
    print(f"re-rendered {', '.join(made)} in {args.src}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="morilab",
        description="Mori-chain relaxation-stability laboratory")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="emit a designed coefficient chain")
    p.add_argument("--family", required=True,
                   choices=["gaussian", "exponential", "gdo", "edo"])
    p.add_argument("--nstar", type=int, default=10)
    p.add_argument("--a", type=float, default=1.2)
    p.add_argument("--b1", type=float, default=2.0)
    p.add_argument("--b2", type=float, default=1.6)
    p.add_argument("--nmax", type=int, default=50)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--json", default=None)
    p.set_defaults(func=_cmd_design)

    p = sub.add_parser("propagate", help="chain -> correlation series")
    p.add_argument("--chain", required=True)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--tmax", type=float, required=True)
    p.add_argument("--method", choices=["chebyshev", "rk4"], default="chebyshev")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_propagate)

    p = sub.add_parser("reverse", help="correlation target -> coefficients")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--target", help="e.g. \"exp(-t^2/8)*cos(2t)\"")
    src.add_argument("--series", help="sampled C(t) CSV")
    p.add_argument("--nmax", type=int, default=50)
    p.add_argument("--out", required=True)
    p.add_argument("--continue-to", type=int, default=None, dest="continue_to")
    p.add_argument("--chain-out", default="chain_continued.csv")
    p.set_defaults(func=_cmd_reverse)

    p = sub.add_parser("perturb", help="apply one seeded draw to a chain")
    p.add_argument("--chain", required=True)
    p.add_argument("--lambda", type=float, required=True, dest="lam")
    p.add_argument("--nf", type=int, default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--draw-json", default=None)
    p.set_defaults(func=_cmd_perturb)

    p = sub.add_parser("fit", help="series -> best within-class fit")
    p.add_argument("--series", required=True)
    p.add_argument("--model", required=True,
                   choices=[m.value for m in ModelClass])
    p.add_argument("--threshold", type=float, default=0.01)
    p.add_argument("--window", type=float, default=5.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("run", help="full scenario ensemble")
    p.add_argument("--scenario", choices=[s.value for s in Scenario])
    p.add_argument("--profile", choices=["desk", "paper"], default=None)
    p.add_argument("--config", default=None, help="JSON config or manifest")
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--nf", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--lambda", type=float, default=None, dest="lam")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--tmax", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--nstar", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default="morilab-run")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("plot", help="re-render SVGs from emitted CSV")
    p.add_argument("--from", required=True, dest="src")
    p.set_defaults(func=_cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (PropagationError, QuadratureError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, FileNotFoundError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
