"""Command line front end.

Subcommands: simulate | bode | frontier | compare.  Every run is driven by
one YAML config (all keys optional, see config.py) plus flag overrides.
Delimited results are written atomically with full double precision;
report figures land next to them unless plotting is switched off.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import analysis, config, plant, sim
from .lti import PoleOnAxisError

VALIDATION_ERRORS = (config.ConfigError, ValueError)
RUNTIME_ERRORS = (sim.DivergenceError, sim.DelayNotMultipleError,
                  analysis.NoBracketError, analysis.NoContactError,
                  PoleOnAxisError)


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return "%.17g" % float(v)


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=os.path.basename(path) + ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(text.encode("utf-8"))
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_csv(path: str, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(c) for c in row])
    _atomic_write(path, buf.getvalue())


def write_json(path: str, obj) -> None:
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _thread_cap(n_items: int) -> int:
    raw = os.environ.get("ADMLAB_THREADS")
    if raw:
        try:
            cap = max(1, int(raw))
        except ValueError:
            cap = 1
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_items))


def parallel_map(fn, items):
    """Order-preserving map over independent jobs, capped by ADMLAB_THREADS."""
    items = list(items)
    cap = _thread_cap(len(items))
    if cap <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=cap) as ex:
        return list(ex.map(fn, items))


def variant_model(name: str, cp, pp):
    """One named study variant built from the configured gain values.

    The variants stack: lead adds Kl to the plain admittance, lead+fb adds
    the velocity feedback, and the acceleration-compensated pair adds the
    payload-inertia correction on top of the lead term.
    """
    quiet = dataclasses.replace(cp, Kl=0.0, Bfb=0.0, Mp_hat=0.0)
    mp_hat = cp.Mp_hat if cp.Mp_hat > 0 else pp.Mp
    if name == "baseline":
        return plant.build_loop(quiet, pp)
    if name == "lead":
        return plant.build_loop(dataclasses.replace(quiet, Kl=cp.Kl), pp)
    if name == "lead+fb":
        return plant.build_loop(
            dataclasses.replace(quiet, Kl=cp.Kl, Bfb=cp.Bfb), pp)
    if name == "ideal-acc":
        return plant.build_loop(
            dataclasses.replace(quiet, Kl=cp.Kl, Mp_hat=mp_hat),
            pp, ideal_acc=True)
    if name == "filtered-acc":
        return plant.build_loop(
            dataclasses.replace(quiet, Kl=cp.Kl, Mp_hat=mp_hat), pp)
    raise config.ConfigError("unknown bode variant %r" % name)


def _announce(path: str) -> None:
    print("wrote %s" % path)


def cmd_simulate(rc: config.RunConfig) -> int:
    tr = sim.simulate(config.build_scenario(rc))

    fields = [f.name for f in dataclasses.fields(sim.SimTrace)]
    cols = [getattr(tr, name) for name in fields]
    trace_path = os.path.join(rc.out_dir, "trace.csv")
    write_csv(trace_path, fields, zip(*cols))
    _announce(trace_path)

    try:
        m = analysis.trace_metrics(tr, threshold=rc.cp.F_bar)
        doc = {k: float(v) for k, v in dataclasses.asdict(m).items()}
        doc["contact"] = True
    except analysis.NoContactError:
        doc = {"contact": False,
               "peak_force": float(np.abs(tr.F_meas).max())}
    metrics_path = os.path.join(rc.out_dir, "metrics.json")
    write_json(metrics_path, doc)
    _announce(metrics_path)

    if rc.plot:
        from . import figures
        _announce(figures.save_trace_figure(
            tr, os.path.join(rc.out_dir, "trace.png"), title=rc.mode))
    return 0


def cmd_bode(rc: config.RunConfig) -> int:
    if not rc.bode_variants:
        raise config.ConfigError("bode.variants is empty")
    grid = analysis.default_grid()

    def run(name):
        model = variant_model(name, rc.cp, rc.pp)
        return name, analysis.bode_sweep(model, rc.bode_which, grid)

    curves = parallel_map(run, rc.bode_variants)
    if rc.fmt == "csv":
        for name, curve in curves:
            path = os.path.join(rc.out_dir, "bode_%s.csv" % name)
            write_csv(path, ("omega", "magnitude"),
                      zip(curve.omegas, curve.magnitudes))
            _announce(path)
    else:
        path = os.path.join(rc.out_dir, "bode.json")
        write_json(path, {"which": rc.bode_which, "curves": {
            name: {"omega": list(curve.omegas),
                   "magnitude": list(curve.magnitudes)}
            for name, curve in curves}})
        _announce(path)

    if rc.plot:
        from . import figures
        _announce(figures.save_bode_figure(
            curves, os.path.join(rc.out_dir, "bode.png"), rc.bode_which))
    return 0


def cmd_frontier(rc: config.RunConfig) -> int:
    values = list(dict.fromkeys(rc.sweep.values))  # dedup, keep order

    def run(value):
        sweep = dataclasses.replace(rc.sweep, values=(value,))
        return analysis.scan_frontier(rc.cp, rc.pp, sweep)

    points = parallel_map(run, values)
    min_ba = [float(p.min_stable_Ba[0]) if p.min_stable_Ba is not None
              else float("nan") for p in points]
    max_kl = [float(p.max_stable_Kl[0]) if p.max_stable_Kl is not None
              else float("nan") for p in points]

    if rc.fmt == "csv":
        path = os.path.join(rc.out_dir, "frontier.csv")
        write_csv(path, ("sweep_value", "min_stable_Ba", "max_stable_Kl"),
                  zip(values, min_ba, max_kl))
    else:
        path = os.path.join(rc.out_dir, "frontier.json")
        write_json(path, {"variable": rc.sweep.variable,
                          "values": values, "min_stable_Ba": min_ba,
                          "max_stable_Kl": max_kl})
    _announce(path)

    if rc.plot:
        from . import figures
        fr = analysis.StabilityFrontier(
            sweep_variable=rc.sweep.variable, values=np.asarray(values),
            min_stable_Ba=np.asarray(min_ba) if rc.sweep.scan_Ba else None,
            max_stable_Kl=np.asarray(max_kl) if rc.sweep.scan_Kl else None,
            rtol=rc.sweep.rtol)
        _announce(figures.save_frontier_figure(
            fr, os.path.join(rc.out_dir, "frontier.png")))
    return 0


def cmd_compare(rc: config.RunConfig) -> int:
    if not rc.compare_variants:
        raise config.ConfigError("compare.variants is empty")
    base = config.build_scenario(rc)
    rows = analysis.compare_variants(base, list(rc.compare_variants),
                                     threshold=rc.cp.F_bar)

    metric_fields = [f.name for f in dataclasses.fields(analysis.ContactMetrics)]
    if rc.fmt == "csv":
        path = os.path.join(rc.out_dir, "compare.csv")
        write_csv(path, ["label"] + metric_fields,
                  ([label] + [getattr(m, k) for k in metric_fields]
                   for label, m in rows))
    else:
        path = os.path.join(rc.out_dir, "compare.json")
        write_json(path, [dict({k: float(getattr(m, k))
                                for k in metric_fields}, label=label)
                          for label, m in rows])
    _announce(path)

    if rc.plot:
        from . import figures
        _announce(figures.save_compare_figure(
            [label for label, _ in rows], [m.peak_force for _, m in rows],
            os.path.join(rc.out_dir, "compare.png")))
    return 0


COMMANDS = {"simulate": cmd_simulate, "bode": cmd_bode,
            "frontier": cmd_frontier, "compare": cmd_compare}


def _sect(doc: dict, name: str) -> dict:
    if doc.get(name) is None:
        doc[name] = {}
    return doc[name]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="admlab",
        description="Admittance-control contact studies: simulate, sweep, "
                    "and report.")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "run one scenario, write trace CSV + metrics JSON",
        "bode": "frequency response curves for the study variants",
        "frontier": "bisect stability boundaries over a parameter sweep",
        "compare": "same scenario under parameter variations, side by side",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", metavar="PATH",
                        help="YAML config file (defaults used when omitted)")
        sp.add_argument("--set", metavar="KEY=VALUE", action="append",
                        default=[], dest="overrides",
                        help="override one config key, e.g. plant.Ks=2e7; "
                             "repeatable")
        sp.add_argument("--out", metavar="DIR",
                        help="output directory (default from config)")
        sp.add_argument("--seed", type=int, help="scenario RNG seed")
        sp.add_argument("--format", choices=("csv", "json"),
                        help="analysis table format")
        sp.add_argument("--dump-config", action="store_true",
                        help="print the effective config and exit")
        sp.add_argument("--no-plot", action="store_true",
                        help="skip figure rendering")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = config.load_document(args.config)
        for spec in args.overrides:
            config.set_override(doc, spec)
        if args.seed is not None:
            _sect(doc, "scenario")["seed"] = args.seed
        if args.out is not None:
            _sect(doc, "output")["directory"] = args.out
        if args.format is not None:
            _sect(doc, "output")["format"] = args.format
        if args.no_plot:
            _sect(doc, "output")["plot"] = False
        rc = config.build_run_config(doc)

        if args.dump_config:
            sys.stdout.write(config.dump_config(rc))
            return 0
        os.makedirs(rc.out_dir, exist_ok=True)
        return COMMANDS[args.command](rc)
    except VALIDATION_ERRORS as e:
        print("%s: %s" % (type(e).__name__, e), file=sys.stderr)
        return 2
    except RUNTIME_ERRORS as e:
        print("%s: %s" % (type(e).__name__, e), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
