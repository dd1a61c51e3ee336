"""Command-line front end.

Exit codes: 0 success, 2 usage or configuration error, 3 an iteration cap
was exceeded.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import math
import sys
import warnings
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .analytic import CapExceededError, desync_order_conjecture, estimate_cycles, pco_lower_bound
from .applications import ChurnScenario, bandwidth_per_node, bandwidth_per_node_mc, solve_period
from .config import ConfigError, read_config
from .core import ProtocolParams
from .simulator import SimConfig, normality_diagnostic, run_grid
from .stats import fit_scale, pearson

EXIT_OK, EXIT_USAGE, EXIT_CAP = 0, 2, 3

CSV_HEADER = ("protocol,W,alpha,b_thres,sigma_delta_s,T_s,trials,mean_cycles,std_cycles,"
              "model_k,noise_limited,conjecture_k,bound_k,within_one_std").split(",")
PER_TRIAL_HEADER = ["protocol", "W", "alpha", "b_thres", "seed", "converged", "network_cycles", "node_cycles"]
TRAJECTORY_HEADER = ["protocol", "W", "alpha", "b_thres", "index", "sigma"]

_GRID_DEFAULTS = {
    "protocol": "desync",
    "w": "4,8,16",
    "alpha": "0.05:0.95:0.1",
    "b_thres": "0.001,0.020",
    "trials": "50",
}
_APP_DEFAULTS = {"protocol": "desync", "w": "10", "alpha": "0.25", "b_thres": "0.001"}
_SUBCOMMAND_DEFAULTS = {
    "simulate": _GRID_DEFAULTS,
    "estimate": _GRID_DEFAULTS,
    "compare": dict(_GRID_DEFAULTS, protocol="desync,pco"),
    "bandwidth": _APP_DEFAULTS,
    "period": _APP_DEFAULTS,
    "diagnose-normality": {"protocol": "desync", "w": "8", "alpha": "0.5", "b_thres": "0.001",
                           "trials": "10000"},
}
_COMMON_DEFAULTS = {
    "c_conf": "0.9999",
    "sigma_delta_ms": "0.34",
    "period_s": "1.0",
    "misfire": "0.004",
    "seed": "0",
    "pco_index_mode": "cycle",
    "max_cycles": "5000",
    "bandwidth_bps": "86000",
    "t_swap": "100",
    "t_sstate": "10",
    "update_index": "5",
    "node": "0",
}
_SWITCHES = ("per_trial", "trajectory", "no_renorm")


class UsageError(ValueError):
    pass


# --------------------------------------------------------------------------
# value parsing

def fmt(x) -> str:
    """Locale-independent text for a CSV field; ``None`` is an empty field."""
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".10g")


def parse_list(text: str, conv=float) -> list:
    try:
        return [conv(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"cannot parse list {text!r}") from None


def parse_range(text: str) -> List[float]:
    """``a`` or ``a,b,...`` or inclusive ``start:stop:step``."""
    text = str(text).strip()
    if ":" not in text:
        return parse_list(text)
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"range must look like start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise UsageError(f"cannot parse range {text!r}") from None
    if step <= 0 or stop < start:
        raise UsageError(f"empty range {text!r}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(n)]


def _parse_bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off", ""):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def _int(text, name) -> int:
    try:
        return int(str(text))
    except ValueError:
        raise UsageError(f"--{name.replace('_', '-')} expects an integer, got {text!r}") from None


def _float(text, name) -> float:
    try:
        return float(str(text))
    except ValueError:
        raise UsageError(f"--{name.replace('_', '-')} expects a number, got {text!r}") from None


# --------------------------------------------------------------------------
# argument handling

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("experiment")
    g.add_argument("--config", help="key=value config file with [section] headers")
    g.add_argument("--protocol", help="desync or pco (comma list allowed where a grid is run)")
    g.add_argument("--w", help="node count(s), comma separated")
    g.add_argument("--alpha", help="coupling constant: value, comma list or start:stop:step")
    g.add_argument("--b-thres", dest="b_thres", help="convergence threshold(s), comma separated")
    g.add_argument("--c-conf", dest="c_conf", help="confidence coefficient (default 0.9999)")
    g.add_argument("--sigma-delta-ms", dest="sigma_delta_ms", help="measurement noise std in ms (default 0.34)")
    g.add_argument("--period-s", dest="period_s", help="firing period in seconds (default 1.0)")
    g.add_argument("--misfire", help="misfire probability (default 0.004)")
    g.add_argument("--trials", help="trials per cell")
    g.add_argument("--seed", help="base seed; trial i uses seed + i")
    g.add_argument("--max-cycles", dest="max_cycles", help="per-trial cycle cap (default 5000)")
    g.add_argument("--pco-index-mode", dest="pco_index_mode", choices=("cycle", "cumulative"))
    g.add_argument("--out", help="write output here instead of stdout")
    g.add_argument("--per-trial", dest="per_trial", action="store_true", default=None)
    g.add_argument("--trajectory", action="store_true", default=None)

    p = argparse.ArgumentParser(prog="desynclab", description="DESYNC / PCO desynchronisation convergence lab")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run the simulation grid")
    sub.add_parser("estimate", parents=[common], help="model convergence cycles over a grid")
    sub.add_parser("compare", parents=[common], help="simulation vs model, with correlation summary")

    apps = sub.add_parser("apps", help="bandwidth under churn and period selection")
    apps_sub = apps.add_subparsers(dest="app", required=True)
    bw = apps_sub.add_parser("bandwidth", parents=[common])
    bw.add_argument("--bandwidth-bps", dest="bandwidth_bps", help="shared bandwidth in bps (default 86000)")
    bw.add_argument("--t-swap", dest="t_swap", help="mean seconds between membership changes (default 100)")
    bw.add_argument("--swap-range", dest="swap_range",
                    help="low:high; average over T_swap drawn uniformly from this range")
    per = apps_sub.add_parser("period", parents=[common])
    per.add_argument("--t-sstate", dest="t_sstate", help="desired time to steady state in seconds (default 10)")
    per.add_argument("--no-renorm", dest="no_renorm", action="store_true", default=None,
                     help="keep the noise normalised at T = 1 s")

    dn = sub.add_parser("diagnose-normality", parents=[common],
                        help="moments and KS distances of a node's phase after n updates")
    dn.add_argument("--update-index", dest="update_index", help="update count (0 = initial phase)")
    dn.add_argument("--node", help="traced node (default 0)")
    return p


def resolve(ns: argparse.Namespace, section: str) -> Dict[str, object]:
    """Flags over config-file values over defaults."""
    defaults = dict(_COMMON_DEFAULTS)
    defaults.update(_SUBCOMMAND_DEFAULTS[section])
    known = set(defaults) | set(_SWITCHES) | {"out", "swap_range"}
    cfg = read_config(ns.config, section, known) if getattr(ns, "config", None) else {}
    out: Dict[str, object] = {}
    for key in known:
        flag = getattr(ns, key, None)
        if flag is not None:
            out[key] = flag
        elif key in cfg:
            out[key] = _parse_bool(cfg[key]) if key in _SWITCHES else cfg[key]
        elif key in _SWITCHES:
            out[key] = False
        else:
            out[key] = defaults.get(key)
    return out


def _protocols(opts) -> List[str]:
    protos = [p.strip().lower() for p in str(opts["protocol"]).split(",") if p.strip()]
    bad = [p for p in protos if p not in ("desync", "pco")]
    if bad or not protos:
        raise UsageError(f"--protocol must be desync or pco, got {opts['protocol']!r}")
    return protos


def _single_protocol(opts) -> str:
    protos = _protocols(opts)
    if len(protos) != 1:
        raise UsageError("this command takes a single --protocol")
    return protos[0]


def _base_params(opts, W: int, alpha: float, b: float) -> ProtocolParams:
    return ProtocolParams(
        W=W,
        alpha=alpha,
        b_thres=b,
        c_conf=_float(opts["c_conf"], "c_conf"),
        T=_float(opts["period_s"], "period_s"),
        sigma_delta_seconds=_float(opts["sigma_delta_ms"], "sigma_delta_ms") * 1e-3,
        misfire_prob=_float(opts["misfire"], "misfire"),
    )


def _grid(opts) -> list:
    """Cells in sorted key order: (protocol, W, alpha, b_thres, params)."""
    Ws = parse_list(opts["w"], int)
    alphas = parse_range(opts["alpha"])
    bs = parse_list(opts["b_thres"])
    cells = []
    for proto in sorted(_protocols(opts)):
        for W in sorted(Ws):
            for b in sorted(bs):
                for a in sorted(alphas):
                    cells.append((proto, W, a, b, _base_params(opts, W, a, b)))
    if not cells:
        raise UsageError("empty grid")
    return cells


def _pco_mode(opts) -> str:
    mode = str(opts["pco_index_mode"])
    if mode not in ("cycle", "cumulative"):
        raise UsageError(f"--pco-index-mode must be cycle or cumulative, got {mode!r}")
    return mode


# --------------------------------------------------------------------------
# rows

def _empty_row(proto: str, params: ProtocolParams) -> Dict[str, object]:
    row = dict.fromkeys(CSV_HEADER)
    row.update(protocol=proto, W=params.W, alpha=params.alpha, b_thres=params.b_thres,
               sigma_delta_s=params.sigma_delta_seconds, T_s=params.T)
    return row


def _model_fields(row, proto, params, mode):
    est = estimate_cycles(params, proto, mode)
    row["model_k"] = est.cycles
    row["noise_limited"] = est.noise_limited
    if proto == "pco":
        lb = pco_lower_bound(params)
        row["bound_k"] = lb.value
    return est


def _write_block(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(r[h]) for h in header])


def _run_sim(opts, cells):
    trials = _int(opts["trials"], "trials")
    if trials < 2:
        raise UsageError("--trials must be >= 2")
    seed = _int(opts["seed"], "seed")
    max_cycles = _int(opts["max_cycles"], "max_cycles")
    configs = [SimConfig(p, proto, max_cycles=max_cycles) for proto, _, _, _, p in cells]
    return run_grid(configs, trials, seed), trials


def _per_trial_rows(cells, summaries):
    rows = []
    for (proto, W, a, b, _), s in zip(cells, summaries):
        for rec in s.trials:
            rows.append(dict(protocol=proto, W=W, alpha=a, b_thres=b, seed=rec.seed, converged=rec.converged,
                             network_cycles=rec.network_cycles,
                             node_cycles=None if rec.per_node_cycles is None
                             else " ".join(str(c) for c in rec.per_node_cycles)))
    return rows


def cmd_simulate(opts, fh) -> int:
    cells = _grid(opts)
    summaries, trials = _run_sim(opts, cells)
    rows = []
    for (proto, _, _, _, params), s in zip(cells, summaries):
        row = _empty_row(proto, params)
        row.update(trials=trials, mean_cycles=s.mean_cycles, std_cycles=s.std_cycles)
        rows.append(row)
    _write_block(fh, CSV_HEADER, rows)
    if opts["per_trial"]:
        fh.write("\n")
        _write_block(fh, PER_TRIAL_HEADER, _per_trial_rows(cells, summaries))
    _warn_non_converged(cells, summaries)
    return EXIT_OK


def _warn_non_converged(cells, summaries):
    for (proto, W, a, b, _), s in zip(cells, summaries):
        if s.non_converged:
            print(f"warning: {s.non_converged} trial(s) hit the cycle cap for {proto} W={W} alpha={fmt(a)} "
                  f"b_thres={fmt(b)}", file=sys.stderr)


def cmd_estimate(opts, fh) -> int:
    cells = _grid(opts)
    mode = _pco_mode(opts)
    rows, traj = [], []
    for proto, W, a, b, params in cells:
        row = _empty_row(proto, params)
        est = _model_fields(row, proto, params, mode)
        if proto == "desync":
            row["conjecture_k"] = desync_order_conjecture(params)
        rows.append(row)
        for i, s in enumerate(est.trajectory.values, start=1):
            traj.append(dict(protocol=proto, W=W, alpha=a, b_thres=b, index=i, sigma=s))
    _write_block(fh, CSV_HEADER, rows)
    if opts["trajectory"]:
        fh.write("\n")
        _write_block(fh, TRAJECTORY_HEADER, traj)
    return EXIT_OK


def cmd_compare(opts, fh) -> int:
    cells = _grid(opts)
    if len(parse_range(opts["alpha"])) < 3:
        raise UsageError("compare needs at least 3 alpha values for a correlation")
    mode = _pco_mode(opts)
    summaries, trials = _run_sim(opts, cells)

    rows = []
    for (proto, _, _, _, params), s in zip(cells, summaries):
        row = _empty_row(proto, params)
        row.update(trials=trials, mean_cycles=s.mean_cycles, std_cycles=s.std_cycles)
        _model_fields(row, proto, params, mode)
        if not math.isnan(s.mean_cycles):
            row["within_one_std"] = abs(row["model_k"] - s.mean_cycles) <= s.std_cycles
        rows.append(row)

    # the order conjecture has no known constant: scale each curve to the simulation means
    for curve in _curves(rows):
        if curve[0]["protocol"] != "desync":
            continue
        ok = [r for r in curve if not math.isnan(r["mean_cycles"])]
        if not ok:
            continue
        raw = [desync_order_conjecture(_params_of(r, opts)) for r in ok]
        c = fit_scale(raw, [r["mean_cycles"] for r in ok])
        for r, v in zip(ok, raw):
            r["conjecture_k"] = c * v

    _write_block(fh, CSV_HEADER, rows)
    if opts["per_trial"]:
        fh.write("\n")
        _write_block(fh, PER_TRIAL_HEADER, _per_trial_rows(cells, summaries))
    for line in summary_lines(rows):
        fh.write(f"# {line}\n")
    _warn_non_converged(cells, summaries)
    return EXIT_OK


def _params_of(row, opts) -> ProtocolParams:
    return _base_params(opts, row["W"], row["alpha"], row["b_thres"])


def _curves(rows) -> list:
    """Rows grouped by (protocol, W, b_thres), each ordered by alpha."""
    groups: Dict[tuple, list] = {}
    for r in rows:
        groups.setdefault((r["protocol"], r["W"], r["b_thres"]), []).append(r)
    return [sorted(groups[k], key=lambda r: r["alpha"]) for k in sorted(groups)]


def _corr(curve, key) -> float:
    pts = [(r[key], r["mean_cycles"]) for r in curve
           if r[key] is not None and not math.isnan(r["mean_cycles"])]
    if len(pts) < 3:
        return math.nan
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return pearson([p[0] for p in pts], [p[1] for p in pts])


def summary_lines(rows) -> List[str]:
    """Per-curve Pearson r (model and scaled conjecture), W-averaged r, and the within-one-std share."""
    lines = []
    per_b: Dict[tuple, list] = {}
    for curve in _curves(rows):
        proto, W, b = curve[0]["protocol"], curve[0]["W"], curve[0]["b_thres"]
        r_model = _corr(curve, "model_k")
        per_b.setdefault((proto, b), []).append(r_model)
        line = f"pearson protocol={proto} W={W} b_thres={fmt(b)} model_r={fmt(r_model)}"
        if proto == "desync":
            line += f" conjecture_r={fmt(_corr(curve, 'conjecture_k'))}"
        lines.append(line)
    for (proto, b), rs in sorted(per_b.items()):
        lines.append(f"pearson_mean_over_W protocol={proto} b_thres={fmt(b)} model_r={fmt(float(np.mean(rs)))}")
    flags = [r["within_one_std"] for r in rows if r["within_one_std"] is not None]
    frac = sum(flags) / len(flags) if flags else math.nan
    lines.append(f"within_one_std fraction={fmt(frac)} cells={len(flags)}")
    return lines


def cmd_bandwidth(opts, fh) -> int:
    proto = _single_protocol(opts)
    mode = _pco_mode(opts)
    fh.write("method,W,alpha,b_thres,T_s,T_swap_s,model_k,bandwidth_kbps,note\n")
    for W in parse_list(opts["w"], int):
        for b in parse_list(opts["b_thres"]):
            for a in parse_range(opts["alpha"]):
                params = _base_params(opts, W, a, b)
                scen = ChurnScenario(W, _float(opts["bandwidth_bps"], "bandwidth_bps"), params.T,
                                     _float(opts["t_swap"], "t_swap"), proto)
                if opts["swap_range"]:
                    lo, hi = parse_list(str(opts["swap_range"]).replace(":", ","))
                    res = bandwidth_per_node_mc(scen, params, lo, hi, seed=_int(opts["seed"], "seed"),
                                                pco_mode=mode)
                else:
                    res = bandwidth_per_node(scen, params, pco_mode=mode)
                notes = [n for n, on in (("clamped", res.clamped), ("noise_limited", res.noise_limited)) if on]
                fh.write(",".join([proto, fmt(W), fmt(a), fmt(b), fmt(scen.T), fmt(scen.T_swap), fmt(res.cycles),
                                   format(res.bps / 1000.0, ".2f"), ";".join(notes)]) + "\n")
    return EXIT_OK


def cmd_period(opts, fh) -> int:
    proto = _single_protocol(opts)
    mode = _pco_mode(opts)
    t_ss = _float(opts["t_sstate"], "t_sstate")
    fh.write("method,W,alpha,b_thres,T_sstate_s,T_s,model_k,iterations,note\n")
    for W in parse_list(opts["w"], int):
        for b in parse_list(opts["b_thres"]):
            for a in parse_range(opts["alpha"]):
                params = _base_params(opts, W, a, b)
                res = solve_period(t_ss, params, proto, renorm=not opts["no_renorm"], pco_mode=mode)
                notes = []
                if not res.converged:
                    notes.append(f"not_converged(previous_T={fmt(res.previous_T)})")
                if res.noise_limited:
                    notes.append("noise_limited")
                fh.write(",".join([proto, fmt(W), fmt(a), fmt(b), fmt(t_ss), format(res.T, ".2f"), fmt(res.cycles),
                                   fmt(res.iterations), ";".join(notes)]) + "\n")
    return EXIT_OK


def cmd_diagnose(opts, fh) -> int:
    proto = _single_protocol(opts)
    W = parse_list(opts["w"], int)
    alphas = parse_range(opts["alpha"])
    bs = parse_list(opts["b_thres"])
    if len(W) != 1 or len(alphas) != 1 or len(bs) != 1:
        raise UsageError("diagnose-normality takes a single W, alpha and b_thres")
    params = _base_params(opts, W[0], alphas[0], bs[0])
    cfg = SimConfig(params, proto, max_cycles=_int(opts["max_cycles"], "max_cycles"), seed=_int(opts["seed"], "seed"))
    rep = normality_diagnostic(cfg, _int(opts["update_index"], "update_index"), _int(opts["trials"], "trials"),
                               node=_int(opts["node"], "node"))
    fh.write("update_index,n_samples,mean,std,skewness,excess_kurtosis,ks_normal,ks_uniform\n")
    fh.write(",".join(fmt(getattr(rep, k)) for k in ("update_index", "n_samples", "mean", "std", "skewness",
                                                     "excess_kurtosis", "ks_normal", "ks_uniform")) + "\n")
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "compare": cmd_compare,
    "bandwidth": cmd_bandwidth,
    "period": cmd_period,
    "diagnose-normality": cmd_diagnose,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    section = ns.app if ns.command == "apps" else ns.command
    try:
        opts = resolve(ns, section)
        buf = io.StringIO()
        code = _COMMANDS[section](opts, buf)
    except (UsageError, ConfigError, ValueError) as exc:
        print(f"desynclab {section}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapExceededError as exc:
        print(f"desynclab {section}: cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    out = opts.get("out")
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    else:
        with contextlib.suppress(BrokenPipeError):
            sys.stdout.write(buf.getvalue())
    return code


if __name__ == "__main__":
    sys.exit(main())
