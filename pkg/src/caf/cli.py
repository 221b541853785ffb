"""Experiment harness: rate sweeps, DoF tables, alignment Monte Carlo runs.

Usage:

    caf fig2|dof|align|invert|dioph --config FILE [--seed N] [--out DIR]
        [--snr-db ...] [--k ...] [--l ...] [--p ...] [--trials ...]

Configs are plain ``key = value`` files; command-line flags win. Every
command is deterministic given (config, seed): CSV bytes are identical
across runs. Outputs land in ``<out>/<experiment>.csv``, optionally
``<out>/<experiment>.svg`` and ``<out>/run.json`` echoing the resolved
config.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import alignment, diophantine, fpcode, inversion, rates
from .errors import NonGenericChannelError
from .seeding import child_rng, derive_seed
from .svgplot import svg_line_chart

SCHEMA_VERSION = 1

EXPERIMENT_KEYS = {
    "fig2": {"seed", "h2_points", "snr_db", "workers"},
    "dof": {"seed", "snr_db", "k", "n_rational", "n_real", "rational_entry_max"},
    "align": {"seed", "p", "t_len", "trials", "noise_variance", "c5",
              "demod_strategy", "message_len", "code_distance",
              "inject_corruptions", "geometry", "l", "k", "scaling_mode",
              "code_file"},
    "invert": {"seed", "k", "l", "p", "samples"},
    "dioph": {"seed", "q_max", "p", "l", "k"},
}


@dataclass
class SweepResult:
    """Tabular experiment output: rows in grid order, seeds attached."""

    header: list
    rows: list
    seed: int
    schema_version: int = SCHEMA_VERSION

    def to_csv(self, path: str) -> str:
        return write_csv(path, self.header, self.rows)


@dataclass
class RunConfig:
    """Experiment name plus parameters, checked against the experiment schema."""

    experiment: str
    params: dict = field(default_factory=dict)

    def validate(self):
        allowed = EXPERIMENT_KEYS[self.experiment]
        unknown = sorted(set(self.params) - allowed)
        if unknown:
            raise ValueError(
                f"unknown config keys for {self.experiment}: {', '.join(unknown)} "
                f"(allowed: {', '.join(sorted(allowed))})"
            )
        return self


def _coerce(token: str):
    token = token.strip()
    for cast in (int, float):
        try:
            return cast(token)
        except ValueError:
            pass
    return token


def parse_config(path: str) -> dict:
    """Read a ``key = value`` file; comma-separated values become lists."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {line!r}")
            key, value = line.split("=", 1)
            key = key.strip().replace("-", "_")
            if "," in value:
                out[key] = [_coerce(t) for t in value.split(",") if t.strip()]
            else:
                out[key] = _coerce(value)
    return out


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def write_csv(path: str, header: list, rows: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    text = buf.getvalue()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return text


def read_csv_text(text: str):
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], rows[1:]


def _write_run_json(outdir: str, experiment: str, config: dict, outputs: list):
    blob = {
        "schema_version": SCHEMA_VERSION,
        "experiment": experiment,
        "config": {k: config[k] for k in sorted(config)},
        "outputs": sorted(outputs),
    }
    with open(os.path.join(outdir, "run.json"), "w", encoding="utf-8") as fh:
        json.dump(blob, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _as_list(value):
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


# ---------------------------------------------------------------- fig2


def _fig2_point(task):
    i, j, h2, db = task
    try:
        r = rates.normalized_rate_sweep([h2], [db])[0]
        return (i, j, r.coefficients[0], r.coefficients[1], r.normalized_rate)
    except Exception as exc:  # partial results flushed with a marker
        return (i, j, 0, 0, f"error:{type(exc).__name__}")


def cmd_fig2(config: dict, outdir: str) -> str:
    seed = int(config.get("seed", 0))
    points = int(config.get("h2_points", 1000))
    snrs = [float(s) for s in _as_list(config.get("snr_db", [20, 30, 40, 50]))]
    workers = int(config.get("workers", 0))
    grid = np.linspace(0.0, 1.0, points)
    tasks = [(i, j, float(h2), db) for i, h2 in enumerate(grid) for j, db in enumerate(snrs)]
    if workers > 1:
        # grid points are independent; map preserves task order, so the
        # CSV bytes match the serial run exactly
        import concurrent.futures

        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fig2_point, tasks, chunksize=64))
    else:
        results = [_fig2_point(t) for t in tasks]
    header = ["schema_version", "seed", "row_seed", "h2", "snr_db", "a1", "a2", "normalized_rate"]
    rows = []
    for (i, j, a1, a2, value), task in zip(results, tasks):
        rows.append([SCHEMA_VERSION, seed, derive_seed(seed, i, j),
                     task[2], task[3], a1, a2, value])
    text = SweepResult(header, rows, seed).to_csv(os.path.join(outdir, "fig2.csv"))
    header_row, data = read_csv_text(text)
    series = []
    for db in snrs:
        xs = [float(r[3]) for r in data if float(r[4]) == db and not r[7].startswith("error")]
        ys = [float(r[7]) for r in data if float(r[4]) == db and not r[7].startswith("error")]
        series.append((f"{db:g} dB", (xs, ys)))
    with open(os.path.join(outdir, "fig2.svg"), "w", encoding="utf-8") as fh:
        fh.write(svg_line_chart(series, "normalized best-equation rate, h = (1, h2)",
                                "h2", "normalized rate"))
    return text


# ----------------------------------------------------------------- dof


def _dof_channels(config: dict, seed: int):
    k = int(config.get("k", 2))
    n_rational = int(config.get("n_rational", 5))
    n_real = int(config.get("n_real", 5))
    entry_max = int(config.get("rational_entry_max", 5))
    channels = []
    rng = child_rng(seed, 0)
    count = 0
    while count < n_rational:
        H = rng.integers(-entry_max, entry_max + 1, size=(k, k)).astype(float)
        if abs(np.linalg.det(H)) < 0.5 or np.any(np.all(H == 0.0, axis=1)):
            continue
        channels.append((f"rational{count}", "rational", H))
        count += 1
    rng = child_rng(seed, 1)
    for i in range(n_real):
        channels.append((f"real{i}", "real", rng.uniform(0.5, 2.0, size=(k, k))))
    return channels


def cmd_dof(config: dict, outdir: str) -> str:
    seed = int(config.get("seed", 0))
    db_grid = [float(x) for x in _as_list(config.get("snr_db", list(np.arange(40.0, 81.0, 5.0))))]
    channels = _dof_channels(config, seed)
    header = ["schema_version", "seed", "row_seed", "h_id", "h_kind", "curve",
              "record", "snr_db", "value", "h_entries"]
    rows = []
    for h_id, kind, H in channels:
        entries = ";".join(_fmt(float(x)) for x in H.ravel())
        curves = {"lattice": [], "time_sharing": [], "ia": [], "mimo": []}
        for db in db_grid:
            power = float(rates.db_to_linear(db))
            curves["lattice"].append(rates.lattice_sum_rate(H, power).rate_bits)
            curves["time_sharing"].append(rates.time_sharing_rate(H, power))
            curves["ia"].append(rates.ia_baseline(H.shape[0], power))
            curves["mimo"].append(rates.mimo_upper_bound(H, power))
        for curve, values in curves.items():
            for db, v in zip(db_grid, values):
                rows.append([SCHEMA_VERSION, seed, derive_seed(seed, len(rows)),
                             h_id, kind, curve, "rate", db, v, entries])
            slope = rates.dof_slope(values, db_grid)
            rows.append([SCHEMA_VERSION, seed, derive_seed(seed, len(rows)),
                         h_id, kind, curve, "slope", "", slope, entries])
    return SweepResult(header, rows, seed).to_csv(os.path.join(outdir, "dof.csv"))


# ---------------------------------------------------------------- align


def _build_signature(config: dict, H, p: int, c5: float):
    geometry = config.get("geometry", "example")
    noise_var = float(config.get("noise_variance", 0.0))
    if geometry == "example":
        mode = "tight" if noise_var > 0 else "unit"
        sig = alignment.example_signature(H, p=p, mode=mode, c5_target=c5)
    elif geometry == "canonical":
        mode = config.get("scaling_mode", "tight")
        if noise_var > 0:
            # noisy runs go through the validated parameter record; the
            # noiseless switch lives in the channel, not in the config type
            alignment.ModulationConfig(
                k=int(config.get("k", 2)), l=int(config.get("l", 1)), p=p,
                scaling_mode="tight" if mode == "unit" else mode,
                noise_variance=noise_var,
            )
        sig = alignment.canonical_signature(H, int(config.get("l", 1)), p,
                                            mode=mode, c5_target=c5)
    else:
        raise ValueError(f"unknown geometry {geometry!r}")
    return sig


def _align_channel(config: dict, seed: int):
    geometry = config.get("geometry", "example")
    rng = child_rng(seed, 99)
    if geometry == "example":
        h1, h2 = rng.uniform(0.5, 2.0, size=2)
        return np.array([[1.0, h2], [h1, 1.0]])
    k = int(config.get("k", 2))
    for _ in range(64):
        H = rng.uniform(0.5, 2.0, size=(k, k))
        try:
            alignment.canonical_signature(H, int(config.get("l", 1)), 2, mode="unit")
            return H
        except NonGenericChannelError:
            continue
    raise NonGenericChannelError("no generic channel found in 64 draws")


def cmd_align(config: dict, outdir: str) -> str:
    seed = int(config.get("seed", 0))
    p_list = [int(p) for p in _as_list(config.get("p", [5]))]
    t_len = int(config.get("t_len", 15))
    trials = int(config.get("trials", 1000))
    noise_var = float(config.get("noise_variance", 0.0))
    c5 = float(config.get("c5", 1.0))
    strategy = config.get("demod_strategy", "exhaustive")
    message_len = int(config.get("message_len", 4))
    distance = int(config.get("code_distance", 3))
    corrupt = int(config.get("inject_corruptions", 0))
    H = _align_channel(config, seed)
    header = ["schema_version", "seed", "row_seed", "geometry", "k", "l", "p",
              "t_len", "trials", "noise_variance", "c5", "strategy",
              "log2_scaling", "power_mean", "demod_symbol_errors",
              "demod_symbols", "equation_block_errors", "message_mismatches",
              "blocks", "achievable_rate_eps0"]
    rows = []
    for pi, p in enumerate(p_list):
        sig = _build_signature(config, H, p, c5)
        eqsys = alignment.derive_equation_system(sig, H)
        code_file = config.get("code_file")
        if code_file:
            with open(code_file, "r", encoding="utf-8") as fh:
                code = fpcode.GeneratorMatrix.from_text(fh.read())
            if code.p != p:
                raise ValueError(f"stored code is over F_{code.p}, run wants p={p}")
        else:
            code = fpcode.gv_search(p, t_len, distance, seed=derive_seed(seed, pi, 0),
                                    message_len=message_len)
        t_len = code.t
        with open(os.path.join(outdir, f"code_p{p}.txt"), "w", encoding="utf-8") as fh:
            fh.write(code.to_text())
        stats = _run_alignment_block(sig, eqsys, code, H, trials, noise_var, strategy,
                                     corrupt, derive_seed(seed, pi, 1))
        l_eff = sig.l if sig.l is not None else 1
        # per-stream rate times the actual stream count; equals
        # achievable_rate(K, L, p, 0) for canonical signatures
        rate0 = sig.submessage_count() * math.log2(p)
        rows.append([SCHEMA_VERSION, seed, derive_seed(seed, pi, 1),
                     config.get("geometry", "example"), sig.k,
                     l_eff, p, t_len, trials, noise_var, c5, strategy,
                     math.log2(sig.scaling) if sig.scaling > 0 else 0.0,
                     stats["power_mean"], stats["demod_symbol_errors"],
                     stats["demod_symbols"], stats["equation_block_errors"],
                     stats["message_mismatches"], stats["blocks"], rate0])
    return SweepResult(header, rows, seed).to_csv(os.path.join(outdir, "align.csv"))


def _run_alignment_block(sig, eqsys, code, H, trials, noise_var, strategy, corrupt, seed):
    """One Monte Carlo batch: encode, modulate, transmit, demodulate, decode, invert."""
    p = sig.p
    k = sig.k
    t_len = code.t
    rng = child_rng(seed, 0)
    # messages per (transmitter, submessage): vectors over F_p
    messages = [
        [rng.integers(0, p, size=(code.message_len, trials)) for _ in tx]
        for tx in sig.transmitters
    ]
    wbar = [[fpcode.encode(code, w) for w in tx] for tx in messages]  # (T, trials)
    flat = [np.stack([w.reshape(-1) for w in tx]) for tx in wbar]  # (n_k, T*trials)
    x = alignment.modulate(flat, sig)
    power_mean = float(np.mean(x * x))
    noise_rng = child_rng(seed, 1)
    y = alignment.awgn_channel(x, H, noise_rng, noise_variance=noise_var)
    truth = alignment.true_equations(flat, eqsys, sig)
    demod_symbol_errors = 0
    demod_symbols = 0
    equation_block_errors = 0
    message_mismatches = 0
    codebook = fpcode.all_messages(p, code.message_len)
    words = fpcode.encode(code, codebook.T)  # (T, p^msg)
    decoded_equations = []
    corrupt_rng = child_rng(seed, 2)
    for m in range(k):
        if strategy == "oracle":
            hat = alignment.ml_demodulate(y[m], eqsys.receivers[m], p, sig.scaling,
                                          strategy="oracle", oracle_values=truth[m])
        else:
            hat = alignment.ml_demodulate(y[m], eqsys.receivers[m], p, sig.scaling,
                                          strategy=strategy)
        demod_symbol_errors += int(np.count_nonzero(np.any(hat != truth[m], axis=0)))
        demod_symbols += hat.shape[1]
        hat_mod = hat % p
        if corrupt > 0:
            # oracle-injection exercise: flip up to `corrupt` symbols per block
            for g in range(hat_mod.shape[0]):
                cols = hat_mod[g].reshape(t_len, trials)
                for tr in range(trials):
                    pos = corrupt_rng.integers(0, t_len, size=corrupt)
                    cols[pos, tr] = (cols[pos, tr] + 1 + corrupt_rng.integers(0, p - 1)) % p
        decoded_equations.append(hat_mod)
    # outer decode per (receiver, group, trial), then invert per trial
    u_msgs = []
    for m in range(k):
        per_group = []
        for g in range(decoded_equations[m].shape[0]):
            received = decoded_equations[m][g].reshape(t_len, trials)
            dists = np.count_nonzero(words[:, :, None] != received[:, None, :], axis=0)
            best = np.argmin(dists, axis=0)
            per_group.append(codebook[best].T)  # (message_len, trials)
        u_msgs.append(np.stack(per_group))  # (n_groups, message_len, trials)
    truth_mod = [t % p for t in truth]
    for m in range(k):
        true_u = truth_mod[m].reshape(truth_mod[m].shape[0], t_len, trials)
        true_msgs = np.stack([
            _project_codeword(words, codebook, true_u[g]) for g in range(true_u.shape[0])
        ])
        bad = np.any(np.any(u_msgs[m] != true_msgs, axis=1), axis=0)
        equation_block_errors += int(np.count_nonzero(bad))
    # inversion: per trial, solve all message symbols at once
    for tr in range(trials):
        u_trial = [u_msgs[m][:, :, tr] for m in range(k)]
        result = inversion.peel_invert(eqsys, u_trial)
        ok = all(
            np.array_equal(result.values[(kk, sub.index)] % p,
                           messages[kk][i][:, tr] % p)
            for kk in range(k)
            for i, sub in enumerate(sig.transmitters[kk])
        )
        if not ok:
            message_mismatches += 1
    return {
        "power_mean": power_mean,
        "demod_symbol_errors": demod_symbol_errors,
        "demod_symbols": demod_symbols,
        "equation_block_errors": equation_block_errors,
        "message_mismatches": message_mismatches,
        "blocks": trials * k,
    }


def _project_codeword(words, codebook, received):
    """Minimum-distance decode of each column of ``received`` (T, trials)."""
    dists = np.count_nonzero(words[:, :, None] != received[:, None, :], axis=0)
    best = np.argmin(dists, axis=0)
    return codebook[best].T  # (message_len, trials)


# --------------------------------------------------------------- invert


def cmd_invert(config: dict, outdir: str) -> str:
    seed = int(config.get("seed", 0))
    k = int(config.get("k", 2))
    l = int(config.get("l", 2))
    p = int(_as_list(config.get("p", 5))[0])
    samples = int(config.get("samples", 100))
    rng = child_rng(seed, 0)
    injective = 0
    peel_eq = 0
    rejected = 0
    for s in range(samples):
        H = rng.uniform(0.5, 2.0, size=(k, k))
        try:
            sig = alignment.canonical_signature(H, l, p, mode="unit")
        except NonGenericChannelError:
            rejected += 1
            continue
        eqsys = alignment.derive_equation_system(sig, H)
        report = inversion.injectivity_check(H, l, p)
        if report.injective:
            injective += 1
        w = [child_rng(seed, s, kk).integers(0, p, size=(len(sig.transmitters[kk]), 1))
             for kk in range(k)]
        u = [t % p for t in alignment.true_equations(w, eqsys, sig)]
        peel = inversion.peel_invert(eqsys, u)
        solve = inversion.solve_linear(inversion.build_incidence(eqsys), u, eqsys)
        if solve.values is not None and all(
            np.array_equal(peel.values[key], solve.values[key]) for key in solve.values
        ):
            recovered = all(
                np.array_equal(peel.values[(kk, sub.index)], w[kk][i] % p)
                for kk in range(k)
                for i, sub in enumerate(sig.transmitters[kk])
            )
            if recovered:
                peel_eq += 1
    header = ["schema_version", "seed", "row_seed", "k", "l", "p", "samples",
              "injective_pass", "peel_equals_solve", "rejected"]
    rows = [[SCHEMA_VERSION, seed, derive_seed(seed, 0), k, l, p, samples,
             injective, peel_eq, rejected]]
    return SweepResult(header, rows, seed).to_csv(os.path.join(outdir, "invert.csv"))


# ---------------------------------------------------------------- dioph


def cmd_dioph(config: dict, outdir: str) -> str:
    seed = int(config.get("seed", 0))
    q_max = int(config.get("q_max", 10**4))
    p_list = [int(p) for p in _as_list(config.get("p", [2, 3, 5]))]
    l = int(config.get("l", 1))
    k = int(config.get("k", 2))
    header = ["schema_version", "seed", "row_seed", "record", "label", "x", "value", "flag"]
    rows = []
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    targets = [("golden", [golden]), ("rational_1_3", [1.0 / 3.0])]
    rng = child_rng(seed, 0)
    targets.append(("random_d2", list(rng.uniform(0.1, 0.9, size=2))))
    for label, h in targets:
        fit = diophantine.khinchin_decay_fit(h, q_max)
        stride = max(1, q_max // 200)
        for qi in range(0, q_max, stride):
            rows.append([SCHEMA_VERSION, seed, derive_seed(seed, len(rows)),
                         "envelope", label, int(fit.q[qi]), fit.envelope[qi],
                         "degenerate" if fit.degenerate else "ok"])
        rows.append([SCHEMA_VERSION, seed, derive_seed(seed, len(rows)),
                     "slope", label, q_max,
                     fit.slope if not fit.degenerate else 0.0,
                     "degenerate" if fit.degenerate else "ok"])
    H = child_rng(seed, 1).uniform(0.5, 2.0, size=(k, k))
    for row in diophantine.separation_scaling_probe(H, l, p_list):
        rows.append([SCHEMA_VERSION, seed, derive_seed(seed, len(rows)),
                     "separation_ratio", f"K{k}L{l}", row.p,
                     row.ratio_to_sqrt_p, "ok" if row.generic else "non-generic"])
    return SweepResult(header, rows, seed).to_csv(os.path.join(outdir, "dioph.csv"))


# ----------------------------------------------------------------- main


COMMANDS = {
    "fig2": cmd_fig2,
    "dof": cmd_dof,
    "align": cmd_align,
    "invert": cmd_invert,
    "dioph": cmd_dioph,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="caf", description=__doc__.split("\n")[0])
    parser.add_argument("experiment", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--seed", type=int, help="global 64-bit seed")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--snr-db", type=float, nargs="+", dest="snr_db")
    parser.add_argument("--k", type=int)
    parser.add_argument("--l", type=int)
    parser.add_argument("--p", type=int, nargs="+")
    parser.add_argument("--trials", type=int)
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = parse_config(args.config) if args.config else {}
    for item in args.set:
        key, value = item.split("=", 1)
        key = key.strip().replace("-", "_")
        config[key] = ([_coerce(t) for t in value.split(",")] if "," in value
                       else _coerce(value))
    for key in ("seed", "snr_db", "k", "l", "p", "trials"):
        value = getattr(args, key)
        if value is not None:
            config[key] = value
    config.setdefault("seed", 0)
    RunConfig(args.experiment, config).validate()
    os.makedirs(args.out, exist_ok=True)
    COMMANDS[args.experiment](config, args.out)
    outputs = sorted(os.listdir(args.out))
    _write_run_json(args.out, args.experiment, config, outputs)
    print(f"wrote {args.experiment} outputs to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
