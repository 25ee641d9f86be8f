"""``qseal`` command-line front end.

Subcommands::

    qseal run        simulate one session, write transcript + summary
    qseal mi         Eve's expected information for a strategy (CSV)
    qseal exposure   exposure report for a saved transcript (JSON)
    qseal selftest   run the acceptance checks

Exit status: 0 ok, 1 selftest failure, 2 bad config or input, 3 enumeration
too large, 4 empty candidate set, 5 transport failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .adversary import Passive, parse_strategy, shot_distribution, string_distribution
from .errors import (
    ConfigError,
    DomainError,
    EmptyCandidateSet,
    ExplosionError,
    ParseError,
    TransportError,
)
from .infotheory import (
    DIRECT_MAX_N,
    FACTORED_MAX_N,
    Method,
    strategy_mi,
    strategy_mi_mc,
)
from .protocol import SessionParams
from .simnet import SessionTranscript, run_loopback, run_networked, run_session
from .verifier import DEFAULT_BUDGET, DEFAULT_RESTARTS, ResultEvidence, epsilon_from_delta, exposure

EXIT_SELFTEST = 1
EXIT_CONFIG = 2
EXIT_EXPLOSION = 3
EXIT_EMPTY = 4
EXIT_TRANSPORT = 5

# config-file keys and the flag attribute each one feeds
CONFIG_KEYS = {
    "p_a": "p_a", "c_m": "c_m", "n": "n", "seed": "seed", "strategy": "strategy",
    "loss": "loss", "mode": "mode", "endpoint": "endpoint", "bit": "bit",
    "message_bit": "bit", "role": "role", "upstream": "upstream", "timeout": "timeout",
}
_CONVERT = {"p_a": float, "c_m": float, "n": int, "seed": int, "loss": float, "bit": int,
            "timeout": float}
_RUN_DEFAULTS = {"seed": 0, "strategy": "passive", "loss": 0.0, "mode": "local", "bit": 0,
                 "role": "loopback", "timeout": 30.0}


def fmt(x) -> str:
    """Twelve significant digits, the format used in every table."""
    return "" if x is None else format(float(x), ".12g")


def read_config(path) -> dict:
    """Parse a key=value file; blank lines and ``#`` comments are skipped."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lower().replace("-", "_")
        if not sep:
            raise ConfigError(key, f"line {lineno} is not key=value")
        if key not in CONFIG_KEYS:
            raise ConfigError(key, f"unknown config key on line {lineno}")
        out[CONFIG_KEYS[key]] = value.strip()
    return out


def resolve_run_config(args) -> dict:
    """Merge defaults, config file and flags (flags win) into typed values."""
    cfg = dict(_RUN_DEFAULTS)
    if args.config:
        cfg.update(read_config(args.config))
    for attr in set(CONFIG_KEYS.values()):
        value = getattr(args, attr, None)
        if value is not None:
            cfg[attr] = value
    for key, conv in _CONVERT.items():
        if cfg.get(key) is not None:
            try:
                cfg[key] = conv(cfg[key])
            except ValueError:
                raise ConfigError(key, f"cannot read {cfg[key]!r} as {conv.__name__}") from None
    return cfg


def params_from_config(cfg: dict) -> SessionParams:
    if cfg.get("p_a") is None:
        raise ConfigError("p_a", "the announcement probability is required")
    if cfg.get("n") is None and cfg.get("c_m") is None:
        raise ConfigError("c_m", "give either C_m or N")
    try:
        return SessionParams.create(cfg["p_a"], c_m=cfg.get("c_m"), n=cfg.get("n"), seed=cfg["seed"],
                                    message_bit=cfg["bit"], loss=cfg["loss"])
    except DomainError as exc:
        key = next((k for k in ("p_a", "c_m", "n", "loss", "bit", "seed")
                    if k.lower() in str(exc).lower()), "p_a")
        raise ConfigError(key, str(exc)) from None


def _strategy(text):
    try:
        return parse_strategy(text)
    except (ValueError, KeyError) as exc:
        raise ConfigError("strategy", str(exc)) from None


def summary_of(tr: SessionTranscript, strategy_text: str) -> dict:
    s = dict(tr.stats)
    s["params"] = tr.params.to_dict()
    s["strategy"] = strategy_text
    s["complete"] = tr.complete
    for key in ("matched_error_rate", "expected_bit", "expected_result"):
        s[key] = float(fmt(s[key]))
    return s


def _write(text: str, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_run(args) -> int:
    cfg = resolve_run_config(args)
    strategy = _strategy(cfg["strategy"])
    if cfg["mode"] not in ("local", "network"):
        raise ConfigError("mode", f"must be local or network, got {cfg['mode']!r}")
    role = cfg["role"]
    if cfg["mode"] == "network" and role in ("alice", "eve-proxy"):
        if not cfg.get("endpoint"):
            raise ConfigError("endpoint", f"{role} needs an endpoint to listen on")
        result = run_networked(role, cfg["endpoint"], upstream=cfg.get("upstream"), strategy=strategy,
                               message_bit=cfg["bit"], timeout=cfg["timeout"])
        if role == "alice":
            rows = [{"index": r.index, "basis": r.basis, "m": r.m} for r in result]
            _write("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows), args.out)
        else:
            print(f"eve-proxy relayed {result} particles")
        return 0
    params = params_from_config(cfg)
    if cfg["mode"] == "local":
        tr = run_session(params, strategy)
    elif role == "bob":
        if not cfg.get("endpoint"):
            raise ConfigError("endpoint", "bob needs the endpoint to connect to")
        tr = run_networked("bob", cfg["endpoint"], params, timeout=cfg["timeout"])
    elif role == "loopback":
        tr = run_loopback(params, strategy, proxy=not isinstance(strategy, Passive), timeout=cfg["timeout"])
    else:
        raise ConfigError("role", f"unknown role {role!r}")
    summary = json.dumps(summary_of(tr, strategy.describe()), indent=2, sort_keys=True) + "\n"
    if args.out:
        tr.save(args.out)
        Path(f"{args.out}.summary.json").write_text(summary)
    sys.stdout.write(summary)
    return 0


def _mi_row(strategy, n, p_a, method, samples, seed):
    if method is Method.MONTE_CARLO:
        per_shot = [shot_distribution(strategy, i) for i in range(n)]
        return strategy_mi_mc(per_shot, p_a, samples, np.random.default_rng([seed, n, int(p_a * 1e9)]))
    cap = DIRECT_MAX_N if method is Method.EXACT_DIRECT else FACTORED_MAX_N
    if n > cap:
        raise ExplosionError(f"method {method.value} is capped at N <= {cap}")
    return strategy_mi(string_distribution(strategy, n), p_a, method.value)


def cmd_mi(args) -> int:
    strategy = _strategy(args.strategy)
    if args.method == "all":
        methods = list(Method)
    else:
        methods = [Method(args.method)]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["N", "p_a", "method", "value_bits", "stderr"])
    for n in args.n:
        for p_a in args.p_a:
            if not 0 <= p_a <= 1:
                raise ConfigError("p_a", f"must lie in [0, 1], got {p_a}")
            for method in methods:
                try:
                    res = _mi_row(strategy, n, p_a, method, args.samples, args.seed)
                except ExplosionError:
                    if args.method == "all":
                        continue
                    raise
                writer.writerow([n, fmt(p_a), method.value, fmt(res.value), fmt(res.stderr)])
    _write(buf.getvalue(), args.out)
    return 0


def cmd_exposure(args) -> int:
    tr = SessionTranscript.load(args.transcript)
    evidence = ResultEvidence.from_records(tr.records)
    p_a = tr.params.p_a
    if args.epsilon is not None:
        if args.epsilon <= 0:
            raise ConfigError("epsilon", "must be positive")
        log_eps, reference = float(np.log(args.epsilon)), "absolute"
    else:
        log_eps, reference = epsilon_from_delta(evidence, p_a, args.delta, args.family)
    report = exposure(evidence, p_a, family=args.family, budget=args.budget, log_epsilon=log_eps,
                      restarts=args.restarts, seed=args.seed, jobs=args.jobs, search=args.search)
    d = report.to_dict()
    d["epsilon_reference"] = reference
    if args.epsilon is None:
        d["delta"] = args.delta
    d["transcript"] = str(args.transcript)
    _write(json.dumps(d, indent=2, sort_keys=True) + "\n", args.out)
    return 0


def cmd_selftest(args) -> int:
    from . import acceptance

    results = acceptance.run_all(report=lambda line: print(line, flush=True))
    failed = [r.id for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed"
          + (f"; failed: {', '.join(failed)}" if failed else ""))
    return EXIT_SELFTEST if failed else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qseal", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one session")
    run.add_argument("--config", help="key=value file; flags override it")
    run.add_argument("--p-a", dest="p_a", type=float)
    run.add_argument("--c-m", dest="c_m", type=float)
    run.add_argument("--n", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--bit", type=int, choices=(0, 1), help="message bit (default 0)")
    run.add_argument("--strategy", help='e.g. "intercept_resend basis=random"')
    run.add_argument("--loss", type=float)
    run.add_argument("--mode", choices=("local", "network"))
    run.add_argument("--role", choices=("loopback", "bob", "alice", "eve-proxy"),
                     help="network role (default loopback: all roles on this host)")
    run.add_argument("--endpoint", help="host:port")
    run.add_argument("--upstream", help="host:port of alice, for eve-proxy")
    run.add_argument("--timeout", type=float)
    run.add_argument("--out", help="transcript path; the summary goes to <out>.summary.json")
    run.set_defaults(func=cmd_run)

    mi = sub.add_parser("mi", help="Eve's expected information as a CSV table")
    mi.add_argument("--strategy", default="intercept_resend basis=random")
    mi.add_argument("--n", type=int, nargs="+", default=[4])
    mi.add_argument("--p-a", dest="p_a", type=float, nargs="+", default=[0.5])
    mi.add_argument("--method", choices=[m.value for m in Method] + ["all"], default="factored")
    mi.add_argument("--samples", type=int, default=100_000)
    mi.add_argument("--seed", type=int, default=0)
    mi.add_argument("--out")
    mi.set_defaults(func=cmd_mi)

    ex = sub.add_parser("exposure", help="exposure report for a transcript")
    ex.add_argument("transcript")
    grp = ex.add_mutually_exclusive_group()
    grp.add_argument("--epsilon", type=float, help="absolute likelihood threshold")
    grp.add_argument("--delta", type=float, default=0.1,
                     help="threshold relative to the all-identity likelihood (default 0.1)")
    ex.add_argument("--family", choices=("full", "intercept"), default="full")
    ex.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="annealing steps per restart")
    ex.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS)
    ex.add_argument("--seed", type=int, default=0)
    ex.add_argument("--jobs", type=int, default=1)
    ex.add_argument("--search", choices=("auto", "exhaustive", "anneal"), default="auto")
    ex.add_argument("--out")
    ex.set_defaults(func=cmd_exposure)

    st = sub.add_parser("selftest", help="run the acceptance checks")
    st.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParseError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExplosionError as exc:
        print(f"error: {exc}; try --method mc", file=sys.stderr)
        return EXIT_EXPLOSION
    except EmptyCandidateSet as exc:
        print(f"error: empty candidate set: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except TransportError as exc:
        print(f"error: transport: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT


if __name__ == "__main__":
    sys.exit(main())
