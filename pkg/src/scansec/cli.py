"""Command line front end.

One subcommand per workflow step: keygen, preprocess, compare (direct
two-party or --plaintext), store, authorize, evaluate (server and client
roles), and bench.  Exit codes are stable: 0 success, 2 bad input,
3 parameter disagreement, 4 transport or protocol failure, 5 integrity
failure (the evaluate client prints BOTTOM) or refused authorization.
"""

import argparse
import csv
import io
import os
import sys
import time

import numpy as np

from . import crypto, model, protocol, reference, storage, transport
from .circuits import multimatch as mm_circuit
from .circuits import subsmatch as subs_circuit
from .errors import (AlreadyAuthorized, AuthError, InvalidInput,
                     ParamsMismatch, ProtocolError, TransportError)

_EXIT_INPUT = 2
_EXIT_PARAMS = 3
_EXIT_TRANSPORT = 4
_EXIT_BOTTOM = 5


# -------------------------------------------------------------- plumbing

def _fail(msg: str) -> None:
    print(f"scansec: {msg}", file=sys.stderr)


def _params_from_args(args) -> protocol.AlgoParams:
    if args.algo == "scanmatch":
        matrix = reference.SubstitutionMatrix.from_grid(
            args.grid, bins=args.bins)
        return protocol.AlgoParams("scanmatch", matrix=matrix)
    if args.algo == "subsmatch":
        return protocol.AlgoParams("subsmatch", alphabet=args.alphabet,
                                   ngram=args.ngram)
    return protocol.AlgoParams("multimatch")


def _read_file(path: str) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise InvalidInput(f"cannot read {path}: {exc.strerror}") from exc


def _write_file(path: str, data: bytes) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise InvalidInput(f"cannot write {path}: {exc.strerror}") from exc


def _items_from_payload(params: protocol.AlgoParams, payload: bytes):
    if params.algo == "scanmatch":
        return storage.decode_symbol_payload(payload)
    if params.algo == "multimatch":
        return storage.decode_saccade_payload(payload)
    items = storage.decode_frequency_payload(payload)
    if len(items) != params.dimension:
        raise InvalidInput("frequency payload length disagrees with params")
    return items


def _passphrase(args) -> str:
    if args.passphrase is not None:
        return args.passphrase
    env = os.environ.get("SPC_VAULT_PASS")
    if env is None:
        raise InvalidInput("give --passphrase or set SPC_VAULT_PASS")
    return env


def _emit(args, fields) -> None:
    """fields: list of (name, value); one row in csv mode."""
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow([k for k, _ in fields])
        w.writerow([v for _, v in fields])
        sys.stdout.write(buf.getvalue())
    else:
        width = max(len(k) for k, _ in fields)
        for k, v in fields:
            print(f"{k:<{width}}  {v}")


def _score_fields(scores: dict) -> list:
    return [(name, f"{value:.6f}") for name, value in scores.items()]


def _metric_fields(metrics, seed) -> list:
    out = [("bytes_sent", metrics.bytes_sent),
           ("bytes_received", metrics.bytes_received),
           ("wall_ms", f"{metrics.wall_time_ms:.1f}"),
           ("round_trips", metrics.round_trips)]
    if seed is not None:
        out.append(("seed", seed))
    return out


# -------------------------------------------------------------- commands

def cmd_keygen(args) -> int:
    rng = crypto.Prg(args.seed) if args.seed is not None else None
    sk, pk = crypto.x25519_keypair(rng)
    _write_file(args.out + ".sk", sk)
    _write_file(args.out + ".pk", pk)
    print(f"client_id {storage.client_id(pk).hex()}")
    return 0


def cmd_preprocess(args) -> int:
    params = _params_from_args(args)
    sp = model.load_scanpath_csv(args.input)
    if args.algo == "scanmatch":
        seq = model.symbolize(sp, grid=args.grid, dur_bins=args.bins,
                              dur_max_ms=args.dur_max_ms)
        items = seq.symbols
    elif args.algo == "multimatch":
        items = mm_circuit.encode_saccades(model.extract_saccades(sp))
    else:
        seq = model.symbolize(sp, grid=args.grid, dur_bins=args.bins,
                              dur_max_ms=args.dur_max_ms)
        fv = model.ngram_frequencies(seq, args.alphabet, args.ngram)
        items = subs_circuit.encode_frequencies(fv)
    payload = protocol.items_to_payload(params, items)
    _write_file(args.out, payload)
    count = protocol.item_count(params, items)
    print(f"items {count}")
    print(f"bytes {len(payload)}")
    return 0


def _plaintext_scores(params, items_a, items_b) -> dict:
    if params.algo == "scanmatch":
        g, b = params.matrix.grid, params.matrix.bins
        a = model.SymbolSequence(items_a, g, b)
        q = model.SymbolSequence(items_b, g, b)
        return {"score": reference.scanmatch(a, q, params.matrix)}
    if params.algo == "subsmatch":
        scale = float(subs_circuit.Q0_14.scale)
        fa = model.FrequencyVector(items_a / scale, params.alphabet,
                                   params.ngram)
        fb = model.FrequencyVector(items_b / scale, params.alphabet,
                                   params.ngram)
        return {"similarity": reference.subsmatch(fa, fb)}
    sa, sb = (_saccades_from_words(w) for w in (items_a, items_b))
    scores = reference.multimatch(sa, sb)
    return {name: getattr(scores, name)
            for name in ("shape", "length", "direction", "position",
                         "duration", "overall")}


def _saccades_from_words(words) -> model.SaccadeSequence:
    cols = np.asarray(words, dtype=np.float64) / mm_circuit.SCALE
    dx, dy = cols[:, 0], cols[:, 1]
    # amp recomputed: the quantized word may be off by a rounding step
    return model.SaccadeSequence(
        dx=dx, dy=dy, amp=np.hypot(dx, dy), theta=cols[:, 3],
        turn=cols[:, 4], s0x=cols[:, 5], s0y=cols[:, 6],
        s1x=cols[:, 5] + dx, s1y=cols[:, 6] + dy,
        dur_ms=cols[:, 7] * 1000.0)


def cmd_compare(args) -> int:
    params = _params_from_args(args)
    if args.plaintext:
        if len(args.payload) != 2:
            raise InvalidInput("--plaintext compares exactly two payloads")
        items = [_items_from_payload(params, _read_file(p))
                 for p in args.payload]
        scores = _plaintext_scores(params, *items)
        _emit(args, [("algorithm", params.algo), ("mode", "plaintext")]
              + _score_fields(scores))
        return 0
    if len(args.payload) != 1:
        raise InvalidInput("secure compare takes this party's payload only")
    if args.role is None or (args.listen is None) == (args.connect is None):
        raise InvalidInput("secure compare needs --role and exactly one "
                           "of --listen/--connect")
    items = _items_from_payload(params, _read_file(args.payload[0]))
    profile = transport.get_profile(args.profile)
    if args.listen is not None:
        listener = transport.Listener(args.listen)
        print(f"listening {listener.endpoint}", file=sys.stderr)
        ch = listener.accept(profile, timeout=120)
    else:
        ch = transport.connect(args.connect, profile)
    with ch:
        if args.role == "garbler":
            result = protocol.run_compare_garbler(ch, params, items,
                                                  seed=args.seed)
        else:
            result = protocol.run_compare_evaluator(ch, params, items,
                                                    seed=args.seed)
    _emit(args, [("algorithm", params.algo), ("role", args.role)]
          + _score_fields(result.scores)
          + _metric_fields(result.metrics, args.seed))
    return 0


def cmd_store(args) -> int:
    params = _params_from_args(args)
    payload = _read_file(args.payload)
    _items_from_payload(params, payload)  # shape check before encrypting
    pks = [_read_file(p) for p in args.authorize]
    if not pks:
        raise InvalidInput("at least one authorized client key is required")
    rng = crypto.Prg(args.seed) if args.seed is not None else None
    rid, record, escrow = storage.create_record(
        payload, params.algo, params.digest(), pks, rng=rng)
    store = storage.RecordStore(args.store)
    store.save(rid, record)
    vault = storage.OwnerVault(args.vault, _passphrase(args))
    vault.add(rid, escrow)
    vault.save()
    print(f"record_id {rid}")
    print(f"clients {len(record.wrapped)}")
    return 0


def cmd_authorize(args) -> int:
    store = storage.RecordStore(args.store)
    record = store.load(args.record)
    vault = storage.OwnerVault(args.vault, _passphrase(args))
    escrow = vault.get(args.record)
    rng = crypto.Prg(args.seed) if args.seed is not None else None
    pk_new = _read_file(args.pk)
    store.save(args.record, storage.authorize(record, escrow, pk_new,
                                              rng=rng))
    print(f"client_id {storage.client_id(pk_new).hex()}")
    return 0


def cmd_evaluate(args) -> int:
    params = _params_from_args(args)
    profile = transport.get_profile(args.profile)
    if args.role == "server":
        if args.listen is None or args.store is None:
            raise InvalidInput("server role needs --listen and --store")
        store = storage.RecordStore(args.store)
        listener = transport.Listener(args.listen)
        print(f"listening {listener.endpoint}", file=sys.stderr)
        params_map = {params.algo: params}
        for _ in range(args.sessions):
            with listener.accept(profile, timeout=120) as ch:
                report = protocol.serve_session(ch, store, params_map,
                                                seed=args.seed)
            line = f"session {report.status} {report.record_id or '-'}"
            if report.reason:
                line += f" ({report.reason})"
            print(line)
        return 0
    for flag in ("connect", "record", "sk", "pk", "payload"):
        if getattr(args, flag) is None:
            raise InvalidInput(f"client role needs --{flag}")
    items = _items_from_payload(params, _read_file(args.payload))
    sk_b, pk_b = _read_file(args.sk), _read_file(args.pk)
    with transport.connect(args.connect, profile) as ch:
        outcome = protocol.run_evaluate(ch, args.record, sk_b, pk_b,
                                        params, items, seed=args.seed)
    if outcome.bottom:
        print("BOTTOM")
        if outcome.reason:
            _fail(outcome.reason)
        return _EXIT_BOTTOM
    _emit(args, [("algorithm", params.algo), ("record", args.record)]
          + _score_fields(outcome.scores)
          + _metric_fields(outcome.metrics, args.seed))
    return 0


def _bench_inputs(params, size, rng):
    if params.algo == "scanmatch":
        return rng.integers(0, params.matrix.size, size=size)
    if params.algo == "multimatch":
        words = rng.integers(-2000, 2000, size=(size, 8))
        words[:, 2] = np.abs(words[:, 2])  # amplitude is non-negative
        words[:, 7] = rng.integers(100, 3000, size=size)
        return words.astype(np.int64)
    w = rng.integers(0, 1000, size=params.dimension).astype(np.int64)
    q = (w * subs_circuit.Q0_14.scale) // max(int(w.sum()), 1)
    q[0] += subs_circuit.Q0_14.scale - int(q.sum())
    return q


def cmd_bench(args) -> int:
    profile = transport.get_profile(args.profile)
    rows = []
    for k, token in enumerate(args.sizes.split(",")):
        if args.algo == "subsmatch":
            alphabet, ngram = (int(v) for v in token.split(":"))
            params = protocol.AlgoParams("subsmatch", alphabet=alphabet,
                                         ngram=ngram)
            m = n = params.dimension
        else:
            a = argparse.Namespace(algo=args.algo, grid=args.grid,
                                   bins=args.bins)
            params = _params_from_args(a)
            m = n = int(token)
        rng = np.random.default_rng((args.seed or 0) + k)
        items_a = _bench_inputs(params, m, rng)
        items_b = _bench_inputs(params, n, rng)
        count = m if args.algo != "subsmatch" else params.dimension
        circuit = protocol.build_compare_circuit(params, count, count)
        t0 = time.monotonic()
        _, ev = protocol.compare_in_process(params, items_a, items_b,
                                            profile=profile, seed=args.seed)
        wall_ms = (time.monotonic() - t0) * 1000.0
        total = ev.metrics.bytes_sent + ev.metrics.bytes_received
        rows.append((m, n, circuit.stats.and_count, total, wall_ms))
    header = ["m", "n", "and_count", "bytes", "wall_ms"]
    if args.format == "csv":
        w = csv.writer(sys.stdout)
        w.writerow(header + ["seed"])
        for m, n, ands, total, wall in rows:
            w.writerow([m, n, ands, total, f"{wall:.1f}", args.seed])
    else:
        print(f"profile {profile.name}  seed {args.seed}")
        print(f"{'m':>6} {'n':>6} {'and_count':>10} {'bytes':>12} "
              f"{'wall_ms':>10}")
        for m, n, ands, total, wall in rows:
            print(f"{m:>6} {n:>6} {ands:>10} {total:>12} {wall:>10.1f}")
    return 0


# --------------------------------------------------------------- parser

def _add_algo_flags(p) -> None:
    p.add_argument("--algo", required=True,
                   choices=("scanmatch", "multimatch", "subsmatch"))
    p.add_argument("--grid", type=int, default=9,
                   help="spatial grid side (scanmatch/subsmatch input)")
    p.add_argument("--bins", type=int, default=1,
                   help="duration bins per cell")
    p.add_argument("--alphabet", type=int, default=10,
                   help="subsmatch alphabet size")
    p.add_argument("--ngram", type=int, default=3,
                   help="subsmatch n-gram length")


def _add_common(p, fmt=True) -> None:
    p.add_argument("--seed", type=int, default=None)
    if fmt:
        p.add_argument("--format", choices=("text", "csv"), default="text")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scansec",
        description="Privacy-preserving scanpath comparison.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="create a client key pair")
    p.add_argument("--out", required=True, help="path prefix for .sk/.pk")
    _add_common(p, fmt=False)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("preprocess",
                       help="fixation CSV to an algorithm payload")
    p.add_argument("input", help="CSV with header t_ms,x,y,dur_ms")
    p.add_argument("--out", required=True)
    p.add_argument("--dur-max-ms", type=float, default=1000.0)
    _add_algo_flags(p)
    _add_common(p, fmt=False)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("compare", help="direct two-party comparison")
    p.add_argument("payload", nargs="+")
    p.add_argument("--role", choices=("garbler", "evaluator"))
    p.add_argument("--listen", help="host:port to accept the peer on")
    p.add_argument("--connect", help="host:port of the listening peer")
    p.add_argument("--profile", choices=sorted(transport.PROFILES),
                   default=None)
    p.add_argument("--plaintext", action="store_true",
                   help="score two local payloads without MPC")
    _add_algo_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("store", help="encrypt a payload into a record")
    p.add_argument("payload")
    p.add_argument("--store", required=True, help="record directory")
    p.add_argument("--vault", required=True, help="owner escrow vault file")
    p.add_argument("--passphrase", default=None,
                   help="vault passphrase (or SPC_VAULT_PASS)")
    p.add_argument("--authorize", action="append", default=[],
                   metavar="PKFILE", help="client public key (repeatable)")
    _add_algo_flags(p)
    _add_common(p, fmt=False)
    p.set_defaults(func=cmd_store)

    p = sub.add_parser("authorize", help="grant a client access later")
    p.add_argument("--store", required=True)
    p.add_argument("--vault", required=True)
    p.add_argument("--passphrase", default=None)
    p.add_argument("--record", required=True)
    p.add_argument("--pk", required=True, help="new client public key file")
    _add_common(p, fmt=False)
    p.set_defaults(func=cmd_authorize)

    p = sub.add_parser("evaluate",
                       help="server-assisted evaluation of a record")
    p.add_argument("--role", choices=("server", "client"), required=True)
    p.add_argument("--listen")
    p.add_argument("--connect")
    p.add_argument("--store", help="record directory (server)")
    p.add_argument("--sessions", type=int, default=1,
                   help="sessions to serve before exiting")
    p.add_argument("--record", help="record id (client)")
    p.add_argument("--sk", help="client secret key file")
    p.add_argument("--pk", help="client public key file")
    p.add_argument("--payload", help="query payload file (client)")
    p.add_argument("--profile", choices=sorted(transport.PROFILES),
                   default=None)
    _add_algo_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="size sweep over direct comparisons")
    p.add_argument("--sizes", required=True,
                   help="lengths 10,20,40 or subsmatch configs 5:2,10:3")
    p.add_argument("--profile", choices=sorted(transport.PROFILES),
                   default=None)
    _add_algo_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InvalidInput, AlreadyAuthorized) as exc:
        _fail(str(exc))
        return _EXIT_INPUT
    except ParamsMismatch as exc:
        _fail(f"parameter mismatch: {exc}")
        return _EXIT_PARAMS
    except AuthError as exc:
        _fail(f"not authorized: {exc}")
        return _EXIT_BOTTOM
    except (TransportError, ProtocolError) as exc:
        _fail(str(exc))
        return _EXIT_TRANSPORT


if __name__ == "__main__":
    sys.exit(main())
