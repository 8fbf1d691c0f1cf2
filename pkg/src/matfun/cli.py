"""Command-line entry point.

Subcommands: gen, train, eval, build-relu, certify, codec, repro. Every
run takes an --out directory and leaves a manifest.json run record beside
its outputs. All randomness hangs off --seed, so identical invocations
produce byte-identical files. MATFUN_THREADS caps BLAS/numba threads (it
must be read before numpy loads, hence the lazy imports here).
"""

import argparse
import json
import os
import sys


def _cap_threads():
    cap = os.environ.get("MATFUN_THREADS")
    if not cap:
        return
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
        "NUMBA_NUM_THREADS",
    ):
        os.environ.setdefault(var, cap)


def _write_manifest(out_dir, record: dict):
    path = os.path.join(out_dir, "manifest.json")
    existing = []
    if os.path.exists(path):
        with open(path) as fh:
            existing = json.load(fh)
    existing.append(record)
    with open(path, "w") as fh:
        json.dump(existing, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _ensure_out(args) -> str:
    out = args.out
    os.makedirs(out, exist_ok=True)
    return out


def _dataset_name(fn, n, count, seed):
    return f"dataset_{fn}_n{n}_c{count}_s{seed}.jsonl"


# ----------------------------------------------------------------------
# subcommand handlers


def cmd_gen(args) -> int:
    from . import datagen

    out = _ensure_out(args)
    path = os.path.join(out, _dataset_name(args.fn, args.n, args.count, args.seed))
    manifest = datagen.generate_to_file(
        path, args.fn, args.n, args.count, args.seed, sigma=args.sigma, clip=args.clip
    )
    _write_manifest(
        out,
        {
            "command": "gen",
            "function": args.fn,
            "n": args.n,
            "count": args.count,
            "seed": args.seed,
            "sigma": args.sigma,
            "clip": args.clip,
            "rejections": manifest.rejections,
            "outputs": [os.path.basename(path)],
        },
    )
    print(f"wrote {path} (rejections: {manifest.rejections or 'none'})")
    return 0


def _train_impl(args, out: str) -> dict:
    import numpy as np

    from . import datagen, metrics, training

    _, samples = datagen.read_dataset(args.data)
    n = samples[0].input.shape[0]
    model, meta = training.build_model(
        args.arch, args.fn, n, args.scheme, args.preset, args.seed
    )
    train_idx, eval_idx = training.split_holdout(len(samples), args.seed)
    train_samples = [samples[i] for i in train_idx]
    eval_samples = [samples[i] for i in eval_idx] or train_samples[:1]

    epochs = args.epochs or meta["epochs"]
    batch_size = args.batch_size or meta["batch_size"]

    if meta["kind"] == "regression":
        x, y = training.regression_arrays(train_samples)
        history = training.train_regression(
            model,
            x,
            y,
            training.loss_kind_for(args.fn, n),
            meta["optim"],
            epochs=epochs,
            batch_size=batch_size,
            seed=args.seed,
        )
    else:
        src, tgt, skipped = training.sequence_arrays(train_samples, args.scheme)
        steps = args.steps or epochs * max(1, len(src) // batch_size)
        history = training.train_encdec(
            model,
            src,
            tgt,
            meta["optim"],
            max_steps=steps,
            batch_size=batch_size,
            seed=args.seed,
        )
        history["skipped_tokenization"] = skipped

    preds = training.predict_matrices(meta["kind"], model, eval_samples, args.scheme)
    rs = metrics.ResultSet(
        function=args.fn,
        arch_or_scheme=args.scheme if meta["kind"] == "encdec" else args.arch,
        n=n,
        predictions=preds,
        targets=[s.target for s in eval_samples],
    )
    rep = metrics.report([rs], taus=args.taus)

    header = {
        "arch": args.arch,
        "function": args.fn,
        "n": n,
        "scheme": args.scheme,
        "preset": args.preset,
        "seed": args.seed,
        "config": meta["config"],
    }
    ckpt = os.path.join(out, "model.npz")
    training.save_checkpoint(ckpt, model, header)
    with open(os.path.join(out, "history.json"), "w") as fh:
        json.dump(history, fh, sort_keys=True)
        fh.write("\n")
    rep.write_csv(os.path.join(out, "heldout.csv"))
    del np
    return {"checkpoint": ckpt, "rows": rep.rows}


def cmd_train(args) -> int:
    out = _ensure_out(args)
    result = _train_impl(args, out)
    _write_manifest(
        out,
        {
            "command": "train",
            "arch": args.arch,
            "function": args.fn,
            "scheme": args.scheme,
            "preset": args.preset,
            "seed": args.seed,
            "data": args.data,
            "outputs": ["model.npz", "history.json", "heldout.csv"],
        },
    )
    for row in result["rows"]:
        print(
            f"heldout {row['function']}/{row['arch_or_scheme']} n={row['n']} "
            f"tau={row['tau']}: accuracy={row['accuracy']}"
        )
    return 0


def cmd_eval(args) -> int:
    from . import datagen, metrics, training

    out = _ensure_out(args)
    header, model = training.load_checkpoint(args.model)
    _, samples = datagen.read_dataset(args.data)
    kind = "encdec" if header["arch"] == "encdec" else "regression"
    preds = training.predict_matrices(kind, model, samples, header.get("scheme"))
    rs = metrics.ResultSet(
        function=header["function"],
        arch_or_scheme=header["scheme"] if kind == "encdec" else header["arch"],
        n=header["n"],
        predictions=preds,
        targets=[s.target for s in samples],
    )
    rep = metrics.report([rs], taus=args.taus)
    csv_path = os.path.join(out, "report.csv")
    rep.write_csv(csv_path)
    _write_manifest(
        out,
        {
            "command": "eval",
            "model": args.model,
            "data": args.data,
            "taus": list(args.taus),
            "outputs": ["report.csv"],
        },
    )
    print(rep.to_csv(), end="")
    return 0


def cmd_build_relu(args) -> int:
    from . import construct, relunet

    out = _ensure_out(args)
    params = construct.ExpNetParams(args.n, args.M, args.eps)
    net = construct.build_exp_net(params, budget=args.budget)
    path = os.path.join(out, f"expnet_n{args.n}_M{args.M:g}_eps{args.eps:g}.npz")
    relunet.save_network(net, path)
    _write_manifest(
        out,
        {
            "command": "build-relu",
            "n": args.n,
            "M": args.M,
            "eps": args.eps,
            "budget": args.budget,
            "K": params.K,
            "delta": params.delta,
            "width": net.width,
            "depth": net.depth,
            "weight_count": net.weight_count,
            "outputs": [os.path.basename(path)],
        },
    )
    print(
        f"built {path}: K={params.K} width={net.width} depth={net.depth} "
        f"weights={net.weight_count}"
    )
    return 0


def cmd_certify(args) -> int:
    from . import construct, relunet

    out = _ensure_out(args)
    net = relunet.load_network(args.net)
    meta = net.meta
    box = (-meta.get("M", 1.0), meta.get("M", 1.0))
    report = construct.certify(
        net, args.oracle, box=box, samples=args.samples
    )
    path = os.path.join(out, "certification.json")
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(
        out,
        {
            "command": "certify",
            "net": args.net,
            "samples": args.samples,
            "max_error": report.max_error,
            "passed": report.passed,
            "outputs": ["certification.json"],
        },
    )
    print(
        f"certified over {report.n_points} points: max_error={report.max_error:.6g} "
        f"target={report.target_error} passed={report.passed}"
    )
    return 0 if (report.passed is None or report.passed) else 1


def cmd_codec(args) -> int:
    from . import codec

    if args.codec_cmd == "roundtrip":
        seq = codec.encode_value(args.value, args.scheme)
        names = [codec.vocab(args.scheme)[t] for t in seq.tokens]
        decoded = codec.decode_value(seq)
        print(f"tokens: {names}")
        print(f"ids:    {seq.tokens}")
        print(f"decoded: {decoded}")
        return 0
    if args.codec_cmd == "vocab":
        out = _ensure_out(args)
        path = os.path.join(out, f"{args.scheme}.vocab")
        codec.write_vocab_file(args.scheme, path)
        _write_manifest(
            out,
            {
                "command": "codec-vocab",
                "scheme": args.scheme,
                "outputs": [os.path.basename(path)],
            },
        )
        print(f"wrote {path}")
        return 0
    raise ValueError(f"unknown codec subcommand {args.codec_cmd!r}")


# Named desk-scale experiment chains for `repro`.
EXPERIMENTS = {
    # small and fast: used by the byte-determinism gate
    "mini-exp1x1-mlp3": {
        "fn": "exp",
        "n": 1,
        "count": 1500,
        "clip": 1.0,
        "sigma": 0.5,
        "arch": "mlp3",
        "scheme": None,
        "preset": "desk",
        "epochs": 12,
        "batch_size": 128,
    },
    # the desk-scale token-model run
    "desk-exp1x1-encdec": {
        "fn": "exp",
        "n": 1,
        "count": 10_000,
        "clip": 5.0,
        "sigma": 1.0,
        "arch": "encdec",
        "scheme": "P1000",
        "preset": "desk",
        "epochs": 25,
        "batch_size": 64,
    },
}


def cmd_repro(args) -> int:
    from . import datagen

    if args.name not in EXPERIMENTS:
        raise KeyError(
            f"unknown experiment {args.name!r}; choices: {sorted(EXPERIMENTS)}"
        )
    exp = EXPERIMENTS[args.name]
    out = _ensure_out(args)

    data_path = os.path.join(
        out, _dataset_name(exp["fn"], exp["n"], exp["count"], args.seed)
    )
    datagen.generate_to_file(
        data_path,
        exp["fn"],
        exp["n"],
        exp["count"],
        args.seed,
        sigma=exp["sigma"],
        clip=exp["clip"],
    )

    train_args = argparse.Namespace(
        arch=exp["arch"],
        fn=exp["fn"],
        scheme=exp["scheme"],
        preset=exp["preset"],
        seed=args.seed,
        data=data_path,
        epochs=exp["epochs"],
        batch_size=exp["batch_size"],
        steps=None,
        taus=args.taus,
        out=out,
    )
    result = _train_impl(train_args, out)

    report_path = os.path.join(out, "report.csv")
    os.replace(os.path.join(out, "heldout.csv"), report_path)
    _write_manifest(
        out,
        {
            "command": "repro",
            "experiment": args.name,
            "seed": args.seed,
            "outputs": [
                os.path.basename(data_path),
                "model.npz",
                "history.json",
                "report.csv",
            ],
        },
    )
    for row in result["rows"]:
        print(
            f"{row['function']}/{row['arch_or_scheme']} n={row['n']} "
            f"tau={row['tau']}: accuracy={row['accuracy']}"
        )
    print(f"report: {report_path}")
    return 0


# ----------------------------------------------------------------------
# argument parsing


def _taus(text: str):
    return tuple(float(t) for t in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="matfun",
        description="Matrix-function learning toolkit: data generation, "
        "training, evaluation, certified ReLU construction, codecs.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a dataset")
    g.add_argument("--fn", required=True, choices=["exp", "log", "sign", "sin", "cos"])
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--sigma", type=float, default=1.0)
    g.add_argument("--clip", type=float, default=5.0)
    g.add_argument("--out", required=True)
    g.set_defaults(handler=cmd_gen)

    t = sub.add_parser("train", help="train a model on a dataset")
    t.add_argument("--arch", required=True, choices=["mlp3", "mlp7", "fourier-enc", "encdec"])
    t.add_argument("--fn", required=True, choices=["exp", "log", "sign", "sin", "cos"])
    t.add_argument("--scheme", default=None, choices=[None, "P10", "P1000", "B1999", "FP15"])
    t.add_argument("--preset", default="desk", choices=["desk", "paper"])
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--data", required=True)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--batch-size", type=int, default=None)
    t.add_argument("--steps", type=int, default=None)
    t.add_argument("--taus", type=_taus, default=(0.05, 0.02, 0.01, 0.005))
    t.add_argument("--out", required=True)
    t.set_defaults(handler=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--taus", type=_taus, default=(0.05, 0.02, 0.01, 0.005))
    e.add_argument("--out", required=True)
    e.set_defaults(handler=cmd_eval)

    b = sub.add_parser("build-relu", help="construct the certified exp network")
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--M", type=float, default=1.0)
    b.add_argument("--eps", type=float, required=True)
    b.add_argument("--budget", type=int, default=10_000_000)
    b.add_argument("--out", required=True)
    b.set_defaults(handler=cmd_build_relu)

    c = sub.add_parser("certify", help="measure a saved network against its oracle")
    c.add_argument("--net", required=True)
    c.add_argument("--samples", type=int, default=10_000)
    c.add_argument("--oracle", default="exp")
    c.add_argument("--out", required=True)
    c.set_defaults(handler=cmd_certify)

    k = sub.add_parser("codec", help="tokenizer utilities")
    ksub = k.add_subparsers(dest="codec_cmd", required=True)
    kr = ksub.add_parser("roundtrip", help="encode and decode one value")
    kr.add_argument("--scheme", required=True, choices=["P10", "P1000", "B1999", "FP15"])
    kr.add_argument("--value", type=float, required=True)
    kv = ksub.add_parser("vocab", help="write a vocabulary file")
    kv.add_argument("--scheme", required=True, choices=["P10", "P1000", "B1999", "FP15"])
    kv.add_argument("--out", required=True)
    k.set_defaults(handler=cmd_codec)

    r = sub.add_parser("repro", help="run a named gen->train->eval chain")
    r.add_argument("--name", required=True)
    r.add_argument("--seed", type=int, default=42)
    r.add_argument("--taus", type=_taus, default=(0.05, 0.02, 0.01, 0.005))
    r.add_argument("--out", required=True)
    r.set_defaults(handler=cmd_repro)

    return p


def main(argv=None) -> int:
    _cap_threads()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except Exception as exc:  # single-line machine-parseable error
        from .errors import MatfunError

        kind = type(exc).__name__
        msg = str(exc).replace("\n", " ")
        print(f"MATFUN-ERROR kind={kind} msg={msg!r}", file=sys.stderr)
        return 1 if isinstance(exc, (MatfunError, KeyError, ValueError, OSError)) else 3


if __name__ == "__main__":
    sys.exit(main())
