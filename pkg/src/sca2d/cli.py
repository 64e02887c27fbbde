"""Command-line front end.

    sca2d synth    --out traces.sctr --n 3000 --seed 7
    sca2d encode   --input traces.sctr --method gasf --out images.scim
    sca2d leakmap  --input images.scim --out map.csv
    sca2d augment  --input images.scim --kind erase --out aug.scim
    sca2d train    --input images.scim --out model.scnn
    sca2d attack   --model model.scnn --input attack.scim --traces attack.sctr --out rank.csv
    sca2d evaluate --profiling prof.sctr --attack att.sctr --method gasf --out eval.csv

Every command also accepts ``--config FILE`` with ``key=value`` lines (keys
are the long option names); flags given on the command line win. A resolved
copy of all settings is written next to the main output as ``<stem>.config``
and can be passed back through ``--config`` to repeat the run.

Set ``SCA2D_THREADS`` to cap the BLAS thread count.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys

_threads = os.environ.get("SCA2D_THREADS")
if _threads:
    # has to happen before numpy loads its BLAS
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import numpy as np  # noqa: E402

from . import __version__, iofmt, plotting  # noqa: E402
from .attack import evaluate, kge_curve, template_fit, template_score  # noqa: E402
from .augment import AugmentKind, AugmentSpec  # noqa: E402
from .core import IntermediateValueSpec, TargetKind  # noqa: E402
from .imaging import (METHODS, MtfParams, RpParams, StftParams, encode_batch,  # noqa: E402
                      gasf_batch, paa)
from .leakage import (correlation_map_1d, correlation_map_2d, leakage_values,  # noqa: E402
                      select_poi)
from .nn import TrainConfig, cnn1d_network, two_block_network, train  # noqa: E402
from .synth import SynthConfig, generate  # noqa: E402

EXIT_USAGE = 2
EXIT_MISSING = 3


# ---- pipeline helpers (shared with the test suite) --------------------------

def parse_segment(text):
    if text in (None, ""):
        return None
    try:
        a, b = (int(v) for v in text.split(":"))
    except ValueError:
        raise ValueError(f"segment must look like START:END, got {text!r}") from None
    if not 0 <= a < b:
        raise ValueError(f"empty or negative segment {text!r}")
    return a, b


def cut(samples, segment):
    samples = np.asarray(samples, dtype=np.float64)
    if segment is None:
        return samples
    a, b = segment
    if b > samples.shape[1]:
        raise IndexError(f"segment {a}:{b} out of bounds for traces of length {samples.shape[1]}")
    return samples[:, a:b]


def build_inputs(samples, methods, segment=None, paa_len=0, **params):
    """Network inputs from a trace matrix.

    ``methods`` is a list of image encodings, or ``["raw"]`` for the
    ``(1, N, 1)`` layout of the 1D network.
    """
    x = cut(samples, segment)
    if paa_len:
        x = np.stack([paa(row, paa_len) for row in x])
    if list(methods) == ["raw"]:
        return x[:, None, :, None].copy()
    if list(methods) == ["gasf"]:
        return gasf_batch(x)
    return encode_batch(x, list(methods), **params)


def network_for(input_shape, dense_units=250, padding="valid"):
    if input_shape[0] == 1 and input_shape[2] == 1:
        return cnn1d_network(input_shape[1], dense_units=dense_units, mode=padding)
    return two_block_network(input_shape, dense_units=dense_units, mode=padding)


def make_augmenter(spec):
    """Training-loop hook: example ``i`` of the batch at ``offset`` in epoch
    ``e`` draws from the generator seeded ``seed + e * 1000003 + offset + i``."""
    if spec is None:
        return None

    def augment(batch, epoch, offset):
        if spec.is_image:
            return spec.apply_batch(batch, seed=spec.seed + epoch * 1_000_003, offset=offset)
        flat = batch[:, 0, :, 0]
        out = spec.apply_batch(flat, seed=spec.seed + epoch * 1_000_003, offset=offset)
        return out[:, None, :, None]

    return augment


def cnn_fitter(inputs, labels, config, dense_units=250, padding="valid", augment=None,
               shuffle_labels=False):
    """``fit(run_seed)`` for :func:`sca2d.attack.evaluate`: trains a fresh
    network seeded with ``run_seed`` and returns its predictor."""
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)

    def fit(run_seed):
        y = labels
        if shuffle_labels:
            y = np.random.default_rng([run_seed, 0x5EED]).permutation(labels)
        aug = None
        if augment is not None:
            aug = make_augmenter(AugmentSpec(augment.kind, augment.params, augment.seed + run_seed))
        net = network_for(inputs.shape[1:], dense_units, padding)
        cfg = dataclasses.replace(config, seed=run_seed)
        train(net, inputs, y, cfg, augment=aug)
        return net.predict_proba

    return fit


def template_fitter(features, labels, ridge=1e-6):
    """``fit`` for :func:`sca2d.attack.evaluate` using pooled Gaussian templates
    (deterministic, so the run seed is ignored)."""
    model = template_fit(features, labels, ridge=ridge)
    return lambda run_seed: (lambda x: template_score(model, x))


# ---- config handling ----------------------------------------------------------

def load_config(path):
    """``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{n}: expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("_", "-")] = value
    return out


def _truthy(text):
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def config_tokens(sub, cfg):
    """Translate a config dict into option tokens for ``sub``; unknown keys
    are an error."""
    actions = {a.dest.replace("_", "-"): a for a in sub._actions if a.option_strings}
    tokens = []
    for key, value in cfg.items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise ValueError(f"unknown config key {key!r}")
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):
            if _truthy(value):
                tokens.append(flag)
        else:
            tokens.append(f"{flag}={value}")
    return tokens


def resolved_config(args):
    skip = {"config", "command", "func"}
    lines = [f"# sca2d {__version__} {args.command}"]
    for key in sorted(vars(args)):
        value = getattr(args, key)
        if key in skip or value is None:
            continue
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key.replace('_', '-')}={value}")
    return "\n".join(lines) + "\n"


def write_config(args, out_path):
    stem = os.path.splitext(out_path)[0]
    iofmt.atomic_write(stem + ".config", resolved_config(args))


def sibling(out_path, suffix):
    return os.path.splitext(out_path)[0] + suffix


# ---- input helpers --------------------------------------------------------------

def _magic(path):
    with open(path, "rb") as fh:
        return fh.read(4)


def load_any(path):
    """``("traces", TraceSet)`` or ``("images", (images, labels))``."""
    magic = _magic(path)
    if magic == b"SCTR":
        return "traces", iofmt.read_sctr(path)
    if magic == b"SCIM":
        return "images", iofmt.read_scim(path)
    raise iofmt.BadMagicError(f"{path}: bad magic {magic!r}, expected SCTR or SCIM")


def target_spec(args):
    return IntermediateValueSpec(TargetKind(args.target), args.byte, args.partner)


def encode_params(args):
    return {
        "mtf_params": MtfParams(args.quantiles, args.blur_block),
        "rp_params": RpParams(args.rp_dimension, args.rp_delay, args.rp_threshold,
                              args.rp_binarize),
        "stft_params": StftParams(window_length=args.stft_window, hop=args.stft_hop),
    }


def method_list(args):
    methods = args.stack.split(",") if args.stack else [args.method]
    methods = [m.strip() for m in methods]
    bad = [m for m in methods if m not in METHODS + ("raw",)]
    if bad:
        raise ValueError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}, raw")
    if "raw" in methods and len(methods) > 1:
        raise ValueError("raw cannot be stacked with image encodings")
    return methods


def parse_params(text):
    """``name=value,name=value`` into a dict of floats."""
    out = {}
    if not text:
        return out
    for item in text.split(","):
        if "=" not in item:
            raise ValueError(f"augmentation parameter {item!r} is not name=value")
        k, v = item.split("=", 1)
        out[k.strip()] = float(v)
    return out


def augment_spec(args):
    if args.augment in (None, "none"):
        return None
    return AugmentSpec(AugmentKind(args.augment), parse_params(args.augment_params),
                       args.augment_seed)


def train_config(args):
    return TrainConfig(args.lr, args.batch_size, args.epochs, args.patience,
                       args.val_fraction, args.seed)


def true_key_byte(args, ts, spec):
    if args.key:
        key = bytes.fromhex(args.key)
        if len(key) != 16:
            raise ValueError("--key must be 32 hex digits")
        return key[spec.attacked_byte], np.frombuffer(key, dtype=np.uint8)
    if ts.keys is None:
        raise ValueError("attack traces carry no key; pass --key")
    return int(ts.keys[0, spec.attacked_byte]), ts.keys


# ---- commands ---------------------------------------------------------------------

def cmd_synth(args):
    spec = target_spec(args)
    cfg = SynthConfig(
        n_traces=args.n, n_samples=args.samples,
        leak_indices=tuple(int(v) for v in args.leak_indices.split(",")),
        leak_scale=args.leak_scale, noise_sigma=args.noise_sigma, desync_max=args.desync,
        masked=args.masked, spec=spec, key=bytes.fromhex(args.key), seed=args.seed,
        role=args.role, carrier_amplitude=args.carrier_amplitude,
    )
    ts = generate(cfg)
    iofmt.write_sctr(args.out, ts)
    write_config(args, args.out)
    return f"wrote {ts.n_traces} traces of {ts.n_samples} samples to {args.out}"


def cmd_encode(args):
    kind, data = load_any(args.input)
    if kind != "traces":
        raise ValueError("encode expects an SCTR trace file")
    methods = method_list(args)
    x = build_inputs(data.samples, methods, parse_segment(args.segment), args.paa,
                     **encode_params(args))
    iofmt.write_scim(args.out, x, data.labels)
    write_config(args, args.out)
    return f"wrote {len(x)} images of shape {x.shape[1:]} to {args.out}"


def cmd_leakmap(args):
    kind, data = load_any(args.input)
    if kind == "traces":
        if data.labels is None:
            raise ValueError("traces carry no labels")
        cmap = correlation_map_1d(data, leakage_values(data.labels, args.mode),
                                  f"{args.mode}(y)")
        img = cmap.values[None, :]
    else:
        images, labels = data
        if labels is None:
            raise ValueError("images carry no labels")
        cmap = correlation_map_2d(images, leakage_values(labels, args.mode), f"{args.mode}(y)")
        img = cmap.values
    iofmt.atomic_write(args.out, iofmt.map_csv(cmap))
    iofmt.atomic_write(sibling(args.out, ".pgm"), iofmt.export_pgm(img, args.channel))
    plotting.plot_correlation_map(sibling(args.out, ".png"), cmap)
    write_config(args, args.out)
    peak = tuple(int(v) for v in cmap.peak)
    return f"peak |rho| = {cmap.max_abs:.4f} at {peak}"


def cmd_augment(args):
    kind, data = load_any(args.input)
    spec = AugmentSpec(AugmentKind(args.kind), parse_params(args.params), args.seed)
    if spec.is_image:
        if kind != "images":
            raise ValueError(f"{spec.kind.value} works on images; pass an SCIM file")
        images, labels = data
        out = np.concatenate([spec.apply_batch(images, offset=c * len(images))
                              for c in range(args.copies)])
        lab = None if labels is None else np.tile(labels, args.copies)
        iofmt.write_scim(args.out, out, lab)
    else:
        if kind != "traces":
            raise ValueError(f"{spec.kind.value} works on traces; pass an SCTR file")
        ts = data
        reps = np.arange(args.copies * ts.n_traces) % ts.n_traces
        out = np.concatenate([spec.apply_batch(ts.samples, offset=c * ts.n_traces)
                              for c in range(args.copies)])
        aug = ts.subset(reps)
        aug.samples = out
        iofmt.write_sctr(args.out, aug)
    write_config(args, args.out)
    return f"wrote {args.copies} augmented cop{'y' if args.copies == 1 else 'ies'} to {args.out}"


def _training_inputs(args, kind, data):
    if kind == "traces":
        if data.labels is None:
            raise ValueError("traces carry no labels")
        return build_inputs(data.samples, ["raw"], parse_segment(args.segment)), data.labels
    images, labels = data
    if labels is None:
        raise ValueError("images carry no labels")
    return images, labels


def cmd_train(args):
    kind, data = load_any(args.input)
    x, y = _training_inputs(args, kind, data)
    if args.shuffle_labels:
        y = np.random.default_rng([args.seed, 0x5EED]).permutation(y)
    net = network_for(x.shape[1:], args.dense_units, args.padding)
    result = train(net, x, y, train_config(args), augment=make_augmenter(augment_spec(args)))
    iofmt.write_scnn(args.out, net)
    iofmt.atomic_write(sibling(args.out, ".history.csv"), iofmt.history_csv(result.history))
    plotting.plot_history(sibling(args.out, ".history.png"), result.history)
    write_config(args, args.out)
    return (f"best validation loss {result.best_val_loss:.4f} at epoch {result.best_epoch} "
            f"of {result.epochs_run}")


def cmd_attack(args):
    net = iofmt.read_scnn(args.model)
    kind, data = load_any(args.input)
    if kind == "traces":
        ts = data
        x = build_inputs(ts.samples, ["raw"], parse_segment(args.segment))
    else:
        x = data[0]
        if not args.traces:
            raise ValueError("image input needs --traces for the public data")
        ts = iofmt.read_sctr(args.traces)
        if ts.n_traces != len(x):
            raise ValueError(f"{len(x)} images but {ts.n_traces} traces")
    n = min(args.n_traces or len(x), len(x))
    spec = target_spec(args)
    k_true, key = true_key_byte(args, ts, spec)
    post = net.predict_proba(x[:n])
    key = key[:n] if key.ndim == 2 else key
    counts, ranks = kge_curve(post, ts.plaintexts[:n], k_true, spec, key, args.step)
    iofmt.atomic_write(args.out, iofmt.curve_csv(counts, ranks))
    plotting.plot_rank_curve(sibling(args.out, ".png"), counts, ranks, label="rank")
    write_config(args, args.out)
    return f"rank {int(ranks[-1])} after {int(counts[-1])} traces"


def cmd_evaluate(args):
    prof = iofmt.read_sctr(args.profiling, role="profiling")
    att = iofmt.read_sctr(args.attack, role="attack")
    spec = target_spec(args)
    if prof.labels is None:
        raise ValueError("profiling traces carry no labels")
    k_true, key = true_key_byte(args, att, spec)
    segment = parse_segment(args.segment)
    if args.classifier == "template":
        cmap = correlation_map_1d(cut(prof.samples, segment), leakage_values(prof.labels))
        poi = select_poi(cmap, args.poi)
        fit = template_fitter(cut(prof.samples, segment)[:, poi], prof.labels)
        attack_inputs = cut(att.samples, segment)[:, poi]
    else:
        methods = method_list(args)
        params = encode_params(args)
        x = build_inputs(prof.samples, methods, segment, args.paa, **params)
        attack_inputs = build_inputs(att.samples, methods, segment, args.paa, **params)
        fit = cnn_fitter(x, prof.labels, train_config(args), args.dense_units, args.padding,
                         augment_spec(args), args.shuffle_labels)
    result = evaluate(fit, attack_inputs, att.plaintexts, k_true, spec, key,
                      runs=args.runs, attacks_per_run=args.attacks,
                      attack_size=args.attack_size, step=args.step, seed=args.seed)
    iofmt.atomic_write(args.out, result.to_csv())
    plotting.plot_evaluation(sibling(args.out, ".png"), result)
    write_config(args, args.out)
    return f"mean rank {result.mean[-1]:.2f} after {int(result.trace_counts[-1])} traces"


# ---- parser -------------------------------------------------------------------------

def _add_target(p):
    p.add_argument("--target", default="sbox", choices=[t.value for t in TargetKind])
    p.add_argument("--byte", type=int, default=0, help="target byte index")
    p.add_argument("--partner", type=int, default=None,
                   help="second byte for the two-byte targets")


def _add_encoding(p):
    p.add_argument("--method", default="gasf", help=f"one of {', '.join(METHODS)} or raw")
    p.add_argument("--stack", default=None, help="comma-separated methods, stacked as channels")
    p.add_argument("--segment", default=None, help="sample window START:END")
    p.add_argument("--paa", type=int, default=0, help="PAA length (0 keeps every sample)")
    p.add_argument("--quantiles", type=int, default=8, help="MTF quantile bins")
    p.add_argument("--blur-block", type=int, default=1, help="MTF block-average size")
    p.add_argument("--rp-dimension", type=int, default=1)
    p.add_argument("--rp-delay", type=int, default=1)
    p.add_argument("--rp-threshold", type=float, default=0.0)
    p.add_argument("--rp-binarize", action="store_true")
    p.add_argument("--stft-window", type=int, default=8)
    p.add_argument("--stft-hop", type=int, default=1)


def _add_training(p):
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dense-units", type=int, default=250)
    p.add_argument("--padding", default="valid", choices=["valid", "same"])
    p.add_argument("--augment", default="none",
                   choices=["none"] + [k.value for k in AugmentKind])
    p.add_argument("--augment-params", default="", help="name=value,... overrides")
    p.add_argument("--augment-seed", type=int, default=0)
    p.add_argument("--shuffle-labels", action="store_true",
                   help="permute the training labels (null model)")


def build_parser():
    parser = argparse.ArgumentParser(prog="sca2d", description="2D-encoded profiled side-channel attacks")
    parser.add_argument("--version", action="version", version=f"sca2d {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="key=value settings file")
    subs = {}

    p = sub.add_parser("synth", parents=[common], help="generate synthetic traces (SCTR)")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=3000)
    p.add_argument("--samples", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--leak-indices", default="17")
    p.add_argument("--leak-scale", type=float, default=1.0)
    p.add_argument("--noise-sigma", type=float, default=math.sqrt(6.0))
    p.add_argument("--desync", type=int, default=0)
    p.add_argument("--masked", action="store_true")
    p.add_argument("--key", default=SynthConfig().key.hex())
    p.add_argument("--role", default="profiling", choices=["profiling", "attack"])
    p.add_argument("--carrier-amplitude", type=float, default=3.0)
    _add_target(p)
    p.set_defaults(func=cmd_synth)
    subs["synth"] = p

    p = sub.add_parser("encode", parents=[common], help="traces to images (SCIM)")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    _add_encoding(p)
    p.set_defaults(func=cmd_encode)
    subs["encode"] = p

    p = sub.add_parser("leakmap", parents=[common], help="correlation map (CSV, PGM, PNG)")
    p.add_argument("--input", required=True, help="SCTR or labeled SCIM")
    p.add_argument("--out", required=True, help="CSV path; PGM/PNG written alongside")
    p.add_argument("--mode", default="hw", choices=["hw", "value"])
    p.add_argument("--channel", type=int, default=0, help="image channel for the PGM")
    p.set_defaults(func=cmd_leakmap)
    subs["leakmap"] = p

    p = sub.add_parser("augment", parents=[common], help="augmented copies (SCIM or SCTR)")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", required=True, choices=[k.value for k in AugmentKind])
    p.add_argument("--params", default="", help="name=value,... overrides")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--copies", type=int, default=1)
    p.set_defaults(func=cmd_augment)
    subs["augment"] = p

    p = sub.add_parser("train", parents=[common], help="train a CNN (SCNN checkpoint)")
    p.add_argument("--input", required=True, help="labeled SCIM, or SCTR for the 1D network")
    p.add_argument("--out", required=True)
    p.add_argument("--segment", default=None, help="sample window for SCTR input")
    _add_training(p)
    p.set_defaults(func=cmd_train)
    subs["train"] = p

    p = sub.add_parser("attack", parents=[common], help="key-rank curve of one attack")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="SCIM images or SCTR traces")
    p.add_argument("--traces", default=None, help="SCTR with the public data (image input)")
    p.add_argument("--out", required=True)
    p.add_argument("--segment", default=None, help="sample window for SCTR input")
    p.add_argument("--n-traces", type=int, default=0, help="use only the first N (0 = all)")
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--key", default=None, help="true key (hex) if not stored in the traces")
    _add_target(p)
    p.set_defaults(func=cmd_attack)
    subs["attack"] = p

    p = sub.add_parser("evaluate", parents=[common], help="repeated train-and-attack protocol")
    p.add_argument("--profiling", required=True)
    p.add_argument("--attack", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--classifier", default="cnn", choices=["cnn", "template"])
    p.add_argument("--poi", type=int, default=1, help="points of interest for templates")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--attacks", type=int, default=5)
    p.add_argument("--attack-size", type=int, default=2000)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--key", default=None)
    _add_encoding(p)
    _add_training(p)
    _add_target(p)
    p.set_defaults(func=cmd_evaluate)
    subs["evaluate"] = p
    return parser, subs


def parse_args(argv):
    parser, subs = build_parser()
    # config values go in front of the command-line flags so the flags win
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    command = next((t for t in argv if t in subs), None)
    if known.config and command:
        i = argv.index(command)
        tokens = config_tokens(subs[command], load_config(known.config))
        argv = argv[:i + 1] + tokens + argv[i + 1:]
    return parser.parse_args(argv)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        message = args.func(args)
    except SystemExit as exc:  # argparse usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except iofmt.FormatError as exc:
        print(f"sca2d: error: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"sca2d: error: {exc.filename or exc}: no such file", file=sys.stderr)
        return EXIT_MISSING
    except (ValueError, IndexError, KeyError) as exc:
        print(f"sca2d: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if message:
        print(message)
    return 0


if __name__ == "__main__":
    sys.exit(main())
