"""Command-line entry point: prepare, train, eval, grad-check (and synth for the toy corpus)."""
import argparse
import os
import pickle
import sys
import time


from . import checkpoint as ckpt
from . import corpus, evaluator, synthetic
from .losses import VARIANTS, LossConfig
from .model import ModelShape, init_params
from .numeric import Rng
from .trainer import NumericError, TrainConfig, grad_check, train_epoch

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULTS = {
    "train": None, "test": None, "valid": None, "embeddings": None, "schema": None,
    "out": "run", "checkpoint_dir": None,
    "min_count": "100", "max_len": "120", "pos_clip": "30",
    "d_word": "50", "d_pos": "5", "kernels": "230", "window": "3",
    "batch": "160", "lr": "0.03", "epochs": None, "seed": "1", "p_keep": "0.5", "shuffle": "on",
    "variant": "cost_att", "lambda": "0", "gamma": "1", "rho": "2", "sigma_pos": "2.5", "sigma_neg": "0.5",
    "eps": "1e-6", "eta": "1e-3", "regularize": "on",
    "trials": "20",
}
PATH_KEYS = ("train", "test", "valid", "embeddings", "schema", "out", "checkpoint_dir")
# keys that shape the learned parameters; snapshotted into checkpoints
RUN_KEYS = ("min_count", "max_len", "pos_clip", "d_word", "d_pos", "kernels", "window", "batch", "lr", "epochs",
            "seed", "p_keep", "shuffle", "variant", "lambda", "gamma", "rho", "sigma_pos", "sigma_neg", "eps",
            "eta", "regularize")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config(path):
    """Flat ``key = value`` file; '#' starts a comment. Relative paths resolve against the file's directory."""
    values = {}
    base = os.path.dirname(os.path.abspath(path))
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in DEFAULTS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            if key in PATH_KEYS and value and not os.path.isabs(value):
                value = os.path.join(base, value)
            values[key] = value
    return values


def resolve(args):
    cfg = dict(DEFAULTS)
    explicit = set()
    if args.config:
        from_file = read_config(args.config)
        cfg.update(from_file)
        explicit.update(from_file)
    for key in ("variant", "lambda", "gamma", "regularize", "epochs", "seed", "batch", "lr", "out", "trials"):
        value = getattr(args, key.replace("lambda", "lam"), None)
        if value is not None:
            cfg[key] = str(value)
            explicit.add(key)
    if cfg["checkpoint_dir"] is None:
        cfg["checkpoint_dir"] = os.path.join(cfg["out"], "checkpoints")
    if cfg["variant"] not in VARIANTS:
        raise UsageError(f"variant must be one of {VARIANTS}")
    if cfg["variant"] != "cost_att" and explicit & {"lambda", "gamma"}:
        raise UsageError("--lambda/--gamma only apply to the cost_att variant")
    for key in ("regularize", "shuffle"):
        if cfg[key] not in ("on", "off"):
            raise UsageError(f"{key} must be 'on' or 'off'")
    return cfg


def _num(cfg, key, kind=float):
    try:
        return kind(cfg[key])
    except (TypeError, ValueError):
        raise UsageError(f"{key} must be a number, got {cfg[key]!r}") from None


def loss_config(cfg):
    return LossConfig(variant=cfg["variant"], rho=_num(cfg, "rho"), sigma_pos=_num(cfg, "sigma_pos"),
                      sigma_neg=_num(cfg, "sigma_neg"), lam=_num(cfg, "lambda"), gamma=_num(cfg, "gamma"),
                      eps=_num(cfg, "eps"), eta=_num(cfg, "eta"), regularize=cfg["regularize"] == "on")


def train_config(cfg):
    return TrainConfig(batch=_num(cfg, "batch", int), lr=_num(cfg, "lr"), epochs=_num(cfg, "epochs", int),
                       seed=_num(cfg, "seed", int), p_keep=_num(cfg, "p_keep"), shuffle=cfg["shuffle"] == "on",
                       loss=loss_config(cfg))


def _require(cfg, *keys):
    for key in keys:
        if not cfg.get(key):
            raise UsageError(f"missing required setting {key!r}")
        if key in PATH_KEYS and key not in ("out", "checkpoint_dir") and not os.path.exists(cfg[key]):
            raise UsageError(f"{key} path does not exist: {cfg[key]}")


def dataset_path(cfg):
    return os.path.join(cfg["out"], "dataset.pkl")


def _bags_to_plain(bags):
    return [{"pair": b.entity_pair, "labels": sorted(b.label_set), "grids": b.grids, "positions": b.positions}
            for b in bags]


def _bags_from_plain(items):
    return [corpus.EncodedBag(tuple(d["pair"]), frozenset(d["labels"]), d["grids"], d["positions"]) for d in items]


def load_dataset(cfg):
    path = dataset_path(cfg)
    if not os.path.exists(path):
        raise corpus.DataError(f"no prepared dataset at {path}; run 'prepare' first")
    with open(path, "rb") as fh:
        data = pickle.load(fh)
    for split in ("train", "test", "valid"):
        if data.get(split) is not None:
            data[split] = _bags_from_plain(data[split])
    data["schema"] = corpus.RelationSchema(data["relations"])
    data["vocab"] = corpus.Vocabulary(data["words"][2:], data["min_count"])
    return data


def cmd_prepare(cfg, out=None):
    out = out or sys.stdout
    _require(cfg, "schema", "train", "test")
    schema = corpus.RelationSchema.load(cfg["schema"])
    max_len = _num(cfg, "max_len", int)
    posf = corpus.PositionFeaturizer(_num(cfg, "pos_clip", int))
    splits = {}
    for split in ("train", "test", "valid"):
        if not cfg.get(split):
            continue
        mentions = corpus.load_mentions(cfg[split], schema, max_len)
        if not mentions:
            raise corpus.DataError("no mentions", cfg[split])
        splits[split] = (mentions, corpus.build_bags(mentions, schema.nr))
    vocab = corpus.Vocabulary.build(splits["train"][0], _num(cfg, "min_count", int))
    V = None
    if cfg.get("embeddings"):
        V = corpus.load_embeddings(cfg["embeddings"], vocab, _num(cfg, "d_word", int), Rng(_num(cfg, "seed", int)))

    data = {"relations": schema.names, "words": vocab.id2word, "min_count": vocab.min_count,
            "pos_clip": posf.clip, "max_len": max_len, "V": V, "valid": None}
    for split, (mentions, bags) in splits.items():
        data[split] = _bags_to_plain(corpus.encode_bags(bags, vocab, posf))
        print(corpus.statistics_report(split, mentions, bags, schema), file=out)
        print(file=out)
    print(f"vocabulary  {len(vocab)} (min_count {vocab.min_count})", file=out)
    os.makedirs(cfg["out"], exist_ok=True)
    with open(dataset_path(cfg), "wb") as fh:
        pickle.dump(data, fh, protocol=4)
    return EXIT_OK


def model_shape(cfg, data):
    return ModelShape(vocab_size=len(data["vocab"]), n_relations=len(data["schema"]), d_word=_num(cfg, "d_word", int),
                      d_pos=_num(cfg, "d_pos", int), n_kernels=_num(cfg, "kernels", int),
                      window=_num(cfg, "window", int), pos_clip=data["pos_clip"])


def _validator(data, variant):
    bags = data.get("valid")
    if not bags:
        return None
    gold = evaluator.gold_facts(bags, data["schema"].nr)
    if not gold:
        return None

    def validate(model):
        curve = evaluator.pr_curve(evaluator.score_bags(bags, model, variant), gold)
        return evaluator.max_f_measure(curve)

    return validate


def _fmt(x):
    return "" if x is None else f"{x:.17g}"


def cmd_train(cfg, out=None):
    out = out or sys.stdout
    if cfg.get("epochs") is None:
        raise UsageError("--epochs is required for train")
    tcfg = train_config(cfg)
    data = load_dataset(cfg)
    shape = model_shape(cfg, data)
    model = init_params(shape, tcfg.seed, data["V"], nr=data["schema"].nr)
    vocab_hash, schema_hash = data["vocab"].digest(), data["schema"].digest()
    snapshot = {k: cfg[k] for k in RUN_KEYS}
    os.makedirs(cfg["checkpoint_dir"], exist_ok=True)
    validate = _validator(data, tcfg.loss.variant)

    def save(name):
        ckpt.save_checkpoint(os.path.join(cfg["checkpoint_dir"], name), model, vocab_hash, schema_hash,
                             snapshot, shape.to_dict())

    log_path = os.path.join(cfg["out"], "epochs.csv")
    # wall time varies run to run, so it goes to timing.log and the CSV column stays empty
    with open(log_path, "w", encoding="utf-8") as log, \
            open(os.path.join(cfg["out"], "timing.log"), "w", encoding="utf-8") as timing:
        log.write("epoch,mean_loss,pos_term,neg_term,reg_term,wall_seconds,val_F\n")
        for epoch in range(1, tcfg.epochs + 1):
            rep = train_epoch(data["train"], model, tcfg, epoch, validate)
            timing.write(f"# epoch {epoch} wall_seconds={rep.wall_seconds:.3f}\n")
            log.write(",".join([str(epoch), _fmt(rep.mean_loss), _fmt(rep.pos_term), _fmt(rep.neg_term),
                                _fmt(rep.reg_term), "", _fmt(rep.val_f)]) + "\n")
            log.flush()
            save(f"epoch_{epoch:03d}.ckpt")
            val = "" if rep.val_f is None else f"  val_F {rep.val_f:.4f}"
            print(f"epoch {epoch}  loss {rep.mean_loss:.6f}{val}", file=out)
    save("model.ckpt")
    print(f"wrote {os.path.join(cfg['checkpoint_dir'], 'model.ckpt')} and {log_path}", file=out)
    return EXIT_OK


def cmd_eval(cfg, checkpoint_path=None, out=None):
    out = out or sys.stdout
    data = load_dataset(cfg)
    path = checkpoint_path or os.path.join(cfg["checkpoint_dir"], "model.ckpt")
    if not os.path.exists(path):
        raise corpus.DataError(f"checkpoint not found: {path}")
    model, header = ckpt.load_checkpoint(path, data["vocab"].digest(), data["schema"].digest())
    variant = header.get("config", {}).get("variant", cfg["variant"])
    bags = data["test"]
    records = evaluator.score_bags(bags, model, variant)
    gold = evaluator.gold_facts(bags, data["schema"].nr)
    curve = evaluator.pr_curve(records, gold)
    os.makedirs(cfg["out"], exist_ok=True)
    evaluator.write_pr_csv(os.path.join(cfg["out"], "pr.csv"), curve)
    levels = evaluator.PN_LEVELS
    if len(records) < max(levels):
        raise corpus.DataError(f"only {len(records)} scored candidates; P@{max(levels)} needs more")
    values, mean = evaluator.precision_at_levels(records, gold, levels)
    evaluator.write_pn_txt(os.path.join(cfg["out"], "pn.txt"), values, mean, levels)
    print(" ".join(f"P@{n}={v:.1f}" for n, v in zip(levels, values)) + f" mean={mean:.1f}", file=out)
    print(f"max F {evaluator.max_f_measure(curve):.4f} over {len(records)} candidates, {len(gold)} gold facts",
          file=out)
    return EXIT_OK


def cmd_gradcheck(cfg, out=None):
    out = out or sys.stdout
    trials = _num(cfg, "trials", int)
    seed = _num(cfg, "seed", int)
    ok = True
    t0 = time.perf_counter()
    for variant in VARIANTS:
        results = [grad_check(variant, reg, trials, seed) for reg in (False, True)]
        passed = all(r.passed for r in results)
        ok &= passed
        detail = ", ".join(f"reg {'on' if r.regularize else 'off'} max_rel_err {r.max_rel_error:.2e}"
                           + ("" if r.passed else f" in {r.worst_group}") for r in results)
        print(f"{variant.upper():9s} {'PASS' if passed else 'FAIL'}  trials={trials}  {detail}", file=out)
    print(f"# grad-check took {time.perf_counter() - t0:.1f}s", file=out)
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_synth(args, out=None):
    out = out or sys.stdout
    spec = synthetic.SyntheticSpec() if args.seed is None else synthetic.SyntheticSpec(seed=args.seed)
    manifest = synthetic.generate(args.out, spec)
    for split in ("train", "test"):
        c = manifest[split]
        print(f"{split}: {c['mentions']} mentions, {c['bags']} bags, {c['relation_facts']} facts, "
              f"{c['nr_percent']:.2f}% NR", file=out)
    return EXIT_OK


def build_parser():
    p = _Parser(prog="pcnnrank", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config")
        sp.add_argument("--variant", choices=VARIANTS)
        sp.add_argument("--lambda", dest="lam", type=float)
        sp.add_argument("--gamma", type=float)
        sp.add_argument("--regularize", choices=("on", "off"))
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--batch", type=int)
        sp.add_argument("--lr", type=float)
        sp.add_argument("--out")
        sp.add_argument("--trials", type=int)
        return sp

    common(sub.add_parser("prepare", help="ingest mention files and cache the dataset"))
    common(sub.add_parser("train", help="train and write checkpoints plus the epoch log"))
    common(sub.add_parser("eval", help="held-out evaluation: pr.csv and pn.txt")).add_argument("--checkpoint")
    common(sub.add_parser("grad-check", help="analytic vs finite-difference gradients"))
    sp = sub.add_parser("synth", help="write the synthetic toy corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return cmd_synth(args)
        cfg = resolve(args)
        if args.command == "prepare":
            return cmd_prepare(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint)
        return cmd_gradcheck(cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (corpus.DataError, ckpt.CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
