"""Command-line entry point: ``tabseq <command> [options]``.

Machine-readable output goes to stdout or files under ``--out``; diagnostics go
to stderr.  Exit status is 0 on success, 2 on bad input or configuration.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import bench, synth
from .autograd import no_grad
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Corpus, dumps_corpus, load_corpus, load_features, parse_sentence, stats
from .embedder import build_vocabularies, load_glove
from .errors import ConfigError, InputError, TabSeqError, TrainingError
from .metrics import kfold
from .model import ModelConfig, count_parameters
from .schema import Sentence
from .sequence_encoder import attention_json
from .training import OptimConfig, build_model, evaluate, predict, probe, train

log = logging.getLogger("tabseq")

CONFIG_SECTIONS = ("model", "optim")


# -- run specification -------------------------------------------------------


def read_config(path):
    """``{"model": {...}, "optim": {...}}``; both sections optional, unknown keys rejected."""
    if not path:
        return {}, {}
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(obj) - set(CONFIG_SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown config sections {sorted(unknown)}")
    return dict(obj.get("model", {})), dict(obj.get("optim", {}))


def resolve_configs(args):
    model_obj, optim_obj = read_config(args.config)
    overrides = {
        "schedule": args.schedule,
        "directions": args.directions,
        "ner_head_source": args.ner_head,
        "layers": args.layers,
        "hidden": args.hidden,
    }
    model_obj.update({k: v for k, v in overrides.items() if v is not None})
    if args.no_entity_loss:
        model_obj["entity_loss"] = False
    if args.no_relation_loss:
        model_obj["relation_loss"] = False
    if args.no_interaction:
        model_obj["interaction"] = False
    if args.shared_layers:
        model_obj["shared_layers"] = True
    for key, val in (("epochs", args.epochs), ("batch_size", args.batch_size)):
        if val is not None:
            optim_obj[key] = val
    return ModelConfig.from_json(model_obj), OptimConfig.from_json(optim_obj)


def _features(path, corpus, kind):
    if not path or corpus is None:
        return None
    found, arrays = load_features(path, corpus)
    if found != kind:
        raise ConfigError(f"{path}: holds {found} features, expected {kind}")
    return arrays


def _feature_pair(args, corpus):
    return _features(args.features_emb, corpus, "embedding"), _features(args.features_attn, corpus, "attention")


def _feature_width(path):
    if not path:
        return 0
    with open(path, "rb") as fh:
        return int(json.loads(fh.readline().decode("utf-8"))["width"])


def _emit(obj, args, name):
    text = json.dumps(obj, indent=2)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, name), "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _find(corpus, sentence_id):
    for s in corpus:
        if s.id == sentence_id:
            return s
    raise InputError(f"no sentence with id {sentence_id!r}")


def _require(value, flag):
    if not value:
        raise ConfigError(f"{flag} is required for this command")
    return value


# -- commands ----------------------------------------------------------------


def cmd_train(args):
    out = _require(args.out, "--out")
    train_set = load_corpus(_require(args.train, "--train"), "train")
    dev_set = load_corpus(args.dev, "dev") if args.dev else None
    test_set = load_corpus(args.test, "test") if args.test else None
    config, optim = resolve_configs(args)
    ctx_w, attn_w = _feature_width(args.features_emb), _feature_width(args.features_attn)
    if ctx_w or attn_w:
        config = ModelConfig.from_json({**config.to_json(), "use_ctx_embeddings": ctx_w > 0, "ctx_dim": ctx_w,
                                        "use_attn_features": attn_w > 0, "attn_dim": attn_w})
    os.makedirs(out, exist_ok=True)

    words, chars = build_vocabularies(train_set.sentences)
    word_emb = None
    if args.glove:
        word_emb = load_glove(args.glove, words, rng=np.random.default_rng(args.seed), dim=config.token_emb_dim)

    train_feats = _feature_pair(args, train_set)
    dev_feats = _feature_pair(args, dev_set)
    test_feats = _feature_pair(args, test_set)

    reports = []
    with open(os.path.join(out, "train_log.jsonl"), "w", encoding="utf-8") as logfh:
        for run in range(args.runs):
            seed = args.seed + run
            model = build_model(config, train_set.sentences, seed=seed, word_emb=word_emb, words=words, chars=chars)
            log.info("run %d: %d parameters, %d training sentences", run, count_parameters(model), len(train_set))

            def on_log(rec, run=run):
                logfh.write(json.dumps({"run": run, **rec}) + "\n")
                if "dev" in rec or "step" not in rec:
                    log.info("run %d epoch %d loss %.3f", run, rec["epoch"], rec["loss"])

            result = train(config, optim, train_set.sentences, dev_set.sentences if dev_set else None,
                           seed=seed, model=model, train_feats=train_feats, dev_feats=dev_feats, on_log=on_log)
            suffix = "" if args.runs == 1 else f".run{run}"
            save_checkpoint(os.path.join(out, f"model{suffix}.ckpt"), result.model, optim, seed,
                            extra={"best_epoch": result.best_epoch, "best_dev": result.best_dev, "steps": result.steps})
            if test_set is not None:
                reports.append(evaluate(result.model, test_set.sentences, *test_feats))
    if reports:
        summary = reports[0] if len(reports) == 1 else {"runs": reports, "mean": kfold(reports)}
        _emit(summary, args, "test_report.json")
    return 0


def _load(args):
    return load_checkpoint(_require(args.checkpoint, "--checkpoint"))[0]


def cmd_eval(args):
    model = _load(args)
    test_set = load_corpus(_require(args.test, "--test"), "test")
    report = evaluate(model, test_set.sentences, *_feature_pair(args, test_set), schedule=args.schedule or "wavefront")
    _emit(report, args, "eval_report.json")
    return 0


def _read_raw(path):
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                obj = json.loads(line)
                sentences.append(parse_sentence({"tokens": obj.get("tokens"), "id": obj.get("id", str(lineno - 1))},
                                                lineno=lineno))
    return Corpus.from_sentences(sentences, "raw")


def cmd_predict(args):
    model = _load(args)
    corpus = _read_raw(_require(args.test, "--test"))
    preds = predict(model, corpus.sentences, *_feature_pair(args, corpus), schedule=args.schedule or "wavefront")
    out = [Sentence(s.tokens, ents, rels, s.id) for s, (ents, rels) in zip(corpus, preds)]
    text = dumps_corpus(out)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "predictions.jsonl"), "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_probe(args):
    model = _load(args)
    corpus = load_corpus(_require(args.test, "--test"))
    sent = _find(corpus, _require(args.id, "--id"))
    single = Corpus.from_sentences([sent])
    layers = probe(model, single.sentences, *_feature_pair(args, single))[0]
    obj = {"id": sent.id, "tokens": sent.tokens, "layers": []}
    for l, (ents, rels) in enumerate(layers, 1):
        obj["layers"].append({"layer": l, **{k: v for k, v in Sentence(sent.tokens, ents, rels).to_json().items()
                                             if k in ("entities", "relations")}})
    _emit(obj, args, "probe.json")
    return 0


def cmd_export_attention(args):
    model = _load(args)
    corpus = load_corpus(_require(args.test, "--test"))
    sent = _find(corpus, _require(args.id, "--id"))
    single = Corpus.from_sentences([sent])
    ctx, attn = _feature_pair(args, single)
    model.eval()
    with no_grad():
        out = model([sent.tokens], ctx, attn)
    obj = {"id": sent.id, "tokens": sent.tokens,
           **attention_json([w.data[0] for w in out.attention], len(sent.tokens))}
    _emit(obj, args, "attention.json")
    return 0


def cmd_stats(args):
    corpus = load_corpus(_require(args.train or args.test, "--train or --test"))
    _emit(stats(corpus), args, "stats.json")
    return 0


def cmd_synth(args):
    text = dumps_corpus(synth.generate(args.n, args.seed))
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench(args):
    sizes = [int(n) for n in args.sizes.split(",")]
    rows = bench.run_bench(sizes, hidden=args.bench_hidden, repeats=args.repeats, seed=args.seed)
    text = bench.to_csv(rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for n, r in bench.ratios(rows).items():
        log.info("N=%d naive/wavefront = %.2f", n, r)
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "probe": cmd_probe,
    "export-attention": cmd_export_attention,
    "stats": cmd_stats,
    "synth": cmd_synth,
    "bench": cmd_bench,
}


def build_parser():
    p = argparse.ArgumentParser(prog="tabseq", description="Joint entity and relation extraction with table-sequence encoders.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON file with optional 'model' and 'optim' sections")
    p.add_argument("--train")
    p.add_argument("--dev")
    p.add_argument("--test", help="labelled corpus (eval/probe/export-attention/stats) or raw tokens JSONL (predict)")
    p.add_argument("--features-emb", help="precomputed contextual word embeddings")
    p.add_argument("--features-attn", help="precomputed pairwise attention features")
    p.add_argument("--glove", help="GloVe-style text vectors for the word table")
    p.add_argument("--checkpoint")
    p.add_argument("--id", help="sentence id for probe / export-attention")
    p.add_argument("--out", help="output directory (train/eval/probe/...) or file (synth/bench)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--schedule", choices=["naive", "wavefront"])
    p.add_argument("--directions", choices=["uni", "bi-ac", "bi-bd", "quad"])
    p.add_argument("--ner-head", choices=["sequence", "diagonal"])
    p.add_argument("--no-entity-loss", action="store_true")
    p.add_argument("--no-relation-loss", action="store_true")
    p.add_argument("--no-interaction", action="store_true", help="plain dot-product attention, tables see S0 only")
    p.add_argument("--shared-layers", action="store_true")
    p.add_argument("--layers", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--runs", type=int, default=1, help="train this many seeds and average the test reports")
    p.add_argument("-n", type=int, default=50, help="sentences to generate (synth)")
    p.add_argument("--sizes", default="16,32,64,128", help="comma-separated N values (bench)")
    p.add_argument("--bench-hidden", type=int, default=32)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except TrainingError as exc:
        print(f"tabseq {args.command}: {exc}", file=sys.stderr)
        return 3
    except (TabSeqError, OSError, json.JSONDecodeError) as exc:
        print(f"tabseq {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
