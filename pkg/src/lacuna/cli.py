"""Command-line front door: pipeline, train, eval, serve, restore."""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

from .beam import BeamConfig
from .corpus import PipelineConfig, build_corpus, derive_alphabet, load_corpus
from .vocab import CharAlphabet, build_char_alphabet, build_word_vocab


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help()
        return 2
    return args.func(args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lacuna",
        description="Restoration toolkit for damaged inscription corpora",
    )
    sub = parser.add_subparsers(dest="command")

    pipeline = sub.add_parser("pipeline", help="corpus normalization")
    pipe_sub = pipeline.add_subparsers(dest="pipeline_command")

    build = pipe_sub.add_parser("build", help="normalize a raw corpus into split files")
    build.add_argument("--raw", required=True, type=Path, help="directory of id<TAB>text files")
    build.add_argument("--out", required=True, type=Path, help="output corpus directory")
    build.add_argument("--alphabet", required=True, type=Path, help="alphabet file (see 'pipeline alphabet')")
    build.add_argument("--min-length", type=int, default=100)
    build.set_defaults(func=cmd_pipeline_build)

    alpha = pipe_sub.add_parser("alphabet", help="derive an alphabet file from raw input")
    alpha.add_argument("--raw", required=True, type=Path)
    alpha.add_argument("--out", required=True, type=Path)
    alpha.add_argument("--min-count", type=int, default=1)
    alpha.set_defaults(func=cmd_pipeline_alphabet)

    train = sub.add_parser("train", help="train a restoration model or the LM baseline")
    train.add_argument("--data", required=True, type=Path, help="corpus directory (from 'pipeline build')")
    train.add_argument("--out", required=True, type=Path, help="checkpoint output (.ckpt file or directory)")
    train.add_argument("--arch", choices=["seq2seq", "lm"], default="seq2seq")
    train.add_argument("--variant", choices=["uni", "bi", "bi-word"], default="bi-word")
    train.add_argument("--steps", type=int, default=1000)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--batch-size", type=int, default=32)
    train.add_argument("--lr", type=float, default=None, help="default: 1e-3 seq2seq, 2e-3 lm")
    train.add_argument("--clip", type=float, default=5.0)
    train.add_argument("--scheduled-p", type=float, default=0.5)
    train.add_argument("--dropout", type=float, default=0.2)
    train.add_argument("--ckpt-every", type=int, default=200)
    train.add_argument("--hidden", type=int, default=None, help="default: 512 seq2seq, 1024 lm")
    train.add_argument("--char-embed", type=int, default=None, help="default: 128 seq2seq, embedding = hidden for lm")
    train.add_argument("--word-embed", type=int, default=128)
    train.add_argument("--vocab-cap", type=int, default=100_000)
    train.add_argument("--lm-window", type=int, default=150)
    train.add_argument("--lm-decay", type=float, default=0.95)
    train.add_argument("--val-max-records", type=int, default=64)
    train.add_argument("--val-beam-width", type=int, default=10)
    train.add_argument("--alphabet", type=Path, default=None,
                       help="alphabet file; default: <data>/alphabet.tsv or derived from the train split")
    train.set_defaults(func=cmd_train)

    evaluate = sub.add_parser("eval", help="evaluate a checkpoint on a corpus split")
    evaluate.add_argument("--model", required=True, type=Path)
    evaluate.add_argument("--data", required=True, type=Path)
    evaluate.add_argument("--arch", choices=["seq2seq", "lm"], default=None,
                          help="expected architecture; checked against the checkpoint")
    evaluate.add_argument("--split", choices=["train", "valid", "test"], default="test")
    evaluate.add_argument("--sweep", type=str, default=None,
                          help="comma-separated context lengths, e.g. 20,50,100,200,500,1000")
    evaluate.add_argument("--beam", type=int, default=100)
    evaluate.add_argument("--top", type=int, default=20)
    evaluate.add_argument("--seed", type=int, default=0)
    evaluate.add_argument("--max-records", type=int, default=None)
    evaluate.add_argument("--out", type=Path, default=None, help="write the JSON report here")
    evaluate.set_defaults(func=cmd_eval)

    serve = sub.add_parser("serve", help="run the HTTP restoration service")
    serve.add_argument("--model", required=True, type=Path)
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--data", required=True, type=Path, help="session storage directory")
    serve.add_argument("--ui", type=Path, default=None, help="static workbench assets (default: ./frontend/dist)")
    serve.set_defaults(func=cmd_serve)

    restore = sub.add_parser("restore", help="one-shot restoration of a '?' gap")
    restore.add_argument("--model", required=True, type=Path)
    restore.add_argument("--text", required=True, help="text with the gap marked by '?' characters")
    restore.add_argument("--top", type=int, default=20)
    restore.add_argument("--beam", type=int, default=100)
    restore.set_defaults(func=cmd_restore)

    return parser


def cmd_pipeline_alphabet(args) -> int:
    alphabet = derive_alphabet(args.raw, min_count=args.min_count)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    alphabet.save(args.out)
    print(f"wrote {len(alphabet)} symbols to {args.out}")
    return 0


def cmd_pipeline_build(args) -> int:
    alphabet = CharAlphabet.load(args.alphabet)
    config = PipelineConfig(min_length=args.min_length)
    manifest, report = build_corpus(args.raw, args.out, alphabet, config)
    shutil.copyfile(args.alphabet, args.out / "alphabet.tsv")
    print(json.dumps({"manifest": manifest.to_dict(), "report": report.to_dict()},
                     indent=2, ensure_ascii=False))
    return 0


def _load_corpus_and_alphabet(args):
    corpus = load_corpus(args.data)
    alphabet_path = args.alphabet or (args.data / "alphabet.tsv")
    if alphabet_path.exists():
        alphabet = CharAlphabet.load(alphabet_path)
    else:
        texts = [r.text for split in corpus.values() for r in split]
        alphabet = build_char_alphabet(texts)
    return corpus, alphabet


def cmd_train(args) -> int:
    corpus, alphabet = _load_corpus_and_alphabet(args)
    if args.out.suffix == ".ckpt":
        out_dir, final_ckpt = args.out.parent, args.out
    else:
        out_dir, final_ckpt = args.out, None
    out_dir.mkdir(parents=True, exist_ok=True)

    log = lambda line: print(json.dumps(line), file=sys.stderr)

    if args.arch == "lm":
        from .lm import LmConfig, LmTrainConfig, train_lm

        hidden = args.hidden or 1024
        config = LmConfig(
            alphabet_size=len(alphabet),
            hidden=hidden,
            char_embed=args.char_embed or hidden,
            dropout=args.dropout,
        )
        tconf = LmTrainConfig(
            batch_size=args.batch_size, window=args.lm_window,
            lr=args.lr or 2e-3, decay=args.lm_decay, clip=args.clip,
            dropout=args.dropout, max_steps=args.steps,
            ckpt_every=args.ckpt_every, seed=args.seed,
        )
        result = train_lm(corpus, config, tconf, alphabet, out_dir, log_fn=log)
        best = result.best_path
    else:
        from .model import ModelConfig
        from .trainer import TrainConfig, fit

        vocab = None
        if args.variant == "bi-word":
            vocab = build_word_vocab((r.text for r in corpus["train"]), cap=args.vocab_cap)
            vocab.save(out_dir / "vocab.tsv")
        config = ModelConfig(
            variant=args.variant,
            alphabet_size=len(alphabet),
            word_vocab_size=len(vocab) if vocab else None,
            hidden=args.hidden or 512,
            char_embed=args.char_embed or 128,
            word_embed=args.word_embed,
            dropout=args.dropout,
        )
        tconf = TrainConfig(
            batch_size=args.batch_size, lr=args.lr or 1e-3, clip=args.clip,
            scheduled_p=args.scheduled_p, dropout=args.dropout,
            max_steps=args.steps, ckpt_every=args.ckpt_every, seed=args.seed,
            val_max_records=args.val_max_records, val_beam_width=args.val_beam_width,
        )
        result = fit(corpus, config, tconf, alphabet, vocab, out_dir, log_fn=log)
        best = result.best_path

    if final_ckpt is not None and best is not None and Path(best) != final_ckpt:
        shutil.copyfile(best, final_ckpt)
        best = final_ckpt
    print(f"best checkpoint: {best}")
    return 0


def cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint
    from .evaluator import context_sweep, evaluate_with_restorer
    from .model import ModelConfig
    from .restorers import restorer_from_checkpoint

    ckpt = load_checkpoint(args.model)
    if args.arch is not None and args.arch != ckpt.kind:
        print(f"checkpoint {args.model} is {ckpt.kind!r}, not {args.arch!r}", file=sys.stderr)
        return 2
    restorer = restorer_from_checkpoint(ckpt)
    corpus = load_corpus(args.data)
    records = corpus[args.split]
    beam = BeamConfig(width=args.beam, top_k=min(args.top, args.beam))

    report = {"model": str(args.model), "kind": ckpt.kind, "split": args.split}
    result = evaluate_with_restorer(records, restorer, beam=beam, seed=args.seed,
                                    max_records=args.max_records)
    report["cer"] = result.cer
    report["top20"] = result.top20
    report["examples"] = result.examples

    if args.sweep:
        if ckpt.kind != "seq2seq":
            print("context sweep requires a seq2seq checkpoint", file=sys.stderr)
            return 2
        lengths = [int(x) for x in args.sweep.split(",")]
        points = context_sweep(
            records, restorer.params, restorer.config, restorer.alphabet, restorer.vocab,
            lengths=lengths, beam=beam, seed=args.seed, max_records=args.max_records,
        )
        report["sweep"] = [vars(p) for p in points]
        print("length\ttop20\tcer")
        for p in points:
            print(f"{p.length}\t{p.top20:.4f}\t{p.cer:.4f}")

    payload = json.dumps(report, indent=2, ensure_ascii=False)
    print(payload)
    if args.out:
        args.out.write_text(payload + "\n", encoding="utf-8")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .restorers import load_restorer
    from .service import create_app

    restorer = load_restorer(args.model)
    ui_dir = args.ui if args.ui is not None else Path("frontend/dist")
    app = create_app(
        restorer, args.data, model_id=str(args.model),
        ui_dir=ui_dir if ui_dir.is_dir() else None,
    )
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def cmd_restore(args) -> int:
    from .restorers import load_restorer

    if "?" not in args.text:
        print("text has no '?' positions; mark the gap with '?' characters", file=sys.stderr)
        return 2
    restorer = load_restorer(args.model)
    beam = BeamConfig(width=args.beam, top_k=min(args.top, args.beam))
    hypotheses = restorer.propose(args.text, beam)
    for rank, h in enumerate(hypotheses, start=1):
        print(f"{rank}\t{h.log_prob:.4f}\t{h.text}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
