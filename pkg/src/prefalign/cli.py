"""Command-line entry point.

Subcommands: embed-pseudo, train, eval, export, inspect. Values resolve
as flags > config file > defaults, and every training run persists its
fully resolved configuration for reproducibility.

Exit codes: 0 ok, 2 config error, 3 data error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import content as C
from . import data as D
from .errors import ConfigError, DataError
from .evaluation import evaluate, evaluate_unaligned
from .model import FULL_SCALE, TowerConfig, TwinTowerModel
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .sampling import SamplingConfig
from .training import TrainConfig, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4

_MODEL_KEYS = ("d_model", "n_layers", "n_heads", "d_out", "max_len", "item_tower_variant")
_SAMPLING_KEYS = ("max_hist", "max_tar", "n_hist", "n_tar", "alpha", "beta", "weighted")
_TRAIN_KEYS = ("epochs", "batch_size", "tau", "lr", "weight_decay", "warmup_steps")


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    return cfg


def _merge(section_name: str, section: dict, args, keys, problems: list) -> dict:
    """Flags override config-file keys; unset flags fall through. Unknown
    keys are collected (not raised) so every problem reports at once."""
    out = dict(section)
    for key in keys:
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
    for key in out:
        if key not in keys:
            problems.append(f"unknown {section_name} key {key!r}")
    return out


def _provider_from_args(args, catalog=None):
    source = args.embedding_source
    if source == "file":
        if not args.embeddings:
            raise ConfigError("--embeddings is required with --embedding-source file")
        return C.store_open(args.embeddings)
    if source == "pseudo":
        if catalog is None:
            raise ConfigError("--catalog is required with --embedding-source pseudo")
        return C.PseudoProvider(catalog, args.content_dim, _template_for(args))
    raise ConfigError(f"unknown embedding source {source!r}")


def _template_for(args) -> C.PromptTemplate:
    fields = C.SIX_FIELDS if getattr(args, "six_fields", False) else C.THREE_FIELDS
    return C.PromptTemplate(fields)


def cmd_embed_pseudo(args) -> int:
    catalog = D.load_catalog(args.catalog)
    template = _template_for(args)
    records = ((it.item_id, C.pseudo_embed(template.render(it), args.dim)) for it in catalog)
    C.store_write(args.out, args.dim, records)
    print(f"wrote {len(catalog)} embeddings (dim {args.dim}) to {args.out}")
    return EXIT_OK


def _resolve_run_config(args) -> dict:
    file_cfg = _load_config_file(args.config)
    problems: list[str] = []
    model_cfg = _merge("model", file_cfg.get("model", {}), args, _MODEL_KEYS, problems)
    if args.preset == "full":
        for key, value in FULL_SCALE.items():
            model_cfg.setdefault(key, value)
    sampling_cfg = _merge("sampling", file_cfg.get("sampling", {}), args, _SAMPLING_KEYS, problems)
    train_cfg = _merge("train", file_cfg.get("train", {}), args, _TRAIN_KEYS, problems)
    if problems:
        raise ConfigError("; ".join(problems))
    seed = args.seed if args.seed is not None else file_cfg.get("seed", 0)
    return {"model": model_cfg, "sampling": sampling_cfg, "train": train_cfg, "seed": seed}


def cmd_train(args) -> int:
    run_cfg = _resolve_run_config(args)
    catalog = D.load_catalog(args.catalog) if args.catalog else None
    log = D.load_interactions(args.interactions, args.split_ts)
    if not log.sequences:
        raise DataError("no trainable sequences after the history/target split")

    if args.embedding_source == "id":
        if catalog is None:
            raise ConfigError("--catalog is required with --embedding-source id")
        provider = None
        vocab = tuple(sorted(catalog.ids()))
        tower_cfg = TowerConfig(d_content=args.content_dim, id_vocab=vocab, **run_cfg["model"])
    else:
        provider = _provider_from_args(args, catalog)
        tower_cfg = TowerConfig(d_content=provider.dim, **run_cfg["model"])
    if tower_cfg.item_tower_variant == "c" and tower_cfg.d_out != tower_cfg.d_content:
        raise ConfigError("variant 'c' requires d_out == content dim; set --d-out accordingly")

    sampling = SamplingConfig(**run_cfg["sampling"])
    train_conf = TrainConfig(**run_cfg["train"])
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "run_config.json", "w", encoding="utf-8") as f:
        json.dump(
            {**run_cfg, "interactions": str(args.interactions), "split_ts": args.split_ts,
             "embedding_source": args.embedding_source,
             "embeddings": args.embeddings, "catalog": args.catalog},
            f, indent=2, sort_keys=True,
        )

    model = TwinTowerModel(tower_cfg, seed=run_cfg["seed"])
    epochs_log = train(model, log.sequences, provider, sampling, train_conf,
                       seed=run_cfg["seed"], log_path=out_dir / "metrics.jsonl")
    checkpoint = out_dir / "model.lnck"
    save_checkpoint(
        checkpoint, model.params,
        config={"tower": tower_cfg.to_dict(), "sampling": sampling.to_dict(),
                "train": train_conf.to_dict(), "seed": run_cfg["seed"]},
    )
    final = epochs_log[-1]["loss"] if epochs_log else None
    print(f"trained {train_conf.epochs} epochs on {len(log.sequences)} users "
          f"(skipped {sum(log.skipped.values())}); final loss {final}; checkpoint {checkpoint}")
    return EXIT_OK


def _load_model(checkpoint_path) -> tuple[TwinTowerModel, dict]:
    config, params = load_checkpoint(checkpoint_path)
    tower_cfg = TowerConfig.from_dict(config["tower"])
    model = TwinTowerModel(tower_cfg, seed=config.get("seed", 0))
    model.load_state_dict(params)
    return model, config


def cmd_eval(args) -> int:
    log = D.load_interactions(args.interactions, args.split_ts)
    ks = [int(k) for k in args.k.split(",")]
    catalog = D.load_catalog(args.catalog) if args.catalog else None
    per_user = [] if args.per_user_ranks else None
    if args.baseline == "unaligned":
        provider = _provider_from_args(args, catalog)
        gallery = catalog.ids() if catalog else provider.item_ids()
        report = evaluate_unaligned(log.sequences, provider, gallery, args.protocol, ks)
    else:
        model, _ = _load_model(args.checkpoint)
        if model.id_table is not None:
            provider = None
            gallery = list(model.config.id_vocab)
        else:
            provider = _provider_from_args(args, catalog)
            gallery = catalog.ids() if catalog else provider.item_ids()
        report = evaluate(model, log.sequences, provider, gallery, args.protocol, ks,
                          per_user_out=per_user)
    if per_user is not None:
        with open(args.per_user_ranks, "w", encoding="utf-8") as f:
            f.write("user_id,target_item_id,rank\n")
            for user_id, target, rank in per_user:
                f.write(f"{user_id},{target},{rank}\n")
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_export(args) -> int:
    model, _ = _load_model(args.checkpoint)
    catalog = D.load_catalog(args.catalog) if args.catalog else None
    provider = None
    if model.id_table is None:
        provider = _provider_from_args(args, catalog)

    if args.what == "items":
        if catalog is not None:
            ids = catalog.ids()
        elif provider is not None:
            ids = provider.item_ids()
        else:
            ids = list(model.config.id_vocab)
        matrix = model.embed_gallery(provider, ids)
        C.store_write(args.out, model.config.d_out, zip(ids, matrix))
        print(f"wrote {len(ids)} item embeddings (dim {model.config.d_out}) to {args.out}")
        return EXIT_OK

    log = D.load_interactions(args.interactions, args.split_ts)
    records = []
    for seq in log.sequences:
        records.append((seq.user_id, model.embed_user(seq.history_items(), provider)))
    C.store_write(args.out, model.config.d_out, records)
    print(f"wrote {len(records)} user embeddings (dim {model.config.d_out}) to {args.out}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    with open(args.path, "rb") as f:
        magic = f.read(4)
    if magic == C.MAGIC:
        provider = C.store_open(args.path)
        print(f"magic: LNEB\nversion: {C.VERSION}\ndim: {provider.dim}\ncount: {len(provider.item_ids())}")
        return EXIT_OK
    if magic == b"LNCK":
        config, params = load_checkpoint(args.path)
        print("magic: LNCK\nversion: 1")
        print(f"params: {len(params)}")
        print(f"config: {json.dumps(config, sort_keys=True)}")
        for name, arr in params.items():
            print(f"  {name}: {list(arr.shape)}")
        return EXIT_OK
    raise DataError(f"{args.path}: unrecognized magic {magic!r}")


def _add_embedding_source_args(p, for_train=False):
    p.add_argument("--embedding-source", choices=["file", "pseudo"] + (["id"] if for_train else []),
                   default="file", help="where item content embeddings come from")
    p.add_argument("--embeddings", help="LNEB embedding file (source=file)")
    p.add_argument("--content-dim", type=int, default=64,
                   help="embedding dim for pseudo/id sources")
    p.add_argument("--catalog", help="item catalog TSV")
    p.add_argument("--six-fields", action="store_true",
                   help="prompt template with price/keywords/attributes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prefalign",
                                     description="Twin-tower recommendation from frozen content embeddings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed-pseudo", help="write deterministic pseudo-embeddings for a catalog")
    p.add_argument("--catalog", required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--six-fields", action="store_true")
    p.set_defaults(func=cmd_embed_pseudo)

    p = sub.add_parser("train", help="train the twin towers")
    p.add_argument("--interactions", required=True)
    p.add_argument("--split-ts", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--preset", choices=["desk", "full"], default="desk")
    p.add_argument("--seed", type=int)
    for key in ("d_model", "n_layers", "n_heads", "d_out", "max_len"):
        p.add_argument(f"--{key.replace('_', '-')}", type=int)
    p.add_argument("--item-tower-variant", choices=["a", "b", "c"])
    for key in ("max_hist", "max_tar", "n_hist", "n_tar", "epochs", "batch_size", "warmup_steps"):
        p.add_argument(f"--{key.replace('_', '-')}", type=int)
    for key in ("alpha", "beta", "tau", "lr", "weight_decay"):
        p.add_argument(f"--{key.replace('_', '-')}", type=float)
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--weighted", dest="weighted", action="store_const", const=True)
    grp.add_argument("--random-sample", dest="weighted", action="store_const", const=False,
                     help="uniform stage-2 sampling instead of recency weighting")
    p.set_defaults(weighted=None)
    _add_embedding_source_args(p, for_train=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--interactions", required=True)
    p.add_argument("--split-ts", type=int, required=True)
    p.add_argument("--protocol", choices=["leave_one_out", "multi_target"], default="leave_one_out")
    p.add_argument("--k", default="10", help="comma-separated cutoffs")
    p.add_argument("--baseline", choices=["unaligned"],
                   help="evaluate a model-free baseline instead of a checkpoint")
    p.add_argument("--out", help="write the report JSON here as well")
    p.add_argument("--per-user-ranks", help="CSV of per-user target ranks (leave_one_out only)")
    _add_embedding_source_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="export user or item embeddings as LNEB")
    p.add_argument("what", choices=["items", "users"])
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--interactions", help="required for users")
    p.add_argument("--split-ts", type=int, default=None)
    p.add_argument("--out", required=True)
    _add_embedding_source_args(p)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("inspect", help="print the header of an LNEB/LNCK file")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "eval" and not args.baseline and not args.checkpoint:
        print("error: --checkpoint is required unless --baseline is given", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "export" and args.what == "users" and (
            not args.interactions or args.split_ts is None):
        print("error: export users needs --interactions and --split-ts", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
