"""Command-line wrapper around the extractor."""

import argparse
import sys

from .catalog import CatalogSchemaError
from .extract import ExtractorConfig, ModelLoadError, extract


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="content-extractor",
        description="Embed catalog items with a frozen causal LM and write an LNEB file",
    )
    p.add_argument("--model", required=True, help="HF model name or local path")
    p.add_argument("--catalog", required=True, help="item catalog TSV")
    p.add_argument("--out", required=True, help="output LNEB path")
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--max-tokens", type=int, default=128, help="prompt truncation length")
    p.add_argument("--device", default="cpu", help="torch device hint, e.g. cpu or cuda")
    p.add_argument("--six-fields", action="store_true",
                   help="prompt template with price/keywords/attributes")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = ExtractorConfig(
        model=args.model, catalog=args.catalog, output=args.out,
        batch_size=args.batch_size, max_tokens=args.max_tokens,
        device=args.device, six_fields=args.six_fields,
    )
    try:
        count = extract(config)
    except (CatalogSchemaError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except ModelLoadError as e:
        print(f"model error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {e}", file=sys.stderr)
        return 4
    print(f"wrote {count} embeddings to {config.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
