"""Catalog TSV reader, same schema as the consumer:
item_id <TAB> title <TAB> category <TAB> brand <TAB> extras_json
"""

import json


class CatalogSchemaError(ValueError):
    pass


def load_catalog(path) -> list[dict]:
    """Rows as dicts keyed by field name; extras merge into the dict."""
    rows = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t", 4)
            if len(cols) != 5:
                raise CatalogSchemaError(f"{path}:{line_no}: expected 5 columns, got {len(cols)}")
            try:
                item_id = int(cols[0])
            except ValueError:
                raise CatalogSchemaError(f"{path}:{line_no}: bad item_id {cols[0]!r}") from None
            if item_id in seen:
                raise CatalogSchemaError(f"{path}:{line_no}: duplicate item_id {item_id}")
            seen.add(item_id)
            try:
                extras = json.loads(cols[4])
            except json.JSONDecodeError as e:
                raise CatalogSchemaError(f"{path}:{line_no}: bad extras JSON: {e}") from None
            if not isinstance(extras, dict):
                raise CatalogSchemaError(f"{path}:{line_no}: extras must be a JSON object")
            row = {"item_id": item_id, "title": cols[1], "category": cols[2], "brand": cols[3]}
            for k, v in extras.items():
                row.setdefault(k, v)
            rows.append(row)
    return rows
