"""Item catalogs and interaction logs.

Catalogs are UTF-8 TSV: item_id, title, category, brand, extras_json
(a JSON object of string -> string, possibly {}). Interactions are TSV
rows of user_id, item_id, timestamp, one event per line in any order;
the loader groups by user and stable-sorts by timestamp, so equal
timestamps keep file order.
"""

from __future__ import annotations

import json
from bisect import bisect_left
from collections import Counter
from dataclasses import dataclass, field

from .errors import DataError, DuplicateIdError, ParseError, TooShortError

_U64_MAX = 2**64 - 1


@dataclass(frozen=True)
class Item:
    item_id: int
    title: str = ""
    category: str = ""
    brand: str = ""
    extras: tuple[tuple[str, str], ...] = ()

    def extras_dict(self) -> dict[str, str]:
        return dict(self.extras)


class ItemCatalog:
    def __init__(self, items):
        self.items: list[Item] = []
        self._by_id: dict[int, Item] = {}
        for item in items:
            if item.item_id in self._by_id:
                raise DuplicateIdError(item.item_id)
            self._by_id[item.item_id] = item
            self.items.append(item)

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __contains__(self, item_id):
        return item_id in self._by_id

    def get(self, item_id: int) -> Item:
        if item_id not in self._by_id:
            raise KeyError(f"item {item_id} not in catalog")
        return self._by_id[item_id]

    def ids(self) -> list[int]:
        return [it.item_id for it in self.items]


@dataclass(frozen=True)
class InteractionSequence:
    """One user's chronological events split at split_ts.

    Events strictly before split_ts form the history segment; events at or
    after split_ts form the target segment.
    """

    user_id: int
    events: tuple[tuple[int, int], ...]  # (item_id, timestamp)
    split_ts: int
    _split_idx: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ts = [t for _, t in self.events]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise DataError(f"user {self.user_id}: events not sorted by timestamp")
        object.__setattr__(self, "_split_idx", bisect_left(ts, self.split_ts))

    @property
    def history(self) -> tuple[tuple[int, int], ...]:
        return self.events[: self._split_idx]

    @property
    def target(self) -> tuple[tuple[int, int], ...]:
        return self.events[self._split_idx:]

    def history_items(self) -> list[int]:
        return [i for i, _ in self.history]

    def target_items(self) -> list[int]:
        return [i for i, _ in self.target]

    def item_ids(self) -> list[int]:
        return [i for i, _ in self.events]


@dataclass
class InteractionLog:
    sequences: list[InteractionSequence]
    skipped: Counter

    def __len__(self):
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)


def _parse_id(text: str, path, line_no, what: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise ParseError(path, line_no, f"bad {what} {text!r}") from None
    if not 0 <= value <= _U64_MAX:
        raise ParseError(path, line_no, f"{what} {value} out of unsigned 64-bit range")
    return value


def load_catalog(path) -> ItemCatalog:
    items = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t", 4)
            if len(cols) != 5:
                raise ParseError(path, line_no, f"expected 5 tab-separated columns, got {len(cols)}")
            item_id = _parse_id(cols[0], path, line_no, "item_id")
            if item_id in seen:
                raise DuplicateIdError(item_id)
            seen.add(item_id)
            try:
                extras = json.loads(cols[4])
            except json.JSONDecodeError as e:
                raise ParseError(path, line_no, f"bad extras JSON: {e}") from None
            if not isinstance(extras, dict) or not all(
                isinstance(k, str) and isinstance(v, str) for k, v in extras.items()
            ):
                raise ParseError(path, line_no, "extras must be a JSON object of string -> string")
            items.append(Item(item_id, cols[1], cols[2], cols[3], tuple(extras.items())))
    return ItemCatalog(items)


def save_catalog(path, catalog: ItemCatalog) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for it in catalog:
            extras = json.dumps(dict(it.extras), ensure_ascii=False)
            f.write(f"{it.item_id}\t{it.title}\t{it.category}\t{it.brand}\t{extras}\n")


def load_interactions(path, split_ts: int) -> InteractionLog:
    """Group events by user, sort stably by timestamp, split at split_ts.

    Users with an empty history or empty target segment are skipped and
    counted, not raised: real logs are dirty and training must proceed.
    """
    per_user: dict[int, list[tuple[int, int]]] = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise ParseError(path, line_no, f"expected 3 tab-separated columns, got {len(cols)}")
            user_id = _parse_id(cols[0], path, line_no, "user_id")
            item_id = _parse_id(cols[1], path, line_no, "item_id")
            try:
                ts = int(cols[2])
            except ValueError:
                raise ParseError(path, line_no, f"bad timestamp {cols[2]!r}") from None
            per_user.setdefault(user_id, []).append((item_id, ts))

    sequences = []
    skipped: Counter = Counter()
    for user_id, events in per_user.items():
        events.sort(key=lambda e: e[1])  # stable: ties keep file order
        seq = InteractionSequence(user_id, tuple(events), split_ts)
        if not seq.history:
            skipped["empty_history"] += 1
        elif not seq.target:
            skipped["empty_target"] += 1
        else:
            sequences.append(seq)
    return InteractionLog(sequences, skipped)


def save_interactions(path, sequences) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for seq in sequences:
            for item_id, ts in seq.events:
                f.write(f"{seq.user_id}\t{item_id}\t{ts}\n")


def split_leave_one_out(seq: InteractionSequence) -> tuple[list[int], int, int]:
    """(train item list, validation item, test item) from the event order."""
    if len(seq.events) < 3:
        raise TooShortError(seq.user_id, len(seq.events))
    items = seq.item_ids()
    return items[:-2], items[-2], items[-1]
