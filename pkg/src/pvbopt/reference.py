"""Embedded fingerprints of the published input tables.

The bundled CSVs were transcribed by hand. A user may point the CLI at their
own copies; these digests tell them whether their copy still carries the
published numbers. Digests are taken over a canonical rendering (numbers
formatted to four decimals) so that cosmetic edits such as trailing zeros do
not trip the check.
"""
from __future__ import annotations

import csv
import hashlib
from pathlib import Path

# table -> (number of leading key columns, trailing text columns, sha256)
DIGESTS = {
    "injection_tariff": (2, 0, "2c8fe8ea980fed723e6a6ce84b698292a83189fa666eee4e2a0fa2e62424dca9"),
    "retail_tariff": (1, 0, "10244b89049f62a3b2b9f5341540dff83a667e03d7fe8bc9bc466bcfe7d966c3"),
    "costs": (4, 1, "4a5744417174011b9136476ac65f3c862e4ec3a8a56c7e83b56856608cfe405b"),
}

# spot values that are easy to eyeball against the printed tables
SPOT_VALUES = {
    "injection_tariff": {("ZH", "2020"): 6.6, ("OW", "2025"): 5.9, ("ZG", "2025"): 6.6, ("BS", "2025"): 7.0},
    "retail_tariff": {("ZH", "L1"): 20.5, ("BE", "L1"): 27.7},
}


def canonical_digest(path: str | Path, key_cols: int, tail_cols: int = 0) -> str:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    lines = [",".join(rows[0])]
    for lineno, r in enumerate(rows[1:], start=2):
        end = len(r) - tail_cols
        try:
            vals = [f"{float(v):.4f}" for v in r[key_cols:end]]
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric value") from None
        lines.append(",".join(r[:key_cols] + vals + r[end:]))
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()


def _spot_lookup(path: Path, table: str) -> dict[tuple[str, str], float]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    key_col = "canton"
    out = {}
    for (region, col), _ in SPOT_VALUES.get(table, {}).items():
        for row in rows:
            if row.get(key_col, "").strip().upper() == region and col in row:
                out[(region, col)] = float(row[col])
    return out


def check_table(table: str, path: str | Path) -> list[str]:
    """Differences between ``path`` and the published table; empty when they agree."""
    if table not in DIGESTS:
        raise KeyError(table)
    path = Path(path)
    key_cols, tail, expected = DIGESTS[table]
    issues = []
    try:
        digest = canonical_digest(path, key_cols, tail)
    except ValueError as exc:
        return [str(exc)]
    if digest != expected:
        issues.append(f"{path}: contents differ from the published {table} table (checksum mismatch)")
    found = _spot_lookup(path, table)
    for key, want in SPOT_VALUES.get(table, {}).items():
        got = found.get(key)
        if got is None:
            issues.append(f"{path}: no entry for {key[0]} {key[1]}")
        elif abs(got - want) > 1e-9:
            issues.append(f"{path}: {key[0]} {key[1]} = {got}, published value is {want}")
    return issues
