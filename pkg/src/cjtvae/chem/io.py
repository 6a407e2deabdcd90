"""Corpus and score-table file formats."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def read_corpus(path: str | Path) -> list[str]:
    """One SMILES per line; blank lines and '#' comments skipped."""
    lines = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        text = line.strip()
        if text and not text.startswith("#"):
            lines.append(text)
    return lines


def write_score_tsv(path: str | Path, rows: list[tuple[str, list[float]]],
                    property_names: list[str]) -> None:
    out = ["smiles\t" + "\t".join(property_names)]
    for smiles, scores in rows:
        out.append(smiles + "\t" + "\t".join(f"{s:.6f}" for s in scores))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def read_score_tsv(path: str | Path) -> tuple[list[str], list[str], np.ndarray]:
    """Returns (property names, smiles list, score matrix)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"empty score file {path}")
    header = lines[0].split("\t")
    if header[0] != "smiles":
        raise ValueError("score TSV must start with a 'smiles' header column")
    names = header[1:]
    smiles, scores = [], []
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != len(header):
            raise ValueError(f"bad TSV row: {line!r}")
        smiles.append(parts[0])
        scores.append([float(x) for x in parts[1:]])
    return names, smiles, np.asarray(scores, dtype=np.float64)
