"""Small file writers shared by the exporters (PGM, CSV with provenance header)."""

from __future__ import annotations

import csv
import hashlib
import io
from pathlib import Path

import numpy as np

FORMAT_VERSION = "0.1.0"


def fmt(x) -> str:
    """Floats with 9 significant digits; ints and bools verbatim."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".9g")


def header_line(seed=None, scenario_hash=None) -> str:
    parts = [f"dyngrid version={FORMAT_VERSION}"]
    if seed is not None:
        parts.append(f"seed={seed}")
    if scenario_hash is not None:
        parts.append(f"scenario={scenario_hash}")
    return "# " + " ".join(parts)


def text_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def write_csv(path, columns: list[str], rows, seed=None, scenario_hash=None):
    """CSV with one ``#`` provenance line, a header row and formatted rows."""
    buf = io.StringIO()
    buf.write(header_line(seed, scenario_hash) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def read_csv(path):
    """Returns (header_comment, columns, rows-as-lists-of-str)."""
    lines = Path(path).read_text().splitlines()
    comment = lines[0] if lines and lines[0].startswith("#") else None
    body = lines[1:] if comment else lines
    r = list(csv.reader(body))
    return comment, r[0], r[1:]


def probability_to_gray(p) -> np.ndarray:
    """Round-half-up of p * 255, clipped to 0..255."""
    return np.clip(np.floor(np.asarray(p, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def write_pgm(path, image: np.ndarray, comment: str | None = None):
    """Binary (P5) 8-bit PGM. Row 0 of ``image`` is the first row written."""
    img = np.asarray(image, dtype=np.uint8)
    h, w = img.shape
    head = "P5\n"
    if comment:
        for line in comment.rstrip().splitlines():
            head += (line if line.startswith("#") else "# " + line) + "\n"
    head += f"{w} {h}\n255\n"
    Path(path).write_bytes(head.encode() + img.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end].decode())
        pos = end
    if tokens[0] != "P5":
        raise ValueError("not a binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    pos += 1
    return np.frombuffer(data[pos:pos + w * h], dtype=np.uint8).reshape(h, w)
