#!/usr/bin/env python3
"""Walk a raw annotated corpus through every normalization stage.

Builds a small synthetic raw corpus in a temp directory, derives an
alphabet, runs the full pipeline, and prints the manifest and the
per-stage report. Also shows a single record moving through the
stages one at a time.
"""

import json
import tempfile
from pathlib import Path

from lacuna.corpus import (
    PipelineConfig,
    RawRecord,
    build_corpus,
    collapse_spacing,
    derive_alphabet,
    drop_comments,
    expand_lacunae,
    filter_to_alphabet,
    normalize_record,
    replace_numerals,
    strip_editorial,
)

RAW_LINES = [
    "101\tΕΔΟΞΕΝ ΤΗΙ ΒΟΥΛΗΙ [και] τωι δημωι εδοξεν vacat {12} επειδη ανηρ αγαθος εστιν περι την πολιν και 15 ετη εγραψεν ταυτα",
    "102\tιερον του (Απολλωνος) εδοξεν {4} τοις θεοις fragment A και τωι δημωι των αθηναιων εδοξεν ταυτα ειναι αγαθα περι παντων",
    "203\tο δημος ανεθηκεν ⟨τον⟩ ανδριαντα {7} αρετης ενεκα και ευνοιας της εις εαυτον 23 και εστεφανωσεν αυτον χρυσωι στεφανωι",
    "304\tshort latin note only",
]

demo_record = RawRecord(101, RAW_LINES[0].split("\t")[1])

print("=== one record, stage by stage ===")
config = PipelineConfig()
text = demo_record.raw_text
print(f"raw:        {text!r}")
text, n = replace_numerals(text, config)
print(f"numerals:   {text!r}   ({n} runs -> '0')")
text, n = strip_editorial(text, config)
print(f"editorial:  {text!r}   ({n} symbols stripped)")
text, n = drop_comments(text, config)
print(f"comments:   {text!r}   ({n} notes dropped)")
text, n = expand_lacunae(text)
print(f"lacunae:    {text!r}   ({n} annotations expanded)")
text = collapse_spacing(text.lower(), config)
print(f"spacing:    {text!r}")

with tempfile.TemporaryDirectory() as tmp:
    raw_dir = Path(tmp) / "raw"
    raw_dir.mkdir()
    (raw_dir / "records.tsv").write_text("\n".join(RAW_LINES) + "\n", encoding="utf-8")

    alphabet = derive_alphabet(raw_dir)
    print(f"\nderived alphabet: {len(alphabet)} symbols")

    final, n = filter_to_alphabet(text, alphabet)
    print(f"filtered:   {final!r}   ({n} characters dropped)")

    clean = normalize_record(demo_record, alphabet)
    print(f"\nnormalize_record: kept={hasattr(clean, 'text')} split={getattr(clean, 'split', None)}")

    print("\n=== full corpus build ===")
    out_dir = Path(tmp) / "corpus"
    manifest, report = build_corpus(raw_dir, out_dir, alphabet)
    print(json.dumps({"manifest": manifest.to_dict(), "report": report.to_dict()},
                     indent=2, ensure_ascii=False))
    print("\nsplit files:", sorted(p.name for p in out_dir.iterdir()))
