"""Built-in diagnosis script: aggregate failures by symptom over a record file.

This file is deliberately standalone (stdlib json/sys only, no package
imports): it is shipped verbatim into the diagnosis sandbox as the fallback
and default script, and executed there as ``script.py records taxonomy out``.
The in-process fast path imports it and calls :func:`build_report` directly,
so both execution routes share one implementation.

Report recipe, deterministic by construction:

* dominant_symptoms: failing records grouped by symptom label (empty labels
  excluded), sorted by count desc then label asc; share is of all failures.
* trigger_patterns: ``error_code:<code>`` patterns mined from grade error
  codes and error-step payload prefixes, top 5 by match count.
* representative_examples: up to 3 failing records (file order) for each of
  the top 3 symptom labels, excerpting the most informative text field.
* affected_surface: per-label fraction of the whole record set.
"""

import json
import sys

EXCERPT_LIMIT = 160
MAX_PATTERNS = 5
MAX_REPRESENTATIVE_LABELS = 3
MAX_REPRESENTATIVES_PER_LABEL = 3


def load_records(path):
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def error_codes(record):
    codes = []
    grade = record.get("grade")
    if grade is not None and grade.get("error_code"):
        codes.append(grade["error_code"])
    for step in record.get("trace", {}).get("steps", []):
        if step.get("kind") == "error":
            code = step.get("payload", "").split(":", 1)[0].strip()
            if code:
                codes.append(code)
    seen = []
    for code in codes:
        if code not in seen:
            seen.append(code)
    return seen


def excerpt_of(record):
    last_error = None
    for step in record.get("trace", {}).get("steps", []):
        if step.get("kind") == "error":
            last_error = step.get("payload", "")
    if last_error:
        text = last_error
    else:
        final_output = record.get("trace", {}).get("final_output", "")
        text = final_output if final_output else record.get("output", "")
    return text[:EXCERPT_LIMIT]


def build_report(records, taxonomy):
    failures = [r for r in records if not r["final_pass"]]
    iteration = records[0]["iteration"] if records else 0

    label_counts = {}
    for record in failures:
        label = record["critic"]["symptom_label"]
        if label:
            label_counts[label] = label_counts.get(label, 0) + 1
    ordered = sorted(label_counts.items(), key=lambda item: (-item[1], item[0]))

    dominant = [
        {"label": label, "count": count, "share": count / len(failures)}
        for label, count in ordered
    ]

    pattern_ids = {}
    for record in failures:
        for code in error_codes(record):
            pattern = "error_code:" + code
            pattern_ids.setdefault(pattern, []).append(record["example_id"])
    patterns = [
        {"pattern": pattern, "example_ids": sorted(ids)}
        for pattern, ids in sorted(
            pattern_ids.items(), key=lambda item: (-len(item[1]), item[0])
        )[:MAX_PATTERNS]
    ]

    representatives = []
    for label, _count in ordered[:MAX_REPRESENTATIVE_LABELS]:
        taken = 0
        for record in failures:
            if record["critic"]["symptom_label"] != label:
                continue
            representatives.append(
                {
                    "example_id": record["example_id"],
                    "label": label,
                    "excerpt": excerpt_of(record),
                }
            )
            taken += 1
            if taken >= MAX_REPRESENTATIVES_PER_LABEL:
                break

    affected = {
        label: count / len(records) for label, count in ordered
    }

    return {
        "iteration": iteration,
        "dominant_symptoms": dominant,
        "trigger_patterns": patterns,
        "representative_examples": representatives,
        "affected_surface": affected,
    }


def main(argv):
    if len(argv) != 4:
        sys.stderr.write("usage: script.py <records_file> <taxonomy_file> <output_file>\n")
        return 2
    records = load_records(argv[1])
    with open(argv[2], "r", encoding="utf-8") as fh:
        taxonomy = json.load(fh)
    report = build_report(records, taxonomy)
    with open(argv[3], "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, ensure_ascii=False)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
