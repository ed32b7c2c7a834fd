#!/usr/bin/env python3
"""Regenerates tests/fixtures/conformance.json.

Renders every bundled evaluation template against a fixture record using the
reference Jinja2 implementation of the template language and freezes the
outputs. The C++ engine must reproduce these renders byte for byte.

The `choice` filter draws from a splitmix64 stream seeded per render, mirroring
the engine's seeded stream, so the frozen strings are stable.
"""

import json
import pathlib
import sys

import jinja2

ROOT = pathlib.Path(__file__).resolve().parents[2]
ASSETS = ROOT / "assets" / "eval_templates"
OUT = ROOT / "tests" / "fixtures" / "conformance.json"

SEED = 7

MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def below(self, n):
        return self.next() % n


def most_frequent(items):
    items = list(items)
    distinct, counts = [], []
    for item in items:
        for i, d in enumerate(distinct):
            if d == item:
                counts[i] += 1
                break
        else:
            distinct.append(item)
            counts.append(1)
    top = max(counts)
    return [d for d, c in zip(distinct, counts) if c == top]


def make_env(stream):
    env = jinja2.Environment(
        keep_trailing_newline=True, undefined=jinja2.StrictUndefined
    )
    env.filters["most_frequent"] = most_frequent
    env.filters["choice"] = lambda seq: list(seq)[stream.below(len(list(seq)))]
    return env


def split_choices_block(source):
    """Mirrors the engine's storage-format split."""
    marker = "answer_choices:"
    line_start = 0
    while line_start <= len(source):
        if source.startswith(marker, line_start):
            body_end = line_start
            if body_end > 0 and source[body_end - 1] == "\n":
                body_end -= 1
            rest = source[line_start + len(marker):]
            choices = [piece.strip() for piece in rest.split("|||")]
            return source[:body_end], choices
        nl = source.find("\n", line_start)
        if nl < 0:
            break
        line_start = nl + 1
    return source, None


def render(source, bindings):
    stream = SplitMix64(SEED)
    return make_env(stream).from_string(source).render(**bindings)


def render_choices(choice_sources, bindings):
    rendered = []
    for src in choice_sources:
        stream = SplitMix64(SEED)
        rendered.append(make_env(stream).from_string(src).render(**bindings).strip())
    return rendered


RECORDS = {
    "pubmed_qa": {
        "question": "Does aspirin reduce fever?",
        "context": {
            "contexts": ["Aspirin is widely used.", "It reduces fever in adults."],
            "labels": ["BACKGROUND", "RESULTS"],
        },
        "final_decision": "yes",
        "label": 0,
    },
    "privacy_policy_qa": {
        "text": "We collect your email address when you register.",
        "question": "Does the policy describe data collection?",
        "answer": "Relevant",
        "label": 0,
    },
    "squadshifts_nyt": {
        "context": "The bridge opened in 1937 after four years of construction.",
        "question": "When did the bridge open?",
        "answers": {"text": ["1937", "in 1937", "1937"]},
    },
    "squadshifts_amazon": {
        "context": "The blender crushes ice in seconds and cleans easily.",
        "question": "What does the blender crush?",
        "answers": {"text": ["ice", "ice", "crushes ice"]},
    },
    "squadshifts_reddit": {
        "context": "I fixed the leak by replacing the washer inside the tap.",
        "question": "How was the leak fixed?",
        "answers": {"text": ["replacing the washer", "by replacing the washer"]},
    },
    "contract_nli": {
        "premise": "The Receiving Party shall not disclose Confidential Information to third parties.",
        "hypothesis": "The agreement restricts disclosure.",
        "label": 1,
    },
    "vitamin_c": {
        "evidence": "The album sold two million copies in its first year.",
        "claim": "The album sold over a million copies.",
        "label": 1,
    },
}


def main():
    doc = {"seed": SEED, "datasets": {}}
    total = 0
    for dataset, record in sorted(RECORDS.items()):
        dataset_dir = ASSETS / dataset
        cases = []
        for i in range(1, 6):
            input_file = dataset_dir / f"t{i}.input.tmpl"
            target_file = dataset_dir / f"t{i}.target.tmpl"
            body, choices = split_choices_block(input_file.read_text(encoding="utf-8"))
            bindings = dict(record)
            cases.append({
                "file": input_file.name,
                "rendered": render(body, bindings),
            })
            total += 1
            target_bindings = dict(record)
            if choices is not None:
                target_bindings["answer_choices"] = render_choices(choices, dict(record))
            target_source, _ = split_choices_block(target_file.read_text(encoding="utf-8"))
            target_case = {
                "file": target_file.name,
                "rendered": render(target_source, target_bindings),
            }
            if choices is not None:
                target_case["choices_from"] = input_file.name
            cases.append(target_case)
            total += 1
        doc["datasets"][dataset] = {"record": record, "cases": cases}

    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    print(f"wrote {OUT} ({total} cases)")


if __name__ == "__main__":
    sys.exit(main())
