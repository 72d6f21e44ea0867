"""Seeded toy-data generator for demos, tests, and the end-to-end run.

Everything here is a pure function of the seed, so two invocations produce
byte-identical files. Clean documents are built to never trip a rule filter
(unique sentences, no angle brackets, comfortably above the minimum length)
and defect documents trip exactly the rule they are built for.
"""

from __future__ import annotations

import random
from pathlib import Path
from typing import Sequence

from .records import (
    CalibrationItem,
    Document,
    InteractionMeta,
    JudgedCandidate,
    PredictionLogEntry,
    TaskSample,
    write_jsonl,
)
from .sft import DEFAULT_TASK_MAP

_WORDS = (
    "note post feed topic style trend coffee travel city recipe photo outfit camera "
    "budget review hotel beach morning routine skincare study planner desk keyboard "
    "garden plant spring vintage market street food noodle dessert bakery matcha "
    "weekend hiking trail sunset playlist novel museum gallery ticket flight subway "
    "apartment lamp poster sticker journal pencil fabric thread pattern sewing yoga "
    "runner sneaker jacket scarf winter summer autumn picnic lake mountain village"
).split()

_CJK_SNIPPETS = (
    "今天天气很好",
    "这家店的甜品真不错",
    "周末去爬山了",
    "分享一个学习方法",
    "这个颜色很好看",
    "求链接谢谢",
    "已经收藏了",
    "拍照技巧分享",
)

_HTML_SNIPPETS = ("<div>", "<span class=\"x\">", "</p>", "<a href=\"#\">", "<br>")


def _sentence(rng: random.Random, marker: int) -> str:
    words = rng.sample(_WORDS, rng.randint(5, 9))
    return " ".join(words) + f" s{marker}."


def _clean_text(rng: random.Random, marker: int, n_sentences: int | None = None, cjk: bool = False) -> str:
    n = n_sentences if n_sentences is not None else rng.randint(3, 8)
    sentences = [_sentence(rng, marker * 100 + i) for i in range(n)]
    if cjk and rng.random() < 0.5:
        sentences.insert(rng.randrange(len(sentences)), rng.choice(_CJK_SNIPPETS) + "。")
    return " ".join(sentences)


def defect_document(rng: random.Random, doc_id: str, kind: str) -> Document:
    """A document that trips exactly one rule filter."""
    marker = rng.randrange(10**6)
    if kind == "html":
        text = _clean_text(rng, marker) + " " + rng.choice(_HTML_SNIPPETS) + " trailing words here."
    elif kind == "repetition":
        line = _sentence(rng, marker)
        text = " ".join([line] * rng.randint(3, 6))
    elif kind == "too_short":
        text = " ".join(rng.sample(_WORDS, 3)) + "."
    else:
        raise ValueError(f"unknown defect kind '{kind}'")
    return Document(id=doc_id, source="general", domain="web", text=text)


def clean_document(
    rng: random.Random, doc_id: str, source: str = "general", domain: str = "web",
    interactions: InteractionMeta | None = None, cjk: bool = False,
) -> Document:
    marker = rng.randrange(10**6)
    return Document(
        id=doc_id,
        source=source,
        domain=domain,
        text=_clean_text(rng, marker, cjk=cjk),
        interactions=interactions,
    )


def build_defect_corpus(seed: int, n_docs: int = 1000, n_defects: int = 300) -> tuple[list[Document], dict[str, str]]:
    """A corpus with known defects; returns (docs, doc_id -> defect kind)."""
    rng = random.Random(seed)
    kinds = ["html", "repetition", "too_short"]
    defect_map: dict[str, str] = {}
    docs: list[Document] = []
    defect_slots = set(rng.sample(range(n_docs), n_defects))
    for i in range(n_docs):
        doc_id = f"doc-{i:05d}"
        if i in defect_slots:
            kind = kinds[i % len(kinds)]
            docs.append(defect_document(rng, doc_id, kind))
            defect_map[doc_id] = kind
        else:
            docs.append(clean_document(rng, doc_id))
    return docs, defect_map


def build_clean_corpus(seed: int, n_docs: int = 500) -> list[Document]:
    rng = random.Random(seed)
    return [clean_document(rng, f"doc-{i:05d}") for i in range(n_docs)]


def build_toy_corpus(seed: int, n_docs: int = 2000) -> list[Document]:
    """A mixed SNS/general corpus with interaction threads, orphans, and a
    sprinkling of rule defects."""
    rng = random.Random(seed)
    docs: list[Document] = []
    i = 0

    def next_id() -> str:
        nonlocal i
        i += 1
        return f"doc-{i:05d}"

    while len(docs) < n_docs:
        roll = rng.random()
        if roll < 0.35:
            # an SNS note with a comment thread
            note_id = next_id()
            docs.append(
                clean_document(
                    rng, note_id, source="sns", domain="notes",
                    interactions=InteractionMeta(None, rng.randint(0, 500)), cjk=True,
                )
            )
            for _ in range(rng.randint(0, 4)):
                if len(docs) >= n_docs:
                    break
                docs.append(
                    Document(
                        id=next_id(),
                        source="sns",
                        domain="comments",
                        text=_clean_text(rng, rng.randrange(10**6), n_sentences=rng.randint(1, 3), cjk=True),
                        interactions=InteractionMeta(note_id, rng.randint(0, 200)),
                    )
                )
        elif roll < 0.40:
            # orphan comment pointing at a context outside the dump
            docs.append(
                Document(
                    id=next_id(),
                    source="sns",
                    domain="comments",
                    text=_clean_text(rng, rng.randrange(10**6), n_sentences=2, cjk=True),
                    interactions=InteractionMeta(f"missing-{rng.randrange(10**6)}", rng.randint(0, 50)),
                )
            )
        elif roll < 0.48:
            docs.append(defect_document(rng, next_id(), rng.choice(["html", "repetition", "too_short"])))
        elif roll < 0.75:
            docs.append(clean_document(rng, next_id(), domain=rng.choice(["web", "wiki"])))
        else:
            docs.append(clean_document(rng, next_id(), source="sns", domain="qa", cjk=True))
    return docs[:n_docs]


_TASK_FORMATS: dict[str, str] = {
    "Note Taxonomy": "multiple_choice",
    "Query Classification": "multiple_choice",
    "Query Intent Recognition": "multiple_choice",
    "Hashtag Prediction": "extraction",
    "Machine Reading Comprehension": "extraction",
    "Highlight Word Detection": "extraction",
    "Query-Note Relevance": "multiple_choice",
    "Query-Note Retrieval": "multiple_choice",
    "Post-View Search": "generation",
    "Emotional Companion Dialogue": "generation",
    "Role-playing Dialogue": "generation",
    "SNS Domain Translation": "generation",
}

_MC_LABEL_POOL = (
    "fashion", "food", "travel", "beauty", "fitness", "home", "study", "pets",
    "photography", "music",
)


def build_toy_task_samples(seed: int, n_sns: int = 240, n_general: int = 720) -> tuple[list[TaskSample], list[TaskSample]]:
    """SNS samples across the twelve tasks, plus a general instruction pool."""
    rng = random.Random(seed)
    tasks = list(DEFAULT_TASK_MAP)
    sns: list[TaskSample] = []
    for j in range(n_sns):
        task = tasks[j % len(tasks)]
        fmt = _TASK_FORMATS[task]
        prompt = f"{_clean_text(rng, rng.randrange(10**6), n_sentences=2)}"
        if fmt == "multiple_choice":
            options = tuple(rng.sample(_MC_LABEL_POOL, rng.randint(3, 4)))
            answer = rng.choice(options)
            sns.append(
                TaskSample(task, DEFAULT_TASK_MAP[task], fmt, prompt, answer, options=options)
            )
        elif fmt == "extraction":
            answer = " ".join(rng.sample(_WORDS, 2))
            sns.append(TaskSample(task, DEFAULT_TASK_MAP[task], fmt, prompt + " " + answer, answer))
        else:
            answer = _clean_text(rng, rng.randrange(10**6), n_sentences=1)
            sns.append(TaskSample(task, DEFAULT_TASK_MAP[task], fmt, prompt, answer))

    general: list[TaskSample] = []
    for j in range(n_general):
        prompt = _clean_text(rng, rng.randrange(10**6), n_sentences=rng.randint(1, 3))
        answer = _clean_text(rng, rng.randrange(10**6), n_sentences=rng.randint(1, 2))
        general.append(TaskSample("Open Instruction", "dialogue", "generation", prompt, answer))
    return sns, general


def build_toy_prediction_log(seed: int, samples: Sequence[TaskSample], wrong_fraction: float = 0.3) -> list[PredictionLogEntry]:
    rng = random.Random(seed)
    log = []
    for j, sample in enumerate(samples):
        if rng.random() < wrong_fraction:
            predicted = sample.answer + " wrong" if rng.random() < 0.5 else "no idea"
        else:
            predicted = sample.answer
        log.append(PredictionLogEntry(f"pred-{j:04d}", sample.prompt, sample.answer, predicted))
    return log


def build_toy_judged(seed: int, n: int = 40) -> list[JudgedCandidate]:
    rng = random.Random(seed)
    out = []
    for j in range(n):
        prompt = _clean_text(rng, rng.randrange(10**6), n_sentences=1)
        a = _clean_text(rng, rng.randrange(10**6), n_sentences=1)
        b = _clean_text(rng, rng.randrange(10**6), n_sentences=1)
        out.append(JudgedCandidate(f"judge-{j:04d}", prompt, a, b, rng.choice("AB")))
    return out


def build_toy_calibration(seed: int, n: int = 40, agreement: float = 0.85) -> list[CalibrationItem]:
    rng = random.Random(seed)
    n_match = round(n * agreement)
    items = []
    for j in range(n):
        judge = rng.choice("AB")
        human = judge if j < n_match else ("B" if judge == "A" else "A")
        items.append(CalibrationItem(judge, human))
    return items


def _write_output_lines(path: Path, texts: Sequence[str]) -> None:
    import json

    with open(path, "w", encoding="utf-8") as fh:
        for text in texts:
            fh.write(json.dumps({"output": text}, ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")


def write_toy_eval_files(out_dir: Path, seed: int, n_items: int = 50) -> list[dict]:
    """Prediction/gold file pairs for the evaluation stage; returns the task table."""
    rng = random.Random(seed)
    tasks = []

    golds = [rng.choice("ABCD") for _ in range(n_items)]
    preds = [g if rng.random() < 0.8 else rng.choice("ABCD") for g in golds]
    _write_output_lines(out_dir / "taxonomy_gold.jsonl", golds)
    _write_output_lines(out_dir / "taxonomy_pred.jsonl", preds)
    tasks.append({"task": "Note Taxonomy", "metric": "accuracy",
                  "pred": str(out_dir / "taxonomy_pred.jsonl"), "gold": str(out_dir / "taxonomy_gold.jsonl")})

    spans_gold = [" ".join(rng.sample(_WORDS, 3)) for _ in range(n_items)]
    spans_pred = [g if rng.random() < 0.6 else " ".join(g.split()[:2] + [rng.choice(_WORDS)]) for g in spans_gold]
    _write_output_lines(out_dir / "mrc_gold.jsonl", spans_gold)
    _write_output_lines(out_dir / "mrc_pred.jsonl", spans_pred)
    tasks.append({"task": "Machine Reading Comprehension", "metric": "span_f1",
                  "pred": str(out_dir / "mrc_pred.jsonl"), "gold": str(out_dir / "mrc_gold.jsonl")})

    zh = [rng.choice(_CJK_SNIPPETS) + "。" for _ in range(n_items)]
    en_gold = [" ".join(rng.sample(_WORDS, rng.randint(4, 8))) + "." for _ in range(n_items)]
    en_pred = [g if rng.random() < 0.5 else " ".join(g.split()[:-1]) + " " + rng.choice(_WORDS) + "." for g in en_gold]
    _write_output_lines(out_dir / "zh_en_gold.jsonl", en_gold)
    _write_output_lines(out_dir / "zh_en_pred.jsonl", en_pred)
    for metric in ("bleu", "chrf_pp"):
        tasks.append({"task": "Translation zh-en", "metric": metric,
                      "pred": str(out_dir / "zh_en_pred.jsonl"), "gold": str(out_dir / "zh_en_gold.jsonl")})

    zh_pred = [z if rng.random() < 0.5 else rng.choice(_CJK_SNIPPETS) + "。" for z in zh]
    _write_output_lines(out_dir / "en_zh_gold.jsonl", zh)
    _write_output_lines(out_dir / "en_zh_pred.jsonl", zh_pred)
    for metric in ("bleu", "chrf_pp"):
        tasks.append({"task": "Translation en-zh", "metric": metric,
                      "pred": str(out_dir / "en_zh_pred.jsonl"), "gold": str(out_dir / "en_zh_gold.jsonl")})
    return tasks


def write_toy_workspace(out_dir: str | Path, seed: int = 7, n_docs: int = 2000) -> Path:
    """Write the full toy input set plus a ready-to-run config; returns the
    config path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    docs = build_toy_corpus(seed, n_docs)
    write_jsonl(out / "corpus.jsonl", docs)

    sns, general = build_toy_task_samples(seed + 1)
    write_jsonl(out / "sns.jsonl", sns)
    write_jsonl(out / "general.jsonl", general)

    extraction = [s for s in sns if s.format == "extraction"]
    write_jsonl(out / "pred_log.jsonl", build_toy_prediction_log(seed + 2, extraction))
    write_jsonl(out / "judged.jsonl", build_toy_judged(seed + 3))
    write_jsonl(out / "calibration.jsonl", build_toy_calibration(seed + 4))

    eval_tasks = write_toy_eval_files(out, seed + 5)

    config = out / "config.toml"
    lines = [
        f"seed = {seed}",
        "",
        "[filter]",
        "retention_target = 0.5",
        "",
        "[pack]",
        "threshold = 512",
        "",
        "[mixture]",
        "samples = 64",
        "search = 20000",
        "top_k = 16",
        "proxy_positions = 8000",
        "",
        "[io]",
        'corpus = "corpus.jsonl"',
        'sns = "sns.jsonl"',
        'general = "general.jsonl"',
        'pred_log = "pred_log.jsonl"',
        'judged = "judged.jsonl"',
        'calibration = "calibration.jsonl"',
        "",
    ]
    for task in eval_tasks:
        lines.append("[[eval.tasks]]")
        lines.append(f'task = "{task["task"]}"')
        lines.append(f'metric = "{task["metric"]}"')
        lines.append(f'pred = "{Path(task["pred"]).name}"')
        lines.append(f'gold = "{Path(task["gold"]).name}"')
        lines.append("")
    config.write_text("\n".join(lines), encoding="utf-8")
    return config
