#!/usr/bin/env python3
"""Regenerates the bundled synthetic test collections under data/synthetic/.

Two collections, 200 documents and 10 topics in total:
  en/  150 English documents, 5 topics with en, fr and fr>en (translated) variants
  zh/   50 Chinese documents, 5 topics with zh, en and en>zh (translated) variants

Each topic has relevant documents that mention at least one query term, plus
judged non-relevant "distractor" documents that repeat query terms in short
texts so that BM25 alone does not rank every relevant document first.
Output is deterministic.
"""

import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "data" / "synthetic"

EN_BACKGROUND = """market river city council weather report school garden music festival
train station bridge museum library village harbor mountain forest winter summer
farmer bakery hospital doctor teacher student police election budget minister
factory worker engineer road traffic coast island airport flight ticket price
hotel tourist painter novel poet theater film actor camera studio kitchen recipe
bread cheese apple orange coffee tea wine fisherman boat storm rain snow wind
morning evening week month year history ancient modern design project""".split()

EN_TOPICS = [
    {"id": "en-01", "terms": ["glacier", "melting"], "fr": "fonte des glaciers",
     "mt": "glacier fusion"},
    {"id": "en-02", "terms": ["vaccine", "trial"], "fr": "essai de vaccin",
     "mt": "vaccine test"},
    {"id": "en-03", "terms": ["satellite", "launch"], "fr": "lancement de satellite",
     "mt": "satellite launch"},
    {"id": "en-04", "terms": ["currency", "inflation"], "fr": "inflation de la monnaie",
     "mt": "money inflation"},
    {"id": "en-05", "terms": ["earthquake", "rescue"], "fr": "secours après le séisme",
     "mt": "rescue after the earthquake"},
]

ZH_BACKGROUND = """城市 河流 市场 学校 花园 音乐 火车 车站 桥梁 博物馆 图书馆 村庄 港口
山区 森林 冬天 夏天 农民 医院 医生 老师 学生 警察 选举 预算 工厂 工人 道路 交通
海岸 机场 航班 价格 酒店 游客 画家 小说 剧院 电影 演员 厨房 面包 苹果 咖啡 早晨
晚上 历史 设计 项目""".split()

ZH_TOPICS = [
    {"id": "zh-01", "terms": ["熊猫", "保护"], "en": "panda protection", "mt": "熊猫 保卫"},
    {"id": "zh-02", "terms": ["高铁", "建设"], "en": "high speed rail construction",
     "mt": "高速 铁路 建设"},
    {"id": "zh-03", "terms": ["作家", "龙应台"], "en": "who is Lung Yingtai",
     "mt": "隆应泰 是谁"},
    {"id": "zh-04", "terms": ["地震", "救援"], "en": "earthquake rescue", "mt": "地震 救援"},
    {"id": "zh-05", "terms": ["空气", "污染"], "en": "air pollution", "mt": "空气 污染"},
]


def en_sentence(rng, words):
    body = " ".join(words)
    return body[0].upper() + body[1:] + "."


def make_en(rng):
    docs, qrels = [], []
    n = 0

    def new_id():
        nonlocal n
        n += 1
        return f"EN-{n:04d}"

    for topic in EN_TOPICS:
        terms = topic["terms"]
        # relevant: long-ish documents, query terms spread over a few sentences
        for r in range(6):
            sentences = []
            for s in range(rng.randint(3, 6)):
                words = rng.sample(EN_BACKGROUND, rng.randint(6, 10))
                if s == 1 or (s == 3 and r % 2 == 0):
                    words.insert(rng.randrange(len(words)), rng.choice(terms))
                if s == 2 and r < 3:
                    for t in terms:
                        words.insert(rng.randrange(len(words)), t)
                sentences.append(en_sentence(rng, words))
            doc_id = new_id()
            docs.append({"id": doc_id, "contents": " ".join(sentences), "lang": "en"})
            qrels.append((topic["id"], doc_id, 2 if r < 3 else 1))
        # distractors: short, query-term heavy, judged non-relevant
        for d in range(4):
            words = rng.sample(EN_BACKGROUND, rng.randint(3, 5)) + [terms[0]] * 2
            if d % 2 == 0:
                words.append(terms[1])
            rng.shuffle(words)
            doc_id = new_id()
            docs.append({"id": doc_id, "contents": en_sentence(rng, words), "lang": "en"})
            qrels.append((topic["id"], doc_id, 0))
    while n < 150:
        sentences = [en_sentence(rng, rng.sample(EN_BACKGROUND, rng.randint(6, 10)))
                     for _ in range(rng.randint(2, 5))]
        if rng.random() < 0.15:
            stray = rng.choice(EN_TOPICS)["terms"][1]
            sentences[0] = sentences[0][:-1] + " " + stray + "."
        docs.append({"id": new_id(), "contents": " ".join(sentences), "lang": "en"})
    docs.append({"id": "EN-EMPTY", "contents": "", "lang": "en"})
    docs = docs[:149] + [docs[-1]]  # keep 150 documents including one empty document

    topics = [{"id": t["id"], "titles": {"en": " ".join(t["terms"]), "fr": t["fr"],
                                          "fr>en": t["mt"]}} for t in EN_TOPICS]
    return docs, topics, qrels


def make_zh(rng):
    docs, qrels = [], []
    n = 0

    def new_id():
        nonlocal n
        n += 1
        return f"ZH-{n:04d}"

    for topic in ZH_TOPICS:
        terms = topic["terms"]
        for r in range(4):
            sentences = []
            for s in range(rng.randint(3, 5)):
                words = rng.sample(ZH_BACKGROUND, rng.randint(4, 7))
                if s == 1 or (s == 2 and r < 2):
                    for t in terms[: 1 + (r % 2)]:
                        words.insert(rng.randrange(len(words)), t)
                sentences.append("".join(words) + "。")
            doc_id = new_id()
            docs.append({"id": doc_id, "contents": "".join(sentences), "lang": "zh"})
            qrels.append((topic["id"], doc_id, 1))
        for d in range(2):
            words = rng.sample(ZH_BACKGROUND, 3) + [terms[0]] * 2
            if d == 0:
                words.append(terms[1])
            rng.shuffle(words)
            doc_id = new_id()
            docs.append({"id": doc_id, "contents": "".join(words) + "！", "lang": "zh"})
            qrels.append((topic["id"], doc_id, 0))
    while n < 50:
        sentences = ["".join(rng.sample(ZH_BACKGROUND, rng.randint(4, 7))) + "。"
                     for _ in range(rng.randint(2, 4))]
        docs.append({"id": new_id(), "contents": "".join(sentences), "lang": "zh"})

    topics = [{"id": t["id"], "titles": {"zh": " ".join(t["terms"]), "en": t["en"],
                                          "en>zh": t["mt"]}} for t in ZH_TOPICS]
    return docs, topics, qrels


def write(dirname, docs, topics, qrels):
    out = ROOT / dirname
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "corpus.jsonl", "w", encoding="utf-8") as f:
        for d in docs:
            f.write(json.dumps(d, ensure_ascii=False) + "\n")
    with open(out / "topics.jsonl", "w", encoding="utf-8") as f:
        for t in topics:
            f.write(json.dumps(t, ensure_ascii=False) + "\n")
    with open(out / "qrels.txt", "w", encoding="utf-8") as f:
        for topic, doc, grade in qrels:
            f.write(f"{topic} 0 {doc} {grade}\n")


def main():
    rng = random.Random(20191023)
    write("en", *make_en(rng))
    write("zh", *make_zh(rng))


if __name__ == "__main__":
    main()
