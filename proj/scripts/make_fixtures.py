#!/usr/bin/env python3
"""Regenerates the fixture data under data/ and tests/data/.

Also writes the independent oracle values (BLEU, ROUGE-L, clinical efficacy from
hand annotations, co-occurrence weights) that the C++ tests compare against.
Deterministic: rerunning produces identical files.
"""
import json
import math
import random
import re
from collections import Counter
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "data"
TEST_DATA = ROOT / "tests" / "data"

LABELS = [
    "atelectasis", "cardiomegaly", "consolidation", "edema", "enlarged cardiomediastinum", "fracture",
    "lung lesion", "lung opacity", "no finding", "pleural effusion", "pleural other", "pneumonia",
    "pneumothorax", "support devices",
]

DISEASES = {
    "pneumonia": ("pneumonia", [], [("cough", .9), ("fever", .8), ("fatigue", .4), ("sputum", .35), ("chills", .3)]),
    "edema": ("edema", ["pulmonary edema", "oedema"],
              [("shortness_of_breath", .8), ("leg_swelling", .7), ("orthopnea", .6), ("weight_gain", .5), ("cough", .2)]),
    "pleural_effusion": ("pleural effusion", ["effusion"],
                         [("shortness_of_breath", .7), ("chest_pain", .6), ("fever", .15)]),
    "cardiomegaly": ("cardiomegaly", ["enlarged heart"],
                     [("palpitations", .6), ("shortness_of_breath", .5), ("leg_swelling", .4), ("dizziness", .3),
                      ("fatigue", .2)]),
    "atelectasis": ("atelectasis", ["collapsed lung"],
                    [("shortness_of_breath", .6), ("chest_pain", .4), ("wheezing", .3), ("cough", .1)]),
    "lung_opacity": ("lung opacity", ["opacity", "opacities"],
                     [("hemoptysis", .5), ("weight_loss", .5), ("night_sweats", .4), ("cough", .15)]),
}

SYMPTOMS = {
    "cough": ["cough", "coughing"],
    "fever": ["fever", "febrile", "high temperature"],
    "fatigue": ["fatigue", "tired", "tiredness", "exhausted"],
    "chills": ["chills", "shivering"],
    "sputum": ["sputum", "phlegm", "productive cough"],
    "shortness_of_breath": ["shortness of breath", "breathless", "short of breath", "dyspnea", "trouble breathing"],
    "chest_pain": ["chest pain", "chest tightness", "pleuritic pain"],
    "orthopnea": ["orthopnea", "trouble breathing lying down"],
    "leg_swelling": ["leg swelling", "swollen legs", "swollen ankles", "ankle swelling"],
    "weight_gain": ["weight gain", "gained weight"],
    "palpitations": ["palpitations", "racing heart", "heart racing"],
    "dizziness": ["dizziness", "dizzy", "lightheaded"],
    "weight_loss": ["weight loss", "lost weight", "losing weight"],
    "night_sweats": ["night sweats", "sweating at night"],
    "hemoptysis": ["hemoptysis", "coughing up blood"],
    "wheezing": ["wheezing", "wheeze"],
    "headache": ["headache", "head ache"],
}

# How a patient says "I have ...".
SAYINGS = {
    "cough": ["a cough", "been coughing"],
    "fever": ["a fever", "a high temperature"],
    "fatigue": ["been feeling tired", "fatigue"],
    "chills": ["chills", "been shivering"],
    "sputum": ["phlegm", "a productive cough"],
    "shortness_of_breath": ["shortness of breath", "been breathless"],
    "chest_pain": ["chest pain", "chest tightness"],
    "orthopnea": ["trouble breathing lying down"],
    "leg_swelling": ["swollen ankles", "leg swelling"],
    "weight_gain": ["gained weight"],
    "palpitations": ["palpitations", "a racing heart"],
    "dizziness": ["been dizzy", "dizziness"],
    "weight_loss": ["lost weight", "weight loss"],
    "night_sweats": ["night sweats"],
    "hemoptysis": ["been coughing up blood"],
    "wheezing": ["wheezing"],
    "headache": ["a headache"],
}


def display(sid):
    return sid.replace("_", " ")


def write_jsonl(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for r in rows:
            f.write(json.dumps(r) + "\n")


def write_json(path, doc):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def label_vector(names):
    return [name in names for name in LABELS]


def graph_doc():
    concepts = []
    for did, (name, aliases, _) in DISEASES.items():
        concepts.append({"id": did, "display_name": name, "kind": "disease", "aliases": aliases})
    for sid, aliases in SYMPTOMS.items():
        concepts.append({"id": sid, "display_name": display(sid), "kind": "symptom", "aliases": aliases})
    edges = [{"disease": d, "symptom": s, "weight": w} for d, (_, _, syms) in DISEASES.items() for s, w in syms]
    return {"concepts": concepts, "edges": edges}


def small_graph_doc():
    diseases = {
        "flu": [("fever", .9), ("body_aches", .8), ("cough", .6), ("headache", .5)],
        "cold": [("runny_nose", .8), ("sore_throat", .7), ("sneezing", .6), ("cough", .5)],
        "allergy": [("sneezing", .9), ("itchy_eyes", .8), ("runny_nose", .6), ("headache", .2)],
    }
    symptoms = sorted({s for syms in diseases.values() for s, _ in syms})
    concepts = [{"id": d, "display_name": d, "kind": "disease", "aliases": []} for d in diseases]
    concepts += [{"id": s, "display_name": display(s), "kind": "symptom", "aliases": []} for s in symptoms]
    edges = [{"disease": d, "symptom": s, "weight": w} for d, syms in diseases.items() for s, w in syms]
    return {"concepts": concepts, "edges": edges}


def sentence_for(rng, symptoms):
    said = [rng.choice(SAYINGS[s]) for s in symptoms]
    if len(said) == 1:
        body = said[0]
    else:
        body = ", ".join(said[:-1]) + " and " + said[-1]
    return rng.choice(["I have {}.", "Lately I have {}.", "For a few days I have {}."]).format(body)


def personas(rng, n):
    rows = []
    ids = list(DISEASES)
    # One persona whose symptoms match pneumonia exactly.
    rows.append({
        "persona_id": "p0000",
        "utterances": ["I have a cough and a fever."],
        "labels": label_vector({"pneumonia"}),
        "symptoms": ["chills", "cough", "fatigue", "fever", "sputum"],
        "image_ref": "img-p0000",
    })
    while len(rows) < n:
        pid = "p%04d" % len(rows)
        d = rng.choice(ids)
        syms = [s for s, w in DISEASES[d][2] if rng.random() < w + 0.1]
        if not syms:
            syms = [DISEASES[d][2][0][0]]
        if rng.random() < 0.2:
            syms.append(rng.choice(list(SYMPTOMS)))
        syms = sorted(set(syms))
        opening = rng.sample(syms, min(len(syms), rng.choice([1, 1, 2])))
        row = {"persona_id": pid, "labels": label_vector({DISEASES[d][0]}), "image_ref": "img-" + pid}
        kind = rng.random()
        if kind < 0.8:
            row["utterances"] = [sentence_for(rng, opening)]
            row["symptoms"] = syms
        else:
            # Scripted-only persona: answers follow the script regardless of the question.
            rest = [s for s in syms if s not in opening]
            lines = [sentence_for(rng, opening)]
            for s in rest[:2]:
                lines.append(sentence_for(rng, [s]))
            lines.append(rng.choice(["I am not sure about that.", "It started last week."]))
            if rng.random() < 0.4:
                lines.append(rng.choice(["That is all, bye.", "I have to go now, goodbye."]))
            row["utterances"] = lines
        rows.append(row)
    return rows


def history_records(rng, n):
    rows = [{
        "record_id": "r0000",
        "medical_history": "Patient reports weight loss and a persistent cough.",
        "findings": "Right lower lobe consolidation consistent with pneumonia.",
        "labels": label_vector({"pneumonia", "consolidation"}),
    }, {
        "record_id": "r0001",
        "medical_history": "",
        "findings": "Small left pleural effusion. Patient has chest pain.",
        "labels": label_vector({"pleural effusion"}),
    }, {
        "record_id": "r0002",
        "medical_history": "Routine preoperative evaluation.",
        "findings": "",
        "labels": label_vector(set()),
    }]
    ids = list(DISEASES)
    while len(rows) < n:
        rid = "r%04d" % len(rows)
        d = rng.choice(ids)
        syms = [s for s, w in DISEASES[d][2] if rng.random() < w]
        syms = syms[:3] or [DISEASES[d][2][0][0]]
        history = ""
        if rng.random() < 0.9:
            history = "Patient presents with " + " and ".join(rng.choice(SYMPTOMS[s]) for s in syms) + "."
        name = DISEASES[d][0]
        findings = rng.choice([
            "Findings consistent with {}.", "There is evidence of {}.", "Imaging shows {}.",
        ]).format(name)
        rows.append({"record_id": rid, "medical_history": history, "findings": findings,
                     "labels": label_vector({name})})
    return rows


def kg_records(rng, n):
    graph = graph_doc()
    rows = []
    for _ in range(n):
        ds = [rng.choice(list(DISEASES))]
        if rng.random() < 0.1:
            ds.append(rng.choice(list(DISEASES)))
        syms = set()
        for d in ds:
            for s, w in DISEASES[d][2]:
                if rng.random() < w:
                    syms.add(s)
        rows.append({"diseases": sorted(set(ds)), "symptoms": sorted(syms)})
    # Expected weights: #records with both / #records with the disease.
    with_d = Counter()
    both = Counter()
    for r in rows:
        for d in r["diseases"]:
            with_d[d] += 1
            for s in r["symptoms"]:
                both[(d, s)] += 1
    expected = [{"disease": d, "symptom": s, "weight": c / with_d[d]} for (d, s), c in sorted(both.items())]
    return {"concepts": graph["concepts"], "records": rows}, expected


# Reference/candidate reports with hand-assigned positive categories.
EVAL = [
    ("e01", "The heart size is normal. There is a small left pleural effusion. No pneumothorax.", {"pleural effusion"},
     "Small left pleural effusion is present. No pneumothorax is seen.", {"pleural effusion"}),
    ("e02", "Cardiomegaly with mild pulmonary edema. No focal consolidation.", {"cardiomegaly", "edema"},
     "The heart is enlarged. Mild edema is noted.", {"edema"}),
    ("e03", "Right lower lobe opacity concerning for pneumonia.", {"lung opacity", "pneumonia"},
     "Right lower lobe consolidation, possibly pneumonia.", {"consolidation", "pneumonia"}),
    ("e04", "No acute cardiopulmonary process.", {"no finding"},
     "No acute cardiopulmonary process. Heart size is normal.", {"no finding"}),
    ("e05", "Endotracheal tube terminates 4 cm above the carina. Bibasilar atelectasis.",
     {"support devices", "atelectasis"},
     "Endotracheal tube in standard position. No pleural effusion.", {"support devices"}),
    ("e06", "Left apical pneumothorax. No fracture is seen.", {"pneumothorax"},
     "Small left pneumothorax. Old rib fractures.", {"pneumothorax", "fracture"}),
    ("e07", "Lungs are clear without consolidation or effusion. Pacemaker in place.", {"support devices"},
     "Pacemaker leads are in place. Lungs are clear.", {"support devices"}),
    ("e08", "Widened mediastinum. Small bilateral effusions but no pneumothorax.",
     {"enlarged cardiomediastinum", "pleural effusion"},
     "Mediastinal widening is noted. Bilateral pleural effusions.", {"enlarged cardiomediastinum", "pleural effusion"}),
    ("e09", "A 2 cm nodule in the right upper lobe. No consolidation.", {"lung lesion"},
     "Right upper lobe mass. Possible infiltrate in the left base.", {"lung lesion", "lung opacity"}),
    ("e10", "Pleural thickening at the right apex. Heart size is enlarged.", {"pleural other", "cardiomegaly"},
     "Cardiomegaly. Pleural thickening at the right apex. No edema.", {"cardiomegaly", "pleural other"}),
]


def tokens(text):
    return re.findall(rb"[a-z0-9\x80-\xff]+", text.encode().lower())


def ngram_counts(toks, n):
    return Counter(tuple(toks[i:i + n]) for i in range(len(toks) - n + 1))


def corpus_bleu(cands, refs, n):
    match = [0] * n
    total = [0] * n
    c_len = r_len = 0
    for c, r in zip(cands, refs):
        c_len += len(c)
        r_len += len(r)
        for k in range(1, n + 1):
            cc, rc = ngram_counts(c, k), ngram_counts(r, k)
            match[k - 1] += sum(min(v, rc[g]) for g, v in cc.items())
            total[k - 1] += max(len(c) - k + 1, 0)
    if c_len == 0:
        return 0.0
    logs = 0.0
    for k in range(n):
        num = match[k] if match[k] > 0 else 1e-9
        den = total[k] if total[k] > 0 else 1
        logs += math.log(num / den)
    bp = math.exp(min(0.0, 1 - r_len / c_len))
    return bp * math.exp(logs / n)


def lcs(a, b):
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a)):
        for j in range(len(b)):
            table[i + 1][j + 1] = table[i][j] + 1 if a[i] == b[j] else max(table[i][j + 1], table[i + 1][j])
    return table[-1][-1]


def rouge_l(c, r):
    if not c:
        return 0.0
    m = lcs(c, r)
    if m == 0:
        return 0.0
    p, rec = m / len(c), m / len(r)
    return 2 * p * rec / (p + rec)


def eval_oracle():
    cands = [tokens(c) for _, _, _, c, _ in EVAL]
    refs = [tokens(r) for _, r, _, _, _ in EVAL]
    tp = fp = fn = 0
    for _, _, ref_pos, _, cand_pos in EVAL:
        tp += len(ref_pos & cand_pos)
        fp += len(cand_pos - ref_pos)
        fn += len(ref_pos - cand_pos)
    p = tp / (tp + fp)
    r = tp / (tp + fn)
    oracle = {f"bleu{n}": corpus_bleu(cands, refs, n) for n in range(1, 5)}
    oracle["rougeL"] = sum(rouge_l(c, r) for c, r in zip(cands, refs)) / len(EVAL)
    oracle["precision"] = p
    oracle["recall"] = r
    oracle["f1"] = 2 * p * r / (p + r)
    annotations = {i: {"reference": sorted(rp), "candidate": sorted(cp)} for i, _, rp, _, cp in EVAL}
    return oracle, annotations


LABEL_PHRASES = {
    "atelectasis": ["atelectasis", "atelectases", "atelectatic", "collapsed lung", "lung collapse"],
    "cardiomegaly": ["cardiomegaly", "enlarged heart", "enlarged cardiac silhouette", "cardiac enlargement",
                     "heart size is enlarged"],
    "consolidation": ["consolidation", "consolidations", "consolidative"],
    "edema": ["edema", "oedema", "vascular congestion"],
    "enlarged cardiomediastinum": ["enlarged cardiomediastinum", "widened mediastinum", "mediastinal widening",
                                   "enlarged mediastinum", "cardiomediastinal enlargement"],
    "fracture": ["fracture", "fractures", "fractured"],
    "lung lesion": ["lung lesion", "nodule", "nodules", "mass", "masses", "lesion", "lesions"],
    "lung opacity": ["lung opacity", "opacity", "opacities", "opacification", "infiltrate", "infiltrates"],
    "no finding": ["no finding", "no findings", "no acute cardiopulmonary process",
                   "no acute cardiopulmonary abnormality", "no acute cardiopulmonary disease",
                   "normal chest radiograph"],
    "pleural effusion": ["pleural effusion", "pleural effusions", "effusion", "effusions"],
    "pleural other": ["pleural other", "pleural thickening", "pleural scarring", "pleural plaque", "pleural plaques",
                      "fibrothorax"],
    "pneumonia": ["pneumonia", "pneumonias", "infectious process"],
    "pneumothorax": ["pneumothorax", "pneumothoraces"],
    "support devices": ["support devices", "support device", "endotracheal tube", "nasogastric tube", "pacemaker",
                        "central line", "central venous catheter", "picc line", "sternotomy wires"],
}


def main():
    rng = random.Random(20240101)
    write_json(DATA / "graph.json", graph_doc())
    (DATA / "labels.txt").write_text("\n".join(LABELS) + "\n")
    write_jsonl(DATA / "personas.jsonl", personas(rng, 500))
    write_jsonl(DATA / "history_records.jsonl", history_records(rng, 200))
    records, expected = kg_records(rng, 200)
    write_json(DATA / "kg_records.json", records)
    write_json(TEST_DATA / "kg_expected_weights.json", expected)
    write_jsonl(DATA / "eval" / "references.jsonl", [{"id": i, "text": r} for i, r, _, _, _ in EVAL])
    write_jsonl(DATA / "eval" / "candidates.jsonl", [{"id": i, "text": c} for i, _, _, c, _ in EVAL])
    oracle, annotations = eval_oracle()
    write_json(TEST_DATA / "eval_oracle.json", oracle)
    write_json(TEST_DATA / "eval_annotations.json", annotations)
    write_json(TEST_DATA / "small_graph.json", small_graph_doc())
    write_json(DATA / "label_phrases.json", {
        "categories": LABEL_PHRASES,
        "negation_cues": ["no", "without", "negative for", "free of", "resolved"],
        "uncertainty_cues": ["possible", "possibly", "may", "might", "questionable", "suspicious for", "concern for",
                             "cannot exclude", "cannot be excluded", "suggestive of"],
        "scope_breaks": ["but", "however", "although"],
        "uncertain_positive": True,
    })


if __name__ == "__main__":
    main()
