"""A deterministic rule-based stand-in for the chat model.

It reads the same prompts a live model would and answers each stage with
simple text rules, imperfections included (preambles, fenced output, missing
prefixes, non-conforming IRIs). Its only job is to produce replay fixtures
for offline runs and tests.
"""

from __future__ import annotations

import re

from ontokg.errors import BackendError
from ontokg.llm.backend import Backend, ChatRequest, ChatResponse, fingerprint
from ontokg.rdf import RdfGraph, parse_turtle
from ontokg.rdf.model import OWL_CLASS, OWL_OBJECT_PROPERTY, OWL_ONTOLOGY, RDF_TYPE

# phrase -> concept name, longest phrases first
VOCABULARY = (
    ("deep learning pipeline", "DeepLearningPipeline"),
    ("preprocessing step", "PreprocessingStep"),
    ("model architecture", "ModelArchitecture"),
    ("software framework", "SoftwareFramework"),
    ("evaluation metric", "EvaluationMetric"),
    ("hyperparameter", "Hyperparameter"),
    ("data format", "DataFormat"),
    ("hardware", "Hardware"),
    ("dataset", "Dataset"),
)
PIPELINE_CONCEPT = "DeepLearningPipeline"

SEED_QUESTIONS = (
    "Which data formats are used for the input data of the deep learning pipeline?",
    "Which datasets are used to train the model?",
    "Which preprocessing steps are applied to the data?",
    "Which model architecture is used?",
    "Which hyperparameters are set for training?",
    "Which software frameworks are used to implement the deep learning pipeline?",
    "Which hardware is used for training?",
    "Which evaluation metrics are reported?",
)

_VALUE_CLAUSE = re.compile(r"\b(?:were|was|are|is|include|includes|included|including)\s+(.*)", re.IGNORECASE)
_VALUE_SPLIT = re.compile(r"\s*,\s*(?:and\s+)?|\s+and\s+")
_STOPWORDS = frozenset(
    "the and for with that this from are was were which what used uses using into their its has have been "
    "was not does did also than then there these those they them our out per via".split()
)


def _section(text: str, start: str, end: str | None = None) -> str:
    i = text.rfind(start)
    if i < 0:
        return ""
    body = text[i + len(start) :]
    if end is not None:
        j = body.find(end)
        if j >= 0:
            body = body[:j]
    return body.strip()


def _quoted(text: str, name: str) -> str:
    m = re.search(rf'^{re.escape(name)}: """(.*?)"""', text, re.MULTILINE | re.DOTALL)
    return m.group(1) if m else ""


def _concepts_in(text: str) -> list[str]:
    lowered = " ".join(text.lower().split())
    return [concept for phrase, concept in VOCABULARY if phrase in lowered]


def _focus_concept(question: str) -> str | None:
    found = _concepts_in(question)
    specific = [c for c in found if c != PIPELINE_CONCEPT]
    return (specific or found or [None])[0]


def _phrase_of(concept: str) -> str:
    for phrase, name in VOCABULARY:
        if name == concept:
            return phrase
    raise KeyError(concept)


def _sentences(text: str) -> list[str]:
    text = re.sub(r"\[\d+\]\s*", " ", text)
    return [s.strip() for s in re.split(r"(?<=[.?!])\s+", " ".join(text.split())) if s.strip()]


def _content_words(text: str) -> set[str]:
    return {w for w in re.findall(r"[a-z0-9]+", text.lower()) if len(w) > 2 and w not in _STOPWORDS}


def _literal(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def extract_values(answer: str) -> list[str]:
    """Short noun phrases listed after a copula or "include" in each sentence."""
    values: list[str] = []
    seen: set[str] = set()
    for sentence in _sentences(answer):
        m = _VALUE_CLAUSE.search(sentence)
        if not m:
            continue
        for part in _VALUE_SPLIT.split(m.group(1).rstrip(".!?; ")):
            part = re.sub(r"^(?:the|a|an)\s+", "", part.strip(), flags=re.IGNORECASE).strip()
            if not part or len(part.split()) > 6 or not re.search(r"\w", part):
                continue
            key = part.casefold()
            if key not in seen:
                seen.add(key)
                values.append(part[0].upper() + part[1:])
    return values


class ScriptedBackend(Backend):
    backend_id = "scripted"

    def complete(self, request: ChatRequest) -> ChatResponse:
        handler = getattr(self, f"_{request.stage_tag}", None)
        if handler is None:
            raise BackendError(f"scripted backend has no rule for stage {request.stage_tag!r}")
        return ChatResponse(handler(request.user_text), self.backend_id, fingerprint(request))

    def _cq_gen(self, prompt: str) -> str:
        lines = ["Sure, here are competency questions for this domain:", ""]
        lines += [f"{i}. {q}" for i, q in enumerate(SEED_QUESTIONS, 1)]
        lines.append(f"{len(SEED_QUESTIONS) + 1}. {SEED_QUESTIONS[6].upper()}")
        return "\n".join(lines) + "\n"

    def _concept_extract(self, prompt: str) -> str:
        query = _section(prompt, "QUERY:")
        concepts = _concepts_in(query)
        if not concepts:
            return "I don't know."
        relations = [f"has{c}" for c in concepts if c != PIPELINE_CONCEPT]
        return f"Concepts: {', '.join(concepts)}\nRelations: {', '.join(relations)}\n"

    def _ontology_build(self, prompt: str) -> str:
        query = _section(prompt, "QUERY:")
        concepts = [c.strip() for c in _section(query, "Concepts:", "\n").split(",") if c.strip()]
        relations = [r.strip() for r in _section(query, "Relations:").split(",") if r.strip()]
        base_iri = re.search(r"Use (\S+) as the namespace", prompt).group(1)
        p = re.search(r'bound to the prefix "([^"]*):"', prompt).group(1)
        out = [
            "Here is the ontology you asked for:",
            "```turtle",
            f"@prefix {p}: <{base_iri}> .",
            "@prefix owl: <http://www.w3.org/2002/07/owl#> .",
            "@prefix prov: <http://www.w3.org/ns/prov#> .",
            "@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .",
            "",
        ]
        # the last concept is left out on purpose; normalization synthesizes it
        for name in concepts[:-1]:
            parent = "prov:Activity" if name.endswith(("Step", "Pipeline")) else "prov:Entity"
            label = " ".join(re.findall(r"[A-Z][a-z]*", name))
            out.append(f'{p}:{name} a owl:Class ; rdfs:subClassOf {parent} ; rdfs:label "{label}" .')
        domain = f"{p}:{PIPELINE_CONCEPT}" if PIPELINE_CONCEPT in concepts else None
        for name in relations:
            parts = [f"{p}:{name} a owl:ObjectProperty"]
            if domain:
                parts.append(f"rdfs:domain {domain}")
            target = name[3:] if name.startswith("has") else ""
            if target in concepts:
                parts.append(f"rdfs:range {p}:{target}")
            out.append(" ; ".join(parts) + " .")
        out.append(f"{p}:Thing42 a owl:Class .")
        out += ["```", "", "Let me know if you need more classes."]
        return "\n".join(out) + "\n"

    def _cq_answer(self, prompt: str) -> str:
        question = _section(prompt, "QUERY:")
        context = _section(prompt, "CONTEXT:", "\nINSTRUCTIONS:")
        concise = "at most three sentences" in prompt
        concept = _focus_concept(question)
        matches: list[str] = []
        if concept is not None:
            phrase = _phrase_of(concept)
            for sentence in _sentences(context):
                if phrase in sentence.lower() and sentence not in matches:
                    matches.append(sentence)
        if not matches:
            return "I don't know. The context does not mention this."
        if concise:
            return matches[0]
        return "Answer: " + " ".join(matches) + "\n" + matches[0] + "\n"

    def _kg_build(self, prompt: str) -> str:
        sloppy = prompt.startswith("You populate")
        ontology = parse_turtle(_section(prompt, "ONTOLOGY:"))
        header = ontology.subjects(RDF_TYPE, OWL_ONTOLOGY)[0].value
        p = next(k for k, v in sorted(ontology.prefixes.items()) if v == header)
        class_names = {c.value[len(header) :] for c in ontology.subjects(RDF_TYPE, OWL_CLASS) if c.value.startswith(header)}
        qa = _section(prompt, "QUESTIONS AND ANSWERS:", "\n\nONTOLOGY:")

        found: list[tuple[str, list[str]]] = []
        unanswered: list[str] = []
        for block in qa.split("\n\n"):
            m = re.match(r"CQ\d+: (.*?)\nAnswer: (.*)", block, re.DOTALL)
            if not m:
                continue
            concept = _focus_concept(m.group(1))
            if concept is None or concept not in class_names:
                continue
            values = [] if re.search(r"\bdon'?t know\b", m.group(2), re.IGNORECASE) else extract_values(m.group(2))
            if values:
                found.append((concept, values))
            else:
                unanswered.append(concept)
        if not found:
            return "The answers do not contain enough information to build a knowledge graph for this publication.\n"

        blocks: list[str] = []
        links: list[tuple[str, str]] = []
        counters: dict[str, int] = {}
        seen: set[tuple[str, str]] = set()
        for concept, values in found:
            for value in values:
                if (concept, value.casefold()) in seen:
                    continue
                seen.add((concept, value.casefold()))
                counters[concept] = counters.get(concept, 0) + 1
                if sloppy:
                    local = re.sub(r"\W+", "_", value.lower()).strip("_") or concept.lower()
                    iri = f"{p}:{concept.lower()}_{local}"
                else:
                    iri = f"{p}:{concept}_{counters[concept]}"
                blocks.append(f"{iri} a {p}:{concept} ;\n    rdfs:label {_literal(value)} .")
                links.append((concept, iri))
        if sloppy and unanswered:
            blocks.append(f'{p}:{unanswered[0]}_unknown a {p}:{unanswered[0]} ;\n    rdfs:label "Not Specified" .')
        if PIPELINE_CONCEPT in class_names:
            props = [f"{p}:has{c} {iri}" for c, iri in links if f"has{c}" in _property_names(ontology, header)]
            if props:
                blocks.insert(0, f"{p}:{PIPELINE_CONCEPT}_1 a {p}:{PIPELINE_CONCEPT} ;\n    " + " ;\n    ".join(props) + " .")

        body = "\n\n".join(blocks)
        if sloppy:
            decls = "\n".join(f"@prefix {k}: <{v}> ." for k, v in sorted(ontology.prefixes.items()))
            return f"Here is the knowledge graph:\n\n{decls}\n\n{body}\n"
        return f"```turtle\n{body}\n```\n"

    def _judge_answer(self, prompt: str) -> str:
        truth = _content_words(_quoted(prompt, "ground truth"))
        predicted = _content_words(_quoted(prompt, "predicted answer"))
        if not truth:
            score = 10 if not predicted else 0
        else:
            score = int(10 * len(truth & predicted) / len(truth) + 0.5)
        return f"score: {score}\nExplanation: {len(truth & predicted)} of {len(truth)} key terms of the ground truth appear in the prediction.\n"

    def _judge_kg(self, prompt: str) -> str:
        needle = " ".join(_quoted(prompt, "string").lower().split())
        haystack = " ".join(_quoted(prompt, "match text").lower().split())
        verdict = bool(needle) and needle in haystack
        return f"Response: {verdict}\nExplanation: the string {'occurs' if verdict else 'does not occur'} in the match text.\n"


def _property_names(ontology: RdfGraph, header: str) -> set[str]:
    return {s.value[len(header) :] for s in ontology.subjects(RDF_TYPE, OWL_OBJECT_PROPERTY) if s.value.startswith(header)}
