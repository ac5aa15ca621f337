"""HTTP service backing the review UI.

Endpoints (JSON bodies throughout):

- ``GET /queue?domain=&status=``    review items, pending first
- ``POST /judgments``               {item_id, label, annotator}
- ``GET /accuracy``                 per-domain label proportions
- ``POST /refinements/apply``       {actions: [{domain, source_word, target_word, action}]}
- ``GET /vocab/{domain}``           current (possibly refined) vocabulary
"""

from __future__ import annotations

import threading

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .ambiguity import AmbiguousVocabulary
from .annotation import (
    AnnotationError,
    JudgmentStore,
    RefinementAction,
    alignment_accuracy,
    apply_refinements,
)


class JudgmentIn(BaseModel):
    item_id: str
    label: str
    annotator: str


class ActionIn(BaseModel):
    domain: str
    source_word: str
    target_word: str
    action: str


class RefinementsIn(BaseModel):
    actions: list[ActionIn]


def _vocab_payload(vocab: AmbiguousVocabulary) -> dict:
    return {
        "domain": vocab.domain,
        "entries": [
            {
                "source": entry.source_word,
                "in_domain": sorted(entry.in_domain_translations),
                "distractors": [
                    {"word": word, "origin": origin}
                    for word, origin in sorted(entry.distractor_translations)
                ],
            }
            for entry in (vocab.entries[key] for key in sorted(vocab.entries))
        ],
    }


def create_app(
    store: JudgmentStore,
    vocabs: dict[str, AmbiguousVocabulary] | None = None,
    on_vocab_change=None,
) -> FastAPI:
    app = FastAPI(title="ambigeval annotation service")
    vocabs = vocabs if vocabs is not None else {}
    vocab_lock = threading.Lock()

    @app.get("/queue")
    def queue(domain: str | None = None, status: str | None = None):
        items = store.items(domain=domain, status=status)
        return {
            "items": [
                {
                    "item_id": it.item_id,
                    "domain": it.domain,
                    "source_word": it.source_word,
                    "target_word": it.target_word,
                    "examples": list(it.example_lines),
                    "status": it.status,
                }
                for it in items
            ]
        }

    @app.post("/judgments")
    def post_judgment(body: JudgmentIn):
        try:
            judgment = store.record_judgment(body.item_id, body.label, body.annotator)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except AnnotationError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {
            "item_id": judgment.item_id,
            "label": judgment.label,
            "annotator": judgment.annotator,
            "ts": judgment.ts,
        }

    @app.get("/accuracy")
    def accuracy():
        result = alignment_accuracy(store.active_judgments(), store.item_domains())
        return {
            "domains": {
                domain: {
                    "counts": acc.counts,
                    "total": acc.total,
                    "proportions": {
                        label: acc.proportion(label) for label in acc.counts
                    },
                    "percent": acc.percentages(),
                }
                for domain, acc in result.items()
            }
        }

    @app.post("/refinements/apply")
    def refinements(body: RefinementsIn):
        try:
            actions = [
                RefinementAction(
                    domain=a.domain,
                    source_word=a.source_word,
                    target_word=a.target_word,
                    action=a.action,
                )
                for a in body.actions
            ]
        except AnnotationError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        warnings: list[str] = []
        touched: list[str] = []
        with vocab_lock:
            by_domain: dict[str, list[RefinementAction]] = {}
            for action in actions:
                by_domain.setdefault(action.domain, []).append(action)
            for domain, domain_actions in by_domain.items():
                vocab = vocabs.get(domain)
                if vocab is None:
                    warnings.append(f"no vocabulary loaded for domain {domain!r}")
                    continue
                refined, ws = apply_refinements(vocab, domain_actions)
                vocabs[domain] = refined
                warnings.extend(ws)
                touched.append(domain)
            if on_vocab_change is not None and touched:
                on_vocab_change({d: vocabs[d] for d in touched})
        return {"applied": len(actions), "domains": sorted(touched), "warnings": warnings}

    @app.get("/vocab/{domain}")
    def vocab(domain: str):
        with vocab_lock:
            found = vocabs.get(domain)
            if found is None:
                raise HTTPException(status_code=404, detail=f"no vocabulary for {domain!r}")
            return _vocab_payload(found)

    return app
