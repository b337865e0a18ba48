"""Two-stage refusal to answer.

Stage one measures how far a query sits from the curated rejection store;
stage two asks a scoring backend whether the text is a genuine question.
Similarity alone is fooled by tone: an on-topic statement embeds right
next to an on-topic question, so both gates must pass before the engine
commits to answering. Every backend failure rejects — when in doubt, the
assistant stays silent.

The evaluation harness sweeps the similarity threshold over a labeled
corpus and reports precision/recall per threshold, where the positive
class is "accepted as a domain question".
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from .errors import DegenerateCorpus, EmbeddingUnavailable, UnscorableResponse
from .feature_store import FeatureStore
from .llm import LlmGateway

logger = logging.getLogger(__name__)

DEFAULT_THETA_SIM = 0.45
DEFAULT_THETA_Q = 6

OUTCOME_ACCEPTED = "accepted"
OUTCOME_REJECTED = "rejected"
STAGE_NONE = "none"
STAGE_SIMILARITY = "similarity"
STAGE_QUESTION = "question_score"


@dataclass
class RejectionDecision:
    outcome: str
    stage: str
    detail: dict

    @property
    def accepted(self) -> bool:
        return self.outcome == OUTCOME_ACCEPTED


@dataclass(frozen=True)
class LabeledQuery:
    text: str
    is_domain_question: bool


@dataclass(frozen=True)
class EvalRow:
    threshold: float
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float


@dataclass
class EvalReport:
    rows: list[EvalRow]
    best: EvalRow

    def to_tsv(self) -> str:
        header = "theta\tprecision\trecall\tf1\ttp\tfp\tfn\ttn"
        lines = [header]
        for r in self.rows:
            lines.append(
                f"{r.threshold:.6f}\t{r.precision:.4f}\t{r.recall:.4f}\t{r.f1:.4f}"
                f"\t{r.tp}\t{r.fp}\t{r.fn}\t{r.tn}"
            )
        lines.append(f"# best_f1\ttheta={self.best.threshold:.6f}\tprecision={self.best.precision:.4f}\trecall={self.best.recall:.4f}\tf1={self.best.f1:.4f}")
        return "\n".join(lines)


class RejectionPipeline:
    def __init__(
        self,
        store: FeatureStore,
        gateway: LlmGateway,
        *,
        theta_sim: float = DEFAULT_THETA_SIM,
        theta_q: int = DEFAULT_THETA_Q,
    ) -> None:
        if not -1.0 <= theta_sim <= 1.0:
            raise ValueError("theta_sim must lie in [-1, 1]")
        if not 0 <= theta_q <= 10:
            raise ValueError("theta_q must lie in [0, 10]")
        self.store = store
        self.gateway = gateway
        self.theta_sim = theta_sim
        self.theta_q = theta_q

    # ── gates ────────────────────────────────────────────────────────────

    def top_similarity(self, text: str) -> float:
        """Top-1 similarity against the rejection store; -1 when unknowable."""
        if len(self.store) == 0:
            return -1.0
        try:
            hits = self.store.search_text(text, k=1)
        except EmbeddingUnavailable as exc:
            logger.warning("similarity gate failing closed: %s", exc)
            return -1.0
        return hits[0].similarity

    def similarity_gate(self, text: str) -> tuple[bool, float]:
        """Pass iff the query lands close enough to the rejection store.

        An empty store or a dead embedding backend can never pass, not
        even at theta_sim = -1: those paths return False outright instead
        of comparing a sentinel against the threshold.
        """
        if len(self.store) == 0:
            return False, -1.0
        try:
            hits = self.store.search_text(text, k=1)
        except EmbeddingUnavailable as exc:
            logger.warning("similarity gate failing closed: %s", exc)
            return False, -1.0
        top = hits[0].similarity
        return top >= self.theta_sim, top

    def question_gate(self, text: str) -> tuple[bool, int | None]:
        """Pass iff the scoring backend rates the text a genuine question."""
        try:
            result = self.gateway.score("is_question", text)
        except UnscorableResponse as exc:
            logger.warning("question gate failing closed: %s", exc)
            return False, None
        return result.value >= self.theta_q, result.value

    def decide(self, query) -> RejectionDecision:
        """Similarity first (cheap), question scoring second (an RPC)."""
        text = query.text if hasattr(query, "text") else query
        sim_ok, top = self.similarity_gate(text)
        if not sim_ok:
            return RejectionDecision(OUTCOME_REJECTED, STAGE_SIMILARITY, {"top_similarity": top})
        q_ok, score = self.question_gate(text)
        detail = {"top_similarity": top, "score": score}
        if not q_ok:
            return RejectionDecision(OUTCOME_REJECTED, STAGE_QUESTION, detail)
        return RejectionDecision(OUTCOME_ACCEPTED, STAGE_NONE, detail)

    # ── evaluation ───────────────────────────────────────────────────────

    def evaluate(
        self, corpus: Sequence[LabeledQuery], thresholds: Sequence[float] | None = None
    ) -> EvalReport:
        """Sweep the similarity threshold over a labeled corpus.

        Only the similarity stage is swept (the question gate has its own
        scripted-replay evaluation). The default sweep uses every observed
        top-similarity as a candidate plus one sentinel above the maximum,
        so any achievable cutoff appears in the table.
        """
        if not corpus:
            raise ValueError("corpus is empty")
        labels = {q.is_domain_question for q in corpus}
        if len(labels) < 2:
            raise DegenerateCorpus("corpus contains a single label")

        sims = [self.top_similarity(q.text) for q in corpus]
        if thresholds is None:
            candidates = sorted(set(sims))
            candidates.append(candidates[-1] + 1e-9)
            thresholds = candidates

        rows = [self._confusion_row(theta, sims, corpus) for theta in sorted(thresholds)]
        best = max(rows, key=lambda r: (r.f1, r.precision, r.threshold))
        return EvalReport(rows=rows, best=best)

    @staticmethod
    def _confusion_row(theta: float, sims: Sequence[float], corpus: Sequence[LabeledQuery]) -> EvalRow:
        tp = fp = fn = tn = 0
        for sim, item in zip(sims, corpus):
            accepted = sim >= theta
            if accepted and item.is_domain_question:
                tp += 1
            elif accepted:
                fp += 1
            elif item.is_domain_question:
                fn += 1
            else:
                tn += 1
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return EvalRow(theta, tp, fp, fn, tn, precision, recall, f1)
