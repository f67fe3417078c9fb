"""Two-round AI-assisted reading study: case serving, response capture,
and the scoring report.

State is event-sourced: the only persistence is an append-only JSON-lines
event log, and replaying it from empty reconstitutes the exact service
state (and therefore the exact report).  Round 1 is blind; round 2 serves
the model's five ranked suggestions alongside each case.

Scoring:

- top-ranking score per case: 5..1 points for the truth at suggestion
  rank 1..5, else 0;
- response modification per (reader, case): +1 for incorrect-to-correct
  answer changes between rounds, -1 for correct-to-incorrect, 0 otherwise;
- the report correlates per-case top-ranking scores with per-case
  modification scores summed over readers.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConflictError, ContractError, ProtocolError, UndefinedMetricError, ValidationError
from .inference import build_prompt_set, pearson, zero_shot_classify

TIERS = ("junior", "senior", "expert")
ROUNDS = (1, 2)


@dataclass(frozen=True)
class StudyCase:
    case_id: str
    image_ref: str
    options: tuple
    truth: str
    top5: tuple

    def __post_init__(self):
        if self.truth not in self.options:
            raise ValidationError(f"case {self.case_id}: truth not among options")
        if len(self.top5) != 5 or len(set(self.top5)) != 5:
            raise ValidationError(f"case {self.case_id}: top5 must hold 5 distinct labels")


@dataclass
class ReaderSession:
    reader: str
    tier: str
    round: int
    order: list
    answered: set = field(default_factory=set)

    @property
    def complete(self):
        return set(self.order) <= self.answered


@dataclass(frozen=True)
class StudyResponse:
    reader: str
    case_id: str
    round: int
    label: str
    confidence: int
    ts: float


def top_ranking_score(case: StudyCase):
    """5 points for truth at suggestion rank 1, down to 1 at rank 5, else 0."""
    for rank, label in enumerate(case.top5, start=1):
        if label == case.truth:
            return 6 - rank
    return 0


def modification_score(round1_correct, round2_correct):
    """(True,True)=0, (False,False)=0, (True,False)=-1, (False,True)=+1."""
    if round1_correct and not round2_correct:
        return -1
    if not round1_correct and round2_correct:
        return 1
    return 0


def load_case_set(path):
    """Case-set file: JSON lines of StudyCase fields."""
    cases = []
    with Path(path).open() as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            cases.append(
                StudyCase(
                    case_id=str(obj["case_id"]),
                    image_ref=str(obj["image_ref"]),
                    options=tuple(obj["options"]),
                    truth=str(obj["truth"]),
                    top5=tuple(obj["top5"]),
                )
            )
    if len({c.case_id for c in cases}) != len(cases):
        raise ValidationError("duplicate case ids in case set")
    return cases


def save_case_set(cases, path):
    with Path(path).open("w") as fh:
        for c in cases:
            fh.write(
                json.dumps(
                    {
                        "case_id": c.case_id,
                        "image_ref": c.image_ref,
                        "options": list(c.options),
                        "truth": c.truth,
                        "top5": list(c.top5),
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def build_case_set(encoder, records, labels, n_per_class=1, seed=0, tokens_per_text=5):
    """Study cases from corpus records: the model's zero-shot top-5 become
    the round-2 suggestions, the full label list is the option set.

    Returns (cases, images) where images maps case id to the raw vector for
    the /image route.
    """
    if len(labels) < 5:
        raise ContractError("need at least 5 labels for distinct top-5 suggestions")
    prompts = build_prompt_set(encoder, labels, tokens_per_text)
    rng = np.random.default_rng([seed, 0xCA])
    by_class = {}
    for idx, rec in enumerate(records):
        by_class.setdefault(rec.true_class, []).append(idx)
    chosen = []
    for c in sorted(by_class):
        pool = by_class[c]
        take = min(n_per_class, len(pool))
        picks = rng.choice(len(pool), size=take, replace=False)
        chosen.extend(pool[i] for i in sorted(picks))
    cases, images = [], {}
    for idx in chosen:
        rec = records[idx]
        case_id = f"case_{idx:05d}"
        emb = encoder.encode_image(rec.image)
        top5 = [lbl for lbl, _ in zero_shot_classify(emb, prompts, 5)]
        cases.append(
            StudyCase(
                case_id=case_id,
                image_ref=f"/image/{case_id}",
                options=tuple(labels),
                truth=labels[rec.true_class],
                top5=tuple(top5),
            )
        )
        images[case_id] = [float(v) for v in rec.image]
    return cases, images


class StudyService:
    """In-memory state replayed from the append-only event log.

    Appends are serialized by a lock (single-writer discipline); reads see
    a state consistent with a full replay of the log.
    """

    def __init__(self, cases, log_path=None, clock=time.time):
        self.cases = {c.case_id: c for c in cases}
        if not self.cases:
            raise ContractError("study needs at least one case")
        self.log_path = Path(log_path) if log_path else None
        self.clock = clock
        self.sessions = {}
        self.responses = {}
        self._lock = threading.Lock()
        if self.log_path and self.log_path.exists():
            self._replay()

    # -- event plumbing ---------------------------------------------------
    def _replay(self):
        with self.log_path.open() as fh:
            for line in fh:
                if not line.strip():
                    continue
                event = json.loads(line)
                self._apply(event["type"], event["payload"])

    def _append(self, ev_type, payload):
        event = {"ts": self.clock(), "type": ev_type, "payload": payload}
        if self.log_path:
            with self.log_path.open("a") as fh:
                fh.write(json.dumps(event, sort_keys=True) + "\n")
        return event

    def _apply(self, ev_type, payload):
        if ev_type == "session_created":
            session = ReaderSession(
                reader=payload["reader"],
                tier=payload["tier"],
                round=int(payload["round"]),
                order=list(payload["order"]),
            )
            self.sessions[(session.reader, session.round)] = session
        elif ev_type == "response_submitted":
            resp = StudyResponse(
                reader=payload["reader"],
                case_id=payload["case_id"],
                round=int(payload["round"]),
                label=payload["label"],
                confidence=int(payload["confidence"]),
                ts=float(payload["ts"]),
            )
            self.responses[(resp.reader, resp.case_id, resp.round)] = resp
            session = self.sessions.get((resp.reader, resp.round))
            if session:
                session.answered.add(resp.case_id)
        else:
            raise ContractError(f"unknown event type {ev_type!r}")

    # -- operations --------------------------------------------------------
    def create_session(self, reader, round, seed, tier="junior"):
        """Create (or return) the reader's session for the round.

        The case order is a fresh seeded permutation per round; round 2
        opens only after round 1 is complete for this reader.
        """
        with self._lock:
            if round not in ROUNDS:
                raise ValidationError(f"round must be 1 or 2, got {round}")
            if tier not in TIERS:
                raise ValidationError(f"tier must be one of {TIERS}")
            existing = self.sessions.get((reader, round))
            if existing:
                return existing
            if round == 2:
                first = self.sessions.get((reader, 1))
                if first is None or not first.complete:
                    raise ProtocolError(f"reader {reader}: round 2 requires a completed round 1")
            rng = np.random.default_rng([int(seed), round])
            ids = sorted(self.cases)
            order = [ids[i] for i in rng.permutation(len(ids))]
            payload = {"reader": reader, "tier": tier, "round": round, "order": order}
            self._append("session_created", payload)
            self._apply("session_created", payload)
            return self.sessions[(reader, round)]

    def next_case_payload(self, session: ReaderSession):
        """Wire payload for the first unanswered case; round-1 payloads
        never include model predictions."""
        for case_id in session.order:
            if case_id not in session.answered:
                case = self.cases[case_id]
                payload = {
                    "case_id": case.case_id,
                    "image_ref": case.image_ref,
                    "options": list(case.options),
                }
                if session.round == 2:
                    payload["top5"] = list(case.top5)
                return payload
        return None

    def submit_response(self, reader, case_id, round, label, confidence, ts=None):
        with self._lock:
            session = self.sessions.get((reader, round))
            if session is None:
                raise ProtocolError(f"no open session for reader {reader} round {round}")
            if case_id not in self.cases:
                raise ValidationError(f"unknown case {case_id!r}")
            case = self.cases[case_id]
            if label not in case.options:
                raise ValidationError(f"label {label!r} not in the option set for {case_id}")
            if not isinstance(confidence, int) or not 1 <= confidence <= 5:
                raise ValidationError(f"confidence must be an integer in [1, 5], got {confidence!r}")
            key = (reader, case_id, round)
            if key in self.responses:
                raise ConflictError(f"duplicate response for {key}")
            payload = {
                "reader": reader,
                "case_id": case_id,
                "round": round,
                "label": label,
                "confidence": confidence,
                "ts": float(ts) if ts is not None else float(self.clock()),
            }
            self._append("response_submitted", payload)
            self._apply("response_submitted", payload)
            return {"status": "ok", "case_id": case_id, "round": round}

    # -- reporting -----------------------------------------------------------
    def completed_readers(self):
        readers = {}
        for (reader, rnd), session in self.sessions.items():
            readers.setdefault(reader, {})[rnd] = session
        return {
            reader: rounds
            for reader, rounds in readers.items()
            if 1 in rounds and 2 in rounds and rounds[1].complete and rounds[2].complete
        }

    def report(self):
        """Scoring summary over all completed two-round readers."""
        completed = self.completed_readers()
        if not completed:
            raise ContractError("no completed readers")
        case_ids = sorted(self.cases)
        per_reader = {}
        changes = {"incorrect_to_correct": 0, "other": 0}
        mod_sums = {cid: 0 for cid in case_ids}
        conf_r1, conf_r2 = [], []

        for reader in sorted(completed):
            tier = completed[reader][1].tier
            correct = {1: 0, 2: 0}
            confs = {1: [], 2: []}
            for cid in case_ids:
                truth = self.cases[cid].truth
                r1 = self.responses[(reader, cid, 1)]
                r2 = self.responses[(reader, cid, 2)]
                c1, c2 = r1.label == truth, r2.label == truth
                correct[1] += c1
                correct[2] += c2
                confs[1].append(r1.confidence)
                confs[2].append(r2.confidence)
                mod_sums[cid] += modification_score(c1, c2)
                if r1.label != r2.label:
                    if not c1 and c2:
                        changes["incorrect_to_correct"] += 1
                    else:
                        changes["other"] += 1
            per_reader[reader] = {
                "tier": tier,
                "round1_accuracy": correct[1] / len(case_ids),
                "round2_accuracy": correct[2] / len(case_ids),
                "mean_confidence_round1": float(np.mean(confs[1])),
                "mean_confidence_round2": float(np.mean(confs[2])),
            }
            conf_r1.extend(confs[1])
            conf_r2.extend(confs[2])

        per_tier = {}
        for tier in TIERS:
            rows = [r for r in per_reader.values() if r["tier"] == tier]
            if rows:
                per_tier[tier] = {
                    "round1_mean_accuracy": float(np.mean([r["round1_accuracy"] for r in rows])),
                    "round2_mean_accuracy": float(np.mean([r["round2_accuracy"] for r in rows])),
                    "n_readers": len(rows),
                }

        trs = {cid: top_ranking_score(self.cases[cid]) for cid in case_ids}
        xs = [float(trs[cid]) for cid in case_ids]
        ys = [float(mod_sums[cid]) for cid in case_ids]
        try:
            corr = pearson(xs, ys)
        except (UndefinedMetricError, ContractError):
            corr = None

        return {
            "n_readers_completed": len(completed),
            "n_cases": len(case_ids),
            "per_reader": per_reader,
            "per_tier": per_tier,
            "mean_confidence_round1": float(np.mean(conf_r1)),
            "mean_confidence_round2": float(np.mean(conf_r2)),
            "per_case": {
                cid: {"top_ranking_score": trs[cid], "modification_score_sum": mod_sums[cid]}
                for cid in case_ids
            },
            "pearson_top_ranking_vs_modification": corr,
            "changed_answers": changes,
        }

    def report_json(self):
        return json.dumps(self.report(), sort_keys=True, indent=2) + "\n"
