"""HTTP session around the accumulate-and-sift loop for semi-automatic topic
labeling.

One session owns one corpus, one config, one bank.  The loop advances only
through POST /iterate: it commits the pending candidate's labels to the bank
(human overrides win over the automatic classification) and trains the next
candidate in a background thread while readers keep getting consistent
snapshots.  Every phase transition is preceded by an fsync'd write of the
files that transition depends on, so a killed service resumes into an equal
session state from its directory.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .corpus import CooccurrenceStats, Corpus, build_cooccurrence
from .errors import DataError
from .itar import (
    LABEL_BAD,
    LABEL_GOOD,
    LABEL_NEUTRAL,
    Candidate,
    ItarConfig,
    IterationRecord,
    TopicBank,
    commit_iteration,
    load_history,
    save_history,
    train_candidate,
)
from .metrics import TopicQuality
from .model import ROLE_FIXED, TopicModel, TopicRole, TrainStats

logger = logging.getLogger(__name__)

PHASE_IDLE = "idle"
PHASE_TRAINING = "training"
PHASE_AWAITING = "awaiting_labels"
PHASE_STOPPED = "stopped"

CONFIG_FILE = "config.json"
STATE_FILE = "state.json"
BANK_FILE = "bank.jsonl"
HISTORY_FILE = "history.jsonl"
PENDING_FILE = "pending.json"
PENDING_ARRAYS_FILE = "pending.npz"

VALID_LABELS = (LABEL_GOOD, LABEL_BAD, LABEL_NEUTRAL)


class SessionError(Exception):
    """Session-level request failure carrying an HTTP status."""

    def __init__(self, status: int, detail: str):
        super().__init__(detail)
        self.status = status
        self.detail = detail


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    """Write-to-temp, fsync, rename: the file is either old or new, never
    torn, and is durable before the function returns."""
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    dir_fd = os.open(path.parent, os.O_RDONLY)
    try:
        os.fsync(dir_fd)
    finally:
        os.close(dir_fd)


def _atomic_write_json(path: Path, payload: dict) -> None:
    _atomic_write_bytes(path, (json.dumps(payload, sort_keys=True, indent=2) + "\n").encode("utf-8"))


class ReviewSession:
    """State machine behind the review endpoints.

    Phases: idle (nothing trained yet), training (background job running),
    awaiting_labels (a candidate's cards are up for review), stopped
    (a stop criterion fired; ``stop_reason`` says which).  All mutation goes
    through one lock; snapshots are built under the same lock and hence
    never torn.
    """

    def __init__(
        self,
        corpus: Corpus,
        cfg: ItarConfig,
        session_dir: str | Path,
        corpus_path: str | None = None,
        cooc: CooccurrenceStats | None = None,
        _write_config: bool = True,
    ):
        self.corpus = corpus
        self.cfg = cfg
        self.session_dir = Path(session_dir)
        self.session_dir.mkdir(parents=True, exist_ok=True)
        self.corpus_path = corpus_path
        self.cooc = cooc if cooc is not None else build_cooccurrence(corpus)

        self.lock = threading.RLock()
        self.phase = PHASE_IDLE
        self.stop_reason: str | None = None
        self.progress = 0.0
        self.bank = TopicBank(corpus.vocabulary)
        self.history: list[IterationRecord] = []
        self.candidate: Candidate | None = None
        self.human_labels: dict[int, str] = {}
        self.job_counter = 0
        self.active_job: str | None = None
        self._thread: threading.Thread | None = None

        if _write_config:
            _atomic_write_json(
                self.session_dir / CONFIG_FILE,
                {"corpus_path": corpus_path, "config": cfg.to_dict()},
            )
            self._persist_state()

    # -- persistence -------------------------------------------------------

    def _persist_state(self) -> None:
        _atomic_write_json(
            self.session_dir / STATE_FILE,
            {
                "phase": self.phase,
                "stop_reason": self.stop_reason,
                "job_counter": self.job_counter,
                "active_job": self.active_job,
            },
        )

    def _persist_bank_and_history(self) -> None:
        bank_tmp = self.session_dir / (BANK_FILE + ".tmp")
        self.bank.save_jsonl(bank_tmp)
        with open(bank_tmp, "rb+") as fh:
            os.fsync(fh.fileno())
        os.replace(bank_tmp, self.session_dir / BANK_FILE)
        history_tmp = self.session_dir / (HISTORY_FILE + ".tmp")
        save_history(self.history, history_tmp)
        with open(history_tmp, "rb+") as fh:
            os.fsync(fh.fileno())
        os.replace(history_tmp, self.session_dir / HISTORY_FILE)

    def _persist_pending(self) -> None:
        candidate = self.candidate
        if candidate is None:
            return
        arrays_tmp = self.session_dir / (PENDING_ARRAYS_FILE + ".tmp")
        with open(arrays_tmp, "wb") as fh:
            np.savez(
                fh,
                phi=candidate.model.phi,
                theta_dt=candidate.model.theta_dt,
                topic_sizes=(
                    candidate.model.topic_sizes
                    if candidate.model.topic_sizes is not None
                    else candidate.model.compute_topic_sizes(self.corpus)
                ),
            )
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(arrays_tmp, self.session_dir / PENDING_ARRAYS_FILE)
        _atomic_write_json(
            self.session_dir / PENDING_FILE,
            {
                "iteration": candidate.iteration,
                "perplexity": candidate.perplexity,
                "auto_labels": {str(t): l for t, l in sorted(candidate.auto_labels.items())},
                "human_labels": {str(t): l for t, l in sorted(self.human_labels.items())},
                "roles": [{"kind": r.kind, "bank_ref": r.bank_ref} for r in candidate.model.roles],
                "qualities": [q.to_dict() for q in candidate.qualities],
            },
        )

    def _clear_pending_files(self) -> None:
        for name in (PENDING_FILE, PENDING_ARRAYS_FILE):
            path = self.session_dir / name
            if path.exists():
                path.unlink()

    @classmethod
    def resume(cls, session_dir: str | Path, corpus: Corpus | None = None) -> "ReviewSession":
        """Rebuild a session from its directory.

        A crash while a training job was running falls back to the last
        durable phase: awaiting_labels when a pending candidate was saved,
        idle otherwise; the interrupted training is simply re-triggered by
        the next POST /iterate (same iteration number, same seed, same
        result).
        """
        session_dir = Path(session_dir)
        config_path = session_dir / CONFIG_FILE
        if not config_path.exists():
            raise DataError(f"no session at {session_dir} (missing {CONFIG_FILE})")
        with open(config_path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
        if corpus is None:
            if not config.get("corpus_path"):
                raise DataError("session has no recorded corpus path; pass the corpus explicitly")
            corpus = Corpus.load(config["corpus_path"])
        cfg = ItarConfig.from_dict(config["config"])
        session = cls(
            corpus,
            cfg,
            session_dir,
            corpus_path=config.get("corpus_path"),
            _write_config=False,
        )

        if (session_dir / BANK_FILE).exists():
            session.bank = TopicBank.load_jsonl(session_dir / BANK_FILE, corpus.vocabulary)
        if (session_dir / HISTORY_FILE).exists():
            session.history = load_history(session_dir / HISTORY_FILE)

        phase = PHASE_IDLE
        if (session_dir / STATE_FILE).exists():
            with open(session_dir / STATE_FILE, "r", encoding="utf-8") as fh:
                state = json.load(fh)
            phase = state.get("phase", PHASE_IDLE)
            session.stop_reason = state.get("stop_reason")
            session.job_counter = int(state.get("job_counter", 0))
            session.active_job = state.get("active_job")

        if (session_dir / PENDING_FILE).exists() and (session_dir / PENDING_ARRAYS_FILE).exists():
            session._load_pending()

        if phase == PHASE_TRAINING:
            phase = PHASE_AWAITING if session.candidate is not None else PHASE_IDLE
        if phase == PHASE_AWAITING and session.candidate is None:
            phase = PHASE_IDLE
        session.phase = phase
        if phase == PHASE_AWAITING:
            session.progress = 1.0
        return session

    def _load_pending(self) -> None:
        with open(self.session_dir / PENDING_FILE, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        arrays = np.load(self.session_dir / PENDING_ARRAYS_FILE)
        roles = [TopicRole(r["kind"], r.get("bank_ref")) for r in meta["roles"]]
        model = TopicModel(arrays["phi"], roles, seed=int(meta["iteration"]), theta_dt=arrays["theta_dt"])
        model.topic_sizes = np.asarray(arrays["topic_sizes"], dtype=np.float64)
        qualities = [
            TopicQuality(
                topic=int(q["topic"]),
                coherence=float(q["coherence"]),
                top_token_ids=np.asarray(q["top_tokens"], dtype=np.int64),
                size=float(q["size"]),
                degenerate=bool(q["degenerate"]),
                intratext=None if q["intratext"] is None else float(q["intratext"]),
            )
            for q in meta["qualities"]
        ]
        self.candidate = Candidate(
            iteration=int(meta["iteration"]),
            model=model,
            stats=TrainStats(),
            qualities=qualities,
            auto_labels={int(t): str(l) for t, l in meta["auto_labels"].items()},
            perplexity=float(meta["perplexity"]),
        )
        self.human_labels = {int(t): str(l) for t, l in meta["human_labels"].items()}

    # -- cards ---------------------------------------------------------------

    def _effective_label(self, topic: int, card: TopicQuality) -> str:
        if card.degenerate:
            return LABEL_NEUTRAL
        if topic in self.human_labels:
            return self.human_labels[topic]
        return self.candidate.auto_labels.get(topic, LABEL_NEUTRAL)

    def _card(self, card: TopicQuality) -> dict:
        topic = card.topic
        payload = card.to_dict(self.corpus.vocabulary)
        payload["role"] = self.candidate.model.roles[topic].kind
        payload["auto_label"] = self.candidate.auto_labels.get(topic)
        payload["human_label"] = self.human_labels.get(topic)
        payload["effective_label"] = (
            self._effective_label(topic, card) if topic in self.candidate.auto_labels else None
        )
        return payload

    def _free_cards(self) -> list[TopicQuality]:
        free = set(int(t) for t in self.candidate.model.free_indices)
        return [c for c in self.candidate.qualities if c.topic in free]

    # -- endpoint bodies -----------------------------------------------------

    def snapshot(self) -> dict:
        with self.lock:
            cards = []
            iteration = len(self.history)
            if self.candidate is not None:
                cards = [self._card(c) for c in sorted(self._free_cards(), key=lambda c: c.topic)]
                iteration = self.candidate.iteration
            return {
                "phase": self.phase,
                "stop_reason": self.stop_reason,
                "iteration": iteration,
                "iterations_done": len(self.history),
                "progress": self.progress if self.phase == PHASE_TRAINING else None,
                "num_topics": self.cfg.num_topics,
                "criterion": self.cfg.criterion,
                "good_quota": self.cfg.good_quota,
                "max_iterations": self.cfg.max_iterations,
                "thresholds": self.cfg.thresholds.to_dict(),
                "bank": {
                    "good": len(self.bank.good),
                    "bad": len(self.bank.bad),
                    "total": len(self.bank),
                },
                "cards": cards,
                "job": self.active_job,
            }

    def history_payload(self) -> list[dict]:
        with self.lock:
            return [record.to_dict() for record in self.history]

    def topic_payload(self, topic_id: int, head: int = 20) -> dict:
        with self.lock:
            if self.candidate is None:
                raise SessionError(404, "no current iteration")
            by_topic = {c.topic: c for c in self.candidate.qualities}
            if topic_id not in by_topic:
                raise SessionError(404, f"unknown topic {topic_id}")
            payload = self._card(by_topic[topic_id])
            column = self.candidate.model.phi[:, topic_id]
            order = np.argsort(-column, kind="stable")[:head]
            payload["phi_head"] = [
                {"token": self.corpus.vocabulary.surfaces[int(w)], "p": float(column[w])}
                for w in order
                if column[w] > 0.0
            ]
            return payload

    def post_label(self, topic_id: int, label: str) -> dict:
        """Record a human label for a free topic of the current iteration.

        Relabeling is idempotent; a degenerate topic accepts the label but
        stays neutral at commit time (its column holds nothing to bank).
        """
        with self.lock:
            if self.phase != PHASE_AWAITING:
                raise SessionError(409, f"labels are only accepted in {PHASE_AWAITING}, not {self.phase}")
            if label not in VALID_LABELS:
                raise SessionError(400, f"label must be one of {', '.join(VALID_LABELS)}")
            roles = self.candidate.model.roles
            if 0 <= topic_id < len(roles) and roles[topic_id].kind == ROLE_FIXED:
                raise SessionError(400, f"topic {topic_id} is fixed from the bank and cannot be relabeled")
            free_cards = {c.topic: c for c in self._free_cards()}
            if topic_id not in free_cards:
                raise SessionError(404, f"unknown topic {topic_id}")
            self.human_labels[topic_id] = label
            self._persist_pending()
            return self._card(free_cards[topic_id])

    def iterate(self) -> str:
        """Commit the pending labels (if any) and launch the next training.

        Single-flight: while a job runs the phase is ``training`` and further
        calls fail with 409, as do all calls after a stop.
        """
        with self.lock:
            if self.phase == PHASE_TRAINING:
                raise SessionError(409, "a training job is already running")
            if self.phase == PHASE_STOPPED:
                raise SessionError(409, f"session stopped: {self.stop_reason}")

            job_id = f"job-{self.job_counter:04d}"
            self.job_counter += 1

            if self.candidate is not None:
                record = commit_iteration(
                    self.bank, self.cfg, self.candidate, self.corpus, overrides=self.human_labels
                )
                self.history.append(record)
                self._persist_bank_and_history()
                self.candidate = None
                self.human_labels = {}
                self._clear_pending_files()
                if record.stop.stop:
                    self.phase = PHASE_STOPPED
                    self.stop_reason = record.stop.reason
                    self.active_job = job_id
                    self._persist_state()
                    return job_id

            iteration = len(self.history)
            self.phase = PHASE_TRAINING
            self.progress = 0.0
            self.active_job = job_id
            self._persist_state()
            self._thread = threading.Thread(target=self._train_job, args=(iteration,), daemon=True)
            self._thread.start()
            return job_id

    def _set_progress(self, fraction: float) -> None:
        with self.lock:
            self.progress = fraction

    def _train_job(self, iteration: int) -> None:
        try:
            candidate = train_candidate(
                self.bank, self.cfg, self.corpus, iteration, self.cooc, progress=self._set_progress
            )
        except Exception as exc:
            logger.exception("training job for iteration %d failed", iteration)
            with self.lock:
                self.phase = PHASE_STOPPED
                self.stop_reason = f"error: {exc}"
                self._persist_state()
            return
        with self.lock:
            self.candidate = candidate
            self.human_labels = {}
            self._persist_pending()
            self.phase = PHASE_AWAITING
            self.progress = 1.0
            self._persist_state()

    def wait_idle(self, timeout: float = 600.0) -> None:
        """Block until no training thread is running (for tests and clean
        shutdown, not used by handlers)."""
        thread = self._thread
        if thread is not None and thread.is_alive():
            thread.join(timeout)


class LabelRequest(BaseModel):
    topic_id: int
    label: str


def create_app(session: ReviewSession, static_dir: str | Path | None = None) -> FastAPI:
    """Wire a session into HTTP endpoints plus optional static UI serving."""
    app = FastAPI(title="topic review session")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.session = session

    @app.get("/session")
    def get_session() -> dict:
        return session.snapshot()

    @app.get("/history")
    def get_history() -> list[dict]:
        return session.history_payload()

    @app.get("/topics/{topic_id}")
    def get_topic(topic_id: int) -> dict:
        try:
            return session.topic_payload(topic_id)
        except SessionError as exc:
            raise HTTPException(exc.status, exc.detail) from None

    @app.post("/labels")
    def post_labels(body: LabelRequest) -> dict:
        try:
            return session.post_label(body.topic_id, body.label)
        except SessionError as exc:
            raise HTTPException(exc.status, exc.detail) from None

    @app.post("/iterate", status_code=202)
    def post_iterate() -> dict:
        try:
            job_id = session.iterate()
        except SessionError as exc:
            raise HTTPException(exc.status, exc.detail) from None
        return {"job": job_id}

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
