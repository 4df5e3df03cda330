/** Pure derivation of everything the board shows from the last fetched
 * server state. No DOM, no requests, no mutation of the inputs: rendering
 * twice from the same state must produce the same view. */

import type { IterationRecord, Label, Phase, SessionState, Thresholds } from "./types.js";

/** One labelable card on the board. */
export interface TopicCardView {
  topic: number;
  topTokens: string[];
  coherence: number;
  size: number;
  degenerate: boolean;
  /** Label badge shown on the card: the server's effective label. */
  badge: Label;
  /** A human label is in force that differs from the automatic one. */
  overridden: boolean;
  /** 0..1 position of the coherence between the bad and good cutoffs. */
  meter: number;
  canLabel: boolean;
}

/** One banked good topic, shown read-only in the bank rail. */
export interface BankRailEntry {
  id: string;
  iteration: number;
  topic: number;
  coherence: number;
}

export interface BoardView {
  phase: Phase;
  /** Stopped sessions freeze the board; the reason is displayed instead. */
  frozen: boolean;
  stopReason: string | null;
  canIterate: boolean;
  canLabel: boolean;
  iterateHint: string;
  progress: number | null;
  /** Latest good-topic percentage from history; null before any iteration. */
  goodPct: number | null;
  bankGood: number;
  bankBad: number;
  quota: number;
  numTopics: number;
  iterationsDone: number;
  cards: TopicCardView[];
  rail: BankRailEntry[];
}

/** Same id scheme the bank files use: i{iteration:03d}t{topic:03d}. */
export function bankEntryId(iteration: number, topic: number): string {
  const pad = (n: number) => String(n).padStart(3, "0");
  return `i${pad(iteration)}t${pad(topic)}`;
}

/** Where a coherence sits between the cutoffs: <= bad -> 0, >= good -> 1. */
export function thresholdPosition(coherence: number, thresholds: Thresholds): number {
  const span = thresholds.theta_good - thresholds.theta_bad;
  if (span <= 0) return coherence >= thresholds.theta_good ? 1 : 0;
  const t = (coherence - thresholds.theta_bad) / span;
  return Math.min(1, Math.max(0, t));
}

function iterateHint(session: SessionState): string {
  switch (session.phase) {
    case "training":
      return "training in progress";
    case "stopped":
      return `stopped: ${session.stop_reason ?? "done"}`;
    case "awaiting_labels":
      return "commit labels and train the next candidate";
    default:
      return "train the first candidate";
  }
}

/** The rail lists every good topic banked so far, straight from history. */
export function bankRail(history: IterationRecord[]): BankRailEntry[] {
  const rail: BankRailEntry[] = [];
  for (const record of history) {
    for (const row of record.topics) {
      if (row.label === "good") {
        rail.push({
          id: bankEntryId(record.iteration, row.topic),
          iteration: record.iteration,
          topic: row.topic,
          coherence: row.coherence,
        });
      }
    }
  }
  return rail;
}

export function buildBoardView(session: SessionState, history: IterationRecord[]): BoardView {
  const frozen = session.phase === "stopped";
  const canLabel = session.phase === "awaiting_labels";
  const canIterate = session.phase === "idle" || session.phase === "awaiting_labels";
  const last = history.length > 0 ? history[history.length - 1] : undefined;
  const lastPct = last?.metrics["tplus_pct"];

  const cards: TopicCardView[] = session.cards.map((card) => ({
    topic: card.topic,
    topTokens: [...card.top_tokens],
    coherence: card.coherence,
    size: card.size,
    degenerate: card.degenerate,
    badge: card.effective_label ?? "neutral",
    overridden:
      !card.degenerate && card.human_label !== null && card.human_label !== card.auto_label,
    meter: thresholdPosition(card.coherence, session.thresholds),
    canLabel,
  }));

  return {
    phase: session.phase,
    frozen,
    stopReason: session.stop_reason,
    canIterate,
    canLabel,
    iterateHint: iterateHint(session),
    progress: session.progress,
    goodPct: lastPct ?? null,
    bankGood: session.bank.good,
    bankBad: session.bank.bad,
    quota: session.good_quota,
    numTopics: session.num_topics,
    iterationsDone: session.iterations_done,
    cards,
    rail: bankRail(history),
  };
}
