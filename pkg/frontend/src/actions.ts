/** User actions. All server interaction runs through the injected client;
 * the store is the only thing mutated here. */

import { ApiError } from "./api.js";
import type { Sleep } from "./poll.js";
import { pollUntil } from "./poll.js";
import type { Store } from "./store.js";
import type { IterationRecord, Label, SessionState, TopicCard } from "./types.js";

/** What the actions need from the client; ApiClient satisfies it. */
export interface ReviewApi {
  session(): Promise<SessionState>;
  history(): Promise<IterationRecord[]>;
  label(topicId: number, label: Label): Promise<TopicCard>;
  iterate(): Promise<{ job: string }>;
}

function errorText(err: unknown): string {
  if (err instanceof ApiError) {
    return err.status > 0 ? `${err.status}: ${err.detail}` : err.detail;
  }
  return String(err);
}

function isConnectionFailure(err: unknown): boolean {
  return err instanceof ApiError && err.status === 0;
}

function withCard(session: SessionState, card: TopicCard): SessionState {
  return {
    ...session,
    cards: session.cards.map((c) => (c.topic === card.topic ? card : c)),
  };
}

/** Fetch session + history and replace both; returns false on failure, in
 * which case the connection banner carries the reason. */
export async function refresh(store: Store, api: ReviewApi): Promise<boolean> {
  try {
    const session = await api.session();
    const history = await api.history();
    store.set({ session, history, connection: null });
    return true;
  } catch (err) {
    store.set({ connection: errorText(err) });
    return false;
  }
}

/** Optimistically apply a label, then reconcile with the server's card.
 * Any failure rolls the card back and surfaces a toast. */
export async function labelAction(store: Store, api: ReviewApi, topicId: number, label: Label): Promise<void> {
  const session = store.get().session;
  if (!session) return;
  const before = session.cards.find((c) => c.topic === topicId);
  if (!before) return;

  const optimistic: TopicCard = {
    ...before,
    human_label: label,
    // degenerate topics stay neutral no matter what the label says
    effective_label: before.degenerate ? before.effective_label : label,
  };
  store.set({ session: withCard(session, optimistic) });

  try {
    const confirmed = await api.label(topicId, label);
    const current = store.get().session;
    if (current) store.set({ session: withCard(current, confirmed) });
  } catch (err) {
    const current = store.get().session;
    if (current) store.set({ session: withCard(current, before) });
    if (isConnectionFailure(err)) {
      store.set({ connection: errorText(err) });
    } else {
      store.toast("error", errorText(err));
    }
  }
}

/** Commit pending labels and follow the training job: POST /iterate, poll
 * /session with backoff until the phase leaves `training`, then refetch
 * history so the chart appends the new point. */
export async function iterateAction(store: Store, api: ReviewApi, sleep?: Sleep): Promise<void> {
  if (store.get().busy) return;
  store.set({ busy: true });
  try {
    await api.iterate();
    const session = await pollUntil(() => api.session(), (s) => s.phase !== "training", sleep);
    const history = await api.history();
    store.set({ session, history, connection: null });
  } catch (err) {
    if (isConnectionFailure(err)) {
      store.set({ connection: errorText(err) });
    } else {
      store.toast("error", errorText(err));
    }
  } finally {
    store.set({ busy: false });
  }
}

/** Pick up an already-running training job (e.g. after a page reload). */
export async function watchTraining(store: Store, api: ReviewApi, sleep?: Sleep): Promise<void> {
  if (store.get().session?.phase !== "training") return;
  store.set({ busy: true });
  try {
    const session = await pollUntil(() => api.session(), (s) => s.phase !== "training", sleep);
    const history = await api.history();
    store.set({ session, history, connection: null });
  } catch (err) {
    store.set({ connection: errorText(err) });
  } finally {
    store.set({ busy: false });
  }
}
