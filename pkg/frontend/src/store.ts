/** Minimal observable state container; the whole page re-renders per change. */

import type { IterationRecord, SessionState } from "./types.js";

export interface Toast {
  kind: "error" | "info";
  text: string;
}

export interface AppState {
  session: SessionState | null;
  history: IterationRecord[];
  /** Connection failure banner text; null while the service is reachable. */
  connection: string | null;
  /** An iterate round trip (POST + polling) is in flight. */
  busy: boolean;
  toasts: Toast[];
}

export const initialState: AppState = {
  session: null,
  history: [],
  connection: null,
  busy: false,
  toasts: [],
};

const TOAST_LIMIT = 4;

export class Store {
  private state: AppState = initialState;
  private listeners = new Set<(state: AppState) => void>();

  get(): AppState {
    return this.state;
  }

  set(patch: Partial<AppState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.state);
  }

  toast(kind: Toast["kind"], text: string): void {
    this.set({ toasts: [...this.state.toasts, { kind, text }].slice(-TOAST_LIMIT) });
  }

  subscribe(listener: (state: AppState) => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }
}
