/** Page wiring. A full reload reconstructs the identical view from GET
 * /session + /history; no client-side state survives outside the store. */

import { ApiClient } from "./api.js";
import { iterateAction, labelAction, refresh, watchTraining } from "./actions.js";
import { render } from "./render.js";
import { Store } from "./store.js";

export function bootstrap(root: Document, base = ""): Store {
  const api = new ApiClient(base);
  const store = new Store();

  const handlers = {
    onLabel: (topicId: number, label: "good" | "bad" | "neutral") => {
      void labelAction(store, api, topicId, label);
    },
    onIterate: () => {
      void iterateAction(store, api);
    },
    onRetry: () => {
      void start();
    },
  };

  store.subscribe((state) => render(root, state, handlers));

  const start = async () => {
    const ok = await refresh(store, api);
    // a reload mid-training resumes the poll instead of showing a dead board
    if (ok) await watchTraining(store, api);
  };
  void start();
  return store;
}

if (typeof document !== "undefined") {
  bootstrap(document);
}
