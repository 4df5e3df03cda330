/** DOM output. Renders the whole page from the current state on every store
 * change; the board is small enough that diffing would be overhead. */

import { buildChart, chartSvg } from "./chart.js";
import type { AppState } from "./store.js";
import type { Label } from "./types.js";
import { buildBoardView } from "./viewmodel.js";
import type { BoardView, TopicCardView } from "./viewmodel.js";

export interface Handlers {
  onLabel(topicId: number, label: Label): void;
  onIterate(): void;
  onRetry(): void;
}

const esc = (value: string) =>
  value.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;").replace(/"/g, "&quot;");

function cardHtml(card: TopicCardView): string {
  const meterPct = (card.meter * 100).toFixed(0);
  const labels: Label[] = ["good", "neutral", "bad"];
  const buttons = labels
    .map(
      (label) =>
        `<button class="label-btn ${label}${card.badge === label ? " active" : ""}" ` +
        `data-topic="${card.topic}" data-label="${label}"` +
        `${card.canLabel ? "" : " disabled"}>${label}</button>`,
    )
    .join("");
  return `
    <article class="card badge-${card.badge}${card.degenerate ? " degenerate" : ""}">
      <header>
        <span class="topic-id">t${card.topic}</span>
        <span class="badge">${card.badge}${card.overridden ? " *" : ""}</span>
      </header>
      <p class="tokens">${esc(card.topTokens.slice(0, 10).join(" "))}</p>
      <div class="meter" title="coherence ${card.coherence.toFixed(4)} between cutoffs">
        <div class="meter-fill" style="width:${meterPct}%"></div>
      </div>
      <footer>
        <span class="coh">coh ${card.coherence.toFixed(3)}</span>
        ${card.degenerate ? '<span class="deg">degenerate</span>' : ""}
        <span class="actions">${buttons}</span>
      </footer>
    </article>`;
}

function boardHtml(view: BoardView): string {
  if (view.cards.length === 0) {
    const hint =
      view.phase === "training"
        ? "training…"
        : view.frozen
          ? "session stopped"
          : "no candidate yet: run an iteration";
    return `<p class="empty">${esc(hint)}</p>`;
  }
  return view.cards.map(cardHtml).join("");
}

function railHtml(view: BoardView): string {
  if (view.rail.length === 0) return '<p class="empty">bank is empty</p>';
  return view.rail
    .map(
      (entry) =>
        `<div class="rail-entry" title="banked at iteration ${entry.iteration}">` +
        `<span class="rail-id">${esc(entry.id)}</span>` +
        `<span class="rail-coh">${entry.coherence.toFixed(3)}</span></div>`,
    )
    .join("");
}

function headerHtml(view: BoardView, busy: boolean): string {
  const progress =
    view.phase === "training"
      ? `<progress max="1" value="${view.progress ?? 0}"></progress>`
      : "";
  const stopped = view.frozen
    ? `<span class="stop-reason">stopped: ${esc(view.stopReason ?? "done")}</span>`
    : "";
  const disabled = !view.canIterate || busy ? " disabled" : "";
  return `
    <span class="phase phase-${view.phase}">${view.phase}</span>
    <span class="counts">iteration ${view.iterationsDone} · bank ${view.bankGood} good / ${view.bankBad} bad · quota ${view.quota}</span>
    ${progress}${stopped}
    <button id="iterate"${disabled} title="${esc(view.iterateHint)}">iterate</button>`;
}

export function render(root: Document, state: AppState, handlers: Handlers): void {
  const banner = root.getElementById("banner")!;
  const header = root.getElementById("header")!;
  const board = root.getElementById("board")!;
  const rail = root.getElementById("rail")!;
  const chart = root.getElementById("chart")!;
  const toasts = root.getElementById("toasts")!;

  if (state.connection !== null) {
    banner.innerHTML =
      `<span>${esc(state.connection)}</span>` + '<button id="retry">retry</button>';
    banner.classList.remove("hidden");
    banner.querySelector("#retry")!.addEventListener("click", () => handlers.onRetry());
  } else {
    banner.classList.add("hidden");
    banner.innerHTML = "";
  }

  if (!state.session) {
    header.innerHTML = "";
    board.innerHTML = '<p class="empty">connecting…</p>';
    rail.innerHTML = "";
    chart.innerHTML = "";
  } else {
    const view = buildBoardView(state.session, state.history);
    header.innerHTML = headerHtml(view, state.busy);
    board.innerHTML = boardHtml(view);
    rail.innerHTML = railHtml(view);
    const quotaPct =
      view.numTopics > 0 ? (100 * view.quota) / view.numTopics : null;
    chart.innerHTML = chartSvg(buildChart(state.history, { quotaPct }));

    const iterate = header.querySelector<HTMLButtonElement>("#iterate");
    iterate?.addEventListener("click", () => handlers.onIterate());
    for (const btn of board.querySelectorAll<HTMLButtonElement>(".label-btn")) {
      btn.addEventListener("click", () => {
        const topic = Number(btn.dataset["topic"]);
        handlers.onLabel(topic, btn.dataset["label"] as Label);
      });
    }
  }

  toasts.innerHTML = state.toasts
    .map((t) => `<div class="toast ${t.kind}">${esc(t.text)}</div>`)
    .join("");
}
