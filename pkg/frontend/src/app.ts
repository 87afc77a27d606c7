/** DOM wiring for the review loop: queue, inspector, decisions, rerun. */

import { ApiClient, ApiError } from "./api.js";
import { attachDragSelect, renderChart } from "./chart.js";
import {
  AppState,
  applySelection,
  clearSelection,
  currentAnomaly,
  initialState,
  moveCursor,
  overlayAvailable,
  toggleOverlay,
  withBanner,
  withDecisionAck,
  withQueue,
  withQueueFailure,
  withRerunState,
  withSeries,
} from "./state.js";
import type { AnomalyDto, AnomalyKind, AnomalyStatus, QueueFilters, Verdict } from "./types.js";
import { anomalyPlace } from "./types.js";

const STATUSES: AnomalyStatus[] = ["Detected", "Confirmed", "Dismissed", "Repaired"];
const KINDS: AnomalyKind[] = ["OdViolation", "PointAnomaly", "ChangePoint"];

export class App {
  state: AppState = initialState();

  constructor(
    private api: ApiClient,
    private root: HTMLElement,
  ) {}

  async start(): Promise<void> {
    this.buildSkeleton();
    document.addEventListener("keydown", (event) => this.onKey(event));
    await this.refreshQueue();
    if (this.state.queue.length > 0) {
      await this.openCursor();
    }
    this.render();
  }

  private set(next: AppState): void {
    this.state = next;
    this.render();
  }

  // ------------------------------------------------------------------ data

  async refreshQueue(): Promise<void> {
    try {
      const page = await this.api.anomalies(this.state.filters, 500);
      this.set(withQueue(this.state, page.items, page.total, page.run_id));
    } catch (err) {
      this.set(withQueueFailure(this.state, err instanceof Error ? err.message : String(err)));
    }
  }

  async openCursor(): Promise<void> {
    const anomaly = currentAnomaly(this.state);
    if (!anomaly) return;
    const keyId = anomaly.fips ?? anomaly.state ?? "US";
    try {
      const series = await this.api.series(keyId, anomaly.metric, anomaly.source);
      this.set(withSeries(this.state, series));
    } catch (err) {
      this.set(withBanner(this.state, {
        kind: "error",
        text: err instanceof Error ? err.message : String(err),
      }));
    }
  }

  async decide(verdict: Verdict, rerunAfter: boolean): Promise<void> {
    const anomaly = currentAnomaly(this.state);
    if (!anomaly) return;
    const note = (this.root.querySelector("#note") as HTMLInputElement).value;
    const body: Parameters<ApiClient["decide"]>[1] = { verdict, note };
    if (this.state.selection && verdict === "Confirm") {
      body.period_override = [this.state.selection.lo, this.state.selection.hi];
    }
    try {
      const updated = await this.api.decide(anomaly.id, body);
      this.set(withDecisionAck(this.state, updated));
    } catch (err) {
      const text = err instanceof ApiError && err.status === 409
        ? "already repaired in this run"
        : err instanceof Error ? err.message : String(err);
      this.set(withBanner(this.state, { kind: "error", text }));
      return;
    }
    if (rerunAfter) {
      await this.triggerRerun();
    }
  }

  async triggerRerun(): Promise<void> {
    try {
      await this.api.rerun();
      this.set(withRerunState(this.state, "running"));
      const status = await this.api.awaitRerun();
      this.set(withRerunState(this.state, status.state === "done" ? "done" : "failed"));
      if (status.state === "failed" && status.error) {
        this.set(withBanner(this.state, { kind: "error", text: status.error }));
      }
      await this.refreshQueue();
      await this.openCursor();
    } catch (err) {
      const text = err instanceof ApiError && err.status === 409
        ? "a rerun is already in progress"
        : err instanceof Error ? err.message : String(err);
      this.set(withBanner(this.state, { kind: "error", text }));
    }
  }

  // ------------------------------------------------------------ interaction

  private onKey(event: KeyboardEvent): void {
    if ((event.target as HTMLElement).tagName === "INPUT") return;
    if (event.key === "j" || event.key === "ArrowDown") {
      this.set(moveCursor(this.state, 1));
      void this.openCursor();
    } else if (event.key === "k" || event.key === "ArrowUp") {
      this.set(moveCursor(this.state, -1));
      void this.openCursor();
    } else if (event.key === "o") {
      this.set(toggleOverlay(this.state));
    }
  }

  private onFilterChange(): void {
    const read = (id: string): string =>
      (this.root.querySelector(`#${id}`) as HTMLSelectElement).value;
    const filters: QueueFilters = {};
    const status = read("filter-status");
    const kind = read("filter-kind");
    const state = read("filter-state");
    if (status) filters.status = status as AnomalyStatus;
    if (kind) filters.kind = kind as AnomalyKind;
    if (state) filters.state = state;
    this.state = { ...this.state, filters, cursor: 0 };
    void this.refreshQueue().then(() => this.openCursor());
  }

  // ---------------------------------------------------------------- render

  private buildSkeleton(): void {
    this.root.innerHTML = `
      <header>
        <h1>countcure review</h1>
        <span id="run-id" class="mono"></span>
        <span id="rerun-state"></span>
      </header>
      <div id="banner" hidden></div>
      <main>
        <aside>
          <div class="filters">
            <select id="filter-status">
              <option value="">any status</option>
              ${STATUSES.map((s) => `<option ${s === "Detected" ? "selected" : ""}>${s}</option>`).join("")}
            </select>
            <select id="filter-kind">
              <option value="">any kind</option>
              ${KINDS.map((k) => `<option>${k}</option>`).join("")}
            </select>
            <select id="filter-state"><option value="">any state</option></select>
          </div>
          <div id="queue-meta"></div>
          <ul id="queue" tabindex="0"></ul>
        </aside>
        <section id="inspector">
          <div id="series-title"></div>
          <div id="charts"></div>
          <div id="selection-info"></div>
          <div class="controls">
            <label><input type="checkbox" id="overlay-toggle" checked>
              proposed repair overlay</label>
            <input id="note" placeholder="note (why confirm/dismiss?)">
            <button id="btn-confirm">Confirm</button>
            <button id="btn-confirm-rerun">Confirm + rerun</button>
            <button id="btn-dismiss">Dismiss</button>
            <button id="btn-rerun">Rerun repair</button>
          </div>
        </section>
      </main>`;
    for (const [id, handler] of [
      ["btn-confirm", () => void this.decide("Confirm", false)],
      ["btn-confirm-rerun", () => void this.decide("Confirm", true)],
      ["btn-dismiss", () => void this.decide("Dismiss", false)],
      ["btn-rerun", () => void this.triggerRerun()],
    ] as const) {
      (this.root.querySelector(`#${id}`) as HTMLButtonElement)
        .addEventListener("click", handler);
    }
    (this.root.querySelector("#overlay-toggle") as HTMLInputElement)
      .addEventListener("change", () => this.set(toggleOverlay(this.state)));
    for (const id of ["filter-status", "filter-kind", "filter-state"]) {
      (this.root.querySelector(`#${id}`) as HTMLSelectElement)
        .addEventListener("change", () => this.onFilterChange());
    }
  }

  render(): void {
    const { state } = this;
    (this.root.querySelector("#run-id") as HTMLElement).textContent =
      state.runId ? `run ${state.runId}` : "";
    const rerunBadge = this.root.querySelector("#rerun-state") as HTMLElement;
    rerunBadge.textContent = state.rerunState === "idle" ? "" : `rerun: ${state.rerunState}`;
    rerunBadge.className = state.rerunState;

    const banner = this.root.querySelector("#banner") as HTMLElement;
    banner.hidden = !state.banner;
    if (state.banner) {
      banner.textContent = state.banner.text;
      banner.className = state.banner.kind;
    }

    const meta = this.root.querySelector("#queue-meta") as HTMLElement;
    meta.textContent =
      `${state.queue.length} of ${state.queueTotal} anomalies` +
      (state.stale ? " (stale)" : "");

    this.renderStateFilter();
    this.renderQueue();
    this.renderInspector();
  }

  private renderStateFilter(): void {
    const select = this.root.querySelector("#filter-state") as HTMLSelectElement;
    const current = select.value;
    const states = [...new Set(this.state.queue.map((a) => a.state ?? ""))]
      .filter(Boolean).sort();
    const options = ['<option value="">any state</option>']
      .concat(states.map((s) => `<option ${s === current ? "selected" : ""}>${s}</option>`));
    if (select.children.length !== options.length) {
      select.innerHTML = options.join("");
      select.value = current;
    }
  }

  private renderQueue(): void {
    const list = this.root.querySelector("#queue") as HTMLElement;
    list.innerHTML = "";
    this.state.queue.forEach((anomaly, index) => {
      const li = document.createElement("li");
      li.className = index === this.state.cursor ? "cursor" : "";
      li.innerHTML =
        `<span class="chip ${anomaly.status}">${anomaly.status}</span>` +
        `<span class="kind">${anomaly.kind}</span> ` +
        `<b>${anomalyPlace(anomaly)}</b> ${anomaly.metric} ` +
        `<span class="mono">${anomaly.date}</span> ` +
        `<span class="mag">${anomaly.magnitude.toLocaleString()}</span>`;
      li.addEventListener("click", () => {
        this.state = { ...this.state, cursor: index };
        void this.openCursor();
      });
      list.appendChild(li);
    });
  }

  private renderInspector(): void {
    const title = this.root.querySelector("#series-title") as HTMLElement;
    const charts = this.root.querySelector("#charts") as HTMLElement;
    const info = this.root.querySelector("#selection-info") as HTMLElement;
    const toggle = this.root.querySelector("#overlay-toggle") as HTMLInputElement;
    charts.innerHTML = "";
    const { series } = this.state;
    if (!series) {
      title.textContent = "select an anomaly";
      return;
    }
    const place = series.key.county
      ? `${series.key.county}, ${series.key.state}` : (series.key.state ?? "US");
    title.textContent =
      `${place} — ${series.metric} [${series.source}] from ${series.start_date}`;

    const hasOverlay = overlayAvailable(this.state);
    toggle.disabled = !hasOverlay;
    toggle.checked = this.state.overlayVisible && hasOverlay;
    const active = currentAnomaly(this.state);
    const markers = series.anomalies.map((anomaly) => ({
      anomaly, active: anomaly.id === (active?.id ?? ""),
    }));
    const showOverlay = hasOverlay && this.state.overlayVisible;
    const width = Math.max(480, charts.clientWidth || 840);

    const cumulative = renderChart({
      width, height: 200, values: series.raw,
      overlay: showOverlay ? series.overlay?.cumulative : null,
      markers: markers.filter((m) => m.anomaly.kind !== "ChangePoint"),
      selection: this.state.selection, kind: "line", label: "cumulative",
    });
    charts.appendChild(cumulative.svg);

    const daily = renderChart({
      width, height: 220, values: series.increments,
      overlay: showOverlay ? series.overlay?.increments : null,
      markers, selection: this.state.selection, kind: "bars",
      label: "daily increments (drag to set the redistribution period)",
    });
    charts.appendChild(daily.svg);
    attachDragSelect(daily, series.increments.length,
      (lo, hi) => this.set(applySelection(this.state, lo, hi, active?.t_index ?? null)),
      () => this.set(clearSelection(this.state)));

    if (this.state.selection) {
      info.textContent =
        `period override: days ${this.state.selection.lo}-${this.state.selection.hi} ` +
        "(applied on Confirm)";
    } else {
      info.textContent = hasOverlay
        ? "overlay shows the proposed repair; drag on the daily chart to override the period"
        : "no proposed repair for this series";
    }
  }
}
