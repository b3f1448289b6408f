import { api, ApiError, invalidate } from "./api.js";
import { renderFeaturePage } from "./render/feature.js";
import { renderError } from "./render/panels.js";
import { renderOverview } from "./render/overview.js";
import {
  renderSogForm,
  renderSogResult,
  renderSogTimeout,
  type SogSelection,
} from "./render/sog.js";
import {
  loadToggles,
  parseHash,
  saveToggles,
  toHash,
  type ViewState,
} from "./state.js";
import type { SchemaJson, Stage } from "./types.js";

const SOG_TIMEOUT_MS = 10_000;

export class App {
  private view!: ViewState;
  private schema: SchemaJson | null = null;
  private seq = 0;
  private sogInFlight = false;
  private sogSelection: SogSelection | null = null;

  constructor(private root: HTMLElement) {}

  async start(): Promise<void> {
    let registry;
    try {
      registry = await api.registry();
    } catch (e) {
      this.root.innerHTML = renderError(
        e instanceof ApiError ? e.status : "network",
        e instanceof Error ? e.message : String(e),
      );
      return;
    }
    const datasets = Object.keys(registry.datasets);
    const models = Object.keys(registry.models);
    if (datasets.length === 0 || models.length === 0) {
      this.root.innerHTML = renderError("registry", "no datasets or models registered");
      return;
    }
    const ds0 = datasets[0];
    const entry = registry.datasets[ds0];
    const splits = "splits" in entry ? Object.keys(entry.splits) : [];
    this.view = {
      dataset: ds0,
      model: models[0],
      split: splits.includes("test") ? "test" : (splits[0] ?? "test"),
      index: 0,
      page: { kind: "overview" },
      toggles: loadToggles(),
      direction: "pos",
      ...parseHash(location.hash),
    };
    const dsEntry = registry.datasets[this.view.dataset];
    this.schema = dsEntry && "schema" in dsEntry ? dsEntry.schema : null;
    this.sogSelection = this.defaultSelection();
    this.root.addEventListener("click", (e) => this.onClick(e));
    this.root.addEventListener("submit", (e) => this.onSubmit(e));
    this.root.addEventListener("change", (e) => this.onChange(e));
    window.addEventListener("hashchange", () => {
      const parsed = parseHash(location.hash);
      if (parsed) {
        this.view = { ...this.view, ...parsed };
        void this.render();
      }
    });
    location.hash = toHash(this.view);
    await this.render();
  }

  private defaultSelection(): SogSelection | null {
    if (!this.schema || this.schema.modalities.length < 2) return null;
    return {
      queryModality: this.schema.modalities[0].name,
      atoms: new Set<number>(),
      responseModality: this.schema.modalities[1].name,
    };
  }

  private async render(): Promise<void> {
    const mySeq = ++this.seq;
    const v = this.view;
    let html: string;
    try {
      if (v.page.kind === "overview") {
        const bundle = await api.overview(v.dataset, v.model, v.index, v.split);
        if (mySeq !== this.seq) return; // a newer navigation superseded this
        html = renderOverview(bundle, v.toggles) + this.sogSection();
      } else {
        const payload = await api.feature(
          v.dataset,
          v.model,
          v.index,
          v.split,
          v.page.layer,
          v.page.feature,
          v.direction,
        );
        if (mySeq !== this.seq) return;
        html = renderFeaturePage(payload, v.index);
      }
    } catch (e) {
      if (mySeq !== this.seq) return;
      html =
        e instanceof ApiError
          ? renderError(e.status, e.detail)
          : renderError("network", e instanceof Error ? e.message : String(e));
    }
    this.root.innerHTML = html;
  }

  private sogSection(): string {
    if (!this.schema || !this.sogSelection) return "";
    return (
      `<section class="panel" data-section="live-sog"><h2>Live interaction</h2>` +
      renderSogForm(this.schema, this.sogSelection) +
      `<div class="sog-output"></div></section>`
    );
  }

  private onClick(e: Event): void {
    const el = e.target instanceof Element ? e.target : null;
    if (!el) return;
    const toggle = el.closest<HTMLElement>("[data-stage]");
    if (toggle?.dataset.stage) {
      const s = toggle.dataset.stage as Stage;
      if (this.view.toggles.has(s)) this.view.toggles.delete(s);
      else this.view.toggles.add(s);
      saveToggles(this.view.toggles);
      void this.render();
      return;
    }
    const link = el.closest<HTMLElement>("[data-feature-link], .feature-node, text[data-feature]");
    if (link) {
      const feature = Number(
        link.getAttribute("data-feature-link") ?? link.getAttribute("data-feature"),
      );
      const layer = link.getAttribute("data-layer") ?? "penultimate";
      if (Number.isInteger(feature)) {
        this.view = { ...this.view, page: { kind: "feature", layer, feature } };
        location.hash = toHash(this.view);
      }
      return;
    }
    const dir = el.closest<HTMLElement>("[data-dir]");
    if (dir?.dataset.dir === "pos" || dir?.dataset.dir === "neg") {
      this.view.direction = dir.dataset.dir;
      void this.render();
    }
  }

  private onChange(e: Event): void {
    const el = e.target instanceof Element ? e.target : null;
    if (!el || !this.sogSelection) return;
    if (el.matches("[data-sog-atom]") && el instanceof HTMLInputElement) {
      const i = Number(el.getAttribute("data-sog-atom"));
      const atoms = new Set(this.sogSelection.atoms);
      if (el.checked) atoms.add(i);
      else atoms.delete(i);
      this.sogSelection = { ...this.sogSelection, atoms };
      this.refreshSogForm();
    } else if (el.matches("[data-sog-query]") && el instanceof HTMLSelectElement) {
      this.sogSelection = {
        ...this.sogSelection,
        queryModality: el.value,
        atoms: new Set(),
      };
      this.refreshSogForm();
    } else if (el.matches("[data-sog-response]") && el instanceof HTMLSelectElement) {
      this.sogSelection = { ...this.sogSelection, responseModality: el.value };
      this.refreshSogForm();
    }
  }

  private refreshSogForm(): void {
    const section = this.root.querySelector("[data-section='live-sog']");
    const form = section?.querySelector("form");
    if (section && form && this.schema && this.sogSelection) {
      form.outerHTML = renderSogForm(this.schema, this.sogSelection);
    }
  }

  private onSubmit(e: Event): void {
    const form = e.target instanceof HTMLElement ? e.target.closest("form") : null;
    if (!form) return;
    e.preventDefault();
    if (form.matches("[data-action='annotate']")) {
      const input = form.querySelector<HTMLInputElement>("input[name='concept']");
      const concept = input?.value.trim() ?? "";
      if (concept && this.view.page.kind === "feature") {
        const { layer, feature } = this.view.page;
        void api
          .annotate(layer, feature, concept)
          .then(() => {
            invalidate(`/feature/${layer}/${feature}`);
            return this.render();
          })
          .catch((err) => {
            this.root.insertAdjacentHTML(
              "afterbegin",
              renderError(
                err instanceof ApiError ? err.status : "network",
                err instanceof Error ? err.message : String(err),
              ),
            );
          });
      }
    } else if (form.matches("[data-action='sog-submit']")) {
      void this.submitSog();
    }
  }

  private async submitSog(): Promise<void> {
    const sel = this.sogSelection;
    const out = this.root.querySelector(".sog-output");
    // client-side validation: no atoms, no request; one request at a time
    if (!sel || sel.atoms.size === 0 || this.sogInFlight || !out) return;
    this.sogInFlight = true;
    const controller = new AbortController();
    const timer = setTimeout(() => controller.abort(), SOG_TIMEOUT_MS);
    out.innerHTML = `<p class="pending">computing…</p>`;
    try {
      const v = this.view;
      const map = await api.sog(
        v.dataset,
        v.model,
        v.index,
        v.split,
        sel.queryModality,
        [...sel.atoms].sort((a, b) => a - b),
        sel.responseModality,
        controller.signal,
      );
      out.innerHTML = renderSogResult(map);
    } catch (e) {
      if (controller.signal.aborted) {
        out.innerHTML = renderSogTimeout();
      } else {
        out.innerHTML =
          e instanceof ApiError
            ? renderError(e.status, e.detail)
            : renderError("network", e instanceof Error ? e.message : String(e));
      }
    } finally {
      clearTimeout(timer);
      this.sogInFlight = false;
    }
  }
}
