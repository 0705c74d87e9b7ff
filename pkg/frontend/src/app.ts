// DOM wiring: one active session per tab, refetched from the service after
// every action so the page state is nothing but the rendered transcript.

import { ApiClient, ApiError, type QueryEntry } from './api.js';
import { drawOverlays, sparklinePoints } from './overlay.js';
import { buildSessionView, type SessionView } from './view.js';

const SCALE = 3;

interface Elements {
  canvas: HTMLCanvasElement;
  sidebar: HTMLElement;
  history: HTMLElement;
  status: HTMLElement;
  banner: HTMLElement;
  bundleInput: HTMLInputElement;
  embeddingInput: HTMLTextAreaElement;
  fixtureSelect: HTMLSelectElement;
  startButton: HTMLButtonElement;
  rejectButton: HTMLButtonElement;
  confirmButton: HTMLButtonElement;
  refineInput: HTMLTextAreaElement;
  refineButton: HTMLButtonElement;
}

interface Fixture {
  name: string;
  embedding: number[];
}

export class App {
  private client: ApiClient;
  private sessionId: string | null = null;
  private turn = 0;

  constructor(
    baseUrl: string,
    private readonly el: Elements,
    private readonly fixtures: Fixture[] = [],
  ) {
    this.client = new ApiClient(baseUrl);
    for (const fixture of fixtures) {
      const option = document.createElement('option');
      option.value = fixture.name;
      option.textContent = fixture.name;
      this.el.fixtureSelect.appendChild(option);
    }
    el.startButton.addEventListener('click', () => void this.start());
    el.rejectButton.addEventListener('click', () => void this.rejectTop());
    el.confirmButton.addEventListener('click', () => void this.confirmTop());
    el.refineButton.addEventListener('click', () => void this.refine());
  }

  private queryEntry(): QueryEntry {
    const pasted = this.el.embeddingInput.value.trim();
    if (pasted) {
      return { text_embedding: JSON.parse(pasted) as number[] };
    }
    const chosen = this.fixtures.find((f) => f.name === this.el.fixtureSelect.value);
    if (!chosen) throw new Error('paste an embedding or pick a query fixture');
    return { text_embedding: chosen.embedding };
  }

  private async start(): Promise<void> {
    this.banner('');
    try {
      const created = await this.client.createSession(
        this.el.bundleInput.value.trim(),
        this.queryEntry(),
      );
      this.sessionId = created.session.session_id;
      await this.refresh();
    } catch (error) {
      this.banner(describe(error));
    }
  }

  private topPresented(): number | null {
    const entry = document.querySelector('[data-presented="true"]');
    return entry ? Number(entry.getAttribute('data-region')) : null;
  }

  private async sendFeedback(body: Parameters<ApiClient['postFeedback']>[1]): Promise<void> {
    if (!this.sessionId) return;
    try {
      await this.client.postFeedback(this.sessionId, { ...body, turn: this.turn });
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.banner('turn was stale; view refreshed');
      } else {
        this.banner(describe(error));
      }
    }
    await this.refresh();
  }

  private async rejectTop(): Promise<void> {
    const region = this.topPresented();
    if (region !== null) await this.sendFeedback({ kind: 'negative', region_id: region });
  }

  private async confirmTop(): Promise<void> {
    const region = this.topPresented();
    if (region !== null) {
      await this.sendFeedback({ kind: 'positive-confirmation', region_id: region });
    }
  }

  private async refine(): Promise<void> {
    const pasted = this.el.refineInput.value.trim();
    if (!pasted) return;
    await this.sendFeedback({
      kind: 'positive-refinement',
      new_prompt_embedding: JSON.parse(pasted) as number[],
    });
  }

  async refresh(): Promise<void> {
    if (!this.sessionId) return;
    const snapshot = await this.client.getSession(this.sessionId);
    const bundle = await this.client.getBundle(snapshot.session.image_id);
    this.turn = snapshot.session.turn;
    this.render(buildSessionView(bundle, snapshot));
  }

  private render(view: SessionView): void {
    const ctx = this.el.canvas.getContext('2d');
    if (ctx) {
      drawOverlays(ctx, view.overlays, {
        width: this.el.canvas.width,
        height: this.el.canvas.height,
        scale: SCALE,
      });
    }
    this.el.status.textContent =
      `turn ${view.turn} | ${view.status}` +
      (view.bStar ? ` | target = region ${view.bStar.regionId}` : '');
    this.el.rejectButton.disabled = !view.controlsEnabled;
    this.el.confirmButton.disabled = !view.controlsEnabled;
    this.el.refineButton.disabled = !view.controlsEnabled;

    this.el.sidebar.replaceChildren(
      ...view.sidebar.map((entry) => {
        const row = document.createElement('li');
        row.setAttribute('data-region', String(entry.regionId));
        row.setAttribute('data-presented', String(entry.presented));
        const label = document.createElement('span');
        label.textContent = `#${entry.regionId}  score ${entry.score.toFixed(4)}`;
        if (entry.rejected) label.style.textDecoration = 'line-through';
        if (entry.presented) row.classList.add('presented');
        row.appendChild(label);
        const spark = document.createElement('canvas');
        spark.width = 60;
        spark.height = 14;
        const sctx = spark.getContext('2d');
        const series = view.sparklines.get(entry.regionId) ?? [];
        if (sctx && series.length > 1) {
          sctx.strokeStyle = '#888';
          sctx.beginPath();
          sparklinePoints(series, spark.width, spark.height).forEach(([x, y], i) =>
            i === 0 ? sctx.moveTo(x, y) : sctx.lineTo(x, y),
          );
          sctx.stroke();
        }
        row.appendChild(spark);
        return row;
      }),
    );

    this.el.history.replaceChildren(
      ...view.history.map((turn) => {
        const row = document.createElement('li');
        row.textContent =
          `turn ${turn.turn}: |Z+|=${turn.zPosSize} |Z-|=${turn.zNegSize}` +
          ` rejected [${turn.rejectedIds.join(', ')}]` +
          (turn.feedback ? ` -> ${turn.feedback}` : '');
        return row;
      }),
    );
  }

  private banner(message: string): void {
    this.el.banner.textContent = message;
  }
}

function describe(error: unknown): string {
  if (error instanceof ApiError) return `${error.code}: ${error.message}`;
  return error instanceof Error ? error.message : String(error);
}
