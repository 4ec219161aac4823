/** Labeling flow: show the queried image, take a class choice, advance. */

import { ApiClient, BehaviorClass, NextQuery, RequestFailed } from "./api.js";

export interface AppElements {
  queryImage: HTMLImageElement;
  classGallery: HTMLElement;
  newClassForm: HTMLFormElement;
  newClassInput: HTMLInputElement;
  progressBar: HTMLElement;
  progressText: HTMLElement;
  completion: HTMLElement;
  labelingPane: HTMLElement;
  errorBanner: HTMLElement;
}

export class LabelingApp {
  current: NextQuery | null = null;
  classes: BehaviorClass[] = [];
  private busy = false;

  constructor(readonly client: ApiClient, readonly el: AppElements) {}

  async start(): Promise<void> {
    this.el.newClassForm.addEventListener("submit", (event) => {
      event.preventDefault();
      const name = this.el.newClassInput.value.trim();
      if (name) {
        void this.submitNew(name);
      }
    });
    await this.refreshProgress();
    await this.advance();
  }

  /** Fetch and render the next query; server classes are the source of truth. */
  async advance(): Promise<void> {
    this.hideError();
    let query: NextQuery | null;
    try {
      query = await this.client.nextQuery();
    } catch (err) {
      this.showError(err);
      return;
    }
    this.current = query;
    if (query === null) {
      await this.showCompletion();
      return;
    }
    this.classes = query.classes;
    this.el.queryImage.src = this.client.baseUrl + query.image_url;
    this.renderClasses();
    this.el.newClassInput.value = "";
  }

  renderClasses(): void {
    this.el.classGallery.replaceChildren();
    this.classes.forEach((cls, index) => {
      const card = document.createElement("button");
      card.className = "class-card";
      card.dataset.classId = String(cls.class_id);
      const thumb = document.createElement("img");
      // cache-bust by count so a re-exemplared class refreshes its thumbnail
      thumb.src = `${this.client.baseUrl}${cls.exemplar_url}?v=${cls.count}`;
      thumb.alt = cls.name;
      const caption = document.createElement("span");
      const hotkey = index < 9 ? `[${index + 1}] ` : "";
      caption.textContent = `${hotkey}${cls.name} (${cls.count})`;
      card.append(thumb, caption);
      card.addEventListener("click", () => void this.submitExisting(cls.class_id));
      this.el.classGallery.appendChild(card);
    });
  }

  /** Click/hotkey path for an existing class: one shared request shape. */
  async submitExisting(classId: number): Promise<void> {
    await this.submit({ classId });
  }

  async submitNew(name: string): Promise<void> {
    await this.submit({ newClassName: name });
  }

  private async submit(choice: { classId: number } | { newClassName: string }):
      Promise<void> {
    if (this.current === null || this.busy) {
      return;
    }
    this.busy = true;
    try {
      await this.client.submitLabel(this.current.query_id, choice);
      await this.refreshProgress();
      await this.advance();
    } catch (err) {
      if (err instanceof RequestFailed && err.status === 409) {
        await this.advance();   // already labeled elsewhere: move along
      } else {
        this.showError(err);
      }
    } finally {
      this.busy = false;
    }
  }

  async refreshProgress(): Promise<void> {
    try {
      const p = await this.client.progress();
      const pct = p.total > 0 ? Math.round((100 * p.labeled) / p.total) : 0;
      this.el.progressBar.style.width = `${pct}%`;
      this.el.progressText.textContent =
        `${p.labeled} / ${p.total} labeled (budget ${p.budget})`;
    } catch {
      // progress display is cosmetic; labeling still works without it
    }
  }

  async showCompletion(): Promise<void> {
    this.el.labelingPane.hidden = true;
    this.el.completion.hidden = false;
    try {
      const p = await this.client.progress();
      this.el.completion.querySelector(".completion-stats")!.textContent =
        `${p.labeled} of ${p.total} images labeled.`;
    } catch {
      this.el.completion.querySelector(".completion-stats")!.textContent = "";
    }
  }

  showError(err: unknown): void {
    this.el.errorBanner.hidden = false;
    const message = err instanceof Error ? err.message : String(err);
    this.el.errorBanner.querySelector(".error-text")!.textContent = message;
  }

  hideError(): void {
    this.el.errorBanner.hidden = true;
  }
}

export function bindApp(client: ApiClient, root: Document): LabelingApp {
  const must = <T extends Element>(selector: string): T => {
    const node = root.querySelector<T>(selector);
    if (!node) {
      throw new Error(`missing element ${selector}`);
    }
    return node;
  };
  const app = new LabelingApp(client, {
    queryImage: must<HTMLImageElement>("#query-image"),
    classGallery: must<HTMLElement>("#class-gallery"),
    newClassForm: must<HTMLFormElement>("#new-class-form"),
    newClassInput: must<HTMLInputElement>("#new-class-name"),
    progressBar: must<HTMLElement>("#progress-bar"),
    progressText: must<HTMLElement>("#progress-text"),
    completion: must<HTMLElement>("#completion"),
    labelingPane: must<HTMLElement>("#labeling"),
    errorBanner: must<HTMLElement>("#error-banner"),
  });
  const retry = must<HTMLButtonElement>("#retry-button");
  retry.addEventListener("click", () => void app.advance());
  return app;
}
