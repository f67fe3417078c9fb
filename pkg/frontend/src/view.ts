/**
 * Single-case view: image, option list, confidence 1-5, and (round 2 only)
 * the model's ranked suggestions. Submit stays disabled until both a label
 * and a confidence level are chosen.
 *
 * The document is injected so the same code runs in a browser and under
 * the test harness's DOM stub.
 */

import type { CasePayload, SessionProgress } from "./api.js";

export const CONFIDENCE_LEVELS = [1, 2, 3, 4, 5] as const;

export interface Submission {
  label: string;
  confidence: number;
}

export class CaseView {
  readonly root: HTMLElement;
  private doc: Document;

  /** Live references for scripted runs and assertions. */
  optionInputs = new Map<string, HTMLInputElement>();
  confidenceButtons = new Map<number, HTMLButtonElement>();
  suggestionItems: HTMLElement[] = [];
  submitButton: HTMLButtonElement | null = null;
  statusLine: HTMLElement | null = null;

  private selectedLabel: string | null = null;
  private selectedConfidence: number | null = null;
  private submitHandler: ((s: Submission) => void) | null = null;

  constructor(root: HTMLElement, doc: Document) {
    this.root = root;
    this.doc = doc;
  }

  private el(tag: string, text?: string, className?: string): HTMLElement {
    const node = this.doc.createElement(tag) as HTMLElement;
    if (text !== undefined) node.textContent = text;
    if (className !== undefined) node.className = className;
    return node;
  }

  private clear(): void {
    while (this.root.firstChild) this.root.removeChild(this.root.firstChild);
    this.optionInputs = new Map();
    this.confidenceButtons = new Map();
    this.suggestionItems = [];
    this.submitButton = null;
    this.statusLine = null;
    this.selectedLabel = null;
    this.selectedConfidence = null;
  }

  private refreshSubmitState(): void {
    if (this.submitButton) {
      this.submitButton.disabled =
        this.selectedLabel === null || this.selectedConfidence === null;
    }
  }

  /** Render one case; `onSubmit` fires only with a complete selection. */
  renderCase(
    payload: CasePayload,
    progress: SessionProgress,
    round: number,
    imageUrl: string,
    onSubmit: (s: Submission) => void,
  ): void {
    this.clear();
    this.submitHandler = onSubmit;

    const header = this.el("div", undefined, "case-header");
    header.appendChild(this.el("h2", `Case ${payload.case_id}`));
    header.appendChild(
      this.el("p", `Round ${round}: ${progress.answered} of ${progress.total} answered`, "progress"),
    );
    this.root.appendChild(header);

    const img = this.doc.createElement("img") as HTMLImageElement;
    img.setAttribute("src", imageUrl);
    img.setAttribute("alt", `fundus rendering for ${payload.case_id}`);
    img.className = "case-image";
    this.root.appendChild(img);

    // round-2 payloads carry the model's five ranked suggestions; render
    // the block only when the server actually sent it
    if (payload.top5 !== undefined) {
      const box = this.el("div", undefined, "suggestions");
      box.appendChild(this.el("h3", "Model suggestions"));
      const list = this.el("ol");
      for (const label of payload.top5) {
        const item = this.el("li", label, "suggestion");
        this.suggestionItems.push(item);
        list.appendChild(item);
      }
      box.appendChild(list);
      this.root.appendChild(box);
    }

    const optionBox = this.el("div", undefined, "options");
    optionBox.appendChild(this.el("h3", "Diagnosis"));
    for (const label of payload.options) {
      const row = this.el("label", undefined, "option-row");
      const input = this.doc.createElement("input") as HTMLInputElement;
      input.setAttribute("type", "radio");
      input.setAttribute("name", "diagnosis");
      input.value = label;
      input.addEventListener("change", () => {
        this.selectedLabel = label;
        this.refreshSubmitState();
      });
      this.optionInputs.set(label, input);
      row.appendChild(input);
      row.appendChild(this.el("span", label));
      optionBox.appendChild(row);
    }
    this.root.appendChild(optionBox);

    const confBox = this.el("div", undefined, "confidence");
    confBox.appendChild(this.el("h3", "Confidence"));
    for (const level of CONFIDENCE_LEVELS) {
      const btn = this.doc.createElement("button") as HTMLButtonElement;
      btn.textContent = String(level);
      btn.className = "confidence-level";
      btn.addEventListener("click", () => {
        this.selectedConfidence = level;
        this.refreshSubmitState();
      });
      this.confidenceButtons.set(level, btn);
      confBox.appendChild(btn);
    }
    this.root.appendChild(confBox);

    const submit = this.doc.createElement("button") as HTMLButtonElement;
    submit.textContent = "Submit";
    submit.className = "submit";
    submit.disabled = true;
    submit.addEventListener("click", () => {
      if (this.selectedLabel !== null && this.selectedConfidence !== null) {
        this.submitHandler?.({
          label: this.selectedLabel,
          confidence: this.selectedConfidence,
        });
      }
    });
    this.submitButton = submit;
    this.root.appendChild(submit);
  }

  /** Network trouble: keep the pending answer, offer a retry. */
  showRetry(message: string, onRetry: () => void): void {
    if (this.statusLine) this.root.removeChild(this.statusLine);
    const line = this.el("div", undefined, "retry");
    line.appendChild(this.el("p", `Submission failed: ${message}. Your answer is kept.`));
    const btn = this.doc.createElement("button") as HTMLButtonElement;
    btn.textContent = "Retry";
    btn.className = "retry-button";
    btn.addEventListener("click", () => {
      if (this.statusLine) {
        this.root.removeChild(this.statusLine);
        this.statusLine = null;
      }
      onRetry();
    });
    line.appendChild(btn);
    this.statusLine = line;
    this.root.appendChild(line);
  }

  showNotice(message: string): void {
    const line = this.el("p", message, "notice");
    this.root.appendChild(line);
  }

  showDone(progress: SessionProgress, round: number): void {
    this.clear();
    this.root.appendChild(this.el("h2", `Round ${round} complete`));
    this.root.appendChild(
      this.el("p", `${progress.answered} of ${progress.total} cases answered. Thank you.`),
    );
  }
}
